//! Holds the `acceptance` test target, which checks the solver against the
//! quantitative acceptance criteria and prints one PASS/FAIL line for each.
//! Run it with `cargo test -p wide-validation --test acceptance`.
