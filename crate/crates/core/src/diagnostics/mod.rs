//! Checks of the energy and duality estimates on computed trajectories, and
//! the ε-sweep convergence experiment.

mod estimates;
mod sweep;

pub use estimates::{
    apriori_bounds, energy_report, relative_distances, sigma_certificate, sobolev_constant,
    AprioriBounds, Distances, EnergyReport, SigmaCertificate,
};
pub use sweep::{epsilon_sweep, SigmaPairResult, SweepConfig, SweepEntry, SweepReport};
