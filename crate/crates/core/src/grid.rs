use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid on the torus `[0, L)^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    /// Points per axis.
    pub n: usize,
    pub domain_length: f64,
    /// Fraction of the resolved wavenumber range kept by the quadratic-term truncation.
    pub dealias: f64,
}

pub const TWO_THIRDS: f64 = 2.0 / 3.0;

impl GridSpec {
    /// `[0, 2π)^dim` with the 2/3 rule.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        let grid = GridSpec {
            dim,
            n,
            domain_length: 2.0 * std::f64::consts::PI,
            dealias: TWO_THIRDS,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_dealias(mut self, dealias: f64) -> Result<Self> {
        self.dealias = dealias;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 2 or 3, got {}",
                self.dim
            )));
        }
        if self.n < 8 || !self.n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 8, got {}",
                self.n
            )));
        }
        if !(self.dealias > 0.0 && self.dealias <= 1.0) {
            return Err(Error::InvalidGrid(format!(
                "dealias fraction must lie in (0, 1], got {}",
                self.dealias
            )));
        }
        if !(self.domain_length.is_finite() && self.domain_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "domain length must be positive, got {}",
                self.domain_length
            )));
        }
        Ok(())
    }

    /// Total number of grid points, `n^dim`.
    pub fn points(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.domain_length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.domain_length.powi(self.dim as i32)
    }

    /// Multi-index of a flat (row-major, last axis fastest) index.
    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn coordinates(&self, idx: usize) -> [f64; 3] {
        let h = self.spacing();
        let m = self.multi_index(idx);
        [m[0] as f64 * h, m[1] as f64 * h, m[2] as f64 * h]
    }

    pub fn same_as(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    pub(crate) fn cache_key(&self) -> (usize, usize, u64, u64) {
        (
            self.dim,
            self.n,
            self.domain_length.to_bits(),
            self.dealias.to_bits(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_resolution() {
        assert!(GridSpec::new(2, 6).is_err());
        assert!(GridSpec::new(2, 15).is_err());
        assert!(GridSpec::new(4, 16).is_err());
        assert!(GridSpec::new(2, 16).unwrap().with_dealias(0.0).is_err());
        assert!(GridSpec::new(2, 16).unwrap().with_dealias(1.5).is_err());
    }

    #[test]
    fn multi_index_round_trip() {
        let g = GridSpec::new(3, 8).unwrap();
        let m = g.multi_index(3 * 64 + 5 * 8 + 7);
        assert_eq!(m, [3, 5, 7]);
        assert_eq!(g.points(), 512);
    }
}
