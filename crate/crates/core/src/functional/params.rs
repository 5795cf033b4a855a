use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the weighted functional. Density is normalised to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WideParams {
    /// Weight scale `ε` (time units).
    pub epsilon: f64,
    /// Stabilisation coefficient `σ`.
    pub sigma: f64,
    /// Kinematic viscosity `ν`.
    pub nu: f64,
    /// Truncation horizon `T`.
    pub horizon: f64,
    /// When false the convection term is replaced by zero (Stokes problem).
    #[serde(default = "default_true")]
    pub convection: bool,
}

fn default_true() -> bool {
    true
}

impl WideParams {
    pub fn new(epsilon: f64, sigma: f64, nu: f64, horizon: f64) -> Result<Self> {
        let p = WideParams {
            epsilon,
            sigma,
            nu,
            horizon,
            convection: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn without_convection(mut self) -> Self {
        self.convection = false;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("epsilon", self.epsilon)?;
        positive("nu", self.nu)?;
        positive("horizon", self.horizon)?;
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Smallest admissible `ε` for this horizon: below `T/25` the last weights
    /// drop under ~1.4e-11 and late slices are numerically unconstrained.
    pub fn epsilon_floor(&self) -> f64 {
        self.horizon / 25.0
    }

    pub fn check_epsilon_floor(&self) -> Result<()> {
        // relative slack so that ε = T/25 itself is accepted despite rounding
        if self.epsilon < self.epsilon_floor() * (1.0 - 1e-12) {
            return Err(Error::InvalidParams(format!(
                "epsilon = {} is below the floor T/25 = {} (epsilon must be >= horizon/25)",
                self.epsilon,
                self.epsilon_floor()
            )));
        }
        Ok(())
    }

    /// The large-time energy bound needs `2σ - 1/4 > 0`.
    pub fn energy_certificate_valid(&self) -> bool {
        self.sigma > 0.125
    }
}
