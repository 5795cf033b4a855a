//! Run configuration: a TOML file of flat tables, or the equivalent JSON.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use wide_core::diagnostics::SweepConfig;
use wide_core::euler_lagrange::ElOptions;
use wide_core::functional::WideParams;
use wide_core::io;
use wide_core::optimizer::MinimizeOptions;
use wide_core::reference::taylor_green;
use wide_core::{GridSpec, SobolevIndex, VelocityField};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    pub params: ParamsConfig,
    #[serde(default)]
    pub datum: DatumConfig,
    #[serde(default)]
    pub optimizer: MinimizeOptions,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub sweep: Option<SweepTable>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
    pub dealias: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dim: 2,
            n: 32,
            dealias: 2.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub epsilon: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub nu: f64,
    pub horizon: f64,
    pub tau: f64,
    #[serde(default = "yes")]
    pub convection: bool,
}

fn default_sigma() -> f64 {
    0.25
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatumKind {
    TaylorGreen,
    RandomModes,
    File,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatumConfig {
    pub kind: DatumKind,
    pub amplitude: f64,
    /// Seed for `random_modes`; the run seed when absent.
    pub seed: Option<u64>,
    pub k_cut: f64,
    pub path: Option<PathBuf>,
    /// Constant of the initial-datum bound `‖∇u_0‖² + ε‖u_0·∇u_0‖² ≤ C_0/ε`.
    pub c0: f64,
}

impl Default for DatumConfig {
    fn default() -> Self {
        DatumConfig {
            kind: DatumKind::TaylorGreen,
            amplitude: 1.0,
            seed: None,
            k_cut: 4.0,
            path: None,
            c0: 1e3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Sobolev index of the dual norm used for residuals.
    pub s: f64,
    pub buffer: f64,
    pub test_functions: usize,
    pub tol_energy: f64,
    /// Fraction of the horizon used for energy probes and distances.
    pub obs_fraction: f64,
    /// Pass threshold for the strong and weak residuals in `check`.
    pub residual_tol: f64,
    pub kernel_tol: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        let el = ElOptions::default();
        DiagnosticsConfig {
            s: el.s.0,
            buffer: el.buffer,
            test_functions: el.test_functions,
            tol_energy: 0.05,
            obs_fraction: 0.8,
            residual_tol: 1e-3,
            kernel_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub substeps: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { substeps: 1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepTable {
    pub eps_list: Vec<f64>,
    #[serde(default = "default_slack")]
    pub trend_slack: f64,
    #[serde(default)]
    pub sigma_pair: Option<[f64; 2]>,
    #[serde(default)]
    pub sigma_pair_at_largest: bool,
    #[serde(default = "default_substeps")]
    pub reference_substeps: usize,
    #[serde(default = "one")]
    pub workers: usize,
}

fn default_slack() -> f64 {
    0.1
}

fn default_substeps() -> usize {
    10
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("wide-out"),
        }
    }
}

/// Reads TOML, or JSON when the file name ends in `.json`.
pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)
            .with_context(|| format!("invalid JSON config {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?
    };
    Ok(cfg)
}

impl RunConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(self.grid.dim, self.grid.n)?.with_dealias(self.grid.dealias)?)
    }

    pub fn params(&self) -> Result<WideParams> {
        let p = &self.params;
        let mut out = WideParams::new(p.epsilon, p.sigma, p.nu, p.horizon)?;
        out.convection = p.convection;
        Ok(out)
    }

    pub fn steps(&self) -> Result<usize> {
        let (t, tau) = (self.params.horizon, self.params.tau);
        if !(tau.is_finite() && tau > 0.0) {
            bail!("time step tau must be positive, got {tau}");
        }
        let ratio = t / tau;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            bail!("time step tau = {tau} must divide the horizon T = {t}");
        }
        Ok(steps as usize)
    }

    pub fn el_options(&self) -> ElOptions {
        ElOptions {
            s: SobolevIndex(self.diagnostics.s),
            buffer: self.diagnostics.buffer,
            test_functions: self.diagnostics.test_functions,
            seed: self.seed,
        }
    }

    /// Checks every invariant; returns warnings for admissible but dubious settings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.grid()?;
        let params = self.params()?;
        params.check_epsilon_floor()?;
        self.steps()?;
        self.optimizer.validate()?;
        let d = &self.diagnostics;
        if !(0.0..1.0).contains(&d.buffer) {
            bail!("diagnostics.buffer must lie in [0, 1), got {}", d.buffer);
        }
        if !(d.obs_fraction > 0.0 && d.obs_fraction <= 1.0) {
            bail!(
                "diagnostics.obs_fraction must lie in (0, 1], got {}",
                d.obs_fraction
            );
        }
        for (name, v) in [
            ("tol_energy", d.tol_energy),
            ("residual_tol", d.residual_tol),
            ("kernel_tol", d.kernel_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                bail!("diagnostics.{name} must be positive, got {v}");
            }
        }
        if self.reference.substeps == 0 {
            bail!("reference.substeps must be at least 1");
        }
        if !(self.datum.c0.is_finite() && self.datum.c0 > 0.0) {
            bail!("datum.c0 must be positive, got {}", self.datum.c0);
        }
        if let Some(sw) = &self.sweep {
            if sw.eps_list.is_empty() {
                bail!("sweep.eps_list must not be empty");
            }
            for &eps in &sw.eps_list {
                params.with_epsilon(eps).check_epsilon_floor()?;
            }
            if sw.workers == 0 {
                bail!("sweep.workers must be at least 1");
            }
        }
        let mut warnings = Vec::new();
        if !params.energy_certificate_valid() {
            warnings.push(format!(
                "sigma = {} <= 1/8: energy certificate invalid",
                params.sigma
            ));
        }
        Ok(warnings)
    }

    /// The raw initial datum before projection and truncation.
    pub fn raw_datum(&self) -> Result<VelocityField> {
        let grid = self.grid()?;
        let d = &self.datum;
        let u = match d.kind {
            DatumKind::TaylorGreen => taylor_green(0.0, grid, self.params.nu)?.scaled(d.amplitude),
            DatumKind::RandomModes => {
                VelocityField::random(grid, d.k_cut, d.amplitude, d.seed.unwrap_or(self.seed))
            }
            DatumKind::File => {
                let path = d
                    .path
                    .as_ref()
                    .context("datum.path is required for kind = \"file\"")?;
                let u = io::read_field(path)
                    .with_context(|| format!("cannot load datum {}", path.display()))?;
                if u.grid().dim != grid.dim || u.grid().n != grid.n {
                    bail!(
                        "datum {} has grid {}^{}, config expects {}^{}",
                        path.display(),
                        u.grid().n,
                        u.grid().dim,
                        grid.n,
                        grid.dim
                    );
                }
                VelocityField::from_components(grid, u.into_components())?
            }
        };
        Ok(u)
    }

    pub fn sweep_config(
        &self,
        datum: VelocityField,
        workers: Option<usize>,
    ) -> Result<SweepConfig> {
        let sw = self.sweep.as_ref().context("config has no [sweep] table")?;
        let mut cfg = SweepConfig::new(datum, self.params()?, self.params.tau, sw.eps_list.clone());
        cfg.c0 = self.datum.c0;
        cfg.minimize = self.optimizer;
        cfg.el = self.el_options();
        cfg.tol_energy = self.diagnostics.tol_energy;
        cfg.obs_fraction = self.diagnostics.obs_fraction;
        cfg.trend_slack = sw.trend_slack;
        cfg.sigma_pair = sw.sigma_pair.map(|[a, b]| (a, b));
        cfg.sigma_pair_at_largest = sw.sigma_pair_at_largest;
        cfg.reference_substeps = sw.reference_substeps;
        cfg.workers = workers.unwrap_or(sw.workers);
        Ok(cfg)
    }
}
