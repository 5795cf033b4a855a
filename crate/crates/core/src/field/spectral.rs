//! Cached FFT plans and Fourier-mode tables for a [`GridSpec`].
//!
//! Spectra use the unnormalized forward transform `f̂(k) = Σ_x f(x) e^{-ik·x}`;
//! the inverse divides by `n^dim`. The Nyquist plane of every axis is treated
//! as unresolved and is zeroed by every derivative, projection and truncation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::GridSpec;

pub type Spectrum = Vec<Complex64>;

pub(crate) struct Modes {
    /// Physical wavevector of each flat index.
    pub k: Vec<[f64; 3]>,
    pub k2: Vec<f64>,
    /// True on any Nyquist plane.
    pub nyquist: Vec<bool>,
    /// Modes kept by the dealiasing truncation (never Nyquist).
    pub retained: Vec<bool>,
}

pub(crate) struct Plan {
    pub grid: GridSpec,
    pub modes: Modes,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

type Key = (usize, usize, u64, u64);

fn cache() -> &'static Mutex<HashMap<Key, Arc<Plan>>> {
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<Plan>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub(crate) fn plan(grid: &GridSpec) -> Arc<Plan> {
    let key = grid.cache_key();
    let mut map = cache().lock().expect("fft plan cache poisoned");
    map.entry(key)
        .or_insert_with(|| Arc::new(Plan::build(*grid)))
        .clone()
}

impl Plan {
    fn build(grid: GridSpec) -> Plan {
        let n = grid.n;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scale = 2.0 * std::f64::consts::PI / grid.domain_length;
        let half = (n / 2) as i64;
        let cutoff = grid.dealias * n as f64 / 2.0;
        let total = grid.points();
        let mut k = Vec::with_capacity(total);
        let mut k2 = Vec::with_capacity(total);
        let mut nyquist = Vec::with_capacity(total);
        let mut retained = Vec::with_capacity(total);
        for idx in 0..total {
            let m = grid.multi_index(idx);
            let mut kv = [0.0; 3];
            let mut nyq = false;
            let mut keep = true;
            for axis in 0..grid.dim {
                let i = m[axis] as i64;
                let ki = if i < half { i } else { i - n as i64 };
                if i == half {
                    nyq = true;
                }
                if (ki.abs() as f64) > cutoff + 1e-12 {
                    keep = false;
                }
                kv[axis] = ki as f64 * scale;
            }
            k2.push(kv[0] * kv[0] + kv[1] * kv[1] + kv[2] * kv[2]);
            k.push(kv);
            nyquist.push(nyq);
            retained.push(keep && !nyq);
        }
        Plan {
            grid,
            modes: Modes {
                k,
                k2,
                nyquist,
                retained,
            },
            forward,
            inverse,
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.grid.n;
        let dim = self.grid.dim;
        let total = buf.len();
        let fft = if inverse {
            &self.inverse
        } else {
            &self.forward
        };
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut lines = vec![Complex64::new(0.0, 0.0); total];
        for axis in 0..dim {
            let stride = n.pow((dim - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(buf, &mut scratch);
                continue;
            }
            let block = n * stride;
            let mut line = 0;
            for start in (0..total).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for j in 0..n {
                        lines[line * n + j] = buf[base + j * stride];
                    }
                    line += 1;
                }
            }
            fft.process_with_scratch(&mut lines, &mut scratch);
            let mut line = 0;
            for start in (0..total).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for j in 0..n {
                        buf[base + j * stride] = lines[line * n + j];
                    }
                    line += 1;
                }
            }
        }
    }

    pub fn forward(&self, data: &[f64]) -> Spectrum {
        let mut buf: Spectrum = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut buf, false);
        buf
    }

    /// Inverse transform keeping the real part (inputs are Hermitian up to rounding).
    pub fn inverse_real(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut buf = spec.to_vec();
        self.transform(&mut buf, true);
        let inv = 1.0 / buf.len() as f64;
        buf.iter().map(|c| c.re * inv).collect()
    }

    /// `‖f‖²_{L²} = norm_factor · Σ_k |f̂(k)|²`.
    pub fn norm_factor(&self) -> f64 {
        self.grid.cell_volume() / self.grid.points() as f64
    }

    pub fn derivative(&self, spec: &[Complex64], axis: usize) -> Spectrum {
        spec.iter()
            .enumerate()
            .map(|(idx, &c)| {
                if self.modes.nyquist[idx] {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, self.modes.k[idx][axis]) * c
                }
            })
            .collect()
    }

    pub fn truncate(&self, spec: &mut [Complex64]) {
        for (c, &keep) in spec.iter_mut().zip(&self.modes.retained) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Leray projection in place, also removing the mean and Nyquist modes.
    pub fn project(&self, comps: &mut [Spectrum]) {
        let dim = self.grid.dim;
        let total = self.grid.points();
        for idx in 0..total {
            let k2 = self.modes.k2[idx];
            if self.modes.nyquist[idx] || k2 == 0.0 {
                for c in comps.iter_mut() {
                    c[idx] = Complex64::new(0.0, 0.0);
                }
                continue;
            }
            let k = &self.modes.k[idx];
            let mut kdotu = Complex64::new(0.0, 0.0);
            for a in 0..dim {
                kdotu += comps[a][idx] * k[a];
            }
            let factor = kdotu / k2;
            for a in 0..dim {
                comps[a][idx] -= factor * k[a];
            }
        }
    }

    pub fn sum_sq(&self, comps: &[Spectrum]) -> f64 {
        comps
            .iter()
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// `Σ_k |k|² |f̂|²`, i.e. `‖∇f‖² / norm_factor`.
    pub fn sum_sq_grad(&self, comps: &[Spectrum]) -> f64 {
        comps
            .iter()
            .map(|c| {
                c.iter()
                    .zip(&self.modes.k2)
                    .enumerate()
                    .filter(|(idx, _)| !self.modes.nyquist[*idx])
                    .map(|(_, (z, &k2))| k2 * z.norm_sqr())
                    .sum::<f64>()
            })
            .sum()
    }
}
