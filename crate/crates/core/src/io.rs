//! Binary checkpoints, JSON with 17 significant digits, and CSV export.
//!
//! Field snapshot: `"WNSF"`, u32 version, u32 dim, u32 n, f64 domain length,
//! then `dim` arrays of `n^dim` f64 values (row-major). Trajectory checkpoint:
//! `"WNST"`, u32 version, u32 dim, u32 n, u32 N, f64 τ, f64 ε, σ, ν, T, then
//! `N + 1` field payloads. Everything is little-endian.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::{EnergyReport, SweepReport};
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::functional::{Trajectory, WideParams};
use crate::grid::{GridSpec, TWO_THIRDS};

pub const FIELD_MAGIC: &[u8; 4] = b"WNSF";
pub const TRAJECTORY_MAGIC: &[u8; 4] = b"WNST";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_payload(buf: &mut Vec<u8>, u: &VelocityField) {
    for c in u.components() {
        for &x in c {
            put_f64(buf, x);
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::Corrupt {
            offset: self.pos as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < len {
            return Err(self.corrupt(format!("truncated while reading {what}")));
        }
        let out = &self.data[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let start = self.pos;
        let got = self.take(4, "magic")?;
        if got != expected {
            self.pos = start;
            return Err(self.corrupt(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let start = self.pos;
        let v = self.u32("version")?;
        if v != FORMAT_VERSION {
            self.pos = start;
            return Err(self.corrupt(format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn grid(&mut self, domain_length: Option<f64>) -> Result<GridSpec> {
        let start = self.pos;
        let dim = self.u32("dimension")? as usize;
        let n = self.u32("resolution")? as usize;
        let domain_length = match domain_length {
            Some(l) => l,
            None => self.f64("domain length")?,
        };
        let grid = GridSpec {
            dim,
            n,
            domain_length,
            dealias: TWO_THIRDS,
        };
        grid.validate().map_err(|e| Error::Corrupt {
            offset: start as u64,
            reason: e.to_string(),
        })?;
        Ok(grid)
    }

    fn payload(&mut self, grid: GridSpec) -> Result<VelocityField> {
        let np = grid.points();
        let mut comps = Vec::with_capacity(grid.dim);
        for _ in 0..grid.dim {
            let bytes = self.take(8 * np, "field payload")?;
            comps.push(
                bytes
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                    .collect(),
            );
        }
        VelocityField::from_components(grid, comps)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(self.corrupt("trailing bytes after payload"));
        }
        Ok(())
    }
}

pub fn field_to_bytes(u: &VelocityField) -> Vec<u8> {
    let g = u.grid();
    let mut buf = Vec::with_capacity(24 + 8 * g.dim * g.points());
    buf.extend_from_slice(FIELD_MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    put_u32(&mut buf, g.dim as u32);
    put_u32(&mut buf, g.n as u32);
    put_f64(&mut buf, g.domain_length);
    put_payload(&mut buf, u);
    buf
}

pub fn field_from_bytes(data: &[u8]) -> Result<VelocityField> {
    let mut r = Reader { data, pos: 0 };
    r.magic(FIELD_MAGIC)?;
    r.version()?;
    let grid = r.grid(None)?;
    let u = r.payload(grid)?;
    r.finish()?;
    Ok(u)
}

/// Trajectory checkpoints store the default `2π` domain and 2/3 dealiasing.
pub fn trajectory_to_bytes(traj: &Trajectory, params: &WideParams) -> Vec<u8> {
    let g = traj.grid();
    let mut buf = Vec::new();
    buf.extend_from_slice(TRAJECTORY_MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    put_u32(&mut buf, g.dim as u32);
    put_u32(&mut buf, g.n as u32);
    put_u32(&mut buf, traj.steps() as u32);
    put_f64(&mut buf, traj.tau());
    for v in [params.epsilon, params.sigma, params.nu, params.horizon] {
        put_f64(&mut buf, v);
    }
    for u in traj.slices() {
        put_payload(&mut buf, u);
    }
    buf
}

pub fn trajectory_from_bytes(data: &[u8]) -> Result<(Trajectory, WideParams)> {
    let mut r = Reader { data, pos: 0 };
    r.magic(TRAJECTORY_MAGIC)?;
    r.version()?;
    let grid = r.grid(Some(2.0 * std::f64::consts::PI))?;
    let steps = r.u32("step count")? as usize;
    let tau = r.f64("time step")?;
    let params_at = r.pos;
    let mut vals = [0.0; 4];
    for (v, name) in vals.iter_mut().zip(["epsilon", "sigma", "nu", "horizon"]) {
        *v = r.f64(name)?;
    }
    let params = WideParams {
        epsilon: vals[0],
        sigma: vals[1],
        nu: vals[2],
        horizon: vals[3],
        convection: true,
    };
    params.validate().map_err(|e| Error::Corrupt {
        offset: params_at as u64,
        reason: e.to_string(),
    })?;
    let mut slices = Vec::with_capacity(steps + 1);
    for _ in 0..=steps {
        slices.push(r.payload(grid)?);
    }
    r.finish()?;
    let traj = Trajectory::new(grid, tau, slices).map_err(|e| Error::Corrupt {
        offset: 20,
        reason: e.to_string(),
    })?;
    Ok((traj, params))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn write_field(path: impl AsRef<Path>, u: &VelocityField) -> Result<()> {
    write_atomic(path.as_ref(), &field_to_bytes(u))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<VelocityField> {
    field_from_bytes(&fs::read(path)?)
}

pub fn write_trajectory(
    path: impl AsRef<Path>,
    traj: &Trajectory,
    params: &WideParams,
) -> Result<()> {
    write_atomic(path.as_ref(), &trajectory_to_bytes(traj, params))
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<(Trajectory, WideParams)> {
    trajectory_from_bytes(&fs::read(path)?)
}

/// Compact JSON writer printing every float with 17 significant digits.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + std::io::Write>(
        &mut self,
        writer: &mut W,
        value: f64,
    ) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + std::io::Write>(
        &mut self,
        writer: &mut W,
        value: f32,
    ) -> std::io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_atomic(path.as_ref(), to_json(value)?.as_bytes())
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn energy_csv(report: &EnergyReport) -> String {
    let mut s = String::from("t,energy,grad_sq,lhs_unif,lhs_ei,rhs,slack_unif,slack_ei\n");
    for n in 0..report.times.len() {
        let row = [
            report.times[n],
            report.energy[n],
            report.dissipation_rate[n],
            report.lhs_unif[n],
            report.lhs_ei[n],
            report.rhs,
            report.slack_unif[n],
            report.slack_ei[n],
        ];
        let cells: Vec<String> = row.iter().map(|&x| num(x)).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut s = String::from(
        "eps,dist_L2H1,dist_CL2,total,inertia,stab,diss,eps_dt2,eps_conv2,strong_res\n",
    );
    for e in &report.entries {
        let row = [
            e.epsilon,
            e.distances.l2_h1,
            e.distances.c_l2,
            e.breakdown.total,
            e.breakdown.inertia,
            e.breakdown.stabilization,
            e.breakdown.dissipation,
            e.apriori.eps_dt2,
            e.apriori.eps_conv2,
            e.el.strong_residual_norm,
        ];
        let cells: Vec<String> = row.iter().map(|&x| num(x)).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

/// One row per grid point: coordinates, then velocity components.
pub fn field_csv(u: &VelocityField) -> String {
    let g = u.grid();
    let axes = ["x", "y", "z"];
    let mut header: Vec<String> = axes[..g.dim].iter().map(|a| a.to_string()).collect();
    header.extend(axes[..g.dim].iter().map(|a| format!("u{a}")));
    let mut s = header.join(",");
    s.push('\n');
    for idx in 0..g.points() {
        let x = g.coordinates(idx);
        let mut cells: Vec<String> = x[..g.dim].iter().map(|&v| num(v)).collect();
        cells.extend(u.components().iter().map(|c| num(c[idx])));
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip_is_bit_exact() {
        let grid = GridSpec::new(2, 8).unwrap();
        let u = VelocityField::random(grid, 3.0, 1.0, 5);
        let back = field_from_bytes(&field_to_bytes(&u)).unwrap();
        for (a, b) in u
            .components()
            .iter()
            .flatten()
            .zip(back.components().iter().flatten())
        {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn corrupt_inputs_name_the_offset() {
        let grid = GridSpec::new(2, 8).unwrap();
        let mut bytes = field_to_bytes(&VelocityField::zeros(grid));
        bytes[4] = 9;
        match field_from_bytes(&bytes) {
            Err(Error::Corrupt { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
        bytes[0] = b'X';
        assert!(matches!(
            field_from_bytes(&bytes),
            Err(Error::Corrupt { offset: 0, .. })
        ));
        let good = field_to_bytes(&VelocityField::zeros(grid));
        match field_from_bytes(&good[..good.len() - 3]) {
            Err(Error::Corrupt { offset, reason }) => {
                assert!(offset >= 24 && reason.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trajectory_round_trip() {
        let grid = GridSpec::new(2, 8).unwrap();
        let p = WideParams::new(0.1, 0.25, 0.1, 0.3).unwrap();
        let slices = (0..4)
            .map(|k| VelocityField::random(grid, 3.0, 1.0, k))
            .collect();
        let t = Trajectory::new(grid, 0.1, slices).unwrap();
        let (back, q) = trajectory_from_bytes(&trajectory_to_bytes(&t, &p)).unwrap();
        assert_eq!(back, t);
        assert_eq!(q, p);
        let mut bytes = trajectory_to_bytes(&t, &p);
        bytes.push(0);
        assert!(matches!(
            trajectory_from_bytes(&bytes),
            Err(Error::Corrupt { .. })
        ));
    }

    #[test]
    fn json_keeps_seventeen_digits() {
        let x = 0.1f64 + 0.2;
        let s = to_json(&serde_json::json!({ "x": x })).unwrap();
        assert_eq!(s, "{\"x\":3.0000000000000004e-1}\n");
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"].as_f64().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn field_csv_shape() {
        let grid = GridSpec::new(2, 8).unwrap();
        let csv = field_csv(&VelocityField::zeros(grid));
        assert_eq!(csv.lines().count(), 65);
        assert!(csv.starts_with("x,y,ux,uy\n"));
    }
}
