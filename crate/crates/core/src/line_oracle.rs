//! Discretized uniform-leakage line used to check the closed-form correction factor.
//!
//! The line is split into `n` equal segments. Leakage is lumped at segment
//! boundaries (half a share at each end of the line) so that each segment
//! carries the exact continuous current at its midpoint. Series loss is then
//! the midpoint-rule sum of `ζ i² Δx`, converging as `O(1/n²)`.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{correction_factor, LeakageFraction};

pub const DEFAULT_ZETA: Complex64 = Complex64::new(0.3, 0.6);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformLineModel {
    pub length: f64,
    /// Series impedance per unit length.
    pub zeta: Complex64,
    /// Current leaked per unit length, real.
    pub iota: f64,
    /// Input current, real; sets the reference angle.
    pub i0: f64,
    pub n_segments: usize,
    /// Voltage phasor at the sending end.
    pub v_start: Complex64,
}

impl UniformLineModel {
    /// Unit-length line fed with unit current at 10∠0°, leaking fraction `rho`.
    pub fn with_rho(rho: f64, n_segments: usize) -> Self {
        let i0 = 1.0;
        UniformLineModel {
            length: 1.0,
            zeta: DEFAULT_ZETA,
            iota: rho * i0,
            i0,
            n_segments,
            v_start: Complex64::new(10.0, 0.0),
        }
    }

    pub fn rho(&self) -> f64 {
        self.iota * self.length / self.i0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::domain(format!(
                "line length must be positive, got {}",
                self.length
            )));
        }
        if self.n_segments == 0 {
            return Err(Error::domain("need at least one segment"));
        }
        if !(self.i0.is_finite() && self.i0 > 0.0) {
            return Err(Error::domain(format!(
                "input current must be positive, got {}",
                self.i0
            )));
        }
        if !(self.iota.is_finite() && self.iota >= 0.0) {
            return Err(Error::domain(format!(
                "leakage must be nonnegative, got {}",
                self.iota
            )));
        }
        if self.iota * self.length > self.i0 * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "total leakage {} exceeds input current {}",
                self.iota * self.length,
                self.i0
            )));
        }
        if !self.zeta.is_finite() || !self.v_start.is_finite() {
            return Err(Error::domain("impedance and start voltage must be finite"));
        }
        Ok(())
    }

    fn dx(&self) -> f64 {
        self.length / self.n_segments as f64
    }

    /// Current carried by segment `k`.
    pub fn segment_current(&self, k: usize) -> f64 {
        self.i0 - self.iota * self.dx() * (k as f64 + 0.5)
    }

    /// Lumped extractions at the `n + 1` segment boundaries.
    pub fn leakage_points(&self) -> Vec<f64> {
        let share = self.iota * self.dx();
        let n = self.n_segments;
        (0..=n)
            .map(|j| if j == 0 || j == n { share / 2.0 } else { share })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Total series loss along the line.
    pub loss_multi: Complex64,
    /// `(v(0) - v(l)) · i(0)*`, the loss a single unloaded segment would report.
    pub loss_single_equiv: Complex64,
    /// `|loss_multi| / |loss_single_equiv|`.
    pub ratio: f64,
    /// Voltage at the `n + 1` segment boundaries.
    pub v_profile: Vec<Complex64>,
    pub output_current: f64,
}

pub fn simulate_uniform_line(model: &UniformLineModel) -> Result<OracleResult> {
    model.validate()?;
    let dx = model.dx();
    let mut v_profile = Vec::with_capacity(model.n_segments + 1);
    let mut v = model.v_start;
    v_profile.push(v);
    // ζ is common to every term, so accumulate the real integrals and scale once.
    let mut sum_i = 0.0;
    let mut sum_i2 = 0.0;
    for k in 0..model.n_segments {
        let i = model.segment_current(k);
        sum_i += i * dx;
        sum_i2 += i * i * dx;
        v -= model.zeta * (i * dx);
        v_profile.push(v);
    }
    let loss_multi = model.zeta * sum_i2;
    let loss_single_equiv = model.zeta * (sum_i * model.i0);
    let ratio = sum_i2 / (sum_i * model.i0);
    let output_current = model.i0 - model.iota * model.length;
    Ok(OracleResult {
        loss_multi,
        loss_single_equiv,
        ratio,
        v_profile,
        output_current,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub rho: f64,
    pub oracle_ratio: f64,
    pub c_formula: f64,
    /// `|oracle_ratio - c_formula|`.
    pub deviation: f64,
}

impl SweepRow {
    pub fn relative_deviation(&self) -> f64 {
        self.deviation / self.c_formula.abs()
    }
}

pub fn sweep_rho(rho_values: &[f64], n_segments: usize) -> Result<Vec<SweepRow>> {
    rho_values
        .par_iter()
        .map(|&rho| {
            let c_formula = correction_factor(LeakageFraction::new(rho)?);
            let oracle = simulate_uniform_line(&UniformLineModel::with_rho(rho, n_segments))?;
            Ok(SweepRow {
                rho,
                oracle_ratio: oracle.ratio,
                c_formula,
                deviation: (oracle.ratio - c_formula).abs(),
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rho", "oracle_ratio", "c_formula", "deviation"])?;
    for r in rows {
        w.write_record([
            r.rho.to_string(),
            r.oracle_ratio.to_string(),
            r.c_formula.to_string(),
            r.deviation.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
