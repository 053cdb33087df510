//! Closed-form voltage-only loss estimators.
//!
//! The single-segment estimate is `1 - v_end / v_start`. When loads are tapped
//! between the two measurement points, the estimate is scaled by a correction
//! factor derived from a uniformly leaking line model, either in terms of the
//! leaked current fraction (`c`) or of measured power and voltage ratios (`ĉ`).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phasor::{Phase, Phasor};

/// `ĉ` above 1 by more than this is reported as out of range; smaller excursions are rounding.
pub const CORRECTION_RANGE_EPS: f64 = 1e-12;

/// Voltage magnitudes at the two ends of a line, in one consistent unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentVoltages {
    v_start: f64,
    v_end: f64,
}

impl SegmentVoltages {
    pub fn new(v_start: f64, v_end: f64) -> Result<Self> {
        if !(v_start.is_finite() && v_start > 0.0) {
            return Err(Error::domain(format!(
                "start voltage must be positive, got {v_start}"
            )));
        }
        if !(v_end.is_finite() && v_end >= 0.0) {
            return Err(Error::domain(format!(
                "end voltage must be nonnegative, got {v_end}"
            )));
        }
        Ok(SegmentVoltages { v_start, v_end })
    }

    pub fn v_start(&self) -> f64 {
        self.v_start
    }

    pub fn v_end(&self) -> f64 {
        self.v_end
    }

    /// `v_end / v_start`.
    pub fn ratio(&self) -> f64 {
        self.v_end / self.v_start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RatioSource {
    Measured,
    EngineeringEstimate,
}

/// Power and voltage out/in ratios across a line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionParams {
    /// `p_out / p_in`, real power.
    pub rho_s: f64,
    /// `v_out / v_in`, voltage magnitude.
    pub rho_v: f64,
    pub source: RatioSource,
}

impl CorrectionParams {
    pub fn new(rho_s: f64, rho_v: f64, source: RatioSource) -> Self {
        CorrectionParams {
            rho_s,
            rho_v,
            source,
        }
    }

    /// Ratios with no extraction along the line, giving `ĉ = 1`.
    pub fn identity() -> Self {
        CorrectionParams::new(1.0, 1.0, RatioSource::EngineeringEstimate)
    }

    /// `0 <= rho_s <= 1` and `0 < rho_v <= 1`.
    pub fn in_valid_range(&self) -> bool {
        (0.0..=1.0).contains(&self.rho_s) && self.rho_v > 0.0 && self.rho_v <= 1.0
    }
}

/// Fraction of the input current that leaks out along a line.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LeakageFraction(f64);

impl LeakageFraction {
    pub fn new(rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::domain(format!(
                "leakage fraction must lie in [0, 1], got {rho}"
            )));
        }
        Ok(LeakageFraction(rho))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    TrueSimulated,
    VossSingle,
    VossCorrected,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::TrueSimulated => "true",
            Method::VossSingle => "voss-single",
            Method::VossCorrected => "voss-corrected",
        })
    }
}

/// Data-quality and applicability markers attached to estimates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Flags(u8);

impl Flags {
    pub const NEGATIVE_DROP: Flags = Flags(1);
    pub const NEAR_ZERO_POWER: Flags = Flags(1 << 1);
    pub const CORRECTION_OUT_OF_RANGE: Flags = Flags(1 << 2);
    pub const POWER_STATE_SUSPECT: Flags = Flags(1 << 3);
    pub const GAP: Flags = Flags(1 << 4);

    const NAMES: [(Flags, &'static str); 5] = [
        (Flags::NEGATIVE_DROP, "NegativeDrop"),
        (Flags::NEAR_ZERO_POWER, "NearZeroPower"),
        (Flags::CORRECTION_OUT_OF_RANGE, "CorrectionOutOfRange"),
        (Flags::POWER_STATE_SUSPECT, "PowerStateSuspect"),
        (Flags::GAP, "Gap"),
    ];

    pub fn empty() -> Self {
        Flags(0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, other: Flags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: Flags) {
        self.0 |= other.0;
    }

    pub fn set(&mut self, other: Flags, on: bool) {
        if on {
            self.insert(other);
        }
    }
}

impl std::ops::BitOr for Flags {
    type Output = Flags;

    fn bitor(self, rhs: Flags) -> Flags {
        Flags(self.0 | rhs.0)
    }
}

impl fmt::Display for Flags {
    /// `|`-separated flag names; empty when no flag is set.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (flag, name) in Flags::NAMES {
            if self.contains(flag) {
                if !first {
                    f.write_str("|")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        Ok(())
    }
}

/// A correction factor together with the ratios it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correction {
    pub params: CorrectionParams,
    pub c_hat: f64,
}

impl Correction {
    pub fn out_of_range(&self) -> bool {
        self.c_hat > 1.0 + CORRECTION_RANGE_EPS || !self.params.in_valid_range()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEstimate {
    pub line_id: String,
    pub phase: Option<Phase>,
    pub method: Method,
    pub loss_fraction: f64,
    pub correction: Option<Correction>,
    pub flags: Flags,
}

impl LossEstimate {
    pub fn for_line(mut self, line_id: impl Into<String>, phase: Phase) -> Self {
        self.line_id = line_id.into();
        self.phase = Some(phase);
        self
    }
}

/// Single-segment estimate `(v_s² - v_s·v_e) / v_s²`, evaluated as `1 - v_e/v_s`.
///
/// Negative when the voltage rises along the line; callers flag that.
pub fn voss_single(seg: &SegmentVoltages) -> f64 {
    1.0 - seg.ratio()
}

/// Phase-aware loss fraction `|1 - v_end / v_start|` of a segment carrying one current.
pub fn loss_fraction_exact(v_start: Phasor, v_end: Phasor) -> Result<f64> {
    if v_start.norm() == 0.0 || !v_start.is_finite() {
        return Err(Error::domain("start voltage phasor has zero magnitude"));
    }
    Ok((Phasor::new(1.0, 0.0) - v_end / v_start).norm())
}

/// Worst-case gap between [`loss_fraction_exact`] and `|voss_single|` for an
/// angle difference `delta_theta` (radians) and magnitude ratio `v_end / v_start`.
pub fn small_angle_bound(ratio: f64, delta_theta: f64) -> f64 {
    2.0 * ratio * (delta_theta / 2.0).sin().abs()
}

/// `c = 1 - ρ(3 - 2ρ)/(6 - 3ρ)`.
pub fn correction_factor(rho: LeakageFraction) -> f64 {
    let r = rho.value();
    1.0 - r * (3.0 - 2.0 * r) / (6.0 - 3.0 * r)
}

/// `ĉ = 1 - ((ρ_v - ρ_s)/(ρ_v + ρ_s)) · ((ρ_v + 2ρ_s)/(3ρ_v))`.
pub fn correction_factor_hat(params: &CorrectionParams) -> Result<Correction> {
    let CorrectionParams { rho_s, rho_v, .. } = *params;
    if !(rho_v.is_finite() && rho_v > 0.0) {
        return Err(Error::domain(format!(
            "rho_v must be positive, got {rho_v}"
        )));
    }
    if !rho_s.is_finite() || rho_v + rho_s == 0.0 {
        return Err(Error::domain(format!(
            "rho_s = {rho_s} gives an undefined factor"
        )));
    }
    let c_hat = 1.0 - ((rho_v - rho_s) / (rho_v + rho_s)) * ((rho_v + 2.0 * rho_s) / (3.0 * rho_v));
    Ok(Correction {
        params: *params,
        c_hat,
    })
}

/// `ρ ≈ 1 - ρ_s/ρ_v`, unclamped.
pub fn rho_from_ratios(params: &CorrectionParams) -> Result<f64> {
    if !(params.rho_v.is_finite() && params.rho_v > 0.0) {
        return Err(Error::domain(format!(
            "rho_v must be positive, got {}",
            params.rho_v
        )));
    }
    Ok(1.0 - params.rho_s / params.rho_v)
}

pub fn single_estimate(seg: &SegmentVoltages) -> LossEstimate {
    let loss = voss_single(seg);
    let mut flags = Flags::empty();
    flags.set(Flags::NEGATIVE_DROP, loss < 0.0);
    LossEstimate {
        line_id: String::new(),
        phase: None,
        method: Method::VossSingle,
        loss_fraction: loss,
        correction: None,
        flags,
    }
}

/// `ĉ · voss_single(seg)` with the correction metadata attached.
pub fn voss_corrected(seg: &SegmentVoltages, params: &CorrectionParams) -> Result<LossEstimate> {
    let correction = correction_factor_hat(params)?;
    let single = voss_single(seg);
    let mut flags = Flags::empty();
    flags.set(Flags::NEGATIVE_DROP, single < 0.0);
    flags.set(Flags::CORRECTION_OUT_OF_RANGE, correction.out_of_range());
    Ok(LossEstimate {
        line_id: String::new(),
        phase: None,
        method: Method::VossCorrected,
        loss_fraction: correction.c_hat * single,
        correction: Some(correction),
        flags,
    })
}

/// Absolute power lost on a line given its metered input power.
pub fn absolute_loss(loss_fraction: f64, input_power: f64) -> f64 {
    loss_fraction * input_power
}
