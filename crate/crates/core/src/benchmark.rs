//! Estimator-versus-simulation comparisons on radial test feeders.
//!
//! The single-segment study applies the voltage-only estimate to every line of
//! a feeder, per phase, and compares it with the loss fraction computed from
//! simulated flows. The multi-segment study does the same over longer paths
//! with loads tapped along them, with and without the correction factor.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{
    small_angle_bound, voss_corrected, voss_single, CorrectionParams, Flags, RatioSource,
    SegmentVoltages,
};
use crate::feeder::{expand_distributed_loads_with, FeederModel, Lumping};
use crate::phasor::{Phase, PhaseSet};
use crate::powerflow::{
    solve, true_loss_fraction, PowerFlowSolution, SolveOptions, DEFAULT_NEAR_ZERO_FRACTION,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkOptions {
    pub solve: SolveOptions,
    /// Lines whose input power is below this fraction of the feeder base power are excluded.
    pub near_zero_fraction: f64,
    /// Defaults to splitting distributed loads between the line ends, so each
    /// line stays a single series element in the single-segment study.
    pub lumping: Lumping,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions {
            solve: SolveOptions::default(),
            near_zero_fraction: DEFAULT_NEAR_ZERO_FRACTION,
            lumping: Lumping::SplitEnds,
        }
    }
}

/// Where the power ratio `ρ_s` of a multi-segment path comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoSSource {
    /// Real-power out/in ratio taken from the simulated flows.
    Simulated,
    /// A fixed engineering estimate.
    Estimate(f64),
}

impl FromStr for RhoSSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "simulated" {
            return Ok(RhoSSource::Simulated);
        }
        let value = s
            .strip_prefix("estimate:")
            .ok_or_else(|| format!("expected `simulated` or `estimate:<value>`, got `{s}`"))?;
        let v: f64 = value
            .parse()
            .map_err(|_| format!("invalid rho_s estimate `{value}`"))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("rho_s estimate {v} outside [0, 1]"));
        }
        Ok(RhoSSource::Estimate(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub feeder: String,
    pub line: String,
    pub phase: Phase,
    pub voss_single: f64,
    /// 1 in the single-segment study.
    pub c_hat: f64,
    pub voss_corrected: f64,
    pub true_loss: f64,
    /// `|voss_corrected - true_loss|`.
    pub abs_error: f64,
    /// Small-angle bound from the simulated endpoint angles.
    pub angle_bound: f64,
    pub excluded: Option<String>,
    pub flags: Flags,
}

impl ComparisonRow {
    pub fn is_excluded(&self) -> bool {
        self.excluded.is_some()
    }
}

struct Endpoints {
    seg: SegmentVoltages,
    bound: f64,
}

fn endpoints(sol: &PowerFlowSolution, from: &str, to: &str, phase: Phase) -> Result<Endpoints> {
    let v0 = sol.voltage(from, phase)?;
    let v1 = sol.voltage(to, phase)?;
    let seg = SegmentVoltages::new(v0.norm(), v1.norm())?;
    let bound = small_angle_bound(seg.ratio(), v0.arg() - v1.arg());
    Ok(Endpoints { seg, bound })
}

fn path_phases(sol: &PowerFlowSolution, path: &[usize]) -> PhaseSet {
    let mut phases = PhaseSet::ABC;
    for &s in path {
        let seg_phases = sol.segments[s].phases;
        phases = PhaseSet::new(
            &phases
                .iter()
                .filter(|p| seg_phases.contains(*p))
                .collect::<Vec<_>>(),
        );
    }
    phases
}

fn solve_expanded(model: &FeederModel, opts: &BenchmarkOptions) -> Result<PowerFlowSolution> {
    solve(
        &expand_distributed_loads_with(model, opts.lumping),
        &opts.solve,
    )
}

/// One row per line and phase of `model`. Transformers and regulators are skipped.
pub fn run_single_segment_study(
    model: &FeederModel,
    opts: &BenchmarkOptions,
) -> Result<Vec<ComparisonRow>> {
    let sol = solve_expanded(model, opts)?;
    single_segment_rows(model, &sol, opts)
}

pub fn single_segment_rows(
    model: &FeederModel,
    sol: &PowerFlowSolution,
    opts: &BenchmarkOptions,
) -> Result<Vec<ComparisonRow>> {
    let threshold = opts.near_zero_fraction * model.base.kva;
    let mut rows = Vec::new();
    for seg in model.segments.iter().filter(|s| s.is_line()) {
        // a line split for a distributed load is still compared end to end
        let path = sol.path(&seg.from, &seg.to)?;
        for phase in seg.phases.iter() {
            let ends = endpoints(sol, &seg.from, &seg.to, phase)?;
            let truth = true_loss_fraction(sol, &path, phase, threshold)?;
            let single = voss_single(&ends.seg);
            let mut flags = truth.flags;
            flags.set(Flags::NEGATIVE_DROP, single < 0.0);
            rows.push(ComparisonRow {
                feeder: model.name.clone(),
                line: seg.id.clone(),
                phase,
                voss_single: single,
                c_hat: 1.0,
                voss_corrected: single,
                true_loss: truth.loss_fraction,
                abs_error: (single - truth.loss_fraction).abs(),
                angle_bound: ends.bound,
                excluded: flags
                    .contains(Flags::NEAR_ZERO_POWER)
                    .then(|| "near-zero input power".to_string()),
                flags,
            });
        }
    }
    Ok(rows)
}

/// Parse `800-814,816-822` into node pairs.
pub fn parse_paths(spec: &str) -> Result<Vec<(String, String)>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|p| {
            let (a, b) = p
                .trim()
                .split_once('-')
                .ok_or_else(|| Error::InvalidPath(format!("expected FROM-TO, got `{p}`")))?;
            Ok((a.to_string(), b.to_string()))
        })
        .collect()
}

/// Corrected and uncorrected estimates over each `(from, to)` path, per common phase.
pub fn run_multi_segment_study(
    model: &FeederModel,
    paths: &[(String, String)],
    rho_s_source: RhoSSource,
    opts: &BenchmarkOptions,
) -> Result<Vec<ComparisonRow>> {
    let sol = solve_expanded(model, opts)?;
    multi_segment_rows(model, &sol, paths, rho_s_source, opts)
}

pub fn multi_segment_rows(
    model: &FeederModel,
    sol: &PowerFlowSolution,
    paths: &[(String, String)],
    rho_s_source: RhoSSource,
    opts: &BenchmarkOptions,
) -> Result<Vec<ComparisonRow>> {
    let threshold = opts.near_zero_fraction * model.base.kva;
    let per_path = paths
        .par_iter()
        .map(|(from, to)| {
            let path = sol.path(from, to)?;
            let head = &sol.segments[path[0]];
            let tail = &sol.segments[*path.last().expect("nonempty path")];
            path_phases(sol, &path)
                .iter()
                .map(|phase| {
                    let k = phase.index();
                    let ends = endpoints(sol, from, to, phase)?;
                    let rho_v = ends.seg.ratio();
                    let params = match rho_s_source {
                        RhoSSource::Simulated => CorrectionParams::new(
                            tail.s_out[k].re / head.s_in[k].re,
                            rho_v,
                            RatioSource::Measured,
                        ),
                        RhoSSource::Estimate(x) => {
                            CorrectionParams::new(x, rho_v, RatioSource::EngineeringEstimate)
                        }
                    };
                    let est = voss_corrected(&ends.seg, &params)?;
                    let truth = true_loss_fraction(sol, &path, phase, threshold)?;
                    let flags = est.flags | truth.flags;
                    Ok(ComparisonRow {
                        feeder: model.name.clone(),
                        line: format!("{from}-{to}"),
                        phase,
                        voss_single: voss_single(&ends.seg),
                        c_hat: est.correction.expect("corrected estimate").c_hat,
                        voss_corrected: est.loss_fraction,
                        true_loss: truth.loss_fraction,
                        abs_error: (est.loss_fraction - truth.loss_fraction).abs(),
                        angle_bound: ends.bound,
                        excluded: flags
                            .contains(Flags::NEAR_ZERO_POWER)
                            .then(|| "near-zero input power".to_string()),
                        flags,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_path.into_iter().flatten().collect())
}

pub const COMPARISON_HEADER: [&str; 12] = [
    "feeder",
    "line_or_path",
    "phase",
    "voss_single",
    "c_hat",
    "voss_corrected",
    "true_loss",
    "abs_error",
    "angle_bound",
    "excluded",
    "reason",
    "flags",
];

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARISON_HEADER)?;
    for r in rows {
        w.write_record([
            r.feeder.clone(),
            r.line.clone(),
            r.phase.to_string(),
            format!("{:.8}", r.voss_single),
            format!("{:.6}", r.c_hat),
            format!("{:.8}", r.voss_corrected),
            format!("{:.8}", r.true_loss),
            format!("{:.8}", r.abs_error),
            format!("{:.8}", r.angle_bound),
            r.is_excluded().to_string(),
            r.excluded.clone().unwrap_or_default(),
            r.flags.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Plot-ready long format: one row per (line, phase, series) for non-excluded rows.
pub fn write_long_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feeder", "line_or_path", "phase", "series", "value"])?;
    for r in rows.iter().filter(|r| !r.is_excluded()) {
        for (series, value) in [
            ("voss_single", r.voss_single),
            ("voss_corrected", r.voss_corrected),
            ("true_loss", r.true_loss),
        ] {
            w.write_record([
                r.feeder.clone(),
                r.line.clone(),
                r.phase.to_string(),
                series.to_string(),
                format!("{value:.8}"),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
