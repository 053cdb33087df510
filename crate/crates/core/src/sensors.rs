//! Voltage-magnitude time series from field sensors, turned into loss curves
//! along a chain of sensors placed down a feeder.
//!
//! Input is a CSV with header `sensor_id,timestamp,voltage_v` and RFC 3339
//! timestamps. The chain is described by a small TOML file:
//!
//! ```toml
//! sensors = ["up", "mid", "down"]   # upstream to downstream
//! nominal_voltage = 230.0
//! rho_s = [0.667, 0.8]              # optional, one per adjacent pair
//! window_minutes = 10               # rolling-median window
//! grid_step_seconds = 120
//! tolerance_seconds = 60
//!
//! [calibration]                     # optional multiplicative factors
//! mid = 1.02
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, TimeDelta, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    voss_corrected, voss_single, CorrectionParams, Flags, RatioSource, SegmentVoltages,
};

/// Samples below this fraction of nominal are treated as an outage.
pub const SUSPECT_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub time: DateTime<Utc>,
    pub voltage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoltageSeries {
    pub sensor_id: String,
    /// Strictly increasing in time.
    pub samples: Vec<Sample>,
    pub nominal_voltage: f64,
    pub calibration: f64,
}

impl VoltageSeries {
    pub fn new(sensor_id: impl Into<String>, samples: Vec<Sample>, nominal_voltage: f64) -> Self {
        VoltageSeries {
            sensor_id: sensor_id.into(),
            samples,
            nominal_voltage,
            calibration: 1.0,
        }
    }

    /// Every voltage and the nominal multiplied by `alpha`.
    #[must_use]
    pub fn scaled(&self, alpha: f64) -> Self {
        VoltageSeries {
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    time: s.time,
                    voltage: s.voltage * alpha,
                })
                .collect(),
            nominal_voltage: self.nominal_voltage * alpha,
            ..self.clone()
        }
    }

    fn is_suspect(&self, v: f64) -> bool {
        v < SUSPECT_FRACTION * self.nominal_voltage
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    /// One series per sensor, ordered by sensor id.
    pub series: Vec<VoltageSeries>,
    /// Rows dropped because their sensor already had a sample at that time.
    pub duplicates: usize,
}

impl Ingested {
    pub fn into_map(self) -> BTreeMap<String, VoltageSeries> {
        self.series
            .into_iter()
            .map(|s| (s.sensor_id.clone(), s))
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    sensor_id: String,
    timestamp: String,
    voltage_v: f64,
}

pub fn ingest_csv(path: impl AsRef<Path>, nominal_voltage: f64) -> Result<Ingested> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, path, nominal_voltage)
}

/// Read rows one at a time; on equal timestamps for a sensor the first row wins.
pub fn ingest_reader<R: Read>(
    reader: R,
    origin: impl AsRef<Path>,
    nominal_voltage: f64,
) -> Result<Ingested> {
    let origin = origin.as_ref();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["sensor_id", "timestamp", "voltage_v"] {
        return Err(parse_err(
            1,
            "expected header `sensor_id,timestamp,voltage_v`".to_string(),
        ));
    }
    let mut by_sensor: HashMap<String, Vec<(Sample, usize)>> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row: Row = record
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        let time = DateTime::parse_from_rfc3339(&row.timestamp)
            .map_err(|e| parse_err(line, format!("bad timestamp `{}`: {e}", row.timestamp)))?
            .with_timezone(&Utc);
        if !(row.voltage_v.is_finite() && row.voltage_v >= 0.0) {
            return Err(parse_err(
                line,
                format!(
                    "voltage must be finite and nonnegative, got {}",
                    row.voltage_v
                ),
            ));
        }
        by_sensor.entry(row.sensor_id).or_default().push((
            Sample {
                time,
                voltage: row.voltage_v,
            },
            line,
        ));
    }
    let mut duplicates = 0;
    let mut series: Vec<VoltageSeries> = by_sensor
        .into_iter()
        .map(|(id, mut rows)| {
            // stable on file order, so the first of equal timestamps survives dedup
            rows.sort_by_key(|(s, line)| (s.time, *line));
            let before = rows.len();
            rows.dedup_by_key(|(s, _)| s.time);
            duplicates += before - rows.len();
            VoltageSeries::new(
                id,
                rows.into_iter().map(|(s, _)| s).collect(),
                nominal_voltage,
            )
        })
        .collect();
    series.sort_by(|a, b| a.sensor_id.cmp(&b.sensor_id));
    Ok(Ingested { series, duplicates })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignOptions {
    pub grid_step: TimeDelta,
    pub tolerance: TimeDelta,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            grid_step: TimeDelta::minutes(2),
            tolerance: TimeDelta::seconds(60),
        }
    }
}

/// One grid point; `None` marks a gap in that series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedPoint {
    pub time: DateTime<Utc>,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

impl AlignedPoint {
    pub fn is_gap(&self) -> bool {
        self.a.is_none() || self.b.is_none()
    }
}

fn nearest_within(samples: &[Sample], t: DateTime<Utc>, tol: TimeDelta) -> Option<f64> {
    let i = samples.partition_point(|s| s.time < t);
    let before = i.checked_sub(1).map(|j| &samples[j]);
    let after = samples.get(i);
    let best = match (before, after) {
        (Some(b), Some(a)) => {
            // ties go to the earlier sample
            if a.time - t < t - b.time {
                a
            } else {
                b
            }
        }
        (Some(b), None) => b,
        (None, Some(a)) => a,
        (None, None) => return None,
    };
    ((best.time - t).abs() <= tol).then_some(best.voltage)
}

/// Pair two series on a common grid of multiples of `grid_step` covering their overlap.
pub fn align(
    a: &VoltageSeries,
    b: &VoltageSeries,
    opts: &AlignOptions,
) -> Result<Vec<AlignedPoint>> {
    if opts.grid_step <= TimeDelta::zero() || opts.tolerance < TimeDelta::zero() {
        return Err(Error::Config(
            "grid step must be positive and tolerance nonnegative".to_string(),
        ));
    }
    let (Some(a0), Some(b0)) = (a.samples.first(), b.samples.first()) else {
        return Err(Error::EmptyOverlap);
    };
    let a1 = a.samples.last().expect("nonempty");
    let b1 = b.samples.last().expect("nonempty");
    let start = a0.time.max(b0.time);
    let end = a1.time.min(b1.time);
    if start > end {
        return Err(Error::EmptyOverlap);
    }
    let step_ms = opts.grid_step.num_milliseconds();
    let start_ms = start.timestamp_millis().div_euclid(step_ms) * step_ms;
    let mut t = DateTime::from_timestamp_millis(start_ms).expect("in range");
    let mut out = Vec::new();
    while t <= end {
        out.push(AlignedPoint {
            time: t,
            a: nearest_within(&a.samples, t, opts.tolerance),
            b: nearest_within(&b.samples, t, opts.tolerance),
        });
        t += opts.grid_step;
    }
    Ok(out)
}

/// Centered rolling median over `2 * half + 1` grid points, skipping `None`.
/// Points that are `None` stay `None`.
pub fn rolling_median(values: &[Option<f64>], half: usize) -> Vec<Option<f64>> {
    let mut buf = Vec::with_capacity(2 * half + 1);
    (0..values.len())
        .map(|i| {
            values[i]?;
            buf.clear();
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            buf.extend(values[lo..hi].iter().flatten());
            buf.sort_by(f64::total_cmp);
            let n = buf.len();
            Some(if n % 2 == 1 {
                buf[n / 2]
            } else {
                (buf[n / 2 - 1] + buf[n / 2]) / 2.0
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    pub window: TimeDelta,
}

impl SmoothingConfig {
    /// Points on each side of the center for a grid of `step`.
    pub fn half_width(&self, step: TimeDelta) -> usize {
        let n = (self.window.num_milliseconds() as f64 / step.num_milliseconds() as f64).round();
        let n = (n as usize).max(1);
        (n - 1) / 2
    }
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            window: TimeDelta::minutes(10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    /// Upstream to downstream.
    pub sensors: Vec<String>,
    #[serde(default = "default_nominal")]
    pub nominal_voltage: f64,
    /// Engineering estimate of `p_out / p_in` for each adjacent pair. Without it
    /// the uncorrected estimate is reported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_s: Option<Vec<f64>>,
    #[serde(default = "default_window")]
    pub window_minutes: f64,
    #[serde(default = "default_step")]
    pub grid_step_seconds: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance_seconds: f64,
    #[serde(default)]
    pub calibration: BTreeMap<String, f64>,
}

fn default_nominal() -> f64 {
    230.0
}
fn default_window() -> f64 {
    10.0
}
fn default_step() -> f64 {
    120.0
}
fn default_tolerance() -> f64 {
    60.0
}

fn seconds(s: f64) -> TimeDelta {
    TimeDelta::milliseconds((s * 1000.0).round() as i64)
}

impl ChainConfig {
    pub fn new(sensors: Vec<String>) -> Self {
        ChainConfig {
            sensors,
            nominal_voltage: default_nominal(),
            rho_s: None,
            window_minutes: default_window(),
            grid_step_seconds: default_step(),
            tolerance_seconds: default_tolerance(),
            calibration: BTreeMap::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ChainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensors.len() < 2 {
            return Err(Error::Config(
                "a chain needs at least two sensors".to_string(),
            ));
        }
        for (i, id) in self.sensors.iter().enumerate() {
            if self.sensors[..i].contains(id) {
                return Err(Error::Config(format!("sensor `{id}` listed twice")));
            }
        }
        if let Some(rho) = &self.rho_s {
            if rho.len() != self.sensors.len() - 1 {
                return Err(Error::Config(format!(
                    "rho_s has {} entries for {} sensor pairs",
                    rho.len(),
                    self.sensors.len() - 1
                )));
            }
            if let Some(r) = rho.iter().find(|r| !(0.0..=1.0).contains(*r)) {
                return Err(Error::Config(format!("rho_s {r} outside [0, 1]")));
            }
        }
        for (name, v) in [
            ("nominal_voltage", self.nominal_voltage),
            ("window_minutes", self.window_minutes),
            ("grid_step_seconds", self.grid_step_seconds),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tolerance_seconds.is_finite() && self.tolerance_seconds >= 0.0) {
            return Err(Error::Config(format!(
                "tolerance_seconds must be nonnegative, got {}",
                self.tolerance_seconds
            )));
        }
        if let Some((id, c)) = self
            .calibration
            .iter()
            .find(|(_, c)| !(c.is_finite() && **c > 0.0))
        {
            return Err(Error::Config(format!(
                "calibration for `{id}` must be positive, got {c}"
            )));
        }
        Ok(())
    }

    pub fn align_options(&self) -> AlignOptions {
        AlignOptions {
            grid_step: seconds(self.grid_step_seconds),
            tolerance: seconds(self.tolerance_seconds),
        }
    }

    pub fn smoothing(&self) -> SmoothingConfig {
        SmoothingConfig {
            window: seconds(self.window_minutes * 60.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub time: DateTime<Utc>,
    /// `None` where either sensor has a gap or an outage.
    pub loss_fraction: Option<f64>,
    pub flags: Flags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossCurve {
    pub upstream: String,
    pub downstream: String,
    pub points: Vec<LossPoint>,
    pub smoothing: SmoothingConfig,
}

impl LossCurve {
    pub fn file_name(&self) -> String {
        format!("loss_curve_{}_{}.csv", self.upstream, self.downstream)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["timestamp", "loss_fraction", "flags"])?;
        for p in &self.points {
            w.write_record([
                p.time.to_rfc3339_opts(SecondsFormat::Secs, true),
                p.loss_fraction
                    .map(|v| format!("{v:.10}"))
                    .unwrap_or_default(),
                p.flags.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Calibrated voltages with outage samples removed; returns the suspect mask too.
fn usable(
    series: &VoltageSeries,
    calibration: f64,
    raw: &[Option<f64>],
) -> (Vec<Option<f64>>, Vec<bool>) {
    raw.iter()
        .map(|v| match v {
            Some(v) if series.is_suspect(v * calibration) => (None, true),
            Some(v) => (Some(v * calibration), false),
            None => (None, false),
        })
        .unzip()
}

fn estimate(up: f64, down: f64, rho_s: Option<f64>) -> Result<(f64, Flags)> {
    let seg = SegmentVoltages::new(up, down)?;
    match rho_s {
        None => {
            let v = voss_single(&seg);
            let mut flags = Flags::empty();
            flags.set(Flags::NEGATIVE_DROP, v < 0.0);
            Ok((v, flags))
        }
        Some(rho_s) => {
            let params =
                CorrectionParams::new(rho_s, seg.ratio(), RatioSource::EngineeringEstimate);
            let est = voss_corrected(&seg, &params)?;
            Ok((est.loss_fraction, est.flags))
        }
    }
}

fn pair_curve(
    up: &VoltageSeries,
    down: &VoltageSeries,
    rho_s: Option<f64>,
    cfg: &ChainConfig,
) -> Result<LossCurve> {
    let align_opts = cfg.align_options();
    let smoothing = cfg.smoothing();
    let points = align(up, down, &align_opts)?;
    let cal = |s: &VoltageSeries| {
        cfg.calibration
            .get(&s.sensor_id)
            .copied()
            .unwrap_or(s.calibration)
    };
    let raw_a: Vec<_> = points.iter().map(|p| p.a).collect();
    let raw_b: Vec<_> = points.iter().map(|p| p.b).collect();
    let (ua, sus_a) = usable(up, cal(up), &raw_a);
    let (ub, sus_b) = usable(down, cal(down), &raw_b);
    let half = smoothing.half_width(align_opts.grid_step);
    let sa = rolling_median(&ua, half);
    let sb = rolling_median(&ub, half);
    let mut out = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let mut flags = Flags::empty();
        flags.set(Flags::GAP, p.is_gap());
        flags.set(Flags::POWER_STATE_SUSPECT, sus_a[i] || sus_b[i]);
        let loss_fraction = match (sa[i], sb[i]) {
            (Some(va), Some(vb)) if va > 0.0 => {
                let (loss, f) = estimate(va, vb, rho_s)?;
                flags = flags | f;
                // a negative unsmoothed estimate is reported even if smoothing hides it
                if let (Some(ra), Some(rb)) = (ua[i], ub[i]) {
                    flags.set(
                        Flags::NEGATIVE_DROP,
                        flags.contains(Flags::NEGATIVE_DROP) || rb > ra,
                    );
                }
                Some(loss)
            }
            _ => None,
        };
        out.push(LossPoint {
            time: p.time,
            loss_fraction,
            flags,
        });
    }
    Ok(LossCurve {
        upstream: up.sensor_id.clone(),
        downstream: down.sensor_id.clone(),
        points: out,
        smoothing,
    })
}

/// One curve per adjacent pair of the chain, in chain order.
pub fn loss_curve(
    chain: &ChainConfig,
    series: &BTreeMap<String, VoltageSeries>,
) -> Result<Vec<LossCurve>> {
    chain.validate()?;
    let members = chain
        .sensors
        .iter()
        .map(|id| {
            series
                .get(id)
                .ok_or_else(|| Error::MissingSensor(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    (0..members.len() - 1)
        .into_par_iter()
        .map(|i| {
            let rho_s = chain.rho_s.as_ref().map(|r| r[i]);
            pair_curve(members[i], members[i + 1], rho_s, chain)
        })
        .collect()
}

/// Write every curve into `dir`, returning the paths written.
pub fn write_curves(curves: &[LossCurve], dir: &Path) -> Result<Vec<PathBuf>> {
    curves
        .iter()
        .map(|c| {
            let path = dir.join(c.file_name());
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            c.write_csv(std::io::BufWriter::new(file))?;
            Ok(path)
        })
        .collect()
}
