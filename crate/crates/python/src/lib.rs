//! Python bindings. The estimator functions take plain floats and complex
//! numbers; feeders, solutions and loss curves are wrapped as classes.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use voss_core::benchmark::{self, BenchmarkOptions, RhoSSource};
use voss_core::estimator::{self, CorrectionParams, LossEstimate, RatioSource, SegmentVoltages};
use voss_core::feeder::{self, expand_distributed_loads_with, FeederModel, Lumping};
use voss_core::phasor::Phase;
use voss_core::powerflow::{self, PowerFlowSolution, SolveOptions, DEFAULT_NEAR_ZERO_FRACTION};
use voss_core::{line_oracle, sensors, Error};

create_exception!(
    voss,
    ConvergenceError,
    PyRuntimeError,
    "The power flow did not converge or the voltage collapsed."
);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::NonConvergence { .. } | Error::VoltageCollapse { .. } => {
            ConvergenceError::new_err(err.to_string())
        }
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn parse_arg<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

fn ratio_source(s: &str) -> PyResult<RatioSource> {
    match s {
        "measured" => Ok(RatioSource::Measured),
        "estimate" => Ok(RatioSource::EngineeringEstimate),
        _ => Err(PyValueError::new_err(format!(
            "source must be `measured` or `estimate`, got `{s}`"
        ))),
    }
}

fn flag_names(flags: estimator::Flags) -> Vec<String> {
    let s = flags.to_string();
    if s.is_empty() {
        Vec::new()
    } else {
        s.split('|').map(str::to_string).collect()
    }
}

/// Single-segment loss fraction `1 - v_end/v_start` from voltage magnitudes.
#[pyfunction]
fn voss_single(v_start: f64, v_end: f64) -> PyResult<f64> {
    Ok(estimator::voss_single(
        &SegmentVoltages::new(v_start, v_end).map_err(to_py)?,
    ))
}

/// Loss fraction `|1 - v_end/v_start|` from complex phasors.
#[pyfunction]
fn loss_fraction_exact(v_start: Complex64, v_end: Complex64) -> PyResult<f64> {
    estimator::loss_fraction_exact(v_start, v_end).map_err(to_py)
}

/// `2 r |sin(dtheta/2)|`, with `dtheta` in radians.
#[pyfunction]
fn small_angle_bound(ratio: f64, delta_theta: f64) -> f64 {
    estimator::small_angle_bound(ratio, delta_theta)
}

/// Correction factor for a uniform leakage fraction `rho`.
#[pyfunction]
fn correction_factor(rho: f64) -> PyResult<f64> {
    Ok(estimator::correction_factor(
        estimator::LeakageFraction::new(rho).map_err(to_py)?,
    ))
}

/// Correction factor from the power ratio `rho_s` and voltage ratio `rho_v`.
#[pyfunction]
#[pyo3(signature = (rho_s, rho_v, source = "measured"))]
fn correction_factor_hat(rho_s: f64, rho_v: f64, source: &str) -> PyResult<f64> {
    let params = CorrectionParams::new(rho_s, rho_v, ratio_source(source)?);
    Ok(estimator::correction_factor_hat(&params)
        .map_err(to_py)?
        .c_hat)
}

#[pyclass(name = "LossEstimate", module = "voss", frozen)]
struct PyLossEstimate(LossEstimate);

#[pymethods]
impl PyLossEstimate {
    #[getter]
    fn loss_fraction(&self) -> f64 {
        self.0.loss_fraction
    }

    #[getter]
    fn method(&self) -> String {
        self.0.method.to_string()
    }

    /// `None` for an uncorrected estimate.
    #[getter]
    fn c_hat(&self) -> Option<f64> {
        self.0.correction.map(|c| c.c_hat)
    }

    #[getter]
    fn flags(&self) -> Vec<String> {
        flag_names(self.0.flags)
    }

    fn __repr__(&self) -> String {
        format!(
            "LossEstimate({}, loss_fraction={:.6})",
            self.0.method, self.0.loss_fraction
        )
    }
}

/// Corrected estimate over a path with taps.
#[pyfunction]
#[pyo3(signature = (v_start, v_end, rho_s, rho_v, source = "measured"))]
fn voss_corrected(
    v_start: f64,
    v_end: f64,
    rho_s: f64,
    rho_v: f64,
    source: &str,
) -> PyResult<PyLossEstimate> {
    let seg = SegmentVoltages::new(v_start, v_end).map_err(to_py)?;
    let params = CorrectionParams::new(rho_s, rho_v, ratio_source(source)?);
    estimator::voss_corrected(&seg, &params)
        .map(PyLossEstimate)
        .map_err(to_py)
}

/// Discretized uniform-leakage line against the closed form.
///
/// Returns `(rho, oracle_ratio, c_formula, deviation)` tuples.
#[pyfunction]
#[pyo3(signature = (rho_values, segments = 10_000))]
fn oracle_sweep(
    py: Python<'_>,
    rho_values: Vec<f64>,
    segments: usize,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let rows = py
        .detach(|| line_oracle::sweep_rho(&rho_values, segments))
        .map_err(to_py)?;
    Ok(rows
        .iter()
        .map(|r| (r.rho, r.oracle_ratio, r.c_formula, r.deviation))
        .collect())
}

#[pyclass(name = "Feeder", module = "voss", frozen)]
struct PyFeeder(FeederModel);

#[pymethods]
impl PyFeeder {
    /// Read a `.feeder` file.
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        feeder::parse_feeder(path).map(PyFeeder).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (text, origin = "<string>"))]
    fn parse(text: &str, origin: &str) -> PyResult<Self> {
        feeder::parse_feeder_str(text, origin)
            .map(PyFeeder)
            .map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn node_ids(&self) -> Vec<String> {
        self.0.nodes.iter().map(|n| n.id.clone()).collect()
    }

    #[getter]
    fn segment_ids(&self) -> Vec<String> {
        self.0.segments.iter().map(|s| s.id.clone()).collect()
    }

    /// Total spot and distributed load, kVA.
    #[getter]
    fn total_load_kva(&self) -> Complex64 {
        self.0.total_load_kva()
    }

    fn scale_loads(&self, factor: f64) -> Self {
        PyFeeder(self.0.scale_loads(factor))
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[pyo3(signature = (tol = SolveOptions::default().tol, max_iter = SolveOptions::default().max_iter, lumping = "midpoint"))]
    fn solve(
        &self,
        py: Python<'_>,
        tol: f64,
        max_iter: usize,
        lumping: &str,
    ) -> PyResult<PySolution> {
        let lumping: Lumping = parse_arg(lumping)?;
        let model = &self.0;
        py.detach(|| {
            powerflow::solve(
                &expand_distributed_loads_with(model, lumping),
                &SolveOptions { tol, max_iter },
            )
        })
        .map(PySolution)
        .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Feeder({}, {} nodes, {} segments)",
            self.0.name,
            self.0.nodes.len(),
            self.0.segments.len()
        )
    }
}

#[pyclass(name = "Solution", module = "voss", frozen)]
struct PySolution(PowerFlowSolution);

#[pymethods]
impl PySolution {
    #[getter]
    fn feeder(&self) -> String {
        self.0.feeder.clone()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    #[getter]
    fn node_ids(&self) -> Vec<String> {
        self.0.node_ids.clone()
    }

    /// Largest power mismatch over all nodes, pu of the feeder base.
    #[getter]
    fn power_balance_residual(&self) -> f64 {
        self.0.power_balance_residual()
    }

    /// Total series loss, kVA.
    #[getter]
    fn total_loss(&self) -> Complex64 {
        self.0.total_loss()
    }

    /// Phase-to-neutral voltage phasor, V.
    fn voltage(&self, node: &str, phase: &str) -> PyResult<Complex64> {
        self.0
            .voltage(node, parse_arg::<Phase>(phase)?)
            .map_err(to_py)
    }

    fn voltage_pu(&self, node: &str, phase: &str) -> PyResult<f64> {
        self.0
            .voltage_pu(node, parse_arg::<Phase>(phase)?)
            .map_err(to_py)
    }

    /// Per-phase `[A, B, C]` loss of a segment, kVA.
    fn segment_loss(&self, segment: &str) -> PyResult<Vec<Complex64>> {
        self.0
            .segment(segment)
            .map(|s| s.loss().to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("unknown segment `{segment}`")))
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution({}, {} iterations)",
            self.0.feeder, self.0.iterations
        )
    }
}

#[pyclass(name = "ComparisonRow", module = "voss", frozen, get_all)]
struct PyComparisonRow {
    feeder: String,
    line: String,
    phase: String,
    voss_single: f64,
    c_hat: f64,
    voss_corrected: f64,
    true_loss: f64,
    abs_error: f64,
    angle_bound: f64,
    excluded: Option<String>,
    flags: Vec<String>,
}

#[pymethods]
impl PyComparisonRow {
    fn __repr__(&self) -> String {
        format!(
            "ComparisonRow({} {}/{}, voss={:.6}, true={:.6})",
            self.feeder, self.line, self.phase, self.voss_corrected, self.true_loss
        )
    }
}

impl From<benchmark::ComparisonRow> for PyComparisonRow {
    fn from(r: benchmark::ComparisonRow) -> Self {
        PyComparisonRow {
            feeder: r.feeder,
            line: r.line,
            phase: r.phase.to_string(),
            voss_single: r.voss_single,
            c_hat: r.c_hat,
            voss_corrected: r.voss_corrected,
            true_loss: r.true_loss,
            abs_error: r.abs_error,
            angle_bound: r.angle_bound,
            excluded: r.excluded,
            flags: flag_names(r.flags),
        }
    }
}

fn bench_options(near_zero_threshold: f64, lumping: &str) -> PyResult<BenchmarkOptions> {
    Ok(BenchmarkOptions {
        near_zero_fraction: near_zero_threshold,
        lumping: parse_arg(lumping)?,
        ..BenchmarkOptions::default()
    })
}

/// Estimate against simulation for every line and phase of a feeder.
#[pyfunction]
#[pyo3(signature = (feeder, near_zero_threshold = DEFAULT_NEAR_ZERO_FRACTION, lumping = "split-ends"))]
fn single_segment_study(
    py: Python<'_>,
    feeder: &PyFeeder,
    near_zero_threshold: f64,
    lumping: &str,
) -> PyResult<Vec<PyComparisonRow>> {
    let opts = bench_options(near_zero_threshold, lumping)?;
    let rows = py
        .detach(|| benchmark::run_single_segment_study(&feeder.0, &opts))
        .map_err(to_py)?;
    Ok(rows.into_iter().map(Into::into).collect())
}

/// Corrected and uncorrected estimates over paths such as `"800-814,816-822"`.
///
/// `rho_s_source` is `"simulated"` or `"estimate:<value>"`.
#[pyfunction]
#[pyo3(signature = (feeder, paths, rho_s_source = "simulated", near_zero_threshold = DEFAULT_NEAR_ZERO_FRACTION, lumping = "split-ends"))]
fn multi_segment_study(
    py: Python<'_>,
    feeder: &PyFeeder,
    paths: &str,
    rho_s_source: &str,
    near_zero_threshold: f64,
    lumping: &str,
) -> PyResult<Vec<PyComparisonRow>> {
    let opts = bench_options(near_zero_threshold, lumping)?;
    let source: RhoSSource = parse_arg(rho_s_source)?;
    let paths = benchmark::parse_paths(paths).map_err(to_py)?;
    let rows = py
        .detach(|| benchmark::run_multi_segment_study(&feeder.0, &paths, source, &opts))
        .map_err(to_py)?;
    Ok(rows.into_iter().map(Into::into).collect())
}

#[pyclass(name = "LossCurve", module = "voss", frozen)]
struct PyLossCurve(sensors::LossCurve);

#[pymethods]
impl PyLossCurve {
    #[getter]
    fn upstream(&self) -> String {
        self.0.upstream.clone()
    }

    #[getter]
    fn downstream(&self) -> String {
        self.0.downstream.clone()
    }

    /// RFC 3339 timestamps of the grid points.
    #[getter]
    fn times(&self) -> Vec<String> {
        self.0.points.iter().map(|p| p.time.to_rfc3339()).collect()
    }

    /// Loss fraction per grid point; `None` at gaps and outages.
    #[getter]
    fn loss(&self) -> Vec<Option<f64>> {
        self.0.points.iter().map(|p| p.loss_fraction).collect()
    }

    #[getter]
    fn flags(&self) -> Vec<Vec<String>> {
        self.0.points.iter().map(|p| flag_names(p.flags)).collect()
    }

    #[getter]
    fn file_name(&self) -> String {
        self.0.file_name()
    }

    fn write_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path)
            .map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        self.0
            .write_csv(std::io::BufWriter::new(file))
            .map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.points.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "LossCurve({} -> {}, {} points)",
            self.0.upstream,
            self.0.downstream,
            self.0.points.len()
        )
    }
}

/// Loss curves for each adjacent sensor pair of a chain.
///
/// `data` is a `sensor_id,timestamp,voltage_v` CSV and `chain` a TOML chain file.
#[pyfunction]
fn sensor_loss_curves(
    py: Python<'_>,
    data: std::path::PathBuf,
    chain: std::path::PathBuf,
) -> PyResult<Vec<PyLossCurve>> {
    let curves = py
        .detach(|| -> voss_core::Result<_> {
            let chain = sensors::ChainConfig::load(&chain)?;
            let ingested = sensors::ingest_csv(&data, chain.nominal_voltage)?;
            sensors::loss_curve(&chain, &ingested.into_map())
        })
        .map_err(to_py)?;
    Ok(curves.into_iter().map(PyLossCurve).collect())
}

#[pymodule]
fn voss(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ConvergenceError", m.py().get_type::<ConvergenceError>())?;
    m.add_class::<PyLossEstimate>()?;
    m.add_class::<PyFeeder>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyComparisonRow>()?;
    m.add_class::<PyLossCurve>()?;
    m.add_function(wrap_pyfunction!(voss_single, m)?)?;
    m.add_function(wrap_pyfunction!(loss_fraction_exact, m)?)?;
    m.add_function(wrap_pyfunction!(small_angle_bound, m)?)?;
    m.add_function(wrap_pyfunction!(correction_factor, m)?)?;
    m.add_function(wrap_pyfunction!(correction_factor_hat, m)?)?;
    m.add_function(wrap_pyfunction!(voss_corrected, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(single_segment_study, m)?)?;
    m.add_function(wrap_pyfunction!(multi_segment_study, m)?)?;
    m.add_function(wrap_pyfunction!(sensor_loss_curves, m)?)?;
    Ok(())
}
