//! Unbalanced three-phase forward-backward sweep for radial feeders.
//!
//! Each iteration computes load currents at the present node voltages, sums
//! them towards the source (backward sweep), then recomputes voltages from the
//! source outwards using the new branch currents (forward sweep). Lines use
//! the full phase-coupled impedance matrix.

use std::collections::HashMap;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::estimator::{Flags, LossEstimate, Method};
use crate::feeder::{Connection, FeederModel, LoadDef, LoadModel, SegmentKind, Topology};
use crate::phasor::{mat_vec, Mat3, Phase, PhaseSet, PhasorExt, Vec3, ZERO3};

/// Voltages below this fraction of nominal abort the solve.
pub const COLLAPSE_PU: f64 = 0.5;

/// Near-zero input power threshold as a fraction of the feeder base power.
pub const DEFAULT_NEAR_ZERO_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Largest per-unit voltage update accepted as converged.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFlow {
    pub id: String,
    pub from: String,
    pub to: String,
    pub phases: PhaseSet,
    pub is_line: bool,
    /// Series impedance of a line in Ω; zero for other kinds.
    pub z: Mat3,
    /// Currents at the sending and receiving ends, A.
    pub i_in: Vec3,
    pub i_out: Vec3,
    /// Complex power entering at the sending end and leaving at the receiving end, kVA.
    pub s_in: Vec3,
    pub s_out: Vec3,
}

impl SegmentFlow {
    /// `s_in - s_out` per phase, kVA.
    pub fn loss(&self) -> Vec3 {
        std::array::from_fn(|k| self.s_in[k] - self.s_out[k])
    }

    /// Per-phase series loss `(Z i)_p · i_p*` evaluated from currents alone, kVA.
    pub fn loss_from_currents(&self) -> Vec3 {
        let drop = mat_vec(&self.z, &self.i_out);
        std::array::from_fn(|k| drop[k] * self.i_out[k].conj() / 1000.0)
    }
}

#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    pub feeder: String,
    pub base_kva: f64,
    pub node_ids: Vec<String>,
    pub node_phases: Vec<PhaseSet>,
    /// Phase-to-neutral voltages, V.
    pub node_voltages: Vec<Vec3>,
    /// Nominal phase-to-neutral voltage per node, V.
    pub node_base_ln: Vec<f64>,
    /// Power drawn by loads at each node, attributed to phases through line currents, kVA.
    pub load_power: Vec<Vec3>,
    /// Power drawn by shunt capacitors (negative reactive), kVA.
    pub shunt_power: Vec<Vec3>,
    pub segments: Vec<SegmentFlow>,
    pub source_power: Vec3,
    pub iterations: usize,
    pub max_mismatch: f64,
    node_index: HashMap<String, usize>,
    parent: Vec<Option<usize>>,
}

impl PowerFlowSolution {
    pub fn node(&self, id: &str) -> Result<usize> {
        self.node_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn voltage(&self, node: &str, phase: Phase) -> Result<Complex64> {
        let i = self.node(node)?;
        if !self.node_phases[i].contains(phase) {
            return Err(Error::PhaseMismatch(format!(
                "node `{node}` has no phase {phase}"
            )));
        }
        Ok(self.node_voltages[i][phase.index()])
    }

    pub fn voltage_pu(&self, node: &str, phase: Phase) -> Result<f64> {
        let v = self.voltage(node, phase)?;
        Ok(v.magnitude() / self.node_base_ln[self.node(node)?])
    }

    pub fn segment(&self, id: &str) -> Option<&SegmentFlow> {
        self.segments.iter().find(|s| s.id == id)
    }

    /// Segment indices from `from` down to `to`.
    pub fn path(&self, from: &str, to: &str) -> Result<Vec<usize>> {
        let start = self.node(from)?;
        let mut at = self.node(to)?;
        let mut segs = Vec::new();
        while at != start {
            let Some(s) = self.parent[at] else {
                return Err(Error::InvalidPath(format!(
                    "node `{from}` is not upstream of node `{to}`"
                )));
            };
            segs.push(s);
            at = self.node(&self.segments[s].from)?;
        }
        if segs.is_empty() {
            return Err(Error::InvalidPath(format!(
                "empty path from `{from}` to `{to}`"
            )));
        }
        segs.reverse();
        Ok(segs)
    }

    /// Sum of all per-phase series losses, kVA.
    pub fn total_loss(&self) -> Complex64 {
        self.segments.iter().flat_map(|s| s.loss()).sum()
    }

    /// `|source - loads - losses - shunts|` in per-unit of the base power.
    pub fn power_balance_residual(&self) -> f64 {
        let source: Complex64 = self.source_power.iter().sum();
        let loads: Complex64 = self.load_power.iter().flatten().sum();
        let shunts: Complex64 = self.shunt_power.iter().flatten().sum();
        (source - loads - shunts - self.total_loss()).norm() / self.base_kva
    }

    pub fn write_node_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node", "phase", "magnitude_V", "angle_deg"])?;
        for (i, id) in self.node_ids.iter().enumerate() {
            for p in self.node_phases[i].iter() {
                let v = self.node_voltages[i][p.index()];
                w.write_record([
                    id.clone(),
                    p.to_string(),
                    format!("{:.6}", v.magnitude()),
                    format!("{:.6}", v.angle_deg()),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_segment_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "segment",
            "phase",
            "p_in_kW",
            "q_in_kvar",
            "p_out_kW",
            "q_out_kvar",
        ])?;
        for seg in &self.segments {
            for p in seg.phases.iter() {
                let (si, so) = (seg.s_in[p.index()], seg.s_out[p.index()]);
                w.write_record([
                    seg.id.clone(),
                    p.to_string(),
                    format!("{:.6}", si.re),
                    format!("{:.6}", si.im),
                    format!("{:.6}", so.re),
                    format!("{:.6}", so.im),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Per-segment data the sweeps need, precomputed once.
enum Branch {
    Line(Mat3),
    Regulator([f64; 3]),
    Transformer { ratio: f64, z: Complex64 },
}

struct Network<'a> {
    model: &'a FeederModel,
    topo: Topology,
    branches: Vec<Branch>,
    seg_to: Vec<usize>,
    seg_from: Vec<usize>,
    base_ln: Vec<f64>,
    /// Loads attached to each node.
    loads: Vec<Vec<&'a LoadDef>>,
}

impl<'a> Network<'a> {
    fn new(model: &'a FeederModel) -> Result<Self> {
        if model.has_distributed_loads() {
            return Err(Error::InvalidFeeder(
                "distributed loads must be expanded before solving".into(),
            ));
        }
        let topo = model.topology()?;
        let branches = model
            .segments
            .iter()
            .map(|s| match &s.kind {
                SegmentKind::Line => Branch::Line(s.impedance()),
                SegmentKind::Regulator { tap } => Branch::Regulator(*tap),
                SegmentKind::Transformer { ratio, series_z } => Branch::Transformer {
                    ratio: *ratio,
                    z: Complex64::new(series_z[0], series_z[1]),
                },
            })
            .collect();
        let seg_to = model
            .segments
            .iter()
            .map(|s| topo.node_index[&s.to])
            .collect();
        let seg_from = model
            .segments
            .iter()
            .map(|s| topo.node_index[&s.from])
            .collect();
        let base_ln = topo
            .kv_ll
            .iter()
            .map(|kv| kv * 1000.0 / 3f64.sqrt())
            .collect();
        let mut loads = vec![Vec::new(); model.nodes.len()];
        for l in &model.loads {
            let node = l.node.as_deref().expect("spot loads after expansion");
            loads[topo.node_index[node]].push(l);
        }
        Ok(Network {
            model,
            topo,
            branches,
            seg_to,
            seg_from,
            base_ln,
            loads,
        })
    }

    fn mask(&self, node: usize, mut v: Vec3) -> Vec3 {
        let phases = self.model.nodes[node].phases;
        for p in Phase::ALL {
            if !phases.contains(p) {
                v[p.index()] = Complex64::new(0.0, 0.0);
            }
        }
        v
    }

    /// Current drawn by loads and capacitors at `node` given its voltage, A.
    fn load_currents(&self, node: usize, v: &Vec3) -> (Vec3, Vec3) {
        let mut i_load = ZERO3;
        let v_ln = self.base_ln[node];
        for load in &self.loads[node] {
            let s = load.power_va();
            for k in 0..3 {
                if s[k] == Complex64::new(0.0, 0.0) {
                    continue;
                }
                match load.connection {
                    Connection::Wye => {
                        i_load[k] += element_current(load.model, s[k], v[k], v_ln);
                    }
                    Connection::Delta => {
                        let j = (k + 1) % 3;
                        let i = element_current(load.model, s[k], v[k] - v[j], v_ln * 3f64.sqrt());
                        i_load[k] += i;
                        i_load[j] -= i;
                    }
                }
            }
        }
        let mut i_shunt = ZERO3;
        if let Some(caps) = self.model.nodes[node].capacitor_kvar {
            for k in 0..3 {
                if caps[k] > 0.0 && v[k].norm() > 0.0 {
                    let s = Complex64::new(0.0, -caps[k] * 1000.0);
                    i_shunt[k] = (s / v[k]).conj();
                }
            }
        }
        (i_load, i_shunt)
    }

    /// Receiving-end currents of every segment at voltages `v`.
    fn backward(&self, v: &[Vec3]) -> (Vec<Vec3>, Vec<Vec3>) {
        let n_seg = self.model.segments.len();
        let mut i_out = vec![ZERO3; n_seg];
        let mut i_in = vec![ZERO3; n_seg];
        for &node in self.topo.order.iter().rev() {
            let Some(parent) = self.topo.parent[node] else {
                continue;
            };
            let (il, ish) = self.load_currents(node, &v[node]);
            let mut total: Vec3 = std::array::from_fn(|k| il[k] + ish[k]);
            for &child in &self.topo.children[node] {
                for k in 0..3 {
                    total[k] += i_in[child][k];
                }
            }
            i_out[parent] = total;
            i_in[parent] = match &self.branches[parent] {
                Branch::Line(_) => total,
                Branch::Regulator(tap) => std::array::from_fn(|k| total[k] * tap[k]),
                Branch::Transformer { ratio, .. } => std::array::from_fn(|k| total[k] / *ratio),
            };
        }
        (i_in, i_out)
    }

    /// Node voltages from the source outwards given receiving-end currents.
    fn forward(&self, i_out: &[Vec3]) -> Vec<Vec3> {
        let mut v = vec![ZERO3; self.model.nodes.len()];
        v[self.topo.source] = self.mask(self.topo.source, self.model.source.voltages());
        for &node in &self.topo.order {
            for &s in &self.topo.children[node] {
                let up = v[node];
                let down: Vec3 = match &self.branches[s] {
                    Branch::Line(z) => {
                        let drop = mat_vec(z, &i_out[s]);
                        std::array::from_fn(|k| up[k] - drop[k])
                    }
                    Branch::Regulator(tap) => std::array::from_fn(|k| up[k] * tap[k]),
                    Branch::Transformer { ratio, z } => {
                        std::array::from_fn(|k| up[k] / *ratio - z * i_out[s][k])
                    }
                };
                let to = self.seg_to[s];
                v[to] = self.mask(to, down);
            }
        }
        v
    }

    fn check_collapse(&self, v: &[Vec3]) -> Result<()> {
        for (i, node) in self.model.nodes.iter().enumerate() {
            for p in node.phases.iter() {
                let pu = v[i][p.index()].norm() / self.base_ln[i];
                if !pu.is_finite() || pu < COLLAPSE_PU {
                    return Err(Error::VoltageCollapse {
                        node: node.id.clone(),
                        pu,
                    });
                }
            }
        }
        Ok(())
    }

    fn mismatch(&self, a: &[Vec3], b: &[Vec3]) -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .flat_map(|(i, (va, vb))| (0..3).map(move |k| (va[k] - vb[k]).norm() / self.base_ln[i]))
            .fold(0.0, f64::max)
    }
}

/// Current drawn by one load element across voltage `v` (rated `v_nom`).
fn element_current(model: LoadModel, s: Complex64, v: Complex64, v_nom: f64) -> Complex64 {
    if v.norm() == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    match model {
        LoadModel::Pq => (s / v).conj(),
        LoadModel::Z => v * s.conj() / (v_nom * v_nom),
        LoadModel::I => {
            let mag = s.norm() / v_nom;
            Complex64::from_polar(mag, v.arg() - s.arg())
        }
    }
}

pub fn solve(model: &FeederModel, options: &SolveOptions) -> Result<PowerFlowSolution> {
    let net = Network::new(model)?;
    let n_seg = model.segments.len();

    let mut v = net.forward(&vec![ZERO3; n_seg]);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut mismatch = f64::INFINITY;
    for _ in 0..options.max_iter {
        let (_, i_out) = net.backward(&v);
        let v_new = net.forward(&i_out);
        mismatch = net.mismatch(&v, &v_new);
        trace.push(mismatch);
        v = v_new;
        net.check_collapse(&v)?;
        if mismatch < options.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: trace.len(),
            trace,
        });
    }

    // Flows consistent with the converged voltages.
    let (i_in, i_out) = net.backward(&v);
    let mut load_power = vec![ZERO3; model.nodes.len()];
    let mut shunt_power = vec![ZERO3; model.nodes.len()];
    for node in 0..model.nodes.len() {
        let (il, ish) = net.load_currents(node, &v[node]);
        for k in 0..3 {
            load_power[node][k] = v[node][k] * il[k].conj() / 1000.0;
            shunt_power[node][k] = v[node][k] * ish[k].conj() / 1000.0;
        }
    }
    let segments = model
        .segments
        .iter()
        .enumerate()
        .map(|(s, seg)| {
            let (vf, vt) = (&v[net.seg_from[s]], &v[net.seg_to[s]]);
            SegmentFlow {
                id: seg.id.clone(),
                from: seg.from.clone(),
                to: seg.to.clone(),
                phases: seg.phases,
                is_line: seg.is_line(),
                z: match &net.branches[s] {
                    Branch::Line(z) => *z,
                    _ => [[Complex64::new(0.0, 0.0); 3]; 3],
                },
                i_in: i_in[s],
                i_out: i_out[s],
                s_in: std::array::from_fn(|k| vf[k] * i_in[s][k].conj() / 1000.0),
                s_out: std::array::from_fn(|k| vt[k] * i_out[s][k].conj() / 1000.0),
            }
        })
        .collect::<Vec<_>>();

    let src = net.topo.source;
    let (il, ish) = net.load_currents(src, &v[src]);
    let mut source_current: Vec3 = std::array::from_fn(|k| il[k] + ish[k]);
    for &child in &net.topo.children[src] {
        for k in 0..3 {
            source_current[k] += i_in[child][k];
        }
    }
    let source_power = std::array::from_fn(|k| v[src][k] * source_current[k].conj() / 1000.0);

    Ok(PowerFlowSolution {
        feeder: model.name.clone(),
        base_kva: model.base.kva,
        node_ids: model.nodes.iter().map(|n| n.id.clone()).collect(),
        node_phases: model.nodes.iter().map(|n| n.phases).collect(),
        node_voltages: v,
        node_base_ln: net.base_ln.clone(),
        load_power,
        shunt_power,
        segments,
        source_power,
        iterations: trace.len(),
        max_mismatch: mismatch,
        node_index: net.topo.node_index.clone(),
        parent: net.topo.parent.clone(),
    })
}

/// Series loss along `path` as a fraction of the power entering its head.
///
/// Power delivered to taps along the path is not counted as lost. Paths whose
/// input power magnitude is below `near_zero_kva` are flagged `NearZeroPower`.
pub fn true_loss_fraction(
    solution: &PowerFlowSolution,
    path: &[usize],
    phase: Phase,
    near_zero_kva: f64,
) -> Result<LossEstimate> {
    let (Some(&head), Some(&tail)) = (path.first(), path.last()) else {
        return Err(Error::InvalidPath("empty path".into()));
    };
    let k = phase.index();
    for &s in path {
        let seg = &solution.segments[s];
        if !seg.phases.contains(phase) {
            return Err(Error::PhaseMismatch(format!(
                "segment `{}` does not carry phase {phase}",
                seg.id
            )));
        }
    }
    let s_in = solution.segments[head].s_in[k];
    let loss: Complex64 = path.iter().map(|&s| solution.segments[s].loss()[k]).sum();
    let mut flags = Flags::empty();
    flags.set(Flags::NEAR_ZERO_POWER, s_in.norm() < near_zero_kva);
    let loss_fraction = if s_in.norm() > 0.0 {
        loss.norm() / s_in.norm()
    } else {
        0.0
    };
    Ok(LossEstimate {
        line_id: format!(
            "{}-{}",
            solution.segments[head].from, solution.segments[tail].to
        ),
        phase: Some(phase),
        method: Method::TrueSimulated,
        loss_fraction,
        correction: None,
        flags,
    })
}
