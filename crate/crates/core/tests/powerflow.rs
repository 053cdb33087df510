mod common;

use common::{ieee13, ieee34, IEEE13_PUBLISHED};
use proptest::prelude::*;
use voss_core::feeder::{expand_distributed_loads_with, FeederModel, Lumping};
use voss_core::phasor::Phase;
use voss_core::powerflow::{solve, PowerFlowSolution, SolveOptions};

fn solved(m: &FeederModel, lumping: Lumping) -> PowerFlowSolution {
    solve(
        &expand_distributed_loads_with(m, lumping),
        &SolveOptions::default(),
    )
    .unwrap()
}

#[test]
fn ieee13_matches_published_voltages() {
    let sol = solved(&ieee13(), Lumping::Midpoint);
    let mut worst: f64 = 0.0;
    for (node, mags) in IEEE13_PUBLISHED {
        for (phase, published) in Phase::ALL.into_iter().zip(mags) {
            let Some(published) = published else { continue };
            let got = sol.voltage_pu(node, phase).unwrap();
            let rel = (got - published).abs() / published;
            assert!(rel < 0.01, "{node}/{phase}: {got:.4} vs {published:.4}");
            worst = worst.max(rel);
        }
    }
    println!("worst relative deviation {worst:.4}");
}

#[test]
fn power_balances_on_both_feeders() {
    for m in [ieee13(), ieee34()] {
        for lumping in [Lumping::Midpoint, Lumping::SplitEnds] {
            let sol = solved(&m, lumping);
            assert!(
                sol.power_balance_residual() <= 1e-6,
                "{}",
                sol.power_balance_residual()
            );
            assert!(sol.iterations < 20, "{} iterations", sol.iterations);
        }
    }
}

#[test]
fn losses_from_currents_agree_with_flows() {
    for m in [ieee13(), ieee34()] {
        let sol = solved(&m, Lumping::Midpoint);
        for seg in sol.segments.iter().filter(|s| s.is_line) {
            let a = seg.loss();
            let b = seg.loss_from_currents();
            for k in 0..3 {
                let diff = (a[k] - b[k]).norm() / sol.base_kva;
                assert!(diff <= 1e-9, "{} phase {k}: {diff:e}", seg.id);
            }
        }
    }
}

#[test]
fn lines_do_not_gain_power() {
    for m in [ieee13(), ieee34()] {
        let sol = solved(&m, Lumping::SplitEnds);
        for seg in sol.segments.iter().filter(|s| s.is_line) {
            let total: num_complex::Complex64 = seg.loss().iter().sum();
            assert!(total.re >= -1e-9, "{}: {total}", seg.id);
        }
    }
}

/// Zero the off-diagonal entries of every line impedance.
fn decoupled(m: &FeederModel) -> FeederModel {
    let mut out = m.clone();
    for seg in &mut out.segments {
        let n = seg.phases.len();
        if let Some(z) = &mut seg.z {
            for r in 0..n {
                for c in (0..n).filter(|&c| c != r) {
                    z[r * n + c] = [0.0, 0.0];
                }
            }
        }
    }
    out
}

#[test]
fn per_phase_loss_is_nonnegative_without_mutual_coupling() {
    for m in [ieee13(), ieee34()] {
        let sol = solved(&decoupled(&m), Lumping::SplitEnds);
        for seg in sol.segments.iter().filter(|s| s.is_line) {
            for p in seg.phases.iter() {
                let loss = seg.loss()[p.index()];
                assert!(
                    loss.re >= -1e-9 && loss.im >= -1e-9,
                    "{} {p}: {loss}",
                    seg.id
                );
            }
        }
    }
}

#[test]
fn mutual_coupling_can_feed_a_phase() {
    // with the full impedance matrix, phase B of 632-671 delivers more than it receives
    let sol = solved(&ieee13(), Lumping::SplitEnds);
    let seg = sol.segment("632-671").unwrap();
    let k = Phase::B.index();
    assert!(seg.s_out[k].norm() > seg.s_in[k].norm());
}

/// Remove the zero-impedance switch 671-692 by merging 692 into 671.
fn merge_switch(m: &FeederModel) -> FeederModel {
    let mut out = m.clone();
    out.segments.retain(|s| s.id != "671-692");
    out.nodes.retain(|n| n.id != "692");
    for s in &mut out.segments {
        if s.from == "692" {
            s.from = "671".to_string();
        }
    }
    for l in &mut out.loads {
        if l.node.as_deref() == Some("692") {
            l.node = Some("671".to_string());
        }
    }
    out
}

#[test]
fn merging_a_switch_leaves_voltages_unchanged() {
    let m = ieee13();
    assert!(m.segment("671-692").is_some());
    let merged = merge_switch(&m);
    merged.validate().unwrap();
    let a = solved(&m, Lumping::Midpoint);
    let b = solved(&merged, Lumping::Midpoint);
    for (i, id) in b.node_ids.iter().enumerate() {
        for p in b.node_phases[i].iter() {
            let va = a.voltage(id, p).unwrap();
            let vb = b.voltage(id, p).unwrap();
            assert!(
                (va - vb).norm() / b.node_base_ln[i] < 1e-7,
                "{id}/{p}: {va} vs {vb}"
            );
        }
    }
    for p in [Phase::A, Phase::B, Phase::C] {
        assert_eq!(a.voltage("692", p).unwrap(), a.voltage("671", p).unwrap());
    }
}

#[test]
fn no_load_feeder_sits_at_source_voltage() {
    let m = ieee34().scale_loads(0.0);
    let mut m = m;
    for n in &mut m.nodes {
        n.capacitor_kvar = None;
    }
    let sol = solved(&m, Lumping::Midpoint);
    assert!(sol.total_loss().norm() < 1e-9);
    let src = sol.voltage("800", Phase::A).unwrap();
    let v = sol.voltage("802", Phase::A).unwrap();
    assert!((v - src).norm() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn halving_loads_never_slows_convergence(f in 0.05f64..1.0) {
        for m in [ieee13(), ieee34()] {
            let full = solved(&m.scale_loads(f), Lumping::Midpoint);
            let half = solved(&m.scale_loads(f / 2.0), Lumping::Midpoint);
            prop_assert!(half.iterations <= full.iterations,
                "{}: {} > {}", m.name, half.iterations, full.iterations);
        }
    }

    #[test]
    fn scaled_feeders_balance(f in 0.0f64..1.5) {
        let sol = solved(&ieee34().scale_loads(f), Lumping::SplitEnds);
        prop_assert!(sol.power_balance_residual() <= 1e-6);
    }
}
