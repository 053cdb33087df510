mod common;

use common::{fixture, ieee13, ieee34, TABLE_PATHS};
use voss_core::benchmark::{
    parse_paths, run_multi_segment_study, run_single_segment_study, write_comparison_csv,
    write_long_csv, BenchmarkOptions, ComparisonRow, RhoSSource,
};
use voss_core::estimator::{correction_factor_hat, CorrectionParams, Flags, RatioSource};
use voss_core::feeder::{parse_feeder, Lumping};
use voss_core::phasor::Phase;
use voss_core::Error;

fn within_bound(r: &ComparisonRow) -> bool {
    // for a voltage rise the bound holds against the magnitude of the estimate
    (r.true_loss - r.voss_single.abs()).abs() <= r.angle_bound + 1e-12
}

#[test]
fn two_node_estimate_matches_truth() {
    let m = parse_feeder(fixture("two_node.feeder")).unwrap();
    let rows = run_single_segment_study(&m, &BenchmarkOptions::default()).unwrap();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!(!r.is_excluded());
        assert!(r.voss_single > 0.0);
        assert!(within_bound(r), "{r:?}");
        assert!(r.abs_error < 0.01 * r.true_loss + r.angle_bound);
    }
    let multi = run_multi_segment_study(
        &m,
        &parse_paths("s-r").unwrap(),
        RhoSSource::Simulated,
        &BenchmarkOptions::default(),
    )
    .unwrap();
    for r in &multi {
        assert!((r.c_hat - 1.0).abs() < 0.02, "{}", r.c_hat);
        assert!((r.voss_corrected - r.voss_single).abs() < 0.02 * r.voss_single);
    }
}

#[test]
fn ieee13_rows_and_exclusion() {
    let rows = run_single_segment_study(&ieee13(), &BenchmarkOptions::default()).unwrap();
    let excluded: Vec<&ComparisonRow> = rows.iter().filter(|r| r.is_excluded()).collect();
    assert!(!excluded.is_empty());
    for r in &excluded {
        assert_eq!(r.line, "671-680");
        assert!(r.flags.contains(Flags::NEAR_ZERO_POWER));
    }
    for r in rows.iter().filter(|r| !r.is_excluded()) {
        assert!(within_bound(r), "{r:?}");
        assert_eq!(r.abs_error, (r.voss_corrected - r.true_loss).abs());
        assert_eq!(r.flags.contains(Flags::NEGATIVE_DROP), r.voss_single < 0.0);
    }
}

#[test]
fn midpoint_lumping_breaks_the_single_segment_bound() {
    // a tap in the middle of a line makes the end-to-end estimate a multi-segment one
    let opts = BenchmarkOptions {
        lumping: Lumping::Midpoint,
        ..Default::default()
    };
    let rows = run_single_segment_study(&ieee34(), &opts).unwrap();
    let r = rows
        .iter()
        .find(|r| r.line == "818-820" && r.phase == Phase::A)
        .unwrap();
    assert!(!within_bound(r));
    assert!(r.voss_single > r.true_loss);
}

#[test]
fn estimate_source_uses_the_formula() {
    let paths = parse_paths(TABLE_PATHS).unwrap();
    let rows = run_multi_segment_study(
        &ieee34(),
        &paths,
        RhoSSource::Estimate(0.667),
        &BenchmarkOptions::default(),
    )
    .unwrap();
    assert_eq!(rows.len(), 7);
    for r in &rows {
        let rho_v = 1.0 - r.voss_single;
        let direct = correction_factor_hat(&CorrectionParams::new(
            0.667,
            rho_v,
            RatioSource::EngineeringEstimate,
        ))
        .unwrap();
        assert!((r.c_hat - direct.c_hat).abs() < 1e-12);
        assert_eq!(r.voss_corrected, r.c_hat * r.voss_single);
    }
}

#[test]
fn lateral_paths_follow_their_phases() {
    let rows = run_multi_segment_study(
        &ieee34(),
        &parse_paths(TABLE_PATHS).unwrap(),
        RhoSSource::Simulated,
        &BenchmarkOptions::default(),
    )
    .unwrap();
    let labels: Vec<String> = rows
        .iter()
        .map(|r| format!("{}/{}", r.line, r.phase))
        .collect();
    assert_eq!(
        labels,
        [
            "800-814/A",
            "800-814/B",
            "800-814/C",
            "816-822/A",
            "828-854/A",
            "828-854/B",
            "828-854/C"
        ]
    );
}

#[test]
fn invalid_paths_name_the_node() {
    let err = run_multi_segment_study(
        &ieee34(),
        &parse_paths("800-999").unwrap(),
        RhoSSource::Simulated,
        &BenchmarkOptions::default(),
    )
    .unwrap_err();
    assert!(err.to_string().contains("999"), "{err}");
    let err = run_multi_segment_study(
        &ieee34(),
        &parse_paths("814-800").unwrap(),
        RhoSSource::Simulated,
        &BenchmarkOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::InvalidPath(_)), "{err}");
}

#[test]
fn output_is_deterministic() {
    let render = || {
        let m = ieee34();
        let opts = BenchmarkOptions::default();
        let mut rows = run_single_segment_study(&m, &opts).unwrap();
        rows.extend(
            run_multi_segment_study(
                &m,
                &parse_paths(TABLE_PATHS).unwrap(),
                RhoSSource::Simulated,
                &opts,
            )
            .unwrap(),
        );
        let mut a = Vec::new();
        write_comparison_csv(&rows, &mut a).unwrap();
        write_long_csv(&rows, &mut a).unwrap();
        a
    };
    assert_eq!(render(), render());
}

#[test]
fn csv_header_lists_row_fields() {
    let mut buf = Vec::new();
    write_comparison_csv(&[], &mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "feeder,line_or_path,phase,voss_single,c_hat,voss_corrected,true_loss,abs_error,angle_bound,excluded,reason,flags\n"
    );
}
