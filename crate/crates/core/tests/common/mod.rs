#![allow(dead_code)]

use std::path::PathBuf;

use voss_core::feeder::{parse_feeder, FeederModel};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn ieee13() -> FeederModel {
    parse_feeder(data("ieee13.feeder")).unwrap()
}

pub fn ieee34() -> FeederModel {
    parse_feeder(data("ieee34.feeder")).unwrap()
}

/// Published IEEE 13-node radial flow voltage magnitudes, per unit, phases A/B/C.
pub const IEEE13_PUBLISHED: &[(&str, [Option<f64>; 3])] = &[
    ("650", [Some(1.0000), Some(1.0000), Some(1.0000)]),
    ("rg60", [Some(1.0625), Some(1.0500), Some(1.0687)]),
    ("632", [Some(1.0210), Some(1.0420), Some(1.0174)]),
    ("633", [Some(1.0180), Some(1.0401), Some(1.0148)]),
    ("634", [Some(0.9940), Some(1.0218), Some(0.9960)]),
    ("645", [None, Some(1.0329), Some(1.0155)]),
    ("646", [None, Some(1.0311), Some(1.0134)]),
    ("671", [Some(0.9900), Some(1.0529), Some(0.9778)]),
    ("680", [Some(0.9900), Some(1.0529), Some(0.9778)]),
    ("684", [Some(0.9881), None, Some(0.9758)]),
    ("611", [None, None, Some(0.9738)]),
    ("652", [Some(0.9825), None, None]),
    ("692", [Some(0.9900), Some(1.0529), Some(0.9777)]),
    ("675", [Some(0.9835), Some(1.0553), Some(0.9758)]),
];

/// Multi-segment paths compared in the reference study.
pub const TABLE_PATHS: &str = "800-814,816-822,828-854";
