//! Phasor helpers and per-phase containers shared by the feeder model and solver.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A complex electrical quantity (voltage, current or power).
pub type Phasor = Complex64;

/// Per-phase values in A, B, C order. Absent phases hold zero.
pub type Vec3 = [Complex64; 3];

/// Per-phase-pair matrix in A, B, C order. Rows/columns of absent phases hold zero.
pub type Mat3 = [[Complex64; 3]; 3];

pub const ZERO3: Vec3 = [Complex64::new(0.0, 0.0); 3];

pub fn polar_deg(magnitude: f64, angle_deg: f64) -> Phasor {
    Complex64::from_polar(magnitude, angle_deg.to_radians())
}

/// Magnitude/angle access in the units the power-systems literature uses.
pub trait PhasorExt {
    fn magnitude(&self) -> f64;
    fn angle_deg(&self) -> f64;
}

impl PhasorExt for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }

    fn angle_deg(&self) -> f64 {
        self.arg().to_degrees()
    }
}

pub fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    let mut out = ZERO3;
    for (row, o) in m.iter().zip(out.iter_mut()) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Phase::A => "A",
            Phase::B => "B",
            Phase::C => "C",
        };
        f.write_str(c)
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Phase::A),
            "B" | "b" => Ok(Phase::B),
            "C" | "c" => Ok(Phase::C),
            other => Err(format!("unknown phase `{other}`")),
        }
    }
}

/// A subset of {A, B, C}, serialized as e.g. `"AC"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PhaseSet([bool; 3]);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet([true; 3]);

    pub fn new(phases: &[Phase]) -> Self {
        let mut set = PhaseSet::default();
        for p in phases {
            set.0[p.index()] = true;
        }
        set
    }

    pub fn contains(&self, phase: Phase) -> bool {
        self.0[phase.index()]
    }

    pub fn is_subset(&self, other: &PhaseSet) -> bool {
        Phase::ALL
            .iter()
            .all(|&p| !self.contains(p) || other.contains(p))
    }

    pub fn iter(&self) -> impl Iterator<Item = Phase> + '_ {
        Phase::ALL.into_iter().filter(|&p| self.contains(p))
    }

    pub fn len(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of `phase` within the compact (present-phases-only) ordering.
    pub fn position(&self, phase: Phase) -> Option<usize> {
        self.iter().position(|p| p == phase)
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl FromStr for PhaseSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = PhaseSet::default();
        for ch in s.chars() {
            let p: Phase = ch.to_string().parse()?;
            if set.contains(p) {
                return Err(format!("phase {p} repeated in `{s}`"));
            }
            set.0[p.index()] = true;
        }
        if set.is_empty() {
            return Err("empty phase set".into());
        }
        Ok(set)
    }
}

impl Serialize for PhaseSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PhaseSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
