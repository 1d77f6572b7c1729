//! Exact energy arithmetic.
//!
//! All energy accounting in this crate is integer femtojoules. Per-cycle unit
//! energies are quantized to fJ once, when a model is evaluated; everything
//! downstream (sums over traces, path bounds, closed-form evaluation) is exact
//! integer or rational arithmetic, so additivity holds with zero tolerance and
//! every report is deterministic.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul};

pub const FJ_PER_PJ: u128 = 1_000;

/// An exact energy value in femtojoules.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Energy(pub u128);

impl Energy {
    pub const ZERO: Energy = Energy(0);

    /// Quantizes a picojoule amount to the nearest femtojoule.
    pub fn from_pj_f64(pj: f64) -> Energy {
        assert!(
            pj >= 0.0 && pj.is_finite(),
            "energy must be finite and non-negative"
        );
        Energy((pj * FJ_PER_PJ as f64).round() as u128)
    }

    pub fn from_fj(fj: u128) -> Energy {
        Energy(fj)
    }

    pub fn fj(self) -> u128 {
        self.0
    }

    pub fn as_pj_f64(self) -> f64 {
        self.0 as f64 / FJ_PER_PJ as f64
    }

    /// Renders the value in pJ with no trailing zeros, e.g. `82000` or `3.25`.
    pub fn pj_string(self) -> String {
        let whole = self.0 / FJ_PER_PJ;
        let frac = (self.0 % FJ_PER_PJ) as u32;
        if frac == 0 {
            format!("{whole}")
        } else {
            let s = format!("{whole}.{frac:03}");
            s.trim_end_matches('0').to_string()
        }
    }

    pub fn saturating_sub(self, rhs: Energy) -> Energy {
        Energy(self.0.saturating_sub(rhs.0))
    }

    /// Relative deviation |self − other| / other, in f64; other must be nonzero.
    pub fn rel_dev(self, other: Energy) -> f64 {
        let diff = self.0.abs_diff(other.0);
        diff as f64 / other.0 as f64
    }
}

impl Add for Energy {
    type Output = Energy;
    fn add(self, rhs: Energy) -> Energy {
        Energy(self.0.checked_add(rhs.0).expect("energy overflow"))
    }
}

impl AddAssign for Energy {
    fn add_assign(&mut self, rhs: Energy) {
        *self = *self + rhs;
    }
}

impl Mul<u128> for Energy {
    type Output = Energy;
    fn mul(self, rhs: u128) -> Energy {
        Energy(self.0.checked_mul(rhs).expect("energy overflow"))
    }
}

impl Sum for Energy {
    fn sum<I: Iterator<Item = Energy>>(iter: I) -> Energy {
        iter.fold(Energy::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} pJ", self.pj_string())
    }
}

/// Where an energy figure came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Simulated,
    StatisticsExtrapolated,
    StaticBound,
}

/// An energy total with per-block and per-function attribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total: Energy,
    pub idle: Energy,
    pub provenance: Provenance,
    /// Keyed by (function, block label).
    pub per_block: std::collections::BTreeMap<String, Energy>,
    pub per_function: std::collections::BTreeMap<String, Energy>,
}

impl EnergyReport {
    pub fn block_key(function: &str, label: &str) -> String {
        format!("{function}/{label}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pj_string_trims_trailing_zeros() {
        assert_eq!(Energy::from_fj(82_000_000).pj_string(), "82000");
        assert_eq!(Energy::from_fj(3_250).pj_string(), "3.25");
        assert_eq!(Energy::from_fj(1).pj_string(), "0.001");
        assert_eq!(Energy::ZERO.pj_string(), "0");
    }

    #[test]
    fn from_pj_rounds_to_nearest_fj() {
        assert_eq!(Energy::from_pj_f64(800.0).fj(), 800_000);
        assert_eq!(Energy::from_pj_f64(0.0004).fj(), 0);
        assert_eq!(Energy::from_pj_f64(0.0006).fj(), 1);
    }
}
