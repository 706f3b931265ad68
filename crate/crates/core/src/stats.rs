//! Closed-form marking statistics.
//!
//! `f_i` is the fraction of packets whose surviving mark was started by
//! `r_i`; `f_0` is the unmarked fraction. For hop-dependent schemes router
//! `r_i` uses `q(i)`, the probability it would apply to a mark started at the
//! source.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::marking::MarkingConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkingStats {
    pub d: usize,
    /// `f[0]` is the unmarked fraction, `f[i]` the share last marked by `r_i`.
    pub f: Vec<f64>,
}

impl MarkingStats {
    pub fn f0(&self) -> f64 {
        self.f[0]
    }

    pub fn f1(&self) -> f64 {
        self.f[1]
    }

    /// `1 - f_0`, summed from the marked shares to avoid cancellation when
    /// marking is rare.
    pub fn marked_fraction(&self) -> f64 {
        self.f[1..].iter().sum()
    }

    /// `(1 - f_0) / f_1`: marked packets received per packet marked at the source.
    pub fn ratio(&self) -> Result<f64> {
        if self.f1() <= 0.0 {
            return Err(Error::DegenerateScheme);
        }
        Ok(self.marked_fraction() / self.f1())
    }
}

/// Per-position marking probabilities `q_1 .. q_d`.
pub fn position_probabilities(config: &MarkingConfig, d: usize) -> Vec<f64> {
    (1..=d).map(|i| config.probability_at(i, i)).collect()
}

pub fn fractions(config: &MarkingConfig, d: usize) -> MarkingStats {
    assert!(d >= 1, "path length must be positive");
    let q = position_probabilities(config, d);
    let mut f = vec![0.0; d + 1];
    // survive = prod_{j > i} (1 - q_j)
    let mut survive = 1.0;
    for i in (1..=d).rev() {
        f[i] = q[i - 1] * survive;
        survive *= 1.0 - q[i - 1];
    }
    f[0] = survive;
    MarkingStats { d, f }
}

/// `ceil` that treats values within 1e-9 (relative) of an integer as that
/// integer, so float noise in a ratio like `q/q` does not round up.
pub fn ceil_tolerant(v: f64) -> f64 {
    let n = v.round();
    if (v - n).abs() <= 1e-9 * v.abs().max(1.0) {
        n
    } else {
        v.ceil()
    }
}

/// `d * ceil((1 - f_0) / f_1)`: average marked packets for a full traceback.
pub fn avg_marked_for_full_trace(stats: &MarkingStats) -> Result<f64> {
    Ok(stats.d as f64 * ceil_tolerant(stats.ratio()?))
}

/// The `(f_0', f_1')` pair among path lengths `d-1`, `d`, `d+1` that
/// maximizes `(1 - f_0') / f_1'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstCase {
    pub d_prime: usize,
    pub f0: f64,
    pub f1: f64,
    ratio: f64,
}

impl WorstCase {
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Marked-packet buffer `l * ceil(ratio)` for the randomized decoder.
    pub fn buffer_len(&self, l: usize) -> usize {
        l * ceil_tolerant(self.ratio()) as usize
    }
}

/// For `d = 1` only lengths 1 and 2 are considered.
pub fn worst_case_ratio(config: &MarkingConfig, d: usize) -> Result<WorstCase> {
    assert!(d >= 1, "path length must be positive");
    let mut best: Option<WorstCase> = None;
    for d_prime in d.saturating_sub(1).max(1)..=d + 1 {
        let s = fractions(config, d_prime);
        let r = s.ratio()?;
        if best.is_none_or(|b| r > b.ratio()) {
            best = Some(WorstCase {
                d_prime,
                f0: s.f0(),
                f1: s.f1(),
                ratio: r,
            });
        }
    }
    Ok(best.expect("at least one hypothesis"))
}
