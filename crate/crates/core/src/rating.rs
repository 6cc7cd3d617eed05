//! Elo math, KL-based comparison priority and the adaptive routing
//! threshold.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::preorder::PreorderResult;

pub const DEFAULT_K_FACTOR: f64 = 32.0;

/// Result of comparing `left` against `right`. `LeftFirst` means the left
/// item ranks higher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    LeftFirst,
    RightFirst,
    Equal,
}

impl Outcome {
    /// Score credited to the left item.
    pub fn left_score(self) -> f64 {
        match self {
            Outcome::LeftFirst => 1.0,
            Outcome::RightFirst => 0.0,
            Outcome::Equal => 0.5,
        }
    }

    /// Merge direction; `Equal` keeps the left item first.
    pub fn takes_left(self) -> bool {
        !matches!(self, Outcome::RightFirst)
    }

    pub fn reversed(self) -> Self {
        match self {
            Outcome::LeftFirst => Outcome::RightFirst,
            Outcome::RightFirst => Outcome::LeftFirst,
            Outcome::Equal => Outcome::Equal,
        }
    }
}

/// Live Elo ratings, indexed like the session's item table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloState {
    pub ratings: Vec<f64>,
    pub k_factor: f64,
}

impl EloState {
    pub fn new(ratings: Vec<f64>, k_factor: f64) -> Self {
        Self { ratings, k_factor }
    }

    pub fn from_preorder(pre: &[PreorderResult], k_factor: f64) -> Self {
        Self::new(pre.iter().map(|p| p.initial_rating).collect(), k_factor)
    }

    pub fn rating(&self, item: usize) -> Result<f64> {
        match self.ratings.get(item) {
            Some(r) => Ok(*r),
            None => input(format!("unknown item index {item}")),
        }
    }

    pub fn sum(&self) -> f64 {
        self.ratings.iter().sum()
    }
}

/// Probability that an item rated `r_i` beats one rated `r_j`.
pub fn expected_score(r_i: f64, r_j: f64) -> f64 {
    1.0 / (1.0 + libm::pow(10.0, (r_j - r_i) / 400.0))
}

/// KL divergence (nats) of the Bernoulli(p) outcome distribution from the
/// uniform one. Zero at p = 0.5, approaching ln 2 at the extremes.
pub fn info_gain(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return input(format!("probability must lie strictly inside (0, 1), got {p}"));
    }
    let q = 1.0 - p;
    Ok(p * libm::log(p / 0.5) + q * libm::log(q / 0.5))
}

/// `1 - priority / ln 2`, clamped into `[0, 1]`.
pub fn uncertainty_from_priority(priority: f64) -> f64 {
    if priority.is_nan() {
        // unknown priority: treat as fully uncertain so a human decides
        return 1.0;
    }
    (1.0 - priority / LN_2).clamp(0.0, 1.0)
}

/// Multipliers applied on top of the information gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityWeights {
    /// Applied when the two items sit in different buckets.
    pub cross_bucket: f64,
    /// `φ = confidence_offset - avg_conf`.
    pub confidence_offset: f64,
}

impl Default for PriorityWeights {
    fn default() -> Self {
        Self {
            cross_bucket: 1.2,
            confidence_offset: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAssessment {
    pub left: usize,
    pub right: usize,
    /// Probability that `left` beats `right` under the live ratings.
    pub p_left: f64,
    pub info_gain: f64,
    pub priority: f64,
    pub uncertainty: f64,
    pub cross_bucket: bool,
    pub avg_conf: f64,
}

/// Scores a candidate comparison.
///
/// The information gain is computed from the favourite's win probability so
/// that the assessment of `(i, j)` and `(j, i)` is bitwise identical apart
/// from `p_left`.
pub fn assess_pair(
    left: usize,
    right: usize,
    elo: &EloState,
    pre: &[PreorderResult],
    weights: &PriorityWeights,
) -> Result<PairAssessment> {
    let (r_l, r_r) = (elo.rating(left)?, elo.rating(right)?);
    let (pl, pr) = match (pre.get(left), pre.get(right)) {
        (Some(a), Some(b)) => (a, b),
        _ => return input(format!("no pre-order result for item index {left} or {right}")),
    };
    let p_left = expected_score(r_l, r_r);
    let p_fav = expected_score(r_l.max(r_r), r_l.min(r_r));
    // p_fav only reaches 1.0 for rating gaps beyond ~6000 points
    let info_gain = info_gain(p_fav.clamp(0.5, 1.0 - f64::EPSILON))?;
    let cross_bucket = pl.bucket != pr.bucket;
    let gamma = if cross_bucket { weights.cross_bucket } else { 1.0 };
    let avg_conf = (pl.confidence + pr.confidence) / 2.0;
    let phi = weights.confidence_offset - avg_conf;
    let priority = info_gain * gamma * phi;
    Ok(PairAssessment {
        left,
        right,
        p_left,
        info_gain,
        priority,
        uncertainty: uncertainty_from_priority(priority),
        cross_bucket,
        avg_conf,
    })
}

/// Standard Elo update for `left` vs `right`. Applied as a single signed
/// transfer so the rating sum is preserved.
pub fn elo_update(elo: &mut EloState, left: usize, right: usize, outcome: Outcome) -> Result<()> {
    let (r_l, r_r) = (elo.rating(left)?, elo.rating(right)?);
    if left == right {
        return input("cannot compare an item with itself");
    }
    let delta = elo.k_factor * (outcome.left_score() - expected_score(r_l, r_r));
    elo.ratings[left] = r_l + delta;
    elo.ratings[right] = r_r - delta;
    Ok(())
}

/// Direction of the accuracy exponent in the threshold schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentMode {
    /// `β^accuracy`: higher accuracy lowers the threshold.
    #[default]
    AsWritten,
    /// `β^-accuracy`: higher accuracy raises the threshold.
    Inverted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub theta0: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Human judgments per threshold cycle.
    pub batch_size: u32,
    /// Completed merges per threshold cycle.
    pub merge_cadence: u32,
    pub exponent_mode: ExponentMode,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            theta0: 0.15,
            alpha: 0.3,
            beta: 0.9,
            batch_size: 10,
            merge_cadence: 10,
            exponent_mode: ExponentMode::AsWritten,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta0 >= 0.0) || !self.theta0.is_finite() {
            return input("theta0 must be finite and >= 0");
        }
        if !self.alpha.is_finite() {
            return input("alpha must be finite");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return input("beta must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.merge_cadence == 0 {
            return input("batch_size and merge_cadence must be at least 1");
        }
        Ok(())
    }
}

/// Adaptive threshold controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdState {
    pub config: ThresholdConfig,
    pub cycle: u64,
    pub accuracy: f64,
    pub comparisons_done: u64,
    pub comparisons_total_estimate: u64,
    pub judgments_total: u64,
    pub agreements_total: u64,
    pub batch_judgments: u64,
    pub batch_agreements: u64,
    pub batch_merges: u64,
}

/// Upper-bound schedule size used as the budget: `n * ceil(log2 n)`.
pub fn comparisons_budget(n: usize) -> u64 {
    if n < 2 {
        return 0;
    }
    let levels = usize::BITS - (n - 1).leading_zeros();
    n as u64 * levels as u64
}

impl ThresholdState {
    pub fn new(config: ThresholdConfig, comparisons_total_estimate: u64) -> Self {
        Self {
            config,
            cycle: 0,
            accuracy: 0.0,
            comparisons_done: 0,
            comparisons_total_estimate,
            judgments_total: 0,
            agreements_total: 0,
            batch_judgments: 0,
            batch_agreements: 0,
            batch_merges: 0,
        }
    }

    pub fn for_items(config: ThresholdConfig, n: usize) -> Self {
        Self::new(config, comparisons_budget(n))
    }

    pub fn remaining_fraction(&self) -> f64 {
        let total = self.comparisons_total_estimate;
        if total == 0 {
            return 0.0;
        }
        total.saturating_sub(self.comparisons_done) as f64 / total as f64
    }

    /// Records one human answer; `agreed` is whether it matched the Elo
    /// prediction at query time.
    pub fn record_human(&mut self, agreed: bool) {
        self.batch_judgments += 1;
        if agreed {
            self.batch_agreements += 1;
        }
    }

    pub fn record_merge(&mut self) {
        self.batch_merges += 1;
    }

    /// Closes the current cycle when either batch counter reached its
    /// cadence. Returns whether a cycle was closed.
    pub fn maybe_cycle(&mut self) -> bool {
        let due = self.batch_judgments >= self.config.batch_size as u64
            || self.batch_merges >= self.config.merge_cadence as u64;
        if due {
            let (j, a) = (self.batch_judgments, self.batch_agreements);
            update_threshold_cycle(self, j, a);
        }
        due
    }
}

/// `θ0 (1 + α remaining/total) β^accuracy` (or `β^-accuracy` in inverted mode).
pub fn current_threshold(ts: &ThresholdState) -> f64 {
    let cfg = &ts.config;
    let exponent = match cfg.exponent_mode {
        ExponentMode::AsWritten => ts.accuracy,
        ExponentMode::Inverted => -ts.accuracy,
    };
    cfg.theta0 * (1.0 + cfg.alpha * ts.remaining_fraction()) * libm::pow(cfg.beta, exponent)
}

/// Advances the cycle counter and folds a batch into the cumulative
/// agreement rate. An empty batch leaves the accuracy untouched.
pub fn update_threshold_cycle(ts: &mut ThresholdState, judgments: u64, agreements: u64) {
    debug_assert!(agreements <= judgments);
    ts.cycle += 1;
    ts.judgments_total += judgments;
    ts.agreements_total += agreements.min(judgments);
    if ts.judgments_total > 0 {
        ts.accuracy = ts.agreements_total as f64 / ts.judgments_total as f64;
    }
    ts.batch_judgments = 0;
    ts.batch_agreements = 0;
    ts.batch_merges = 0;
}
