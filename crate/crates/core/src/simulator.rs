//! Desk-scale benchmark harness: synthetic items and pre-orders, noisy
//! simulated annotators, all-human baselines and correlation scoring.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::metrics::{kendall_tau_b, pearson, spearman};
use crate::preorder::{ItemLevels, ItemRecord, SimilarityTable, DEFAULT_TAU, MAX_DEPTH};
use crate::rating::Outcome;
use crate::rng::SplitMix64;
use crate::session::{Session, SessionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Probability that a non-tied answer is flipped.
    pub flip_probability: f64,
    /// Ground-truth distance at or below which the answer is `Equal`.
    pub tie_threshold: f64,
    pub rng_seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            flip_probability: 0.0,
            tie_threshold: 0.0,
            rng_seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.flip_probability) {
            return input(format!("flip probability must lie in [0, 0.5), got {}", self.flip_probability));
        }
        if !(self.tie_threshold >= 0.0) {
            return input("tie threshold must be >= 0");
        }
        Ok(())
    }
}

/// Stand-in for a human annotator who answers from ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedAnnotator {
    cfg: OracleConfig,
    rng: SplitMix64,
}

impl SimulatedAnnotator {
    pub fn new(cfg: OracleConfig) -> Result<Self> {
        cfg.validate()?;
        let rng = SplitMix64::new(cfg.rng_seed);
        Ok(Self { cfg, rng })
    }

    /// Answers for two ground-truth values; higher truth ranks first.
    pub fn judge(&mut self, left: f64, right: f64) -> Outcome {
        if (left - right).abs() <= self.cfg.tie_threshold {
            return Outcome::Equal;
        }
        let truthful = if left > right { Outcome::LeftFirst } else { Outcome::RightFirst };
        if self.cfg.flip_probability > 0.0 && self.rng.bernoulli(self.cfg.flip_probability) {
            truthful.reversed()
        } else {
            truthful
        }
    }
}

pub fn simulate_annotator(left: &ItemRecord, right: &ItemRecord, annotator: &mut SimulatedAnnotator) -> Result<Outcome> {
    match (left.ground_truth, right.ground_truth) {
        (Some(a), Some(b)) => Ok(annotator.judge(a, b)),
        _ => {
            let missing = [left, right]
                .iter()
                .filter(|it| it.ground_truth.is_none())
                .map(|it| it.id.clone())
                .collect();
            Err(Error::UnknownItems(missing))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPreorderConfig {
    pub depth: u32,
    /// Independent flip probability of each level decision.
    pub per_level_error: f64,
    /// Similarity margin of the chosen side over the other.
    pub score_gap: f64,
    /// Similarity of the side not chosen.
    pub base_score: f64,
    pub tau: f64,
    pub rng_seed: u64,
}

impl Default for SyntheticPreorderConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            per_level_error: 0.1,
            score_gap: 0.05,
            base_score: 0.25,
            tau: DEFAULT_TAU,
            rng_seed: 0,
        }
    }
}

impl SyntheticPreorderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth as usize > MAX_DEPTH {
            return input(format!("depth must lie in 1..={MAX_DEPTH}"));
        }
        if !(0.0..0.5).contains(&self.per_level_error) {
            return input("per-level error must lie in [0, 0.5)");
        }
        if !(self.score_gap > 0.0) || !(self.tau > 0.0) {
            return input("score gap and tau must be > 0");
        }
        Ok(())
    }
}

/// Group each item would land in with perfect level decisions: its
/// ground-truth quantile scaled to `2^depth` groups. Tied values share the
/// lowest rank of their tie block.
pub fn quantile_groups(truth: &[f64], depth: u32) -> Vec<u32> {
    let n = truth.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| truth[a].total_cmp(&truth[b]));
    let mut groups = alloc::vec![0u32; n];
    let mut rank = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && truth[i] != truth[order[pos - 1]] {
            rank = pos;
        }
        groups[i] = ((rank as u64) << depth).checked_div(n as u64).unwrap_or(0) as u32;
    }
    groups
}

/// Similarity records that mimic a zero-shot classifier with a known
/// per-level error rate.
pub fn synthesize_similarities(items: &[ItemRecord], cfg: &SyntheticPreorderConfig) -> Result<SimilarityTable> {
    cfg.validate()?;
    let truth: Vec<f64> = items
        .iter()
        .map(|it| it.ground_truth.ok_or_else(|| Error::UnknownItems(alloc::vec![it.id.clone()])))
        .collect::<Result<_>>()?;
    let (lo, hi) = truth
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
    if !(hi > lo) {
        return input("ground truth range is degenerate; all values are equal");
    }
    let groups = quantile_groups(&truth, cfg.depth);
    let mut rng = SplitMix64::new(cfg.rng_seed);
    let mut out = BTreeMap::new();
    for (item, &g) in items.iter().zip(&groups) {
        let levels = (0..cfg.depth)
            .map(|level| {
                let mut bit = (g >> level) & 1;
                if rng.bernoulli(cfg.per_level_error) {
                    bit ^= 1;
                }
                let (chosen, other) = (cfg.base_score + cfg.score_gap, cfg.base_score);
                if bit == 1 { [other, chosen] } else { [chosen, other] }
            })
            .collect();
        out.insert(item.id.clone(), ItemLevels { levels });
    }
    Ok(SimilarityTable {
        tau: cfg.tau,
        items: out,
    })
}

/// `n` items with ids `item-0000`, ... and distinct ground truth drawn
/// uniformly from `[0, 100)`.
pub fn synthetic_items(n: usize, seed: u64) -> Vec<ItemRecord> {
    let mut rng = SplitMix64::new(seed);
    let mut seen = alloc::collections::BTreeSet::new();
    let mut items = Vec::with_capacity(n);
    while items.len() < n {
        let y = rng.uniform(0.0, 100.0);
        if seen.insert(y.to_bits()) {
            let id = format!("item-{:04}", items.len());
            let display_ref = format!("{id}.png");
            items.push(ItemRecord::new(id, display_ref, Some(y)));
        }
    }
    items
}

/// Result of driving one session to completion with a simulated annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedRun {
    pub human: u64,
    pub auto: u64,
    /// Item indices (into the session's id-sorted table), best first.
    pub ranking: Vec<usize>,
    pub spearman: f64,
    pub kendall_tau_b: f64,
    /// Final Elo ratings against ground truth; `None` when undefined.
    pub pearson: Option<f64>,
}

/// Answers every human request of `session` until it completes.
pub fn drive_session(session: &mut Session, annotator: &mut SimulatedAnnotator) -> Result<()> {
    let mut t = 0u64;
    while let Some(req) = session.pending() {
        let (id, l, r) = (req.request_id, req.left, req.right);
        let outcome = simulate_annotator(&session.items[l], &session.items[r], annotator)?;
        t += 1;
        session.submit(id, outcome, Some(t))?;
    }
    Ok(())
}

/// Correlations of a best-first ranking with ground truth.
pub fn score_ranking(session: &Session) -> Result<(f64, f64, Option<f64>)> {
    let order = session.sorter.ranking()?;
    let n = order.len();
    let truth: Vec<f64> = order
        .iter()
        .map(|&i| session.items[i].ground_truth.ok_or_else(|| Error::UnknownItems(alloc::vec![session.items[i].id.clone()])))
        .collect::<Result<_>>()?;
    let score: Vec<f64> = (0..n).map(|pos| (n - pos) as f64).collect();
    let ratings: Vec<f64> = order.iter().map(|&i| session.elo.ratings[i]).collect();
    Ok((
        spearman(&score, &truth)?,
        kendall_tau_b(&score, &truth)?,
        pearson(&ratings, &truth).ok(),
    ))
}

pub fn simulate_session(
    items: &[ItemRecord],
    sims: &SimilarityTable,
    config: SessionConfig,
    oracle: OracleConfig,
) -> Result<(Session, SimulatedRun)> {
    let mut session = Session::create(items, sims, config)?;
    let mut annotator = SimulatedAnnotator::new(oracle)?;
    drive_session(&mut session, &mut annotator)?;
    let (spearman, kendall_tau_b, pearson) = score_ranking(&session)?;
    let run = SimulatedRun {
        human: session.sorter.stats.human,
        auto: session.sorter.stats.auto,
        ranking: session.sorter.ranking()?.to_vec(),
        spearman,
        kendall_tau_b,
        pearson,
    };
    Ok((session, run))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n: usize,
    pub seeds: Vec<u64>,
    pub oracle: OracleConfig,
    pub preorder: SyntheticPreorderConfig,
    pub session: SessionConfig,
}

impl BenchConfig {
    pub fn new(n: usize, seeds: Vec<u64>) -> Self {
        Self {
            n,
            seeds,
            oracle: OracleConfig::default(),
            preorder: SyntheticPreorderConfig::default(),
            session: SessionConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return input("benchmark needs n >= 2");
        }
        if self.seeds.is_empty() {
            return input("benchmark needs at least one seed");
        }
        self.oracle.validate()?;
        self.preorder.validate()?;
        self.session.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub all_human_count: u64,
    pub ezsort_human: u64,
    pub ezsort_auto: u64,
    pub human_fraction: f64,
    pub spearman: f64,
    pub kendall_tau_b: f64,
    pub pearson: Option<f64>,
    pub baseline_spearman: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation; zero for a single value.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            libm::sqrt(v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0))
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: u64,
    pub exhaustive_count: u64,
    pub all_human_mergesort_count: MeanStd,
    pub ezsort_human_count: MeanStd,
    pub ezsort_auto_count: MeanStd,
    pub human_fraction: f64,
    pub spearman: MeanStd,
    pub kendall_tau_b: MeanStd,
    pub pearson: MeanStd,
    pub seeds_used: Vec<u64>,
    pub per_seed: Vec<SeedResult>,
}

/// Number of pairs an exhaustive design would ask about.
pub fn exhaustive_count(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

const STREAM_TRUTH: u64 = 1;
const STREAM_PREORDER: u64 = 2;
const STREAM_ELO: u64 = 3;
const STREAM_ORACLE: u64 = 4;

/// Inputs for one benchmark seed, each drawn from its own stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedInputs {
    pub items: Vec<ItemRecord>,
    pub similarities: SimilarityTable,
    pub session: SessionConfig,
    pub oracle: OracleConfig,
}

pub fn seed_inputs(cfg: &BenchConfig, seed: u64) -> Result<SeedInputs> {
    let items = synthetic_items(cfg.n, SplitMix64::derive(seed, STREAM_TRUTH));
    let preorder = SyntheticPreorderConfig {
        rng_seed: SplitMix64::derive(seed, STREAM_PREORDER),
        ..cfg.preorder.clone()
    };
    let similarities = synthesize_similarities(&items, &preorder)?;
    let mut session = cfg.session.clone();
    session.elo_init.rng_seed = SplitMix64::derive(seed, STREAM_ELO);
    let oracle = OracleConfig {
        rng_seed: SplitMix64::derive(seed, STREAM_ORACLE),
        ..cfg.oracle.clone()
    };
    Ok(SeedInputs {
        items,
        similarities,
        session,
        oracle,
    })
}

/// Runs the all-human baseline and the routed pipeline for one seed. Both
/// share the items, the pre-order and the initial ratings.
pub fn run_seed(cfg: &BenchConfig, seed: u64) -> Result<SeedResult> {
    let SeedInputs {
        items,
        similarities: sims,
        session: session_cfg,
        oracle,
    } = seed_inputs(cfg, seed)?;

    let mut baseline_cfg = session_cfg.clone();
    baseline_cfg.threshold.theta0 = 0.0;
    let (_, baseline) = simulate_session(&items, &sims, baseline_cfg, oracle.clone())?;
    let (_, run) = simulate_session(&items, &sims, session_cfg, oracle)?;
    let total = run.human + run.auto;
    Ok(SeedResult {
        seed,
        all_human_count: baseline.human,
        ezsort_human: run.human,
        ezsort_auto: run.auto,
        human_fraction: if total == 0 { 0.0 } else { run.human as f64 / total as f64 },
        spearman: run.spearman,
        kendall_tau_b: run.kendall_tau_b,
        pearson: run.pearson,
        baseline_spearman: baseline.spearman,
    })
}

impl BenchReport {
    /// Aggregates per-seed results, kept in the order given.
    pub fn from_results(n: usize, per_seed: Vec<SeedResult>) -> Self {
        let human = MeanStd::of(per_seed.iter().map(|r| r.ezsort_human as f64));
        let auto = MeanStd::of(per_seed.iter().map(|r| r.ezsort_auto as f64));
        let denom = human.mean + auto.mean;
        Self {
            n: n as u64,
            exhaustive_count: exhaustive_count(n as u64),
            all_human_mergesort_count: MeanStd::of(per_seed.iter().map(|r| r.all_human_count as f64)),
            ezsort_human_count: human,
            ezsort_auto_count: auto,
            human_fraction: if denom > 0.0 { human.mean / denom } else { 0.0 },
            spearman: MeanStd::of(per_seed.iter().map(|r| r.spearman)),
            kendall_tau_b: MeanStd::of(per_seed.iter().map(|r| r.kendall_tau_b)),
            pearson: MeanStd::of(per_seed.iter().filter_map(|r| r.pearson)),
            seeds_used: per_seed.iter().map(|r| r.seed).collect(),
            per_seed,
        }
    }
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let per_seed = cfg
        .seeds
        .iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport::from_results(cfg.n, per_seed))
}
