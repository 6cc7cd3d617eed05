//! Zero-shot pre-ordering: from per-level similarity pairs to group
//! indices, coarse buckets, item confidences and initial Elo ratings.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::rng::SplitMix64;

/// Deepest hierarchy accepted for a single item.
pub const MAX_DEPTH: usize = 16;

/// Default softmax temperature for level confidences.
pub const DEFAULT_TAU: f64 = 0.1;

/// One rankable item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    #[serde(default)]
    pub display_ref: String,
    #[serde(default)]
    pub ground_truth: Option<f64>,
}

impl ItemRecord {
    pub fn new(id: impl Into<String>, display_ref: impl Into<String>, ground_truth: Option<f64>) -> Self {
        Self {
            id: id.into(),
            display_ref: display_ref.into(),
            ground_truth,
        }
    }
}

/// Similarity pairs for every item, keyed by item id. The number of levels
/// recorded for an item is its hierarchy depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTable {
    pub tau: f64,
    pub items: BTreeMap<String, ItemLevels>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemLevels {
    pub levels: Vec<[f64; 2]>,
}

/// Outcome of one binary level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelDecision {
    pub decision: u8,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloInitConfig {
    pub bucket_count: u32,
    pub rating_base_min: f64,
    pub rating_base_max: f64,
    pub noise_halfwidth: f64,
    pub rng_seed: u64,
}

impl Default for EloInitConfig {
    fn default() -> Self {
        Self {
            bucket_count: 5,
            rating_base_min: 1200.0,
            rating_base_max: 1800.0,
            noise_halfwidth: 75.0,
            rng_seed: 0,
        }
    }
}

impl EloInitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bucket_count == 0 {
            return input("bucket_count must be at least 1");
        }
        if !self.rating_base_min.is_finite() || !self.rating_base_max.is_finite() {
            return input("rating base bounds must be finite");
        }
        if self.bucket_count > 1 && self.rating_base_min >= self.rating_base_max {
            return input("rating_base_min must be below rating_base_max when bucket_count > 1");
        }
        if !(self.noise_halfwidth >= 0.0) || !self.noise_halfwidth.is_finite() {
            return input("noise_halfwidth must be a finite value >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreorderResult {
    pub item_id: String,
    pub depth: u32,
    pub group_index: u32,
    pub bucket: u32,
    pub confidence: f64,
    pub initial_rating: f64,
}

/// Binary decision and its softmax confidence at temperature `tau`.
///
/// Equal scores resolve to decision 0 with confidence 0.5.
pub fn classify_level(scores: [f64; 2], tau: f64) -> Result<LevelDecision> {
    if !(tau > 0.0) || !tau.is_finite() {
        return input(format!("temperature must be finite and > 0, got {tau}"));
    }
    let [s0, s1] = scores;
    if !s0.is_finite() || !s1.is_finite() {
        return input(format!("non-finite similarity score in [{s0}, {s1}]"));
    }
    let decision = if s1 > s0 { 1 } else { 0 };
    let (hi, lo) = if decision == 1 { (s1, s0) } else { (s0, s1) };
    // exp(hi/τ) / (exp(hi/τ) + exp(lo/τ)) with the max subtracted
    let confidence = 1.0 / (1.0 + libm::exp((lo - hi) / tau));
    Ok(LevelDecision { decision, confidence })
}

/// Little-endian packing of level decisions: level 1 contributes 2^0.
pub fn group_index(decisions: &[u8]) -> Result<u32> {
    if decisions.is_empty() {
        return input("decision list is empty");
    }
    if decisions.len() > MAX_DEPTH {
        return input(format!("depth {} exceeds maximum {MAX_DEPTH}", decisions.len()));
    }
    decisions.iter().enumerate().try_fold(0u32, |acc, (level, &c)| match c {
        0 => Ok(acc),
        1 => Ok(acc | (1 << level)),
        other => input(format!("decision must be 0 or 1, got {other}")),
    })
}

/// Merges one of the `2^depth` fine groups into one of `k` buckets:
/// `floor(g * k / 2^depth)`.
pub fn bucket_of(group: u32, depth: u32, k: u32) -> Result<u32> {
    if depth == 0 || depth as usize > MAX_DEPTH {
        return input(format!("depth must be in 1..={MAX_DEPTH}, got {depth}"));
    }
    if k == 0 {
        return input("bucket count must be at least 1");
    }
    let groups = 1u64 << depth;
    if group as u64 >= groups {
        return input(format!("group index {group} out of range for depth {depth}"));
    }
    Ok(((group as u64 * k as u64) >> depth) as u32)
}

/// Mean of per-level confidences.
pub fn item_confidence(confidences: &[f64]) -> Result<f64> {
    if confidences.is_empty() {
        return input("no level confidences to aggregate");
    }
    if let Some(bad) = confidences.iter().find(|c| !(0.5..=1.0).contains(*c)) {
        return input(format!("level confidence {bad} outside [0.5, 1]"));
    }
    Ok(confidences.iter().sum::<f64>() / confidences.len() as f64)
}

/// Linear base rating for a bucket; bucket 0 sits at the minimum and
/// bucket k-1 at the maximum. A single bucket sits at the midpoint.
pub fn rating_base(bucket: u32, cfg: &EloInitConfig) -> Result<f64> {
    if bucket >= cfg.bucket_count {
        return input(format!("bucket {bucket} out of range for k = {}", cfg.bucket_count));
    }
    let (lo, hi) = (cfg.rating_base_min, cfg.rating_base_max);
    if cfg.bucket_count == 1 {
        return Ok(0.5 * (lo + hi));
    }
    Ok(lo + (hi - lo) * bucket as f64 / (cfg.bucket_count - 1) as f64)
}

/// Initial rating with an explicit noise draw `eta`.
pub fn init_rating_with_noise(bucket: u32, conf: f64, cfg: &EloInitConfig, eta: f64) -> Result<f64> {
    if !(conf > 0.0 && conf <= 1.0) {
        return input(format!("confidence must be in (0, 1], got {conf}"));
    }
    Ok(rating_base(bucket, cfg)? + eta * (1.5 - conf))
}

/// Initial rating with `eta ~ U(-δ, δ)` drawn from `rng`.
pub fn init_rating(bucket: u32, conf: f64, cfg: &EloInitConfig, rng: &mut SplitMix64) -> Result<f64> {
    // validate before consuming a draw so failed calls don't shift the stream
    rating_base(bucket, cfg)?;
    let delta = cfg.noise_halfwidth;
    let eta = rng.uniform(-delta, delta);
    init_rating_with_noise(bucket, conf, cfg, eta)
}

/// Checks that item ids are unique and that every item has exactly one
/// similarity record (and vice versa).
pub fn validate_inputs(items: &[ItemRecord], sims: &SimilarityTable) -> Result<()> {
    let mut seen = BTreeSet::new();
    for item in items {
        if item.id.is_empty() {
            return input("item id must not be empty");
        }
        if !seen.insert(item.id.as_str()) {
            return Err(Error::DuplicateItem(item.id.clone()));
        }
    }
    let mut offending: Vec<String> = items
        .iter()
        .filter(|it| !sims.items.contains_key(&it.id))
        .map(|it| it.id.clone())
        .collect();
    offending.extend(
        sims.items
            .keys()
            .filter(|id| !seen.contains(id.as_str()))
            .cloned(),
    );
    if !offending.is_empty() {
        offending.sort();
        return Err(Error::UnknownItems(offending));
    }
    for (id, rec) in &sims.items {
        let depth = rec.levels.len();
        if depth == 0 || depth > MAX_DEPTH {
            return input(format!("item {id}: level count {depth} outside 1..={MAX_DEPTH}"));
        }
    }
    Ok(())
}

/// Runs the whole pre-ordering step. Results come back in ascending id
/// order, which is also the order noise draws are taken in.
pub fn run_preorder(
    items: &[ItemRecord],
    sims: &SimilarityTable,
    cfg: &EloInitConfig,
) -> Result<Vec<PreorderResult>> {
    cfg.validate()?;
    validate_inputs(items, sims)?;
    let mut rng = SplitMix64::new(cfg.rng_seed);
    let mut ids: Vec<&str> = items.iter().map(|it| it.id.as_str()).collect();
    ids.sort_unstable();

    ids.into_iter()
        .map(|id| {
            let levels = &sims.items[id].levels;
            let mut decisions = Vec::with_capacity(levels.len());
            let mut confs = Vec::with_capacity(levels.len());
            for scores in levels {
                let lv = classify_level(*scores, sims.tau)
                    .map_err(|e| Error::Input(format!("item {id}: {e}")))?;
                decisions.push(lv.decision);
                confs.push(lv.confidence);
            }
            let depth = levels.len() as u32;
            let group_index = group_index(&decisions)?;
            let bucket = bucket_of(group_index, depth, cfg.bucket_count)?;
            let confidence = item_confidence(&confs)?;
            let initial_rating = init_rating(bucket, confidence, cfg, &mut rng)?;
            Ok(PreorderResult {
                item_id: id.into(),
                depth,
                group_index,
                bucket,
                confidence,
                initial_rating,
            })
        })
        .collect()
}
