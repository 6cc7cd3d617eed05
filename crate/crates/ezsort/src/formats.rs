//! On-disk and wire formats: `items.jsonl`, `similarities.json`,
//! `prompt_tree.json`, and benchmark report renderings.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use ezsort_core::preorder::{classify_level, MAX_DEPTH};
use ezsort_core::{BenchReport, ItemRecord, SimilarityTable};

/// A parse or validation problem in an input file, pinned to a line and
/// field where possible.
#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize)]
#[error("{file}{}{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default(), field.as_ref().map(|f| format!(" field `{f}`")).unwrap_or_default())]
pub struct FormatError {
    pub file: &'static str,
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl FormatError {
    fn new(file: &'static str, message: impl Into<String>) -> Self {
        Self {
            file,
            line: None,
            field: None,
            message: message.into(),
        }
    }

    fn at(mut self, line: usize) -> Self {
        self.line = Some(line);
        self
    }

    fn field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }
}

#[derive(Deserialize)]
struct ItemLine {
    id: String,
    #[serde(default)]
    display_ref: String,
    #[serde(default)]
    ground_truth: Option<f64>,
}

/// Parses `items.jsonl`: one `{"id", "display_ref", "ground_truth"}` object
/// per line. Blank lines are skipped. Duplicate ids are rejected.
pub fn parse_items_jsonl(content: &str) -> Result<Vec<ItemRecord>, FormatError> {
    const FILE: &str = "items.jsonl";
    let mut items = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in content.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(line);
        let parsed: ItemLine = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let err = FormatError::new(FILE, e.inner().to_string()).at(line_no);
            if path == "." { err } else { err.field(path) }
        })?;
        if parsed.id.is_empty() {
            return Err(FormatError::new(FILE, "id must not be empty").at(line_no).field("id"));
        }
        if let Some(y) = parsed.ground_truth {
            if !y.is_finite() {
                return Err(FormatError::new(FILE, "ground_truth must be finite").at(line_no).field("ground_truth"));
            }
        }
        if !seen.insert(parsed.id.clone()) {
            return Err(FormatError::new(FILE, format!("duplicate item id `{}`", parsed.id))
                .at(line_no)
                .field("id"));
        }
        items.push(ItemRecord::new(parsed.id, parsed.display_ref, parsed.ground_truth));
    }
    if items.is_empty() {
        return Err(FormatError::new(FILE, "no items found"));
    }
    Ok(items)
}

pub fn write_items_jsonl(items: &[ItemRecord]) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("items serialize"));
        out.push('\n');
    }
    out
}

/// Parses and validates `similarities.json`.
pub fn parse_similarities(content: &str) -> Result<SimilarityTable, FormatError> {
    let de = &mut serde_json::Deserializer::from_str(content);
    let table: SimilarityTable = serde_path_to_error::deserialize(de).map_err(|e| {
        let line = e.inner().line();
        let path = e.path().to_string();
        let err = FormatError::new("similarities.json", e.inner().to_string()).at(line);
        if path == "." { err } else { err.field(path) }
    })?;
    validate_similarities(&table)?;
    Ok(table)
}

pub fn validate_similarities(table: &SimilarityTable) -> Result<(), FormatError> {
    const FILE: &str = "similarities.json";
    if !(table.tau > 0.0) || !table.tau.is_finite() {
        return Err(FormatError::new(FILE, "tau must be finite and > 0").field("tau"));
    }
    for (id, rec) in &table.items {
        let depth = rec.levels.len();
        if depth == 0 || depth > MAX_DEPTH {
            return Err(FormatError::new(FILE, format!("level count {depth} outside 1..={MAX_DEPTH}"))
                .field(format!("items.{id}.levels")));
        }
        for (l, pair) in rec.levels.iter().enumerate() {
            if let Err(e) = classify_level(*pair, table.tau) {
                return Err(FormatError::new(FILE, e.to_string()).field(format!("items.{id}.levels[{l}]")));
            }
            // confidence is at least 0.5 by construction, so anything
            // outside the cosine range is the only remaining check
            if pair.iter().any(|s| !(-1.0..=1.0).contains(s)) {
                return Err(FormatError::new(FILE, "cosine similarity outside [-1, 1]")
                    .field(format!("items.{id}.levels[{l}]")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptNode {
    pub level: u32,
    pub path: Vec<u8>,
    pub prompts: [String; 2],
}

/// Binary prompt hierarchy consumed by the similarity extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTree {
    pub domain: String,
    pub nodes: Vec<PromptNode>,
}

impl PromptTree {
    pub fn parse(content: &str) -> Result<Self, FormatError> {
        let de = &mut serde_json::Deserializer::from_str(content);
        let tree: PromptTree = serde_path_to_error::deserialize(de).map_err(|e| {
            FormatError::new("prompt_tree.json", e.inner().to_string()).field(e.path().to_string())
        })?;
        tree.validate()?;
        Ok(tree)
    }

    /// Each node sits at `level = path.len() + 1`, paths are unique, every
    /// non-root node's parent exists, and both prompts are non-empty.
    pub fn validate(&self) -> Result<(), FormatError> {
        const FILE: &str = "prompt_tree.json";
        let mut paths = BTreeSet::new();
        for (i, node) in self.nodes.iter().enumerate() {
            let field = format!("nodes[{i}]");
            if node.level as usize != node.path.len() + 1 {
                return Err(FormatError::new(FILE, "level must equal path length + 1").field(field));
            }
            if node.path.iter().any(|&b| b > 1) {
                return Err(FormatError::new(FILE, "path entries must be 0 or 1").field(field));
            }
            if node.prompts.iter().any(|p| p.trim().is_empty()) {
                return Err(FormatError::new(FILE, "prompts must be non-empty").field(field));
            }
            if !paths.insert(node.path.clone()) {
                return Err(FormatError::new(FILE, "duplicate node path").field(field));
            }
        }
        if !self.nodes.is_empty() && !paths.contains(&Vec::new()) {
            return Err(FormatError::new(FILE, "missing root node (level 1, empty path)"));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some((_, parent)) = node.path.split_last() {
                if !paths.contains(parent) {
                    return Err(FormatError::new(FILE, "parent node missing").field(format!("nodes[{i}]")));
                }
            }
        }
        Ok(())
    }

    /// Whether an item's level decisions follow nodes that exist in the
    /// tree at every level.
    pub fn supports_path(&self, decisions: &[u8]) -> bool {
        let paths: BTreeSet<&[u8]> = self.nodes.iter().map(|n| n.path.as_slice()).collect();
        (0..decisions.len()).all(|l| paths.contains(&decisions[..l]))
    }
}

/// Aligned text rendering of a benchmark report.
pub fn report_table(report: &BenchReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n = {}   seeds = {}", report.n, report.seeds_used.len());
    let _ = writeln!(s, "{:<28} {:>12} {:>10}", "metric", "mean", "std");
    let row = |s: &mut String, name: &str, mean: f64, std: f64| {
        let _ = writeln!(s, "{name:<28} {mean:>12.4} {std:>10.4}");
    };
    let _ = writeln!(s, "{:<28} {:>12} {:>10}", "exhaustive comparisons", report.exhaustive_count, "-");
    row(&mut s, "all-human mergesort", report.all_human_mergesort_count.mean, report.all_human_mergesort_count.std);
    row(&mut s, "ezsort human queries", report.ezsort_human_count.mean, report.ezsort_human_count.std);
    row(&mut s, "ezsort auto resolutions", report.ezsort_auto_count.mean, report.ezsort_auto_count.std);
    let _ = writeln!(s, "{:<28} {:>12.4} {:>10}", "human fraction", report.human_fraction, "-");
    row(&mut s, "spearman", report.spearman.mean, report.spearman.std);
    row(&mut s, "kendall tau-b", report.kendall_tau_b.mean, report.kendall_tau_b.std);
    row(&mut s, "pearson (rating)", report.pearson.mean, report.pearson.std);
    s
}

/// One CSV row per seed.
pub fn report_csv(report: &BenchReport) -> String {
    let mut s = String::from(
        "seed,n,all_human_count,ezsort_human,ezsort_auto,human_fraction,spearman,kendall_tau_b,pearson,baseline_spearman\n",
    );
    for r in &report.per_seed {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.6},{:.6},{:.6},{},{:.6}",
            r.seed,
            report.n,
            r.all_human_count,
            r.ezsort_human,
            r.ezsort_auto,
            r.human_fraction,
            r.spearman,
            r.kendall_tau_b,
            r.pearson.map(|p| format!("{p:.6}")).unwrap_or_default(),
            r.baseline_spearman
        );
    }
    s
}
