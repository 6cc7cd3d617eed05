//! Command line driver. Exit codes: 0 success, 1 invariant or runtime
//! failure, 2 usage or input error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ezsort_core::preorder::{classify_level, run_preorder};
use ezsort_core::simulator::{score_ranking, seed_inputs, SimulatedAnnotator};
use ezsort_core::{
    BenchConfig, EloInitConfig, EventKind, ExponentMode, ItemRecord, OracleConfig, PriorityWeights, Route, Session,
    SessionConfig, SimilarityTable, SyntheticPreorderConfig, ThresholdConfig,
};

use crate::bench::{check_report, run_parallel};
use crate::formats::{parse_items_jsonl, parse_similarities, report_csv, report_table, PromptTree};
use crate::service::{self, ServiceConfig};
use crate::store::SessionStore;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Invariant(_) | CliError::Runtime(_) => 1,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

type CliResult = Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "ezsort", version, about = "Hybrid human/model pairwise ranking: benchmarks, pre-order reports, simulated sessions and the annotation service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the synthetic benchmark over many seeds and report comparison counts and rank correlations
    Bench(BenchArgs),
    /// Validate item and similarity files and print buckets and initial ratings
    Preorder(PreorderArgs),
    /// Run one headless session against a simulated annotator and print its transcript
    Simulate(SimulateArgs),
    /// Start the HTTP annotation service
    Serve(ServeArgs),
    /// Export a stored session (inputs, event log, snapshot)
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExponentArg {
    /// beta^accuracy
    AsWritten,
    /// beta^(-accuracy)
    Inverted,
}

#[derive(Debug, Clone, Args)]
pub struct EloArgs {
    /// Number of buckets k
    #[arg(long, default_value_t = 5)]
    pub k: u32,
    /// Lowest bucket base rating
    #[arg(long, default_value_t = 1200.0)]
    pub rating_min: f64,
    /// Highest bucket base rating
    #[arg(long, default_value_t = 1800.0)]
    pub rating_max: f64,
    /// Half-width delta of the uniform rating noise
    #[arg(long, default_value_t = 75.0)]
    pub noise: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    #[command(flatten)]
    pub elo: EloArgs,
    /// Elo K-factor
    #[arg(long, default_value_t = 32.0)]
    pub k_factor: f64,
    /// Base threshold theta0
    #[arg(long, default_value_t = 0.15)]
    pub theta0: f64,
    /// Remaining-work weight alpha
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    /// Accuracy decay beta
    #[arg(long, default_value_t = 0.9)]
    pub beta: f64,
    /// Sign of the accuracy exponent
    #[arg(long, value_enum, default_value_t = ExponentArg::AsWritten)]
    pub exponent_mode: ExponentArg,
    /// Human judgments per threshold cycle
    #[arg(long, default_value_t = 10)]
    pub batch_size: u32,
    /// Completed merges per threshold cycle
    #[arg(long, default_value_t = 10)]
    pub merge_cadence: u32,
    /// Priority multiplier for cross-bucket pairs
    #[arg(long, default_value_t = 1.2)]
    pub cross_bucket_weight: f64,
}

impl EngineArgs {
    fn session_config(&self, rng_seed: u64) -> SessionConfig {
        SessionConfig {
            elo_init: elo_config(&self.elo, rng_seed),
            k_factor: self.k_factor,
            threshold: ThresholdConfig {
                theta0: self.theta0,
                alpha: self.alpha,
                beta: self.beta,
                batch_size: self.batch_size,
                merge_cadence: self.merge_cadence,
                exponent_mode: match self.exponent_mode {
                    ExponentArg::AsWritten => ExponentMode::AsWritten,
                    ExponentArg::Inverted => ExponentMode::Inverted,
                },
            },
            weights: PriorityWeights {
                cross_bucket: self.cross_bucket_weight,
                ..PriorityWeights::default()
            },
        }
    }
}

fn elo_config(a: &EloArgs, rng_seed: u64) -> EloInitConfig {
    EloInitConfig {
        bucket_count: a.k,
        rating_base_min: a.rating_min,
        rating_base_max: a.rating_max,
        noise_halfwidth: a.noise,
        rng_seed,
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Per-level error rate rho of the synthetic pre-order
    #[arg(long, default_value_t = 0.1)]
    pub rho: f64,
    /// Depth of the synthetic prompt hierarchy
    #[arg(long, default_value_t = 4)]
    pub depth: u32,
    /// Similarity margin of the winning prompt
    #[arg(long, default_value_t = 0.05)]
    pub score_gap: f64,
    /// Softmax temperature written into synthetic similarities
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
}

impl SynthArgs {
    fn config(&self) -> SyntheticPreorderConfig {
        SyntheticPreorderConfig {
            depth: self.depth,
            per_level_error: self.rho,
            score_gap: self.score_gap,
            tau: self.tau,
            ..SyntheticPreorderConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    /// Simulated annotator flip probability epsilon
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    /// Ground-truth distance at or below which the annotator answers equal
    #[arg(long, default_value_t = 0.0)]
    pub tie: f64,
}

impl OracleArgs {
    fn config(&self) -> OracleConfig {
        OracleConfig {
            flip_probability: self.eps,
            tie_threshold: self.tie,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Number of items
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    /// Number of seeds
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// First seed; seeds run from here upward
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub synth: SynthArgs,
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Fail unless the human fraction lies in LO,HI (the documented target band is 0.10,0.45)
    #[arg(long, value_parser = parse_band)]
    pub fraction_band: Option<(f64, f64)>,
    /// Write the report as JSON
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    /// Write the per-seed table as CSV
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// Write the text summary
    #[arg(long)]
    pub out_text: Option<PathBuf>,
    /// Print the report as JSON instead of a table
    #[arg(long)]
    pub json: bool,
}

fn parse_band(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if lo > hi {
        return Err("LO must not exceed HI".into());
    }
    Ok((lo, hi))
}

#[derive(Debug, Args)]
pub struct PreorderArgs {
    /// items.jsonl
    #[arg(long)]
    pub items: PathBuf,
    /// similarities.json
    #[arg(long)]
    pub similarities: PathBuf,
    /// Optional prompt_tree.json; every item's decision path must exist in it
    #[arg(long)]
    pub prompt_tree: Option<PathBuf>,
    #[command(flatten)]
    pub elo: EloArgs,
    /// Seed for the rating noise
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print JSON instead of a table
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// items.jsonl with ground truth; synthetic items are used when omitted
    #[arg(long, requires = "similarities")]
    pub items: Option<PathBuf>,
    /// similarities.json matching --items
    #[arg(long, requires = "items")]
    pub similarities: Option<PathBuf>,
    /// Number of synthetic items
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    /// Seed for every random stream of the run
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub synth: SynthArgs,
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Also write the transcript to this file
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Print a JSON summary instead of the transcript
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Session store directory, created when missing
    #[arg(long, default_value = "ezsort-data")]
    pub data_dir: PathBuf,
    /// Listen address
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Allowed CORS origin; repeat for several
    #[arg(long = "cors-origin", default_value = "http://localhost:5173")]
    pub cors_origins: Vec<String>,
    /// Base directory for relative image paths in display_ref
    #[arg(long, default_value = ".")]
    pub image_root: PathBuf,
    /// Print the startup line as JSON
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Session store directory
    #[arg(long, default_value = "ezsort-data")]
    pub data_dir: PathBuf,
    /// Session id
    #[arg(long)]
    pub session: String,
    /// Write the export bundle here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the final ranking as CSV (completed sessions only)
    #[arg(long)]
    pub ranking_csv: Option<PathBuf>,
    /// Print a JSON summary when writing to files
    #[arg(long)]
    pub json: bool,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Bench(a) => bench(a),
        Command::Preorder(a) => preorder(a),
        Command::Simulate(a) => simulate(a),
        Command::Serve(a) => serve(a),
        Command::Export(a) => export(a),
    }
}

fn write_file(path: &Path, content: &str) -> CliResult {
    fs::write(path, content)
        .map_err(|e| CliError::Runtime(anyhow::Error::new(e).context(format!("writing {}", path.display()))))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn bench(a: BenchArgs) -> CliResult {
    let mut cfg = BenchConfig::new(a.n, (a.seed_base..a.seed_base + a.seeds).collect());
    cfg.oracle = a.oracle.config();
    cfg.preorder = a.synth.config();
    cfg.session = a.engine.session_config(0);
    cfg.validate().map_err(usage)?;
    let report = run_parallel(&cfg).map_err(usage)?;

    let report_json = serde_json::to_string_pretty(&report).expect("report serializes");
    let table = report_table(&report);
    if let Some(p) = &a.out_json {
        write_file(p, &report_json)?;
    }
    if let Some(p) = &a.out_csv {
        write_file(p, &report_csv(&report))?;
    }
    if let Some(p) = &a.out_text {
        write_file(p, &table)?;
    }
    if a.json {
        println!("{report_json}");
    } else {
        print!("{table}");
    }
    let violations = check_report(&report, a.fraction_band);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(violations.join("; ")))
    }
}

fn load_inputs(items: &Path, sims: &Path) -> Result<(Vec<ItemRecord>, SimilarityTable), CliError> {
    let items = parse_items_jsonl(&read_file(items)?).map_err(usage)?;
    let sims = parse_similarities(&read_file(sims)?).map_err(usage)?;
    Ok((items, sims))
}

fn preorder(a: PreorderArgs) -> CliResult {
    let (items, sims) = load_inputs(&a.items, &a.similarities)?;
    let cfg = elo_config(&a.elo, a.seed);
    let results = run_preorder(&items, &sims, &cfg).map_err(usage)?;
    if let Some(path) = &a.prompt_tree {
        let tree = PromptTree::parse(&read_file(path)?).map_err(usage)?;
        let mut missing = Vec::new();
        for r in &results {
            let decisions: Vec<u8> = sims.items[&r.item_id]
                .levels
                .iter()
                .map(|&l| classify_level(l, sims.tau).map(|d| d.decision))
                .collect::<Result<_, _>>()
                .map_err(usage)?;
            if !tree.supports_path(&decisions) {
                missing.push(r.item_id.clone());
            }
        }
        if !missing.is_empty() {
            return Err(usage(format!(
                "decision paths not present in prompt tree for: {}",
                missing.join(", ")
            )));
        }
    }
    let mut histogram = vec![0u64; cfg.bucket_count as usize];
    for r in &results {
        histogram[r.bucket as usize] += 1;
    }
    if a.json {
        let out = json!({"items": results, "bucket_histogram": histogram});
        println!("{}", serde_json::to_string_pretty(&out).expect("serializes"));
        return Ok(());
    }
    let width = results.iter().map(|r| r.item_id.len()).max().unwrap_or(2).max(2);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$} {:>5} {:>6} {:>6} {:>8} {:>10}", "id", "depth", "group", "bucket", "conf", "rating");
    for r in &results {
        let _ = writeln!(
            s,
            "{:<width$} {:>5} {:>6} {:>6} {:>8.4} {:>10.2}",
            r.item_id, r.depth, r.group_index, r.bucket, r.confidence, r.initial_rating
        );
    }
    let _ = writeln!(s, "\nbucket histogram");
    for (b, c) in histogram.iter().enumerate() {
        let _ = writeln!(s, "  {b:>3} {c:>6} {}", "#".repeat((*c).min(60) as usize));
    }
    print!("{s}");
    Ok(())
}

fn simulate(a: SimulateArgs) -> CliResult {
    let (items, sims, config, oracle) = match (&a.items, &a.similarities) {
        (Some(i), Some(s)) => {
            let (items, sims) = load_inputs(i, s)?;
            let oracle = OracleConfig {
                rng_seed: a.seed,
                ..a.oracle.config()
            };
            (items, sims, a.engine.session_config(a.seed), oracle)
        }
        _ => {
            let mut cfg = BenchConfig::new(a.n, vec![a.seed]);
            cfg.oracle = a.oracle.config();
            cfg.preorder = a.synth.config();
            cfg.session = a.engine.session_config(0);
            cfg.validate().map_err(usage)?;
            let s = seed_inputs(&cfg, a.seed).map_err(usage)?;
            (s.items, s.similarities, s.session, s.oracle)
        }
    };
    let mut session = Session::create(&items, &sims, config).map_err(usage)?;
    let mut annotator = SimulatedAnnotator::new(oracle).map_err(usage)?;
    ezsort_core::simulator::drive_session(&mut session, &mut annotator).map_err(usage)?;
    let (spearman, kendall, pearson) = score_ranking(&session).map_err(|e| CliError::Invariant(e.to_string()))?;
    let stats = session.stats();

    let mut t = String::new();
    let mut requests = BTreeMap::new();
    for ev in &session.events {
        match &ev.kind {
            EventKind::SessionCreated { items, comparisons_budget } => {
                let _ = writeln!(t, "session: {items} items, budget {comparisons_budget}");
            }
            EventKind::RequestIssued { request } => {
                requests.insert(request.request_id, request.clone());
            }
            EventKind::JudgmentReceived { request_id, outcome, source, .. } => {
                let r = &requests[request_id];
                let route = if *source == Route::Human { "human" } else { "auto " };
                let _ = writeln!(
                    t,
                    "#{request_id:<5} {route} {} vs {}  u={:.4} theta={:.4} -> {}",
                    r.left,
                    r.right,
                    r.uncertainty,
                    r.theta,
                    serde_json::to_value(outcome).expect("serializes").as_str().unwrap_or_default()
                );
            }
            EventKind::ThresholdCycled { cycle, accuracy, theta } => {
                let _ = writeln!(t, "cycle {cycle}: accuracy={accuracy:.4} theta={theta:.4}");
            }
            EventKind::Completed => {
                let _ = writeln!(t, "completed");
            }
        }
    }
    let _ = writeln!(t, "human: {}  auto: {}", stats.human, stats.auto);
    let _ = writeln!(t, "spearman: {spearman:.6}");
    let _ = writeln!(t, "kendall_tau_b: {kendall:.6}");
    if let Some(p) = pearson {
        let _ = writeln!(t, "pearson: {p:.6}");
    }
    if let Some(p) = &a.transcript {
        write_file(p, &t)?;
    }
    if a.json {
        let out = json!({
            "human": stats.human,
            "auto": stats.auto,
            "spearman": spearman,
            "kendall_tau_b": kendall,
            "pearson": pearson,
            "stats": stats,
            "ranking": session.ranking().map_err(|e| CliError::Invariant(e.to_string()))?,
        });
        println!("{}", serde_json::to_string_pretty(&out).expect("serializes"));
    } else {
        print!("{t}");
    }
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult {
    let cfg = ServiceConfig {
        data_dir: a.data_dir,
        bind: a.bind,
        allowed_origins: a.cors_origins,
        image_root: a.image_root,
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.into()))?;
    rt.block_on(async {
        let (listener, state) = service::bind(&cfg).await.map_err(usage)?;
        let addr = listener.local_addr().map_err(|e| CliError::Runtime(e.into()))?;
        if a.json {
            println!("{}", json!({"listening": addr.to_string(), "data_dir": cfg.data_dir}));
        } else {
            println!("listening on http://{addr}");
        }
        service::run(listener, state, &cfg.allowed_origins).await?;
        Ok(())
    })
}

fn export(a: ExportArgs) -> CliResult {
    if !a.data_dir.is_dir() {
        return Err(usage(format!("data directory {} does not exist", a.data_dir.display())));
    }
    let store = SessionStore::open(&a.data_dir).map_err(|e| CliError::Runtime(e.into()))?;
    let stored = store.load(&a.session).map_err(usage)?;
    let bundle = stored.export();
    let text = serde_json::to_string_pretty(&bundle).expect("bundle serializes");
    if let Some(p) = &a.ranking_csv {
        let ranking = stored.session().ranking().map_err(usage)?;
        let mut csv = String::from("rank,item_id,display_ref,rating,bucket\n");
        for r in ranking {
            let _ = writeln!(csv, "{},{},{},{:.6},{}", r.rank, r.item_id, r.display_ref, r.rating, r.bucket);
        }
        write_file(p, &csv)?;
    }
    match &a.out {
        Some(p) => {
            write_file(p, &text)?;
            let stats = stored.session().stats();
            if a.json {
                println!("{}", json!({"session_id": a.session, "out": p, "events": bundle.events.len(), "stats": stats}));
            } else {
                println!("exported {} ({} events) to {}", a.session, bundle.events.len(), p.display());
            }
        }
        None => println!("{text}"),
    }
    Ok(())
}
