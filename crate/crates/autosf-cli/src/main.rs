//! Command-line interface: dataset statistics, training, scoring-function
//! search, symmetry features, enumeration and triplet classification.
//!
//! Every command resolves an output directory (`--out`, then `$AUTOSF_OUT`,
//! then `./runs/<command>`), writes its artifacts there and finishes with a
//! `manifest.json` snapshot that pins everything needed to reproduce the
//! run.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use autosf::blm::resolve_sf;
use autosf::equivalence::enumerate_b4;
use autosf::error::{Error, Result};
use autosf::evaluation::{
    classification_thresholds, link_prediction, negative_sampling_for_classification,
    triplet_classification, RankReport,
};
use autosf::kgdata::{class_counts, load_dataset, relation_stats, stats_to_json, Split, StatsThresholds, TripleStore};
use autosf::search::{greedy_search, random_search, SearchConfig, SearchRecord};
use autosf::srf::{check_c1, srf, PredictorConfig};
use autosf::training::{train, TrainConfig, TrainResult};
use autosf::EmbeddingTable;

#[derive(Parser)]
#[command(name = "autosf", version, about = "Bilinear scoring-function engine for knowledge-graph embedding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON config file with optional "train", "search" and "predictor"
    /// sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override for this run.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker-pool width (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: $AUTOSF_OUT or ./runs/<command>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset statistics: sizes and relation-type classes.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train one scoring function and evaluate filtered link prediction.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Model name (distmult/complex/analogy/simple) or grid text.
        #[arg(long)]
        sf: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Search for a scoring function.
    Search {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = Strategy::Greedy)]
        strategy: Strategy,
        /// Target number of nonzero blocks.
        #[arg(long = "B")]
        target_blocks: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Print the 22 symmetry bits and the expressiveness verdict of a grid.
    Srf {
        #[arg(long)]
        sf: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// List the inequivalent trainable grids with the given block count.
    Enumerate {
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Triplet classification with per-relation thresholds.
    Classify {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        sf: String,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Greedy,
    Random,
}

impl Strategy {
    fn name(self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::Random => "random",
        }
    }
}

/// Search settings as they appear in the config file (training and
/// predictor settings live in their own sections).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct SearchParams {
    target_blocks: usize,
    parent_top_k: usize,
    predictor_top_k: usize,
    pool_size: usize,
    stage_budget: usize,
    stall_factor: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        let base = SearchConfig::default();
        SearchParams {
            target_blocks: base.target_blocks,
            parent_top_k: base.parent_top_k,
            predictor_top_k: base.predictor_top_k,
            pool_size: base.pool_size,
            stage_budget: base.stage_budget,
            stall_factor: base.stall_factor,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    train: Option<TrainConfig>,
    search: Option<SearchParams>,
    predictor: Option<PredictorConfig>,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<ConfigFile> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| Error::Load {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

/// Everything a command resolved before running.
struct RunContext {
    command: String,
    dataset: Option<PathBuf>,
    out_dir: PathBuf,
    seed: u64,
    workers: usize,
    started: chrono::DateTime<chrono::Utc>,
    artifacts: Vec<String>,
    config_snapshot: serde_json::Value,
}

impl RunContext {
    fn new(command: &str, dataset: Option<&Path>, common: &CommonArgs) -> Result<RunContext> {
        let out_dir = common
            .out
            .clone()
            .or_else(|| std::env::var_os("AUTOSF_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs").join(command));
        std::fs::create_dir_all(&out_dir).map_err(|source| Error::Load {
            path: out_dir.clone(),
            source,
        })?;
        Ok(RunContext {
            command: command.to_owned(),
            dataset: dataset.map(Path::to_path_buf),
            out_dir,
            seed: common.seed.unwrap_or(0),
            workers: common
                .workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
            started: chrono::Utc::now(),
            artifacts: Vec::new(),
            config_snapshot: serde_json::Value::Null,
        })
    }

    fn write_artifact(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|source| Error::Load {
            path: path.clone(),
            source,
        })?;
        self.artifacts.push(name.to_owned());
        Ok(path)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::numeric(format!("serializing {name}: {e}")))?;
        self.write_artifact(name, text.as_bytes())
    }

    fn finish(self) -> Result<()> {
        let manifest = json!({
            "command": self.command,
            "dataset": self.dataset.as_ref().map(|p| p.display().to_string()),
            "config": self.config_snapshot,
            "seed": self.seed,
            "workers": self.workers,
            "started": self.started.to_rfc3339(),
            "finished": chrono::Utc::now().to_rfc3339(),
            "artifacts": self.artifacts,
        });
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::numeric(format!("serializing manifest: {e}")))?;
        let path = self.out_dir.join("manifest.json");
        std::fs::write(&path, text).map_err(|source| Error::Load { path, source })?;
        Ok(())
    }
}

/// Header (|E|, |R|, d as little-endian u64) followed by the entity then
/// relation matrices, row-major little-endian f64.
fn embedding_bytes(table: &EmbeddingTable<f64>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(
        24 + 8 * (table.entity.len() + table.relation.len()),
    );
    for header in [
        table.num_entities() as u64,
        table.num_relations() as u64,
        table.dim() as u64,
    ] {
        bytes.extend_from_slice(&header.to_le_bytes());
    }
    for value in table.entity.iter().chain(table.relation.iter()) {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    bytes
}

fn resolved_train(file: &ConfigFile, seed: u64) -> TrainConfig {
    let mut config = file.train.clone().unwrap_or_default();
    config.seed = seed;
    config
}

fn cmd_stats(dataset: &Path, common: &CommonArgs) -> Result<()> {
    let mut ctx = RunContext::new("stats", Some(dataset), common)?;
    let store = load_dataset(dataset)?;
    let stats = relation_stats(&store, &StatsThresholds::default());
    let report = json!({
        "entities": store.num_entities(),
        "relations": store.num_relations(),
        "train": store.train.len(),
        "valid": store.valid.len(),
        "test": store.test.len(),
        "classes": class_counts(&stats),
        "relations_detail": stats_to_json(&store, &stats),
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    ctx.config_snapshot = json!({ "thresholds": StatsThresholds::default() });
    ctx.write_json("stats.json", &report)?;
    ctx.finish()
}

fn train_and_report(
    store: &TripleStore,
    sf_text: &str,
    config: &TrainConfig,
) -> Result<(TrainResult<f64>, RankReport, RankReport)> {
    let sf = resolve_sf(sf_text)?;
    let result = train::<f64>(store, &sf, config)?;
    let valid = link_prediction(store, &sf, &result.table, Split::Valid)?;
    let test = link_prediction(store, &sf, &result.table, Split::Test)?;
    Ok((result, valid, test))
}

fn cmd_train(dataset: &Path, sf_text: &str, common: &CommonArgs) -> Result<()> {
    let mut ctx = RunContext::new("train", Some(dataset), common)?;
    let file = ConfigFile::load(common.config.as_deref())?;
    let config = resolved_train(&file, ctx.seed);
    let sf = resolve_sf(sf_text)?;
    let store = load_dataset(dataset)?;

    let (result, valid, test) = train_and_report(&store, sf_text, &config)?;
    let report = json!({ "sf": sf, "valid": valid, "test": test });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());

    ctx.config_snapshot = json!({ "train": config, "sf": sf });
    ctx.write_artifact("embeddings.bin", &embedding_bytes(&result.table))?;
    ctx.write_json("report.json", &report)?;
    ctx.write_json("loss_history.json", &result.loss_history)?;
    ctx.finish()
}

fn read_history(path: &Path) -> Result<Vec<SearchRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|source| Error::Load {
        path: path.to_owned(),
        source,
    })?;
    let mut records = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: SearchRecord = serde_json::from_str(line).map_err(|e| Error::DataParse {
            file: path.to_owned(),
            line: line_no + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

fn cmd_search(
    dataset: &Path,
    strategy: Strategy,
    target_blocks: Option<usize>,
    common: &CommonArgs,
) -> Result<()> {
    let mut ctx = RunContext::new("search", Some(dataset), common)?;
    let file = ConfigFile::load(common.config.as_deref())?;
    let params = file.search.clone().unwrap_or_default();
    let config = SearchConfig {
        target_blocks: target_blocks.unwrap_or(params.target_blocks),
        parent_top_k: params.parent_top_k,
        predictor_top_k: params.predictor_top_k,
        pool_size: params.pool_size,
        stage_budget: params.stage_budget,
        stall_factor: params.stall_factor,
        workers: ctx.workers,
        seed: ctx.seed,
        train: resolved_train(&file, ctx.seed),
        predictor: file.predictor.clone().unwrap_or_default(),
    };

    let store = load_dataset(dataset)?;
    let log_path = ctx.out_dir.join("search.jsonl");
    let history = read_history(&log_path)?;
    if !history.is_empty() {
        log::info!("resuming from {} recorded evaluations", history.len());
    }
    let mut log_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|source| Error::Load { path: log_path.clone(), source })?;

    let on_record = |record: &SearchRecord| {
        let line = serde_json::to_string(record).expect("record serializes");
        let _ = writeln!(log_file, "{line}");
        let _ = log_file.flush();
        println!("{line}");
    };
    let records = match strategy {
        Strategy::Greedy => greedy_search::<f64>(&store, &config, history, on_record)?,
        Strategy::Random => random_search::<f64>(&store, &config, history, on_record)?,
    };

    let best = records
        .first()
        .ok_or_else(|| Error::numeric("search produced no records"))?;
    println!("best sf: {}", best.sf);
    println!("best validation mrr: {:.6}", best.val_mrr);

    ctx.artifacts.push("search.jsonl".to_owned());
    ctx.config_snapshot = json!({ "search": config, "strategy": strategy.name() });
    ctx.write_json(
        "best.json",
        &json!({ "sf": best.sf, "val_mrr": best.val_mrr, "b": best.b, "srf": best.srf }),
    )?;
    ctx.finish()
}

fn cmd_srf(sf_text: &str, common: &CommonArgs) -> Result<()> {
    let mut ctx = RunContext::new("srf", None, common)?;
    let sf = resolve_sf(sf_text)?;
    let features = srf(&sf);
    let (can_sym, can_skew) = check_c1(&sf);
    let report = json!({
        "sf": sf,
        "srf": features,
        "can_sym": can_sym,
        "can_skew": can_skew,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    ctx.config_snapshot = json!({ "sf": sf });
    ctx.write_json("srf.json", &report)?;
    ctx.finish()
}

fn cmd_enumerate(blocks: usize, common: &CommonArgs) -> Result<()> {
    let mut ctx = RunContext::new("enumerate", None, common)?;
    if blocks != 4 {
        return Err(Error::config(format!(
            "enumeration is exhaustive only for 4 blocks, got {blocks}"
        )));
    }
    let classes = enumerate_b4();
    for sf in &classes {
        println!("{sf}");
    }
    ctx.config_snapshot = json!({ "blocks": blocks });
    ctx.write_json("enumerate.json", &classes)?;
    ctx.finish()
}

fn cmd_classify(dataset: &Path, sf_text: &str, common: &CommonArgs) -> Result<()> {
    let mut ctx = RunContext::new("classify", Some(dataset), common)?;
    let file = ConfigFile::load(common.config.as_deref())?;
    let config = resolved_train(&file, ctx.seed);
    let sf = resolve_sf(sf_text)?;
    let store = load_dataset(dataset)?;

    let result = train::<f64>(&store, &sf, &config)?;
    let sets = negative_sampling_for_classification(&store, ctx.seed)?;
    let thresholds = classification_thresholds(&store, &sets.valid, &sf, &result.table)?;
    let accuracy = triplet_classification(&sets.test, &thresholds, &sf, &result.table)?;

    let sigma_by_name: Vec<serde_json::Value> = thresholds
        .sigma
        .iter()
        .enumerate()
        .map(|(r, &sigma)| json!({ "relation": store.relations.name(r), "sigma": sigma }))
        .collect();
    let fallback: Vec<&str> = thresholds
        .fallback_relations
        .iter()
        .map(|&r| store.relations.name(r))
        .collect();
    let report = json!({
        "sf": sf,
        "accuracy": accuracy,
        "n_test": sets.test.len(),
        "thresholds": sigma_by_name,
        "fallback_relations": fallback,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    ctx.config_snapshot = json!({ "train": config, "sf": sf });
    ctx.write_json("classification.json", &report)?;
    ctx.finish()
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Stats { dataset, common } => cmd_stats(dataset, common),
        Command::Train { dataset, sf, common } => cmd_train(dataset, sf, common),
        Command::Search { dataset, strategy, target_blocks, common } => {
            cmd_search(dataset, *strategy, *target_blocks, common)
        }
        Command::Srf { sf, common } => cmd_srf(sf, common),
        Command::Enumerate { blocks, common } => cmd_enumerate(*blocks, common),
        Command::Classify { dataset, sf, common } => cmd_classify(dataset, sf, common),
    }
}

fn common_of(cli: &Cli) -> &CommonArgs {
    match &cli.command {
        Command::Stats { common, .. }
        | Command::Train { common, .. }
        | Command::Search { common, .. }
        | Command::Srf { common, .. }
        | Command::Enumerate { common, .. }
        | Command::Classify { common, .. } => common,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let workers = common_of(&cli)
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    match pool.install(|| dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Load { .. } | Error::DataParse { .. } => 2,
                Error::Config(_) | Error::SfParse(_) | Error::Argument(_) => 3,
                Error::Numeric(_) => 4,
            };
            ExitCode::from(code)
        }
    }
}
