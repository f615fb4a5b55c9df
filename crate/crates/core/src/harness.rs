//! File-and-directory orchestration behind the CLI: analysis artifacts,
//! content-addressed training runs, the (α, β) grid search with its
//! selection rule, and CSV report emission.
//!
//! Every emitted file has a fixed header and column order, and with a fixed
//! seed the whole pipeline is reproducible byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::interactions::{load_dataset, InteractionDataset, Quadrant, UserProfile};
use crate::metrics::{evaluate, Correlation, EvalReport, MetricBlock};
use crate::nullmodel::{
    analyze_significance, bin_observed, bin_sample, sample_null, significance_grid,
    BinBoundaries, SignificanceGrid,
};
use crate::recmodels::{save_checkpoint, EmbeddingModel, ModelKind, OptimizerKind};
use crate::training::{train, EpochStat, ReweightConfig, TrainOptions, Variant};

// ---------------------------------------------------------------------------
// small file helpers

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidArgument(format!("writing {}: {other:?}", path.display())),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// `nan` for undefined values so the CSV stays machine-parseable.
fn fmt6(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.6}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt6).unwrap_or_default()
}

/// Signed one-decimal percentage change, or empty when undefined.
fn fmt_change(current: Option<f64>, base: Option<f64>) -> String {
    match (current, base) {
        (Some(c), Some(b)) if b != 0.0 => format!("{:+.1}", (c - b) / b * 100.0),
        _ => String::new(),
    }
}

/// Export a dataset back to the adjacency layout consumed by `load_dataset`
/// (one line per user: raw user id followed by raw item ids). Users without
/// items in a split are omitted from that file.
pub fn write_benchmark_files(
    ds: &InteractionDataset,
    train_path: &Path,
    test_path: &Path,
) -> Result<()> {
    let emit = |path: &Path, items_of: &dyn Fn(u32) -> Vec<u32>| -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for u in 0..ds.num_users() as u32 {
            let items = items_of(u);
            if items.is_empty() {
                continue;
            }
            write!(w, "{}", ds.raw_user_id(u)).map_err(|e| Error::io(path, e))?;
            for i in items {
                write!(w, " {}", ds.raw_item_id(i)).map_err(|e| Error::io(path, e))?;
            }
            writeln!(w).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    };
    emit(train_path, &|u| ds.neighbors(u).to_vec())?;
    emit(test_path, &|u| ds.test_items(u).to_vec())
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub train: PathBuf,
    pub test: PathBuf,
    pub out_dir: PathBuf,
    /// Quantile bins per axis.
    pub bins: usize,
    pub null_samples: usize,
    pub seed: u64,
    /// Accepted swaps per sample as a multiple of the edge count.
    pub swap_multiplier: u64,
    /// Use the 2×2 mean-boundary grid instead of quantile bins.
    pub means: bool,
}

/// Profile users, emit CCDF curves, and run the observed-vs-null
/// significance analysis. Writes `profiles.csv`, `ccdf.csv`,
/// `significance.csv`, and `id_map.csv` into the output directory.
pub fn run_analyze(opts: &AnalyzeOptions) -> Result<()> {
    let ds = load_dataset(&opts.train, &opts.test)?;
    fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;

    let profiles = ds.assign_quadrants();
    write_profiles(&opts.out_dir.join("profiles.csv"), &ds, &profiles)?;
    write_ccdf(&opts.out_dir.join("ccdf.csv"), &ds, &profiles)?;

    let grid = if opts.means {
        let bounds = BinBoundaries::from_means(&ds)?;
        let observed = bin_observed(&ds, &bounds);
        let nulls: Vec<Vec<Vec<u64>>> =
            sample_null(&ds, opts.null_samples, opts.swap_multiplier, opts.seed)
                .iter()
                .map(|s| bin_sample(&ds, s, &bounds))
                .collect();
        significance_grid(&observed, &nulls)?
    } else {
        analyze_significance(&ds, opts.bins, opts.null_samples, opts.swap_multiplier, opts.seed)?
    };
    write_significance(&opts.out_dir.join("significance.csv"), &grid)?;
    write_id_map(&opts.out_dir.join("id_map.csv"), &ds)?;

    let flagged: usize = grid.significant.iter().flatten().filter(|&&s| s).count();
    info!(
        "analyzed {} users x {} items: {} of {} cells significant",
        ds.num_users(),
        ds.num_items(),
        flagged,
        grid.q * grid.q
    );
    Ok(())
}

fn write_profiles(path: &Path, ds: &InteractionDataset, profiles: &[UserProfile]) -> Result<()> {
    let rows: Vec<Vec<String>> = profiles
        .iter()
        .map(|p| {
            vec![
                ds.raw_user_id(p.user).to_string(),
                p.activity.to_string(),
                fmt6(p.pop_preference),
                p.quadrant.as_str().to_string(),
            ]
        })
        .collect();
    write_csv(path, &["user_id", "d_u", "p_u", "quadrant"], &rows)
}

fn write_ccdf(path: &Path, ds: &InteractionDataset, profiles: &[UserProfile]) -> Result<()> {
    let all: Vec<u32> = profiles.iter().map(|p| p.user).collect();
    let niche: Vec<u32> = profiles
        .iter()
        .filter(|p| p.quadrant.is_niche())
        .map(|p| p.user)
        .collect();
    let mainstream: Vec<u32> = profiles
        .iter()
        .filter(|p| !p.quadrant.is_niche())
        .map(|p| p.user)
        .collect();

    let mut rows = Vec::new();
    for (name, group) in [("all", &all), ("niche", &niche), ("mainstream", &mainstream)] {
        if group.is_empty() {
            warn!("group {name} is empty; omitting its curve");
            continue;
        }
        for (x, frac) in ds.activity_ccdf(group)? {
            rows.push(vec![name.to_string(), x.to_string(), fmt6(frac)]);
        }
    }
    write_csv(path, &["group", "x", "frac"], &rows)
}

fn write_significance(path: &Path, grid: &SignificanceGrid) -> Result<()> {
    let mut rows = Vec::new();
    for a in 0..grid.q {
        for p in 0..grid.q {
            rows.push(vec![
                a.to_string(),
                p.to_string(),
                grid.observed[a][p].to_string(),
                fmt6(grid.null_mean[a][p]),
                fmt6(grid.null_std[a][p]),
                fmt6(grid.z[a][p]),
                fmt6(grid.norm_dev[a][p]),
                grid.significant[a][p].to_string(),
            ]);
        }
    }
    write_csv(
        path,
        &[
            "bin_activity",
            "bin_pref",
            "observed",
            "null_mean",
            "null_std",
            "z",
            "norm_dev",
            "significant",
        ],
        &rows,
    )
}

fn write_id_map(path: &Path, ds: &InteractionDataset) -> Result<()> {
    let mut rows = Vec::new();
    for u in 0..ds.num_users() as u32 {
        rows.push(vec![
            "user".to_string(),
            ds.raw_user_id(u).to_string(),
            u.to_string(),
        ]);
    }
    for i in 0..ds.num_items() as u32 {
        rows.push(vec![
            "item".to_string(),
            ds.raw_item_id(i).to_string(),
            i.to_string(),
        ]);
    }
    write_csv(path, &["kind", "raw_id", "index"], &rows)
}

// ---------------------------------------------------------------------------
// train

fn default_layers() -> usize {
    2
}
fn default_k() -> usize {
    20
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub dim: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    pub lr: f64,
    pub reg_lambda: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPaths {
    pub train: PathBuf,
    pub test: PathBuf,
}

/// One training run as read from `train.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    pub epochs: usize,
    pub seed: u64,
    pub model: ModelConfig,
    pub data: DataPaths,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub presigmoid: bool,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub correlation: Correlation,
    /// Evaluate on a validation split carved out of train instead of the
    /// test split (the safer protocol for model selection).
    #[serde(default)]
    pub holdout: bool,
}

impl TrainConfig {
    /// Reweighting schedule for this run. Non-`ui` variants pin their own
    /// (α, β); a conflicting value in the file is overridden with a warning.
    pub fn reweight(&self) -> Result<ReweightConfig> {
        let cfg = match self.variant {
            Variant::Vanilla => ReweightConfig::vanilla(self.epochs, self.seed),
            Variant::OnlyItem => ReweightConfig::only_item(self.epochs, self.seed),
            Variant::OnlyUser => ReweightConfig::only_user(self.epochs, self.seed),
            Variant::Ui => ReweightConfig::ui(self.alpha, self.beta, self.epochs, self.seed)?,
        };
        if self.variant != Variant::Ui && (self.alpha != cfg.alpha || self.beta != cfg.beta) {
            warn!(
                "variant {} pins (alpha, beta) = ({}, {}); ignoring ({}, {})",
                self.variant, cfg.alpha, cfg.beta, self.alpha, self.beta
            );
        }
        Ok(cfg)
    }
}

/// Read a run configuration from a JSON file.
pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    read_json(path)
}

/// Read a grid-search specification from a JSON file.
pub fn load_experiment_spec(path: &Path) -> Result<ExperimentSpec> {
    read_json(path)
}

/// Hex prefix of the SHA-256 of the run-identifying fields. The output
/// directory is excluded so moving an experiment tree does not orphan runs.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let mut ident = cfg.clone();
    ident.out_dir = PathBuf::new();
    let bytes = serde_json::to_vec(&ident).expect("config serializes");
    Sha256::digest(&bytes)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Everything persisted about one finished run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub config: TrainConfig,
    pub wallclock_s: f64,
    /// Loss trace location, relative to the run directory.
    pub loss_path: String,
    pub eval: EvalReport,
}

/// Fixed seed for the validation carve-out so every run sees the same split.
const HOLDOUT_SEED: u64 = 0x0ddba11;

/// Hold out ~10% of each user's train items (at least one, for users with
/// two or more) as a validation split; the original test edges are dropped.
fn holdout_split(ds: &InteractionDataset) -> Result<InteractionDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(HOLDOUT_SEED);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for u in 0..ds.num_users() as u32 {
        let mut items = ds.neighbors(u).to_vec();
        items.shuffle(&mut rng);
        let held = if items.len() >= 2 {
            ((items.len() as f64) * 0.1).round().max(1.0) as usize
        } else {
            0
        };
        for (idx, i) in items.into_iter().enumerate() {
            if idx < held {
                val.push((u, i));
            } else {
                train.push((u, i));
            }
        }
    }
    ds.re_split(train, val)
}

/// Train one configuration and persist `run.json`, `loss.csv`, `eval.json`,
/// and `checkpoint.bin` under `<out_dir>/<config-hash>/`. A directory whose
/// `eval.json` already exists is considered complete and is reused, which
/// makes grid search resumable.
pub fn run_train(cfg: &TrainConfig) -> Result<RunRecord> {
    let hash = config_hash(cfg);
    let run_dir = cfg.out_dir.join(&hash);
    let run_json = run_dir.join("run.json");
    if run_dir.join("eval.json").is_file() && run_json.is_file() {
        info!("run {hash} already complete; reusing");
        return read_json(&run_json);
    }

    let started = Instant::now();
    let full = load_dataset(&cfg.data.train, &cfg.data.test)?;
    let ds = if cfg.holdout { holdout_split(&full)? } else { full };
    let rcfg = cfg.reweight()?;
    let mut model = EmbeddingModel::init(
        cfg.model.kind,
        ds.num_users(),
        ds.num_items(),
        cfg.model.dim,
        cfg.model.layers,
        cfg.model.reg_lambda,
        cfg.seed,
    )?
    .with_presigmoid(cfg.presigmoid);
    let opts = TrainOptions {
        lr: cfg.model.lr,
        batch_size: cfg.model.batch_size,
        optimizer: cfg.optimizer,
        ..TrainOptions::default()
    };
    let trace = train(&rcfg, &ds, &mut model, &opts)?;
    let snap = model.snapshot(&ds);
    let eval = evaluate(&snap, &ds, cfg.k, cfg.correlation)?;

    fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    write_loss_csv(&run_dir.join("loss.csv"), &trace)?;
    save_checkpoint(&model, cfg.seed, cfg.epochs, &run_dir.join("checkpoint.bin"))?;
    let record = RunRecord {
        config_hash: hash.clone(),
        config: cfg.clone(),
        wallclock_s: started.elapsed().as_secs_f64(),
        loss_path: "loss.csv".to_string(),
        eval,
    };
    write_json(&run_json, &record)?;
    // eval.json marks completion, so it must be written last
    write_json(&run_dir.join("eval.json"), &record.eval)?;
    info!(
        "run {hash} ({} a={} b={} seed={}) recall@{} {} bias {} in {:.1}s",
        cfg.variant,
        rcfg.alpha,
        rcfg.beta,
        cfg.seed,
        cfg.k,
        fmt_opt(record.eval.overall.recall),
        fmt_opt(record.eval.overall.bias),
        record.wallclock_s
    );
    Ok(record)
}

fn write_loss_csv(path: &Path, trace: &[EpochStat]) -> Result<()> {
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|s| {
            vec![
                s.epoch.to_string(),
                fmt6(s.mean_loss),
                fmt6(s.reg_loss),
                format!("{:.3}", s.wallclock_s),
            ]
        })
        .collect();
    write_csv(path, &["epoch", "mean_loss", "reg_loss", "wallclock_s"], &rows)
}

// ---------------------------------------------------------------------------
// grid

fn default_alphas() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}
fn default_betas() -> Vec<f64> {
    vec![0.0, -0.5, -1.0]
}
fn default_variants() -> Vec<Variant> {
    vec![
        Variant::Vanilla,
        Variant::Ui,
        Variant::OnlyItem,
        Variant::OnlyUser,
    ]
}

/// Grid-search specification as read from `spec.json`. The `ui` variant
/// sweeps `alphas` × `betas`; every other listed variant runs once per seed
/// at its pinned (α, β) so the runs directory feeds a full report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub data: DataPaths,
    pub model: ModelConfig,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub presigmoid: bool,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub correlation: Correlation,
    #[serde(default)]
    pub holdout: bool,
}

impl ExperimentSpec {
    fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.betas.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidArgument(
                "alphas, betas, and seeds must be nonempty".into(),
            ));
        }
        for &a in &self.alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidArgument(format!("alpha {a} outside [0, 1]")));
            }
        }
        for &b in &self.betas {
            if !(b <= 0.0 && b.is_finite()) {
                return Err(Error::InvalidArgument(format!("beta {b} must be <= 0")));
            }
        }
        Ok(())
    }

    fn train_config(&self, variant: Variant, alpha: f64, beta: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            variant,
            alpha,
            beta,
            epochs: self.epochs,
            seed,
            model: self.model.clone(),
            data: self.data.clone(),
            out_dir: self.out_dir.clone(),
            optimizer: self.optimizer,
            presigmoid: self.presigmoid,
            k: self.k,
            correlation: self.correlation,
            holdout: self.holdout,
        }
    }
}

/// Pinned (α, β) of the non-swept variants.
fn canonical_ab(variant: Variant) -> (f64, f64) {
    match variant {
        Variant::Vanilla => (0.0, 0.0),
        Variant::OnlyItem => (0.0, -0.5),
        Variant::OnlyUser => (1.0, 0.0),
        Variant::Ui => (0.0, 0.0),
    }
}

/// One (α, β) cell of the grid, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub alpha: f64,
    pub beta: f64,
    pub seeds: usize,
    pub mean_recall: f64,
    pub mean_bias: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOutcome {
    pub table: Vec<GridCell>,
    pub winner: GridCell,
}

/// Pick the cell with the highest mean recall. Cells within 1e-4 of the
/// best are tied; ties go to the lower β, then to the lower α.
pub fn select_from_table(table: &[GridCell]) -> Result<GridCell> {
    let best = table
        .iter()
        .map(|c| c.mean_recall)
        .fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(Error::InvalidArgument(
            "grid selection needs at least one finite-recall cell".into(),
        ));
    }
    table
        .iter()
        .filter(|c| best - c.mean_recall < 1e-4)
        .min_by(|a, b| {
            (a.beta, a.alpha)
                .partial_cmp(&(b.beta, b.alpha))
                .expect("finite grid coordinates")
        })
        .cloned()
        .ok_or_else(|| Error::InvalidArgument("empty grid table".into()))
}

/// Run every cell (reusing completed runs), average per-cell metrics over
/// seeds, select a winner, and write `grid.csv` + `selection.json`.
pub fn run_grid(spec: &ExperimentSpec) -> Result<GridOutcome> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir).map_err(|e| Error::io(&spec.out_dir, e))?;

    for &seed in &spec.seeds {
        for &variant in &spec.variants {
            if variant == Variant::Ui {
                continue;
            }
            let (a, b) = canonical_ab(variant);
            run_train(&spec.train_config(variant, a, b, seed))?;
        }
    }

    let mut table = Vec::new();
    for &beta in &spec.betas {
        for &alpha in &spec.alphas {
            let mut recalls = Vec::new();
            let mut biases = Vec::new();
            for &seed in &spec.seeds {
                let rec = run_train(&spec.train_config(Variant::Ui, alpha, beta, seed))?;
                recalls.push(rec.eval.overall.recall.unwrap_or(0.0));
                biases.push(rec.eval.overall.bias.unwrap_or(0.0));
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            table.push(GridCell {
                alpha,
                beta,
                seeds: spec.seeds.len(),
                mean_recall: mean(&recalls),
                mean_bias: mean(&biases),
            });
        }
    }

    let winner = select_from_table(&table)?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|c| {
            vec![
                c.alpha.to_string(),
                c.beta.to_string(),
                c.seeds.to_string(),
                fmt6(c.mean_recall),
                fmt6(c.mean_bias),
            ]
        })
        .collect();
    write_csv(
        &spec.out_dir.join("grid.csv"),
        &["alpha", "beta", "seeds", "mean_recall", "mean_bias"],
        &rows,
    )?;
    write_json(&spec.out_dir.join("selection.json"), &winner)?;
    info!(
        "grid winner: alpha={} beta={} mean recall {}",
        winner.alpha,
        winner.beta,
        fmt6(winner.mean_recall)
    );
    Ok(GridOutcome { table, winner })
}

// ---------------------------------------------------------------------------
// report

/// Mean of the defined values, or `None` when every input is undefined.
fn mean_opt<I: Iterator<Item = Option<f64>>>(values: I) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Seed-averaged metric block.
#[derive(Debug, Clone, Default)]
struct MeanBlock {
    recall: Option<f64>,
    precision: Option<f64>,
    ndcg: Option<f64>,
    bias: Option<f64>,
    users: usize,
}

fn mean_block<'a, I: Iterator<Item = &'a MetricBlock> + Clone>(blocks: I) -> MeanBlock {
    MeanBlock {
        recall: mean_opt(blocks.clone().map(|b| b.recall)),
        precision: mean_opt(blocks.clone().map(|b| b.precision)),
        ndcg: mean_opt(blocks.clone().map(|b| b.ndcg)),
        bias: mean_opt(blocks.clone().map(|b| b.bias)),
        users: blocks.map(|b| b.users).max().unwrap_or(0),
    }
}

/// One aggregated report row: a (variant, α, β) group averaged over seeds.
struct ReportRow {
    label: String,
    alpha: f64,
    beta: f64,
    seeds: usize,
    overall: MeanBlock,
    quadrants: BTreeMap<String, MeanBlock>,
}

fn row_label(cfg: &TrainConfig) -> String {
    match cfg.variant {
        Variant::Ui => format!("ui_a{:.2}_b{:.2}", cfg.alpha, cfg.beta),
        v => v.as_str().to_string(),
    }
}

fn collect_rows(records: &[RunRecord]) -> Vec<ReportRow> {
    // group by label; order vanilla first, then pinned variants, then the
    // ui cells by (alpha, beta)
    let mut groups: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
    for rec in records {
        groups.entry(row_label(&rec.config)).or_default().push(rec);
    }
    let mut rows: Vec<ReportRow> = groups
        .into_iter()
        .map(|(label, recs)| {
            let quadrants = Quadrant::ALL
                .iter()
                .map(|q| {
                    let name = q.as_str().to_string();
                    let empty = MetricBlock::empty();
                    let blocks: Vec<&MetricBlock> = recs
                        .iter()
                        .map(|r| r.eval.quadrants.get(&name).unwrap_or(&empty))
                        .collect();
                    (name, mean_block(blocks.iter().copied()))
                })
                .collect();
            ReportRow {
                label,
                alpha: recs[0].config.alpha,
                beta: recs[0].config.beta,
                seeds: recs.len(),
                overall: mean_block(recs.iter().map(|r| &r.eval.overall)),
                quadrants,
            }
        })
        .collect();
    let rank = |row: &ReportRow| match row.label.as_str() {
        "vanilla" => 0,
        "only_item" => 1,
        "only_user" => 2,
        _ => 3,
    };
    rows.sort_by(|a, b| {
        rank(a)
            .cmp(&rank(b))
            .then((a.alpha, a.beta).partial_cmp(&(b.alpha, b.beta)).unwrap())
            .then(a.label.cmp(&b.label))
    });
    rows
}

/// Reduce every persisted run under `runs_dir` into `results.csv`,
/// `pareto.csv`, and `quadrants.csv` in `out_dir`. Percentage-change
/// columns compare against the `vanilla` rows; without a vanilla baseline
/// they are left empty and a warning is logged.
pub fn run_report(runs_dir: &Path, out_dir: &Path) -> Result<()> {
    let records = read_all_runs(runs_dir)?;
    if records.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no run records under {}",
            runs_dir.display()
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let rows = collect_rows(&records);
    let base = rows.iter().find(|r| r.label == "vanilla");
    if base.is_none() {
        warn!("no vanilla baseline found; change columns left empty");
    }

    let mut results = Vec::new();
    for row in &rows {
        let b = base;
        results.push(vec![
            row.label.clone(),
            row.alpha.to_string(),
            row.beta.to_string(),
            row.seeds.to_string(),
            fmt_opt(row.overall.recall),
            fmt_opt(row.overall.precision),
            fmt_opt(row.overall.ndcg),
            fmt_opt(row.overall.bias),
            fmt_change(row.overall.recall, b.and_then(|x| x.overall.recall)),
            fmt_change(row.overall.precision, b.and_then(|x| x.overall.precision)),
            fmt_change(row.overall.ndcg, b.and_then(|x| x.overall.ndcg)),
            fmt_change(row.overall.bias, b.and_then(|x| x.overall.bias)),
        ]);
    }
    write_csv(
        &out_dir.join("results.csv"),
        &[
            "variant",
            "alpha",
            "beta",
            "seeds",
            "recall",
            "precision",
            "ndcg",
            "bias",
            "recall_change",
            "precision_change",
            "ndcg_change",
            "bias_change",
        ],
        &results,
    )?;

    let pareto: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            vec![
                row.label.clone(),
                fmt_opt(row.overall.recall),
                fmt_opt(row.overall.bias),
            ]
        })
        .collect();
    write_csv(&out_dir.join("pareto.csv"), &["variant", "recall", "bias"], &pareto)?;

    let mut quadrants = Vec::new();
    for row in &rows {
        for q in Quadrant::ALL {
            let name = q.as_str();
            let cur = &row.quadrants[name];
            let b = base.map(|x| &x.quadrants[name]);
            quadrants.push(vec![
                row.label.clone(),
                name.to_string(),
                cur.users.to_string(),
                fmt_opt(cur.recall),
                fmt_opt(cur.precision),
                fmt_opt(cur.ndcg),
                fmt_opt(cur.bias),
                fmt_change(cur.recall, b.and_then(|x| x.recall)),
                fmt_change(cur.precision, b.and_then(|x| x.precision)),
                fmt_change(cur.ndcg, b.and_then(|x| x.ndcg)),
                fmt_change(cur.bias, b.and_then(|x| x.bias)),
            ]);
        }
    }
    write_csv(
        &out_dir.join("quadrants.csv"),
        &[
            "variant",
            "quadrant",
            "users",
            "recall",
            "precision",
            "ndcg",
            "bias",
            "recall_change",
            "precision_change",
            "ndcg_change",
            "bias_change",
        ],
        &quadrants,
    )?;
    info!("report over {} runs -> {}", records.len(), out_dir.display());
    Ok(())
}

fn read_all_runs(runs_dir: &Path) -> Result<Vec<RunRecord>> {
    let entries = fs::read_dir(runs_dir).map_err(|e| Error::io(runs_dir, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    dirs.sort();
    let mut records = Vec::new();
    for dir in dirs {
        let run_json = dir.join("run.json");
        if run_json.is_file() {
            records.push(read_json(&run_json)?);
        }
    }
    Ok(records)
}
