use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use prefmod::benchharness::{read_bench, score_bench, BenchReport, BenchTask};
use prefmod::io::{read_jsonl_file, to_jsonl_string};
use prefmod::justif::{build_justifier_records, JustifierOptions};
use prefmod::losses::{table5, DEFAULT_SCENARIOS};
use prefmod::prefdata::{
    aggregate_all, agreement_report, distribution_diagnostics, read_tasks, AnnotationTask, DropSummary, Split,
};
use prefmod::rlhfsim::{
    dpo_train, pair_ranking_accuracy, reinforce_train, BanditEnv, DpoConfig, DpoPair, PolicyTable,
    ReinforceConfig,
};
use prefmod::rmcore::{
    expo, expo_search, grid_search_weights, init_bt_from_regression, pairwise_accuracy, scalar_reward,
    AttributeWeights, Checkpoint, ExpoGrid, GridSearchResult, RewardModelParams, ValPair,
};
use prefmod::synth::{
    generate_bandit, generate_bench, generate_corpus, split_bandit_pairs, GenConfig, TaskFeatures,
};
use prefmod::trainer::{
    build_pair_examples, build_regression_examples, regression_loss, select_checkpoint, train_bt,
    train_regression, PairExample, TrainConfig, TrainOutput,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::failure::{config_error, data_error};
use crate::manifest::{sidecar, Run};

pub const SEED_ENV: &str = "PREFMOD_SEED";

pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| config_error(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(config_error(format!("{SEED_ENV}: {e}"))),
    }
}

/// Reads a JSON config; unreadable or malformed files are config errors.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    serde_json::from_str(&text).map_err(|e| data_error(format!("{}: {e}", path.display())))
}

fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(value)? + "\n")
}

fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn load_tasks(path: &Path) -> Result<Vec<AnnotationTask>> {
    read_tasks(path).with_context(|| path.display().to_string())
}

fn load_model(path: &Path) -> Result<(Checkpoint, RewardModelParams)> {
    let ckpt = Checkpoint::load(path).with_context(|| path.display().to_string())?;
    let params = ckpt.to_params()?;
    Ok((ckpt, params))
}

fn load_bench(path: &Path) -> Result<Vec<BenchTask>> {
    read_bench(path).with_context(|| path.display().to_string())
}

/// Writes a report to `out` (with a sidecar manifest) when given, and
/// returns it for stdout.
fn report<T: Serialize>(
    command: &str,
    value: &T,
    inputs: &[(&str, &Path)],
    out: Option<&Path>,
) -> Result<String> {
    let text = to_json_pretty(value)?;
    if let Some(out) = out {
        let mut run = Run::new(command, serde_json::Value::Null, None, sidecar(out));
        for (role, path) in inputs {
            run.input(role, path)?;
        }
        run.output("report", out, text.as_bytes())?;
        run.finish()?;
    }
    Ok(text)
}

#[derive(Debug, Clone, Args)]
pub struct GenSynthArgs {
    /// Generator config (JSON); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Bench tasks per category group.
    #[arg(long, default_value_t = 40)]
    pub bench_per_group: usize,
}

pub fn gen_synth(args: &GenSynthArgs) -> Result<String> {
    let mut cfg: GenConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => GenConfig::default(),
    };
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if args.bench_per_group == 0 {
        return Err(config_error("--bench-per-group must be >= 1"));
    }
    let corpus = generate_corpus(&cfg)?;
    let bench = generate_bench(&cfg, args.bench_per_group)?;

    let mut config = serde_json::to_value(&cfg)?;
    config["bench_per_group"] = args.bench_per_group.into();
    let mut run = Run::new("gen-synth", config, Some(cfg.seed), args.out.join("manifest.json"));
    if let Some(path) = &args.config {
        run.input("config", path)?;
    }
    run.output("tasks", &args.out.join("tasks.jsonl"), to_jsonl_string(&corpus.tasks)?.as_bytes())?;
    run.output("features", &args.out.join("features.jsonl"), to_jsonl_string(&corpus.features)?.as_bytes())?;
    run.output("oracle", &args.out.join("oracle.json"), to_json_pretty(&corpus.oracle)?.as_bytes())?;
    run.output("bench", &args.out.join("bench.jsonl"), to_jsonl_string(&bench)?.as_bytes())?;
    run.finish()?;
    Ok(format!(
        "{}\n",
        serde_json::json!({ "tasks": corpus.tasks.len(), "bench_tasks": bench.len(), "seed": cfg.seed })
    ))
}

#[derive(Debug, Clone, Args)]
pub struct AggregateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn aggregate(args: &AggregateArgs) -> Result<String> {
    let tasks = load_tasks(&args.input)?;
    let aggs = aggregate_all(&tasks);
    let summary = DropSummary::from_aggregates(&aggs);
    let mut run = Run::new("aggregate", serde_json::to_value(&summary)?, None, sidecar(&args.out));
    run.input("tasks", &args.input)?;
    run.output("aggregated", &args.out, to_jsonl_string(&aggs)?.as_bytes())?;
    run.finish()?;
    to_json_pretty(&summary)
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn kappa(args: &ReportArgs) -> Result<String> {
    let tasks = load_tasks(&args.input)?;
    let r = agreement_report(&tasks)?;
    report("kappa", &r, &[("tasks", &args.input)], args.out.as_deref())
}

pub fn diagnostics(args: &ReportArgs) -> Result<String> {
    let tasks = load_tasks(&args.input)?;
    let r = distribution_diagnostics(&tasks);
    report("diagnostics", &r, &[("tasks", &args.input)], args.out.as_deref())
}

#[derive(Debug, Clone, Args)]
pub struct JustifyArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Add a response-swapped copy of every record.
    #[arg(long)]
    pub flip: bool,
    /// One record per usable justification instead of one per task.
    #[arg(long)]
    pub all: bool,
}

pub fn justify(args: &JustifyArgs) -> Result<String> {
    let tasks = load_tasks(&args.input)?;
    let aggs = aggregate_all(&tasks);
    let options = JustifierOptions { flip: args.flip, all_justifications: args.all };
    let (records, stats) = build_justifier_records(&tasks, &aggs, options);
    let config = serde_json::json!({ "flip": args.flip, "all": args.all });
    let mut run = Run::new("justify", config, None, sidecar(&args.out));
    run.input("tasks", &args.input)?;
    run.output("records", &args.out, to_jsonl_string(&records)?.as_bytes())?;
    run.finish()?;
    to_json_pretty(&stats)
}

pub fn table5_text() -> String {
    table5(&DEFAULT_SCENARIOS).render()
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory written by gen-synth.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Start from this checkpoint; a regression checkpoint seeds a pairwise run.
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    /// Pick the saved checkpoint by bench accuracy instead of validation accuracy.
    #[arg(long)]
    pub bench: Option<PathBuf>,
    /// Number of lowest-validation-loss checkpoints considered for selection.
    #[arg(long, default_value_t = 3)]
    pub select_k: usize,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    steps: u64,
    final_train_loss: Option<f64>,
    final_val_loss: Option<f64>,
    best_val_step: Option<u64>,
    selected_step: u64,
    selection_metric: f64,
}

fn initial_params(cfg: &TrainConfig, dim: usize, init_from: Option<&Path>) -> Result<RewardModelParams> {
    let kind = cfg.loss_kind;
    let Some(path) = init_from else {
        return Ok(RewardModelParams::init_uniform(
            dim,
            cfg.hidden_dim,
            kind.output_dim(),
            kind.head_kind(),
            cfg.seed,
        )?);
    };
    let (_, params) = load_model(path)?;
    if kind.is_regression() || params.head_kind() == kind.head_kind() {
        return Ok(params);
    }
    init_bt_from_regression(&params).with_context(|| path.display().to_string())
}

fn bench_accuracy(model: &RewardModelParams, bench: &[BenchTask]) -> prefmod::Result<f64> {
    Ok(score_bench(|x| scalar_reward(model, None, x), bench)?.overall())
}

pub fn train(args: &TrainArgs) -> Result<String> {
    let mut cfg: TrainConfig = load_config(&args.config)?;
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let tasks_path = args.data.join("tasks.jsonl");
    let features_path = args.data.join("features.jsonl");
    let tasks = load_tasks(&tasks_path)?;
    let features: Vec<TaskFeatures> =
        read_jsonl_file(&features_path).with_context(|| features_path.display().to_string())?;
    let dim = features
        .first()
        .map(|f| f.features_1.len())
        .ok_or_else(|| data_error(format!("{}: no feature rows", features_path.display())))?;
    let params = initial_params(&cfg, dim, args.init_from.as_deref())?;
    let bench = args.bench.as_deref().map(load_bench).transpose()?;

    let mut run =
        Run::new("train", serde_json::to_value(&cfg)?, Some(cfg.seed), args.out.join("manifest.json"));
    run.input("config", &args.config)?;
    run.input("tasks", &tasks_path)?;
    run.input("features", &features_path)?;
    if let Some(path) = &args.init_from {
        run.input("init", path)?;
    }
    if let Some(path) = &args.bench {
        run.input("bench", path)?;
    }

    let kind = cfg.loss_kind;
    let (out, selection) = if kind.is_regression() {
        let train = build_regression_examples(&tasks, &features, Some(Split::Train))?;
        let val = build_regression_examples(&tasks, &features, Some(Split::Val))?;
        let out = train_regression(&cfg, &train, Some(&val), params)?;
        let selection = select_checkpoint(&out.checkpoints, args.select_k, |c| match &bench {
            Some(b) => bench_accuracy(&c.params, b),
            None if val.is_empty() => Ok(0.0),
            None => Ok(-regression_loss(&c.params, kind, &val)?),
        })?;
        (out, selection)
    } else {
        let aggs = aggregate_all(&tasks);
        let train = build_pair_examples(&tasks, &aggs, &features, Some(Split::Train))?;
        let val = build_pair_examples(&tasks, &aggs, &features, Some(Split::Val))?;
        let out = train_bt(&cfg, &train, Some(&val), params)?;
        let val_pairs: Vec<ValPair> = val.iter().map(PairExample::to_val_pair).collect();
        let selection = select_checkpoint(&out.checkpoints, args.select_k, |c| match &bench {
            Some(b) => bench_accuracy(&c.params, b),
            None if val_pairs.is_empty() => Ok(0.0),
            None => Ok(pairwise_accuracy(&c.params, &val_pairs)?),
        })?;
        run.output("val_pairs", &args.out.join("val_pairs.jsonl"), to_jsonl_string(&val)?.as_bytes())?;
        (out, selection)
    };

    write_checkpoints(&mut run, &args.out, &cfg, &out)?;
    let selected = &out.checkpoints[selection.chosen];
    let selected_json = selected.params.to_checkpoint(cfg.seed, selected.step).to_json()?;
    run.output("selected", &args.out.join("selected.json"), selected_json.as_bytes())?;
    run.finish()?;

    let last = out.checkpoints.last();
    to_json_pretty(&TrainSummary {
        steps: out.steps,
        final_train_loss: last.map(|c| c.train_loss),
        final_val_loss: last.and_then(|c| c.val_loss),
        best_val_step: out.best_val.map(|i| out.checkpoints[i].step),
        selected_step: selected.step,
        selection_metric: selection.metric,
    })
}

fn write_checkpoints(run: &mut Run, dir: &Path, cfg: &TrainConfig, out: &TrainOutput) -> Result<()> {
    for c in &out.checkpoints {
        let path = dir.join("checkpoints").join(format!("step-{:06}.json", c.step));
        run.output("checkpoint", &path, c.params.to_checkpoint(cfg.seed, c.step).to_json()?.as_bytes())?;
    }
    let final_json = out.params.to_checkpoint(cfg.seed, out.steps).to_json()?;
    run.output("final", &dir.join("final.json"), final_json.as_bytes())?;
    if let Some(i) = out.best_val {
        let c = &out.checkpoints[i];
        let json = c.params.to_checkpoint(cfg.seed, c.step).to_json()?;
        run.output("best_val", &dir.join("best_val.json"), json.as_bytes())?;
    }
    run.output("trace", &dir.join("trace.csv"), out.trace_csv().as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct GridWeightsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub bench: PathBuf,
    /// Grid spacing on [-1, 1]; 2 / step must be an integer.
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn grid_weights(args: &GridWeightsArgs) -> Result<String> {
    let (_, model) = load_model(&args.model)?;
    let bench = load_bench(&args.bench)?;
    let result = grid_search_weights(&model, &bench, args.step)?;
    report("grid-weights", &result, &[("model", &args.model), ("bench", &args.bench)], args.out.as_deref())
}

#[derive(Debug, Clone, Args)]
pub struct ExpoArgs {
    #[arg(long)]
    pub weak: PathBuf,
    #[arg(long)]
    pub strong: PathBuf,
    #[arg(long, conflicts_with = "search", required_unless_present = "search")]
    pub alpha: Option<f64>,
    /// Choose alpha by validation pairwise accuracy.
    #[arg(long, requires = "val")]
    pub search: bool,
    /// Validation pairs (JSONL with `chosen` and `rejected` feature vectors).
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Search grid (JSON); the default grid applies when omitted.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct ExpoSummary {
    alpha: f64,
    val_accuracy: Option<f64>,
    evaluated: Vec<(f64, f64)>,
}

pub fn expo_cmd(args: &ExpoArgs) -> Result<String> {
    let (_, weak) = load_model(&args.weak)?;
    let (strong_ckpt, strong) = load_model(&args.strong)?;
    let grid: ExpoGrid = match &args.grid {
        Some(path) => load_config(path)?,
        None => ExpoGrid::default(),
    };
    let mut run = Run::new(
        "expo",
        serde_json::json!({ "alpha": args.alpha, "search": args.search, "grid": grid }),
        None,
        sidecar(&args.out),
    );
    run.input("weak", &args.weak)?;
    run.input("strong", &args.strong)?;
    let val: Option<Vec<ValPair>> = match &args.val {
        Some(path) => {
            run.input("val", path)?;
            Some(read_jsonl_file(path).with_context(|| path.display().to_string())?)
        }
        None => None,
    };

    let (alpha, params, evaluated, val_accuracy) = match (args.alpha, &val) {
        (Some(alpha), _) => {
            if !alpha.is_finite() {
                return Err(config_error(format!("alpha {alpha} must be finite")));
            }
            let params = expo(&weak, &strong, alpha)?;
            let acc = val.as_deref().map(|v| pairwise_accuracy(&params, v)).transpose()?;
            (alpha, params, Vec::new(), acc)
        }
        (None, Some(v)) => {
            let r = expo_search(&weak, &strong, v, &grid)?;
            (r.alpha, r.params, r.evaluated, Some(r.accuracy))
        }
        (None, None) => return Err(config_error("expo needs --alpha or --search with --val")),
    };
    let ckpt = params.to_checkpoint(strong_ckpt.seed, strong_ckpt.step);
    run.output("model", &args.out, ckpt.to_json()?.as_bytes())?;
    run.finish()?;
    to_json_pretty(&ExpoSummary { alpha, val_accuracy, evaluated })
}

/// Either a bare weight vector or a grid-weights result.
#[derive(Deserialize)]
#[serde(untagged)]
enum WeightsFile {
    Search(GridSearchResult),
    Bare(AttributeWeights),
}

#[derive(Debug, Clone, Args)]
pub struct EvalBenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub bench: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn eval_bench(args: &EvalBenchArgs) -> Result<String> {
    let (_, model) = load_model(&args.model)?;
    let bench = load_bench(&args.bench)?;
    let weights = match &args.weights {
        Some(path) => Some(match read_json::<WeightsFile>(path)? {
            WeightsFile::Search(r) => r.weights,
            WeightsFile::Bare(w) => AttributeWeights::new(w.w)?,
        }),
        None => None,
    };
    let result: BenchReport = score_bench(|x| scalar_reward(&model, weights.as_ref(), x), &bench)?;
    let mut inputs = vec![("model", args.model.as_path()), ("bench", args.bench.as_path())];
    if let Some(w) = &args.weights {
        inputs.push(("weights", w.as_path()));
    }
    report("eval-bench", &result, &inputs, args.out.as_deref())
}

#[derive(Debug, Clone, Args)]
pub struct DpoArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Starting policy (its reference is kept); uniform when omitted.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Held-out pairs to report ranking accuracy on.
    #[arg(long)]
    pub heldout: Option<PathBuf>,
}

/// Smallest table covering every index in `pairs`.
fn shape_of(pairs: &[DpoPair]) -> (usize, usize) {
    let nc = pairs.iter().map(|p| p.context + 1).max().unwrap_or(0);
    let nr = pairs.iter().map(|p| p.chosen.max(p.rejected) + 1).max().unwrap_or(0);
    (nc, nr)
}

pub fn dpo(args: &DpoArgs) -> Result<String> {
    let mut cfg: DpoConfig = load_config(&args.config)?;
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let pairs: Vec<DpoPair> =
        read_jsonl_file(&args.pairs).with_context(|| args.pairs.display().to_string())?;
    if pairs.is_empty() {
        return Err(data_error(format!("{}: no pairs", args.pairs.display())));
    }
    let policy = match &args.policy {
        Some(path) => read_json::<PolicyTable>(path)?,
        None => {
            let (nc, nr) = shape_of(&pairs);
            PolicyTable::uniform(nc, nr)?
        }
    };
    let mut run =
        Run::new("dpo", serde_json::to_value(&cfg)?, Some(cfg.seed), args.out.join("manifest.json"));
    run.input("config", &args.config)?;
    run.input("pairs", &args.pairs)?;
    if let Some(path) = &args.policy {
        run.input("policy", path)?;
    }
    let out = dpo_train(&policy, &pairs, &cfg)?;
    let heldout_accuracy = match &args.heldout {
        Some(path) => {
            run.input("heldout", path)?;
            let held: Vec<DpoPair> = read_jsonl_file(path).with_context(|| path.display().to_string())?;
            Some(pair_ranking_accuracy(&out.policy, &held)?)
        }
        None => None,
    };
    run.output("policy", &args.out.join("policy.json"), to_json_line(&out.policy)?.as_bytes())?;
    run.output("trace", &args.out.join("trace.csv"), out.trace_csv().as_bytes())?;
    run.finish()?;
    let last = out.trace.last();
    to_json_pretty(&serde_json::json!({
        "steps": out.trace.len(),
        "final_loss": last.map(|r| r.loss),
        "final_mean_kl": last.map(|r| r.mean_kl),
        "train_accuracy": pair_ranking_accuracy(&out.policy, &pairs)?,
        "heldout_accuracy": heldout_accuracy,
    }))
}

#[derive(Debug, Clone, Args)]
pub struct ReinforceArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Starting policy (its reference is kept); uniform when omitted.
    #[arg(long)]
    pub policy: Option<PathBuf>,
}

pub fn reinforce(args: &ReinforceArgs) -> Result<String> {
    let mut cfg: ReinforceConfig = load_config(&args.config)?;
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    let env: BanditEnv = read_json(&args.env)?;
    let policy = match &args.policy {
        Some(path) => read_json::<PolicyTable>(path)?,
        None => PolicyTable::uniform(env.n_contexts(), env.n_responses())?,
    };
    if (policy.n_contexts(), policy.n_responses()) != (env.n_contexts(), env.n_responses()) {
        return Err(data_error("policy shape does not match the environment"));
    }
    let mut run =
        Run::new("reinforce", serde_json::to_value(&cfg)?, Some(cfg.seed), args.out.join("manifest.json"));
    run.input("config", &args.config)?;
    run.input("env", &args.env)?;
    if let Some(path) = &args.policy {
        run.input("policy", path)?;
    }
    let out = reinforce_train(&policy, &env, &cfg)?;
    run.output("policy", &args.out.join("policy.json"), to_json_line(&out.policy)?.as_bytes())?;
    run.output("trace", &args.out.join("trace.csv"), out.trace_csv().as_bytes())?;
    run.finish()?;
    let best_prob: Vec<f64> =
        (0..env.n_contexts()).map(|c| out.policy.probs(c)[env.best_response(c)]).collect();
    to_json_pretty(&serde_json::json!({
        "steps": out.trace.len(),
        "final_mean_reward": out.trace.last().map(|r| r.mean_reward),
        "run_mean_kl": out.run_mean_kl(),
        "best_response_prob": best_prob,
    }))
}

#[derive(Debug, Clone, Args)]
pub struct GenBanditArgs {
    #[arg(long, default_value_t = 4)]
    pub contexts: usize,
    #[arg(long, default_value_t = 8)]
    pub responses: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Share of non-adjacent pairs placed in the training split.
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    /// Reward gaps separating margin 1, 2 and 3 pairs.
    #[arg(long, num_args = 2, default_values_t = [0.5, 1.5])]
    pub thresholds: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn gen_bandit(args: &GenBanditArgs) -> Result<String> {
    let seed = seed_override()?.unwrap_or(args.seed);
    if !(0.0..=1.0).contains(&args.train_fraction) {
        return Err(config_error("--train-fraction must lie in [0, 1]"));
    }
    let thresholds = [args.thresholds[0], args.thresholds[1]];
    let env = generate_bandit(args.contexts, args.responses, seed)?;
    let (train, heldout) = split_bandit_pairs(&env, thresholds, args.train_fraction, seed);
    let config = serde_json::json!({
        "contexts": args.contexts,
        "responses": args.responses,
        "train_fraction": args.train_fraction,
        "thresholds": thresholds,
    });
    let mut run = Run::new("gen-bandit", config, Some(seed), args.out.join("manifest.json"));
    run.output("env", &args.out.join("env.json"), to_json_pretty(&env)?.as_bytes())?;
    run.output("train_pairs", &args.out.join("train_pairs.jsonl"), to_jsonl_string(&train)?.as_bytes())?;
    run.output(
        "heldout_pairs",
        &args.out.join("heldout_pairs.jsonl"),
        to_jsonl_string(&heldout)?.as_bytes(),
    )?;
    run.finish()?;
    Ok(format!("{}\n", serde_json::json!({ "train_pairs": train.len(), "heldout_pairs": heldout.len() })))
}
