use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use prefmod::rmcore::ExpoGrid;
use prefmod::synth::GenConfig;
use prefmod::trainer::{LossKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::commands::{
    aggregate, eval_bench, expo_cmd, gen_synth, load_config, seed_override, train, AggregateArgs,
    EvalBenchArgs, ExpoArgs, GenSynthArgs, TrainArgs,
};
use crate::failure::config_error;
use crate::manifest::{write_atomic, Run};

fn default_bench_per_group() -> usize {
    40
}

fn default_regression() -> TrainConfig {
    TrainConfig { learning_rate: 3e-3, epochs: 2, ..TrainConfig::new(LossKind::RegressionHelpfulness) }
}

fn default_bt() -> TrainConfig {
    TrainConfig { epochs: 2, ..TrainConfig::new(LossKind::BtScaled) }
}

/// Everything the end-to-end run needs. A manifest written by a previous
/// pipeline run is accepted in its place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub gen: GenConfig,
    #[serde(default = "default_bench_per_group")]
    pub bench_per_group: usize,
    #[serde(default = "default_regression")]
    pub regression: TrainConfig,
    #[serde(default = "default_bt")]
    pub bt: TrainConfig,
    /// Fixed extrapolation factor; searched on validation pairs when absent.
    #[serde(default)]
    pub expo_alpha: Option<f64>,
    #[serde(default)]
    pub expo_grid: ExpoGrid,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Pipeline config, or the manifest of an earlier pipeline run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn resolve_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let mut value: serde_json::Value = load_config(path)?;
    if value.get("command").and_then(|c| c.as_str()) == Some("pipeline") {
        value = value.get("config").cloned().unwrap_or_default();
    }
    serde_json::from_value(value).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn write_stage_config<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, (serde_json::to_string_pretty(value)? + "\n").as_bytes())
}

fn parse(stdout: &str) -> Result<serde_json::Value> {
    Ok(serde_json::from_str(stdout)?)
}

pub fn pipeline(args: &PipelineArgs) -> Result<String> {
    let mut cfg = resolve_config(args.config.as_deref())?;
    if let Some(seed) = seed_override()? {
        cfg.gen.seed = seed;
        cfg.regression.seed = seed;
        cfg.bt.seed = seed;
    }
    if !cfg.regression.loss_kind.is_regression() || cfg.bt.loss_kind.is_regression() {
        return Err(config_error("pipeline needs a regression stage followed by a pairwise stage"));
    }
    let out = &args.out;
    let cfg_dir = out.join("config");
    write_stage_config(&cfg_dir.join("gen.json"), &cfg.gen)?;
    write_stage_config(&cfg_dir.join("regression.json"), &cfg.regression)?;
    write_stage_config(&cfg_dir.join("bt.json"), &cfg.bt)?;
    write_stage_config(&cfg_dir.join("expo_grid.json"), &cfg.expo_grid)?;

    let data = out.join("data");
    let gen = gen_synth(&GenSynthArgs {
        config: Some(cfg_dir.join("gen.json")),
        out: data.clone(),
        bench_per_group: cfg.bench_per_group,
    })?;
    let agg =
        aggregate(&AggregateArgs { input: data.join("tasks.jsonl"), out: out.join("aggregated.jsonl") })?;
    let reg = train(&TrainArgs {
        config: cfg_dir.join("regression.json"),
        data: data.clone(),
        out: out.join("regression"),
        init_from: None,
        bench: None,
        select_k: 3,
    })?;
    let bt = train(&TrainArgs {
        config: cfg_dir.join("bt.json"),
        data: data.clone(),
        out: out.join("bt"),
        init_from: Some(out.join("regression").join("final.json")),
        bench: None,
        select_k: 3,
    })?;
    let expo = expo_cmd(&ExpoArgs {
        weak: out.join("regression").join("final.json"),
        strong: out.join("bt").join("selected.json"),
        alpha: cfg.expo_alpha,
        search: cfg.expo_alpha.is_none(),
        val: Some(out.join("bt").join("val_pairs.jsonl")),
        grid: Some(cfg_dir.join("expo_grid.json")),
        out: out.join("expo.json"),
    })?;
    let eval = |model: PathBuf, report: &str| {
        eval_bench(&EvalBenchArgs {
            model,
            weights: None,
            bench: data.join("bench.jsonl"),
            out: Some(out.join(report)),
        })
    };
    let eval_bt = eval(out.join("bt").join("selected.json"), "eval_bt.json")?;
    let eval_expo = eval(out.join("expo.json"), "eval_expo.json")?;

    let overall = |text: &str| -> Result<serde_json::Value> { Ok(parse(text)?["overall"].clone()) };
    let summary = serde_json::json!({
        "gen": parse(&gen)?,
        "aggregate": parse(&agg)?,
        "regression": parse(&reg)?,
        "bt": parse(&bt)?,
        "expo_alpha": parse(&expo)?["alpha"],
        "expo_val_accuracy": parse(&expo)?["val_accuracy"],
        "bench_overall_bt": overall(&eval_bt)?,
        "bench_overall_expo": overall(&eval_expo)?,
    });
    let summary_text = serde_json::to_string_pretty(&summary)? + "\n";

    let mut run =
        Run::new("pipeline", serde_json::to_value(&cfg)?, Some(cfg.gen.seed), out.join("manifest.json"));
    if let Some(path) = &args.config {
        run.input("config", path)?;
    }
    for (role, rel) in [
        ("tasks", "data/tasks.jsonl"),
        ("features", "data/features.jsonl"),
        ("oracle", "data/oracle.json"),
        ("bench", "data/bench.jsonl"),
        ("aggregated", "aggregated.jsonl"),
        ("regression_final", "regression/final.json"),
        ("regression_trace", "regression/trace.csv"),
        ("bt_final", "bt/final.json"),
        ("bt_selected", "bt/selected.json"),
        ("bt_trace", "bt/trace.csv"),
        ("expo", "expo.json"),
        ("eval_bt", "eval_bt.json"),
        ("eval_expo", "eval_expo.json"),
    ] {
        run.existing_output(role, &out.join(rel))?;
    }
    run.output("summary", &out.join("summary.json"), summary_text.as_bytes())?;
    run.finish()?;
    Ok(summary_text)
}
