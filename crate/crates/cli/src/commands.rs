use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use moira::attribution::{attribution_campaign, CampaignResult};
use moira::data::{load_dataset, synthesize, MaskedDataset, SelectionParams, SynthConfig};
use moira::metrics::Metrics;
use moira::model::Model;
use moira::training::{
    ablation_suite, ablation_table_csv, model_config_for, prepare, pretrain, run_seeds, PreparedData,
};
use moira::{MoiraError, Result};
use serde_json::json;

use crate::config::{read_json, PipelineConfig, Overrides};
use crate::output::{input_ref, Outputs, RunManifest, RUN_FORMAT, RUN_MANIFEST};

#[derive(Debug, Parser)]
#[command(name = "moira", version, about = "Multi-omics classification from incomplete modalities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-modality dataset.
    Synth(SynthArgs),
    /// Select features by ANOVA F-score on the training split.
    Select(DataArgs),
    /// Pretrain the per-modality autoencoders.
    Pretrain(DataArgs),
    /// Train and evaluate, once per seed.
    Train(DataArgs),
    /// Run every ablation condition.
    Ablate(DataArgs),
    /// Integrated-gradients feature frequency campaign.
    Attribute(DataArgs),
    /// Summarize the results found in an output directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Synthetic dataset config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset manifest (`dataset.json`).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Pipeline config (JSON); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `train`, `ablate` or `attribute`.
    pub input: PathBuf,
    /// Also write `report.md` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Process exit code for an error.
pub fn exit_code(err: &MoiraError) -> i32 {
    match err {
        MoiraError::Run { source, .. } => exit_code(source),
        MoiraError::Config { .. } | MoiraError::InvalidProbability(_) => 2,
        MoiraError::Integrity(_) | MoiraError::Parse { .. } | MoiraError::Csv(_) => 3,
        _ => 4,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Select(a) => cmd_select(&a),
        Command::Pretrain(a) => cmd_pretrain(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Attribute(a) => cmd_attribute(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn manifest(command: &str, config: serde_json::Value, inputs: &[&Path], seeds: Vec<u64>) -> Result<RunManifest> {
    Ok(RunManifest {
        format_version: RUN_FORMAT.into(),
        command: command.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config,
        inputs: inputs.iter().map(|p| input_ref(p)).collect::<Result<_>>()?,
        seeds,
        outputs: Vec::new(),
        content_sha256: String::new(),
        created_unix: 0,
    })
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = read_json(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let ds = synthesize(&cfg)?;
    log::info!("synthesized {} samples over {} modalities", ds.n_samples(), ds.n_modalities());
    let mut out = Outputs::new(&a.out);
    out.dataset("", ds, SelectionParams::default());
    out.commit(manifest("synth", serde_json::to_value(&cfg)?, &[&a.config], vec![cfg.seed])?)?;
    Ok(())
}

/// Loads and verifies the dataset and resolves the config; nothing is
/// written before this succeeds.
fn load(a: &DataArgs) -> Result<(MaskedDataset, PipelineConfig, Vec<&Path>)> {
    let cfg = PipelineConfig::load(a.config.as_deref())?.resolve(&a.overrides)?;
    let (ds, _) = load_dataset(&a.dataset)?;
    let mut inputs = vec![a.dataset.as_path()];
    if let Some(c) = &a.config {
        inputs.push(c.as_path());
    }
    Ok((ds, cfg, inputs))
}

fn prepared(ds: &MaskedDataset, cfg: &PipelineConfig) -> Result<PreparedData> {
    let p = prepare(ds, &cfg.prepare, cfg.seed)?;
    log::info!("split: {} train, {} test", p.train.n_samples(), p.test.n_samples());
    Ok(p)
}

fn metric_notes() -> serde_json::Value {
    json!({
        "positive_class": 1,
        "threshold": 0.5,
        "auprc": "step interpolation over descending score thresholds",
        "precision_without_positive_predictions": 0.0,
    })
}

pub fn cmd_select(a: &DataArgs) -> Result<()> {
    let (ds, cfg, inputs) = load(a)?;
    let p = prepared(&ds, &cfg)?;
    let mut selected = ds.clone();
    let mut modalities = Vec::new();
    for (m, sel) in p.selections.iter().enumerate() {
        let ids: Vec<&String> = sel.selected.iter().map(|&j| &ds.modalities[m].feature_ids[j]).collect();
        let scores: Vec<f64> = sel.selected.iter().map(|&j| sel.scores[j]).collect();
        modalities.push(json!({ "name": sel.modality_name, "selected": ids, "f_scores": scores }));
        selected.select_features(m, &sel.selected);
    }
    let mut out = Outputs::new(&a.out);
    out.json(
        "selection.json",
        &json!({
            "manifest": RUN_MANIFEST,
            "top_k": cfg.prepare.top_k,
            "train_samples": p.train.sample_ids,
            "test_samples": p.test.sample_ids,
            "modalities": modalities,
        }),
    )?;
    out.dataset("", selected, SelectionParams { top_k: cfg.prepare.top_k });
    out.commit(manifest("select", serde_json::to_value(&cfg)?, &inputs, vec![cfg.seed])?)?;
    Ok(())
}

pub fn cmd_pretrain(a: &DataArgs) -> Result<()> {
    let (ds, cfg, inputs) = load(a)?;
    let p = prepared(&ds, &cfg)?;
    let train = p.train.silence(&cfg.train.silenced_modalities)?;
    let mut model = Model::new(model_config_for(&cfg.model, &train), cfg.seed)?;
    let report = pretrain(&mut model, &train, &cfg.train)?;
    let mut out = Outputs::new(&a.out);
    out.json("pretrain.json", &json!({ "manifest": RUN_MANIFEST, "report": report }))?;
    out.json("checkpoint.json", &model.to_checkpoint(cfg.seed))?;
    out.commit(manifest("pretrain", serde_json::to_value(&cfg)?, &inputs, vec![cfg.seed])?)?;
    Ok(())
}

pub fn cmd_train(a: &DataArgs) -> Result<()> {
    let (ds, cfg, inputs) = load(a)?;
    let p = prepared(&ds, &cfg)?;
    let seeds = cfg.seeds(cfg.runs);
    let (mut result, models) = run_seeds(&p.train, &p.test, &cfg.model, &cfg.train, &seeds, cfg.parallel)?;
    result.runs[0].checkpoint_path = Some("checkpoint.json".into());
    log::info!(
        "mean accuracy {:.4} over {} runs",
        result.mean.accuracy,
        result.runs.len()
    );
    let mut out = Outputs::new(&a.out);
    out.json(
        "results.json",
        &json!({
            "manifest": RUN_MANIFEST,
            "metric_notes": metric_notes(),
            "n_train": p.train.n_samples(),
            "n_test": p.test.n_samples(),
            "runs": result.runs,
            "aggregate": { "n_runs": result.runs.len(), "mean": result.mean, "std": result.std },
        }),
    )?;
    out.json("checkpoint.json", &models[0].to_checkpoint(seeds[0]))?;
    out.commit(manifest("train", serde_json::to_value(&cfg)?, &inputs, seeds)?)?;
    Ok(())
}

/// `Full model` -> `full-model`, `--(aux+CLIP)` -> `minus-aux-clip`.
pub fn slug(label: &str) -> String {
    let (prefix, rest) = match label.strip_prefix("--") {
        Some(r) => ("minus-", r),
        None => ("", label),
    };
    let mut s = String::from(prefix);
    for c in rest.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.is_empty() && !s.ends_with('-') {
            s.push('-');
        }
    }
    s.trim_end_matches('-').to_string()
}

pub fn cmd_ablate(a: &DataArgs) -> Result<()> {
    let (ds, cfg, inputs) = load(a)?;
    let p = prepared(&ds, &cfg)?;
    let rows = ablation_suite(
        &p.train,
        &p.test,
        &cfg.model,
        &cfg.train,
        cfg.trimodal.as_deref(),
        cfg.runs,
        cfg.seed,
        cfg.parallel,
    )?;
    let mut out = Outputs::new(&a.out);
    out.file("ablation.csv", ablation_table_csv(&rows).into_bytes());
    for r in &rows {
        if let Some(res) = &r.result {
            out.json(
                format!("conditions/{}.json", slug(&r.condition)),
                &json!({
                    "manifest": RUN_MANIFEST,
                    "condition": r.condition,
                    "metric_notes": metric_notes(),
                    "runs": res.runs,
                    "aggregate": { "n_runs": res.runs.len(), "mean": res.mean, "std": res.std },
                }),
            )?;
        }
    }
    out.commit(manifest("ablate", serde_json::to_value(&cfg)?, &inputs, cfg.seeds(cfg.runs))?)?;
    Ok(())
}

pub fn cmd_attribute(a: &DataArgs) -> Result<()> {
    let (ds, cfg, inputs) = load(a)?;
    let p = prepared(&ds, &cfg)?;
    let res = attribution_campaign(
        &p.train,
        &p.test,
        &cfg.model,
        &cfg.train,
        &cfg.attribution,
        cfg.seed,
        cfg.parallel,
    )?;
    let mut out = Outputs::new(&a.out);
    for rep in &res.reports {
        out.file(
            format!("attribution/{}.csv", rep.modality_name),
            CampaignResult::report_csv(rep).into_bytes(),
        );
    }
    out.json("campaign.json", &json!({ "manifest": RUN_MANIFEST, "campaign": res }))?;
    out.commit(manifest("attribute", serde_json::to_value(&cfg)?, &inputs, res.seeds.clone())?)?;
    Ok(())
}

fn metrics_line(name: &str, mean: &Metrics, std: Option<&Metrics>) -> String {
    let cell = |k: usize| match std {
        Some(s) => format!("{:.4} ± {:.4}", mean.values()[k], s.values()[k]),
        None => format!("{:.4}", mean.values()[k]),
    };
    format!("| {name} | {} | {} | {} | {} |", cell(0), cell(1), cell(2), cell(3))
}

pub fn render_report(dir: &Path) -> Result<String> {
    let mut s = String::new();
    let header = format!("| | {} |\n|---|---|---|---|---|", Metrics::NAMES.join(" | "));
    let read = |name: &str| -> Result<Option<serde_json::Value>> {
        let path = dir.join(name);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(read_json(&path)?))
    };
    let parse_metrics = |v: &serde_json::Value| -> Result<Metrics> { Ok(serde_json::from_value(v.clone())?) };
    if let Some(v) = read("results.json")? {
        let _ = writeln!(s, "## Training\n\n{header}");
        for r in v["runs"].as_array().into_iter().flatten() {
            let _ = writeln!(s, "{}", metrics_line(&format!("seed {}", r["seed"]), &parse_metrics(&r["metrics"])?, None));
        }
        let agg = &v["aggregate"];
        let _ = writeln!(
            s,
            "{}\n",
            metrics_line("mean ± std", &parse_metrics(&agg["mean"])?, Some(&parse_metrics(&agg["std"])?))
        );
    }
    let ablation = dir.join("ablation.csv");
    if ablation.exists() {
        let text = std::fs::read_to_string(&ablation)?;
        let _ = writeln!(s, "## Ablation\n\n```\n{}```\n", text);
    }
    if let Some(v) = read("campaign.json")? {
        let c: CampaignResult = serde_json::from_value(v["campaign"].clone())?;
        let _ = writeln!(s, "## Attribution ({} runs, {} steps)\n", c.seeds.len(), c.steps);
        for rep in &c.reports {
            let _ = writeln!(s, "### {}\n\n| rank | feature | count |\n|---|---|---|", rep.modality_name);
            for r in &rep.top {
                let _ = writeln!(s, "| {} | {} | {} |", r.rank, r.feature_id, r.count);
            }
            s.push('\n');
        }
    }
    if s.is_empty() {
        return Err(MoiraError::Integrity(format!("no results found in {}", dir.display())));
    }
    Ok(s)
}

pub fn cmd_report(a: &ReportArgs) -> Result<()> {
    let text = render_report(&a.input)?;
    print!("{text}");
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("report.md"), &text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_slugs() {
        assert_eq!(slug("Full model"), "full-model");
        assert_eq!(slug("Trimodal (union)"), "trimodal-union");
        assert_eq!(slug("--mRNA"), "minus-mrna");
        assert_eq!(slug("--(aux+CLIP)"), "minus-aux-clip");
    }

    #[test]
    fn run_errors_keep_their_cause_exit_code() {
        let inner = MoiraError::Integrity("x".into());
        let e = MoiraError::Run {
            seed: 1,
            source: Box::new(inner),
        };
        assert_eq!(exit_code(&e), 3);
        assert_eq!(exit_code(&MoiraError::Contract("x".into())), 4);
    }
}
