//! Command-line interface: dataset generation, training, evaluation,
//! report rendering, and the 2x2 ablation sweep.
//!
//! Exit codes are a stable contract: 0 success, 2 usage/config error,
//! 3 runtime failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    generate_synthetic, load_jsonl, write_jsonl, AttributeSpec, CorruptMode, CorruptionFlag,
    SynthConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{fit_prototypes, render_markdown, MetricsReport};
use crate::trainer::{
    checkpoint_load, evaluate, train_with_meta, DecisionVariable, RunMeta, SinkhornGradMode,
    TrainConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "faircontrast",
    about = "Robust-fair contrastive training on paired-embedding datasets",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic biased/corrupted JSONL dataset.
    GenData(GenDataArgs),
    /// Train a model and write a run directory.
    Train(TrainArgs),
    /// Evaluate a trained run on a test set, one report per attribute.
    Eval(EvalArgs),
    /// Render the per-attribute reports of a run as a markdown table.
    Report(ReportArgs),
    /// Run the 2x2 ablation grid (mining on/off x fairness on/off).
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Number of samples [default split sizes: 7000 train / 1000 val / 2000 test]
    #[arg(long, default_value_t = 7000)]
    pub n: usize,

    /// Feature dimensions as IMAGE,TEXT
    #[arg(long, default_value = "64,48", value_parser = parse_dims)]
    pub dims: (usize, usize),

    /// Latent dimension shared by image and text features
    #[arg(long, default_value_t = 16)]
    pub latent: usize,

    /// Attribute spec name=cardinality:p1,p2,... (repeatable)
    #[arg(long, value_parser = parse_group_spec)]
    pub groups: Vec<(String, u32, Vec<f64>)>,

    /// Group bias name=noise1,noise2,...:shift1,shift2,... (repeatable)
    #[arg(long, value_parser = parse_bias_spec)]
    pub bias: Vec<(String, Vec<f64>, Vec<f64>)>,

    /// Baseline feature-noise standard deviation
    #[arg(long, default_value_t = 0.3)]
    pub base_noise: f64,

    /// Label signal multiplier (0 = labels independent of features)
    #[arg(long, default_value_t = 1.0)]
    pub label_signal: f64,

    /// Fraction of samples to corrupt
    #[arg(long, default_value_t = 0.0)]
    pub corrupt_rate: f64,

    /// Corruption mode: swap | noise
    #[arg(long, default_value = "swap")]
    pub corrupt_mode: CorruptMode,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Seed for the latent maps; give train/val/test splits the same
    /// model seed and different --seed values
    #[arg(long)]
    pub model_seed: Option<u64>,

    /// Output JSONL path
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Default)]
pub struct TrainOverrides {
    /// Config file (JSON, TrainConfig fields); flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Epochs [default: 10]
    #[arg(long)]
    pub epochs: Option<u32>,

    /// Batch size [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Learning rate [default: 1e-5]
    #[arg(long)]
    pub lr: Option<f64>,

    /// Adam beta1 [default: 0.1]
    #[arg(long)]
    pub beta1: Option<f64>,

    /// Adam beta2 [default: 0.1]
    #[arg(long)]
    pub beta2: Option<f64>,

    /// Decoupled weight decay [default: 6e-5]
    #[arg(long)]
    pub weight_decay: Option<f64>,

    /// Fairness regularizer strength lambda [default: 1e-7]
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Sinkhorn blur epsilon [default: 1e-4]
    #[arg(long)]
    pub eps: Option<f64>,

    /// Lower-tail threshold multiplier alpha [default: 3]
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Upper-tail threshold multiplier beta [default: 3]
    #[arg(long)]
    pub beta: Option<f64>,

    /// Protected attribute for the fairness term
    #[arg(long)]
    pub attr: Option<String>,

    /// Embedding dimension [default: 16]
    #[arg(long)]
    pub embed_dim: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Disable dynamic bad-pair mining
    #[arg(long)]
    pub no_dbpm: bool,

    /// Disable the fairness regularizer
    #[arg(long)]
    pub no_fairness: bool,

    /// Mining decision variable: current-loss | historical-mean
    #[arg(long)]
    pub dbpm_decision: Option<String>,

    /// Sinkhorn gradient mode: envelope | finite-difference
    #[arg(long)]
    pub sinkhorn_grad: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset (JSONL)
    #[arg(long)]
    pub train: PathBuf,

    /// Validation dataset (JSONL)
    #[arg(long)]
    pub val: PathBuf,

    /// Run directory to create
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory (uses its config and best checkpoint)
    #[arg(long)]
    pub run: PathBuf,

    /// Checkpoint to evaluate instead of the run's best.json
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Test dataset (JSONL)
    #[arg(long)]
    pub test: PathBuf,

    /// Train dataset used to fit class prototypes (JSONL)
    #[arg(long)]
    pub train: PathBuf,

    /// Comma-separated attribute names (default: all in the test header)
    #[arg(long)]
    pub attrs: Option<String>,

    /// Decision threshold override
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory containing reports/attr_*.json
    #[arg(long)]
    pub run: PathBuf,

    /// Output markdown path (default: RUN/report.md)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,

    #[arg(long)]
    pub val: PathBuf,

    /// Test dataset for the combined comparison table (default: val set)
    #[arg(long)]
    pub test: Option<PathBuf>,

    /// Sweep directory; one run subdirectory per cell
    #[arg(long)]
    pub out: PathBuf,

    /// Run the four cells on worker threads
    #[arg(long)]
    pub parallel: bool,

    #[command(flatten)]
    pub overrides: TrainOverrides,
}

// --- flag parsing helpers --------------------------------------------------

fn parse_dims(s: &str) -> std::result::Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected IMAGE,TEXT, got {s:?}"));
    }
    let m = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
    let n = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
    Ok((m, n))
}

/// `name=cardinality:p1,p2,...`
fn parse_group_spec(s: &str) -> std::result::Result<(String, u32, Vec<f64>), String> {
    let (name, rest) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=card:props, got {s:?}"))?;
    let (card, props) = rest
        .split_once(':')
        .ok_or_else(|| format!("expected name=card:props, got {s:?}"))?;
    let card: u32 = card.trim().parse().map_err(|e| format!("bad cardinality: {e}"))?;
    let props: Vec<f64> = props
        .split(',')
        .map(|p| p.trim().parse().map_err(|e| format!("bad proportion: {e}")))
        .collect::<std::result::Result<_, String>>()?;
    if props.len() != card as usize {
        return Err(format!(
            "{} proportions for cardinality {card}",
            props.len()
        ));
    }
    Ok((name.to_string(), card, props))
}

/// `name=noise1,noise2,...:shift1,shift2,...`
fn parse_bias_spec(s: &str) -> std::result::Result<(String, Vec<f64>, Vec<f64>), String> {
    let (name, rest) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=noises:shifts, got {s:?}"))?;
    let (noises, shifts) = rest
        .split_once(':')
        .ok_or_else(|| format!("expected name=noises:shifts, got {s:?}"))?;
    let parse_list = |part: &str| -> std::result::Result<Vec<f64>, String> {
        part.split(',')
            .map(|p| p.trim().parse().map_err(|e| format!("bad value: {e}")))
            .collect()
    };
    Ok((name.to_string(), parse_list(noises)?, parse_list(shifts)?))
}

impl TrainOverrides {
    /// Config file first, then flag overrides.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg: TrainConfig = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => TrainConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        take!(epochs, batch_size, lr, beta1, beta2, weight_decay, lambda, eps, alpha, beta, attr, embed_dim, seed);
        if self.no_dbpm {
            cfg.dbpm = false;
        }
        if self.no_fairness {
            cfg.fairness = false;
        }
        if let Some(d) = &self.dbpm_decision {
            cfg.dbpm_decision = match d.as_str() {
                "current-loss" => DecisionVariable::CurrentLoss,
                "historical-mean" => DecisionVariable::HistoricalMean,
                other => {
                    return Err(Error::Config(format!(
                        "unknown dbpm decision mode {other:?}"
                    )))
                }
            };
        }
        if let Some(g) = &self.sinkhorn_grad {
            cfg.sinkhorn_grad = match g.as_str() {
                "envelope" => SinkhornGradMode::Envelope,
                "finite-difference" => SinkhornGradMode::FiniteDifference,
                other => {
                    return Err(Error::Config(format!(
                        "unknown sinkhorn gradient mode {other:?}"
                    )))
                }
            };
        }
        Ok(cfg)
    }
}

// --- command implementations ------------------------------------------------

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(args) => cmd_gen_data(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Report(args) => cmd_report(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    }
}

pub fn cmd_gen_data(args: &GenDataArgs) -> Result<()> {
    let mut attributes: Vec<AttributeSpec> = if args.groups.is_empty() {
        vec![AttributeSpec::uniform("group", 2)]
    } else {
        args.groups
            .iter()
            .map(|(name, card, props)| AttributeSpec {
                name: name.clone(),
                cardinality: *card,
                proportions: props.clone(),
                noise_scale: Vec::new(),
                label_shift: Vec::new(),
            })
            .collect()
    };
    for (name, noises, shifts) in &args.bias {
        let spec = attributes
            .iter_mut()
            .find(|a| &a.name == name)
            .ok_or_else(|| Error::Config(format!("--bias names unknown attribute {name:?}")))?;
        spec.noise_scale = noises.clone();
        spec.label_shift = shifts.clone();
    }

    let cfg = SynthConfig {
        n_samples: args.n,
        latent_dim: args.latent,
        dim_image: args.dims.0,
        dim_text: args.dims.1,
        attributes,
        base_noise: args.base_noise,
        label_signal: args.label_signal,
        corrupt_rate: args.corrupt_rate,
        corrupt_mode: args.corrupt_mode,
        seed: args.seed,
        model_seed: args.model_seed,
    };
    let set = generate_synthetic(&cfg)?;
    write_jsonl(&set, &args.out)?;

    println!("wrote {} samples to {}", set.len(), args.out.display());
    for spec in &cfg.attributes {
        let mut counts = vec![0usize; spec.cardinality as usize];
        for s in &set.samples {
            counts[s.attrs[&spec.name] as usize] += 1;
        }
        println!("  {}: {:?}", spec.name, counts);
    }
    let corrupted = set
        .samples
        .iter()
        .filter(|s| {
            matches!(
                s.corrupted,
                Some(CorruptionFlag::Noisy) | Some(CorruptionFlag::Faulty)
            )
        })
        .count();
    println!("  corrupted: {corrupted}");
    let positives = set.samples.iter().filter(|s| s.label == 1).count();
    println!("  positives: {positives}");
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = args.overrides.resolve()?;
    let train_set = load_jsonl(&args.train)?;
    let val_set = load_jsonl(&args.val)?;
    let meta = RunMeta {
        train_path: Some(args.train.display().to_string()),
        val_path: Some(args.val.display().to_string()),
    };
    let arts = train_with_meta(&cfg, &train_set, &val_set, Some(&args.out), &meta)?;
    println!(
        "trained {} epochs; best val AUC {:.4} at epoch {}",
        cfg.epochs, arts.best_val_auc, arts.best_epoch
    );
    println!("run directory: {}", args.out.display());
    Ok(())
}

/// On-disk per-attribute report schema.
#[derive(Debug, Serialize, Deserialize)]
pub struct AttrReportFile {
    pub attribute: String,
    pub auc: f64,
    pub es_auc: f64,
    pub dpd: f64,
    pub deodds: f64,
    pub group_auc: BTreeMap<String, f64>,
    pub threshold: f64,
    pub omitted_groups: Vec<u32>,
}

impl AttrReportFile {
    pub fn from_report(attribute: &str, r: &MetricsReport) -> AttrReportFile {
        AttrReportFile {
            attribute: attribute.to_string(),
            auc: r.auc,
            es_auc: r.es_auc,
            dpd: r.dpd,
            deodds: r.deodds,
            group_auc: r
                .group_auc
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            threshold: r.threshold,
            omitted_groups: r.omitted_groups.clone(),
        }
    }

    pub fn to_report(&self) -> MetricsReport {
        MetricsReport {
            auc: self.auc,
            group_auc: self
                .group_auc
                .iter()
                .filter_map(|(k, v)| k.parse().ok().map(|k| (k, *v)))
                .collect(),
            es_auc: self.es_auc,
            dpd: self.dpd,
            deodds: self.deodds,
            threshold: self.threshold,
            omitted_groups: self.omitted_groups.clone(),
        }
    }
}

fn run_config(run: &Path) -> Result<TrainConfig> {
    let path = run.join("config.json");
    if !path.is_file() {
        return Err(Error::Config(format!(
            "{} is not a run directory (no config.json)",
            run.display()
        )));
    }
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Integrity(format!("config.json: {e}")))?;
    serde_json::from_value(
        value
            .get("config")
            .cloned()
            .ok_or_else(|| Error::Integrity("config.json lacks a config field".into()))?,
    )
    .map_err(|e| Error::Integrity(format!("config.json: {e}")))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = run_config(&args.run)?;
    let ckpt_path = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| args.run.join("best.json"));
    if !ckpt_path.exists() {
        return Err(Error::Config(format!(
            "missing checkpoint {}",
            ckpt_path.display()
        )));
    }
    let ckpt = checkpoint_load(&ckpt_path)?;
    let test_set = load_jsonl(&args.test)?;
    let train_set = load_jsonl(&args.train)?;
    let threshold = args.threshold.unwrap_or(cfg.threshold);

    let attrs: Vec<String> = match &args.attrs {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => test_set.header.attributes.keys().cloned().collect(),
    };

    let protos = fit_prototypes(&ckpt.params, &train_set)?;
    let results = evaluate(&ckpt.params, &test_set, &attrs, &protos, threshold);

    let reports_dir = args.run.join("reports");
    std::fs::create_dir_all(&reports_dir)?;
    let mut failures = Vec::new();
    for (attr, result) in &results {
        match result {
            Ok(r) => {
                let file = AttrReportFile::from_report(attr, r);
                crate::trainer::write_json(
                    &reports_dir.join(format!("attr_{attr}.json")),
                    &file,
                )?;
                println!(
                    "{attr}: AUC {:.4} ES-AUC {:.4} DPD {:.4} DEOdds {:.4}",
                    r.auc, r.es_auc, r.dpd, r.deodds
                );
            }
            Err(e) => {
                println!("{attr}: failed: {e}");
                failures.push(format!("{attr}: {e}"));
            }
        }
    }
    if !failures.is_empty() && failures.len() == results.len() {
        return Err(Error::Metric(failures.join("; ")));
    }
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let reports_dir = args.run.join("reports");
    if !reports_dir.is_dir() {
        return Err(Error::Config(format!(
            "no reports directory in {}; run eval first",
            args.run.display()
        )));
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&reports_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("attr_") && n.ends_with(".json"))
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::Config("no attr_*.json reports found".into()));
    }

    let run_name = args
        .run
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("run")
        .to_string();
    let mut md = String::from("# Evaluation report\n\n");
    for path in &entries {
        let text = std::fs::read_to_string(path)?;
        let file: AttrReportFile = serde_json::from_str(&text)
            .map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;
        let report = file.to_report();
        md.push_str(&render_markdown(
            &file.attribute,
            &[(run_name.clone(), &report)],
        ));
    }

    let out = args.out.clone().unwrap_or_else(|| args.run.join("report.md"));
    std::fs::write(&out, md)?;
    println!("wrote {}", out.display());
    Ok(())
}

const SWEEP_CELLS: [(&str, bool, bool); 4] = [
    ("baseline", false, false),
    ("robust", true, false),
    ("fair", false, true),
    ("robust_fair", true, true),
];

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let base = args.overrides.resolve()?;
    let train_set = load_jsonl(&args.train)?;
    let val_set = load_jsonl(&args.val)?;
    let test_set = match &args.test {
        Some(p) => load_jsonl(p)?,
        None => val_set.clone(),
    };
    std::fs::create_dir_all(&args.out)?;

    let meta = RunMeta {
        train_path: Some(args.train.display().to_string()),
        val_path: Some(args.val.display().to_string()),
    };

    let run_cell = |name: &str, dbpm: bool, fairness: bool| -> Result<MetricsReport> {
        let mut cfg = base.clone();
        cfg.dbpm = dbpm;
        cfg.fairness = fairness;
        let dir = args.out.join(format!("cell_{name}"));
        let arts = train_with_meta(&cfg, &train_set, &val_set, Some(&dir), &meta)?;
        let protos = fit_prototypes(&arts.best_params, &train_set)?;
        let results = evaluate(
            &arts.best_params,
            &test_set,
            &[cfg.attr.clone()],
            &protos,
            cfg.threshold,
        );
        let (attr, result) = results
            .into_iter()
            .next()
            .ok_or_else(|| Error::Metric("no attributes evaluated".into()))?;
        let report = result?;
        let file = AttrReportFile::from_report(&attr, &report);
        let reports_dir = dir.join("reports");
        std::fs::create_dir_all(&reports_dir)?;
        crate::trainer::write_json(&reports_dir.join(format!("attr_{attr}.json")), &file)?;
        Ok(report)
    };

    let outcomes: Vec<(String, Result<MetricsReport>)> = if args.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = SWEEP_CELLS
                .iter()
                .map(|(name, dbpm, fairness)| {
                    let run_cell = &run_cell;
                    scope.spawn(move || (name.to_string(), run_cell(name, *dbpm, *fairness)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("cell thread")).collect()
        })
    } else {
        SWEEP_CELLS
            .iter()
            .map(|(name, dbpm, fairness)| (name.to_string(), run_cell(name, *dbpm, *fairness)))
            .collect()
    };

    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    let mut failed = Vec::new();
    for (name, outcome) in outcomes {
        match outcome {
            Ok(report) => rows.push((name, report)),
            Err(e) => {
                println!("cell {name} failed: {e}");
                failed.push(name);
            }
        }
    }

    let row_refs: Vec<(String, &MetricsReport)> =
        rows.iter().map(|(n, r)| (n.clone(), r)).collect();
    let md = format!(
        "# Ablation sweep\n\n{}",
        render_markdown(&base.attr, &row_refs)
    );
    std::fs::write(args.out.join("sweep.md"), md)?;
    println!("wrote {}", args.out.join("sweep.md").display());

    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Metric(format!("cells failed: {}", failed.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_group_spec_cases() {
        let (name, card, props) = parse_group_spec("race=3:0.08,0.15,0.77").unwrap();
        assert_eq!(name, "race");
        assert_eq!(card, 3);
        assert_eq!(props, vec![0.08, 0.15, 0.77]);
        assert!(parse_group_spec("race=2:0.5").is_err());
        assert!(parse_group_spec("race").is_err());
    }

    #[test]
    fn parse_bias_spec_cases() {
        let (name, noise, shift) = parse_bias_spec("race=1.0,1.5,2.0:0.0,-0.3,0.2").unwrap();
        assert_eq!(name, "race");
        assert_eq!(noise, vec![1.0, 1.5, 2.0]);
        assert_eq!(shift, vec![0.0, -0.3, 0.2]);
        assert!(parse_bias_spec("race=1.0").is_err());
    }

    #[test]
    fn overrides_apply_over_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, "{\"epochs\": 7, \"lr\": 0.5}").unwrap();
        let overrides = TrainOverrides {
            config: Some(path),
            lr: Some(0.25),
            no_dbpm: true,
            ..Default::default()
        };
        let cfg = overrides.resolve().unwrap();
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.lr, 0.25);
        assert!(!cfg.dbpm);
        assert!(cfg.fairness);
        // untouched fields keep training defaults
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.lambda, 1e-7);
    }

    #[test]
    fn defaults_match_training_contract() {
        let cfg = TrainOverrides::default().resolve().unwrap();
        assert_eq!(cfg.epochs, 10);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.lr, 1e-5);
        assert_eq!(cfg.lambda, 1e-7);
        assert_eq!(cfg.eps, 1e-4);
        assert_eq!(cfg.alpha, 3.0);
        assert_eq!(cfg.beta, 3.0);
        assert_eq!((cfg.beta1, cfg.beta2), (0.1, 0.1));
        assert_eq!(cfg.weight_decay, 6e-5);
    }
}
