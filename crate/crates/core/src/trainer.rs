//! Full training pipeline: per-batch forward pass, contrastive loss,
//! bad-pair-mining weight, Sinkhorn fairness term, combined gradient,
//! Adam step, checkpointing, and evaluation.
//!
//! The per-batch objective is `L3 = w * L1 + lambda * sum_gamma S_eps`,
//! where `w` is the mining weight (detached: it scales the gradient but is
//! never differentiated) and the Sinkhorn gradients use the envelope
//! theorem with converged plans held fixed. Batches are fixed for the
//! whole run by a single seeded shuffle, which is what makes the
//! per-batch loss history well-defined.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contrastive::{backward_to_params, similarity_matrix, symmetric_ce_loss};
use crate::dataset::{partition_batches, BatchPlan, SampleSet};
use crate::dbpm::{
    epoch_stats, historical_mean, pair_weight, record_loss, AuditRecord, EpochStats, LossHistory,
    PairClass, PairVerdict,
};
use crate::encoder::{
    adam_step, encode, init_params, AdamHyper, AdamState, EncoderParams, ParamGrads,
};
use crate::error::{Error, Result};
use crate::fair_ot::{fairness_grad_fd_with, fairness_loss_with};
use crate::metrics::{
    auc, classification_scores, fit_prototypes, report, scored_set, MetricsReport, Prototypes,
};
use crate::numkit::Rng;

pub const CHECKPOINT_VERSION: u64 = 1;

/// Rng stream ids forked off the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_PLAN: u64 = 1;

/// Which value is compared against the epoch thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionVariable {
    /// The current epoch's batch loss (the printed piecewise form).
    CurrentLoss,
    /// The batch's historical mean itself (the source-method convention).
    HistoricalMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SinkhornGradMode {
    Envelope,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Fairness regularizer strength.
    pub lambda: f64,
    /// Sinkhorn blur.
    pub eps: f64,
    /// Lower-tail threshold multiplier.
    pub alpha: f64,
    /// Upper-tail threshold multiplier.
    pub beta: f64,
    /// Protected attribute the fairness term (and reports) use.
    pub attr: String,
    pub embed_dim: usize,
    pub seed: u64,
    pub dbpm: bool,
    pub fairness: bool,
    pub dbpm_decision: DecisionVariable,
    pub sinkhorn_grad: SinkhornGradMode,
    pub sinkhorn_max_iter: usize,
    pub sinkhorn_tol: f64,
    /// Decision threshold on the logistic score for DPD/DEOdds.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            lr: 1e-5,
            beta1: 0.1,
            beta2: 0.1,
            adam_eps: 1e-8,
            weight_decay: 6e-5,
            lambda: 1e-7,
            eps: 1e-4,
            alpha: 3.0,
            beta: 3.0,
            attr: "group".into(),
            embed_dim: 16,
            seed: 0,
            dbpm: true,
            fairness: true,
            dbpm_decision: DecisionVariable::CurrentLoss,
            sinkhorn_grad: SinkhornGradMode::Envelope,
            sinkhorn_max_iter: 2000,
            sinkhorn_tol: 1e-9,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    fn validate(&self, train_set: &SampleSet, val_set: &SampleSet) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be >= 1".into()));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("eps", self.eps),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lr", self.lr),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.eps == 0.0 {
            return Err(Error::Config("eps must be positive".into()));
        }
        for (split, set) in [("train", train_set), ("val", val_set)] {
            if !set.header.attributes.contains_key(&self.attr) {
                return Err(Error::Config(format!(
                    "attribute {:?} missing from {split} set",
                    self.attr
                )));
            }
        }
        if train_set.header != val_set.header {
            return Err(Error::Config("train/val headers differ".into()));
        }
        Ok(())
    }
}

/// Per-epoch curve record (one line of curves.jsonl).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub l1_mean: f64,
    pub l2_mean: f64,
    pub fairness_mean: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub params: EncoderParams,
    pub adam: AdamState,
    pub history: LossHistory,
    pub curves: Vec<EpochRecord>,
    pub audit: Vec<AuditRecord>,
    pub best_epoch: u32,
    pub best_val_auc: f64,
    pub best_params: EncoderParams,
}

/// Optional provenance recorded into the resolved config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub train_path: Option<String>,
    pub val_path: Option<String>,
}

#[derive(Debug, Serialize)]
struct ResolvedConfig<'a> {
    /// The only field in a run directory that carries wall-clock time.
    created_unix: u64,
    train_path: &'a Option<String>,
    val_path: &'a Option<String>,
    config: &'a TrainConfig,
}

/// Trains from a fresh initialization.
pub fn train(
    cfg: &TrainConfig,
    train_set: &SampleSet,
    val_set: &SampleSet,
    out_dir: Option<&Path>,
) -> Result<RunArtifacts> {
    train_with_meta(cfg, train_set, val_set, out_dir, &RunMeta::default())
}

pub fn train_with_meta(
    cfg: &TrainConfig,
    train_set: &SampleSet,
    val_set: &SampleSet,
    out_dir: Option<&Path>,
    meta: &RunMeta,
) -> Result<RunArtifacts> {
    cfg.validate(train_set, val_set)?;
    let root = Rng::new(cfg.seed);
    let params = init_params(
        train_set.header.dim_image,
        train_set.header.dim_text,
        cfg.embed_dim,
        root.fork(STREAM_INIT).seed(),
    )?;
    let adam = AdamState::new(&params, cfg.hyper());
    run_epochs(
        cfg,
        train_set,
        val_set,
        out_dir,
        meta,
        params,
        adam,
        LossHistory::new(),
        1,
    )
}

/// Continues a run from a checkpoint (which must carry the loss history
/// for the mining statistics to match an uninterrupted run).
pub fn train_resume(
    cfg: &TrainConfig,
    train_set: &SampleSet,
    val_set: &SampleSet,
    ckpt_path: &Path,
    out_dir: Option<&Path>,
) -> Result<RunArtifacts> {
    cfg.validate(train_set, val_set)?;
    let ckpt = checkpoint_load(ckpt_path)?;
    let history = ckpt.history.unwrap_or_default();
    run_epochs(
        cfg,
        train_set,
        val_set,
        out_dir,
        &RunMeta::default(),
        ckpt.params,
        ckpt.adam,
        history,
        ckpt.epoch + 1,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    cfg: &TrainConfig,
    train_set: &SampleSet,
    val_set: &SampleSet,
    out_dir: Option<&Path>,
    meta: &RunMeta,
    mut params: EncoderParams,
    mut adam: AdamState,
    mut history: LossHistory,
    start_epoch: u32,
) -> Result<RunArtifacts> {
    let root = Rng::new(cfg.seed);
    let plan: BatchPlan =
        partition_batches(train_set, cfg.batch_size, root.fork(STREAM_PLAN).seed())?;

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir.join("checkpoints"))?;
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let resolved = ResolvedConfig {
            created_unix,
            train_path: &meta.train_path,
            val_path: &meta.val_path,
            config: cfg,
        };
        write_json(&dir.join("config.json"), &resolved)?;
    }

    let mut curves = Vec::new();
    let mut audit: Vec<AuditRecord> = Vec::new();
    let mut best_epoch = 0;
    let mut best_val_auc = f64::NEG_INFINITY;
    let mut best_params = params.clone();
    let mut last_good: Option<PathBuf> = None;

    for epoch in start_epoch..=cfg.epochs {
        // Mining statistics come from history only, fixed at epoch start.
        let stats: Option<EpochStats> = if cfg.dbpm && epoch >= 2 {
            Some(epoch_stats(&history, epoch, cfg.alpha, cfg.beta)?)
        } else {
            None
        };

        let mut l1_sum = 0.0;
        let mut l2_sum = 0.0;
        let mut fair_sum = 0.0;

        for (batch_id, indices) in plan.batches.iter().enumerate() {
            let (img, txt) = train_set.blocks(indices);
            let (f_img, f_txt) = encode(&params, &img, &txt)?;
            let sim = similarity_matrix(&f_img, &f_txt, params.log_temp)?;
            let loss = symmetric_ce_loss(&sim)?;
            if !loss.value.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    batch_id,
                    last_good: last_good
                        .as_ref()
                        .map_or_else(|| "none".to_string(), |p| p.display().to_string()),
                });
            }

            let s_value = match &stats {
                Some(_) => Some(historical_mean(&history, batch_id, epoch)?),
                None => None,
            };
            let verdict = match &stats {
                Some(st) => {
                    let decision = match cfg.dbpm_decision {
                        DecisionVariable::CurrentLoss => loss.value,
                        DecisionVariable::HistoricalMean => {
                            s_value.expect("history exists when stats exist")
                        }
                    };
                    pair_weight(batch_id, decision, st)
                }
                None => PairVerdict {
                    batch_id,
                    class: PairClass::Correct,
                    weight: 1.0,
                    clamped: false,
                },
            };

            let mut grad_w = loss.grad_w.scale(verdict.weight);
            let mut fairness_value = 0.0;
            if cfg.fairness {
                let codes = train_set.attr_codes(&cfg.attr, indices)?;
                let term = fairness_loss_with(
                    &sim,
                    &codes,
                    cfg.eps,
                    cfg.sinkhorn_max_iter,
                    cfg.sinkhorn_tol,
                )?;
                fairness_value = term.total;
                let grad_diag = match cfg.sinkhorn_grad {
                    SinkhornGradMode::Envelope => term.grad_diag,
                    SinkhornGradMode::FiniteDifference => fairness_grad_fd_with(
                        &sim,
                        &codes,
                        cfg.eps,
                        1e-5,
                        cfg.sinkhorn_max_iter,
                        cfg.sinkhorn_tol,
                    )?,
                };
                for (i, g) in grad_diag.iter().enumerate() {
                    grad_w.set(i, i, grad_w.get(i, i) + cfg.lambda * g);
                }
            }

            let grads: ParamGrads =
                backward_to_params(&grad_w, &f_img, &f_txt, &img, &txt, &params)?;
            let stepped = adam_step(&adam, &params, &grads)?;
            adam = stepped.0;
            params = stepped.1;

            record_loss(&mut history, batch_id, epoch, loss.value)?;
            audit.push(AuditRecord {
                epoch,
                batch_id,
                l1: loss.value,
                s: s_value,
                mu: stats.as_ref().map(|s| s.mu),
                sigma: stats.as_ref().map(|s| s.sigma),
                a: stats.as_ref().map(|s| s.a),
                b: stats.as_ref().map(|s| s.b),
                weight: verdict.weight,
                class: verdict.class,
            });

            l1_sum += loss.value;
            l2_sum += verdict.weight * loss.value;
            fair_sum += fairness_value;
        }

        // Validation AUC with prototypes refit from the train split.
        let protos = fit_prototypes(&params, train_set)?;
        let val_scores = classification_scores(&params, val_set, &protos)?;
        let val_labels: Vec<u8> = val_set.samples.iter().map(|s| s.label).collect();
        let val_auc = auc(&val_scores, &val_labels)?;

        let n_batches = plan.batches.len() as f64;
        curves.push(EpochRecord {
            epoch,
            l1_mean: l1_sum / n_batches,
            l2_mean: l2_sum / n_batches,
            fairness_mean: fair_sum / n_batches,
            val_auc,
        });

        if let Some(dir) = out_dir {
            let path = dir.join("checkpoints").join(format!("epoch_{epoch}.json"));
            checkpoint_save(&params, &adam, epoch, Some(&history), &path)?;
            last_good = Some(path);
        }
        if val_auc > best_val_auc {
            best_val_auc = val_auc;
            best_epoch = epoch;
            best_params = params.clone();
            if let Some(dir) = out_dir {
                checkpoint_save(&params, &adam, epoch, Some(&history), &dir.join("best.json"))?;
            }
        }
    }

    if let Some(dir) = out_dir {
        write_jsonl_records(&dir.join("curves.jsonl"), &curves)?;
        write_jsonl_records(&dir.join("dbpm_audit.jsonl"), &audit)?;
    }

    Ok(RunArtifacts {
        params,
        adam,
        history,
        curves,
        audit,
        best_epoch,
        best_val_auc,
        best_params,
    })
}

/// One report per requested attribute from a shared score pass; a failing
/// attribute does not abort the others.
pub fn evaluate(
    params: &EncoderParams,
    test_set: &SampleSet,
    attributes: &[String],
    protos: &Prototypes,
    threshold: f64,
) -> BTreeMap<String, Result<MetricsReport>> {
    let scores = match classification_scores(params, test_set, protos) {
        Ok(s) => s,
        Err(e) => {
            let mut out = BTreeMap::new();
            if let Some(attr) = attributes.first() {
                out.insert(attr.clone(), Err(e));
            }
            return out;
        }
    };
    attributes
        .iter()
        .map(|attr| {
            let result =
                scored_set(&scores, test_set, attr).and_then(|set| report(&set, threshold));
            (attr.clone(), result)
        })
        .collect()
}

// --- checkpoints ---------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub adam: AdamState,
    pub epoch: u32,
    pub history: Option<LossHistory>,
}

#[derive(Serialize, Deserialize)]
struct Dims {
    m: usize,
    n: usize,
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct AdamFile {
    t: u64,
    m_img: Vec<f64>,
    v_img: Vec<f64>,
    m_txt: Vec<f64>,
    v_txt: Vec<f64>,
    m_s: f64,
    v_s: f64,
    hyper: AdamHyper,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u64,
    dims: Dims,
    w_img: Vec<f64>,
    w_txt: Vec<f64>,
    log_temp: f64,
    epoch: u32,
    adam: AdamFile,
    #[serde(skip_serializing_if = "Option::is_none")]
    history: Option<Vec<(usize, u32, f64)>>,
}

/// Writes a checkpoint. JSON floats are emitted in shortest-round-trip
/// decimal form and parsed back exactly, so load(save(x)) == x bit for bit.
pub fn checkpoint_save(
    params: &EncoderParams,
    adam: &AdamState,
    epoch: u32,
    history: Option<&LossHistory>,
    path: &Path,
) -> Result<()> {
    let (m, n, k) = params.dims();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        dims: Dims { m, n, k },
        w_img: params.w_img.data().to_vec(),
        w_txt: params.w_txt.data().to_vec(),
        log_temp: params.log_temp,
        epoch,
        adam: AdamFile {
            t: adam.t,
            m_img: adam.m_img.data().to_vec(),
            v_img: adam.v_img.data().to_vec(),
            m_txt: adam.m_txt.data().to_vec(),
            v_txt: adam.v_txt.data().to_vec(),
            m_s: adam.m_s,
            v_s: adam.v_s,
            hyper: adam.hyper.clone(),
        },
        history: history.map(|h| h.entries()),
    };
    write_json(path, &file)
}

pub fn checkpoint_load(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(CHECKPOINT_VERSION) => {}
        Some(found) => {
            return Err(Error::VersionMismatch {
                found,
                expected: CHECKPOINT_VERSION,
            })
        }
        None => {
            return Err(Error::Integrity(format!(
                "{}: missing version field",
                path.display()
            )))
        }
    }
    let file: CheckpointFile = serde_json::from_value(value)
        .map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;

    let Dims { m, n, k } = file.dims;
    let mk = |data: Vec<f64>, rows: usize, what: &str| {
        crate::numkit::Matrix::from_vec(rows, k, data)
            .map_err(|_| Error::Integrity(format!("{what} length does not match dims")))
    };
    let params = EncoderParams {
        w_img: mk(file.w_img, m, "w_img")?,
        w_txt: mk(file.w_txt, n, "w_txt")?,
        log_temp: file.log_temp,
    };
    let adam = AdamState {
        t: file.adam.t,
        m_img: mk(file.adam.m_img, m, "adam.m_img")?,
        v_img: mk(file.adam.v_img, m, "adam.v_img")?,
        m_txt: mk(file.adam.m_txt, n, "adam.m_txt")?,
        v_txt: mk(file.adam.v_txt, n, "adam.v_txt")?,
        m_s: file.adam.m_s,
        v_s: file.adam.v_s,
        hyper: file.adam.hyper,
    };
    let history = match file.history {
        Some(entries) => Some(LossHistory::from_entries(&entries)?),
        None => None,
    };
    Ok(Checkpoint {
        params,
        adam,
        epoch: file.epoch,
        history,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Integrity(format!("json encode failed: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub(crate) fn write_jsonl_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)
            .map_err(|e| Error::Integrity(format!("json encode failed: {e}")))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
