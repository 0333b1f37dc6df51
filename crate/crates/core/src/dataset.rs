//! Sample schema, JSONL persistence, synthetic biased/corrupted dataset
//! generation, and epoch-stable batch partitioning.
//!
//! A dataset is a header (feature dims, protected-attribute names and
//! cardinalities) plus paired image/text feature vectors with a binary
//! diagnosis label. The synthetic generator draws both feature vectors
//! from a shared latent, so a linear encoder pair can genuinely align
//! them, and injects controllable group bias through per-group noise
//! scales and label shifts.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Matrix, Rng};

/// Additive text-noise scale used by `CorruptMode::Noise`.
const NOISE_CORRUPTION_SCALE: f64 = 5.0;

/// Rng stream ids forked off the dataset seeds.
const STREAM_CORRUPTION: u64 = 1;
const STREAM_MODEL: u64 = 2;
const STREAM_SAMPLES: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionFlag {
    Clean,
    Noisy,
    Faulty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptMode {
    Swap,
    Noise,
}

impl std::str::FromStr for CorruptMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<CorruptMode> {
        match s {
            "swap" => Ok(CorruptMode::Swap),
            "noise" => Ok(CorruptMode::Noise),
            other => Err(Error::Config(format!("unknown corrupt mode {other:?}"))),
        }
    }
}

/// One paired data point: image/text feature vectors, binary label,
/// protected-attribute codes, and (for synthetic data) the ground-truth
/// corruption flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    #[serde(rename = "image")]
    pub image_feat: Vec<f64>,
    #[serde(rename = "text")]
    pub text_feat: Vec<f64>,
    pub label: u8,
    pub attrs: BTreeMap<String, u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrupted: Option<CorruptionFlag>,
}

/// First line of a JSONL dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub dim_image: usize,
    pub dim_text: usize,
    pub attributes: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Validates every sample against the header (dims, label domain,
    /// attribute coverage and code ranges, id uniqueness).
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (idx, s) in self.samples.iter().enumerate() {
            let line = idx + 2; // header is line 1
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: s.id.clone(),
                    line,
                });
            }
            validate_sample(&self.header, s, line)?;
        }
        Ok(())
    }

    /// Gathers the image/text feature blocks for the given sample indices.
    pub fn blocks(&self, indices: &[usize]) -> (Matrix, Matrix) {
        let b = indices.len();
        let mut img = Matrix::zeros(b, self.header.dim_image);
        let mut txt = Matrix::zeros(b, self.header.dim_text);
        for (r, &i) in indices.iter().enumerate() {
            for (c, &v) in self.samples[i].image_feat.iter().enumerate() {
                img.set(r, c, v);
            }
            for (c, &v) in self.samples[i].text_feat.iter().enumerate() {
                txt.set(r, c, v);
            }
        }
        (img, txt)
    }

    /// Attribute codes for the given samples, in index order.
    pub fn attr_codes(&self, attr: &str, indices: &[usize]) -> Result<Vec<u32>> {
        if !self.header.attributes.contains_key(attr) {
            return Err(Error::Config(format!("unknown attribute {attr:?}")));
        }
        indices
            .iter()
            .map(|&i| {
                self.samples[i].attrs.get(attr).copied().ok_or_else(|| {
                    Error::Schema {
                        line: i + 2,
                        msg: format!("sample {:?} lacks attribute {attr:?}", self.samples[i].id),
                    }
                })
            })
            .collect()
    }
}

fn validate_sample(header: &DatasetHeader, s: &Sample, line: usize) -> Result<()> {
    if s.image_feat.len() != header.dim_image {
        return Err(Error::Schema {
            line,
            msg: format!(
                "image dim {} != header dim {}",
                s.image_feat.len(),
                header.dim_image
            ),
        });
    }
    if s.text_feat.len() != header.dim_text {
        return Err(Error::Schema {
            line,
            msg: format!(
                "text dim {} != header dim {}",
                s.text_feat.len(),
                header.dim_text
            ),
        });
    }
    if s.label > 1 {
        return Err(Error::Schema {
            line,
            msg: format!("label {} outside {{0,1}}", s.label),
        });
    }
    if !s
        .image_feat
        .iter()
        .chain(&s.text_feat)
        .all(|v| v.is_finite())
    {
        return Err(Error::Schema {
            line,
            msg: "non-finite feature value".into(),
        });
    }
    for (name, card) in &header.attributes {
        match s.attrs.get(name) {
            None => {
                return Err(Error::Schema {
                    line,
                    msg: format!("missing attribute {name:?}"),
                })
            }
            Some(&code) if code >= *card => {
                return Err(Error::Schema {
                    line,
                    msg: format!("attribute {name:?} code {code} >= cardinality {card}"),
                })
            }
            _ => {}
        }
    }
    for name in s.attrs.keys() {
        if !header.attributes.contains_key(name) {
            return Err(Error::Schema {
                line,
                msg: format!("undeclared attribute {name:?}"),
            });
        }
    }
    Ok(())
}

/// Per-attribute generator spec: group proportions plus per-group bias
/// (feature-noise scale multiplier and label logit shift).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub cardinality: u32,
    pub proportions: Vec<f64>,
    #[serde(default)]
    pub noise_scale: Vec<f64>,
    #[serde(default)]
    pub label_shift: Vec<f64>,
}

impl AttributeSpec {
    pub fn uniform(name: &str, cardinality: u32) -> AttributeSpec {
        AttributeSpec {
            name: name.to_string(),
            cardinality,
            proportions: vec![1.0 / cardinality as f64; cardinality as usize],
            noise_scale: Vec::new(),
            label_shift: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub latent_dim: usize,
    pub dim_image: usize,
    pub dim_text: usize,
    pub attributes: Vec<AttributeSpec>,
    /// Baseline feature-noise standard deviation before group scaling.
    pub base_noise: f64,
    /// Multiplier on the latent label logit; 0 makes labels pure coin flips.
    pub label_signal: f64,
    pub corrupt_rate: f64,
    pub corrupt_mode: CorruptMode,
    pub seed: u64,
    /// Seed for the latent maps (A_img, A_txt, w). Splits of one
    /// population share a model_seed and vary `seed`; when absent the
    /// maps derive from `seed`.
    #[serde(default)]
    pub model_seed: Option<u64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_samples: 7000,
            latent_dim: 16,
            dim_image: 64,
            dim_text: 48,
            attributes: vec![AttributeSpec::uniform("group", 2)],
            base_noise: 0.3,
            label_signal: 1.0,
            corrupt_rate: 0.0,
            corrupt_mode: CorruptMode::Swap,
            seed: 0,
            model_seed: None,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        if self.latent_dim == 0 || self.dim_image == 0 || self.dim_text == 0 {
            return Err(Error::Config("dims must be positive".into()));
        }
        if self.attributes.is_empty() {
            return Err(Error::Config("at least one attribute required".into()));
        }
        if !(0.0..=1.0).contains(&self.corrupt_rate) {
            return Err(Error::Config(format!(
                "corrupt_rate {} outside [0,1]",
                self.corrupt_rate
            )));
        }
        for spec in &self.attributes {
            if spec.cardinality == 0 {
                return Err(Error::Config(format!(
                    "attribute {:?} has zero cardinality",
                    spec.name
                )));
            }
            if spec.proportions.len() != spec.cardinality as usize {
                return Err(Error::Config(format!(
                    "attribute {:?}: {} proportions for cardinality {}",
                    spec.name,
                    spec.proportions.len(),
                    spec.cardinality
                )));
            }
            let total: f64 = spec.proportions.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "attribute {:?} proportions sum to {total}, expected 1",
                    spec.name
                )));
            }
            if spec.proportions.iter().any(|p| *p < 0.0) {
                return Err(Error::Config(format!(
                    "attribute {:?} has a negative proportion",
                    spec.name
                )));
            }
            for (field, v) in [("noise_scale", &spec.noise_scale), ("label_shift", &spec.label_shift)] {
                if !v.is_empty() && v.len() != spec.cardinality as usize {
                    return Err(Error::Config(format!(
                        "attribute {:?}: {field} length {} != cardinality {}",
                        spec.name,
                        v.len(),
                        spec.cardinality
                    )));
                }
            }
        }
        Ok(())
    }

    fn header(&self) -> DatasetHeader {
        DatasetHeader {
            dim_image: self.dim_image,
            dim_text: self.dim_text,
            attributes: self
                .attributes
                .iter()
                .map(|a| (a.name.clone(), a.cardinality))
                .collect(),
        }
    }
}

/// Draws a synthetic paired-feature dataset.
///
/// For each sample: latent `z ~ N(0, I)`, `image = A_img z + s_g * noise`,
/// `text = A_txt z + s_g * noise`, `label ~ Bernoulli(sigmoid(signal * w.z + shift_g))`,
/// where `A_img`, `A_txt`, `w` are drawn once from the seed and the group
/// factors come from the sample's attribute codes. Corruption is applied
/// afterwards per `corrupt_rate` and flags are recorded truthfully.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SampleSet> {
    cfg.validate()?;
    let kz = cfg.latent_dim;
    let scale = 1.0 / (kz as f64).sqrt();

    let mut model_rng = Rng::new(cfg.model_seed.unwrap_or(cfg.seed)).fork(STREAM_MODEL);
    let a_img = draw_matrix(&mut model_rng, cfg.dim_image, kz, scale);
    let a_txt = draw_matrix(&mut model_rng, cfg.dim_text, kz, scale);
    let w: Vec<f64> = (0..kz).map(|_| model_rng.next_normal() * scale).collect();

    let mut rng = Rng::new(cfg.seed).fork(STREAM_SAMPLES);

    let mut samples = Vec::with_capacity(cfg.n_samples);
    for idx in 0..cfg.n_samples {
        let mut attrs = BTreeMap::new();
        let mut noise_mult = 1.0;
        let mut shift = 0.0;
        for spec in &cfg.attributes {
            let u = rng.next_f64();
            let code = sample_code(&spec.proportions, u);
            if !spec.noise_scale.is_empty() {
                noise_mult *= spec.noise_scale[code as usize];
            }
            if !spec.label_shift.is_empty() {
                shift += spec.label_shift[code as usize];
            }
            attrs.insert(spec.name.clone(), code);
        }

        let z: Vec<f64> = (0..kz).map(|_| rng.next_normal()).collect();
        let noise = cfg.base_noise * noise_mult;
        let mut image_feat = apply_map(&a_img, &z);
        for v in image_feat.iter_mut() {
            *v += noise * rng.next_normal();
        }
        let mut text_feat = apply_map(&a_txt, &z);
        for v in text_feat.iter_mut() {
            *v += noise * rng.next_normal();
        }

        let logit = cfg.label_signal * crate::numkit::dot(&w, &z) + shift;
        let p = 1.0 / (1.0 + (-logit).exp());
        let label = u8::from(rng.next_f64() < p);

        samples.push(Sample {
            id: format!("s{idx:06}"),
            image_feat,
            text_feat,
            label,
            attrs,
            corrupted: Some(CorruptionFlag::Clean),
        });
    }

    let set = SampleSet {
        header: cfg.header(),
        samples,
    };
    inject_corruption(
        &set,
        cfg.corrupt_rate,
        cfg.corrupt_mode,
        rng.fork(STREAM_CORRUPTION).seed(),
    )
}

fn draw_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.next_normal() * scale).collect();
    Matrix::from_vec(rows, cols, data).expect("normal draws are finite")
}

fn apply_map(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|i| crate::numkit::dot(m.row(i), v)).collect()
}

/// Inverse-CDF draw over group proportions.
fn sample_code(proportions: &[f64], u: f64) -> u32 {
    let mut acc = 0.0;
    for (code, p) in proportions.iter().enumerate() {
        acc += p;
        if u < acc {
            return code as u32;
        }
    }
    (proportions.len() - 1) as u32
}

/// Corrupts a `floor(rate * N)` subset of samples.
///
/// `Swap` rotates text features cyclically among the chosen samples
/// (every chosen pair becomes faulty); `Noise` adds heavy Gaussian noise
/// to the chosen text features. Untouched samples keep their flag.
pub fn inject_corruption(
    set: &SampleSet,
    rate: f64,
    mode: CorruptMode,
    seed: u64,
) -> Result<SampleSet> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("corruption rate {rate} outside [0,1]")));
    }
    let n = set.len();
    let k = (rate * n as f64).floor() as usize;
    if k == 0 {
        return Ok(set.clone());
    }
    if mode == CorruptMode::Swap && k < 2 {
        return Err(Error::CorruptionInfeasible { chosen: k });
    }

    let mut rng = Rng::new(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut indices);
    let chosen = &indices[..k];

    let mut out = set.clone();
    match mode {
        CorruptMode::Swap => {
            let first = out.samples[chosen[0]].text_feat.clone();
            for w in 0..k - 1 {
                out.samples[chosen[w]].text_feat =
                    out.samples[chosen[w + 1]].text_feat.clone();
            }
            out.samples[chosen[k - 1]].text_feat = first;
            for &i in chosen {
                out.samples[i].corrupted = Some(CorruptionFlag::Faulty);
            }
        }
        CorruptMode::Noise => {
            for &i in chosen {
                for v in out.samples[i].text_feat.iter_mut() {
                    *v += NOISE_CORRUPTION_SCALE * rng.next_normal();
                }
                out.samples[i].corrupted = Some(CorruptionFlag::Noisy);
            }
        }
    }
    Ok(out)
}

/// Writes a dataset as header-first JSONL (UTF-8, LF-terminated).
pub fn write_jsonl(set: &SampleSet, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer(&mut w, &set.header).map_err(io_from_json)?;
    w.write_all(b"\n")?;
    for s in &set.samples {
        serde_json::to_writer(&mut w, s).map_err(io_from_json)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn io_from_json(e: serde_json::Error) -> Error {
    Error::Integrity(format!("json write failed: {e}"))
}

/// Loads and validates a JSONL dataset.
pub fn load_jsonl(path: &Path) -> Result<SampleSet> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines();

    let header_line = match lines.next() {
        Some(l) => l?,
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "empty file, expected header record".into(),
            })
        }
    };
    let header: DatasetHeader =
        serde_json::from_str(&header_line).map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?;
    if header.dim_image == 0 || header.dim_text == 0 {
        return Err(Error::Schema {
            line: 1,
            msg: "zero feature dimension in header".into(),
        });
    }

    let mut samples = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if !seen.insert(sample.id.clone()) {
            return Err(Error::DuplicateId {
                id: sample.id,
                line: line_no,
            });
        }
        validate_sample(&header, &sample, line_no)?;
        samples.push(sample);
    }
    Ok(SampleSet { header, samples })
}

/// Epoch-stable batch assignment: one seeded shuffle, fixed for the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub batches: Vec<Vec<usize>>,
    /// Indices left out of the ragged tail (contrastive loss needs full batches).
    pub dropped: Vec<usize>,
}

/// Shuffles once with the seed, chunks into full batches, and drops the
/// ragged remainder. The same plan must be reused for every epoch so the
/// per-batch loss history stays meaningful.
pub fn partition_batches(set: &SampleSet, batch_size: usize, seed: u64) -> Result<BatchPlan> {
    if batch_size < 2 {
        return Err(Error::Config(format!(
            "batch_size {batch_size} < 2: contrastive loss needs at least one negative"
        )));
    }
    let n = set.len();
    if n < batch_size {
        return Err(Error::InfeasiblePlan {
            n_samples: n,
            batch_size,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let n_batches = n / batch_size;
    let batches = (0..n_batches)
        .map(|b| order[b * batch_size..(b + 1) * batch_size].to_vec())
        .collect();
    let dropped = order[n_batches * batch_size..].to_vec();
    Ok(BatchPlan {
        batch_size,
        batches,
        dropped,
    })
}
