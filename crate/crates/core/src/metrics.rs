//! Evaluation suite: ROC AUC (midrank ties), group-wise AUC, equity-scaled
//! AUC, demographic parity difference, equalized-odds difference, and the
//! zero-shot-style prototype scorer that feeds them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::SampleSet;
use crate::encoder::{encode_block, EncoderParams};
use crate::error::{Error, Result};
use crate::numkit::{dot, Matrix};

/// Scores, labels, and one attribute's group codes for a split.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub attr_codes: Vec<u32>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>, attr_codes: Vec<u32>) -> Result<ScoredSet> {
        if scores.len() < 2 || scores.len() != labels.len() || scores.len() != attr_codes.len() {
            return Err(Error::Metric(format!(
                "scored set needs matching lengths >= 2, got {}/{}/{}",
                scores.len(),
                labels.len(),
                attr_codes.len()
            )));
        }
        Ok(ScoredSet {
            scores,
            labels,
            attr_codes,
        })
    }

    pub fn predictions(&self, threshold: f64) -> Vec<u8> {
        self.scores
            .iter()
            .map(|s| u8::from(*s >= threshold))
            .collect()
    }
}

/// Full fairness report for one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub group_auc: BTreeMap<u32, f64>,
    pub es_auc: f64,
    pub dpd: f64,
    pub deodds: f64,
    pub threshold: f64,
    pub omitted_groups: Vec<u32>,
}

/// Mann-Whitney AUC via tied-rank summation: the probability a random
/// positive outscores a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let n = scores.len();
    let n_pos = labels.iter().filter(|l| **l == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc { n_pos, n_neg });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| scores[i].partial_cmp(&scores[j]).expect("finite scores"));

    // Midranks: tied values share the average of their 1-based ranks.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }

    let np = n_pos as f64;
    let u = rank_sum_pos - np * (np + 1.0) / 2.0;
    Ok(u / (np * n_neg as f64))
}

/// Per-group AUC; groups with a single class are omitted and reported.
pub fn group_auc(set: &ScoredSet) -> (BTreeMap<u32, f64>, Vec<u32>) {
    let mut by_group: BTreeMap<u32, (Vec<f64>, Vec<u8>)> = BTreeMap::new();
    for ((s, l), c) in set
        .scores
        .iter()
        .zip(&set.labels)
        .zip(&set.attr_codes)
    {
        let entry = by_group.entry(*c).or_default();
        entry.0.push(*s);
        entry.1.push(*l);
    }
    let mut out = BTreeMap::new();
    let mut omitted = Vec::new();
    for (code, (scores, labels)) in by_group {
        match auc(&scores, &labels) {
            Ok(v) => {
                out.insert(code, v);
            }
            Err(_) => omitted.push(code),
        }
    }
    (out, omitted)
}

/// Equity-scaled AUC: overall AUC divided by one plus the summed absolute
/// group gaps. Equals the overall AUC only under perfect group parity.
pub fn es_auc(overall: f64, group_aucs: &BTreeMap<u32, f64>) -> f64 {
    let gaps: f64 = group_aucs.values().map(|g| (overall - g).abs()).sum();
    overall / (1.0 + gaps)
}

/// Demographic parity difference: max minus min group selection rate.
pub fn dpd(preds: &[u8], attr_codes: &[u32]) -> Result<f64> {
    if preds.is_empty() || preds.len() != attr_codes.len() {
        return Err(Error::Metric("dpd needs matching nonempty inputs".into()));
    }
    let mut counts: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for (p, c) in preds.iter().zip(attr_codes) {
        let entry = counts.entry(*c).or_default();
        entry.0 += f64::from(*p);
        entry.1 += 1.0;
    }
    let rates: Vec<f64> = counts.values().map(|(pos, tot)| pos / tot).collect();
    let max = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

/// Equalized-odds difference: the larger of the cross-group TPR gap and
/// FPR gap. Every group must contain both classes.
pub fn deodds(preds: &[u8], labels: &[u8], attr_codes: &[u32]) -> Result<f64> {
    if preds.is_empty() || preds.len() != labels.len() || preds.len() != attr_codes.len() {
        return Err(Error::Metric("deodds needs matching nonempty inputs".into()));
    }
    // per group: (tp, pos, fp, neg)
    let mut table: BTreeMap<u32, (f64, f64, f64, f64)> = BTreeMap::new();
    for ((p, l), c) in preds.iter().zip(labels).zip(attr_codes) {
        let e = table.entry(*c).or_default();
        if *l == 1 {
            e.1 += 1.0;
            e.0 += f64::from(*p);
        } else {
            e.3 += 1.0;
            e.2 += f64::from(*p);
        }
    }
    let mut tprs = Vec::new();
    let mut fprs = Vec::new();
    for (code, (tp, pos, fp, neg)) in &table {
        if *pos == 0.0 {
            return Err(Error::Metric(format!(
                "group {code} has no positive labels"
            )));
        }
        if *neg == 0.0 {
            return Err(Error::Metric(format!(
                "group {code} has no negative labels"
            )));
        }
        tprs.push(tp / pos);
        fprs.push(fp / neg);
    }
    let gap = |v: &[f64]| {
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Ok(gap(&tprs).max(gap(&fprs)))
}

/// Unit-norm class prototypes in embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

/// Default prototypes: normalized means of the split's text embeddings
/// per class.
pub fn fit_prototypes(params: &EncoderParams, set: &SampleSet) -> Result<Prototypes> {
    let indices: Vec<usize> = (0..set.len()).collect();
    let (_, txt) = set.blocks(&indices);
    let f_txt = encode_block(&txt, &params.w_txt)?;
    let k = f_txt.cols();

    let mean = |label: u8| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; k];
        let mut count = 0.0;
        for (i, s) in set.samples.iter().enumerate() {
            if s.label == label {
                for (a, v) in acc.iter_mut().zip(f_txt.row(i)) {
                    *a += v;
                }
                count += 1.0;
            }
        }
        if count == 0.0 {
            return Err(Error::Prototype { label });
        }
        for a in acc.iter_mut() {
            *a /= count;
        }
        let m = Matrix::from_vec(1, k, acc)?;
        Ok(crate::numkit::row_l2_normalize(&m)?.data().to_vec())
    };

    Ok(Prototypes {
        pos: mean(1)?,
        neg: mean(0)?,
    })
}

/// Logistic margin score per sample:
/// `sigmoid(exp(log_temp) * (<f_img, proto_pos> - <f_img, proto_neg>))`.
pub fn classification_scores(
    params: &EncoderParams,
    set: &SampleSet,
    protos: &Prototypes,
) -> Result<Vec<f64>> {
    let indices: Vec<usize> = (0..set.len()).collect();
    let (img, _) = set.blocks(&indices);
    let f_img = encode_block(&img, &params.w_img)?;
    let temp = params.temp();
    Ok((0..f_img.rows())
        .map(|i| {
            let margin = dot(f_img.row(i), &protos.pos) - dot(f_img.row(i), &protos.neg);
            1.0 / (1.0 + (-temp * margin).exp())
        })
        .collect())
}

/// Builds the per-attribute view used by the metric functions.
pub fn scored_set(scores: &[f64], set: &SampleSet, attr: &str) -> Result<ScoredSet> {
    let indices: Vec<usize> = (0..set.len()).collect();
    let codes = set.attr_codes(attr, &indices)?;
    ScoredSet::new(
        scores.to_vec(),
        set.samples.iter().map(|s| s.label).collect(),
        codes,
    )
}

/// Runs the full metric suite for one attribute.
pub fn report(set: &ScoredSet, threshold: f64) -> Result<MetricsReport> {
    let overall = auc(&set.scores, &set.labels)?;
    let (groups, omitted) = group_auc(set);
    let es = es_auc(overall, &groups);
    let preds = set.predictions(threshold);
    let dpd_v = dpd(&preds, &set.attr_codes)?;
    let deodds_v = deodds(&preds, &set.labels, &set.attr_codes)?;
    Ok(MetricsReport {
        auc: overall,
        group_auc: groups,
        es_auc: es,
        dpd: dpd_v,
        deodds: deodds_v,
        threshold,
        omitted_groups: omitted,
    })
}

/// Renders reports as a markdown table in the conventional column
/// order (DPD, DEOdds, AUC, ES-AUC, group-wise AUC), values x100 with two
/// decimals.
pub fn render_markdown(attr: &str, rows: &[(String, &MetricsReport)]) -> String {
    let mut group_codes: Vec<u32> = Vec::new();
    for (_, r) in rows {
        for code in r.group_auc.keys() {
            if !group_codes.contains(code) {
                group_codes.push(*code);
            }
        }
    }
    group_codes.sort_unstable();

    let mut out = String::new();
    out.push_str(&format!("### Attribute: {attr}\n\n"));
    out.push_str("| Model | DPD ↓ | DEOdds ↓ | AUC ↑ | ES-AUC ↑ |");
    for code in &group_codes {
        out.push_str(&format!(" AUC (group {code}) ↑ |"));
    }
    out.push('\n');
    out.push_str("|---|---|---|---|---|");
    for _ in &group_codes {
        out.push_str("---|");
    }
    out.push('\n');
    for (name, r) in rows {
        out.push_str(&format!(
            "| {name} | {:.2} | {:.2} | {:.2} | {:.2} |",
            r.dpd * 100.0,
            r.deodds * 100.0,
            r.auc * 100.0,
            r.es_auc * 100.0
        ));
        for code in &group_codes {
            match r.group_auc.get(code) {
                Some(v) => out.push_str(&format!(" {:.2} |", v * 100.0)),
                None => out.push_str(" — |"),
            }
        }
        out.push('\n');
    }
    out.push('\n');
    out
}
