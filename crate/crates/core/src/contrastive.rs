//! Batch similarity matrix and the symmetric cross-entropy contrastive
//! loss with analytic gradients back to the encoder parameters.
//!
//! The loss averages row-wise and column-wise cross entropy against the
//! diagonal (matched-pair) targets, so its scale does not depend on the
//! batch size and the bad-pair-mining thresholds stay comparable across
//! batch-size changes.

#![allow(clippy::needless_range_loop)]

use crate::encoder::{EncoderParams, ParamGrads};
use crate::error::{Error, Result};
use crate::numkit::{dot, logsumexp, matmul, row_norm, Matrix};

/// Temperature-scaled cosine similarities for one batch:
/// `w[i][j] = exp(log_temp) * <F_img_i, F_txt_j>`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub w: Matrix,
    pub temp: f64,
}

impl SimilarityMatrix {
    pub fn batch_size(&self) -> usize {
        self.w.rows()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.w.rows()).map(|i| self.w.get(i, i)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub grad_w: Matrix,
}

/// Builds the temperature-scaled similarity matrix from unit-norm
/// embedding blocks.
pub fn similarity_matrix(f_img: &Matrix, f_txt: &Matrix, log_temp: f64) -> Result<SimilarityMatrix> {
    let b = f_img.rows();
    if b < 2 {
        return Err(Error::BatchTooSmall { size: b });
    }
    if f_txt.rows() != b || f_txt.cols() != f_img.cols() {
        return Err(Error::ShapeMismatch {
            op: "similarity_matrix",
            left: (f_img.rows(), f_img.cols()),
            right: (f_txt.rows(), f_txt.cols()),
        });
    }
    let temp = log_temp.exp();
    let w = matmul(f_img, &f_txt.transpose())?.scale(temp);
    if !w.is_finite() {
        return Err(Error::NonFinite {
            what: "similarity matrix".into(),
        });
    }
    Ok(SimilarityMatrix { w, temp })
}

/// Symmetric cross entropy against diagonal targets:
/// `L1 = (mean_i CE(row_i, i) + mean_j CE(col_j, j)) / 2`,
/// with `dL1/dW = (softmax_rows(W) - I)/(2B) + (softmax_cols(W) - I)/(2B)`.
pub fn symmetric_ce_loss(sim: &SimilarityMatrix) -> Result<LossValue> {
    let b = sim.batch_size();
    let w = &sim.w;
    if !w.is_finite() {
        return Err(Error::NonFinite {
            what: "similarity matrix".into(),
        });
    }

    let inv_2b = 1.0 / (2.0 * b as f64);
    let mut value = 0.0;
    let mut grad = Matrix::zeros(b, b);

    // Row direction: image -> text classification.
    for i in 0..b {
        let row = w.row(i);
        let lse = logsumexp(row)?;
        value += (lse - row[i]) * inv_2b;
        for j in 0..b {
            let soft = (row[j] - lse).exp();
            grad.set(i, j, grad.get(i, j) + inv_2b * soft);
        }
        grad.set(i, i, grad.get(i, i) - inv_2b);
    }

    // Column direction: text -> image classification.
    let mut col = vec![0.0; b];
    for j in 0..b {
        for (i, c) in col.iter_mut().enumerate() {
            *c = w.get(i, j);
        }
        let lse = logsumexp(&col)?;
        value += (lse - col[j]) * inv_2b;
        for i in 0..b {
            let soft = (col[i] - lse).exp();
            grad.set(i, j, grad.get(i, j) + inv_2b * soft);
        }
        grad.set(j, j, grad.get(j, j) - inv_2b);
    }

    Ok(LossValue {
        value,
        grad_w: grad,
    })
}

/// Chain rule from a similarity-matrix gradient back to the encoder
/// parameters: through the temperature scale, the per-row normalization
/// Jacobian `(I - f f^T)/||z||`, and the linear maps. Because `W` is
/// linear in `exp(log_temp)`, `dL/d log_temp = sum_ij grad_w_ij * W_ij`.
pub fn backward_to_params(
    grad_w: &Matrix,
    f_img: &Matrix,
    f_txt: &Matrix,
    image_block: &Matrix,
    text_block: &Matrix,
    params: &EncoderParams,
) -> Result<ParamGrads> {
    let b = f_img.rows();
    if grad_w.rows() != b || grad_w.cols() != b || f_txt.rows() != b {
        return Err(Error::ShapeMismatch {
            op: "backward_to_params",
            left: (grad_w.rows(), grad_w.cols()),
            right: (b, b),
        });
    }
    if image_block.rows() != b
        || text_block.rows() != b
        || image_block.cols() != params.w_img.rows()
        || text_block.cols() != params.w_txt.rows()
    {
        return Err(Error::ShapeMismatch {
            op: "backward_to_params",
            left: (image_block.rows(), image_block.cols()),
            right: (b, params.w_img.rows()),
        });
    }

    let temp = params.temp();

    // dL/d log_temp = sum grad_w .* W, with W = temp * F_img F_txt^T.
    let mut grad_log_temp = 0.0;
    for i in 0..b {
        for j in 0..b {
            grad_log_temp += grad_w.get(i, j) * temp * dot(f_img.row(i), f_txt.row(j));
        }
    }

    // dL/dF_img = temp * grad_w  F_txt ; dL/dF_txt = temp * grad_w^T F_img.
    let g_f_img = matmul(grad_w, f_txt)?.scale(temp);
    let g_f_txt = matmul(&grad_w.transpose(), f_img)?.scale(temp);

    let g_w_img = backprop_block(&g_f_img, f_img, image_block, &params.w_img)?;
    let g_w_txt = backprop_block(&g_f_txt, f_txt, text_block, &params.w_txt)?;

    Ok(ParamGrads {
        w_img: g_w_img,
        w_txt: g_w_txt,
        log_temp: grad_log_temp,
    })
}

/// Backprop through `F = normalize_rows(block W)` given dL/dF.
fn backprop_block(
    g_f: &Matrix,
    f: &Matrix,
    block: &Matrix,
    w: &Matrix,
) -> Result<Matrix> {
    let b = f.rows();
    let k = f.cols();
    // Pre-normalization activations and their norms.
    let z = matmul(block, w)?;
    let mut g_z = Matrix::zeros(b, k);
    for i in 0..b {
        let norm = row_norm(z.row(i));
        let fr = f.row(i);
        let gr = g_f.row(i);
        let proj = dot(gr, fr);
        for j in 0..k {
            g_z.set(i, j, (gr[j] - proj * fr[j]) / norm);
        }
    }
    matmul(&block.transpose(), &g_z)
}
