//! Trainable model: two linear projections into a shared embedding space
//! with row L2 normalization and a learnable logit scale, plus Adam with
//! decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{matmul, row_l2_normalize, Matrix, Rng};

/// Upper clamp on the effective temperature multiplier exp(log_temp).
pub const MAX_TEMP: f64 = 100.0;

/// CLIP-convention initial logit scale: ln(1/0.07).
pub fn default_log_temp() -> f64 {
    (1.0 / 0.07f64).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w_img: Matrix,
    pub w_txt: Matrix,
    pub log_temp: f64,
}

impl EncoderParams {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w_img.rows(), self.w_txt.rows(), self.w_img.cols())
    }

    pub fn temp(&self) -> f64 {
        self.log_temp.exp()
    }
}

/// Gradient (or any other tangent) shaped like `EncoderParams`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub w_img: Matrix,
    pub w_txt: Matrix,
    pub log_temp: f64,
}

impl ParamGrads {
    pub fn zeros_like(params: &EncoderParams) -> ParamGrads {
        ParamGrads {
            w_img: Matrix::zeros(params.w_img.rows(), params.w_img.cols()),
            w_txt: Matrix::zeros(params.w_txt.rows(), params.w_txt.cols()),
            log_temp: 0.0,
        }
    }

    pub fn scale(&self, c: f64) -> ParamGrads {
        ParamGrads {
            w_img: self.w_img.scale(c),
            w_txt: self.w_txt.scale(c),
            log_temp: self.log_temp * c,
        }
    }

    pub fn add(&self, other: &ParamGrads) -> Result<ParamGrads> {
        Ok(ParamGrads {
            w_img: self.w_img.add(&other.w_img)?,
            w_txt: self.w_txt.add(&other.w_txt)?,
            log_temp: self.log_temp + other.log_temp,
        })
    }
}

/// Random init: entries N(0, 1/fan_in), logit scale at the CLIP default.
pub fn init_params(m: usize, n: usize, k: usize, seed: u64) -> Result<EncoderParams> {
    if m == 0 || n == 0 || k == 0 {
        return Err(Error::Config(format!("zero dimension in ({m}, {n}, {k})")));
    }
    let mut rng = Rng::new(seed);
    let mut draw = |rows: usize, cols: usize, fan_in: usize| {
        let s = 1.0 / (fan_in as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.next_normal() * s).collect();
        Matrix::from_vec(rows, cols, data).expect("finite init")
    };
    Ok(EncoderParams {
        w_img: draw(m, k, m),
        w_txt: draw(n, k, n),
        log_temp: default_log_temp(),
    })
}

/// Projects one feature block and L2-normalizes each row.
pub fn encode_block(block: &Matrix, w: &Matrix) -> Result<Matrix> {
    row_l2_normalize(&matmul(block, w)?)
}

/// Image and text feature blocks -> unit-norm embedding blocks.
pub fn encode(
    params: &EncoderParams,
    image_block: &Matrix,
    text_block: &Matrix,
) -> Result<(Matrix, Matrix)> {
    Ok((
        encode_block(image_block, &params.w_img)?,
        encode_block(text_block, &params.w_txt)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        // Training defaults; betas intentionally (0.1, 0.1).
        AdamHyper {
            lr: 1e-5,
            beta1: 0.1,
            beta2: 0.1,
            eps: 1e-8,
            weight_decay: 6e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m_img: Matrix,
    pub v_img: Matrix,
    pub m_txt: Matrix,
    pub v_txt: Matrix,
    pub m_s: f64,
    pub v_s: f64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(params: &EncoderParams, hyper: AdamHyper) -> AdamState {
        AdamState {
            t: 0,
            m_img: Matrix::zeros(params.w_img.rows(), params.w_img.cols()),
            v_img: Matrix::zeros(params.w_img.rows(), params.w_img.cols()),
            m_txt: Matrix::zeros(params.w_txt.rows(), params.w_txt.cols()),
            v_txt: Matrix::zeros(params.w_txt.rows(), params.w_txt.cols()),
            m_s: 0.0,
            v_s: 0.0,
            hyper,
        }
    }
}

/// One Adam step with bias correction; decoupled weight decay is applied
/// multiplicatively before the moment update. The logit scale is treated
/// like any other scalar, then clamped so exp(log_temp) stays in (0, 100].
pub fn adam_step(
    state: &AdamState,
    params: &EncoderParams,
    grads: &ParamGrads,
) -> Result<(AdamState, EncoderParams)> {
    for (block, m) in [("w_img", &grads.w_img), ("w_txt", &grads.w_txt)] {
        if !m.is_finite() {
            return Err(Error::DivergedGradient { block });
        }
    }
    if !grads.log_temp.is_finite() {
        return Err(Error::DivergedGradient { block: "log_temp" });
    }
    if grads.w_img.rows() != params.w_img.rows()
        || grads.w_img.cols() != params.w_img.cols()
        || grads.w_txt.rows() != params.w_txt.rows()
        || grads.w_txt.cols() != params.w_txt.cols()
    {
        return Err(Error::ShapeMismatch {
            op: "adam_step",
            left: (grads.w_img.rows(), grads.w_img.cols()),
            right: (params.w_img.rows(), params.w_img.cols()),
        });
    }

    let h = &state.hyper;
    let t = state.t + 1;
    let bc1 = 1.0 - h.beta1.powi(t as i32);
    let bc2 = 1.0 - h.beta2.powi(t as i32);
    let decay = 1.0 - h.lr * h.weight_decay;

    let step_scalar = |p: f64, g: f64, m: f64, v: f64| -> (f64, f64, f64) {
        let m_new = h.beta1 * m + (1.0 - h.beta1) * g;
        let v_new = h.beta2 * v + (1.0 - h.beta2) * g * g;
        let m_hat = m_new / bc1;
        let v_hat = v_new / bc2;
        let p_new = p * decay - h.lr * m_hat / (v_hat.sqrt() + h.eps);
        (p_new, m_new, v_new)
    };

    let step_matrix = |p: &Matrix, g: &Matrix, m: &Matrix, v: &Matrix| {
        let mut p_new = p.clone();
        let mut m_new = m.clone();
        let mut v_new = v.clone();
        for i in 0..p.rows() {
            for j in 0..p.cols() {
                let (pn, mn, vn) = step_scalar(p.get(i, j), g.get(i, j), m.get(i, j), v.get(i, j));
                p_new.set(i, j, pn);
                m_new.set(i, j, mn);
                v_new.set(i, j, vn);
            }
        }
        (p_new, m_new, v_new)
    };

    let (w_img, m_img, v_img) = step_matrix(&params.w_img, &grads.w_img, &state.m_img, &state.v_img);
    let (w_txt, m_txt, v_txt) = step_matrix(&params.w_txt, &grads.w_txt, &state.m_txt, &state.v_txt);
    let (log_temp_raw, m_s, v_s) =
        step_scalar(params.log_temp, grads.log_temp, state.m_s, state.v_s);
    let log_temp = log_temp_raw.min(MAX_TEMP.ln());

    Ok((
        AdamState {
            t,
            m_img,
            v_img,
            m_txt,
            v_txt,
            m_s,
            v_s,
            hyper: state.hyper.clone(),
        },
        EncoderParams {
            w_img,
            w_txt,
            log_temp,
        },
    ))
}
