//! Person-aware cross-attention.
//!
//! Keys fuse each reference's image and pose features; values carry image
//! features only. A binary indicator matrix marks, for every query location,
//! the token block of the reference person whose box covers it, and is added
//! to the logits with a noise-dependent scale before the softmax:
//!
//! ```text
//! M_attn = Q K^T
//! w'     = w * ln(1 + sigma) * max(M_attn)
//! O      = softmax((M_attn + w' * M_ind) / sqrt(d)) V
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::{dot, Matrix};
use super::{FeatureGrid, FusionWeights, KeyMatrix, PoseFeature, ValueMatrix};
use crate::error::{Error, Result};
use crate::model::MaskGrid;

/// Binary `HW x (T * N)` matrix; column block `n` repeats reference `n`'s mask.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMatrix(Matrix);

impl IndicatorMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    /// Validates that `m` is binary.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("indicator", "entries must be 0 or 1"));
        }
        Ok(Self(m))
    }
}

/// Flattens each mask row-major and repeats it across `tokens` columns.
pub fn build_indicator_matrix(masks: &[MaskGrid], tokens: usize) -> Result<IndicatorMatrix> {
    let first = masks
        .first()
        .ok_or_else(|| Error::shape("indicator masks", "at least 1", 0))?;
    let dims = first.dims();
    for m in masks {
        if m.dims() != dims {
            return Err(Error::shape(
                "indicator mask",
                format!("{:?}", dims),
                format!("{:?}", m.dims()),
            ));
        }
    }
    let hw = dims.0 as usize * dims.1 as usize;
    let cols = tokens * masks.len();
    let mut out = Matrix::zeros(hw, cols);
    for (n, m) in masks.iter().enumerate() {
        for (i, &bit) in m.bits().iter().enumerate() {
            if bit {
                for t in 0..tokens {
                    out.set(i, n * tokens + t, 1.0);
                }
            }
        }
    }
    Ok(IndicatorMatrix(out))
}

/// Resamples an image-resolution mask to a `width x height` grid.
///
/// Each output cell is set when at least half of its area is covered by set
/// source pixels, each source pixel being a unit square.
pub fn downsample_mask(mask: &MaskGrid, width: u32, height: u32) -> MaskGrid {
    let (sw, sh) = (mask.width() as f64, mask.height() as f64);
    let sx = sw / width as f64;
    let sy = sh / height as f64;
    let mut out = MaskGrid::empty(width, height);
    for j in 0..height {
        let (y0, y1) = (j as f64 * sy, (j + 1) as f64 * sy);
        for i in 0..width {
            let (x0, x1) = (i as f64 * sx, (i + 1) as f64 * sx);
            let mut covered = 0.0;
            for py in (y0.floor() as u32)..(y1.ceil() as u32).min(mask.height()) {
                let oy = (py as f64 + 1.0).min(y1) - (py as f64).max(y0);
                if oy <= 0.0 {
                    continue;
                }
                for px in (x0.floor() as u32)..(x1.ceil() as u32).min(mask.width()) {
                    if mask.get(px, py) {
                        let ox = (px as f64 + 1.0).min(x1) - (px as f64).max(x0);
                        if ox > 0.0 {
                            covered += ox * oy;
                        }
                    }
                }
            }
            if covered >= 0.5 * sx * sy {
                out.set(i, j, true);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxScope {
    /// One maximum over the whole attention matrix.
    #[default]
    Global,
    /// A separate maximum for each query row.
    PerRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReweightParams {
    /// User-chosen strength, `>= 0`.
    pub w: f64,
    /// Diffusion noise level, `>= 0`.
    pub sigma: f64,
    pub max_scope: MaxScope,
}

impl ReweightParams {
    pub fn new(w: f64, sigma: f64) -> Self {
        Self {
            w,
            sigma,
            max_scope: MaxScope::Global,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w.is_finite() && self.sigma.is_finite()) {
            return Err(Error::NonFinite("reweight params"));
        }
        if self.w < 0.0 || self.sigma < 0.0 {
            return Err(Error::invalid(
                "reweight params",
                format!("w and sigma must be >= 0, got w={} sigma={}", self.w, self.sigma),
            ));
        }
        Ok(())
    }
}

/// `w * ln(1 + sigma) * mattn_max`.
pub fn reweight_scale(params: &ReweightParams, mattn_max: f64) -> Result<f64> {
    params.validate()?;
    if !mattn_max.is_finite() {
        return Err(Error::NonFinite("attention maximum"));
    }
    let s = params.w * params.sigma.ln_1p() * mattn_max;
    if !s.is_finite() {
        return Err(Error::NonFinite("reweight scale"));
    }
    Ok(s)
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_row(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `K_hat = phi_K([MLP([f_1, p_1]); ...; MLP([f_N, p_N])])`.
pub fn fuse_intra_person_keys(
    feats: &[FeatureGrid],
    poses: &[PoseFeature],
    weights: &FusionWeights,
) -> Result<KeyMatrix> {
    if feats.len() != poses.len() {
        return Err(Error::shape("reference count", feats.len(), poses.len()));
    }
    if feats.is_empty() {
        return Err(Error::shape("reference count", "at least 1", 0));
    }
    let blocks = feats
        .iter()
        .zip(poses)
        .map(|(f, p)| {
            if f.rows() != p.rows() {
                return Err(Error::shape("pose tokens", f.rows(), p.rows()));
            }
            weights.fuse(&f.hcat(p)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Matrix> = blocks.iter().collect();
    Matrix::vstack(&refs)?.matmul(&weights.key_proj)
}

/// `V = [f_1; ...; f_N] phi_V`, without pose information.
pub fn project_values(feats: &[FeatureGrid], weights: &FusionWeights) -> Result<ValueMatrix> {
    if feats.is_empty() {
        return Err(Error::shape("reference count", "at least 1", 0));
    }
    let refs: Vec<&Matrix> = feats.iter().collect();
    Matrix::vstack(&refs)?.matmul(&weights.value_proj)
}

/// Attention output together with the probabilities that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionResult {
    pub output: Matrix,
    /// Row-stochastic `HW x (T * N)` matrix.
    pub probs: Matrix,
    /// Indicator scale applied to each row.
    pub scales: Vec<f64>,
}

fn check_qkv(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<()> {
    if q.cols() != k.cols() {
        return Err(Error::shape("key dim", q.cols(), k.cols()));
    }
    if k.rows() != v.rows() {
        return Err(Error::shape("value rows", k.rows(), v.rows()));
    }
    if q.cols() == 0 || k.rows() == 0 || v.cols() == 0 {
        return Err(Error::shape("attention", "non-empty", format!("{:?} {:?}", q.shape(), k.shape())));
    }
    for (name, m) in [("query", q), ("key", k), ("value", v)] {
        if !m.is_finite() {
            return Err(Error::NonFinite(name));
        }
    }
    Ok(())
}

/// Shared core: logits row `i` are `(q_i . k_j + scale_i * bias_ij) / sqrt(d)`.
fn attend(q: &Matrix, k: &Matrix, v: &Matrix, bias: Option<(&Matrix, &[f64])>) -> AttentionResult {
    let (rows, keys, out_dim) = (q.rows(), k.rows(), v.cols());
    let inv_sqrt_d = 1.0 / (q.cols() as f64).sqrt();
    let mut probs = Matrix::zeros(rows, keys);
    let mut output = Matrix::zeros(rows, out_dim);
    probs
        .data_mut()
        .par_chunks_mut(keys)
        .zip(output.data_mut().par_chunks_mut(out_dim))
        .enumerate()
        .for_each(|(i, (p, o))| {
            let qi = q.row(i);
            for (j, slot) in p.iter_mut().enumerate() {
                let mut logit = dot(qi, k.row(j));
                if let Some((ind, scales)) = bias {
                    logit += scales[i] * ind.get(i, j);
                }
                *slot = logit * inv_sqrt_d;
            }
            softmax_row(p);
            for (j, &pj) in p.iter().enumerate() {
                for (oc, &vc) in o.iter_mut().zip(v.row(j)) {
                    *oc += pj * vc;
                }
            }
        });
    let scales = bias.map_or_else(|| vec![0.0; rows], |(_, s)| s.to_vec());
    AttentionResult { output, probs, scales }
}

/// Plain scaled dot-product attention, `softmax(Q K^T / sqrt(d)) V`.
pub fn attention_baseline(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix> {
    check_qkv(q, k, v)?;
    Ok(attend(q, k, v, None).output)
}

pub fn compute_attention_detailed(
    q: &Matrix,
    k_hat: &KeyMatrix,
    v: &ValueMatrix,
    indicator: &IndicatorMatrix,
    params: &ReweightParams,
) -> Result<AttentionResult> {
    check_qkv(q, k_hat, v)?;
    let ind = indicator.matrix();
    if ind.shape() != (q.rows(), k_hat.rows()) {
        return Err(Error::shape(
            "indicator",
            format!("{:?}", (q.rows(), k_hat.rows())),
            format!("{:?}", ind.shape()),
        ));
    }
    let scores = q.matmul_transposed(k_hat)?;
    let scales = match params.max_scope {
        MaxScope::Global => {
            let s = reweight_scale(params, scores.max())?;
            vec![s; q.rows()]
        }
        MaxScope::PerRow => (0..q.rows())
            .map(|i| {
                let m = scores.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                reweight_scale(params, m)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(attend(q, k_hat, v, Some((ind, &scales))))
}

/// Person-aware attention output, `HW x d_v`.
pub fn compute_attention(
    q: &Matrix,
    k_hat: &KeyMatrix,
    v: &ValueMatrix,
    indicator: &IndicatorMatrix,
    params: &ReweightParams,
) -> Result<Matrix> {
    Ok(compute_attention_detailed(q, k_hat, v, indicator, params)?.output)
}

/// Attention mass each query row puts on each reference block of `tokens` columns.
pub fn block_mass(probs: &Matrix, tokens: usize) -> Matrix {
    let blocks = probs.cols() / tokens;
    Matrix::from_fn(probs.rows(), blocks, |i, n| {
        probs.row(i)[n * tokens..(n + 1) * tokens].iter().sum()
    })
}
