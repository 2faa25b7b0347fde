//! Reference implementation of person-aware cross-attention.

mod encoders;
mod kernel;
pub mod tensor;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use encoders::{encode_pose_stub, encode_reference_stub, pooled_colors, token_grid};
pub use kernel::{
    attention_baseline, block_mass, build_indicator_matrix, compute_attention,
    compute_attention_detailed, downsample_mask, fuse_intra_person_keys, project_values,
    reweight_scale, softmax_row, AttentionResult, IndicatorMatrix, MaxScope, ReweightParams,
};
pub use tensor::{Matrix, Tensor};

use crate::error::{Error, Result};
use crate::model::SeedSpec;

/// `T x C` image features of one reference.
pub type FeatureGrid = Matrix;
/// `T x Cp` pose features of one reference.
pub type PoseFeature = Matrix;
/// `HW x d` queries.
pub type QueryGrid = Matrix;
/// `(T * N) x d` fused keys.
pub type KeyMatrix = Matrix;
/// `(T * N) x d` values.
pub type ValueMatrix = Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub tokens_per_ref: usize,
    pub feature_dim: usize,
    pub pose_dim: usize,
    /// Output width of the key fusion layer.
    pub fusion_dim: usize,
    pub key_dim: usize,
    /// Pose coordinates are divided by this before embedding.
    pub pose_norm: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            tokens_per_ref: 256,
            feature_dim: 768,
            pose_dim: 68,
            fusion_dim: 768,
            key_dim: 320,
            pose_norm: 512.0,
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.tokens_per_ref,
            self.feature_dim,
            self.pose_dim,
            self.fusion_dim,
            self.key_dim,
        ];
        if dims.contains(&0) || self.pose_norm.is_nan() || self.pose_norm <= 0.0 {
            return Err(Error::invalid("attention config", format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Identity,
    Relu,
}

/// Key fusion layer plus key and value projections (row-vector convention, `x W`).
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    /// `(C + Cp) x fusion_dim`
    pub fusion: Matrix,
    /// `fusion_dim`
    pub fusion_bias: Vec<f64>,
    pub activation: Activation,
    /// `fusion_dim x d`
    pub key_proj: Matrix,
    /// `C x d`
    pub value_proj: Matrix,
}

impl FusionWeights {
    pub fn new(
        fusion: Matrix,
        fusion_bias: Vec<f64>,
        activation: Activation,
        key_proj: Matrix,
        value_proj: Matrix,
    ) -> Result<Self> {
        let w = Self {
            fusion,
            fusion_bias,
            activation,
            key_proj,
            value_proj,
        };
        w.check()?;
        Ok(w)
    }

    fn check(&self) -> Result<()> {
        if self.fusion_bias.len() != self.fusion.cols() {
            return Err(Error::shape("fusion bias", self.fusion.cols(), self.fusion_bias.len()));
        }
        if self.key_proj.rows() != self.fusion.cols() {
            return Err(Error::shape("key projection rows", self.fusion.cols(), self.key_proj.rows()));
        }
        if self.value_proj.cols() != self.key_proj.cols() {
            return Err(Error::shape("value projection cols", self.key_proj.cols(), self.value_proj.cols()));
        }
        let finite = self.fusion.is_finite()
            && self.key_proj.is_finite()
            && self.value_proj.is_finite()
            && self.fusion_bias.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("fusion weights"));
        }
        Ok(())
    }

    /// Checks the weights against a config.
    pub fn check_config(&self, config: &AttentionConfig) -> Result<()> {
        let expect = [
            ("fusion", self.fusion.shape(), (config.feature_dim + config.pose_dim, config.fusion_dim)),
            ("key projection", self.key_proj.shape(), (config.fusion_dim, config.key_dim)),
            ("value projection", self.value_proj.shape(), (config.feature_dim, config.key_dim)),
        ];
        for (what, got, want) in expect {
            if got != want {
                return Err(Error::shape(what, format!("{want:?}"), format!("{got:?}")));
            }
        }
        Ok(())
    }

    /// Image features pass through unchanged, pose features are dropped, and
    /// both projections are the identity. Requires `fusion_dim == key_dim == C`.
    pub fn pose_suppressing(feature_dim: usize, pose_dim: usize) -> Self {
        let c = feature_dim;
        Self {
            fusion: Matrix::from_fn(c + pose_dim, c, |i, j| if i == j { 1.0 } else { 0.0 }),
            fusion_bias: vec![0.0; c],
            activation: Activation::Identity,
            key_proj: Matrix::identity(c),
            value_proj: Matrix::identity(c),
        }
    }

    /// Uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn random(config: &AttentionConfig, seed: SeedSpec) -> Self {
        let mut rng = seed.rng();
        let mut uniform = |rows: usize, cols: usize| {
            let s = 1.0 / (rows as f64).sqrt();
            Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-s..=s))
        };
        let fusion = uniform(config.feature_dim + config.pose_dim, config.fusion_dim);
        let key_proj = uniform(config.fusion_dim, config.key_dim);
        let value_proj = uniform(config.feature_dim, config.key_dim);
        Self {
            fusion,
            fusion_bias: vec![0.0; config.fusion_dim],
            activation: Activation::Identity,
            key_proj,
            value_proj,
        }
    }

    /// Applies the fusion layer to tokenwise-concatenated `[image | pose]` rows.
    pub fn fuse(&self, concat: &Matrix) -> Result<Matrix> {
        let mut h = concat.matmul(&self.fusion)?;
        let cols = h.cols();
        for (i, v) in h.data_mut().iter_mut().enumerate() {
            *v += self.fusion_bias[i % cols];
            if self.activation == Activation::Relu && *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(h)
    }

    /// Writes fusion, fusion bias, key projection and value projection, in that order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        tensor::write_tensor(&mut w, &self.fusion.to_tensor())?;
        tensor::write_tensor(&mut w, &Tensor::vector(&self.fusion_bias))?;
        tensor::write_tensor(&mut w, &self.key_proj.to_tensor())?;
        tensor::write_tensor(&mut w, &self.value_proj.to_tensor())?;
        Ok(())
    }

    pub fn load(path: &Path, activation: Activation) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let tensors = tensor::read_all_tensors(&mut r)?;
        let [fusion, bias, key, value]: [Tensor; 4] = tensors
            .try_into()
            .map_err(|t: Vec<Tensor>| Error::TensorFormat(format!("expected 4 tensors, found {}", t.len())))?;
        if bias.dims.len() != 1 {
            return Err(Error::TensorFormat(format!("fusion bias must be rank 1, got {:?}", bias.dims)));
        }
        Self::new(
            fusion.into_matrix()?,
            bias.data.iter().map(|&v| v as f64).collect(),
            activation,
            key.into_matrix()?,
            value.into_matrix()?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> AttentionConfig {
        AttentionConfig {
            tokens_per_ref: 3,
            feature_dim: 4,
            pose_dim: 2,
            fusion_dim: 4,
            key_dim: 4,
            pose_norm: 32.0,
        }
    }

    #[test]
    fn pose_suppressing_keys_equal_image_features() {
        let cfg = tiny();
        let w = FusionWeights::pose_suppressing(cfg.feature_dim, cfg.pose_dim);
        w.check_config(&cfg).unwrap();
        let f1 = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.1);
        let f2 = Matrix::from_fn(3, 4, |i, j| -((i + j) as f64));
        let p = Matrix::from_fn(3, 2, |i, j| 100.0 + (i + j) as f64);
        let k = fuse_intra_person_keys(&[f1.clone(), f2.clone()], &[p.clone(), p], &w).unwrap();
        assert_eq!(k.shape(), (6, 4));
        assert_eq!(k.slice_rows(0, 3), f1);
        assert_eq!(k.slice_rows(3, 6), f2);
    }

    #[test]
    fn keys_match_dense_oracle() {
        let cfg = tiny();
        let mut w = FusionWeights::random(&cfg, SeedSpec::new(8, 1));
        w.fusion_bias = vec![0.1, -0.2, 0.3, 0.05];
        w.activation = Activation::Relu;
        let feats: Vec<Matrix> = (0..2)
            .map(|n| Matrix::from_fn(3, 4, |i, j| ((n * 7 + i * 3 + j) as f64).sin()))
            .collect();
        let poses: Vec<Matrix> = (0..2)
            .map(|n| Matrix::from_fn(3, 2, |i, j| ((n * 5 + i + 2 * j) as f64).cos()))
            .collect();
        let k = fuse_intra_person_keys(&feats, &poses, &w).unwrap();
        // Naive loops: concat, affine, relu, project.
        for n in 0..2 {
            for t in 0..3 {
                let x: Vec<f64> = feats[n].row(t).iter().chain(poses[n].row(t)).copied().collect();
                let mut h = vec![0.0; 4];
                for (m, hm) in h.iter_mut().enumerate() {
                    let mut acc = w.fusion_bias[m];
                    for (a, xa) in x.iter().enumerate() {
                        acc += xa * w.fusion.get(a, m);
                    }
                    *hm = acc.max(0.0);
                }
                for dd in 0..4 {
                    let mut acc = 0.0;
                    for (m, hm) in h.iter().enumerate() {
                        acc += hm * w.key_proj.get(m, dd);
                    }
                    assert!((k.get(n * 3 + t, dd) - acc).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn fusion_rejects_mismatched_lists() {
        let cfg = tiny();
        let w = FusionWeights::random(&cfg, SeedSpec::new(0, 0));
        let f = Matrix::zeros(3, 4);
        let p = Matrix::zeros(3, 2);
        assert!(matches!(
            fuse_intra_person_keys(&[f.clone(), f.clone()], &[p.clone()], &w),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(fuse_intra_person_keys(&[f], &[Matrix::zeros(2, 2)], &w).is_err());
    }

    #[test]
    fn weights_file_round_trip() {
        let cfg = tiny();
        let w = FusionWeights::random(&cfg, SeedSpec::new(4, 4));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.gft");
        w.save(&path).unwrap();
        let back = FusionWeights::load(&path, Activation::Identity).unwrap();
        // f32 storage
        assert!(back.fusion.max_abs_diff(&w.fusion) < 1e-6);
        assert!(back.value_proj.max_abs_diff(&w.value_proj) < 1e-6);
        back.check_config(&cfg).unwrap();

        std::fs::write(&path, b"GFTN").unwrap();
        assert!(FusionWeights::load(&path, Activation::Identity).is_err());
    }
}
