//! Deterministic stand-ins for the reference image and pose encoders.
//!
//! They reproduce only the output shapes of the learned encoders, so the
//! attention math can be exercised end to end without model weights.

use image::RgbImage;
use rand::Rng;

use super::tensor::Matrix;
use super::{AttentionConfig, FeatureGrid, PoseFeature};
use crate::error::{Error, Result};
use crate::model::{SeedSpec, Skeleton, NUM_JOINTS};

/// Factor `tokens` into a pooling grid `(rows, cols)` as close to square as possible.
pub fn token_grid(tokens: usize) -> (usize, usize) {
    let mut rows = (tokens as f64).sqrt().floor() as usize;
    while rows > 1 && !tokens.is_multiple_of(rows) {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, tokens / rows)
}

fn cell_span(i: usize, cells: usize, extent: usize) -> (usize, usize) {
    let start = (i * extent / cells).min(extent - 1);
    let end = ((i + 1) * extent / cells).max(start + 1).min(extent);
    (start, end)
}

/// Mean colour of each pooling cell, in `[0, 1]`, row-major over the token grid.
pub fn pooled_colors(image: &RgbImage, tokens: usize) -> Result<Vec<[f64; 3]>> {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    let (gr, gc) = token_grid(tokens);
    let mut out = Vec::with_capacity(tokens);
    for i in 0..gr {
        let (y0, y1) = cell_span(i, gr, h as usize);
        for j in 0..gc {
            let (x0, x1) = cell_span(j, gc, w as usize);
            let mut sum = [0.0f64; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = image.get_pixel(x as u32, y as u32).0;
                    for c in 0..3 {
                        sum[c] += p[c] as f64;
                    }
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as f64 * 255.0;
            out.push([sum[0] / n, sum[1] / n, sum[2] / n]);
        }
    }
    Ok(out)
}

/// `T x C` features: each token's pooled colour pushed through a fixed sinusoidal basis.
///
/// Channel `c` reads colour component `c % 3` with frequency `1 + c / 3`
/// (in units of pi), a seeded phase, and a small positional term so equal
/// colours at different tokens remain distinguishable.
pub fn encode_reference_stub(image: &RgbImage, seed: SeedSpec, config: &AttentionConfig) -> Result<FeatureGrid> {
    let colors = pooled_colors(image, config.tokens_per_ref)?;
    let mut rng = seed.rng();
    let phases: Vec<f64> = (0..config.feature_dim)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    let c_dim = config.feature_dim;
    Ok(Matrix::from_fn(config.tokens_per_ref, c_dim, |t, c| {
        let freq = 1.0 + (c / 3) as f64;
        let pos = 0.01 * (c % 7 + 1) as f64 * t as f64;
        (std::f64::consts::PI * freq * colors[t][c % 3] + phases[c] + pos).sin()
    }))
}

/// Angular frequencies for the pose embedding. They are never multiples of
/// 2*pi, so shifting coordinates by whole normalisation units changes the output.
fn pose_frequency(k: usize) -> f64 {
    std::f64::consts::E * 1.5f64.powi(k as i32)
}

/// `T x Cp` pose features, identical across tokens.
///
/// Channel `c` describes joint `c % 17`; `f = c / 17` selects
/// sin x, cos x, sin y, cos y for `f % 4` at frequency index `f / 4`.
/// Coordinates are divided by `config.pose_norm`; missing joints give zeros.
pub fn encode_pose_stub(s: &Skeleton, config: &AttentionConfig) -> PoseFeature {
    let row: Vec<f64> = (0..config.pose_dim)
        .map(|c| {
            let kp = &s.keypoints()[c % NUM_JOINTS];
            if !kp.is_present() {
                return 0.0;
            }
            let f = c / NUM_JOINTS;
            let omega = pose_frequency(f / 4);
            let x = kp.x / config.pose_norm;
            let y = kp.y / config.pose_norm;
            match f % 4 {
                0 => (omega * x).sin(),
                1 => (omega * x).cos(),
                2 => (omega * y).sin(),
                _ => (omega * y).cos(),
            }
        })
        .collect();
    Matrix::from_fn(config.tokens_per_ref, config.pose_dim, |_, c| row[c])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Joint, Keypoint};
    use image::Rgb;

    fn tiny() -> AttentionConfig {
        AttentionConfig {
            tokens_per_ref: 6,
            feature_dim: 10,
            pose_dim: 40,
            fusion_dim: 10,
            key_dim: 4,
            pose_norm: 64.0,
        }
    }

    #[test]
    fn token_grid_factorisation() {
        assert_eq!(token_grid(256), (16, 16));
        assert_eq!(token_grid(6), (2, 3));
        assert_eq!(token_grid(7), (1, 7));
        assert_eq!(token_grid(1), (1, 1));
    }

    #[test]
    fn reference_default_shape() {
        let img = RgbImage::from_pixel(40, 30, Rgb([10, 20, 30]));
        let f = encode_reference_stub(&img, SeedSpec::new(0, 0), &AttentionConfig::default()).unwrap();
        assert_eq!(f.shape(), (256, 768));
        assert!(f.is_finite());
    }

    #[test]
    fn reference_is_deterministic_and_separates_constants() {
        let cfg = tiny();
        let black = RgbImage::from_pixel(8, 8, Rgb([0, 0, 0]));
        let white = RgbImage::from_pixel(8, 8, Rgb([255, 255, 255]));
        let seed = SeedSpec::new(1, 2);
        let a = encode_reference_stub(&black, seed, &cfg).unwrap();
        assert_eq!(a, encode_reference_stub(&black, seed, &cfg).unwrap());
        let b = encode_reference_stub(&white, seed, &cfg).unwrap();
        for t in 0..cfg.tokens_per_ref {
            assert!(a.row(t).iter().zip(b.row(t)).any(|(x, y)| x != y), "token {t}");
        }
    }

    #[test]
    fn reference_rejects_empty_image() {
        let empty = RgbImage::new(0, 5);
        assert!(matches!(
            encode_reference_stub(&empty, SeedSpec::new(0, 0), &tiny()),
            Err(Error::EmptyImage)
        ));
    }

    #[test]
    fn pose_shape_determinism_and_translation() {
        let cfg = tiny();
        let s = Skeleton::empty()
            .with_keypoint(Joint::Nose, Keypoint::new(10.0, 12.0, 1.0))
            .with_keypoint(Joint::LeftWrist, Keypoint::new(30.0, 40.0, 0.7));
        let p = encode_pose_stub(&s, &cfg);
        assert_eq!(p.shape(), (6, 40));
        assert_eq!(p, encode_pose_stub(&s, &cfg));
        let mut kps = *s.keypoints();
        for kp in kps.iter_mut().filter(|k| k.is_present()) {
            kp.x += cfg.pose_norm;
            kp.y += 2.0 * cfg.pose_norm;
        }
        let shifted = Skeleton::new(kps).unwrap();
        assert_ne!(encode_pose_stub(&shifted, &cfg), p);
    }
}
