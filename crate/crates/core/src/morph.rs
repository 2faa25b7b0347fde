//! Exact squared Euclidean distance transform on lattice pixels.
//!
//! Two-pass lower-envelope algorithm of Felzenszwalb and Huttenlocher,
//! O(width * height).

use crate::model::MaskGrid;

const FAR: f64 = 1e20;

fn lower_envelope(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates from -inf
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
            }
            break;
        }
    }
    k = 0;
    for (q, slot) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k];
        let d = qf - p as f64;
        *slot = d * d + f[p];
    }
}

/// Squared distance from every pixel to the nearest set pixel of `mask`.
/// Pixels of an empty mask get a very large value.
pub fn distance_sq(mask: &MaskGrid) -> Vec<f64> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let mut grid: Vec<f64> = mask
        .bits()
        .iter()
        .map(|&b| if b { 0.0 } else { FAR })
        .collect();
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        lower_envelope(&f[..h], &mut d[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        lower_envelope(&f[..w], &mut d[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&d[..w]);
    }
    grid
}

/// Dilation by a closed Euclidean disc of `radius`.
pub fn dilate(mask: &MaskGrid, radius: f64) -> MaskGrid {
    if radius <= 0.0 {
        return mask.clone();
    }
    let r_sq = radius * radius;
    let bits = distance_sq(mask).into_iter().map(|d| d <= r_sq).collect();
    MaskGrid::from_bits(mask.width(), mask.height(), bits).expect("same dims")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(mask: &MaskGrid) -> Vec<f64> {
        let set: Vec<(u32, u32)> = mask.iter_set().collect();
        let mut out = Vec::new();
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                let best = set
                    .iter()
                    .map(|&(sx, sy)| {
                        let dx = sx as f64 - x as f64;
                        let dy = sy as f64 - y as f64;
                        dx * dx + dy * dy
                    })
                    .fold(FAR, f64::min);
                out.push(best);
            }
        }
        out
    }

    #[test]
    fn single_pixel() {
        let mut m = MaskGrid::empty(7, 5);
        m.set(3, 2, true);
        let d = distance_sq(&m);
        assert_eq!(d[2 * 7 + 3], 0.0);
        assert_eq!(d[0], 13.0);
        assert_eq!(d, brute(&m));
    }

    #[test]
    fn empty_mask_is_far() {
        assert!(distance_sq(&MaskGrid::empty(3, 3)).iter().all(|&d| d >= FAR));
    }

    proptest! {
        #[test]
        fn matches_brute_force(w in 1u32..14, h in 1u32..14, seed in any::<u64>()) {
            let bits: Vec<bool> = (0..w * h).map(|i| crate::model::splitmix64(seed ^ i as u64) % 7 == 0).collect();
            let m = MaskGrid::from_bits(w, h, bits).unwrap();
            if !m.is_empty() {
                prop_assert_eq!(distance_sq(&m), brute(&m));
            }
        }
    }
}
