use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Dataset, Split};
use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Side length of procedurally generated glyph images.
pub const GLYPH_SIDE: usize = 8;

pub fn ring_centers(modes: usize, radius: f64, phase: f64) -> Vec<[f64; 2]> {
    (0..modes)
        .map(|k| {
            let a = phase + TAU * k as f64 / modes as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

pub fn grid_centers(side: usize, spacing: f64) -> Vec<[f64; 2]> {
    let offset = spacing * (side as f64 - 1.0) / 2.0;
    (0..side * side)
        .map(|k| [(k / side) as f64 * spacing - offset, (k % side) as f64 * spacing - offset])
        .collect()
}

fn mixture(n: usize, centers: &[[f64; 2]], sigma: f64, seed: u64, split: Split) -> Result<Dataset> {
    if centers.is_empty() {
        return Err(invalid("mixture needs at least one mode"));
    }
    if sigma.is_nan() || sigma < 0.0 {
        return Err(invalid(format!("sigma must be non-negative, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        // Round-robin assignment keeps modes balanced within ±1.
        let k = i % centers.len();
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        data.push(centers[k][0] + sigma * e0);
        data.push(centers[k][1] + sigma * e1);
        labels.push(k as u32);
    }
    Dataset::new(Tensor::matrix(n, 2, data)?, Some(labels), split)
}

/// Equal-weight Gaussian mixture on a circle; labels are mode indices.
pub fn make_ring(n: usize, modes: usize, radius: f64, sigma: f64, phase: f64, seed: u64) -> Result<Dataset> {
    if modes == 0 {
        return Err(invalid("ring needs at least one mode"));
    }
    mixture(n, &ring_centers(modes, radius, phase), sigma, seed, Split::TargetTrain)
}

/// Equal-weight Gaussian mixture on a `side × side` grid centred at the origin.
pub fn make_grid(n: usize, side: usize, spacing: f64, sigma: f64, seed: u64) -> Result<Dataset> {
    if side == 0 {
        return Err(invalid("grid needs side ≥ 1"));
    }
    mixture(n, &grid_centers(side, spacing), sigma, seed, Split::TargetTrain)
}

/// Flattened 8×8 grayscale blobs in [-1, 1]. Class `k` places a Gaussian
/// blob at one of `classes` positions on a ring around the image centre.
pub fn make_glyphs(n: usize, classes: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if classes == 0 {
        return Err(invalid("glyphs need at least one class"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = GLYPH_SIDE as f64;
    let centre = (side - 1.0) / 2.0;
    let mut data = Vec::with_capacity(n * GLYPH_SIDE * GLYPH_SIDE);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % classes;
        let a = TAU * k as f64 / classes as f64;
        let jitter: f64 = rng.sample::<f64, _>(StandardNormal) * 0.3;
        let (cx, cy) = (centre + 2.2 * a.cos() + jitter, centre + 2.2 * a.sin() - jitter);
        let width = 1.1 + 0.2 * rng.random::<f64>();
        for r in 0..GLYPH_SIDE {
            for c in 0..GLYPH_SIDE {
                let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                let v = (-d2 / (2.0 * width * width)).exp();
                let e: f64 = rng.sample(StandardNormal);
                data.push((2.0 * v - 1.0 + noise * e).clamp(-1.0, 1.0));
            }
        }
        labels.push(k as u32);
    }
    Dataset::new(Tensor::matrix(n, GLYPH_SIDE * GLYPH_SIDE, data)?, Some(labels), Split::Source)
}
