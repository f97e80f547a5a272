//! Power-iteration spectral normalization.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower bound on the singular value estimate.
pub const SIGMA_FLOOR: f64 = 1e-12;

fn normalize_into(src: &[f64], dst: &mut [f64]) -> f64 {
    let norm = src.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm >= SIGMA_FLOOR {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d = s / norm);
    }
    norm
}

/// Random unit vector of length `n`.
pub fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(SIGMA_FLOOR);
    u.iter_mut().for_each(|x| *x /= norm);
    u
}

/// One power-iteration step on `W: rows×cols` starting from the left vector
/// `u`. Updates `u` in place and returns the singular value estimate.
/// A vector whose update vanishes (zero matrix) is left unchanged.
pub fn power_iteration(w: &[f64], rows: usize, cols: usize, u: &mut [f64]) -> f64 {
    let mut wt_u = vec![0.0; cols];
    for r in 0..rows {
        let ur = u[r];
        for (acc, x) in wt_u.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *acc += ur * x;
        }
    }
    let mut v = vec![0.0; cols];
    if normalize_into(&wt_u, &mut v) < SIGMA_FLOOR {
        return SIGMA_FLOOR;
    }
    let wv: Vec<f64> = (0..rows)
        .map(|r| w[r * cols..(r + 1) * cols].iter().zip(&v).map(|(a, b)| a * b).sum())
        .collect();
    normalize_into(&wv, u);
    let sigma: f64 = u.iter().zip(&wv).map(|(a, b)| a * b).sum();
    sigma.max(SIGMA_FLOOR)
}

/// Returns `W / σ̂` after `iters` power iterations from `u` (updated in place).
pub fn spectral_normalize(w: &Tensor, u: &mut [f64], iters: usize) -> Result<Tensor> {
    if w.shape().len() != 2 {
        return Err(Error::Shape { op: "spectral_normalize", detail: format!("expected 2-D, got {:?}", w.shape()) });
    }
    let (rows, cols) = w.dims2();
    if u.len() != rows {
        return Err(Error::Shape {
            op: "spectral_normalize",
            detail: format!("u has length {} for {rows}×{cols}", u.len()),
        });
    }
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::Invalid(format!("power-iteration vector must be unit norm, got {norm}")));
    }
    let mut sigma = SIGMA_FLOOR;
    for _ in 0..iters.max(1) {
        sigma = power_iteration(w.data(), rows, cols, u);
    }
    Tensor::matrix(rows, cols, w.data().iter().map(|x| x / sigma).collect())
}
