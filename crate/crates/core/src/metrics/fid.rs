use log::warn;

use crate::error::{invalid, Error, Result};
use crate::linalg::{matmul_square, mean_cov, symmetric_eigen};
use crate::tensor::Tensor;

const REL_EIG_FLOOR: f64 = 1e-13;

/// Fréchet distance between Gaussians `N(μ_a, Σ_a)` and `N(μ_b, Σ_b)`:
/// `‖μ_a−μ_b‖² + Tr(Σ_a + Σ_b − 2(Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2})`.
pub fn fid_from_stats(mu_a: &[f64], cov_a: &[f64], mu_b: &[f64], cov_b: &[f64]) -> Result<f64> {
    let q = mu_a.len();
    if mu_b.len() != q || cov_a.len() != q * q || cov_b.len() != q * q {
        return Err(Error::Shape { op: "fid", detail: format!("mean widths {} / {}, covariance lengths {} / {}", q, mu_b.len(), cov_a.len(), cov_b.len()) });
    }
    let mean_term: f64 = mu_a.iter().zip(mu_b).map(|(a, b)| (a - b) * (a - b)).sum();
    let clip = |l: f64| {
        if l < -1e-8 {
            warn!("clipping eigenvalue {l:e} to 0 in FID");
        }
        l.max(0.0)
    };
    // Eigenvalues within round-off of zero are treated as exactly zero so
    // rank-deficient covariances do not pick up √ε-sized noise.
    let floor = |values: &[f64]| REL_EIG_FLOOR * values.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let eig_a = symmetric_eigen(cov_a, q)?;
    let fa = floor(&eig_a.values);
    let sqrt_a = eig_a.map(|l| if l <= fa { clip(l).min(0.0) } else { l.sqrt() });
    let inner = matmul_square(&matmul_square(&sqrt_a, cov_b, q), &sqrt_a, q);
    let eig_inner = symmetric_eigen(&inner, q)?;
    let fi = floor(&eig_inner.values);
    let cross: f64 = eig_inner.values.iter().map(|&l| if l <= fi { clip(l).min(0.0) } else { l.sqrt() }).sum();
    let trace = |c: &[f64]| (0..q).map(|i| c[i * q + i]).sum::<f64>();
    Ok((mean_term + trace(cov_a) + trace(cov_b) - 2.0 * cross).max(0.0))
}

/// FID between two feature clouds (rows are samples, unbiased covariances).
pub fn fid(a: &Tensor, b: &Tensor) -> Result<f64> {
    let ((ma, qa), (mb, qb)) = (a.dims2(), b.dims2());
    if qa != qb {
        return Err(Error::Shape { op: "fid", detail: format!("feature widths {qa} vs {qb}") });
    }
    if ma < 2 || mb < 2 {
        return Err(invalid("FID needs at least two rows per cloud"));
    }
    if ma <= qa || mb <= qb {
        warn!("FID with {ma}/{mb} rows in {qa} dimensions: covariance is rank-deficient");
    }
    let (mu_a, cov_a) = mean_cov(a.data(), ma, qa);
    let (mu_b, cov_b) = mean_cov(b.data(), mb, qb);
    fid_from_stats(&mu_a, &cov_a, &mu_b, &cov_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_cases() {
        assert!((fid_from_stats(&[0.0], &[1.0], &[1.0], &[1.0]).unwrap() - 1.0).abs() < 1e-12);
        let d = fid_from_stats(&[0.0, 0.0], &[1.0, 0.0, 0.0, 4.0], &[0.0, 0.0], &[4.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_clouds() {
        let a = Tensor::from_rows(&[vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5], vec![3.0, 1.0]]).unwrap();
        assert!(fid(&a, &a).unwrap() < 1e-9);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let a = Tensor::zeros(&[3, 2]);
        let b = Tensor::zeros(&[3, 3]);
        assert!(matches!(fid(&a, &b), Err(Error::Shape { .. })));
    }
}
