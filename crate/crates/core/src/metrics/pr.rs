use super::sq_dist;
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

pub const PAPER_K_PRECISION: usize = 10;
pub const PAPER_K_RECALL: usize = 40;

/// `min(paper_k, ⌊n/4⌋)`, at least 1.
pub fn pr_k(paper_k: usize, n: usize) -> usize {
    paper_k.min(n / 4).max(1)
}

/// Squared distance from each row to its `k`-th nearest neighbour within the
/// same cloud, excluding itself.
pub fn knn_radii(cloud: &Tensor, k: usize) -> Result<Vec<f64>> {
    let n = cloud.rows();
    if k == 0 || k >= n {
        return Err(invalid(format!("k = {k} must satisfy 1 ≤ k < cloud size {n}")));
    }
    let mut buf = Vec::with_capacity(n - 1);
    Ok((0..n)
        .map(|i| {
            buf.clear();
            buf.extend((0..n).filter(|&j| j != i).map(|j| sq_dist(cloud.row(i), cloud.row(j))));
            *buf.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b)).1
        })
        .collect())
}

/// Fraction of `points` inside the k-NN manifold of `cloud`.
fn coverage(cloud: &Tensor, radii: &[f64], points: &Tensor) -> f64 {
    let covered = points
        .iter_rows()
        .filter(|p| cloud.iter_rows().zip(radii).any(|(c, &r)| sq_dist(p, c) <= r))
        .count();
    covered as f64 / points.rows().max(1) as f64
}

/// Improved precision (fakes inside the real manifold, `k_p`) and recall
/// (reals inside the fake manifold, `k_r`).
pub fn precision_recall(real: &Tensor, fake: &Tensor, k_p: usize, k_r: usize) -> Result<(f64, f64)> {
    if real.cols() != fake.cols() {
        return Err(Error::Shape { op: "precision_recall", detail: format!("widths {} vs {}", real.cols(), fake.cols()) });
    }
    let real_radii = knn_radii(real, k_p)?;
    let fake_radii = knn_radii(fake, k_r)?;
    Ok((coverage(real, &real_radii, fake), coverage(fake, &fake_radii, real)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sets_are_fully_covered() {
        let a = Tensor::from_rows(&[vec![0.0], vec![1.0], vec![3.0], vec![7.0]]).unwrap();
        assert_eq!(precision_recall(&a, &a, 1, 2).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn distant_clouds_are_disjoint() {
        let a = Tensor::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![100.0], vec![101.0], vec![102.0]]).unwrap();
        assert_eq!(precision_recall(&a, &b, 1, 1).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn k_must_be_smaller_than_cloud() {
        let a = Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(precision_recall(&a, &a, 2, 1).is_err());
        assert_eq!(pr_k(10, 12), 3);
        assert_eq!(pr_k(40, 1000), 40);
        assert_eq!(pr_k(10, 2), 1);
    }
}
