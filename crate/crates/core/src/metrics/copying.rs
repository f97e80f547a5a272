use log::info;

use super::sq_dist;
use crate::error::{invalid, Error, Result};
use crate::prior::kmeans;
use crate::seed::rng_for;
use crate::tensor::Tensor;

/// Pairwise Mann–Whitney statistic of `A` against `B`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MannWhitney {
    /// `#{(a, b): a < b} + ½·#{ties}`.
    pub u: f64,
    /// `(U − mn/2) / sd`, with the tie-corrected variance.
    pub z: f64,
}

pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    let (m, n) = (a.len(), b.len());
    if m == 0 || n == 0 {
        return Err(invalid("Mann–Whitney needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "mann_whitney" });
    }
    // Mid-ranks of the pooled sample; the rank sum of B counts pairs a < b.
    let mut pooled: Vec<(f64, bool)> = a.iter().map(|&v| (v, false)).chain(b.iter().map(|&v| (v, true))).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total = m + n;
    let mut rank_sum_b = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < total {
        let mut j = i + 1;
        while j < total && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let t = (j - i) as f64;
        let mid_rank = (i + j + 1) as f64 / 2.0;
        rank_sum_b += mid_rank * pooled[i..j].iter().filter(|p| p.1).count() as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let (mf, nf, nt) = (m as f64, n as f64, total as f64);
    let u = rank_sum_b - nf * (nf + 1.0) / 2.0;
    let var = mf * nf / 12.0 * ((nt + 1.0) - if total > 1 { tie_term / (nt * (nt - 1.0)) } else { 0.0 });
    let z = if var > 0.0 { (u - mf * nf / 2.0) / var.sqrt() } else { 0.0 };
    Ok(MannWhitney { u, z })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CtResult {
    /// Test-mass weighted mean of the per-cell statistics.
    pub c_t: f64,
    /// Per-cell statistic (`None` for skipped cells).
    pub cell_z: Vec<Option<f64>>,
    pub cell_weight: Vec<f64>,
}

fn nearest_sq(train: &Tensor, x: &[f64]) -> f64 {
    train.iter_rows().map(|t| sq_dist(t, x)).fold(f64::INFINITY, f64::min)
}

/// Data-copying statistic: compares distances from generated and from test
/// points to their nearest training point. Oriented so that generated points
/// sitting systematically closer to the training set give negative values.
pub fn ct_statistic(train: &Tensor, test: &Tensor, gen: &Tensor, cells: Option<usize>, seed: u64) -> Result<CtResult> {
    if train.rows() == 0 || test.rows() == 0 || gen.rows() == 0 {
        return Err(invalid("C_T needs non-empty train, test and generated clouds"));
    }
    let q = train.cols();
    if test.cols() != q || gen.cols() != q {
        return Err(Error::Shape { op: "ct_statistic", detail: format!("widths {q}/{}/{}", test.cols(), gen.cols()) });
    }
    let test_d: Vec<f64> = test.iter_rows().map(|x| nearest_sq(train, x).sqrt()).collect();
    let gen_d: Vec<f64> = gen.iter_rows().map(|x| nearest_sq(train, x).sqrt()).collect();
    let k = cells.unwrap_or(1);
    if k == 0 {
        return Err(invalid("cells must be ≥ 1"));
    }
    let (test_cell, gen_cell): (Vec<usize>, Vec<usize>) = if k == 1 {
        (vec![0; test.rows()], vec![0; gen.rows()])
    } else {
        let km = kmeans(train.data(), q, k, 50, &mut rng_for(seed, 0))?;
        (test.iter_rows().map(|x| km.assign(x)).collect(), gen.iter_rows().map(|x| km.assign(x)).collect())
    };
    let mut cell_z = vec![None; k];
    let mut cell_weight = vec![0.0; k];
    for c in 0..k {
        let t: Vec<f64> = test_d.iter().zip(&test_cell).filter(|(_, &a)| a == c).map(|(d, _)| *d).collect();
        let g: Vec<f64> = gen_d.iter().zip(&gen_cell).filter(|(_, &a)| a == c).map(|(d, _)| *d).collect();
        if t.is_empty() || g.is_empty() {
            info!("C_T cell {c} skipped ({} test, {} generated points)", t.len(), g.len());
            continue;
        }
        cell_z[c] = Some(mann_whitney(&t, &g)?.z);
        cell_weight[c] = t.len() as f64;
    }
    let mass: f64 = cell_weight.iter().sum();
    if mass == 0.0 {
        return Err(invalid("every C_T cell was empty"));
    }
    cell_weight.iter_mut().for_each(|w| *w /= mass);
    let c_t = cell_z.iter().zip(&cell_weight).filter_map(|(z, w)| z.map(|z| z * w)).sum();
    Ok(CtResult { c_t, cell_z, cell_weight })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_pairs_ordered() {
        let r = mann_whitney(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u, 4.0);
    }

    #[test]
    fn same_multiset_gives_zero() {
        let a = [1.0, 2.0, 2.0, 5.0];
        assert_eq!(mann_whitney(&a, &a).unwrap().z, 0.0);
    }

    #[test]
    fn all_tied_is_zero_not_nan() {
        assert_eq!(mann_whitney(&[1.0, 1.0], &[1.0]).unwrap().z, 0.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(mann_whitney(&[], &[1.0]).is_err());
    }

    #[test]
    fn gen_equal_to_test_is_exactly_zero() {
        let train = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let test = Tensor::from_rows(&[vec![0.2, 0.1], vec![0.9, 1.3], vec![0.5, 0.5]]).unwrap();
        assert_eq!(ct_statistic(&train, &test, &test, None, 0).unwrap().c_t, 0.0);
    }

    #[test]
    fn copies_are_strongly_negative() {
        let train = Tensor::from_rows(&(0..50).map(|i| vec![i as f64 * 0.37 % 1.0, (i * i) as f64 * 0.11 % 1.0]).collect::<Vec<_>>()).unwrap();
        let test = Tensor::from_rows(&(0..50).map(|i| vec![(i as f64 * 0.53 + 0.1) % 1.0, (i as f64 * 0.29 + 0.7) % 1.0]).collect::<Vec<_>>()).unwrap();
        let gen = train.clone();
        let r = ct_statistic(&train, &test, &gen, None, 0).unwrap();
        assert!(r.c_t < -2.0, "{r:?}");
        let r = ct_statistic(&train, &test, &gen, Some(3), 0).unwrap();
        assert!(r.c_t < 0.0, "{r:?}");
        assert!((r.cell_weight.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
