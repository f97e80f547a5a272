use super::sq_dist;
use crate::error::{invalid, Error, Result};
use crate::nets::Discriminator;
use crate::tensor::Tensor;

/// Anything that assigns per-example scores to inputs with optional priors.
pub trait Scorer {
    fn score(&self, x: &Tensor, prior: Option<&Tensor>) -> Result<Vec<f64>>;
}

impl Scorer for Discriminator {
    fn score(&self, x: &Tensor, prior: Option<&Tensor>) -> Result<Vec<f64>> {
        Discriminator::score(self, x, prior)
    }
}

/// Mean score over the training batch minus mean score over the validation
/// batch; `prior_fn` supplies the conditioning for each batch (or `None`).
pub fn overfit_gap<S: Scorer + ?Sized>(
    d: &S,
    train: &Tensor,
    val: &Tensor,
    prior_fn: &dyn Fn(&Tensor) -> Result<Option<Tensor>>,
) -> Result<f64> {
    if train.rows() == 0 || val.rows() == 0 {
        return Err(invalid("overfit gap needs non-empty batches"));
    }
    let mean_score = |x: &Tensor| -> Result<f64> {
        let p = prior_fn(x)?;
        let s = d.score(x, p.as_ref())?;
        Ok(s.iter().sum::<f64>() / s.len() as f64)
    };
    Ok(mean_score(train)? - mean_score(val)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coverage {
    /// Modes receiving at least the minimum share of samples within the radius.
    pub covered: usize,
    /// Nearest-center assignment counts.
    pub histogram: Vec<usize>,
    /// Fraction of all samples within the radius of each mode.
    pub within: Vec<f64>,
    /// Fraction of samples within the radius of their nearest mode.
    pub high_quality: f64,
}

/// Counts modes with at least `min_fraction` of the samples within
/// `threshold_sigma · sigma` of their center.
pub fn mode_coverage(samples: &Tensor, centers: &[Vec<f64>], sigma: f64, threshold_sigma: f64, min_fraction: f64) -> Result<Coverage> {
    if centers.is_empty() {
        return Err(invalid("mode coverage needs at least one center"));
    }
    if centers.iter().any(|c| c.len() != samples.cols()) {
        return Err(Error::Shape { op: "mode_coverage", detail: format!("center width differs from sample width {}", samples.cols()) });
    }
    let r2 = (threshold_sigma * sigma).powi(2);
    let mut histogram = vec![0usize; centers.len()];
    let mut near = vec![0usize; centers.len()];
    let mut good = 0usize;
    for x in samples.iter_rows() {
        let (best, d2) = centers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, sq_dist(x, c)))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        histogram[best] += 1;
        if d2 <= r2 {
            near[best] += 1;
            good += 1;
        }
    }
    let n = samples.rows().max(1) as f64;
    let within: Vec<f64> = near.iter().map(|&c| c as f64 / n).collect();
    let covered = if samples.rows() == 0 { 0 } else { within.iter().filter(|&&f| f >= min_fraction).count() };
    Ok(Coverage { covered, histogram, within, high_quality: good as f64 / n })
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Pearson correlation; errors on a constant series.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid("Pearson correlation needs two equally long series of length ≥ 2"));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(invalid("Pearson correlation of a zero-variance series"));
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Correlation {
    /// Discriminator-space vs reference-space cosine similarity.
    pub reference: f64,
    /// Discriminator-space cosine similarity vs data-space L2 distance.
    pub data_l2: Option<f64>,
}

/// Correlation of pairwise similarities in `D_f` space with those in a
/// reference feature space (and optionally with raw-data distances).
pub fn feature_correlation(disc: &Tensor, reference: &Tensor, pairs: &[(usize, usize)], data: Option<&Tensor>) -> Result<Correlation> {
    if pairs.len() < 10 {
        return Err(invalid(format!("feature correlation needs ≥ 10 pairs, got {}", pairs.len())));
    }
    if disc.rows() != reference.rows() || data.is_some_and(|d| d.rows() != disc.rows()) {
        return Err(Error::Shape { op: "feature_correlation", detail: "row counts differ".into() });
    }
    let n = disc.rows();
    if pairs.iter().any(|&(i, j)| i >= n || j >= n) {
        return Err(invalid("pair index out of range"));
    }
    let sim_d: Vec<f64> = pairs.iter().map(|&(i, j)| cosine(disc.row(i), disc.row(j))).collect();
    let sim_r: Vec<f64> = pairs.iter().map(|&(i, j)| cosine(reference.row(i), reference.row(j))).collect();
    let data_l2 = match data {
        Some(x) => {
            let l2: Vec<f64> = pairs.iter().map(|&(i, j)| sq_dist(x.row(i), x.row(j)).sqrt()).collect();
            Some(pearson(&sim_d, &l2)?)
        }
        None => None,
    };
    Ok(Correlation { reference: pearson(&sim_d, &sim_r)?, data_l2 })
}
