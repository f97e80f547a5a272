use log::warn;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans_pp_seeds;
use super::PriorSet;
use crate::error::{invalid, Error, Result};
use crate::linalg::cholesky;
use crate::seed::rng_for;
use crate::tensor::Tensor;

/// Lower bound on every variance (diagonal) or added ridge (full).
pub const COV_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Diagonal,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmmConfig {
    pub k: usize,
    /// Fit on a seeded uniform subsample of this many rows.
    pub subset: Option<usize>,
    pub covariance: CovarianceKind,
    pub max_iters: usize,
    /// Relative log-likelihood change that ends EM.
    pub tol: f64,
    pub cov_floor: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { k: 8, subset: None, covariance: CovarianceKind::Diagonal, max_iters: 200, tol: 1e-6, cov_floor: COV_FLOOR, seed: 0 }
    }
}

/// `K`-component Gaussian mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    pub kind: CovarianceKind,
    pub dim: usize,
    pub weights: Vec<f64>,
    /// `K × d`, row-major.
    pub means: Vec<f64>,
    /// `K × d` variances (diagonal) or `K × d × d` matrices (full).
    pub covs: Vec<f64>,
    /// Average log-likelihood after each E-step.
    pub loglik_trace: Vec<f64>,
    /// Components re-seeded after collapsing.
    pub reseeds: usize,
}

/// Per-component constants for density evaluation.
enum Factor {
    Diag { inv_var: Vec<f64>, log_det: f64 },
    Full { chol: Vec<f64>, log_det: f64 },
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.dim..(c + 1) * self.dim]
    }

    fn cov_len(&self) -> usize {
        match self.kind {
            CovarianceKind::Diagonal => self.dim,
            CovarianceKind::Full => self.dim * self.dim,
        }
    }

    pub fn cov(&self, c: usize) -> &[f64] {
        let l = self.cov_len();
        &self.covs[c * l..(c + 1) * l]
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 || self.dim == 0 {
            return Err(invalid("GMM needs at least one component and positive dimension"));
        }
        if self.means.len() != k * self.dim || self.covs.len() != k * self.cov_len() {
            return Err(invalid("GMM parameter lengths inconsistent with K and d"));
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(0.0..=1.0).contains(w)) || (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("GMM weights must lie on the simplex (sum {sum})")));
        }
        if !self.means.iter().chain(&self.covs).all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: "gmm" });
        }
        self.factors().map(|_| ())
    }

    fn factors(&self) -> Result<Vec<Factor>> {
        (0..self.k())
            .map(|c| {
                let cov = self.cov(c);
                match self.kind {
                    CovarianceKind::Diagonal => {
                        if cov.iter().any(|v| *v <= 0.0) {
                            return Err(invalid("GMM variance must be positive"));
                        }
                        Ok(Factor::Diag { inv_var: cov.iter().map(|v| 1.0 / v).collect(), log_det: cov.iter().map(|v| v.ln()).sum() })
                    }
                    CovarianceKind::Full => {
                        let chol = cholesky(cov, self.dim)?;
                        let log_det = 2.0 * (0..self.dim).map(|i| chol[i * self.dim + i].ln()).sum::<f64>();
                        Ok(Factor::Full { chol, log_det })
                    }
                }
            })
            .collect()
    }

    /// `log w_c + log N(x | μ_c, Σ_c)` for every component.
    fn weighted_log_densities(&self, factors: &[Factor], x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (c, f) in factors.iter().enumerate() {
            let mu = self.mean(c);
            let (maha, log_det) = match f {
                Factor::Diag { inv_var, log_det } => {
                    (x.iter().zip(mu).zip(inv_var).map(|((a, m), iv)| (a - m) * (a - m) * iv).sum::<f64>(), *log_det)
                }
                Factor::Full { chol, log_det } => {
                    // Forward substitution L y = x − μ.
                    let mut y = vec![0.0; d];
                    for i in 0..d {
                        let s: f64 = (0..i).map(|j| chol[i * d + j] * y[j]).sum();
                        y[i] = (x[i] - mu[i] - s) / chol[i * d + i];
                    }
                    (y.iter().map(|v| v * v).sum::<f64>(), *log_det)
                }
            };
            out[c] = self.weights[c].ln() - 0.5 * (d as f64 * LN_2PI + log_det + maha);
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Average per-row log density of `x` under the mixture.
pub fn gmm_loglik(model: &GmmModel, x: &Tensor) -> Result<f64> {
    let (n, d) = x.dims2();
    if d != model.dim {
        return Err(Error::Shape { op: "gmm_loglik", detail: format!("data width {d}, model width {}", model.dim) });
    }
    if n == 0 {
        return Err(invalid("log-likelihood of an empty set"));
    }
    let factors = model.factors()?;
    let mut buf = vec![0.0; model.k()];
    let mut total = 0.0;
    for row in x.iter_rows() {
        model.weighted_log_densities(&factors, row, &mut buf);
        total += log_sum_exp(&buf);
    }
    Ok(total / n as f64)
}

/// One draw: component by weight, then `N(μ_c, Σ_c)`.
pub fn gmm_sample<R: Rng + ?Sized>(model: &GmmModel, rng: &mut R) -> Result<Vec<f64>> {
    let d = model.dim;
    let mut u: f64 = rng.random();
    let mut c = model.k() - 1;
    for (i, w) in model.weights.iter().enumerate() {
        if u < *w {
            c = i;
            break;
        }
        u -= w;
    }
    // Never pick a zero-weight component through rounding in the tail.
    while model.weights[c] == 0.0 && c > 0 {
        c -= 1;
    }
    let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mu = model.mean(c);
    let cov = model.cov(c);
    Ok(match model.kind {
        CovarianceKind::Diagonal => mu.iter().zip(cov).zip(&eps).map(|((m, v), e)| m + v.sqrt() * e).collect(),
        CovarianceKind::Full => {
            let l = cholesky(cov, d)?;
            (0..d).map(|i| mu[i] + (0..=i).map(|j| l[i * d + j] * eps[j]).sum::<f64>()).collect()
        }
    })
}

/// `b` mixture draws as a `(b, d)` batch.
pub fn gmm_sample_batch<R: Rng + ?Sized>(model: &GmmModel, b: usize, rng: &mut R) -> Result<Tensor> {
    let mut data = Vec::with_capacity(b * model.dim);
    for _ in 0..b {
        data.extend(gmm_sample(model, rng)?);
    }
    Tensor::matrix(b, model.dim, data)
}

fn moment_cov(data: &[f64], d: usize, kind: CovarianceKind, floor: f64) -> Vec<f64> {
    let n = data.len() / d;
    let mut mu = vec![0.0; d];
    for row in data.chunks(d) {
        mu.iter_mut().zip(row).for_each(|(m, x)| *m += x);
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let ones = vec![1.0; n];
    weighted_cov(data, d, &ones, n as f64, &mu, kind, floor)
}

fn weighted_cov(data: &[f64], d: usize, resp: &[f64], nk: f64, mu: &[f64], kind: CovarianceKind, floor: f64) -> Vec<f64> {
    match kind {
        CovarianceKind::Diagonal => {
            let mut var = vec![0.0; d];
            for (row, r) in data.chunks(d).zip(resp) {
                for j in 0..d {
                    let c = row[j] - mu[j];
                    var[j] += r * c * c;
                }
            }
            var.iter().map(|v| (v / nk).max(floor)).collect()
        }
        CovarianceKind::Full => {
            let mut cov = vec![0.0; d * d];
            for (row, r) in data.chunks(d).zip(resp) {
                for i in 0..d {
                    let ci = row[i] - mu[i];
                    for j in 0..=i {
                        cov[i * d + j] += r * ci * (row[j] - mu[j]);
                    }
                }
            }
            for i in 0..d {
                for j in 0..=i {
                    let v = cov[i * d + j] / nk;
                    cov[i * d + j] = v;
                    cov[j * d + i] = v;
                }
                cov[i * d + i] += floor;
            }
            cov
        }
    }
}

/// EM fit with k-means++ seeding.
pub fn gmm_fit(prior: &PriorSet, config: &GmmConfig) -> Result<GmmModel> {
    let k = config.k;
    let d = prior.dim();
    let n = prior.len();
    if k == 0 {
        return Err(invalid("GMM needs k ≥ 1"));
    }
    if config.cov_floor.is_nan() || config.cov_floor <= 0.0 {
        return Err(invalid("cov_floor must be positive"));
    }
    let rows: Vec<usize> = match config.subset {
        Some(m) if m < n => {
            let mut idx = sample(&mut rng_for(config.seed, 0), n, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    };
    let m = rows.len();
    if m < k {
        return Err(invalid(format!("cannot fit {k} components to {m} prior vectors")));
    }
    let data: Vec<f64> = rows.iter().flat_map(|&i| prior.row(i).iter().copied()).collect();
    let seeds = kmeans_pp_seeds(&data, d, k, &mut rng_for(config.seed, 1))?;
    let global_cov = moment_cov(&data, d, config.covariance, config.cov_floor);
    let mut model = GmmModel {
        kind: config.covariance,
        dim: d,
        weights: vec![1.0 / k as f64; k],
        means: seeds.iter().flat_map(|&i| data[i * d..(i + 1) * d].iter().copied()).collect(),
        covs: (0..k).flat_map(|_| global_cov.iter().copied()).collect(),
        loglik_trace: Vec::new(),
        reseeds: 0,
    };

    let mut logp = vec![0.0; m * k];
    let mut row_ll = vec![0.0; m];
    for iter in 0..=config.max_iters {
        // E-step.
        let factors = model.factors()?;
        for (i, row) in data.chunks(d).enumerate() {
            let lp = &mut logp[i * k..(i + 1) * k];
            model.weighted_log_densities(&factors, row, lp);
            let lse = log_sum_exp(lp);
            row_ll[i] = lse;
            lp.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        let ll = row_ll.iter().sum::<f64>() / m as f64;
        if !ll.is_finite() {
            return Err(Error::NonFinite { op: "gmm_fit" });
        }
        let converged = model.loglik_trace.last().is_some_and(|&prev| (ll - prev).abs() <= config.tol * prev.abs().max(1e-300));
        model.loglik_trace.push(ll);
        if converged || iter == config.max_iters {
            break;
        }

        // M-step.
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            let resp: Vec<f64> = (0..m).map(|i| logp[i * k + c]).collect();
            let nk: f64 = resp.iter().sum();
            let (mu, cov, w) = if nk > 1e-10 * m as f64 {
                let mut mu = vec![0.0; d];
                for (row, r) in data.chunks(d).zip(&resp) {
                    mu.iter_mut().zip(row).for_each(|(a, x)| *a += r * x);
                }
                mu.iter_mut().for_each(|a| *a /= nk);
                let cov = weighted_cov(&data, d, &resp, nk, &mu, config.covariance, config.cov_floor);
                (mu, cov, nk / m as f64)
            } else {
                // Collapsed component: restart it on the worst-explained datum.
                let pick = (0..m)
                    .filter(|i| !taken.contains(i))
                    .min_by(|&a, &b| row_ll[a].total_cmp(&row_ll[b]).then(a.cmp(&b)))
                    .unwrap_or(0);
                taken.push(pick);
                model.reseeds += 1;
                warn!("GMM component {c} collapsed at iteration {iter}; reseeded from row {pick}");
                (data[pick * d..(pick + 1) * d].to_vec(), global_cov.clone(), 1.0 / m as f64)
            };
            model.means[c * d..(c + 1) * d].copy_from_slice(&mu);
            let l = model.cov_len();
            model.covs[c * l..(c + 1) * l].copy_from_slice(&cov);
            model.weights[c] = w;
        }
        let total: f64 = model.weights.iter().sum();
        model.weights.iter_mut().for_each(|w| *w /= total);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prior(rows: usize, d: usize, f: impl Fn(usize, &mut ChaCha8Rng) -> Vec<f64>) -> PriorSet {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let data: Vec<f64> = (0..rows).flat_map(|i| f(i, &mut rng)).collect();
        PriorSet::new(Tensor::matrix(rows, d, data).unwrap(), String::new()).unwrap()
    }

    fn std_normal(d: usize) -> GmmModel {
        GmmModel {
            kind: CovarianceKind::Diagonal,
            dim: d,
            weights: vec![1.0],
            means: vec![0.0; d],
            covs: vec![1.0; d],
            loglik_trace: vec![],
            reseeds: 0,
        }
    }

    #[test]
    fn standard_normal_density_at_zero() {
        let ll = gmm_loglik(&std_normal(1), &Tensor::matrix(1, 1, vec![0.0]).unwrap()).unwrap();
        assert!((ll + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicating_rows_keeps_average() {
        let m = std_normal(2);
        let x = Tensor::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.5]]).unwrap();
        let xx = Tensor::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.5], vec![0.3, -1.0], vec![2.0, 0.5]]).unwrap();
        assert!((gmm_loglik(&m, &x).unwrap() - gmm_loglik(&m, &xx).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_component_never_sampled() {
        let m = GmmModel {
            kind: CovarianceKind::Diagonal,
            dim: 1,
            weights: vec![1.0, 0.0],
            means: vec![0.0, 100.0],
            covs: vec![1.0, 1.0],
            loglik_trace: vec![],
            reseeds: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..2000 {
            assert!(gmm_sample(&m, &mut rng).unwrap()[0] < 50.0);
        }
    }

    #[test]
    fn full_and_diagonal_agree_on_diagonal_data() {
        let p = prior(300, 2, |i, rng| {
            let c = if i % 2 == 0 { 2.0 } else { -2.0 };
            vec![c + 0.3 * rng.sample::<f64, _>(StandardNormal), 0.5 * rng.sample::<f64, _>(StandardNormal)]
        });
        let diag = gmm_fit(&p, &GmmConfig { k: 2, ..GmmConfig::default() }).unwrap();
        let full = gmm_fit(&p, &GmmConfig { k: 2, covariance: CovarianceKind::Full, ..GmmConfig::default() }).unwrap();
        let (ld, lf) = (*diag.loglik_trace.last().unwrap(), *full.loglik_trace.last().unwrap());
        assert!(lf >= ld - 1e-3, "full {lf} < diag {ld}");
        full.validate().unwrap();
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let p = prior(3, 1, |i, _| vec![i as f64]);
        assert!(gmm_fit(&p, &GmmConfig { k: 4, ..GmmConfig::default() }).is_err());
        assert!(gmm_fit(&p, &GmmConfig { k: 2, subset: Some(1), ..GmmConfig::default() }).is_err());
    }

    #[test]
    fn duplicated_points_trigger_reseed_not_error() {
        let p = prior(20, 1, |i, _| vec![if i < 19 { 0.0 } else { 1.0 }]);
        let m = gmm_fit(&p, &GmmConfig { k: 3, ..GmmConfig::default() }).unwrap();
        m.validate().unwrap();
    }
}
