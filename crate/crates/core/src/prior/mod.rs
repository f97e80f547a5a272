//! Prior sets `{C(x_j)}`, the vicinal mix sampler and the GMM sampler.

mod gmm;
mod kmeans;

pub use gmm::{gmm_fit, gmm_loglik, gmm_sample, gmm_sample_batch, CovarianceKind, GmmConfig, GmmModel, COV_FLOOR};
pub use kmeans::{kmeans, kmeans_pp_seeds, KMeans};

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::nets::FeatureExtractor;
use crate::tensor::Tensor;

/// Ordered prior vectors, one row per training instance.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSet {
    vectors: Tensor,
    /// Hex SHA-256 over the source data and extractor parameters.
    source_hash: String,
}

impl PriorSet {
    pub fn new(vectors: Tensor, source_hash: String) -> Result<Self> {
        let (n, d) = vectors.dims2();
        if vectors.shape().len() != 2 || n == 0 || d == 0 {
            return Err(invalid(format!("prior set must be a non-empty matrix, got shape {:?}", vectors.shape())));
        }
        if !vectors.all_finite() {
            return Err(Error::NonFinite { op: "prior_set" });
        }
        Ok(Self { vectors, source_hash })
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vectors(&self) -> &Tensor {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn source_hash(&self) -> &str {
        &self.source_hash
    }

    /// Rows `idx` as a batch.
    pub fn gather(&self, idx: &[usize]) -> Tensor {
        self.vectors.select_rows(idx)
    }
}

fn hash_tensor(h: &mut Sha256, t: &Tensor) {
    for &s in t.shape() {
        h.update((s as u64).to_le_bytes());
    }
    for v in t.data() {
        h.update(v.to_le_bytes());
    }
}

/// `row j = C(x_j)`.
pub fn extract_priors(dataset: &Dataset, extractor: &FeatureExtractor) -> Result<PriorSet> {
    if dataset.is_empty() {
        return Err(invalid("cannot extract priors from an empty dataset"));
    }
    let vectors = extractor.extract(&dataset.x)?;
    let mut h = Sha256::new();
    hash_tensor(&mut h, &dataset.x);
    h.update(extractor.kind().as_str().as_bytes());
    for p in extractor.params().entries() {
        h.update(p.name.as_bytes());
        hash_tensor(&mut h, &p.tensor);
    }
    let source_hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    PriorSet::new(vectors, source_hash)
}

/// `λ·p_i + (1−λ)·p_j`.
pub fn vicinal_mix(prior: &PriorSet, i: usize, j: usize, lambda: f64) -> Result<Vec<f64>> {
    if i >= prior.len() || j >= prior.len() {
        return Err(invalid(format!("prior index out of range ({i}, {j}) for {} rows", prior.len())));
    }
    Ok(prior.row(i).iter().zip(prior.row(j)).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect())
}

/// One draw from the vicinal mix distribution: `i, j` uniform with
/// replacement, `λ ~ U[0, 1]`.
pub fn vicinal_sample<R: Rng + ?Sized>(prior: &PriorSet, rng: &mut R) -> Result<Vec<f64>> {
    if prior.is_empty() {
        return Err(invalid("vicinal sampling from an empty prior set"));
    }
    let i = rng.random_range(0..prior.len());
    let j = rng.random_range(0..prior.len());
    let lambda: f64 = rng.random();
    vicinal_mix(prior, i, j, lambda)
}

/// `b` vicinal draws stacked as a `(b, d)` batch.
pub fn vicinal_batch<R: Rng + ?Sized>(prior: &PriorSet, b: usize, rng: &mut R) -> Result<Tensor> {
    let mut data = Vec::with_capacity(b * prior.dim());
    for _ in 0..b {
        data.extend(vicinal_sample(prior, rng)?);
    }
    Tensor::matrix(b, prior.dim(), data)
}
