use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::nets::{Generator, NormMode};
use crate::prior::{gmm_sample, vicinal_sample, GmmModel, PriorSet};
use crate::tensor::Tensor;

/// Where inference-time priors come from.
#[derive(Clone, Copy, Debug)]
pub enum PriorSource<'a> {
    /// Vicinal mix over a prior set (or over a learned instance table).
    Vicinal(&'a PriorSet),
    /// Mixture fitted on the prior set.
    Gmm(&'a GmmModel),
    /// Row `i mod n` of the set, unmixed.
    Exact(&'a PriorSet),
    /// No prior (unconditional generators).
    None,
}

const CHUNK: usize = 256;

pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

/// Draws `n` samples from `generator` in inference mode.
pub fn generate<R: Rng + ?Sized>(generator: &Generator, source: PriorSource<'_>, n: usize, rng: &mut R) -> Result<Tensor> {
    let spec = generator.spec();
    let mut out = Vec::with_capacity(n * spec.out_dim);
    let mut done = 0;
    while done < n {
        let b = CHUNK.min(n - done);
        let z = standard_normal(b, spec.latent_dim, rng);
        let prior = match source {
            PriorSource::Vicinal(p) => {
                let mut rows = Vec::with_capacity(b * p.dim());
                for _ in 0..b {
                    rows.extend(vicinal_sample(p, rng)?);
                }
                Some(Tensor::matrix(b, p.dim(), rows)?)
            }
            PriorSource::Gmm(m) => {
                let mut rows = Vec::with_capacity(b * m.dim);
                for _ in 0..b {
                    rows.extend(gmm_sample(m, rng)?);
                }
                Some(Tensor::matrix(b, m.dim, rows)?)
            }
            PriorSource::Exact(p) => {
                let idx: Vec<usize> = (done..done + b).map(|i| i % p.len()).collect();
                Some(p.gather(&idx))
            }
            PriorSource::None => None,
        };
        let x = generator.generate(&z, prior.as_ref(), NormMode::Running)?;
        out.extend_from_slice(x.data());
        done += b;
    }
    Tensor::matrix(n, spec.out_dim, out)
}
