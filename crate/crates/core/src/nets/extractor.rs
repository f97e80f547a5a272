use log::info;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Init, LinearSlots};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{mean_cov, symmetric_eigen};
use crate::optim::{AdamConfig, AdamState};
use crate::tape::Tape;
use crate::tensor::{ParamSet, Tensor};

/// Where the frozen feature map comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    /// Penultimate layer of a classifier trained on labeled source data.
    PretextClassifier,
    /// Same architecture, random weights, no training.
    RandomFrozen,
    /// `Σ^{-1/2}(x − μ)` with source statistics.
    IdentityWhitened,
}

impl ExtractorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtractorKind::PretextClassifier => "pretext_classifier",
            ExtractorKind::RandomFrozen => "random_frozen",
            ExtractorKind::IdentityWhitened => "identity_whitened",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pretext" | "pretext_classifier" => Ok(Self::PretextClassifier),
            "random" | "random_frozen" => Ok(Self::RandomFrozen),
            "identity" | "identity_whitened" => Ok(Self::IdentityWhitened),
            other => Err(invalid(format!("unknown extractor kind `{other}` (pretext|random|identity)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractorSpec {
    pub kind: ExtractorKind,
    pub hidden: usize,
    /// Prior width `d` (ignored by the whitening extractor, whose width is `p`).
    pub out_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fraction of source rows held out to report validation accuracy.
    pub val_fraction: f64,
}

impl Default for ExtractorSpec {
    fn default() -> Self {
        Self {
            kind: ExtractorKind::PretextClassifier,
            hidden: 64,
            out_dim: 16,
            epochs: 20,
            batch_size: 64,
            lr: 3e-3,
            val_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub kind: ExtractorKind,
    pub epochs: usize,
    pub train_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Frozen map `C: R^p → R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor {
    kind: ExtractorKind,
    in_dim: usize,
    out_dim: usize,
    params: ParamSet,
}

struct Mlp {
    l1: LinearSlots,
    l2: LinearSlots,
}

impl Mlp {
    fn register<R: Rng + ?Sized>(params: &mut ParamSet, p: usize, hidden: usize, d: usize, rng: &mut R) -> Self {
        Self {
            l1: LinearSlots::register(params, "c1", p, hidden, true, false, Init::Normal(2f64.sqrt()), rng),
            l2: LinearSlots::register(params, "c2", hidden, d, true, false, Init::Normal(1.0), rng),
        }
    }

    fn slots(params: &ParamSet) -> Result<Self> {
        let idx = |n: &str| params.index_of(n).ok_or_else(|| Error::Structure(format!("extractor parameter `{n}` missing")));
        Ok(Self {
            l1: LinearSlots { w: idx("c1.w")?, b: Some(idx("c1.b")?), u: None },
            l2: LinearSlots { w: idx("c2.w")?, b: Some(idx("c2.b")?), u: None },
        })
    }
}

impl FeatureExtractor {
    pub fn kind(&self) -> ExtractorKind {
        self.kind
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Untrained network with the pretext architecture.
    pub fn random<R: Rng + ?Sized>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Result<Self> {
        if in_dim == 0 || hidden == 0 || out_dim == 0 {
            return Err(invalid("extractor dimensions must be positive"));
        }
        let mut params = ParamSet::new();
        Mlp::register(&mut params, in_dim, hidden, out_dim, rng);
        Ok(Self { kind: ExtractorKind::RandomFrozen, in_dim, out_dim, params })
    }

    /// Whitening map fitted on `x`.
    pub fn whitening(x: &Tensor) -> Result<Self> {
        let (n, p) = x.dims2();
        if n < 2 {
            return Err(invalid("whitening needs at least two rows"));
        }
        let (mu, cov) = mean_cov(x.data(), n, p);
        let eig = symmetric_eigen(&cov, p)?;
        let inv_sqrt = eig.map(|l| 1.0 / l.max(1e-12).sqrt());
        let mut params = ParamSet::new();
        params.push("mean", Tensor::matrix(1, p, mu)?, false);
        params.push("whiten", Tensor::matrix(p, p, inv_sqrt)?, false);
        Ok(Self { kind: ExtractorKind::IdentityWhitened, in_dim: p, out_dim: p, params })
    }

    /// Rebuilds an extractor from stored parameters.
    pub fn from_params(kind: ExtractorKind, params: ParamSet) -> Result<Self> {
        let (in_dim, out_dim) = match kind {
            ExtractorKind::IdentityWhitened => {
                let w = params.get("whiten").ok_or_else(|| Error::Structure("extractor parameter `whiten` missing".into()))?;
                let (p, q) = w.dims2();
                if p != q || params.get("mean").map(|m| m.len()) != Some(p) {
                    return Err(Error::Structure("inconsistent whitening parameters".into()));
                }
                (p, p)
            }
            _ => {
                let mlp = Mlp::slots(&params)?;
                let (p, _) = params.tensor(mlp.l1.w).dims2();
                let (_, d) = params.tensor(mlp.l2.w).dims2();
                (p, d)
            }
        };
        Ok(Self { kind, in_dim, out_dim, params })
    }

    /// `C(x)` row by row.
    pub fn extract(&self, x: &Tensor) -> Result<Tensor> {
        let (n, p) = x.dims2();
        if p != self.in_dim {
            return Err(Error::Shape { op: "extract", detail: format!("data width {p}, extractor expects {}", self.in_dim) });
        }
        if n == 0 {
            return Ok(Tensor::zeros(&[0, self.out_dim]));
        }
        match self.kind {
            ExtractorKind::IdentityWhitened => {
                let mu = self.params.get("mean").unwrap().data();
                let w = self.params.get("whiten").unwrap().data();
                let mut out = vec![0.0; n * p];
                for (row, o) in x.iter_rows().zip(out.chunks_mut(p)) {
                    for (i, (xi, mi)) in row.iter().zip(mu).enumerate() {
                        let c = xi - mi;
                        for (j, oj) in o.iter_mut().enumerate() {
                            *oj += c * w[i * p + j];
                        }
                    }
                }
                Tensor::matrix(n, p, out)
            }
            _ => {
                let mlp = Mlp::slots(&self.params)?;
                let mut tape = Tape::new();
                let bound = tape.bind(&self.params, false)?;
                let xv = tape.constant(x)?;
                let h = mlp.l1.apply(&mut tape, &bound, &self.params, xv)?;
                let h = tape.relu(h)?;
                let c = mlp.l2.apply(&mut tape, &bound, &self.params, h)?;
                let c = tape.tanh(c)?;
                Ok(tape.to_tensor(c))
            }
        }
    }
}

fn accuracy(logits: &[f64], classes: usize, labels: &[usize]) -> f64 {
    let correct = logits
        .chunks(classes)
        .zip(labels)
        .filter(|(row, &y)| {
            let best = row.iter().enumerate().fold(0, |b, (i, v)| if *v > row[b] { i } else { b });
            best == y
        })
        .count();
    correct as f64 / labels.len().max(1) as f64
}

/// Builds the frozen extractor selected by `spec.kind` from labeled source data.
pub fn pretrain_extractor(source: &Dataset, spec: &ExtractorSpec, seed: u64) -> Result<(FeatureExtractor, PretrainReport)> {
    if source.is_empty() {
        return Err(invalid("source dataset is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec.kind {
        ExtractorKind::IdentityWhitened => {
            let ext = FeatureExtractor::whitening(&source.x)?;
            Ok((ext, PretrainReport { kind: spec.kind, epochs: 0, train_accuracy: None, val_accuracy: None }))
        }
        ExtractorKind::RandomFrozen => {
            let ext = FeatureExtractor::random(source.dim(), spec.hidden, spec.out_dim, &mut rng)?;
            Ok((ext, PretrainReport { kind: spec.kind, epochs: 0, train_accuracy: None, val_accuracy: None }))
        }
        ExtractorKind::PretextClassifier => train_classifier(source, spec, &mut rng),
    }
}

fn train_classifier(source: &Dataset, spec: &ExtractorSpec, rng: &mut ChaCha8Rng) -> Result<(FeatureExtractor, PretrainReport)> {
    let labels = source.labels.as_ref().ok_or_else(|| invalid("pretext extractor needs a labeled source dataset"))?;
    let classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
    if source.num_classes() < 2 {
        return Err(invalid("pretext extractor needs at least two distinct source labels"));
    }
    if spec.batch_size == 0 || !(0.0..1.0).contains(&spec.val_fraction) {
        return Err(invalid("extractor batch_size must be positive and val_fraction in [0, 1)"));
    }
    let p = source.dim();
    let mut params = ParamSet::new();
    let mlp = Mlp::register(&mut params, p, spec.hidden, spec.out_dim, rng);
    let head = LinearSlots::register(&mut params, "cls", spec.out_dim, classes, true, false, Init::Normal(1.0), rng);
    let mut opt = AdamState::new(&params, AdamConfig { lr: spec.lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 });

    let mut order: Vec<usize> = (0..source.len()).collect();
    order.shuffle(rng);
    let n_val = ((source.len() as f64) * spec.val_fraction).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val.min(source.len() - 1));
    let mut train_idx = train_idx.to_vec();

    let logits_of = |params: &ParamSet, idx: &[usize]| -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = tape.bind(params, false)?;
        let xv = tape.constant(&source.x.select_rows(idx))?;
        let h = mlp.l1.apply(&mut tape, &bound, params, xv)?;
        let h = tape.relu(h)?;
        let c = mlp.l2.apply(&mut tape, &bound, params, h)?;
        let c = tape.tanh(c)?;
        let logits = head.apply(&mut tape, &bound, params, c)?;
        Ok(tape.value(logits).to_vec())
    };

    for epoch in 0..spec.epochs {
        train_idx.shuffle(rng);
        let mut total = 0.0;
        for batch in train_idx.chunks(spec.batch_size) {
            let mut tape = Tape::new();
            let bound = tape.bind(&params, true)?;
            let xv = tape.constant(&source.x.select_rows(batch))?;
            let h = mlp.l1.apply(&mut tape, &bound, &params, xv)?;
            let h = tape.relu(h)?;
            let c = mlp.l2.apply(&mut tape, &bound, &params, h)?;
            let c = tape.tanh(c)?;
            let logits = head.apply(&mut tape, &bound, &params, c)?;
            let y: Vec<usize> = batch.iter().map(|&i| labels[i] as usize).collect();
            let loss = tape.cross_entropy(logits, &y)?;
            total += tape.scalar(loss) * batch.len() as f64;
            let grads = tape.backward(loss)?;
            params.zero_grads();
            grads.accumulate_into(&mut params, &bound)?;
            opt.step(&mut params)?;
        }
        info!("extractor epoch {epoch}: loss {:.4}", total / train_idx.len() as f64);
    }

    let acc = |idx: &[usize]| -> Result<Option<f64>> {
        if idx.is_empty() {
            return Ok(None);
        }
        let y: Vec<usize> = idx.iter().map(|&i| labels[i] as usize).collect();
        Ok(Some(accuracy(&logits_of(&params, idx)?, classes, &y)))
    };
    let report = PretrainReport {
        kind: ExtractorKind::PretextClassifier,
        epochs: spec.epochs,
        train_accuracy: acc(&train_idx)?,
        val_accuracy: acc(val_idx)?,
    };

    // Keep only the penultimate map.
    let mut frozen = ParamSet::new();
    for e in params.entries().iter().filter(|e| e.name.starts_with("c1.") || e.name.starts_with("c2.")) {
        frozen.push(e.name.clone(), e.tensor.clone().with_requires_grad(false), false);
    }
    let ext = FeatureExtractor { kind: ExtractorKind::PretextClassifier, in_dim: p, out_dim: spec.out_dim, params: frozen };
    Ok((ext, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use rand_distr::StandardNormal;

    fn two_clusters(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = if i % 2 == 0 { -0.6 } else { 0.6 };
            data.push(c + 0.1 * rng.sample::<f64, _>(StandardNormal));
            data.push(0.1 * rng.sample::<f64, _>(StandardNormal));
            labels.push((i % 2) as u32);
        }
        Dataset::new(Tensor::matrix(n, 2, data).unwrap(), Some(labels), Split::Source).unwrap()
    }

    #[test]
    fn separable_clusters_are_learned() {
        let src = two_clusters(400, 0);
        let spec = ExtractorSpec { epochs: 10, ..ExtractorSpec::default() };
        let (ext, report) = pretrain_extractor(&src, &spec, 7).unwrap();
        assert!(report.train_accuracy.unwrap() >= 0.99, "{report:?}");
        assert_eq!(ext.out_dim(), 16);
        assert_eq!(ext.extract(&src.x).unwrap().shape(), &[400, 16]);
    }

    #[test]
    fn single_class_is_rejected() {
        let mut src = two_clusters(10, 1);
        src.labels = Some(vec![0; 10]);
        assert!(pretrain_extractor(&src, &ExtractorSpec::default(), 0).is_err());
    }

    #[test]
    fn whitening_has_identity_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 500;
        let data: Vec<f64> = (0..n)
            .flat_map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                [3.0 * a + 1.0, a + 0.5 * b - 2.0]
            })
            .collect();
        let x = Tensor::matrix(n, 2, data).unwrap();
        let ext = FeatureExtractor::whitening(&x).unwrap();
        let c = ext.extract(&x).unwrap();
        let (mu, cov) = mean_cov(c.data(), n, 2);
        assert!(mu.iter().all(|m| m.abs() < 1e-10));
        for (i, v) in cov.iter().enumerate() {
            let want = if i % 3 == 0 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-9, "{cov:?}");
        }
    }

    #[test]
    fn random_mode_skips_training() {
        let src = two_clusters(20, 3);
        let spec = ExtractorSpec { kind: ExtractorKind::RandomFrozen, ..ExtractorSpec::default() };
        let (a, report) = pretrain_extractor(&src, &spec, 5).unwrap();
        let (b, _) = pretrain_extractor(&src, &spec, 5).unwrap();
        assert_eq!(report.epochs, 0);
        assert_eq!(a, b);
        let rebuilt = FeatureExtractor::from_params(a.kind(), a.params().clone()).unwrap();
        assert_eq!(rebuilt.extract(&src.x).unwrap(), a.extract(&src.x).unwrap());
    }
}
