//! The adversarial training loop: `d_steps` discriminator updates, each on a
//! fresh real/latent batch, followed by one generator update, an EMA update
//! of the generator and periodic diagnostics.

mod sampling;

pub use sampling::{generate, standard_normal, PriorSource};

use log::{debug, info};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::metrics::fid;
use crate::nets::{Discriminator, DiscriminatorSpec, FeatureExtractor, Generator, GeneratorSpec, Modulation, NormMode};
use crate::optim::{ema_update, AdamConfig, AdamState};
use crate::prior::PriorSet;
use crate::seed::derive_seed;
use crate::tape::{Tape, Var};
use crate::tensor::{ParamSet, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Hinge,
    NonSaturating,
    Wasserstein,
}

impl LossVariant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hinge" => Ok(Self::Hinge),
            "non_saturating" | "ns" => Ok(Self::NonSaturating),
            "wasserstein" | "w" => Ok(Self::Wasserstein),
            other => Err(invalid(format!("unknown loss variant `{other}` (hinge|non_saturating|wasserstein)"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hinge => "hinge",
            Self::NonSaturating => "non_saturating",
            Self::Wasserstein => "wasserstein",
        }
    }
}

/// Discriminator loss from per-example real and fake scores.
pub fn loss_d(tape: &mut Tape, real: Var, fake: Var, variant: LossVariant) -> Result<Var> {
    match variant {
        LossVariant::Hinge => {
            let r = tape.hinge(real, -1.0)?;
            let f = tape.hinge(fake, 1.0)?;
            let (r, f) = (tape.mean(r)?, tape.mean(f)?);
            tape.add(r, f)
        }
        LossVariant::NonSaturating => {
            let neg = tape.neg(real)?;
            let r = tape.softplus(neg)?;
            let f = tape.softplus(fake)?;
            let (r, f) = (tape.mean(r)?, tape.mean(f)?);
            tape.add(r, f)
        }
        LossVariant::Wasserstein => {
            let (r, f) = (tape.mean(real)?, tape.mean(fake)?);
            tape.sub(f, r)
        }
    }
}

/// Generator loss from per-example fake scores.
pub fn loss_g(tape: &mut Tape, fake: Var, variant: LossVariant) -> Result<Var> {
    match variant {
        LossVariant::Hinge | LossVariant::Wasserstein => {
            let m = tape.mean(fake)?;
            tape.neg(m)
        }
        LossVariant::NonSaturating => {
            let neg = tape.neg(fake)?;
            let s = tape.softplus(neg)?;
            tape.mean(s)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Batch size `b`.
    pub batch_size: usize,
    /// Discriminator updates per generator update.
    pub d_steps: usize,
    pub steps: usize,
    pub loss: LossVariant,
    pub adam: AdamConfig,
    pub ema_decay: f64,
    /// Momentum of the running normalization statistics.
    pub bn_momentum: f64,
    /// History cadence in steps (0 disables logging).
    pub log_every: usize,
    /// Snapshot-FID cadence in steps (0 disables best-snapshot tracking).
    pub fid_every: usize,
    pub fid_samples: usize,
    /// Set by the caller; not part of the serialized configuration.
    #[serde(skip)]
    pub seed: u64,
    /// Byte-compare untouched parameter sets around every update.
    pub debug_checks: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 25,
            d_steps: 4,
            steps: 20_000,
            loss: LossVariant::Hinge,
            adam: AdamConfig::default(),
            ema_decay: 0.999,
            bn_momentum: 0.1,
            log_every: 100,
            fid_every: 1000,
            fid_samples: 500,
            seed: 0,
            debug_checks: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(invalid(format!("batch_size must be ≥ 2, got {}", self.batch_size)));
        }
        if self.d_steps < 1 {
            return Err(invalid("d_steps must be ≥ 1"));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(invalid(format!("ema_decay must be in [0, 1), got {}", self.ema_decay)));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(invalid("bn_momentum must be in [0, 1]"));
        }
        Ok(())
    }
}

/// One logged step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: usize,
    pub loss_d: f64,
    pub loss_g: f64,
    /// Mean conditional score on the last real batch used for a D update.
    pub d_real: f64,
    /// Mean conditional score on the fake batch of that same update.
    pub d_fake: f64,
    /// Mean unconditional score `D_l(D_f(x))` on that real batch.
    pub d_train: f64,
    /// Mean unconditional score on a held-out validation batch.
    pub d_val: Option<f64>,
    /// `d_train − d_val`.
    pub gap: Option<f64>,
    /// Squared gradient norm reaching `G_emb` and `D_emb` in this step.
    pub emb_grad_sq: f64,
    pub fid: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
}

impl TrainHistory {
    pub fn push(&mut self, r: HistoryRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if r.step <= last.step {
                return Err(invalid(format!("history step {} after {}", r.step, last.step)));
            }
        }
        self.records.push(r);
        Ok(())
    }

    pub fn last(&self) -> Option<&HistoryRecord> {
        self.records.last()
    }
}

/// Real data and conditioning available to the trainer.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub train: Dataset,
    /// Priors `C(x)` of the training rows (required for prior modulation).
    pub priors: Option<PriorSet>,
    /// Held-out rows for the score-gap diagnostic.
    pub val: Option<Dataset>,
}

/// Learned per-instance conditioning table used by the embedding baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceTable {
    pub params: ParamSet,
    pub opt: AdamState,
}

impl InstanceTable {
    pub fn new<R: Rng + ?Sized>(n: usize, d: usize, adam: AdamConfig, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        params.push("table", standard_normal(n, d, rng), true);
        let opt = AdamState::new(&params, adam);
        Self { params, opt }
    }

    pub fn rows(&self) -> &Tensor {
        self.params.tensor(0)
    }

    /// The learned rows as a prior set (for vicinal sampling).
    pub fn as_prior_set(&self) -> Result<PriorSet> {
        PriorSet::new(self.rows().clone(), "instance-table".into())
    }
}

/// Everything that changes during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub generator: Generator,
    pub generator_ema: Generator,
    pub discriminator: Discriminator,
    pub opt_g: AdamState,
    pub opt_d: AdamState,
    pub table: Option<InstanceTable>,
    pub step: usize,
    /// Real batches drawn so far.
    pub batches_drawn: usize,
    /// Latent batches drawn so far.
    pub latents_drawn: usize,
    rng: ChaCha8Rng,
}

/// Per-step scalars returned by [`train_step`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub loss_d: f64,
    pub loss_g: f64,
    pub d_real: f64,
    pub d_fake: f64,
    pub d_train: f64,
    pub emb_grad_sq: f64,
    /// Indices of the last real batch used for a D update.
    pub last_real_idx: Vec<usize>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

impl TrainState {
    pub fn new(gen_spec: GeneratorSpec, disc_spec: DiscriminatorSpec, data: &TrainData, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0));
        let modulation = gen_spec.modulation;
        let mut disc_spec = disc_spec;
        disc_spec.in_dim = data.train.dim();
        if modulation.uses_prior() {
            disc_spec.prior_dim = gen_spec.prior_dim;
        } else {
            disc_spec.prior_dim = 0;
        }
        if gen_spec.out_dim != data.train.dim() {
            return Err(invalid(format!("generator out_dim {} vs data dim {}", gen_spec.out_dim, data.train.dim())));
        }
        if data.train.is_empty() {
            return Err(invalid("training set is empty"));
        }
        let table = match modulation {
            Modulation::Prior => {
                let p = data.priors.as_ref().ok_or_else(|| invalid("prior modulation needs a prior set"))?;
                if p.len() != data.train.len() || p.dim() != gen_spec.prior_dim {
                    return Err(invalid(format!(
                        "prior set is {}×{}, expected {}×{}",
                        p.len(),
                        p.dim(),
                        data.train.len(),
                        gen_spec.prior_dim
                    )));
                }
                None
            }
            Modulation::PerInstanceEmbedding => {
                Some(InstanceTable::new(data.train.len(), gen_spec.prior_dim, config.adam, &mut init))
            }
            _ => None,
        };
        let generator = Generator::new(gen_spec, &mut init)?;
        let discriminator = Discriminator::new(disc_spec, &mut init)?;
        let opt_g = AdamState::new(generator.params(), config.adam);
        let opt_d = AdamState::new(discriminator.params(), config.adam);
        Ok(Self {
            generator_ema: generator.clone(),
            generator,
            discriminator,
            opt_g,
            opt_d,
            table,
            step: 0,
            batches_drawn: 0,
            latents_drawn: 0,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1)),
        })
    }

    pub fn modulation(&self) -> Modulation {
        self.generator.spec().modulation
    }

    /// Prior set used at inference: extracted priors, or the learned table.
    pub fn inference_priors<'a>(&'a self, data: &'a TrainData) -> Result<Option<PriorSet>> {
        match self.modulation() {
            Modulation::Prior => Ok(data.priors.clone()),
            Modulation::PerInstanceEmbedding => Ok(Some(self.table.as_ref().unwrap().as_prior_set()?)),
            _ => Ok(None),
        }
    }

    fn draw_batch(&mut self, n: usize, b: usize) -> Vec<usize> {
        self.batches_drawn += 1;
        if n >= b {
            sample(&mut self.rng, n, b).into_vec()
        } else {
            (0..b).map(|_| self.rng.random_range(0..n)).collect()
        }
    }

    fn draw_latent(&mut self, b: usize) -> Tensor {
        self.latents_drawn += 1;
        standard_normal(b, self.generator.spec().latent_dim, &mut self.rng)
    }
}

fn diverged(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { op } => Error::Diverged { step, detail: format!("non-finite value in `{op}`") },
        other => other,
    }
}

fn check_loss(step: usize, name: &str, v: f64, other: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { step, detail: format!("{name} = {v} ({other})") })
    }
}

fn emb_grad_sq(params: &ParamSet, names: &[String]) -> f64 {
    names
        .iter()
        .filter_map(|n| params.get(n).and_then(|t| t.grad()))
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum()
}

/// One outer iteration: `d_steps` discriminator updates, then one generator
/// update and the EMA update.
pub fn train_step(state: &mut TrainState, data: &TrainData, config: &TrainConfig) -> Result<StepStats> {
    let step = state.step;
    let n = data.train.len();
    let b = config.batch_size;
    let modulation = state.modulation();
    let d_emb_names = state.discriminator.embedding_param_names();
    let g_emb_names = state.generator.embedding_param_names();
    let mut emb_sq = 0.0;
    let mut last = (0.0, 0.0, 0.0, 0.0, Vec::new());

    for _ in 0..config.d_steps {
        let idx = state.draw_batch(n, b);
        let z = state.draw_latent(b);
        let x = data.train.x.select_rows(&idx);
        let prior_rows = match modulation {
            Modulation::Prior => Some(data.priors.as_ref().unwrap().gather(&idx)),
            Modulation::PerInstanceEmbedding => Some(state.table.as_ref().unwrap().rows().select_rows(&idx)),
            _ => None,
        };
        let fake = state.generator.generate(&z, prior_rows.as_ref(), NormMode::Batch).map_err(diverged(step))?;
        let g_print = config.debug_checks.then(|| state.generator.params().fingerprint());

        state.discriminator.power_iterate();
        let mut tape = Tape::new();
        let bound = state.discriminator.bind(&mut tape, true)?;
        let (cond, table_bound) = match (&state.table, modulation) {
            (Some(t), Modulation::PerInstanceEmbedding) => {
                let tb = tape.bind(&t.params, true)?;
                (Some(tape.gather_rows(tb.var(0), &idx)?), Some(tb))
            }
            _ => (prior_rows.as_ref().map(|p| tape.constant(p)).transpose()?, None),
        };
        let xv = tape.constant(&x)?;
        let fv = tape.constant(&fake)?;
        let real = state.discriminator.forward(&mut tape, &bound, xv, cond).map_err(diverged(step))?;
        let fake_out = state.discriminator.forward(&mut tape, &bound, fv, cond).map_err(diverged(step))?;
        let uncond = mean(tape.value(real.unconditional));
        let loss = loss_d(&mut tape, real.score, fake_out.score, config.loss).map_err(diverged(step))?;
        let loss_v = tape.scalar(loss);
        let d_real = mean(tape.value(real.score));
        let d_fake = mean(tape.value(fake_out.score));
        check_loss(step, "loss_d", loss_v, &format!("d_real {d_real}, d_fake {d_fake}"))?;
        let grads = tape.backward(loss).map_err(diverged(step))?;
        state.discriminator.params_mut().zero_grads();
        grads.accumulate_into(state.discriminator.params_mut(), &bound)?;
        emb_sq += emb_grad_sq(state.discriminator.params(), &d_emb_names);
        state.opt_d.step(state.discriminator.params_mut())?;
        if let (Some(t), Some(tb)) = (state.table.as_mut(), table_bound) {
            t.params.zero_grads();
            grads.accumulate_into(&mut t.params, &tb)?;
            t.opt.step(&mut t.params)?;
        }
        if let Some(before) = g_print {
            assert_eq!(before, state.generator.params().fingerprint(), "discriminator update touched the generator");
        }
        last = (loss_v, d_real, d_fake, uncond, idx);
    }

    // Generator update on a fresh batch.
    let idx = state.draw_batch(n, b);
    let z = state.draw_latent(b);
    let d_print = config.debug_checks.then(|| state.discriminator.params().fingerprint());
    state.generator.power_iterate();
    let mut tape = Tape::new();
    let g_bound = state.generator.bind(&mut tape, true)?;
    let d_bound = state.discriminator.bind(&mut tape, false)?;
    let (cond, table_bound) = match (&state.table, modulation) {
        (Some(t), Modulation::PerInstanceEmbedding) => {
            let tb = tape.bind(&t.params, true)?;
            (Some(tape.gather_rows(tb.var(0), &idx)?), Some(tb))
        }
        (_, Modulation::Prior) => (Some(tape.constant(&data.priors.as_ref().unwrap().gather(&idx))?), None),
        _ => (None, None),
    };
    let zv = tape.constant(&z)?;
    let out = state.generator.forward(&mut tape, &g_bound, zv, cond, NormMode::Batch).map_err(diverged(step))?;
    let scored = state.discriminator.forward(&mut tape, &d_bound, out.sample, cond).map_err(diverged(step))?;
    let loss = loss_g(&mut tape, scored.score, config.loss).map_err(diverged(step))?;
    let loss_g_v = tape.scalar(loss);
    check_loss(step, "loss_g", loss_g_v, &format!("loss_d {}", last.0))?;
    let grads = tape.backward(loss).map_err(diverged(step))?;
    state.generator.params_mut().zero_grads();
    grads.accumulate_into(state.generator.params_mut(), &g_bound)?;
    emb_sq += emb_grad_sq(state.generator.params(), &g_emb_names);
    state.opt_g.step(state.generator.params_mut())?;
    state.generator.absorb_batch_stats(&out.batch_stats, config.bn_momentum);
    if let (Some(t), Some(tb)) = (state.table.as_mut(), table_bound) {
        t.params.zero_grads();
        grads.accumulate_into(&mut t.params, &tb)?;
        t.opt.step(&mut t.params)?;
    }
    if let Some(before) = d_print {
        assert_eq!(before, state.discriminator.params().fingerprint(), "generator update touched the discriminator");
    }
    ema_update(state.generator_ema.params_mut(), state.generator.params(), config.ema_decay)?;
    // Re-normalize the averaged power-iteration vectors.
    state.generator_ema.power_iterate();
    state.step += 1;

    let (loss_d_v, d_real, d_fake, d_train, last_real_idx) = last;
    Ok(StepStats { loss_d: loss_d_v, loss_g: loss_g_v, d_real, d_fake, d_train, emb_grad_sq: emb_sq, last_real_idx })
}

/// Scores generator snapshots by FID against a reference cloud.
#[derive(Clone, Debug)]
pub struct SnapshotScorer {
    /// Reference features (real data in the evaluation space).
    pub reference: Tensor,
    /// Evaluation feature map; raw data space when absent.
    pub features: Option<FeatureExtractor>,
}

impl SnapshotScorer {
    pub fn score(&self, samples: &Tensor) -> Result<f64> {
        let feats = match &self.features {
            Some(f) => f.extract(samples)?,
            None => samples.clone(),
        };
        fid(&self.reference, &feats)
    }
}

/// Result of a full run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub history: TrainHistory,
    /// EMA generator parameters of the best-FID snapshot, with its step and FID.
    pub best: Option<(usize, f64, ParamSet)>,
}

/// Mean unconditional discriminator score over `x`.
pub fn unconditional_score(d: &Discriminator, x: &Tensor) -> Result<f64> {
    Ok(mean(&d.score(x, None)?))
}

/// Runs `config.steps` iterations from a fresh state.
pub fn train(
    gen_spec: GeneratorSpec,
    disc_spec: DiscriminatorSpec,
    data: &TrainData,
    config: &TrainConfig,
    scorer: Option<&SnapshotScorer>,
) -> Result<TrainOutcome> {
    let state = TrainState::new(gen_spec, disc_spec, data, config)?;
    train_from(state, data, config, scorer)
}

/// Continues training an existing state up to `config.steps` total steps.
pub fn train_from(
    mut state: TrainState,
    data: &TrainData,
    config: &TrainConfig,
    scorer: Option<&SnapshotScorer>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut history = TrainHistory::default();
    let mut best: Option<(usize, f64, ParamSet)> = None;
    let mut eval_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2));
    let mut val_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 3));
    while state.step < config.steps {
        let stats = train_step(&mut state, data, config)?;
        let step = state.step;
        let log_now = config.log_every > 0 && (step.is_multiple_of(config.log_every) || step == config.steps);
        let fid_now = scorer.is_some() && config.fid_every > 0 && (step.is_multiple_of(config.fid_every) || step == config.steps);
        let mut fid_v = None;
        if fid_now {
            let priors = state.inference_priors(data)?;
            let source = priors.as_ref().map_or(PriorSource::None, PriorSource::Vicinal);
            let samples = generate(&state.generator_ema, source, config.fid_samples, &mut eval_rng)?;
            let f = scorer.unwrap().score(&samples)?;
            info!("step {step}: snapshot FID {f:.5}");
            if best.as_ref().is_none_or(|(_, b, _)| f < *b) {
                best = Some((step, f, state.generator_ema.params().clone()));
            }
            fid_v = Some(f);
        }
        if log_now || fid_now {
            let d_val = match &data.val {
                Some(v) if !v.is_empty() => {
                    let k = config.batch_size.min(v.len());
                    let idx = sample(&mut val_rng, v.len(), k).into_vec();
                    Some(unconditional_score(&state.discriminator, &v.x.select_rows(&idx))?)
                }
                _ => None,
            };
            let rec = HistoryRecord {
                step,
                loss_d: stats.loss_d,
                loss_g: stats.loss_g,
                d_real: stats.d_real,
                d_fake: stats.d_fake,
                d_train: stats.d_train,
                d_val,
                gap: d_val.map(|v| stats.d_train - v),
                emb_grad_sq: stats.emb_grad_sq,
                fid: fid_v,
            };
            debug!("{rec:?}");
            history.push(rec)?;
        }
    }
    Ok(TrainOutcome { state, history, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(tape: &mut Tape, v: &[f64]) -> Var {
        tape.leaf(v.len(), 1, v.to_vec(), false).unwrap()
    }

    #[test]
    fn hinge_losses() {
        let mut t = Tape::new();
        let (r, f) = (scores(&mut t, &[2.0, 2.0]), scores(&mut t, &[-2.0, -2.0]));
        let l = loss_d(&mut t, r, f, LossVariant::Hinge).unwrap();
        assert_eq!(t.scalar(l), 0.0);
        let (r, f) = (scores(&mut t, &[0.0; 3]), scores(&mut t, &[0.0; 3]));
        let l = loss_d(&mut t, r, f, LossVariant::Hinge).unwrap();
        assert_eq!(t.scalar(l), 2.0);
        let f = scores(&mut t, &[0.0, 0.0]);
        let l = loss_g(&mut t, f, LossVariant::Hinge).unwrap();
        assert_eq!(t.scalar(l), 0.0);
        let f = scores(&mut t, &[1.0, 1.0]);
        let l = loss_g(&mut t, f, LossVariant::Hinge).unwrap();
        assert_eq!(t.scalar(l), -1.0);
    }

    #[test]
    fn non_saturating_losses() {
        let mut t = Tape::new();
        let (r, f) = (scores(&mut t, &[0.0; 4]), scores(&mut t, &[0.0; 4]));
        let l = loss_d(&mut t, r, f, LossVariant::NonSaturating).unwrap();
        assert!((t.scalar(l) - 2.0 * 2f64.ln()).abs() < 1e-12);
        let l = loss_g(&mut t, f, LossVariant::NonSaturating).unwrap();
        assert!((t.scalar(l) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_loss_is_score_difference() {
        let mut t = Tape::new();
        let (r, f) = (scores(&mut t, &[3.0, 1.0]), scores(&mut t, &[0.5, -0.5]));
        let l = loss_d(&mut t, r, f, LossVariant::Wasserstein).unwrap();
        assert_eq!(t.scalar(l), -2.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch_size: 1, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { d_steps: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { ema_decay: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(LossVariant::parse("bogus").is_err());
    }

    #[test]
    fn history_rejects_non_increasing_steps() {
        let rec = |step| HistoryRecord {
            step,
            loss_d: 0.0,
            loss_g: 0.0,
            d_real: 0.0,
            d_fake: 0.0,
            d_train: 0.0,
            d_val: None,
            gap: None,
            emb_grad_sq: 0.0,
            fid: None,
        };
        let mut h = TrainHistory::default();
        h.push(rec(1)).unwrap();
        assert!(h.push(rec(1)).is_err());
    }
}
