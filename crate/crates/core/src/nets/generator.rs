use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Init, LinearSlots};
use crate::error::{invalid, Error, Result};
use crate::tape::{Bound, Tape, Var};
use crate::tensor::{ParamSet, Tensor};

/// Variance floor of the batch standardization.
pub const BN_EPS: f64 = 1e-5;

/// How the per-layer scale/shift heads are driven.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulation {
    /// Frozen extractor features `C(x)` through `G_emb`.
    Prior,
    /// Latent chunks only.
    SelfModulation,
    /// A learned per-training-instance table stands in for `C(x)`.
    PerInstanceEmbedding,
    /// Plain batch standardization, no conditioning.
    None,
}

impl Modulation {
    pub fn uses_prior(self) -> bool {
        matches!(self, Modulation::Prior | Modulation::PerInstanceEmbedding)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Tanh,
    Linear,
}

/// Batch statistics during training, accumulated running statistics at inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Batch,
    Running,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub latent_dim: usize,
    /// Number of modulated hidden layers `L`.
    pub layers: usize,
    pub hidden: usize,
    pub out_dim: usize,
    /// Width `d` of the prior vectors.
    pub prior_dim: usize,
    /// Width of the `G_emb` output.
    pub cond_dim: usize,
    pub modulation: Modulation,
    pub output: OutputActivation,
    /// Split `z` into `L+1` chunks: one for the trunk input, one per layer.
    pub hierarchical: bool,
    pub spectral_norm: bool,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            layers: 3,
            hidden: 64,
            out_dim: 2,
            prior_dim: 16,
            cond_dim: 16,
            modulation: Modulation::Prior,
            output: OutputActivation::Tanh,
            hierarchical: true,
            spectral_norm: true,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.out_dim == 0 || self.latent_dim == 0 {
            return Err(invalid("generator dimensions must be positive"));
        }
        if self.modulation.uses_prior() && (self.prior_dim == 0 || self.cond_dim == 0) {
            return Err(invalid("prior-conditioned generator needs prior_dim and cond_dim > 0"));
        }
        if self.is_hierarchical() && !self.latent_dim.is_multiple_of(self.layers + 1) {
            return Err(invalid(format!(
                "latent_dim {} must be divisible by layers+1 = {} for the hierarchical latent",
                self.latent_dim,
                self.layers + 1
            )));
        }
        Ok(())
    }

    fn is_hierarchical(&self) -> bool {
        self.hierarchical && self.modulation != Modulation::None
    }

    fn chunk(&self) -> usize {
        if self.is_hierarchical() {
            self.latent_dim / (self.layers + 1)
        } else {
            self.latent_dim
        }
    }

    fn modulation_input_dim(&self) -> usize {
        let z_part = match (self.is_hierarchical(), self.modulation) {
            (true, _) => self.chunk(),
            (false, Modulation::SelfModulation) => self.latent_dim,
            _ => 0,
        };
        z_part + if self.modulation.uses_prior() { self.cond_dim } else { 0 }
    }
}

#[derive(Clone, Debug)]
struct GenLayer {
    lin: LinearSlots,
    running_mean: usize,
    running_var: usize,
    gamma: Option<LinearSlots>,
    beta: Option<LinearSlots>,
}

/// Conditional MLP generator `G(z | prior)`.
#[derive(Clone, Debug)]
pub struct Generator {
    spec: GeneratorSpec,
    params: ParamSet,
    emb: Option<LinearSlots>,
    layers: Vec<GenLayer>,
    out: LinearSlots,
}

pub struct GenOutput {
    pub sample: Var,
    /// Per-layer `(mean, variance)` of the pre-normalization activations
    /// (empty in [`NormMode::Running`]).
    pub batch_stats: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(spec: GeneratorSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamSet::new();
        let sn = spec.spectral_norm;
        let emb = spec.modulation.uses_prior().then(|| {
            LinearSlots::register(&mut params, "g_emb", spec.prior_dim, spec.cond_dim, false, false, Init::Normal(1.0), rng)
        });
        let mut layers = Vec::with_capacity(spec.layers);
        let mut fan_in = spec.chunk();
        let mod_in = spec.modulation_input_dim();
        for i in 0..spec.layers {
            let lin = LinearSlots::register(&mut params, &format!("l{i}"), fan_in, spec.hidden, true, sn, Init::Normal(2f64.sqrt()), rng);
            let running_mean = params.push(format!("l{i}.running_mean"), Tensor::zeros(&[1, spec.hidden]), false);
            let running_var =
                params.push(format!("l{i}.running_var"), Tensor::matrix(1, spec.hidden, vec![1.0; spec.hidden])?, false);
            let (gamma, beta) = if spec.modulation != Modulation::None {
                (
                    Some(LinearSlots::register(&mut params, &format!("l{i}.gamma"), mod_in, spec.hidden, true, false, Init::Zero, rng)),
                    Some(LinearSlots::register(&mut params, &format!("l{i}.beta"), mod_in, spec.hidden, true, false, Init::Zero, rng)),
                )
            } else {
                (None, None)
            };
            layers.push(GenLayer { lin, running_mean, running_var, gamma, beta });
            fan_in = spec.hidden;
        }
        let out = LinearSlots::register(&mut params, "out", spec.hidden, spec.out_dim, true, sn, Init::Normal(1.0), rng);
        Ok(Self { spec, params, emb, layers, out })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Replaces all parameter values (same structure required).
    pub fn load_params(&mut self, params: &ParamSet) -> Result<()> {
        self.params.copy_values_from(params)
    }

    /// Names of the `G_emb` parameters (empty for unconditional modes).
    pub fn embedding_param_names(&self) -> Vec<String> {
        self.params.entries().iter().filter(|p| p.name.starts_with("g_emb.")).map(|p| p.name.clone()).collect()
    }

    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Result<Bound> {
        tape.bind(&self.params, requires_grad)
    }

    /// `G_emb(prior)`.
    pub fn embed(&self, tape: &mut Tape, bound: &Bound, prior: Var) -> Result<Var> {
        let emb = self.emb.as_ref().ok_or_else(|| invalid("generator has no prior embedding"))?;
        let [_, d] = tape.shape(prior);
        if d != self.spec.prior_dim {
            return Err(Error::Shape {
                op: "gen_forward",
                detail: format!("prior width {d}, expected {}", self.spec.prior_dim),
            });
        }
        emb.apply(tape, bound, &self.params, prior)
    }

    /// `G(z | prior)`. The prior is ignored by unconditional modes.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, z: Var, prior: Option<Var>, mode: NormMode) -> Result<GenOutput> {
        self.check_latent(tape, z)?;
        let cond = if self.spec.modulation.uses_prior() {
            let prior = prior.ok_or_else(|| invalid("prior-conditioned generator called without a prior"))?;
            let (zb, pb) = (tape.shape(z)[0], tape.shape(prior)[0]);
            if zb != pb {
                return Err(Error::Shape { op: "gen_forward", detail: format!("z batch {zb} vs prior batch {pb}") });
            }
            Some(self.embed(tape, bound, prior)?)
        } else {
            None
        };
        let conds = vec![cond; self.layers.len()];
        self.forward_layers(tape, bound, z, &conds, mode)
    }

    /// Forward pass with an independent post-`G_emb` conditioning vector per
    /// modulated layer (used for inversion).
    pub fn forward_with_layer_conds(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        z: Var,
        conds: &[Var],
        mode: NormMode,
    ) -> Result<GenOutput> {
        if !self.spec.modulation.uses_prior() {
            return Err(invalid("per-layer conditioning requires a prior-conditioned generator"));
        }
        if conds.len() != self.layers.len() {
            return Err(invalid(format!("{} conditioning vectors for {} layers", conds.len(), self.layers.len())));
        }
        self.check_latent(tape, z)?;
        let conds: Vec<Option<Var>> = conds.iter().map(|&c| Some(c)).collect();
        self.forward_layers(tape, bound, z, &conds, mode)
    }

    fn check_latent(&self, tape: &Tape, z: Var) -> Result<()> {
        let [_, zd] = tape.shape(z);
        if zd != self.spec.latent_dim {
            return Err(Error::Shape {
                op: "gen_forward",
                detail: format!("latent width {zd}, expected {}", self.spec.latent_dim),
            });
        }
        Ok(())
    }

    fn forward_layers(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        z: Var,
        conds: &[Option<Var>],
        mode: NormMode,
    ) -> Result<GenOutput> {
        let spec = &self.spec;
        let hier = spec.is_hierarchical();
        let chunk = spec.chunk();
        let mut h = if hier { tape.slice_cols(z, 0, chunk)? } else { z };
        let mut batch_stats = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let a = layer.lin.apply(tape, bound, &self.params, h)?;
            let normed = match mode {
                NormMode::Batch => {
                    let (n, mean, var) = tape.batch_standardize(a, BN_EPS)?;
                    batch_stats.push((mean, var));
                    n
                }
                NormMode::Running => {
                    let rm = self.params.tensor(layer.running_mean).data();
                    let rv = self.params.tensor(layer.running_var).data();
                    let scale: Vec<f64> = rv.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                    let shift: Vec<f64> = rm.iter().zip(&scale).map(|(m, s)| -m * s).collect();
                    tape.col_affine(a, &scale, &shift)?
                }
            };
            let modulated = match (&layer.gamma, &layer.beta) {
                (Some(gamma), Some(beta)) => {
                    let mut parts = Vec::with_capacity(2);
                    if hier {
                        parts.push(tape.slice_cols(z, (i + 1) * chunk, (i + 2) * chunk)?);
                    } else if spec.modulation == Modulation::SelfModulation {
                        parts.push(z);
                    }
                    if let Some(c) = conds[i] {
                        parts.push(c);
                    }
                    let m_in = if parts.len() == 1 { parts[0] } else { tape.concat(&parts)? };
                    let g = gamma.apply(tape, bound, &self.params, m_in)?;
                    let b = beta.apply(tape, bound, &self.params, m_in)?;
                    tape.modulate(normed, g, b)?
                }
                _ => normed,
            };
            h = tape.relu(modulated)?;
        }
        let out = self.out.apply(tape, bound, &self.params, h)?;
        let sample = match spec.output {
            OutputActivation::Tanh => tape.tanh(out)?,
            OutputActivation::Linear => out,
        };
        Ok(GenOutput { sample, batch_stats })
    }

    /// Folds batch statistics into the running estimates.
    pub fn absorb_batch_stats(&mut self, stats: &[(Vec<f64>, Vec<f64>)], momentum: f64) {
        for (layer, (mean, var)) in self.layers.iter().zip(stats) {
            let rm = self.params.tensor_mut(layer.running_mean).data_mut();
            rm.iter_mut().zip(mean).for_each(|(r, m)| *r = (1.0 - momentum) * *r + momentum * m);
            let rv = self.params.tensor_mut(layer.running_var).data_mut();
            rv.iter_mut().zip(var).for_each(|(r, v)| *r = (1.0 - momentum) * *r + momentum * v);
        }
    }

    /// One power-iteration step for every spectrally normalized weight.
    pub fn power_iterate(&mut self) {
        for layer in &self.layers {
            layer.lin.power_iterate(&mut self.params);
        }
        self.out.power_iterate(&mut self.params);
    }

    /// Convenience: samples for a batch of latents/priors given as tensors.
    pub fn generate(&self, z: &Tensor, prior: Option<&Tensor>, mode: NormMode) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false)?;
        let zv = tape.constant(z)?;
        let pv = prior.map(|p| tape.constant(p)).transpose()?;
        let out = self.forward(&mut tape, &bound, zv, pv, mode)?;
        Ok(tape.to_tensor(out.sample))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    #[test]
    fn unconditional_output_ignores_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = GeneratorSpec { modulation: Modulation::None, ..GeneratorSpec::default() };
        let g = Generator::new(spec, &mut rng).unwrap();
        let z = randn(&mut rng, 6, 16);
        let (p1, p2) = (randn(&mut rng, 6, 16), randn(&mut rng, 6, 16));
        let a = g.generate(&z, Some(&p1), NormMode::Batch).unwrap();
        let b = g.generate(&z, Some(&p2), NormMode::Batch).unwrap();
        let c = g.generate(&z, None, NormMode::Batch).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn zero_initialized_heads_give_identity_modulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Generator::new(GeneratorSpec::default(), &mut rng).unwrap();
        let z = randn(&mut rng, 5, 16);
        let (p1, p2) = (randn(&mut rng, 5, 16), randn(&mut rng, 5, 16));
        // γ = β = 0 at construction, so the prior cannot influence the output yet.
        assert_eq!(
            g.generate(&z, Some(&p1), NormMode::Batch).unwrap(),
            g.generate(&z, Some(&p2), NormMode::Batch).unwrap()
        );
    }

    #[test]
    fn every_mode_produces_finite_output_of_right_shape() {
        for modulation in [Modulation::Prior, Modulation::SelfModulation, Modulation::PerInstanceEmbedding, Modulation::None] {
            for hierarchical in [true, false] {
                let mut rng = ChaCha8Rng::seed_from_u64(2);
                let spec = GeneratorSpec { modulation, hierarchical, out_dim: 5, ..GeneratorSpec::default() };
                let mut g = Generator::new(spec, &mut rng).unwrap();
                // Perturb heads so modulation is active.
                for p in g.params_mut().entries_mut() {
                    if p.name.contains("gamma") || p.name.contains("beta") {
                        p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.1);
                    }
                }
                let z = randn(&mut rng, 7, 16);
                let p = randn(&mut rng, 7, 16);
                for mode in [NormMode::Batch, NormMode::Running] {
                    let out = g.generate(&z, Some(&p), mode).unwrap();
                    assert_eq!(out.shape(), &[7, 5]);
                    assert!(out.all_finite());
                }
            }
        }
    }

    #[test]
    fn batch_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Generator::new(GeneratorSpec::default(), &mut rng).unwrap();
        let z = randn(&mut rng, 4, 16);
        let p = randn(&mut rng, 3, 16);
        assert!(matches!(g.generate(&z, Some(&p), NormMode::Batch), Err(Error::Shape { .. })));
    }

    #[test]
    fn hierarchical_latent_must_divide() {
        let spec = GeneratorSpec { latent_dim: 15, ..GeneratorSpec::default() };
        assert!(spec.validate().is_err());
    }
}
