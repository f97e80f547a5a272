use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Init, LinearSlots};
use crate::error::{invalid, Error, Result};
use crate::tape::{Bound, Tape, Var};
use crate::tensor::{ParamSet, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorSpec {
    pub in_dim: usize,
    /// Width `d` of the prior fed to `D_emb`; 0 disables the projection head.
    pub prior_dim: usize,
    pub hidden: usize,
    /// Width `f` of `D_f(x)`.
    pub feature_dim: usize,
    /// Number of dense layers in the trunk (≥ 1).
    pub depth: usize,
    pub slope: f64,
    pub spectral_norm: bool,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        Self { in_dim: 2, prior_dim: 16, hidden: 64, feature_dim: 64, depth: 2, slope: 0.2, spectral_norm: true }
    }
}

/// Projection discriminator `D(x, y) = D_emb(y)·D_f(x) + D_l(D_f(x))`.
#[derive(Clone, Debug)]
pub struct Discriminator {
    spec: DiscriminatorSpec,
    params: ParamSet,
    trunk: Vec<LinearSlots>,
    head: LinearSlots,
    emb: Option<LinearSlots>,
}

pub struct DiscOutput {
    /// Per-example score, shape `(b, 1)`.
    pub score: Var,
    /// `D_f(x)`, shape `(b, f)`.
    pub features: Var,
    /// `D_l(D_f(x))`, shape `(b, 1)`.
    pub unconditional: Var,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(spec: DiscriminatorSpec, rng: &mut R) -> Result<Self> {
        if spec.in_dim == 0 || spec.hidden == 0 || spec.feature_dim == 0 || spec.depth == 0 {
            return Err(invalid("discriminator dimensions must be positive"));
        }
        let mut params = ParamSet::new();
        let sn = spec.spectral_norm;
        let mut trunk = Vec::with_capacity(spec.depth);
        let mut fan_in = spec.in_dim;
        for i in 0..spec.depth {
            let fan_out = if i + 1 == spec.depth { spec.feature_dim } else { spec.hidden };
            trunk.push(LinearSlots::register(&mut params, &format!("f{i}"), fan_in, fan_out, true, sn, Init::Normal(2f64.sqrt()), rng));
            fan_in = fan_out;
        }
        let head = LinearSlots::register(&mut params, "d_l", spec.feature_dim, 1, true, sn, Init::Normal(1.0), rng);
        let emb = (spec.prior_dim > 0).then(|| {
            LinearSlots::register(&mut params, "d_emb", spec.prior_dim, spec.feature_dim, false, sn, Init::Normal(1.0), rng)
        });
        Ok(Self { spec, params, trunk, head, emb })
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn load_params(&mut self, params: &ParamSet) -> Result<()> {
        self.params.copy_values_from(params)
    }

    pub fn has_projection(&self) -> bool {
        self.emb.is_some()
    }

    pub fn embedding_param_names(&self) -> Vec<String> {
        self.params.entries().iter().filter(|p| p.name.starts_with("d_emb.")).map(|p| p.name.clone()).collect()
    }

    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Result<Bound> {
        tape.bind(&self.params, requires_grad)
    }

    /// `D_f(x)`.
    pub fn features(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let [_, p] = tape.shape(x);
        if p != self.spec.in_dim {
            return Err(Error::Shape { op: "disc_forward", detail: format!("input width {p}, expected {}", self.spec.in_dim) });
        }
        let mut h = x;
        for lin in &self.trunk {
            let a = lin.apply(tape, bound, &self.params, h)?;
            h = tape.leaky_relu(a, self.spec.slope)?;
        }
        Ok(h)
    }

    /// Scores `x`; without a prior (or projection head) the score is the
    /// unconditional term `D_l(D_f(x))`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var, prior: Option<Var>) -> Result<DiscOutput> {
        let features = self.features(tape, bound, x)?;
        let uncond = self.head.apply(tape, bound, &self.params, features)?;
        let score = match (&self.emb, prior) {
            (Some(emb), Some(prior)) => {
                let ([xb, _], [pb, pd]) = (tape.shape(x), tape.shape(prior));
                if xb != pb || pd != self.spec.prior_dim {
                    return Err(Error::Shape {
                        op: "disc_forward",
                        detail: format!("x batch {xb}, prior shape [{pb}, {pd}], expected [{xb}, {}]", self.spec.prior_dim),
                    });
                }
                let proj = emb.apply(tape, bound, &self.params, prior)?;
                let inner = tape.row_dot(proj, features)?;
                tape.add(inner, uncond)?
            }
            _ => uncond,
        };
        Ok(DiscOutput { score, features, unconditional: uncond })
    }

    /// Scores as plain numbers (no gradient tracking).
    pub fn score(&self, x: &Tensor, prior: Option<&Tensor>) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false)?;
        let xv = tape.constant(x)?;
        let pv = prior.map(|p| tape.constant(p)).transpose()?;
        let out = self.forward(&mut tape, &bound, xv, pv)?;
        Ok(tape.value(out.score).to_vec())
    }

    /// `D_f(x)` as a tensor.
    pub fn feature_tensor(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false)?;
        let xv = tape.constant(x)?;
        let f = self.features(&mut tape, &bound, xv)?;
        Ok(tape.to_tensor(f))
    }

    pub fn power_iterate(&mut self) {
        for lin in &self.trunk {
            lin.power_iterate(&mut self.params);
        }
        self.head.power_iterate(&mut self.params);
        if let Some(emb) = &self.emb {
            emb.power_iterate(&mut self.params);
        }
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

    fn set(d: &mut Discriminator, name: &str, values: &[f64]) {
        let slot = d.params().index_of(name).unwrap();
        d.params_mut().tensor_mut(slot).data_mut().copy_from_slice(values);
    }

    #[test]
    fn hand_built_projection_score() {
        let spec = DiscriminatorSpec { in_dim: 2, prior_dim: 2, hidden: 2, feature_dim: 2, depth: 1, slope: 0.2, spectral_norm: false };
        let mut d = Discriminator::new(spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        set(&mut d, "f0.w", &[1.0, 0.0, 0.0, 1.0]);
        set(&mut d, "f0.b", &[0.0, 0.0]);
        set(&mut d, "d_l.w", &[1.0, 1.0]);
        set(&mut d, "d_l.b", &[0.0]);
        set(&mut d, "d_emb.w", &[0.5, 0.5, 0.0, 0.0]);
        let x = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let y = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let s = d.score(&x, Some(&y)).unwrap();
        assert!((s[0] - 4.5).abs() < 1e-12);
    }

    #[test]
    fn zero_projection_reproduces_unconditional_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Discriminator::new(DiscriminatorSpec::default(), &mut rng).unwrap();
        let slot = d.params().index_of("d_emb.w").unwrap();
        d.params_mut().tensor_mut(slot).data_mut().iter_mut().for_each(|v| *v = 0.0);
        let x = randn(&mut rng, 9, 2);
        let y = randn(&mut rng, 9, 16);
        let cond = d.score(&x, Some(&y)).unwrap();
        let uncond = d.score(&x, None).unwrap();
        assert_eq!(cond, uncond);
    }

    #[test]
    fn projection_term_is_additive_in_the_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = Discriminator::new(DiscriminatorSpec::default(), &mut rng).unwrap();
        let x = randn(&mut rng, 4, 2);
        let e1 = randn(&mut rng, 4, 16);
        let e2 = randn(&mut rng, 4, 16);
        let sum = Tensor::matrix(4, 16, e1.data().iter().zip(e2.data()).map(|(a, b)| a + b).collect()).unwrap();
        let zero = Tensor::zeros(&[4, 16]);
        let s0 = d.score(&x, Some(&zero)).unwrap();
        let s1 = d.score(&x, Some(&e1)).unwrap();
        let s2 = d.score(&x, Some(&e2)).unwrap();
        let s12 = d.score(&x, Some(&sum)).unwrap();
        for i in 0..4 {
            assert!(((s12[i] - s0[i]) - (s1[i] - s0[i]) - (s2[i] - s0[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Discriminator::new(DiscriminatorSpec::default(), &mut rng).unwrap();
        let x = randn(&mut rng, 4, 3);
        assert!(matches!(d.score(&x, None), Err(Error::Shape { .. })));
        let x = randn(&mut rng, 4, 2);
        let y = randn(&mut rng, 5, 16);
        assert!(matches!(d.score(&x, Some(&y)), Err(Error::Shape { .. })));
    }
}
