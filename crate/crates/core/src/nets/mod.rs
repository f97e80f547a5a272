//! Conditional generator, projection discriminator and frozen feature
//! extractors.

mod discriminator;
mod extractor;
mod generator;

pub use discriminator::{DiscOutput, Discriminator, DiscriminatorSpec};
pub use extractor::{pretrain_extractor, ExtractorKind, ExtractorSpec, FeatureExtractor, PretrainReport};
pub use generator::{GenOutput, Generator, GeneratorSpec, Modulation, NormMode, OutputActivation, BN_EPS};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::spectral::{power_iteration, random_unit};
use crate::tape::{Bound, Tape, Var};
use crate::tensor::{ParamSet, Tensor};

/// Slot indices of one dense layer inside a [`ParamSet`].
#[derive(Clone, Debug)]
pub(crate) struct LinearSlots {
    w: usize,
    b: Option<usize>,
    /// Power-iteration vector when the weight is spectrally normalized.
    u: Option<usize>,
}

#[derive(Clone, Copy)]
pub(crate) enum Init {
    /// N(0, scale²/fan_in).
    Normal(f64),
    Zero,
}

impl LinearSlots {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn register<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        spectral: bool,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let data = match init {
            Init::Normal(scale) => {
                let std = scale / (fan_in as f64).sqrt();
                (0..fan_in * fan_out).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
            }
            Init::Zero => vec![0.0; fan_in * fan_out],
        };
        let w = params.push(format!("{prefix}.w"), Tensor::matrix(fan_in, fan_out, data).unwrap(), true);
        let b = bias.then(|| params.push(format!("{prefix}.b"), Tensor::zeros(&[1, fan_out]), true));
        let u = spectral.then(|| {
            let u = random_unit(fan_in, rng);
            params.push(format!("{prefix}.u"), Tensor::matrix(1, fan_in, u).unwrap(), false)
        });
        Self { w, b, u }
    }

    pub(crate) fn apply(&self, tape: &mut Tape, bound: &Bound, params: &ParamSet, x: Var) -> Result<Var> {
        let mut w = bound.var(self.w);
        if let Some(u) = self.u {
            w = tape.spectral_norm(w, params.tensor(u).data())?;
        }
        tape.linear(x, w, self.b.map(|b| bound.var(b)))
    }

    pub(crate) fn power_iterate(&self, params: &mut ParamSet) {
        if let Some(u_slot) = self.u {
            let w = params.tensor(self.w);
            let (rows, cols) = w.dims2();
            let w = w.data().to_vec();
            power_iteration(&w, rows, cols, params.tensor_mut(u_slot).data_mut());
        }
    }
}
