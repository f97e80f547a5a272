use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nets::{Generator, NormMode};
use crate::optim::{AdamConfig, AdamState};
use crate::tape::Tape;
use crate::tensor::{ParamSet, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionConfig {
    pub steps: usize,
    pub lr: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self { steps: 500, lr: 0.1 }
    }
}

/// Outcome of optimizing latents and per-layer conditioning to match queries.
#[derive(Clone, Debug, PartialEq)]
pub struct InversionResult {
    /// Best reconstruction of each query.
    pub reconstruction: Tensor,
    /// Best per-query mean squared error (the IvOM value of each query).
    pub best_mse: Vec<f64>,
    pub initial_mse: Vec<f64>,
    /// Latents of the best iterate.
    pub z: Tensor,
    /// Per-layer post-embedding conditioning of the best iterate.
    pub conds: Vec<Tensor>,
    /// Mean objective over queries at every evaluated iterate.
    pub trace: Vec<f64>,
}

impl InversionResult {
    pub fn median(&self) -> f64 {
        let mut v = self.best_mse.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

/// Inverts each query row independently: optimizes `z` (initialized at 0) and
/// one conditioning vector per modulated layer (initialized at
/// `G_emb(prior)`) by Adam, tracking the best iterate per query. Rows never
/// interact, so the batch is equivalent to separate runs.
pub fn ivom(generator: &Generator, queries: &Tensor, init_prior: &Tensor, config: &InversionConfig) -> Result<InversionResult> {
    let spec = generator.spec();
    if !spec.modulation.uses_prior() {
        return Err(invalid("inversion needs a generator with prior modulation state"));
    }
    let (m, p) = queries.dims2();
    if p != spec.out_dim {
        return Err(Error::Shape { op: "ivom", detail: format!("query width {p}, generator output {}", spec.out_dim) });
    }
    if init_prior.dims2() != (m, spec.prior_dim) {
        return Err(Error::Shape { op: "ivom", detail: format!("init prior shape {:?}, expected [{m}, {}]", init_prior.shape(), spec.prior_dim) });
    }
    if m == 0 {
        return Err(invalid("no queries to invert"));
    }

    let init_cond = {
        let mut tape = Tape::new();
        let bound = generator.bind(&mut tape, false)?;
        let pv = tape.constant(init_prior)?;
        let c = generator.embed(&mut tape, &bound, pv)?;
        tape.to_tensor(c)
    };
    let mut free = ParamSet::new();
    free.push("z", Tensor::zeros(&[m, spec.latent_dim]), true);
    for l in 0..spec.layers {
        free.push(format!("cond{l}"), init_cond.clone(), true);
    }
    let mut opt = AdamState::new(&free, AdamConfig { lr: config.lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 });

    let mut best_mse = vec![f64::INFINITY; m];
    let mut best_rows = vec![0.0; m * p];
    let mut best_free: Vec<Vec<f64>> = free.entries().iter().map(|e| e.tensor.data().to_vec()).collect();
    let mut initial_mse = Vec::new();
    let mut trace = Vec::with_capacity(config.steps + 1);
    for it in 0..=config.steps {
        let mut tape = Tape::new();
        let g_bound = generator.bind(&mut tape, false)?;
        let f_bound = tape.bind(&free, true)?;
        let conds: Vec<_> = (1..=spec.layers).map(|s| f_bound.var(s)).collect();
        let out = generator.forward_with_layer_conds(&mut tape, &g_bound, f_bound.var(0), &conds, NormMode::Running)?;
        let target = tape.constant(queries)?;
        let diff = tape.sub(out.sample, target)?;
        let sq = tape.mul(diff, diff)?;
        let total = tape.sum(sq)?;
        let values = tape.value(out.sample);
        let row_mse: Vec<f64> = values
            .chunks(p)
            .zip(queries.data().chunks(p))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / p as f64)
            .collect();
        if row_mse.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: it, detail: format!("non-finite inversion objective; trace {trace:?}") });
        }
        if it == 0 {
            initial_mse = row_mse.clone();
        }
        trace.push(row_mse.iter().sum::<f64>() / m as f64);
        for (i, &v) in row_mse.iter().enumerate() {
            if v < best_mse[i] {
                best_mse[i] = v;
                best_rows[i * p..(i + 1) * p].copy_from_slice(&values[i * p..(i + 1) * p]);
                for (slot, e) in free.entries().iter().enumerate() {
                    let w = e.tensor.cols();
                    best_free[slot][i * w..(i + 1) * w].copy_from_slice(e.tensor.row(i));
                }
            }
        }
        if it == config.steps {
            break;
        }
        // Sum of squared errors: each row's gradient is independent of the others.
        let grads = tape.backward(total)?;
        free.zero_grads();
        grads.accumulate_into(&mut free, &f_bound)?;
        opt.step(&mut free)?;
    }
    let mut tensors = free.entries().iter().zip(best_free).map(|(e, data)| Tensor::new(e.tensor.shape().to_vec(), data).unwrap());
    let z = tensors.next().unwrap();
    Ok(InversionResult {
        reconstruction: Tensor::matrix(m, p, best_rows)?,
        best_mse,
        initial_mse,
        z,
        conds: tensors.collect(),
        trace,
    })
}
