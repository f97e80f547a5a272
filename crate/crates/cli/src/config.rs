//! Experiment configuration: TOML with `[data]`, `[extractor]`, `[model]`,
//! `[train]` (plus `[train.adam]`) and `[eval]` sections. Unknown keys are
//! rejected with the list of valid ones.

use std::path::{Path, PathBuf};

use disp_core::data::{RingSpec, TransferProtocol};
use disp_core::nets::{DiscriminatorSpec, ExtractorKind, ExtractorSpec, GeneratorSpec, Modulation, OutputActivation};
use disp_core::prior::CovarianceKind;
use disp_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// Synthetic ring→ring transfer protocol.
    Ring,
    /// Dataset files on disk.
    Files,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub kind: DataKind,
    pub n_target: usize,
    pub val_fraction: f64,
    pub n_test: usize,
    pub source_n: usize,
    pub source_modes: usize,
    pub source_radius: f64,
    pub source_sigma: f64,
    pub source_phase: f64,
    pub target_modes: usize,
    pub target_radius: f64,
    pub target_sigma: f64,
    pub target_phase: f64,
    /// Files mode: labeled source data for extractor pretraining.
    pub source_file: Option<PathBuf>,
    pub train_file: Option<PathBuf>,
    pub val_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        let p = TransferProtocol::default();
        Self {
            kind: DataKind::Ring,
            n_target: p.n_target,
            val_fraction: p.val_fraction,
            n_test: p.n_test,
            source_n: p.source_n,
            source_modes: p.source.modes,
            source_radius: p.source.radius,
            source_sigma: p.source.sigma,
            source_phase: p.source.phase,
            target_modes: p.target.modes,
            target_radius: p.target.radius,
            target_sigma: p.target.sigma,
            target_phase: p.target.phase,
            source_file: None,
            train_file: None,
            val_file: None,
            test_file: None,
        }
    }
}

impl DataConfig {
    pub fn protocol(&self) -> TransferProtocol {
        TransferProtocol {
            source: RingSpec { modes: self.source_modes, radius: self.source_radius, sigma: self.source_sigma, phase: self.source_phase },
            source_n: self.source_n,
            target: RingSpec { modes: self.target_modes, radius: self.target_radius, sigma: self.target_sigma, phase: self.target_phase },
            n_target: self.n_target,
            val_fraction: self.val_fraction,
            n_test: self.n_test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractorConfig {
    /// Load a pretrained extractor instead of training one.
    pub checkpoint: Option<PathBuf>,
    pub kind: ExtractorKind,
    pub hidden: usize,
    pub out_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub val_fraction: f64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        let s = ExtractorSpec::default();
        Self {
            checkpoint: None,
            kind: s.kind,
            hidden: s.hidden,
            out_dim: s.out_dim,
            epochs: s.epochs,
            batch_size: s.batch_size,
            lr: s.lr,
            val_fraction: s.val_fraction,
        }
    }
}

impl ExtractorConfig {
    pub fn spec(&self) -> ExtractorSpec {
        ExtractorSpec {
            kind: self.kind,
            hidden: self.hidden,
            out_dim: self.out_dim,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            val_fraction: self.val_fraction,
        }
    }
}

/// Network shapes. The generator's prior width comes from the extractor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub modulation: Modulation,
    /// Latent width (the large-scale reference setting uses 120).
    pub latent_dim: usize,
    pub layers: usize,
    pub hidden: usize,
    pub cond_dim: usize,
    pub hierarchical: bool,
    pub output: OutputActivation,
    pub spectral_norm_g: bool,
    pub spectral_norm_d: bool,
    pub disc_hidden: usize,
    /// Width `f` of `D_f(x)` (the large-scale reference setting uses 1024).
    pub feature_dim: usize,
    pub disc_depth: usize,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let g = GeneratorSpec::default();
        let d = DiscriminatorSpec::default();
        Self {
            modulation: g.modulation,
            latent_dim: g.latent_dim,
            layers: g.layers,
            hidden: g.hidden,
            cond_dim: g.cond_dim,
            hierarchical: g.hierarchical,
            output: g.output,
            spectral_norm_g: g.spectral_norm,
            // On 2-D data the Lipschitz cap leaves a small MLP critic nearly unable to learn.
            spectral_norm_d: false,
            disc_hidden: d.hidden,
            feature_dim: d.feature_dim,
            disc_depth: d.depth,
            leaky_slope: d.slope,
        }
    }
}

impl ModelConfig {
    pub fn generator_spec(&self, out_dim: usize, prior_dim: usize) -> GeneratorSpec {
        GeneratorSpec {
            latent_dim: self.latent_dim,
            layers: self.layers,
            hidden: self.hidden,
            out_dim,
            prior_dim,
            cond_dim: self.cond_dim,
            modulation: self.modulation,
            output: self.output,
            hierarchical: self.hierarchical,
            spectral_norm: self.spectral_norm_g,
        }
    }

    pub fn discriminator_spec(&self, in_dim: usize, prior_dim: usize) -> DiscriminatorSpec {
        DiscriminatorSpec {
            in_dim,
            prior_dim: if self.modulation.uses_prior() { prior_dim } else { 0 },
            hidden: self.disc_hidden,
            feature_dim: self.feature_dim,
            depth: self.disc_depth,
            slope: self.leaky_slope,
            spectral_norm: self.spectral_norm_d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Vicinal mix over the extracted prior set.
    Vicinal,
    /// Mixture model fitted by `fit-gmm`.
    Gmm,
    /// Vicinal mix over the learned per-instance table.
    Table,
}

impl SamplerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Vicinal => "vicinal",
            Self::Gmm => "gmm",
            Self::Table => "table",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GmmSpace {
    /// Fit on raw `C(x)` and condition through `G_emb` as in training.
    Raw,
    /// Fit on `G_emb(C(x))` and feed samples directly to the modulation heads.
    Embedded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub samples: usize,
    /// Sampler for evaluation; `None` picks vicinal (prior models) or table (embedding baseline).
    pub sampler: Option<SamplerKind>,
    pub k_precision: usize,
    pub k_recall: usize,
    pub ct_cells: Option<usize>,
    pub coverage_threshold_sigma: f64,
    pub coverage_min_fraction: f64,
    pub ivom_queries: usize,
    pub ivom_steps: usize,
    pub ivom_lr: f64,
    pub gmm_k: usize,
    pub gmm_subset: Option<usize>,
    pub gmm_covariance: CovarianceKind,
    pub gmm_space: GmmSpace,
    /// Evaluate the best-FID snapshot when one was recorded.
    pub use_best_snapshot: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            sampler: None,
            k_precision: 10,
            k_recall: 40,
            ct_cells: None,
            coverage_threshold_sigma: 3.0,
            coverage_min_fraction: 0.01,
            ivom_queries: 32,
            ivom_steps: 500,
            ivom_lr: 0.1,
            gmm_k: 8,
            gmm_subset: None,
            gmm_covariance: CovarianceKind::Diagonal,
            gmm_space: GmmSpace::Raw,
            use_best_snapshot: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub extractor: ExtractorConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, UsageError> {
        let cfg: Self = toml::from_str(text).map_err(|e| UsageError(format!("invalid config: {}", e.message())))?;
        cfg.train.validate().map_err(|e| UsageError(format!("invalid config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("reading config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative data paths are resolved against the config's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.data.source_file,
            &mut cfg.data.train_file,
            &mut cfg.data.val_file,
            &mut cfg.data.test_file,
            &mut cfg.extractor.checkpoint,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
