//! End-to-end experiment pipeline shared by the commands: data, extractor,
//! training, sampling, evaluation and checkpoint conversion.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use disp_core::data::{make_transfer, read_dataset, Dataset, Split};
use disp_core::metrics::{
    ct_statistic, fid, ivom, mode_coverage, overfit_gap, pr_k, precision_recall, InversionConfig,
};
use disp_core::nets::{
    pretrain_extractor, Discriminator, ExtractorKind, ExtractorSpec, FeatureExtractor, Generator, Modulation, NormMode,
    PretrainReport,
};
use disp_core::optim::AdamState;
use disp_core::prior::{extract_priors, gmm_fit, gmm_sample, CovarianceKind, GmmConfig, GmmModel, PriorSet};
use disp_core::seed::{derive_seed, rng_for};
use disp_core::tape::Tape;
use disp_core::tensor::{ParamSet, Tensor};
use disp_core::train::{
    generate, standard_normal, train, PriorSource, SnapshotScorer, TrainData, TrainHistory,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::config::{DataKind, ExperimentConfig, GmmSpace, SamplerKind};

/// Seed streams derived from the experiment seed.
pub mod streams {
    pub const EXTRACTOR: u64 = 20;
    pub const EVAL_EXTRACTOR: u64 = 21;
    pub const TRAIN: u64 = 30;
    pub const EVAL: u64 = 40;
    pub const SAMPLE: u64 = 41;
    pub const GMM: u64 = 42;
}

/// Above this data width FID and friends use a held-out extractor's features.
pub const RAW_FEATURE_MAX_DIM: usize = 8;

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Data splits for one experiment.
#[derive(Clone, Debug)]
pub struct Splits {
    pub source: Option<Dataset>,
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub test: Option<Dataset>,
    /// Known mixture centers and per-mode σ of the target distribution.
    pub modes: Option<(Vec<Vec<f64>>, f64)>,
}

pub fn load_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    match cfg.data.kind {
        DataKind::Ring => {
            let s = make_transfer(&cfg.data.protocol(), cfg.seed)?;
            Ok(Splits {
                source: Some(s.source),
                train: s.train,
                val: Some(s.val),
                test: Some(s.test),
                modes: Some((s.target_centers.iter().map(|c| c.to_vec()).collect(), cfg.data.target_sigma)),
            })
        }
        DataKind::Files => {
            let read = |p: &Option<std::path::PathBuf>, split: Split| -> Result<Option<Dataset>> {
                p.as_ref()
                    .map(|p| {
                        read_dataset(p).map(|mut d| {
                            d.split = split;
                            d
                        })
                        .with_context(|| format!("reading {}", p.display()))
                    })
                    .transpose()
            };
            let train = read(&cfg.data.train_file, Split::TargetTrain)?.ok_or_else(|| anyhow!("[data] train_file is required for kind = \"files\""))?;
            Ok(Splits {
                source: read(&cfg.data.source_file, Split::Source)?,
                train,
                val: read(&cfg.data.val_file, Split::TargetVal)?,
                test: read(&cfg.data.test_file, Split::TargetTest)?,
                modes: None,
            })
        }
    }
}

/// Loads the extractor named in `[extractor] checkpoint` or trains one on the source split.
pub fn obtain_extractor(cfg: &ExperimentConfig, splits: &Splits) -> Result<(FeatureExtractor, Option<PretrainReport>)> {
    if let Some(path) = &cfg.extractor.checkpoint {
        let ck = Checkpoint::load(path)?;
        return Ok((extractor_from_checkpoint(&ck, "extractor")?, None));
    }
    let source = splits.source.as_ref().ok_or_else(|| anyhow!("no source data: set [data] source_file or [extractor] checkpoint"))?;
    let (ext, report) = pretrain_extractor(source, &cfg.extractor.spec(), derive_seed(cfg.seed, streams::EXTRACTOR))?;
    Ok((ext, Some(report)))
}

/// Held-out feature map for evaluation; `None` means raw data space.
pub fn evaluation_extractor(cfg: &ExperimentConfig, splits: &Splits) -> Result<Option<FeatureExtractor>> {
    if splits.train.dim() <= RAW_FEATURE_MAX_DIM {
        return Ok(None);
    }
    let Some(source) = splits.source.as_ref().filter(|s| s.labels.is_some()) else {
        log::warn!("no labeled source data for a held-out evaluation extractor; using raw data space");
        return Ok(None);
    };
    let spec = ExtractorSpec { kind: ExtractorKind::PretextClassifier, ..cfg.extractor.spec() };
    Ok(Some(pretrain_extractor(source, &spec, derive_seed(cfg.seed, streams::EVAL_EXTRACTOR))?.0))
}

pub fn features(map: Option<&FeatureExtractor>, x: &Tensor) -> Result<Tensor> {
    Ok(match map {
        Some(f) => f.extract(x)?,
        None => x.clone(),
    })
}

/// A trained (or loaded) model with everything needed for inference and evaluation.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ExperimentConfig,
    pub generator: Generator,
    pub generator_ema: Generator,
    /// Best-FID EMA snapshot: step, FID, generator.
    pub best: Option<(usize, f64, Generator)>,
    pub discriminator: Discriminator,
    pub extractor: Option<FeatureExtractor>,
    pub eval_extractor: Option<FeatureExtractor>,
    pub priors: Option<PriorSet>,
    /// Learned per-instance table (embedding baseline).
    pub table: Option<PriorSet>,
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub modes: Option<(Vec<Vec<f64>>, f64)>,
    pub gmm: Option<(GmmModel, GmmSpace)>,
    pub adam: Option<(AdamState, AdamState)>,
    pub step: usize,
}

pub struct TrainRun {
    pub model: Model,
    pub history: TrainHistory,
    pub splits: Splits,
    pub extractor_report: Option<PretrainReport>,
}

fn prior_dim(cfg: &ExperimentConfig, extractor: Option<&FeatureExtractor>) -> usize {
    extractor.map_or(cfg.extractor.out_dim, FeatureExtractor::out_dim)
}

/// Trains according to `cfg` from scratch.
pub fn train_experiment(cfg: &ExperimentConfig) -> Result<TrainRun> {
    let splits = load_splits(cfg)?;
    train_on_splits(cfg, splits)
}

pub fn train_on_splits(cfg: &ExperimentConfig, splits: Splits) -> Result<TrainRun> {
    let modulation = cfg.model.modulation;
    let (extractor, extractor_report) = if modulation == Modulation::Prior {
        let (e, r) = obtain_extractor(cfg, &splits)?;
        (Some(e), r)
    } else {
        (None, None)
    };
    let priors = extractor.as_ref().map(|e| extract_priors(&splits.train, e)).transpose()?;
    let eval_extractor = evaluation_extractor(cfg, &splits)?;
    let p = splits.train.dim();
    let d = prior_dim(cfg, extractor.as_ref());
    let gen_spec = cfg.model.generator_spec(p, d);
    let disc_spec = cfg.model.discriminator_spec(p, d);
    let data = TrainData { train: splits.train.clone(), priors: priors.clone(), val: splits.val.clone() };
    let mut tcfg = cfg.train.clone();
    tcfg.seed = derive_seed(cfg.seed, streams::TRAIN);
    let scorer = if tcfg.fid_every > 0 {
        let reference = match &splits.val {
            Some(v) => splits.train.concat(v, Split::Unspecified)?,
            None => splits.train.clone(),
        };
        Some(SnapshotScorer { reference: features(eval_extractor.as_ref(), &reference.x)?, features: eval_extractor.clone() })
    } else {
        None
    };
    let outcome = train(gen_spec, disc_spec, &data, &tcfg, scorer.as_ref())?;
    let state = outcome.state;
    let table = state.table.as_ref().map(|t| t.as_prior_set()).transpose()?;
    let best = match outcome.best {
        Some((step, f, params)) => {
            let mut g = state.generator_ema.clone();
            g.load_params(&params)?;
            Some((step, f, g))
        }
        None => None,
    };
    let model = Model {
        config: cfg.clone(),
        generator: state.generator,
        generator_ema: state.generator_ema,
        best,
        discriminator: state.discriminator,
        extractor,
        eval_extractor,
        priors,
        table,
        train: splits.train.clone(),
        val: splits.val.clone(),
        modes: splits.modes.clone(),
        gmm: None,
        adam: Some((state.opt_g, state.opt_d)),
        step: state.step,
    };
    Ok(TrainRun { model, history: outcome.history, splits, extractor_report })
}

impl Model {
    /// Generator used for inference: best snapshot when requested and present, else the final EMA.
    pub fn inference_generator(&self, prefer_best: bool) -> (&Generator, &'static str) {
        match (&self.best, prefer_best) {
            (Some((_, _, g)), true) => (g, "best"),
            _ => (&self.generator_ema, "final_ema"),
        }
    }

    pub fn default_sampler(&self) -> SamplerKind {
        match self.config.model.modulation {
            Modulation::PerInstanceEmbedding => SamplerKind::Table,
            _ => SamplerKind::Vicinal,
        }
    }

    /// `n` samples from `generator` using `sampler`.
    pub fn sample(&self, generator: &Generator, sampler: SamplerKind, n: usize, seed: u64) -> Result<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modulation = self.config.model.modulation;
        if !modulation.uses_prior() {
            return Ok(generate(generator, PriorSource::None, n, &mut rng)?);
        }
        match sampler {
            SamplerKind::Vicinal => {
                let p = self.priors.as_ref().or(self.table.as_ref()).ok_or_else(|| anyhow!("checkpoint holds no prior set"))?;
                Ok(generate(generator, PriorSource::Vicinal(p), n, &mut rng)?)
            }
            SamplerKind::Table => {
                let t = self.table.as_ref().ok_or_else(|| anyhow!("the table sampler needs a per-instance-embedding model"))?;
                Ok(generate(generator, PriorSource::Vicinal(t), n, &mut rng)?)
            }
            SamplerKind::Gmm => {
                let (gmm, space) = self.gmm.as_ref().ok_or_else(|| crate::UsageError("checkpoint has no fitted GMM; run `disp fit-gmm` first".into()))?;
                match space {
                    GmmSpace::Raw => Ok(generate(generator, PriorSource::Gmm(gmm), n, &mut rng)?),
                    GmmSpace::Embedded => sample_embedded(generator, gmm, n, &mut rng),
                }
            }
        }
    }

    /// Prior set the GMM is fitted on, in the requested space.
    pub fn gmm_training_set(&self, space: GmmSpace) -> Result<PriorSet> {
        let p = self.priors.as_ref().or(self.table.as_ref()).ok_or_else(|| anyhow!("checkpoint holds no prior set to fit"))?;
        match space {
            GmmSpace::Raw => Ok(p.clone()),
            GmmSpace::Embedded => {
                let (g, _) = self.inference_generator(self.config.eval.use_best_snapshot);
                let mut tape = Tape::new();
                let bound = g.bind(&mut tape, false)?;
                let pv = tape.constant(p.vectors())?;
                let e = g.embed(&mut tape, &bound, pv)?;
                Ok(PriorSet::new(tape.to_tensor(e), p.source_hash().to_string())?)
            }
        }
    }

    pub fn fit_gmm(&mut self, k: usize, subset: Option<usize>, covariance: CovarianceKind, space: GmmSpace, seed: u64) -> Result<()> {
        let set = self.gmm_training_set(space)?;
        let cfg = GmmConfig { k, subset, covariance, seed, ..GmmConfig::default() };
        self.gmm = Some((gmm_fit(&set, &cfg)?, space));
        Ok(())
    }

    /// Initial priors for inverting `queries`: `C(x_q)` with an extractor,
    /// otherwise the mean learned table row.
    pub fn inversion_init(&self, queries: &Tensor) -> Result<Tensor> {
        if let Some(e) = &self.extractor {
            return Ok(e.extract(queries)?);
        }
        let t = self.table.as_ref().ok_or_else(|| anyhow!("model has no generator modulation state to invert"))?;
        let (n, d) = t.vectors().dims2();
        let mut mean = vec![0.0; d];
        for row in t.vectors().iter_rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n as f64);
        }
        Ok(Tensor::matrix(queries.rows(), d, mean.repeat(queries.rows()))?)
    }
}

fn sample_embedded(generator: &Generator, gmm: &GmmModel, n: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let spec = generator.spec();
    let z = standard_normal(n, spec.latent_dim, rng);
    let mut rows = Vec::with_capacity(n * gmm.dim);
    for _ in 0..n {
        rows.extend(gmm_sample(gmm, rng)?);
    }
    let conds = Tensor::matrix(n, gmm.dim, rows)?;
    let mut tape = Tape::new();
    let bound = generator.bind(&mut tape, false)?;
    let zv = tape.constant(&z)?;
    let cv = tape.constant(&conds)?;
    let layer_conds = vec![cv; spec.layers];
    let out = generator.forward_with_layer_conds(&mut tape, &bound, zv, &layer_conds, NormMode::Running)?;
    Ok(tape.to_tensor(out.sample))
}

/// A number that is either finite or absent with a stated reason.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IvomSummary {
    pub queries: usize,
    pub steps: usize,
    pub lr: f64,
    pub median: f64,
    pub mean: f64,
    pub per_query: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub modes: usize,
    pub covered: usize,
    pub threshold_sigma: f64,
    pub min_fraction: f64,
    pub histogram: Vec<usize>,
    pub high_quality_fraction: f64,
}

/// Evaluation report (see `docs/schema.md`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: String,
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub step: usize,
    pub snapshot: String,
    pub modulation: Modulation,
    pub sampler: SamplerKind,
    pub feature_space: String,
    pub n_train: usize,
    pub n_test: usize,
    pub n_samples: usize,
    pub fid: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub k_precision: usize,
    pub k_recall: usize,
    pub c_t: Option<f64>,
    pub ct_cells: usize,
    pub ivom: Option<IvomSummary>,
    pub overfit_gap: Option<f64>,
    pub mode_coverage: Option<CoverageSummary>,
    pub wall_clock_seconds: Option<f64>,
    /// Reason for every `null` field above.
    pub null_reasons: BTreeMap<String, String>,
}

pub struct EvalOptions {
    pub seed: u64,
    pub sampler: Option<SamplerKind>,
    pub samples: Option<usize>,
    pub ivom_steps: Option<usize>,
}

fn finite(name: &str, v: Result<f64>, nulls: &mut BTreeMap<String, String>) -> Option<f64> {
    match v {
        Ok(x) if x.is_finite() => Some(x),
        Ok(x) => {
            nulls.insert(name.into(), format!("non-finite value {x}"));
            None
        }
        Err(e) => {
            nulls.insert(name.into(), format!("{e:#}"));
            None
        }
    }
}

pub fn run_id(config_hash: &str, seed: u64) -> String {
    format!("{}-s{seed}", &config_hash[..12])
}

/// Computes the full metric suite against `test`.
pub fn evaluate(model: &Model, test: &Dataset, opts: &EvalOptions) -> Result<MetricsReport> {
    let e = &model.config.eval;
    if test.dim() != model.train.dim() {
        bail!("test data width {} does not match the model's {}", test.dim(), model.train.dim());
    }
    let (generator, snapshot) = model.inference_generator(e.use_best_snapshot);
    let sampler = opts.sampler.or(e.sampler).unwrap_or_else(|| model.default_sampler());
    let n_samples = opts.samples.unwrap_or(e.samples);
    let samples = model.sample(generator, sampler, n_samples, derive_seed(opts.seed, streams::EVAL))?;
    let fmap = model.eval_extractor.as_ref();
    let feature_space = match fmap {
        Some(_) => "heldout_extractor".to_string(),
        None => "raw".to_string(),
    };
    let real_f = features(fmap, &test.x)?;
    let fake_f = features(fmap, &samples)?;
    let train_f = features(fmap, &model.train.x)?;
    let mut nulls = BTreeMap::new();

    let fid_v = finite("fid", fid(&real_f, &fake_f).map_err(Into::into), &mut nulls);
    let n_min = real_f.rows().min(fake_f.rows());
    let (kp, kr) = (pr_k(e.k_precision, n_min), pr_k(e.k_recall, n_min));
    let (precision, recall) = match precision_recall(&real_f, &fake_f, kp, kr) {
        Ok((p, r)) => (Some(p), Some(r)),
        Err(err) => {
            nulls.insert("precision".into(), err.to_string());
            nulls.insert("recall".into(), err.to_string());
            (None, None)
        }
    };
    let ct_cells = e.ct_cells.unwrap_or(1);
    let c_t = finite(
        "c_t",
        ct_statistic(&train_f, &real_f, &fake_f, e.ct_cells, derive_seed(opts.seed, streams::EVAL)).map(|r| r.c_t).map_err(Into::into),
        &mut nulls,
    );

    let ivom_summary = if model.config.model.modulation.uses_prior() {
        let q = e.ivom_queries.min(test.len());
        if q == 0 {
            nulls.insert("ivom".into(), "no test rows to invert".into());
            None
        } else {
            let idx: Vec<usize> = (0..q).collect();
            let queries = test.x.select_rows(&idx);
            let init = model.inversion_init(&queries)?;
            let steps = opts.ivom_steps.unwrap_or(e.ivom_steps);
            let r = ivom(generator, &queries, &init, &InversionConfig { steps, lr: e.ivom_lr })?;
            let mean = r.best_mse.iter().sum::<f64>() / q as f64;
            Some(IvomSummary { queries: q, steps, lr: e.ivom_lr, median: r.median(), mean, per_query: r.best_mse })
        }
    } else {
        nulls.insert("ivom".into(), "generator has no prior modulation to invert".into());
        None
    };

    let gap = match &model.val {
        Some(v) if !v.is_empty() => finite(
            "overfit_gap",
            overfit_gap(&model.discriminator, &model.train.x, &v.x, &|_| Ok(None)).map_err(Into::into),
            &mut nulls,
        ),
        _ => {
            nulls.insert("overfit_gap".into(), "no validation split in the checkpoint".into());
            None
        }
    };

    let coverage = match &model.modes {
        Some((centers, sigma)) => {
            let c = mode_coverage(&samples, centers, *sigma, e.coverage_threshold_sigma, e.coverage_min_fraction)?;
            Some(CoverageSummary {
                modes: centers.len(),
                covered: c.covered,
                threshold_sigma: e.coverage_threshold_sigma,
                min_fraction: e.coverage_min_fraction,
                histogram: c.histogram,
                high_quality_fraction: c.high_quality,
            })
        }
        None => {
            nulls.insert("mode_coverage".into(), "target mode centers unknown for file data".into());
            None
        }
    };
    nulls.insert("wall_clock_seconds".into(), "omitted unless --timing is given, to keep reports reproducible".into());

    let config_hash = hex_digest(model.config.to_toml().as_bytes());
    Ok(MetricsReport {
        schema: "disp-metrics/1".into(),
        run_id: run_id(&config_hash, model.config.seed),
        config_hash,
        seed: opts.seed,
        step: model.step,
        snapshot: snapshot.into(),
        modulation: model.config.model.modulation,
        sampler,
        feature_space,
        n_train: model.train.len(),
        n_test: test.len(),
        n_samples,
        fid: fid_v,
        precision,
        recall,
        k_precision: kp,
        k_recall: kr,
        c_t,
        ct_cells,
        ivom: ivom_summary,
        overfit_gap: gap,
        mode_coverage: coverage,
        wall_clock_seconds: None,
        null_reasons: nulls,
    })
}

pub fn extractor_to_checkpoint(ck: &mut Checkpoint, section: &str, e: &FeatureExtractor) {
    ck.put_params(section, e.params());
    ck.set_meta(&format!("{section}.kind"), e.kind().as_str());
}

pub fn extractor_from_checkpoint(ck: &Checkpoint, section: &str) -> Result<FeatureExtractor> {
    let kind = ck.meta(&format!("{section}.kind")).ok_or_else(|| anyhow!("checkpoint has no `{section}` extractor"))?;
    let kind = ExtractorKind::parse(kind)?;
    let mut params = ParamSet::new();
    for (name, t) in ck.section(section).ok_or_else(|| anyhow!("checkpoint has no section `{section}`"))? {
        params.push(name.clone(), t.clone(), false);
    }
    Ok(FeatureExtractor::from_params(kind, params)?)
}

fn put_dataset(ck: &mut Checkpoint, name: &str, d: &Dataset) {
    ck.put_tensor("data", name, &d.x);
    if let Some(l) = &d.labels {
        let t = Tensor::matrix(1, l.len(), l.iter().map(|&v| v as f64).collect()).unwrap();
        ck.put_tensor("data", &format!("{name}.labels"), &t);
    }
}

fn get_dataset(ck: &Checkpoint, name: &str, split: Split) -> Result<Option<Dataset>> {
    let Ok(x) = ck.tensor("data", name) else { return Ok(None) };
    let labels = ck.tensor("data", &format!("{name}.labels")).ok().map(|t| t.data().iter().map(|&v| v as u32).collect());
    Ok(Some(Dataset::new(x.clone(), labels, split)?))
}

impl Model {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint { config: self.config.to_toml(), ..Default::default() };
        ck.set_meta("format", "disp-model");
        ck.set_meta("step", self.step);
        ck.set_meta("prior_dim", self.generator.spec().prior_dim);
        ck.put_params("generator", self.generator.params());
        ck.put_params("generator_ema", self.generator_ema.params());
        if let Some((step, f, g)) = &self.best {
            ck.put_params("generator_best", g.params());
            ck.set_meta("best_step", step);
            ck.set_meta("best_fid", format!("{f:e}"));
        }
        ck.put_params("discriminator", self.discriminator.params());
        if let Some(e) = &self.extractor {
            extractor_to_checkpoint(&mut ck, "extractor", e);
        }
        if let Some(e) = &self.eval_extractor {
            extractor_to_checkpoint(&mut ck, "eval_extractor", e);
        }
        if let Some(p) = &self.priors {
            ck.put_tensor("priors", "vectors", p.vectors());
            ck.set_meta("prior_hash", p.source_hash());
        }
        if let Some(t) = &self.table {
            ck.put_tensor("table", "rows", t.vectors());
        }
        put_dataset(&mut ck, "train", &self.train);
        if let Some(v) = &self.val {
            put_dataset(&mut ck, "val", v);
        }
        if let Some((centers, sigma)) = &self.modes {
            let t = Tensor::from_rows(centers).unwrap();
            ck.put_tensor("data", "mode_centers", &t);
            ck.set_meta("mode_sigma", format!("{sigma:e}"));
        }
        if let Some((g, space)) = &self.gmm {
            put_gmm(&mut ck, g, *space);
        }
        if let Some((a, b)) = &self.adam {
            for (name, state, params) in [("adam_g", a, self.generator.params()), ("adam_d", b, self.discriminator.params())] {
                ck.sections.insert(name.into(), state.export(params));
                ck.set_meta(&format!("{name}.config"), serde_json::to_string(&state.config).unwrap());
            }
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("format") != Some("disp-model") {
            bail!("checkpoint does not hold a trained model (format {:?})", ck.meta("format"));
        }
        let config = ExperimentConfig::from_toml(&ck.config)?;
        let prior_dim: usize = ck.meta("prior_dim").ok_or_else(|| anyhow!("missing prior_dim"))?.parse()?;
        let train = get_dataset(ck, "train", Split::TargetTrain)?.ok_or_else(|| anyhow!("checkpoint has no training data"))?;
        let val = get_dataset(ck, "val", Split::TargetVal)?;
        let p = train.dim();
        let mut rng = rng_for(0, 0);
        let mut build_gen = |section: &str| -> Result<Generator> {
            let mut g = Generator::new(config.model.generator_spec(p, prior_dim), &mut rng)?;
            ck.load_params(section, g.params_mut())?;
            Ok(g)
        };
        let generator = build_gen("generator")?;
        let generator_ema = build_gen("generator_ema")?;
        let best = if ck.has("generator_best") {
            let step = ck.meta("best_step").unwrap_or("0").parse()?;
            let f = ck.meta("best_fid").unwrap_or("NaN").parse()?;
            Some((step, f, build_gen("generator_best")?))
        } else {
            None
        };
        let mut discriminator = Discriminator::new(config.model.discriminator_spec(p, prior_dim), &mut rng)?;
        ck.load_params("discriminator", discriminator.params_mut())?;
        let extractor = ck.has("extractor").then(|| extractor_from_checkpoint(ck, "extractor")).transpose()?;
        let eval_extractor = ck.has("eval_extractor").then(|| extractor_from_checkpoint(ck, "eval_extractor")).transpose()?;
        let priors = match ck.tensor("priors", "vectors") {
            Ok(t) => Some(PriorSet::new(t.clone(), ck.meta("prior_hash").unwrap_or("").to_string())?),
            Err(_) => None,
        };
        let table = match ck.tensor("table", "rows") {
            Ok(t) => Some(PriorSet::new(t.clone(), "instance-table".into())?),
            Err(_) => None,
        };
        let modes = match (ck.tensor("data", "mode_centers"), ck.meta("mode_sigma")) {
            (Ok(t), Some(s)) => Some((t.iter_rows().map(<[f64]>::to_vec).collect(), s.parse()?)),
            _ => None,
        };
        let gmm = if ck.has("gmm") { Some(get_gmm(ck)?) } else { None };
        let adam = if ck.has("adam_g") && ck.has("adam_d") {
            let cfg = |name: &str| -> Result<disp_core::optim::AdamConfig> {
                Ok(serde_json::from_str(ck.meta(&format!("{name}.config")).ok_or_else(|| anyhow!("missing {name} config"))?)?)
            };
            Some((
                AdamState::import(generator.params(), cfg("adam_g")?, ck.section("adam_g").unwrap())?,
                AdamState::import(discriminator.params(), cfg("adam_d")?, ck.section("adam_d").unwrap())?,
            ))
        } else {
            None
        };
        let step = ck.meta("step").unwrap_or("0").parse()?;
        Ok(Self {
            config,
            generator,
            generator_ema,
            best,
            discriminator,
            extractor,
            eval_extractor,
            priors,
            table,
            train,
            val,
            modes,
            gmm,
            adam,
            step,
        })
    }
}

fn put_gmm(ck: &mut Checkpoint, g: &GmmModel, space: GmmSpace) {
    let k = g.k();
    ck.sections.remove("gmm");
    ck.put_tensor("gmm", "weights", &Tensor::matrix(1, k, g.weights.clone()).unwrap());
    ck.put_tensor("gmm", "means", &Tensor::matrix(k, g.dim, g.means.clone()).unwrap());
    ck.put_tensor("gmm", "covs", &Tensor::matrix(k, g.covs.len() / k, g.covs.clone()).unwrap());
    ck.put_tensor("gmm", "loglik_trace", &Tensor::matrix(1, g.loglik_trace.len(), g.loglik_trace.clone()).unwrap());
    ck.set_meta("gmm.covariance", serde_json::to_string(&g.kind).unwrap());
    ck.set_meta("gmm.space", serde_json::to_string(&space).unwrap());
    ck.set_meta("gmm.reseeds", g.reseeds);
}

fn get_gmm(ck: &Checkpoint) -> Result<(GmmModel, GmmSpace)> {
    let kind: CovarianceKind = serde_json::from_str(ck.meta("gmm.covariance").ok_or_else(|| anyhow!("missing gmm.covariance"))?)?;
    let space: GmmSpace = serde_json::from_str(ck.meta("gmm.space").ok_or_else(|| anyhow!("missing gmm.space"))?)?;
    let means = ck.tensor("gmm", "means")?;
    let g = GmmModel {
        kind,
        dim: means.cols(),
        weights: ck.tensor("gmm", "weights")?.data().to_vec(),
        means: means.data().to_vec(),
        covs: ck.tensor("gmm", "covs")?.data().to_vec(),
        loglik_trace: ck.tensor("gmm", "loglik_trace")?.data().to_vec(),
        reseeds: ck.meta("gmm.reseeds").unwrap_or("0").parse()?,
    };
    g.validate()?;
    Ok((g, space))
}
