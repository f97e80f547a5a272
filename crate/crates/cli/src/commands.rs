//! Subcommand definitions and handlers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use disp_core::data::{make_transfer, read_dataset, write_dataset, Dataset, Split};
use disp_core::metrics::{ivom, mode_coverage, InversionConfig};
use disp_core::nets::{pretrain_extractor, ExtractorKind, ExtractorSpec};
use disp_core::prior::CovarianceKind;
use disp_core::seed::derive_seed;
use disp_core::train::TrainHistory;
use serde::Serialize;
use serde_json::json;

use crate::checkpoint::Checkpoint;
use crate::config::{DataKind, ExperimentConfig, GmmSpace, SamplerKind};
use crate::pipeline::{self, extractor_to_checkpoint, hex_digest, run_id, streams, EvalOptions, Model};
use crate::report;
use crate::UsageError;

#[derive(Parser, Debug)]
#[command(name = "disp", version, about = "Few-shot GAN training with data-instance priors")]
pub struct Cli {
    /// Log verbosity (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train and freeze a feature extractor on a labeled source dataset.
    PretrainExtractor(PretrainArgs),
    /// Train a generator/discriminator pair from a config file.
    Train(TrainArgs),
    /// Draw samples from a trained checkpoint.
    Sample(SampleArgs),
    /// Fit a Gaussian mixture over the checkpoint's prior set.
    FitGmm(FitGmmArgs),
    /// Compute the metric report for a checkpoint.
    Eval(EvalArgs),
    /// Invert query points through the generator.
    Invert(InvertArgs),
    /// Aggregate training histories into tables and plots.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Pretext,
    Random,
    Identity,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "pretext")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional config whose `[extractor]` section supplies the hyperparameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Overrides `[train] steps`.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Overrides the top-level `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SnapshotArg {
    Best,
    Final,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerArg>,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub snapshot: Option<SnapshotArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SamplerArg {
    Vicinal,
    Gmm,
    Table,
}

impl From<SamplerArg> for SamplerKind {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Vicinal => SamplerKind::Vicinal,
            SamplerArg::Gmm => SamplerKind::Gmm,
            SamplerArg::Table => SamplerKind::Table,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CovArg {
    Diagonal,
    Full,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SpaceArg {
    Raw,
    Embedded,
}

#[derive(Args, Debug)]
pub struct FitGmmArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Number of components; defaults to `[eval] gmm_k`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub subset: Option<usize>,
    #[arg(long, value_enum)]
    pub covariance: Option<CovArg>,
    #[arg(long, value_enum)]
    pub space: Option<SpaceArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output checkpoint; the input is updated in place when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Test dataset; ring configs regenerate their test split when omitted.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerArg>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub ivom_steps: Option<usize>,
    /// Record wall-clock time in the report (makes it non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug)]
pub struct InvertArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub snapshot: Option<SnapshotArg>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Glob matching history JSON-lines files.
    #[arg(long)]
    pub histories: String,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::PretrainExtractor(a) => cmd_pretrain(a),
        Command::Train(a) => cmd_train(a),
        Command::Sample(a) => cmd_sample(a),
        Command::FitGmm(a) => cmd_fit_gmm(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Invert(a) => cmd_invert(a),
        Command::Report(a) => report::run(&a.histories, &a.out),
    }
}

fn read_input(path: &Path) -> Result<Dataset> {
    if !path.exists() {
        return Err(UsageError(format!("no such file: {}", path.display())).into());
    }
    read_dataset(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<Model> {
    if !path.exists() {
        return Err(UsageError(format!("no such checkpoint: {}", path.display())).into());
    }
    Model::from_checkpoint(&Checkpoint::load(path)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn prefer_best(model: &Model, snap: Option<SnapshotArg>) -> bool {
    match snap {
        Some(SnapshotArg::Best) => true,
        Some(SnapshotArg::Final) => false,
        None => model.config.eval.use_best_snapshot,
    }
}

fn cmd_pretrain(a: PretrainArgs) -> Result<()> {
    let source = read_input(&a.source)?;
    let mut spec = match &a.config {
        Some(p) => ExperimentConfig::load(p)?.extractor.spec(),
        None => ExtractorSpec::default(),
    };
    spec.kind = match a.mode {
        ModeArg::Pretext => ExtractorKind::PretextClassifier,
        ModeArg::Random => ExtractorKind::RandomFrozen,
        ModeArg::Identity => ExtractorKind::IdentityWhitened,
    };
    if let Some(e) = a.epochs {
        spec.epochs = e;
    }
    let (ext, rep) = pretrain_extractor(&source, &spec, derive_seed(a.seed, streams::EXTRACTOR))?;
    let mut ck = Checkpoint::default();
    ck.set_meta("format", "disp-extractor");
    ck.set_meta("seed", a.seed);
    extractor_to_checkpoint(&mut ck, "extractor", &ext);
    ck.save(&a.out)?;
    match rep.train_accuracy {
        Some(acc) => {
            print!("source accuracy {acc:.4}");
            if let Some(v) = rep.val_accuracy {
                print!(" (held-out {v:.4})");
            }
            println!();
        }
        None => println!("{} extractor built without training", ext.kind().as_str()),
    }
    Ok(())
}

#[derive(Serialize)]
struct HistoryHeader<'a> {
    r#type: &'static str,
    run_id: String,
    config_hash: String,
    seed: u64,
    modulation: disp_core::nets::Modulation,
    n_target: usize,
    steps: usize,
    config: &'a str,
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(s) = a.steps {
        cfg.train.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let run = pipeline::train_experiment(&cfg)?;
    if let Some(rep) = &run.extractor_report {
        if let Some(acc) = rep.train_accuracy {
            log::info!("extractor source accuracy {acc:.4}");
        }
    }
    run.model.to_checkpoint().save(&a.out)?;
    if let Some(path) = &a.history {
        write_history(path, &run.model, &run.history)?;
    }
    let last = run.history.last();
    println!(
        "trained {} steps; final loss_d {} loss_g {}",
        run.model.step,
        last.map_or("n/a".into(), |r| format!("{:.4}", r.loss_d)),
        last.map_or("n/a".into(), |r| format!("{:.4}", r.loss_g)),
    );
    Ok(())
}

/// Header line, one line per logged step, then a summary line.
pub fn write_history(path: &Path, model: &Model, history: &TrainHistory) -> Result<()> {
    let cfg = &model.config;
    let toml = cfg.to_toml();
    let config_hash = hex_digest(toml.as_bytes());
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    let header = HistoryHeader {
        r#type: "header",
        run_id: run_id(&config_hash, cfg.seed),
        config_hash,
        seed: cfg.seed,
        modulation: cfg.model.modulation,
        n_target: model.train.len(),
        steps: cfg.train.steps,
        config: &toml,
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for r in &history.records {
        let mut v = serde_json::to_value(r)?;
        v.as_object_mut().unwrap().insert("type".into(), json!("step"));
        writeln!(w, "{}", serde_json::to_string(&v)?)?;
    }
    // End-of-training mode coverage of the inference generator, when modes are known.
    let coverage = match &model.modes {
        Some((centers, sigma)) => {
            let (g, _) = model.inference_generator(cfg.eval.use_best_snapshot);
            let x = model.sample(g, model.default_sampler(), cfg.eval.samples, derive_seed(cfg.seed, streams::SAMPLE))?;
            let c = mode_coverage(&x, centers, *sigma, cfg.eval.coverage_threshold_sigma, cfg.eval.coverage_min_fraction)?;
            Some(c.covered)
        }
        None => None,
    };
    let summary = json!({
        "type": "summary",
        "final_step": model.step,
        "best_step": model.best.as_ref().map(|b| b.0),
        "best_fid": model.best.as_ref().map(|b| b.1),
        "coverage": coverage,
        "modes": model.modes.as_ref().map(|m| m.0.len()),
    });
    writeln!(w, "{}", serde_json::to_string(&summary)?)?;
    w.flush()?;
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    let sampler = a.sampler.map(Into::into).unwrap_or_else(|| model.default_sampler());
    let (g, _) = model.inference_generator(prefer_best(&model, a.snapshot));
    let x = model.sample(g, sampler, a.n, derive_seed(a.seed, streams::SAMPLE))?;
    let d = Dataset::new(x, None, Split::Unspecified)?;
    write_dataset(&a.out, &d)?;
    println!("wrote {} samples to {}", a.n, a.out.display());
    Ok(())
}

fn cmd_fit_gmm(a: FitGmmArgs) -> Result<()> {
    let mut model = load_model(&a.ckpt)?;
    let e = model.config.eval.clone();
    let k = a.k.unwrap_or(e.gmm_k);
    let n = model.priors.as_ref().or(model.table.as_ref()).map_or(0, |p| p.len());
    let pool = a.subset.map_or(n, |m| m.min(n));
    if k == 0 || k > pool {
        return Err(UsageError(format!("--k {k} must be between 1 and the number of fitted priors ({pool})")).into());
    }
    let covariance = match a.covariance {
        Some(CovArg::Diagonal) => CovarianceKind::Diagonal,
        Some(CovArg::Full) => CovarianceKind::Full,
        None => e.gmm_covariance,
    };
    let space = match a.space {
        Some(SpaceArg::Raw) => GmmSpace::Raw,
        Some(SpaceArg::Embedded) => GmmSpace::Embedded,
        None => e.gmm_space,
    };
    model.fit_gmm(k, a.subset.or(e.gmm_subset), covariance, space, derive_seed(a.seed, streams::GMM))?;
    let out = a.out.as_ref().unwrap_or(&a.ckpt);
    model.to_checkpoint().save(out)?;
    let (g, _) = model.gmm.as_ref().unwrap();
    println!(
        "fitted {k}-component GMM in {} iterations (final log-likelihood {:.6}); saved to {}",
        g.loglik_trace.len(),
        g.loglik_trace.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn test_split(model: &Model, path: Option<&Path>) -> Result<Dataset> {
    match path {
        Some(p) => read_input(p),
        None if model.config.data.kind == DataKind::Ring => {
            Ok(make_transfer(&model.config.data.protocol(), model.config.seed)?.test)
        }
        None => Err(UsageError("--test is required for file-based configs".into()).into()),
    }
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    let test = test_split(&model, a.test.as_deref())?;
    let start = std::time::Instant::now();
    let opts = EvalOptions { seed: a.seed, sampler: a.sampler.map(Into::into), samples: a.samples, ivom_steps: a.ivom_steps };
    let mut report = pipeline::evaluate(&model, &test, &opts)?;
    if a.timing {
        report.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
        report.null_reasons.remove("wall_clock_seconds");
    }
    write_json(&a.report, &report)?;
    let show = |v: Option<f64>| v.map_or("null".to_string(), |x| format!("{x:.5}"));
    println!(
        "fid {} precision {} recall {} c_t {} gap {}",
        show(report.fid),
        show(report.precision),
        show(report.recall),
        show(report.c_t),
        show(report.overfit_gap)
    );
    Ok(())
}

#[derive(Serialize)]
struct InvertReport {
    schema: &'static str,
    snapshot: String,
    queries: usize,
    steps: usize,
    lr: f64,
    median: f64,
    mean: f64,
    best_mse: Vec<f64>,
    initial_mse: Vec<f64>,
}

fn cmd_invert(a: InvertArgs) -> Result<()> {
    let model = load_model(&a.ckpt)?;
    let queries = read_input(&a.queries)?;
    if queries.dim() != model.train.dim() {
        bail!("query width {} does not match the model's {}", queries.dim(), model.train.dim());
    }
    if queries.is_empty() {
        return Err(anyhow!("query file holds no rows"));
    }
    let (g, snapshot) = model.inference_generator(prefer_best(&model, a.snapshot));
    let cfg = InversionConfig {
        steps: a.steps.unwrap_or(model.config.eval.ivom_steps),
        lr: a.lr.unwrap_or(model.config.eval.ivom_lr),
    };
    let init = model.inversion_init(&queries.x)?;
    let r = ivom(g, &queries.x, &init, &cfg)?;
    let mean = r.best_mse.iter().sum::<f64>() / r.best_mse.len() as f64;
    let rep = InvertReport {
        schema: "disp-invert/1",
        snapshot: snapshot.into(),
        queries: queries.len(),
        steps: cfg.steps,
        lr: cfg.lr,
        median: r.median(),
        mean,
        best_mse: r.best_mse.clone(),
        initial_mse: r.initial_mse.clone(),
    };
    write_json(&a.report, &rep)?;
    println!("IvOM median {:.6} mean {:.6} over {} queries", rep.median, mean, rep.queries);
    Ok(())
}
