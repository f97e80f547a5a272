//! Multi-run aggregation of training histories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::svg::{line_plot, BandPoint, Series};
use crate::UsageError;

/// One parsed history file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunHistory {
    pub path: PathBuf,
    pub label: String,
    pub seed: u64,
    pub n_target: usize,
    /// `(step, fid)` where a snapshot FID was recorded.
    pub fid: Vec<(usize, f64)>,
    pub gap: Vec<(usize, f64)>,
    pub coverage: Option<f64>,
    pub best_fid: Option<f64>,
}

pub fn parse_history(path: &Path, text: &str) -> Result<RunHistory> {
    let mut run: Option<RunHistory> = None;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).with_context(|| format!("{}:{}: invalid JSON", path.display(), i + 1))?;
        let kind = v.get("type").and_then(Value::as_str).unwrap_or("");
        if kind == "header" {
            run = Some(RunHistory {
                path: path.to_path_buf(),
                label: v.get("modulation").and_then(Value::as_str).unwrap_or("unknown").to_string(),
                seed: v.get("seed").and_then(Value::as_u64).unwrap_or(0),
                n_target: v.get("n_target").and_then(Value::as_u64).unwrap_or(0) as usize,
                fid: vec![],
                gap: vec![],
                coverage: None,
                best_fid: None,
            });
            continue;
        }
        let r = run.as_mut().ok_or_else(|| anyhow!("{}: first record must be the header", path.display()))?;
        match kind {
            "step" => {
                let step = v.get("step").and_then(Value::as_u64).ok_or_else(|| anyhow!("{}:{}: step record without `step`", path.display(), i + 1))? as usize;
                if let Some(f) = v.get("fid").and_then(Value::as_f64) {
                    r.fid.push((step, f));
                }
                if let Some(g) = v.get("gap").and_then(Value::as_f64) {
                    r.gap.push((step, g));
                }
            }
            "summary" => {
                r.coverage = v.get("coverage").and_then(Value::as_f64);
                r.best_fid = v.get("best_fid").and_then(Value::as_f64);
            }
            other => bail!("{}:{}: unknown record type `{other}`", path.display(), i + 1),
        }
    }
    run.ok_or_else(|| anyhow!("{}: no header record", path.display()))
}

/// Linear-interpolation quantile of unsorted finite values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub group: String,
    pub x: usize,
    pub runs: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

fn summarize(group: &str, x: usize, vals: &[f64]) -> Row {
    Row { group: group.into(), x, runs: vals.len(), median: quantile(vals, 0.5), q1: quantile(vals, 0.25), q3: quantile(vals, 0.75) }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub runs: Vec<String>,
    pub fid_vs_step: Vec<Row>,
    pub gap_vs_step: Vec<Row>,
    pub coverage_vs_budget: Vec<Row>,
    pub best_fid_vs_budget: Vec<Row>,
}

fn per_step(runs: &[RunHistory], pick: impl Fn(&RunHistory) -> &[(usize, f64)]) -> Vec<Row> {
    let mut m: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for r in runs {
        let group = format!("{} n={}", r.label, r.n_target);
        for &(s, v) in pick(r) {
            m.entry((group.clone(), s)).or_default().push(v);
        }
    }
    m.iter().map(|((g, s), v)| summarize(g, *s, v)).collect()
}

fn per_budget(runs: &[RunHistory], pick: impl Fn(&RunHistory) -> Option<f64>) -> Vec<Row> {
    let mut m: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for r in runs {
        if let Some(v) = pick(r) {
            m.entry((r.label.clone(), r.n_target)).or_default().push(v);
        }
    }
    m.iter().map(|((g, n), v)| summarize(g, *n, v)).collect()
}

pub fn aggregate(runs: &[RunHistory]) -> Aggregate {
    Aggregate {
        runs: runs.iter().map(|r| r.path.display().to_string()).collect(),
        fid_vs_step: per_step(runs, |r| &r.fid),
        gap_vs_step: per_step(runs, |r| &r.gap),
        coverage_vs_budget: per_budget(runs, |r| r.coverage),
        best_fid_vs_budget: per_budget(runs, |r| r.best_fid),
    }
}

fn series(rows: &[Row]) -> Vec<Series> {
    let mut m: BTreeMap<&str, Vec<BandPoint>> = BTreeMap::new();
    for r in rows {
        m.entry(&r.group).or_default().push(BandPoint { x: r.x as f64, median: r.median, q1: r.q1, q3: r.q3 });
    }
    m.into_iter().map(|(name, points)| Series { name: name.into(), points }).collect()
}

fn table(title: &str, xname: &str, rows: &[Row]) -> String {
    let mut s = format!("## {title}\n\n| group | {xname} | runs | median | q1 | q3 |\n|---|---|---|---|---|---|\n");
    for r in rows {
        s.push_str(&format!("| {} | {} | {} | {:.6} | {:.6} | {:.6} |\n", r.group, r.x, r.runs, r.median, r.q1, r.q3));
    }
    s.push('\n');
    s
}

/// Reads every history matching `pattern` and writes `summary.md`,
/// `summary.json` and three SVG plots into `out`.
pub fn run(pattern: &str, out: &Path) -> Result<()> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| UsageError(format!("bad --histories pattern: {e}")))?
        .collect::<std::result::Result<_, _>>()?;
    paths.sort();
    if paths.is_empty() {
        return Err(UsageError(format!("no history files match `{pattern}`")).into());
    }
    let mut runs = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        runs.push(parse_history(p, &text)?);
    }
    let agg = aggregate(&runs);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut md = format!("# Run summary\n\n{} histories.\n\n", runs.len());
    md.push_str(&table("Snapshot FID by step", "step", &agg.fid_vs_step));
    md.push_str(&table("Train/validation score gap by step", "step", &agg.gap_vs_step));
    md.push_str(&table("Mode coverage by training-set size", "n_target", &agg.coverage_vs_budget));
    md.push_str(&table("Best snapshot FID by training-set size", "n_target", &agg.best_fid_vs_budget));
    std::fs::write(out.join("summary.md"), md)?;
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&agg)? + "\n")?;
    std::fs::write(out.join("fid_vs_step.svg"), line_plot("Snapshot FID", "step", "FID", &series(&agg.fid_vs_step)))?;
    std::fs::write(out.join("gap_vs_step.svg"), line_plot("Discriminator train − validation score", "step", "gap", &series(&agg.gap_vs_step)))?;
    std::fs::write(
        out.join("coverage_vs_budget.svg"),
        line_plot("Mode coverage", "training samples", "modes covered", &series(&agg.coverage_vs_budget)),
    )?;
    println!("aggregated {} histories into {}", runs.len(), out.display());
    Ok(())
}
