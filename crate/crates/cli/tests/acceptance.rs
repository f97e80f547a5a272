//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 1-5, 11 and 12 are exact checks and fail the target. Criteria
//! 6-10 are directional desk-scale reproductions; their outcome is reported
//! but does not abort the run.
//!
//! `DISP_ACCEPTANCE_QUICK=1` skips the long training experiments (6-11).

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use disp_cli::config::ExperimentConfig;
use disp_cli::pipeline::{self, EvalOptions, MetricsReport, Splits};
use disp_core::data::{make_transfer, write_dataset};
use disp_core::metrics::{ct_statistic, fid, fid_from_stats, mann_whitney, precision_recall};
use disp_core::nets::Modulation;
use disp_core::prior::{gmm_fit, CovarianceKind, GmmConfig, PriorSet};
use disp_core::tape::{Tape, Var};
use disp_core::tensor::Tensor;
use disp_core::train::LossVariant;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    id: u32,
    pass: bool,
    fatal: bool,
    line: String,
}

fn report(out: &mut Vec<Outcome>, id: u32, fatal: bool, pass: bool, line: String) {
    println!("[{}] {id:>2}. {line}", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().flush();
    out.push(Outcome { id, pass, fatal, line });
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------- 1. gradients

fn graph_value(leaves: &[Vec<f64>], ops: &[usize], head: usize, u: &[f64], grad: bool) -> (f64, Vec<Vec<f64>>) {
    const SHAPES: [(usize, usize); 5] = [(4, 3), (3, 5), (5, 5), (1, 5), (4, 5)];
    let mut t = Tape::new();
    let v: Vec<Var> = SHAPES.iter().zip(leaves).map(|(&(m, n), x)| t.leaf(m, n, x.clone(), grad).unwrap()).collect();
    let mut h = t.matmul(v[0], v[1]).unwrap();
    for &op in ops {
        h = match op {
            0 => t.add_row(h, v[3]).unwrap(),
            1 => t.mul(h, v[4]).unwrap(),
            2 => t.tanh(h).unwrap(),
            3 => t.leaky_relu(h, 0.2).unwrap(),
            4 => t.softplus(h).unwrap(),
            5 => t.matmul(h, v[2]).unwrap(),
            6 => t.modulate(h, v[4], h).unwrap(),
            7 => t.batch_standardize(h, 1e-5).unwrap().0,
            8 => {
                let s = t.spectral_norm(v[2], u).unwrap();
                t.matmul(h, s).unwrap()
            }
            _ => {
                let a = t.slice_cols(h, 0, 3).unwrap();
                let b = t.slice_cols(h, 3, 5).unwrap();
                t.concat(&[b, a]).unwrap()
            }
        };
    }
    let root = match head {
        0 => t.mean(h).unwrap(),
        1 => {
            let d = t.row_dot(h, v[4]).unwrap();
            let s = t.hinge(d, -1.0).unwrap();
            t.sum(s).unwrap()
        }
        2 => t.cross_entropy(h, &[1, 0, 3, 4]).unwrap(),
        _ => t.mse(h, &[0.1; 20]).unwrap(),
    };
    let f = t.scalar(root);
    if !grad {
        return (f, vec![]);
    }
    let g = t.backward(root).unwrap();
    (f, v.iter().zip(leaves).map(|(&l, x)| g.get(l).map_or(vec![0.0; x.len()], <[f64]>::to_vec)).collect())
}

fn c1_gradients(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let graphs = 25;
    let h = 1e-5;
    for _ in 0..graphs {
        let ops: Vec<usize> = (0..rng.random_range(3..8)).map(|_| rng.random_range(0..10)).collect();
        let head = rng.random_range(0..4);
        let u: Vec<f64> = (0..5).map(|_| normal(&mut rng)).collect();
        let leaves: Vec<Vec<f64>> =
            [12, 15, 25, 5, 20].iter().map(|&n| (0..n).map(|_| rng.random_range(-0.9..0.9)).collect()).collect();
        let (_, analytic) = graph_value(&leaves, &ops, head, &u, true);
        for li in 0..leaves.len() {
            for k in 0..leaves[li].len() {
                let mut p = leaves.clone();
                p[li][k] += h;
                let mut m = leaves.clone();
                m[li][k] -= h;
                let num = (graph_value(&p, &ops, head, &u, false).0 - graph_value(&m, &ops, head, &u, false).0) / (2.0 * h);
                let a = analytic[li][k];
                worst = worst.max((a - num).abs() / a.abs().max(num.abs()).max(1e-6));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        out,
        1,
        true,
        worst < 1e-4 && secs < 10.0,
        format!("gradient oracle: {graphs} random graphs, worst relative error {worst:.2e} (tol 1e-4), {secs:.2}s (limit 10s)"),
    );
}

// ---------------------------------------------------------------- 2. FID

/// Cholesky factor, used to form `LᵀBL`, which shares its spectrum with `AB`.
fn chol(a: &[f64], n: usize) -> Vec<f64> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            l[i * n + j] = if i == j { (a[i * n + i] - s).sqrt() } else { (a[i * n + j] - s) / l[j * n + j] };
        }
    }
    l
}

fn mm(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                c[i * n + j] += a[i * n + k] * b[k * n + j];
            }
        }
    }
    c
}

fn transpose(a: &[f64], n: usize) -> Vec<f64> {
    (0..n * n).map(|idx| a[(idx % n) * n + idx / n]).collect()
}

fn inverse(a: &[f64], n: usize) -> Vec<f64> {
    // Gauss-Jordan with partial pivoting.
    let mut m = a.to_vec();
    let mut inv: Vec<f64> = (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x * n + c].abs().total_cmp(&m[y * n + c].abs())).unwrap();
        for j in 0..n {
            m.swap(c * n + j, p * n + j);
            inv.swap(c * n + j, p * n + j);
        }
        let d = m[c * n + c];
        for j in 0..n {
            m[c * n + j] /= d;
            inv[c * n + j] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r * n + c];
                for j in 0..n {
                    m[r * n + j] -= f * m[c * n + j];
                    inv[r * n + j] -= f * inv[c * n + j];
                }
            }
        }
    }
    inv
}

/// Trace of the principal square root of an SPD matrix by Denman-Beavers iteration.
fn trace_sqrt_db(a: &[f64], n: usize) -> f64 {
    let mut y = a.to_vec();
    let mut z: Vec<f64> = (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect();
    for _ in 0..100 {
        let (yi, zi) = (inverse(&y, n), inverse(&z, n));
        let ny: Vec<f64> = y.iter().zip(&zi).map(|(a, b)| 0.5 * (a + b)).collect();
        let nz: Vec<f64> = z.iter().zip(&yi).map(|(a, b)| 0.5 * (a + b)).collect();
        let delta: f64 = ny.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum();
        y = ny;
        z = nz;
        if delta < 1e-15 {
            break;
        }
    }
    (0..n).map(|i| y[i * n + i]).sum()
}

fn fid_oracle(mu_a: &[f64], ca: &[f64], mu_b: &[f64], cb: &[f64], n: usize) -> f64 {
    let l = chol(ca, n);
    let m = mm(&mm(&transpose(&l, n), cb, n), &l, n);
    let mean: f64 = mu_a.iter().zip(mu_b).map(|(a, b)| (a - b).powi(2)).sum();
    let tr = |c: &[f64]| (0..n).map(|i| c[i * n + i]).sum::<f64>();
    mean + tr(ca) + tr(cb) - 2.0 * trace_sqrt_db(&m, n)
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let x: Vec<f64> = (0..n * n).map(|_| normal(rng)).collect();
    let mut a = mm(&x, &transpose(&x, n), n);
    for i in 0..n {
        a[i * n + i] += 0.1;
    }
    a
}

fn c2_fid(out: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cloud = Tensor::matrix(50, 3, (0..150).map(|_| normal(&mut rng)).collect()).unwrap();
    let same = fid(&cloud, &cloud).unwrap();
    let one_d = fid_from_stats(&[0.0], &[1.0], &[1.0], &[1.0]).unwrap();
    let diag = fid_from_stats(&[0.0, 0.0], &[1.0, 0.0, 0.0, 4.0], &[0.0, 0.0], &[4.0, 0.0, 0.0, 1.0]).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let (ca, cb) = (random_spd(&mut rng, 4), random_spd(&mut rng, 4));
        let mu_a: Vec<f64> = (0..4).map(|_| normal(&mut rng)).collect();
        let mu_b: Vec<f64> = (0..4).map(|_| normal(&mut rng)).collect();
        let got = fid_from_stats(&mu_a, &ca, &mu_b, &cb).unwrap();
        worst = worst.max((got - fid_oracle(&mu_a, &ca, &mu_b, &cb, 4)).abs());
    }
    let pass = same < 1e-9 && (one_d - 1.0).abs() < 1e-9 && (diag - 2.0).abs() < 1e-9 && worst < 1e-6;
    report(
        out,
        2,
        true,
        pass,
        format!(
            "FID oracle: identical {same:.1e}, 1-D {one_d:.12}, diagonal {diag:.12}, 5 random q=4 cases max |Δ| {worst:.1e} vs Denman-Beavers (tol 1e-6)"
        ),
    );
}

// ---------------------------------------------------------------- 3. precision/recall

fn brute_pr(real: &[Vec<f64>], fake: &[Vec<f64>], kp: usize, kr: usize) -> (f64, f64) {
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let radii = |c: &[Vec<f64>], k: usize| -> Vec<f64> {
        (0..c.len())
            .map(|i| {
                let mut d: Vec<f64> = (0..c.len()).filter(|&j| j != i).map(|j| d2(&c[i], &c[j])).collect();
                d.sort_by(f64::total_cmp);
                d[k - 1]
            })
            .collect()
    };
    let inside = |cloud: &[Vec<f64>], r: &[f64], pts: &[Vec<f64>]| {
        pts.iter().filter(|p| cloud.iter().zip(r).any(|(c, &rr)| d2(p, c) <= rr)).count() as f64 / pts.len() as f64
    };
    let (rr, rf) = (radii(real, kp), radii(fake, kr));
    (inside(real, &rr, fake), inside(fake, &rf, real))
}

fn c3_pr(out: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for case in 0..10 {
        let q = rng.random_range(1..=8);
        let (n, m) = (rng.random_range(8..=64), rng.random_range(8..=64));
        let shift = 0.3 * case as f64;
        let real: Vec<Vec<f64>> = (0..n).map(|_| (0..q).map(|_| normal(&mut rng)).collect()).collect();
        let fake: Vec<Vec<f64>> = (0..m).map(|_| (0..q).map(|_| normal(&mut rng) + shift).collect()).collect();
        let (kp, kr) = (rng.random_range(1..n.min(m).min(11)), rng.random_range(1..n.min(m).min(11)));
        let got = precision_recall(&Tensor::from_rows(&real).unwrap(), &Tensor::from_rows(&fake).unwrap(), kp, kr).unwrap();
        if got != brute_pr(&real, &fake, kp, kr) {
            mismatches += 1;
        }
    }
    report(out, 3, true, mismatches == 0, format!("precision/recall vs O(n²) brute force: {mismatches}/10 mismatches (exact equality)"));
}

// ---------------------------------------------------------------- 4. Mann-Whitney

fn c4_mann_whitney(out: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    let mut worst_anti: f64 = 0.0;
    for case in 0..10 {
        let (m, n) = (rng.random_range(1..=30), rng.random_range(1..=30));
        let ties = case % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| if ties { rng.random_range(0..6) as f64 } else { normal(rng) };
        let a: Vec<f64> = (0..m).map(|_| draw(&mut rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let brute: f64 = a
            .iter()
            .flat_map(|x| b.iter().map(move |y| if x < y { 1.0 } else if x == y { 0.5 } else { 0.0 }))
            .sum();
        let ab = mann_whitney(&a, &b).unwrap();
        let ba = mann_whitney(&b, &a).unwrap();
        if ab.u != brute {
            mismatches += 1;
        }
        worst_anti = worst_anti.max((ab.z + ba.z).abs());
    }
    report(
        out,
        4,
        true,
        mismatches == 0 && worst_anti <= 1e-12,
        format!("Mann-Whitney U vs pair counting: {mismatches}/10 mismatches; max |z(a,b)+z(b,a)| {worst_anti:.1e} (tol 1e-12)"),
    );
}

// ---------------------------------------------------------------- 5. GMM

fn c5_gmm(out: &mut Vec<Outcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut monotone = true;
    for seed in 0..5 {
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let c = [(-1.0, 0.0), (1.0, 1.0), (0.0, -1.5)][i % 3];
                vec![c.0 + 0.4 * normal(&mut rng), c.1 + 0.4 * normal(&mut rng)]
            })
            .collect();
        let p = PriorSet::new(Tensor::from_rows(&rows).unwrap(), String::new()).unwrap();
        for covariance in [CovarianceKind::Diagonal, CovarianceKind::Full] {
            let g = gmm_fit(&p, &GmmConfig { k: 4, covariance, seed, ..GmmConfig::default() }).unwrap();
            monotone &= g.loglik_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9);
        }
    }

    let rows: Vec<Vec<f64>> = (0..300).map(|_| vec![2.0 + normal(&mut rng), -1.0 + 0.5 * normal(&mut rng), 3.0 * normal(&mut rng)]).collect();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..3).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let var: Vec<f64> = (0..3).map(|j| rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).collect();
    let p = PriorSet::new(Tensor::from_rows(&rows).unwrap(), String::new()).unwrap();
    let g1 = gmm_fit(&p, &GmmConfig { k: 1, ..GmmConfig::default() }).unwrap();
    let moment_err = g1.means.iter().zip(&mean).chain(g1.covs.iter().zip(&var)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let truth = [[-2.0, 0.0], [2.0, 1.0]];
    let rows: Vec<Vec<f64>> = (0..400).map(|i| truth[i % 2].iter().map(|c| c + 0.3 * normal(&mut rng)).collect()).collect();
    let p = PriorSet::new(Tensor::from_rows(&rows).unwrap(), String::new()).unwrap();
    let g2 = gmm_fit(&p, &GmmConfig { k: 2, seed: 7, ..GmmConfig::default() }).unwrap();
    let mut means: Vec<&[f64]> = (0..2).map(|c| g2.mean(c)).collect();
    means.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let recovery = means.iter().zip(&truth).flat_map(|(m, t)| m.iter().zip(t).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);

    report(
        out,
        5,
        true,
        monotone && moment_err < 1e-10 && recovery < 0.1,
        format!("GMM: EM log-likelihood monotone on 5 seeds = {monotone}; K=1 vs moments max |Δ| {moment_err:.1e} (tol 1e-10); two-cluster mean error {recovery:.3} (tol 0.1)"),
    );
}

// ---------------------------------------------------------------- training experiments

struct RunResult {
    report: MetricsReport,
    secs: f64,
    splits: Splits,
}

fn base_config(modulation: Modulation, seed: u64, n_target: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { seed, ..ExperimentConfig::default() };
    cfg.model.modulation = modulation;
    cfg.data.n_target = n_target;
    cfg
}

fn run(cfg: &ExperimentConfig) -> RunResult {
    let start = Instant::now();
    let trained = pipeline::train_experiment(cfg).expect("training failed");
    let test = trained.splits.test.clone().unwrap();
    let opts = EvalOptions { seed: cfg.seed, sampler: None, samples: None, ivom_steps: None };
    let report = pipeline::evaluate(&trained.model, &test, &opts).expect("evaluation failed");
    RunResult { report, secs: start.elapsed().as_secs_f64(), splits: trained.splits }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

const SEEDS6: [u64; 5] = [0, 1, 2, 3, 4];

fn experiments(out: &mut Vec<Outcome>) {
    // Experiment 6: both models on 5 seeds.
    let mut disp = Vec::new();
    let mut base = Vec::new();
    for &s in &SEEDS6 {
        let d = run(&base_config(Modulation::Prior, s, 128));
        let b = run(&base_config(Modulation::PerInstanceEmbedding, s, 128));
        println!(
            "       seed {s}: DISP fid {:.4} cov {} gap {:+.4} ivom {:.2e} c_t {:+.2} ({:.0}s) | baseline fid {:.4} cov {} gap {:+.4} ivom {:.2e} ({:.0}s)",
            d.report.fid.unwrap_or(f64::NAN),
            d.report.mode_coverage.as_ref().unwrap().covered,
            d.report.overfit_gap.unwrap_or(f64::NAN),
            d.report.ivom.as_ref().unwrap().median,
            d.report.c_t.unwrap_or(f64::NAN),
            d.secs,
            b.report.fid.unwrap_or(f64::NAN),
            b.report.mode_coverage.as_ref().unwrap().covered,
            b.report.overfit_gap.unwrap_or(f64::NAN),
            b.report.ivom.as_ref().unwrap().median,
            b.secs,
        );
        disp.push(d);
        base.push(b);
    }
    let field = |rs: &[RunResult], f: &dyn Fn(&MetricsReport) -> Option<f64>| -> Vec<f64> {
        rs.iter().map(|r| f(&r.report).unwrap_or(f64::NAN)).collect()
    };
    let cov = |r: &MetricsReport| r.mode_coverage.as_ref().map(|c| c.covered as f64);
    let (dc, bc) = (field(&disp, &cov), field(&base, &cov));
    let (df, bf) = (field(&disp, &|r| r.fid), field(&base, &|r| r.fid));
    let max_secs = disp.iter().chain(&base).map(|r| r.secs).fold(0.0, f64::max);
    report(
        out,
        6,
        false,
        median(&dc) >= 7.0 && median(&dc) >= median(&bc) && median(&df) <= median(&bf) && max_secs < 600.0,
        format!(
            "mode coverage transfer (n=128, 5 seeds): DISP coverage median {} (≥7) vs baseline {}; test FID median {:.4} vs {:.4}; slowest run {max_secs:.0}s (<600s)",
            median(&dc),
            median(&bc),
            median(&df),
            median(&bf)
        ),
    );

    let (dg, bg) = (field(&disp, &|r| r.overfit_gap.map(f64::abs)), field(&base, &|r| r.overfit_gap.map(f64::abs)));
    report(
        out,
        7,
        false,
        median(&bg) > median(&dg),
        format!("overfit gap: median |gap| baseline {:.4} > DISP {:.4} [baseline {}; DISP {}]", median(&bg), median(&dg), fmt_list(&bg), fmt_list(&dg)),
    );

    let ivom_med = |r: &MetricsReport| r.ivom.as_ref().map(|i| i.median);
    let (di, bi) = (field(&disp, &ivom_med), field(&base, &ivom_med));
    report(
        out,
        8,
        false,
        median(&di) < median(&bi),
        format!(
            "IvOM on 32 held-out points: median DISP {:.2e} < baseline {:.2e} [DISP {}; baseline {}]",
            median(&di),
            median(&bi),
            di.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(", "),
            bi.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    );

    let mut copier = Vec::new();
    for (r, &s) in disp.iter().zip(&SEEDS6) {
        let train = &r.splits.train.x;
        let mut rng = ChaCha8Rng::seed_from_u64(900 + s);
        let idx: Vec<usize> = (0..1000).map(|_| rng.random_range(0..train.rows())).collect();
        let gen = train.select_rows(&idx);
        copier.push(ct_statistic(train, &r.splits.test.as_ref().unwrap().x, &gen, None, s).unwrap().c_t);
    }
    let dct = field(&disp, &|r| r.c_t);
    report(
        out,
        9,
        false,
        median(&copier) < -2.0 && median(&dct) > -2.0,
        format!("C_T: copier median {:.2} (< -2); DISP median {:.2} (> -2) [DISP {}]", median(&copier), median(&dct), fmt_list(&dct)),
    );

    // 11: loss variants on experiment 6 (seed 0); hinge reuses the run above.
    let mut lines = vec![format!("hinge fid {:.4} cov {}", df[0], dc[0])];
    let mut ok = df[0].is_finite();
    for (loss, name) in [(LossVariant::NonSaturating, "non-saturating"), (LossVariant::Wasserstein, "wasserstein")] {
        let mut cfg = base_config(Modulation::Prior, 0, 128);
        cfg.train.loss = loss;
        match pipeline::train_experiment(&cfg) {
            Ok(t) => {
                let finite = t.history.records.iter().all(|r| r.loss_d.is_finite() && r.loss_g.is_finite());
                let test = t.splits.test.clone().unwrap();
                let r = pipeline::evaluate(&t.model, &test, &EvalOptions { seed: 0, sampler: None, samples: None, ivom_steps: Some(0) })
                    .expect("evaluation failed");
                ok &= finite && t.model.step == cfg.train.steps;
                lines.push(format!(
                    "{name} fid {:.4} cov {}",
                    r.fid.unwrap_or(f64::NAN),
                    r.mode_coverage.as_ref().map_or(0, |c| c.covered)
                ));
            }
            Err(e) => {
                ok = false;
                lines.push(format!("{name} failed: {e}"));
            }
        }
    }
    report(out, 11, true, ok, format!("loss variants complete without non-finite losses: {}", lines.join("; ")));

    // 10: budget sweep.
    let budgets = [25usize, 50, 100, 200, 500];
    let start = Instant::now();
    let mut dmed = Vec::new();
    let mut bmed = Vec::new();
    for &n in &budgets {
        let mut d = Vec::new();
        let mut b = Vec::new();
        for s in 0..3 {
            d.push(run(&base_config(Modulation::Prior, s, n)).report.fid.unwrap_or(f64::NAN));
            b.push(run(&base_config(Modulation::PerInstanceEmbedding, s, n)).report.fid.unwrap_or(f64::NAN));
        }
        println!("       n={n}: DISP fid [{}] baseline fid [{}]", fmt_list(&d), fmt_list(&b));
        dmed.push(median(&d));
        bmed.push(median(&b));
    }
    let inversions = dmed.windows(2).filter(|w| w[1] > w[0]).count();
    let dominated = dmed.iter().zip(&bmed).all(|(d, b)| d <= b);
    let total = start.elapsed();
    report(
        out,
        10,
        false,
        inversions <= 1 && dominated && total < Duration::from_secs(7200),
        format!(
            "budget sweep {budgets:?}: DISP median FID [{}] ({inversions} inversions, ≤1); baseline [{}]; DISP ≤ baseline everywhere = {dominated}; {:.0}s (<7200s)",
            fmt_list(&dmed),
            fmt_list(&bmed),
            total.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- 12. determinism

fn disp(args: &[&str], dir: &Path) -> bool {
    let st = Command::new(env!("CARGO_BIN_EXE_disp")).args(args).current_dir(dir).output().expect("spawn disp");
    if !st.status.success() {
        eprintln!("disp {args:?} failed: {}", String::from_utf8_lossy(&st.stderr));
    }
    st.status.success()
}

fn c12_determinism(out: &mut Vec<Outcome>) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "seed = 5\n[data]\nn_target = 40\nsource_n = 600\nn_test = 200\n[extractor]\nepochs = 3\n[train]\nsteps = 150\nlog_every = 25\nfid_every = 50\nfid_samples = 100\n[eval]\nsamples = 200\nivom_queries = 8\nivom_steps = 40\n";
    let splits = make_transfer(&ExperimentConfig::from_toml(cfg).unwrap().data.protocol(), 5).unwrap();
    let mut ok = true;
    // Identical file names in two directories, so paths recorded in outputs match too.
    for r in ["a", "b"] {
        let p = dir.path().join(r);
        std::fs::create_dir(&p).unwrap();
        std::fs::write(p.join("c.toml"), cfg).unwrap();
        write_dataset(&p.join("source.bin"), &splits.source).unwrap();
        write_dataset(&p.join("test.bin"), &splits.test).unwrap();
        ok &= disp(&["pretrain-extractor", "--source", "source.bin", "--out", "ext.ckpt", "--epochs", "3", "--seed", "2"], &p);
        ok &= disp(&["train", "--config", "c.toml", "--out", "m.ckpt", "--history", "h.jsonl"], &p);
        ok &= disp(&["fit-gmm", "--ckpt", "m.ckpt", "--k", "4", "--out", "g.ckpt"], &p);
        ok &= disp(&["sample", "--ckpt", "g.ckpt", "--sampler", "gmm", "--n", "50", "--out", "s.bin", "--seed", "3"], &p);
        ok &= disp(&["eval", "--ckpt", "g.ckpt", "--test", "test.bin", "--report", "r.json", "--seed", "1"], &p);
        ok &= disp(&["invert", "--ckpt", "g.ckpt", "--queries", "s.bin", "--report", "i.json", "--steps", "30"], &p);
        ok &= disp(&["report", "--histories", "h.jsonl", "--out", "rep"], &p);
    }
    let files = ["ext.ckpt", "m.ckpt", "h.jsonl", "g.ckpt", "s.bin", "r.json", "i.json", "rep/summary.md", "rep/summary.json", "rep/fid_vs_step.svg"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| match (std::fs::read(dir.path().join("a").join(f)), std::fs::read(dir.path().join("b").join(f))) {
            (Ok(a), Ok(b)) => a != b,
            _ => true,
        })
        .collect();
    report(
        out,
        12,
        true,
        ok && differing.is_empty(),
        format!("determinism: 7 commands run twice with equal seeds, {} artifacts byte-compared, differing: {differing:?}", files.len()),
    );
}

fn main() {
    let quick = std::env::var("DISP_ACCEPTANCE_QUICK").is_ok_and(|v| v == "1");
    println!("acceptance suite{}", if quick { " (quick: training experiments skipped)" } else { "" });
    let mut out = Vec::new();
    c1_gradients(&mut out);
    c2_fid(&mut out);
    c3_pr(&mut out);
    c4_mann_whitney(&mut out);
    c5_gmm(&mut out);
    c12_determinism(&mut out);
    if !quick {
        experiments(&mut out);
    }
    out.sort_by_key(|o| o.id);
    let passed = out.iter().filter(|o| o.pass).count();
    println!("\nsummary: {passed}/{} criteria passed", out.len());
    for o in out.iter().filter(|o| !o.pass) {
        println!("  {} {:>2}: {}", if o.fatal { "FAILED (exact)" } else { "FAILED (directional, reported)" }, o.id, o.line);
    }
    if out.iter().any(|o| o.fatal && !o.pass) {
        std::process::exit(1);
    }
}
