//! End-to-end acceptance checks. Each test prints one PASS/FAIL line
//! straight to the terminal (bypassing output capture) and then asserts.
//!
//! Run with `cargo test --release -p permconf --test acceptance`.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use permconf::data::{split, Categorical, Stratify};
use permconf::harness::{
    power_curve, run_asymptotics_study, run_baseline_null_case, run_baseline_scenario, run_correlation_study,
    run_experiment, summarize_correlation_study, BaselineScenarioConfig, ExperimentConfig, ExperimentRow,
};
use permconf::inference::{confounding_test, confounding_test_exact, response_learning_test, Reference};
use permconf::learners::LearnerSpec;
use permconf::metrics::{auc, auc_null_gaussian, mann_whitney_u, rank_sum_u, MetricId, MetricSpec};
use permconf::nulls::{observed_metric, restricted_null, NullDistribution, Scheme};
use permconf::partials::{pcov_perm, restricted_expectation_cov, ExpectationMode};
use permconf::shuffle::RngStream;
use permconf::stats::ks_uniform;
use permconf::synthdata::{gen_classification, BernoulliJoint, ClassGenParams};
use rand::Rng;

fn report(id: &str, pass: bool, detail: &str) {
    let line = format!("[acceptance] {id} {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{id} failed: {detail}");
}

fn cov(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n
}

/// Advances `v` to its next lexicographic permutation; false after the last.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Mean of cov(x, y*) over every within-level permutation, visited lazily
/// with an odometer over per-level lexicographic permutations.
fn enumerated_mean_cov(x: &[f64], y: &[f64], c: &[u32]) -> f64 {
    let levels: Vec<Vec<usize>> = [0u32, 1]
        .iter()
        .map(|&l| (0..c.len()).filter(|&i| c[i] == l).collect())
        .collect();
    let mut state: Vec<Vec<usize>> = levels.iter().map(|g| (0..g.len()).collect()).collect();
    let mut ys = y.to_vec();
    let (mut sum, mut comp, mut count) = (0.0f64, 0.0f64, 0u64);
    loop {
        for (g, perm) in levels.iter().zip(&state) {
            for (k, &p) in perm.iter().enumerate() {
                ys[g[k]] = y[g[p]];
            }
        }
        let v = cov(x, &ys);
        // Neumaier summation
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
        count += 1;
        let mut level = 0;
        loop {
            if level == state.len() {
                return (sum + comp) / count as f64;
            }
            if next_permutation(&mut state[level]) {
                break;
            }
            state[level].sort_unstable();
            level += 1;
        }
    }
}

#[test]
fn c01_exact_sample_identity() {
    let start = Instant::now();
    let mut rng = RngStream::new(2001, 0).rng();
    let (mut worst_def, mut worst_enum) = (0.0f64, 0.0f64);
    let mut done = 0;
    while done < 500 {
        let n = rng.random_range(3..=12);
        let c: Vec<u32> = (0..n).map(|_| rng.random_range(0..2)).collect();
        if !(c.contains(&0) && c.contains(&1)) {
            continue;
        }
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let cf: Vec<f64> = c.iter().map(|&v| v as f64).collect();
        let definitional = cov(&x, &y) - cov(&x, &cf) * cov(&y, &cf) / cov(&cf, &cf);
        let est = pcov_perm(&x, &y, &c, ExpectationMode::ClosedForm).unwrap().value;
        worst_def = worst_def.max((est - definitional).abs());
        let closed = restricted_expectation_cov(&x, &y, &c).unwrap();
        worst_enum = worst_enum.max((closed - enumerated_mean_cov(&x, &y, &c)).abs());
        done += 1;
    }
    let elapsed = start.elapsed();
    report(
        "C1",
        worst_def <= 1e-12 && worst_enum <= 1e-12 && elapsed < Duration::from_secs(10),
        &format!("max |estimate - definition| = {worst_def:.2e}, max |closed - enumerated| = {worst_enum:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn c02_correlation_correction() {
    let start = Instant::now();
    let rows = run_correlation_study(300, 500, 2002).unwrap();
    let s = summarize_correlation_study(&rows);
    let elapsed = start.elapsed();
    report(
        "C2",
        s.rms_gaussian_vs_partial < 0.03 && s.max_abs_empirical < s.max_abs_partial && elapsed < Duration::from_secs(300),
        &format!(
            "RMS(gaussian - partial) = {:.4} (< 0.03), max|empirical| = {:.4} < max|partial| = {:.4}, {elapsed:.2?}",
            s.rms_gaussian_vs_partial, s.max_abs_empirical, s.max_abs_partial
        ),
    );
}

struct Regime {
    observed: f64,
    restricted_mean: f64,
    p: f64,
}

fn regime(joint: BernoulliJoint, beta: f64, theta: f64, b: usize, seed: u64) -> Regime {
    let ds = gen_classification(&ClassGenParams::new(600, joint, beta, theta, 0.2), &mut RngStream::new(seed, 0).rng()).unwrap();
    let sp = split(&ds, 0.5, Stratify::ByJoint, seed + 1).unwrap();
    let learner = LearnerSpec::logistic();
    let metric = MetricSpec::new(MetricId::Auc);
    let observed = observed_metric(&ds, &sp, &learner, &metric).unwrap();
    let null = restricted_null(&ds, &sp, &learner, &metric, b, seed + 2).unwrap();
    let p = response_learning_test(&null, observed).unwrap().p_value;
    Regime { observed, restricted_mean: null.mean(), p }
}

#[test]
fn c03_confounding_regimes() {
    let start = Instant::now();
    let b = 10_000;
    let strong = regime(BernoulliJoint::new(0.45, 0.05, 0.05, 0.45).unwrap(), 1.0, 1.0, b, 42);
    let confounded_only = regime(BernoulliJoint::symmetric(0.6).unwrap(), 0.0, 1.0, b, 42);
    let independent = regime(BernoulliJoint::symmetric(0.0).unwrap(), 1.0, 1.0, b, 42);
    let elapsed = start.elapsed();
    let ok1 = strong.p < 1e-4 && (0.85..=0.95).contains(&strong.restricted_mean) && (0.95..=1.0).contains(&strong.observed);
    let ok2 = (0.3..=0.9).contains(&confounded_only.p);
    let ok3 = (0.47..=0.53).contains(&independent.restricted_mean);
    report(
        "C3",
        ok1 && ok2 && ok3 && elapsed < Duration::from_secs(600),
        &format!(
            "(i) p = {:.2e}, null mean = {:.4}, observed = {:.4}; (ii) p = {:.4}; (iii) null mean = {:.4}; {elapsed:.2?}",
            strong.p, strong.restricted_mean, strong.observed, confounded_only.p, independent.restricted_mean
        ),
    );
}

/// Desk-scale runs of all four experiments, shared by C4 to C6.
fn experiments() -> &'static [Vec<ExperimentRow>; 4] {
    static RUNS: OnceLock<[Vec<ExperimentRow>; 4]> = OnceLock::new();
    RUNS.get_or_init(|| {
        let run = |e: u8| run_experiment(&ExperimentConfig::desk(e, 2024)).unwrap();
        [run(1), run(2), run(3), run(4)]
    })
}

fn rate_at_05(rows: &[ExperimentRow]) -> (f64, f64) {
    let pt = power_curve(rows, &[0.05]).unwrap()[0];
    (pt.response_rate, pt.confounding_rate)
}

#[test]
fn c04_type_one_error_control() {
    let start = Instant::now();
    let runs = experiments();
    let band = 0.02..=0.09;
    let mut ok = true;
    let mut detail = Vec::new();
    for e in [3usize, 4] {
        let rows = &runs[e - 1];
        let (resp, _) = rate_at_05(rows);
        let ps: Vec<f64> = rows.iter().map(|r| r.response_p).collect();
        let (_, ks_p) = ks_uniform(&ps);
        ok &= band.contains(&resp) && ks_p > 0.01;
        detail.push(format!("exp{e} response rate {resp:.3}, uniformity KS p {ks_p:.3}"));
    }
    for e in [2usize, 4] {
        let (_, conf) = rate_at_05(&runs[e - 1]);
        ok &= band.contains(&conf);
        detail.push(format!("exp{e} confounding rate {conf:.3}"));
    }
    detail.push(format!("{:.2?}", start.elapsed()));
    report("C4", ok, &detail.join("; "));
}

#[test]
fn c05_power() {
    let runs = experiments();
    let (resp1, conf1) = rate_at_05(&runs[0]);
    let (_, conf3) = rate_at_05(&runs[2]);
    report(
        "C5",
        resp1 >= 0.8 && conf1 >= 0.8 && conf3 >= 0.8,
        &format!("exp1 response power {resp1:.3}, confounding power exp1 {conf1:.3}, exp3 {conf3:.3}"),
    );
}

#[test]
fn c06_corrected_auc() {
    let runs = experiments();
    let mean_corr = |rows: &[ExperimentRow]| rows.iter().map(|r| r.corrected).sum::<f64>() / rows.len() as f64;
    let share_lower =
        |rows: &[ExperimentRow]| rows.iter().filter(|r| r.corrected < r.observed).count() as f64 / rows.len() as f64;
    let (m3, m4) = (mean_corr(&runs[2]), mean_corr(&runs[3]));
    let (s1, s3) = (share_lower(&runs[0]), share_lower(&runs[2]));
    report(
        "C6",
        (0.48..=0.52).contains(&m3) && (0.48..=0.52).contains(&m4) && s1 >= 0.95 && s3 >= 0.95,
        &format!("mean corrected exp3 {m3:.4}, exp4 {m4:.4}; corrected < observed exp1 {s1:.3}, exp3 {s3:.3}"),
    );
}

#[test]
fn c07_analytic_auc() {
    let mut rng = RngStream::new(2007, 0).rng();
    let (mut exact, mut u_gap) = (true, 0.0f64);
    for _ in 0..1000 {
        let n = rng.random_range(2..60);
        let mut y: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<bool>())).collect();
        y[0] = 0.0;
        y[1] = 1.0;
        // distinct scores: a shuffled grid
        let mut s: Vec<f64> = (0..n).map(|i| i as f64 * 0.37 - 5.0).collect();
        rand::seq::SliceRandom::shuffle(s.as_mut_slice(), &mut rng);
        let (mut wins, mut losses) = (0u64, 0u64);
        for i in 0..n {
            for j in 0..n {
                if y[i] == 1.0 && y[j] == 0.0 {
                    if s[i] > s[j] {
                        wins += 1;
                    } else {
                        losses += 1;
                    }
                }
            }
        }
        let n_p = y.iter().filter(|&&v| v == 1.0).count();
        let n_n = n - n_p;
        let a = auc(&y, &s).unwrap();
        exact &= rank_sum_u(&y, &s).unwrap() == wins as f64;
        exact &= a == wins as f64 / (n_n * n_p) as f64;
        u_gap = u_gap.max((mann_whitney_u(a, n_n, n_p) - losses as f64).abs());
    }
    let (_, sd) = auc_null_gaussian(50, 50);
    let null = NullDistribution {
        samples: vec![0.51; 100],
        scheme: Scheme::Restricted,
        metric: MetricSpec::new(MetricId::Auc),
        b: 100,
        master_seed: 0,
    };
    let p = confounding_test(&null, Reference::AnalyticAuc { n_n: 50, n_p: 50 }, 100).unwrap().p_value;
    report(
        "C7",
        exact && u_gap < 1e-9 && (sd - 0.058023).abs() <= 1e-6 && (p - 0.042).abs() <= 0.001,
        &format!("rank/pairwise identity exact: {exact}; negatives' U from AUC off by {u_gap:.1e}; sd(50, 50) = {sd:.7}; p(0.51, b = 100) = {p:.4}"),
    );
}

#[test]
fn c08_null_asymptotics() {
    let mut ok = true;
    let mut worst100 = 0.0f64;
    let mut misordered = Vec::new();
    for seed in [1u64, 2, 3] {
        let rows = run_asymptotics_study(&[15, 30, 100], &MetricId::ALL, 1000, seed).unwrap();
        for m in MetricId::ALL {
            let ks = |t: usize| rows.iter().find(|r| r.metric == m && r.test_size == t).unwrap().ks;
            worst100 = worst100.max(ks(100));
            ok &= ks(100) < 0.08;
            if ks(15) <= ks(100) {
                ok = false;
                misordered.push(format!("{m}@seed{seed} ({:.3} <= {:.3})", ks(15), ks(100)));
            }
        }
    }
    report(
        "C8",
        ok,
        &format!("max KS at test size 100 = {worst100:.4}; KS(15) <= KS(100) in: [{}]", misordered.join(", ")),
    );
}

#[test]
fn c09_exact_test_uniform_under_trivial_null() {
    let learner = LearnerSpec::logistic();
    let metric = MetricSpec::new(MetricId::Auc);
    let joint = BernoulliJoint::symmetric(0.0).unwrap();
    let ps: Vec<f64> = (0..200u64)
        .map(|seed| {
            let ds = gen_classification(&ClassGenParams::new(100, joint, 1.0, 0.0, 0.5), &mut RngStream::new(seed, 0).rng())
                .unwrap();
            let one_level = Categorical::from_labels(&vec!["all"; 100]);
            let ds = ds.with_confounder(one_level).unwrap();
            let sp = split(&ds, 0.5, Stratify::ByResponse, seed).unwrap();
            confounding_test_exact(&ds, &sp, &learner, &metric, 50, seed + 1000).unwrap().test.p_value
        })
        .collect();
    let (d, p) = ks_uniform(&ps);
    report("C9", p > 0.01, &format!("KS distance {d:.4}, KS p {p:.4} over 200 seeds"));
}

#[test]
fn c10_population_baseline() {
    let cfg = BaselineScenarioConfig { n: 2000, ..Default::default() };
    let in_band = (0..20u64)
        .filter(|&s| (0.1..=0.9).contains(&run_baseline_null_case(&cfg, s).unwrap().report.test.p_value))
        .count();
    let s = run_baseline_scenario(&BaselineScenarioConfig::default(), 2010).unwrap();
    let r = &s.report;
    let (base, dev) = (r.baseline_null.mean(), r.development_null.mean());
    let (corr, orange) = (r.correction.m_c, r.standard_correction.m_c);
    let ordered_null = 0.5 < base && base < dev;
    let ordered_corr = orange < corr && corr < r.observed;
    report(
        "C10",
        in_band >= 16 && ordered_null && ordered_corr,
        &format!(
            "null case: {in_band}/20 p in [0.1, 0.9]; biased: 0.5 < baseline {base:.4} < development {dev:.4}, \
             standard-corrected {orange:.4} < baseline-corrected {corr:.4} < observed {:.4}",
            r.observed
        ),
    );
}

fn run_cli(args: &[&str], dir: &Path) {
    let out = Command::new(env!("CARGO_BIN_EXE_permconf"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn write_inputs(dir: &Path) {
    let features: Vec<String> = (1..=10).map(|j| format!("\"x{j}\"")).collect();
    let data = format!(
        "[data]\npath = \"data/data.csv\"\nfeature_cols = [{}]\nresponse_col = \"y\"\nconfounder_cols = [\"c\"]\n",
        features.join(", ")
    );
    let files = [
        (
            "gen.toml",
            "generate.model = \"classification\"\ngenerate.n = 300\ngenerate.joint = [0.4, 0.1, 0.1, 0.4]\n".to_string(),
        ),
        ("analyze.toml", data.clone()),
        ("baseline.toml", format!("{data}[baseline]\ntarget = \"target.json\"\n")),
        (
            "target.json",
            r#"{"cells": [{"confounder": "1", "response": "1", "weight": 2}, {"confounder": "0", "response": "1", "weight": 1},
                          {"confounder": "1", "response": "0", "weight": 2.5}, {"confounder": "0", "response": "0", "weight": 3.5}]}"#
                .to_string(),
        ),
        (
            "partials.toml",
            "[data]\npath = \"data/data.csv\"\n[partials]\nx_col = \"x1\"\ny_col = \"y\"\nc_col = \"c\"\nenumeration_cap = 10\n"
                .to_string(),
        ),
        (
            "simulate.toml",
            "[simulate]\nstudy = \"experiment\"\nexperiment = 1\nn_datasets = 10\ndesign_sweeps = 5\n".to_string(),
        ),
        ("corr.toml", "[simulate]\nstudy = \"correlation\"\nn_datasets = 10\n".to_string()),
    ];
    std::fs::create_dir_all(dir).unwrap();
    for (name, body) in files {
        std::fs::write(dir.join(name), body).unwrap();
    }
}

#[test]
fn c11_thread_count_independence() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: [(&str, &str, &[&str]); 6] = [
        ("generate", "gen.toml", &["--out", "data"]),
        ("analyze", "analyze.toml", &["--b", "200", "--out", "analyze"]),
        ("baseline", "baseline.toml", &["--out", "baseline"]),
        ("partials", "partials.toml", &["--b", "200", "--out", "partials"]),
        ("simulate", "simulate.toml", &["--out", "experiment"]),
        ("simulate", "corr.toml", &["--b", "100", "--out", "correlation"]),
    ];
    let mut trees = Vec::new();
    for threads in ["1", "3"] {
        let dir = tmp.path().join(format!("threads{threads}"));
        write_inputs(&dir);
        let mut tree = Vec::new();
        for (cmd, config, extra) in &runs {
            let mut args = vec![*cmd, "--config", config, "--seed", "11", "--threads", threads];
            args.extend_from_slice(extra);
            run_cli(&args, &dir);
            tree.push(dir_bytes(&dir.join(extra[extra.len() - 1])));
        }
        trees.push(tree);
    }
    let files: usize = trees[0].iter().map(Vec::len).sum();
    let differing: Vec<String> = trees[0]
        .iter()
        .zip(&trees[1])
        .flat_map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).map(|(x, _)| x.0.clone()))
        .collect();
    report(
        "C11",
        differing.is_empty() && trees[0].iter().zip(&trees[1]).all(|(a, b)| a.len() == b.len()),
        &format!("{files} output files from 6 commands compared across 1 and 3 threads; differing: {differing:?}"),
    );
}
