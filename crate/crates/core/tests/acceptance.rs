//! Acceptance harness: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use specsurv::data::{generate_linear_cox, Impression, Journey, JourneyDataset, SurvivalDataset};
use specsurv::estimators::{breslow_baseline, kaplan_meier, nelson_aalen};
use specsurv::extensions::{
    aft_fit, counting_problem, dhh_fit, heterogeneous_fit, weighted_cox_fit, AlternatingConfig,
    HeterogeneousSpec,
};
use specsurv::likelihood::{
    bias_closed_form, bias_empirical, linear_eta, nll, nll_gradient_linear,
};
use specsurv::metrics::{auc_at, concordance_index};
use specsurv::predictors::{max_entropy_objective, Predictor};
use specsurv::spectral::{
    admm_fit_survival, balance_residual, iterative_spectral_ranking, sigma, stationarity,
    steady_state, transition_matrix, AdmmConfig, EventMode, RankingProblem,
};
use specsurv::weights::WeightMatrix;

type Outcome = (bool, String);

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    d / b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn specsurv(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_specsurv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let o = specsurv(args);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn instance(seed: u64) -> SurvivalDataset {
    generate_linear_cox(50, 5, None, 0.3, seed).unwrap().0
}

fn unit_nll(ds: &SurvivalDataset, theta: &[f64]) -> f64 {
    nll_gradient_linear(ds, theta).unwrap().value
}

fn oracle_equivalence(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let (mut worst_rel, mut worst_gap) = (0.0f64, 0.0f64);
    for seed in 0..10u64 {
        let mut theta = Vec::new();
        for method in ["spectral", "gd"] {
            let out = tmp.join(format!("c1-{method}-{seed}"));
            let seed_s = seed.to_string();
            run_ok(&[
                "fit",
                "--method",
                method,
                "--n",
                "50",
                "--d",
                "5",
                "--censor",
                "0.3",
                "--holdout",
                "0",
                "--seed",
                &seed_s,
                "--grad-tol",
                "1e-8",
                "--out",
                s(&out),
            ]);
            theta.push(Predictor::load_csv(&out.join("model.csv")).unwrap().params);
        }
        let ds = instance(seed);
        assert!(!ds.has_ties());
        worst_rel = worst_rel.max(rel(&theta[0], &theta[1]));
        worst_gap = worst_gap.max((unit_nll(&ds, &theta[0]) - unit_nll(&ds, &theta[1])).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst_rel <= 1e-2 && worst_gap <= 1e-4 && secs <= 60.0,
        format!("max rel L2 {worst_rel:.2e}, max NLL gap {worst_gap:.2e}, {secs:.1}s for 20 fits"),
    )
}

fn fixed_point() -> Outcome {
    let (mut bal, mut st) = (0.0f64, 0.0f64);
    for seed in 0..10u64 {
        let ds = instance(seed);
        let res = admm_fit_survival(
            &ds,
            &WeightMatrix::Unit,
            &Predictor::linear(5),
            &AdmmConfig::default(),
        )
        .unwrap();
        let p = RankingProblem::survival(&ds, WeightMatrix::Unit, EventMode::Strict)
            .unwrap()
            .normalized();
        let rho = res.diagnostics.last().unwrap().rho;
        let h: Vec<f64> = linear_eta(&ds, &res.predictor.params)
            .iter()
            .map(|e| e.exp())
            .collect();
        let pi = iterative_spectral_ranking(&p, rho, &res.u, &h, 100, 10_000, 1e-13)
            .unwrap()
            .pi;
        let tm = transition_matrix(&p, &pi, &sigma(&pi, &h, &res.u, rho)).unwrap();
        bal = bal.max(max_abs(&balance_residual(&tm.rates(), &pi)));
        st = st.max(max_abs(&stationarity(&p, &pi, &h, &res.u, rho)));
    }
    (
        bal <= 1e-5 && st <= 1e-5,
        format!("balance L∞ {bal:.2e}, scaled stationarity L∞ {st:.2e}"),
    )
}

fn linear_solve_stationary(q: &DMatrix<f64>) -> Vec<f64> {
    let n = q.nrows();
    let mut a = q.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::zeros(n);
    b[n - 1] = 1.0;
    a.lu().solve(&b).unwrap().iter().cloned().collect()
}

fn steady_states() -> Outcome {
    let q = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]);
    let hand = steady_state(&q, 10_000, 1e-14).unwrap();
    let hand_err = (hand[0] - 2.0 / 3.0).abs().max((hand[1] - 1.0 / 3.0).abs());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=20);
        let mut q = DMatrix::zeros(n, n);
        for i in 0..n {
            // a ring keeps the chain irreducible
            q[(i, (i + 1) % n)] = rng.random_range(0.1..2.0);
            for j in 0..n {
                if j != i && rng.random::<f64>() < 0.3 {
                    q[(i, j)] = rng.random_range(0.0..3.0);
                }
            }
        }
        for i in 0..n {
            let r: f64 = q.row(i).sum();
            q[(i, i)] = -r;
        }
        let a = steady_state(&q, 10_000_000, 1e-14).unwrap();
        let b = linear_solve_stationary(&q);
        worst = worst.max(a.iter().zip(&b).fold(0.0, |m, (x, y)| m.max((x - y).abs())));
    }
    (
        hand_err <= 1e-8 && worst <= 1e-6,
        format!("2-state error {hand_err:.1e}, 50 chains max error {worst:.2e}"),
    )
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], k: usize) -> f64 {
    let h = 1e-5;
    let (mut a, mut b) = (x.to_vec(), x.to_vec());
    a[k] += h;
    b[k] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut nll_err, mut me_err) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.random_range(3..=20);
        let d = rng.random_range(1..=5);
        let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
        let events: Vec<bool> = (0..n)
            .map(|i| i == 0 || rng.random::<f64>() < 0.7)
            .collect();
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let ds = SurvivalDataset::from_columns(&times, &events, x, d).unwrap();
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = nll_gradient_linear(&ds, &theta).unwrap().gradient;
        for j in 0..d {
            // differences of the score-space loss, not the gradient routine's value
            let loss = |t: &[f64]| {
                let h: Vec<f64> = linear_eta(&ds, t).iter().map(|e| e.exp()).collect();
                nll(&ds, &WeightMatrix::Unit, &h).unwrap()
            };
            let fd = central_difference(loss, &theta, j);
            nll_err = nll_err.max((fd - g[j]).abs());
        }
    }
    for k in 0..20u64 {
        let n = rng.random_range(2..=10);
        let d = rng.random_range(1..=4);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pi: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        let rho = rng.random_range(0.1..3.0);
        let p = if k % 2 == 0 {
            Predictor::linear_with((0..d).map(|_| rng.random_range(-0.5..0.5)).collect())
        } else {
            Predictor::feed_forward(d, vec![3], k)
        };
        let (_, g) = max_entropy_objective(&p, &x, n, &pi, &u, rho);
        let f = |params: &[f64]| {
            let q = Predictor {
                params: params.to_vec(),
                ..p.clone()
            };
            max_entropy_objective(&q, &x, n, &pi, &u, rho).0
        };
        for j in 0..p.params.len() {
            me_err = me_err.max((central_difference(f, &p.params, j) - g[j]).abs());
        }
    }
    (
        nll_err <= 1e-6 && me_err <= 1e-6,
        format!(
            "NLL max error {nll_err:.2e}, max-entropy max error {me_err:.2e} (20 instances each)"
        ),
    )
}

fn minibatch_bias() -> Outcome {
    let mut worst_z = 0.0f64;
    let mut full_exact = true;
    for seed in 0..3u64 {
        let (ds, theta) = generate_linear_cox(10, 3, None, 0.3, 40 + seed).unwrap();
        for b in [2usize, 5, 8] {
            let closed = bias_closed_form(&ds, &theta, b, 1_000_000).unwrap();
            let (mean, se) = bias_empirical(&ds, &theta, b, 100_000, seed).unwrap();
            worst_z = worst_z.max((closed - mean).abs() / se);
        }
        full_exact &= bias_closed_form(&ds, &theta, 10, 1_000_000).unwrap() == 0.0;
        full_exact &= bias_empirical(&ds, &theta, 10, 100, seed).unwrap().0 == 0.0;
    }
    (
        worst_z <= 3.0 && full_exact,
        format!("max |closed - MC| = {worst_z:.2} standard errors over 9 cells, full batch exactly 0: {full_exact}"),
    )
}

fn plain(times: &[f64], events: &[bool]) -> SurvivalDataset {
    SurvivalDataset::from_columns(times, events, vec![0.0; times.len()], 1).unwrap()
}

fn estimators() -> Outcome {
    let ds = plain(&[1.0, 2.0, 3.0], &[true, false, true]);
    let km = kaplan_meier(&ds);
    let na = nelson_aalen(&ds);
    let mut err = 0.0f64;
    for (t, v) in [(1.0, 2.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 0.0), (0.5, 1.0)] {
        err = err.max((km.eval(t) - v).abs());
    }
    for (t, v) in [(1.0, 1.0 / 3.0), (2.0, 1.0 / 3.0), (3.0, 4.0 / 3.0)] {
        err = err.max((na.eval(t) - v).abs());
    }
    let b = breslow_baseline(&ds, &[1.0; 3]).unwrap();
    let bres = b
        .increments()
        .iter()
        .zip(na.increments())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let two = plain(&[1.0, 2.0], &[true, true]);
    let inc = breslow_baseline(&two, &[2.0, 1.0]).unwrap().increments();
    let hand = (inc[0] - 1.0 / 3.0).abs().max((inc[1] - 1.0).abs());
    (
        err <= 1e-12 && bres <= 1e-12 && hand <= 1e-12,
        format!("KM/NA fixture error {err:.1e}, unit Breslow vs NA {bres:.1e}, scored Breslow {hand:.1e}"),
    )
}

fn brute_auc(ds: &SurvivalDataset, risk: &[f64], t: f64) -> f64 {
    let n = ds.n();
    let g_before = |s: f64| -> f64 {
        let mut cs: Vec<f64> = (0..n)
            .filter(|&j| !ds.event(j) && ds.time(j) < s)
            .map(|j| ds.time(j))
            .collect();
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        cs.iter()
            .map(|&c| {
                let at = (0..n).filter(|&j| ds.time(j) >= c).count() as f64;
                let gone = (0..n).filter(|&j| ds.time(j) == c && !ds.event(j)).count() as f64;
                1.0 - gone / at
            })
            .product()
    };
    let (mut num, mut den) = (0.0, 0.0);
    for i in (0..n).filter(|&i| ds.event(i) && ds.time(i) <= t) {
        let w = 1.0 / g_before(ds.time(i));
        for j in (0..n).filter(|&j| ds.time(j) > t) {
            let c = if risk[i] > risk[j] {
                1.0
            } else if risk[i] == risk[j] {
                0.5
            } else {
                0.0
            };
            num += w * c;
            den += w;
        }
    }
    num / den
}

fn metrics() -> Outcome {
    let fix = plain(&[1.0, 2.0, 3.0], &[true, true, true]);
    let ci = concordance_index(&fix, &[3.0, 1.0, 2.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut invariant = true;
    let mut auc_err = 0.0f64;
    let mut compared = 0;
    for _ in 0..30 {
        let n = rng.random_range(3..=10);
        let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
        let events: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.7).collect();
        let risk: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(-4.0f64..4.0) * 2.0).round() / 2.0)
            .collect();
        let ds = plain(&times, &events);
        let base = concordance_index(&ds, &risk).unwrap();
        let e: Vec<f64> = risk.iter().map(|r| r.exp()).collect();
        let c: Vec<f64> = risk.iter().map(|r| r * r * r + r).collect();
        invariant &= base == concordance_index(&ds, &e).unwrap()
            && base == concordance_index(&ds, &c).unwrap();
        for &t in &times {
            let a = auc_at(&ds, &risk, t).unwrap();
            let b = brute_auc(&ds, &risk, t);
            if a.is_finite() || b.is_finite() {
                auc_err = auc_err.max((a - b).abs());
                compared += 1;
            }
        }
    }
    let ci_ok = (ci - 2.0 / 3.0).abs() <= 1e-15;
    (
        ci_ok && invariant && auc_err <= 1e-12,
        format!("CI fixture {ci:.6}, monotone invariance {invariant}, AUC vs double sum max error {auc_err:.1e} over {compared} points"),
    )
}

fn reductions() -> Outcome {
    let (ds, _) = generate_linear_cox(60, 3, None, 0.3, 21).unwrap();
    let cfg = AdmmConfig::default();
    let base = admm_fit_survival(&ds, &WeightMatrix::Unit, &Predictor::linear(3), &cfg)
        .unwrap()
        .predictor
        .params;
    let spec = HeterogeneousSpec {
        classes: vec![0; 60],
        group_features: vec![0.0],
        q: 1,
    };
    let hetero = heterogeneous_fit(&ds, &spec, &WeightMatrix::Unit, &cfg)
        .unwrap()
        .theta;
    let ones = WeightMatrix::dense_from_fn(60, |_, _| 1.0);
    let weighted = weighted_cox_fit(&ds, &ones, &Predictor::linear(3), &cfg)
        .unwrap()
        .predictor
        .params;
    let one_round = AlternatingConfig {
        outer_rounds: 1,
        ..AlternatingConfig::default()
    };
    let dhh = dhh_fit(&ds, &vec![0; 60], &Predictor::linear(3), &one_round)
        .unwrap()
        .predictor
        .params;
    let aft = aft_fit(&ds, &Predictor::linear(3), &one_round)
        .unwrap()
        .predictor
        .params;
    let r = [
        rel(&hetero, &base),
        rel(&weighted, &base),
        rel(&dhh, &base),
        rel(&aft, &base),
    ];
    (
        r.iter().all(|&v| v <= 1e-3),
        format!(
            "rel L2 vs plain: hetero {:.1e}, weighted {:.1e}, dhh {:.1e}, aft {:.1e}",
            r[0], r[1], r[2], r[3]
        ),
    )
}

fn counting(tmp: &Path) -> Outcome {
    let starts = [(0, 0.0), (1, 0.1), (2, 0.2), (3, 0.5), (4, 0.9)];
    let items: Vec<f64> = (0..10)
        .map(|k| ((k * 37 % 11) as f64 - 5.0) / 5.0)
        .collect();
    let journey = Journey {
        id: 0,
        impressions: starts
            .iter()
            .map(|&(item, time)| Impression { item, time })
            .collect(),
        event: Some((2, 0.7)),
        end_time: 0.7,
    };
    let jds = JourneyDataset::new(vec![journey], items.clone(), 2).unwrap();
    let cp = counting_problem(&jds).unwrap().with_kappa(1.0);
    let ds = SurvivalDataset::from_columns(
        &[0.7; 4],
        &[false, false, true, false],
        items[..8].to_vec(),
        2,
    )
    .unwrap();
    let sp = RankingProblem::survival(&ds, WeightMatrix::Unit, EventMode::Strict)
        .unwrap()
        .with_kappa(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut collapse = 0.0f64;
    for _ in 0..10 {
        let h: Vec<f64> = (0..5).map(|_| rng.random_range(0.3..2.0)).collect();
        let u: Vec<f64> = (0..5).map(|_| rng.random_range(-0.3..0.3)).collect();
        let a = iterative_spectral_ranking(&cp, 1.0, &u, &h, 100, 1000, 1e-13)
            .unwrap()
            .pi;
        let b = iterative_spectral_ranking(&sp, 1.0, &u[..4], &h[..4], 100, 1000, 1e-13)
            .unwrap()
            .pi;
        collapse = collapse.max(a.iter().zip(&b).fold(0.0, |m, (x, y)| m.max((x - y).abs())));
    }

    let out = tmp.join("c9");
    run_ok(&[
        "bench",
        "--ns",
        "1000",
        "--methods",
        "spectral,gd-full",
        "--max-items",
        "50",
        "--out",
        s(&out),
    ]);
    let bench = rows(&out.join("bench.csv"));
    let meas = rows(&out.join("measurements.csv"));
    let ci = |k: usize| bench[k][4].parse::<f64>().unwrap();
    let peak = |k: usize| meas[k][3].parse::<f64>().unwrap();
    let data = |k: usize| meas[k][4].parse::<f64>().unwrap();
    let solver = |k: usize| peak(k) - data(k);
    let gap = (ci(0) - ci(1)).abs();
    let ratio = solver(0) / solver(1);
    let statuses_ok = bench.iter().all(|r| r[5] == "ok");
    (
        collapse <= 1e-6 && gap <= 0.02 && ratio <= 0.5 && statuses_ok,
        format!(
            "collapse π L∞ {collapse:.1e}; ADS n=1000: CI {:.4} vs {:.4}, solver memory {:.0} KiB vs {:.0} KiB (ratio {ratio:.2}; whole-process ratio {:.2})",
            ci(0),
            ci(1),
            solver(0) / 1024.0,
            solver(1) / 1024.0,
            peak(0) / peak(1)
        ),
    )
}

fn rho_protocol(tmp: &Path) -> Outcome {
    let out = tmp.join("c10");
    run_ok(&["rho-sweep", "--out", s(&out)]);
    let r = rows(&out.join("rho_sweep.csv"));
    let grid: Vec<f64> = r.iter().map(|x| x[0].parse().unwrap()).collect();
    let ci: Vec<f64> = r.iter().map(|x| x[1].parse().unwrap()).collect();
    let best = ci
        .iter()
        .cloned()
        .filter(|c| c.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let at_one = ci[2];
    let log = std::fs::read_to_string(out.join("rho_sweep.log")).unwrap_or_default();
    (
        grid == [0.1, 0.5, 1.0, 2.0, 5.0, 10.0] && at_one.is_finite() && at_one >= best - 0.05,
        format!(
            "grid {grid:?}, ρ=1 CI {at_one:.4}, grid max {best:.4}; log: {}",
            log.trim()
        ),
    )
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        // wall time and resident memory are measurements, not results
        .filter(|p| p.file_name().is_some_and(|n| n != "measurements.csv"))
        .collect();
    v.sort();
    v
}

fn determinism(tmp: &Path) -> Outcome {
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("fit-spectral", vec!["fit", "--n", "120", "--seed", "3"]),
        (
            "fit-gd",
            vec!["fit", "--method", "gd", "--n", "120", "--seed", "3"],
        ),
        (
            "fit-minibatch",
            vec![
                "fit",
                "--method",
                "gd-minibatch",
                "--epochs",
                "30",
                "--n",
                "120",
                "--seed",
                "3",
            ],
        ),
        (
            "fit-weighted",
            vec![
                "fit",
                "--model",
                "weighted",
                "--weights",
                "censor-decay",
                "--n",
                "120",
            ],
        ),
        ("fit-hetero", vec!["fit", "--model", "hetero", "--n", "120"]),
        (
            "fit-dhh",
            vec!["fit", "--model", "dhh", "--rounds", "2", "--n", "120"],
        ),
        (
            "fit-aft",
            vec!["fit", "--model", "aft", "--rounds", "2", "--n", "120"],
        ),
        (
            "fit-counting",
            vec![
                "fit",
                "--model",
                "counting",
                "--method",
                "gd",
                "--generate",
                "ads",
                "--n",
                "80",
                "--max-items",
                "6",
            ],
        ),
        ("simulate", vec!["simulate", "--n", "100", "--seed", "5"]),
        (
            "simulate-ads",
            vec![
                "simulate",
                "--generate",
                "ads",
                "--n",
                "40",
                "--max-items",
                "6",
            ],
        ),
        (
            "bias-check",
            vec!["bias-check", "--n", "10", "--draws", "5000"],
        ),
        ("rho-sweep", vec!["rho-sweep", "--n", "100"]),
        ("bench", vec!["bench", "--ns", "60", "--max-items", "6"]),
    ];
    let mut mismatched = Vec::new();
    let mut files = 0;
    for (name, args) in &runs {
        let dirs = [
            tmp.join(format!("c11-{name}-a")),
            tmp.join(format!("c11-{name}-b")),
        ];
        for d in &dirs {
            let mut a = args.clone();
            a.extend(["--out", s(d)]);
            run_ok(&a);
        }
        let (fa, fb) = (csv_files(&dirs[0]), csv_files(&dirs[1]));
        assert!(!fa.is_empty(), "{name} wrote no CSV");
        for (x, y) in fa.iter().zip(&fb) {
            files += 1;
            if std::fs::read(x).unwrap() != std::fs::read(y).unwrap() {
                mismatched.push(format!(
                    "{name}/{}",
                    x.file_name().unwrap().to_string_lossy()
                ));
            }
        }
        if fa.len() != fb.len() {
            mismatched.push(format!("{name}: file sets differ"));
        }
    }
    // evaluate on a saved model
    let sim = tmp.join("c11-simulate-a");
    let fit = tmp.join("c11-eval-fit");
    run_ok(&["fit", "--data", s(&sim.join("data.csv")), "--out", s(&fit)]);
    let mut evals = Vec::new();
    for tag in ["a", "b"] {
        let d = tmp.join(format!("c11-eval-{tag}"));
        run_ok(&[
            "evaluate",
            "--data",
            s(&sim.join("data.csv")),
            "--model-file",
            s(&fit.join("model.csv")),
            "--out",
            s(&d),
        ]);
        evals.push(std::fs::read(d.join("metrics.csv")).unwrap());
    }
    files += 1;
    if evals[0] != evals[1] {
        mismatched.push("evaluate/metrics.csv".into());
    }
    (
        mismatched.is_empty(),
        format!("{files} CSV files over {} command runs compared byte for byte; mismatches: {mismatched:?}", runs.len() + 1),
    )
}

fn main() {
    // failures are reported on the criterion line
    std::panic::set_hook(Box::new(|_| {}));
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("oracle equivalence", Box::new(|| oracle_equivalence(t))),
        (
            "fixed point balance and stationarity",
            Box::new(fixed_point),
        ),
        ("steady-state correctness", Box::new(steady_states)),
        ("gradient suite", Box::new(gradients)),
        ("mini-batch bias", Box::new(minibatch_bias)),
        ("estimator fixtures", Box::new(estimators)),
        ("metric fixtures", Box::new(metrics)),
        ("extension reductions", Box::new(reductions)),
        ("counting process", Box::new(|| counting(t))),
        ("rho protocol", Box::new(|| rho_protocol(t))),
        ("determinism", Box::new(|| determinism(t))),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
