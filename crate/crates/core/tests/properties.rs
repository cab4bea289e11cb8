use nalgebra::DMatrix;
use proptest::prelude::*;
use specsurv::data::{generate_ads, generate_ads_with, generate_linear_cox, SurvivalDataset};
use specsurv::estimators::{breslow_baseline, kaplan_meier, nelson_aalen, Kernel};
use specsurv::extensions::counting_anchors;
use specsurv::likelihood::{linear_eta, nll, nll_gradient_linear, nll_gradient_linear_weighted};
use specsurv::predictors::{gd_mle_fit, max_entropy_objective, FitConfig, Predictor};
use specsurv::spectral::{
    balance_residual, iterative_spectral_ranking, sigma, stationarity, steady_state,
    steady_state_from, transition_matrix, EventMode, RankingProblem,
};
use specsurv::weights::WeightMatrix;

/// Random dataset with `d` features; times are rounded to create ties.
fn dataset(max_n: usize, d: usize, ties: bool) -> impl Strategy<Value = SurvivalDataset> {
    (2..=max_n).prop_flat_map(move |n| {
        (
            prop::collection::vec(0.05f64..5.0, n),
            prop::collection::vec(prop::bool::weighted(0.7), n),
            prop::collection::vec(-1.5f64..1.5, n * d),
        )
            .prop_map(move |(t, e, x)| {
                let t: Vec<f64> = if ties {
                    t.iter().map(|v| (v * 2.0).round() / 2.0 + 0.5).collect()
                } else {
                    t
                };
                SurvivalDataset::from_columns(&t, &e, x, d).unwrap()
            })
    })
}

fn theta(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, d)
}

fn with_event(ds: &SurvivalDataset) -> bool {
    ds.n_events() > 0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn risk_sets_contain_anchor_and_nest(ds in dataset(15, 1, true)) {
        for i in 0..ds.n() {
            let r = ds.risk_set(i).unwrap();
            prop_assert!(r.members.contains(&i));
            prop_assert!(r.members.iter().all(|&j| ds.time(j) >= ds.time(i)));
            prop_assert_eq!(r.members.len(), (0..ds.n()).filter(|&j| ds.time(j) >= ds.time(i)).count());
            for j in 0..ds.n() {
                if ds.time(i) <= ds.time(j) {
                    let rj = ds.risk_set(j).unwrap();
                    prop_assert!(rj.members.iter().all(|m| r.members.contains(m)));
                }
            }
        }
    }

    #[test]
    fn sorted_order_is_sorted_permutation(ds in dataset(20, 1, true)) {
        let o = ds.sorted_order();
        prop_assert!(o.windows(2).all(|w| ds.time(w[0]) <= ds.time(w[1])));
        let mut seen = o.to_vec();
        seen.sort();
        prop_assert_eq!(seen, (0..ds.n()).collect::<Vec<_>>());
        let again = ds.subset(o).unwrap();
        let ident: Vec<usize> = (0..ds.n()).collect();
        prop_assert_eq!(again.sorted_order(), ident.as_slice());
    }

    #[test]
    fn km_and_na_are_monotone_and_consistent(ds in dataset(25, 1, true)) {
        let km = kaplan_meier(&ds);
        let na = nelson_aalen(&ds);
        let (lo, hi) = ds.time_range();
        let mut second_order = 0.0;
        let mut times: Vec<f64> = (0..ds.n()).filter(|&i| ds.event(i)).map(|i| ds.time(i)).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        for &t in &times {
            let d = (0..ds.n()).filter(|&i| ds.event(i) && ds.time(i) == t).count() as f64;
            let r = (0..ds.n()).filter(|&i| ds.time(i) >= t).count() as f64;
            second_order += (d / r) * (d / r);
        }
        let mut prev = (1.0, 0.0);
        for k in 0..=60 {
            let t = lo - 0.1 + (hi - lo + 0.2) * k as f64 / 60.0;
            let (s, l) = (km.eval(t), na.eval(t));
            prop_assert!(s <= prev.0 + 1e-15 && l >= prev.1 - 1e-15);
            let gap = (-l).exp() - s;
            prop_assert!(gap >= -1e-12);
            if s > 0.0 {
                prop_assert!(gap <= 0.51 * second_order + 1e-12);
            }
            prev = (s, l);
        }
    }

    #[test]
    fn unit_breslow_is_nelson_aalen(ds in dataset(25, 1, true)) {
        prop_assume!(with_event(&ds));
        let b = breslow_baseline(&ds, &vec![1.0; ds.n()]).unwrap();
        let na = nelson_aalen(&ds);
        let (bi, ni) = (b.increments(), na.increments());
        prop_assert_eq!(bi.len(), ni.len());
        for (x, y) in bi.iter().zip(&ni) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn nll_agrees_with_gradient_report(ds in dataset(20, 3, true), th in theta(3)) {
        prop_assume!(with_event(&ds));
        let scores: Vec<f64> = linear_eta(&ds, &th).iter().map(|e| e.exp()).collect();
        let a = nll(&ds, &WeightMatrix::Unit, &scores).unwrap();
        let b = nll_gradient_linear(&ds, &th).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn nll_gradient_matches_central_differences(ds in dataset(20, 3, true), th in theta(3)) {
        prop_assume!(with_event(&ds));
        let g = nll_gradient_linear(&ds, &th).unwrap().gradient;
        let h = 1e-5;
        for k in 0..3 {
            let (mut up, mut dn) = (th.clone(), th.clone());
            up[k] += h;
            dn[k] -= h;
            let fd = (nll_gradient_linear(&ds, &up).unwrap().value - nll_gradient_linear(&ds, &dn).unwrap().value) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() <= 1e-6, "{} vs {}", fd, g[k]);
        }
    }

    #[test]
    fn nll_is_shift_invariant(ds in dataset(20, 2, true), th in theta(2), c in -3.0f64..3.0) {
        prop_assume!(with_event(&ds));
        let eta = linear_eta(&ds, &th);
        let a: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        let b: Vec<f64> = eta.iter().map(|e| (e + c).exp()).collect();
        let (x, y) = (nll(&ds, &WeightMatrix::Unit, &a).unwrap(), nll(&ds, &WeightMatrix::Unit, &b).unwrap());
        prop_assert!((x - y).abs() <= 1e-10);
    }

    #[test]
    fn column_scaling_leaves_nll(ds in dataset(15, 2, false), th in theta(2), col in 0usize..15, c in 0.1f64..10.0) {
        prop_assume!(with_event(&ds));
        let n = ds.n();
        let col = col % n;
        let base = WeightMatrix::dense_from_fn(n, |j, i| 1.0 + 0.1 * ((j + 2 * i) % 3) as f64);
        let scaled = WeightMatrix::dense_from_fn(n, |j, i| base.get(j, i) * if i == col { c } else { 1.0 });
        let a = nll_gradient_linear_weighted(&ds, &base, &th).unwrap();
        let b = nll_gradient_linear_weighted(&ds, &scaled, &th).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-10);
        for (x, y) in a.gradient.iter().zip(&b.gradient) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn kernels_integrate_to_one(steps in 10_000usize..20_000) {
        for k in [Kernel::Uniform, Kernel::Epanechnikov, Kernel::GaussianTruncated] {
            let h = 2.0 / steps as f64;
            let mass: f64 = (0..=steps)
                .map(|s| {
                    let w = if s == 0 || s == steps { 0.5 } else { 1.0 };
                    w * k.eval(-1.0 + h * s as f64)
                })
                .sum::<f64>()
                * h;
            prop_assert!((mass - 1.0).abs() <= 1e-6, "{:?} {}", k, mass);
        }
    }
}

fn random_generator(n: usize, rates: &[f64]) -> DMatrix<f64> {
    let mut q = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rates[i * n + j] });
    for i in 0..n {
        let s: f64 = q.row(i).sum();
        q[(i, i)] = -s;
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn steady_state_is_balanced_and_start_free(
        (n, rates, start) in (2usize..12).prop_flat_map(|n| (
            Just(n),
            prop::collection::vec(0.05f64..3.0, n * n),
            prop::collection::vec(0.1f64..1.0, n),
        ))
    ) {
        let q = random_generator(n, &rates);
        let tol = 1e-12;
        let a = steady_state(&q, 100_000, tol).unwrap();
        let b = steady_state_from(&q, &start, 100_000, tol).unwrap();
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(a.iter().all(|&p| p > 0.0));
        let mut rates_only = q.clone();
        rates_only.fill_diagonal(0.0);
        prop_assert!(balance_residual(&rates_only, &a).iter().all(|r| r.abs() <= 1e-9));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn spectral_fixed_point_balances(ds in dataset(12, 2, false), th in theta(2), us in prop::collection::vec(-0.5f64..0.5, 12), rho in 0.2f64..5.0) {
        prop_assume!(with_event(&ds));
        let p = RankingProblem::survival(&ds, WeightMatrix::Unit, EventMode::Strict).unwrap().normalized();
        let h: Vec<f64> = linear_eta(&ds, &th).iter().map(|e| e.exp()).collect();
        let u = &us[..ds.n()];
        let tol = 1e-11;
        let out = iterative_spectral_ranking(&p, rho, u, &h, 50, 2_000, tol).unwrap();
        let st = stationarity(&p, &out.pi, &h, u, rho);
        prop_assert!(st.iter().all(|v| v.abs() <= 1e-8), "{:?}", st);
        let s = sigma(&out.pi, &h, u, rho);
        let tm = transition_matrix(&p, &out.pi, &s).unwrap();
        prop_assert!(balance_residual(&tm.rates(), &out.pi).iter().all(|v| v.abs() <= 1e-8));
    }

    #[test]
    fn gd_never_increases_nll(ds in dataset(20, 3, false)) {
        prop_assume!(with_event(&ds));
        let cfg = FitConfig { epochs: 50, tol: 0.0, ..FitConfig::default() };
        let (_, hist) = gd_mle_fit(&ds, &Predictor::linear(3), &cfg).unwrap();
        prop_assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn max_entropy_gradient_matches_differences(
        x in prop::collection::vec(-1.0f64..1.0, 10),
        pi in prop::collection::vec(0.2f64..3.0, 5),
        u in prop::collection::vec(-0.5f64..0.5, 5),
        params in prop::collection::vec(-0.5f64..0.5, 2),
        rho in 0.1f64..3.0,
    ) {
        let lin = Predictor::linear_with(params.clone());
        let mut ff = Predictor::feed_forward(2, vec![3], 5);
        ff.params.iter_mut().zip(params.iter().cycle()).for_each(|(p, q)| *p += 0.3 * q);
        for p in [lin, ff] {
            let (_, g) = max_entropy_objective(&p, &x, 5, &pi, &u, rho);
            let h = 1e-5;
            for k in 0..p.params.len() {
                let (mut a, mut b) = (p.clone(), p.clone());
                a.params[k] += h;
                b.params[k] -= h;
                let fd = (max_entropy_objective(&a, &x, 5, &pi, &u, rho).0
                    - max_entropy_objective(&b, &x, 5, &pi, &u, rho).0) / (2.0 * h);
                prop_assert!((fd - g[k]).abs() <= 1e-6, "{} vs {}", fd, g[k]);
            }
        }
    }

    #[test]
    fn zero_width_network_is_linear(x in prop::collection::vec(-2.0f64..2.0, 12), params in theta(3)) {
        let mut ff = Predictor::feed_forward_zeros(3, Vec::new());
        // weights first, then the output bias
        prop_assert_eq!(ff.params.len(), 4);
        ff.params[..3].copy_from_slice(&params);
        prop_assert_eq!(ff.eta(&x, 4), Predictor::linear_with(params).eta(&x, 4));
    }

    #[test]
    fn generators_are_deterministic(seed in 0u64..1000) {
        let (a, ta) = generate_linear_cox(30, 3, None, 0.3, seed).unwrap();
        let (b, tb) = generate_linear_cox(30, 3, None, 0.3, seed).unwrap();
        prop_assert_eq!(ta, tb);
        prop_assert_eq!(a.features(), b.features());
        prop_assert_eq!(a.observations(), b.observations());
        let ja = generate_ads(20, 5, seed).unwrap();
        let jb = generate_ads(20, 5, seed).unwrap();
        prop_assert_eq!(ja.item_features(), jb.item_features());
        prop_assert_eq!(ja.journeys, jb.journeys);
    }

    #[test]
    fn one_anchor_per_clicked_journey(seed in 0u64..1000, n in 1usize..40) {
        let j = generate_ads_with(n, 6, seed, "train", None).unwrap();
        let anchors = counting_anchors(&j).unwrap();
        prop_assert_eq!(anchors.len(), j.journeys.iter().filter(|x| x.event.is_some()).count());
        prop_assert_eq!(anchors.len(), j.n_events());
    }
}
