use std::path::Path;
use std::str::FromStr;

use super::args::*;
use crate::data::{
    generate_ads_split, generate_linear_cox, load_csv, CsvSchema, JourneyDataset, SurvivalDataset,
};
use crate::error::{invalid, Error, Result};
use crate::estimators::{breslow_baseline, SmoothedHazard, StepFunction};
use crate::extensions::{
    aft_fit, counting_fit, dhh_fit, gd_full_fit, heterogeneous_fit, AlternatingConfig,
    HeterogeneousSpec, WeightPreset,
};
use crate::likelihood::{bias_closed_form, bias_empirical};
use crate::metrics::{self, counting_concordance, population_survival};
use crate::predictors::{gd_minibatch_fit, gd_mle_fit_weighted, FitConfig, Predictor};
use crate::seed;
use crate::spectral::{admm_fit_survival, write_diag, AdmmConfig, AdmmInit, DiagRecord, EventMode};
use crate::weights::WeightMatrix;

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub(crate) fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        v.to_string()
    }
}

fn dataset_name(a: &DataArgs) -> String {
    let stem = |p: &Path| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    match (&a.data, &a.journeys) {
        (Some(p), _) | (None, Some(p)) => stem(p),
        _ => match a.generate {
            Generator::Linear => "linear".into(),
            Generator::Ads => "ads".into(),
        },
    }
}

fn check_data_args(a: &DataArgs) -> Result<()> {
    if !(0.0..1.0).contains(&a.holdout) {
        return Err(Error::Usage(format!(
            "--holdout must lie in [0, 1), got {}",
            a.holdout
        )));
    }
    if !(0.0..1.0).contains(&a.censor) {
        return Err(Error::Usage(format!(
            "--censor must lie in [0, 1), got {}",
            a.censor
        )));
    }
    if a.n_classes == 0 {
        return Err(Error::Usage("--n-classes must be at least 1".into()));
    }
    Ok(())
}

fn load_survival(a: &DataArgs, classes: bool) -> Result<SurvivalDataset> {
    check_data_args(a)?;
    if let Some(p) = &a.data {
        let schema = CsvSchema {
            class: a.class_column.clone(),
            ..CsvSchema::default()
        };
        return load_csv(p, &schema);
    }
    if a.journeys.is_some() || a.generate == Generator::Ads {
        return Err(Error::Usage("journey data needs --model counting".into()));
    }
    let (ds, _) = generate_linear_cox(a.n, a.d, None, a.censor, a.seed)?;
    if classes {
        return {
            let n = ds.n();
            ds.with_classes((0..n).map(|i| i % a.n_classes).collect())
        };
    }
    Ok(ds)
}

fn split_survival(ds: SurvivalDataset, a: &DataArgs) -> Result<(SurvivalDataset, SurvivalDataset)> {
    if a.holdout == 0.0 {
        return Ok((ds.clone(), ds));
    }
    ds.split(a.holdout, a.seed)
}

fn load_journeys(a: &DataArgs) -> Result<(JourneyDataset, JourneyDataset)> {
    check_data_args(a)?;
    if let (Some(j), Some(i)) = (&a.journeys, &a.items) {
        let jds = JourneyDataset::load_csv(j, i)?;
        return Ok((jds.clone(), jds));
    }
    if a.data.is_some() {
        return Err(Error::Usage(
            "the counting model reads --journeys and --items".into(),
        ));
    }
    let train = generate_ads_split(a.n, a.max_items, a.seed, "train")?;
    if a.holdout == 0.0 {
        return Ok((train.clone(), train));
    }
    let n_test = ((a.n as f64) * a.holdout).round().max(1.0) as usize;
    Ok((
        train,
        generate_ads_split(n_test, a.max_items, a.seed, "test")?,
    ))
}

fn admm_config(s: &SolverArgs, seed_value: u64) -> Result<AdmmConfig> {
    let cfg = AdmmConfig {
        rho: s.rho,
        max_outer: s.max_outer,
        max_power: s.max_power,
        inner_tol: s.inner_tol,
        tol: s.tol,
        fit: FitConfig {
            seed: seed::derive(seed_value, "refit"),
            ..FitConfig::default()
        },
        mode: match s.event_mode {
            Mode::Strict => EventMode::Strict,
            Mode::AllAnchors => EventMode::AllAnchors,
        },
        init: match s.init {
            Init::Predictor => AdmmInit::Predictor,
            Init::Uniform => AdmmInit::Uniform,
        },
        adaptive_rho: s.adaptive_rho,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn gd_config(s: &SolverArgs, n: usize, seed_value: u64, minibatch: bool) -> Result<FitConfig> {
    if !(s.lr > 0.0) || !(s.grad_tol > 0.0) {
        return Err(invalid("--lr and --grad-tol must be positive"));
    }
    if !(s.batch_frac > 0.0 && s.batch_frac <= 1.0) {
        return Err(invalid(format!(
            "--batch-frac must lie in (0, 1], got {}",
            s.batch_frac
        )));
    }
    Ok(FitConfig {
        epochs: s.epochs,
        step_size: s.lr,
        batch_size: if minibatch {
            ((n as f64) * s.batch_frac).ceil().max(1.0) as usize
        } else {
            0
        },
        seed: seed::derive(seed_value, "gd"),
        tol: s.grad_tol,
    })
}

fn initial_predictor(s: &SolverArgs, d: usize, seed_value: u64) -> Predictor {
    if s.hidden.is_empty() {
        Predictor::linear(d)
    } else {
        Predictor::feed_forward(d, s.hidden.clone(), seed::derive(seed_value, "predictor"))
    }
}

pub(crate) enum Diag {
    Spectral(Vec<DiagRecord>),
    Gradient(Vec<f64>),
}

pub(crate) struct Scores {
    pub ci: f64,
    pub iauc: f64,
    pub rmse: f64,
    pub n: usize,
    pub d: usize,
}

/// Everything a fit leaves behind.
pub(crate) struct Outcome {
    pub predictor: Predictor,
    /// Extra `(name, index, value)` model rows, e.g. group coefficients.
    pub extra: Vec<(String, usize, f64)>,
    pub pi: Vec<f64>,
    pub diag: Diag,
    pub baseline: Option<StepFunction>,
    pub hazards: Vec<SmoothedHazard>,
    pub scores: Scores,
    pub converged: bool,
}

/// Cumulative hazard of a smoothed hazard, tabulated on `[0, hi]` and read
/// by linear interpolation.
struct Cumulative {
    step: f64,
    values: Vec<f64>,
}

impl Cumulative {
    fn new(h: &SmoothedHazard, hi: f64, points: usize) -> Self {
        let step = hi.max(f64::MIN_POSITIVE) / points as f64;
        let mut values = vec![0.0; points + 1];
        for k in 1..=points {
            let (a, b) = ((k - 1) as f64 * step, k as f64 * step);
            values[k] = values[k - 1] + h.integral(a, b, 4).max(0.0);
        }
        Self { step, values }
    }

    fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let x = t / self.step;
        let k = x.floor() as usize;
        if k + 1 >= self.values.len() {
            return *self.values.last().unwrap_or(&0.0);
        }
        let f = x - k as f64;
        self.values[k] * (1.0 - f) + self.values[k + 1] * f
    }
}

fn survival_scores(
    test: &SurvivalDataset,
    risk: &[f64],
    grid: usize,
    surv: impl Fn(f64) -> f64,
) -> Result<Scores> {
    if grid < 2 {
        return Err(invalid("--grid must be at least 2"));
    }
    Ok(Scores {
        ci: metrics::concordance_index(test, risk)?,
        iauc: metrics::integrated_auc(test, risk, grid)?,
        rmse: metrics::rmse_vs_km(test, surv, grid)?,
        n: test.n(),
        d: test.d(),
    })
}

fn require_classes(ds: &SurvivalDataset) -> Result<Vec<usize>> {
    ds.classes().map(|c| c.to_vec()).ok_or_else(|| {
        Error::Usage("this model needs class labels (--class-column or generated data)".into())
    })
}

fn unsupported(model: ModelKind, method: Method) -> Error {
    Error::Usage(format!("method {method:?} is not available for model {model:?}").to_lowercase())
}

/// Fits `s.model` on the training split and scores it on the test split.
pub(crate) fn fit_model(a: &DataArgs, s: &SolverArgs) -> Result<Outcome> {
    if s.model == ModelKind::Counting {
        return fit_counting(a, s);
    }
    let needs_classes = matches!(s.model, ModelKind::Dhh | ModelKind::Hetero);
    let (train, test) = split_survival(load_survival(a, needs_classes)?, a)?;
    let preset = WeightPreset::from_str(&s.weights)?;
    if s.model == ModelKind::Coxph && preset != WeightPreset::Unit {
        return Err(Error::Usage("--weights applies to --model weighted".into()));
    }
    let w = preset.build(&train)?;
    let start = initial_predictor(s, train.d(), a.seed);
    match (s.model, s.method) {
        (ModelKind::Coxph | ModelKind::Weighted, Method::Spectral) => {
            let res = admm_fit_survival(&train, &w, &start, &admm_config(s, a.seed)?)?;
            proportional(
                res.predictor,
                res.pi,
                Diag::Spectral(res.diagnostics),
                res.converged,
                &train,
                &test,
                s,
            )
        }
        (ModelKind::Coxph | ModelKind::Weighted, Method::Gd) => {
            let (p, hist) =
                gd_mle_fit_weighted(&train, &w, &start, &gd_config(s, train.n(), a.seed, false)?)?;
            let pi = p.scores_for(&train)?;
            proportional(p, pi, Diag::Gradient(hist), true, &train, &test, s)
        }
        (ModelKind::Coxph, Method::GdMinibatch) => {
            let (p, hist) =
                gd_minibatch_fit(&train, &start, &gd_config(s, train.n(), a.seed, true)?)?;
            let pi = p.scores_for(&train)?;
            proportional(p, pi, Diag::Gradient(hist), true, &train, &test, s)
        }
        (ModelKind::Hetero, Method::Spectral) => fit_hetero(&train, &test, &w, s, a.seed),
        (ModelKind::Dhh, Method::Spectral) => {
            let classes = require_classes(&train)?;
            let res = dhh_fit(&train, &classes, &start, &alternating_config(s, a.seed)?)?;
            let test_classes = require_classes(&test)?;
            let k = res.baselines.len();
            if test_classes.iter().any(|&c| c >= k) {
                return Err(invalid("test split has a class unseen in training"));
            }
            let h = res.predictor.scores_for(&test)?;
            let (_, hi) = test.time_range();
            let cum: Vec<Cumulative> = res
                .baselines
                .iter()
                .map(|b| Cumulative::new(b, hi, 2000))
                .collect();
            let risk: Vec<f64> = h.iter().map(|v| v.ln()).collect();
            let scores = survival_scores(&test, &risk, s.grid, |t| {
                h.iter()
                    .zip(&test_classes)
                    .map(|(h, &c)| (-cum[c].eval(t) * h).exp())
                    .sum::<f64>()
                    / h.len() as f64
            })?;
            Ok(Outcome {
                predictor: res.predictor,
                extra: Vec::new(),
                pi: res.pi,
                diag: Diag::Spectral(res.diagnostics),
                baseline: None,
                hazards: res.baselines,
                scores,
                converged: res.converged,
            })
        }
        (ModelKind::Aft, Method::Spectral) => {
            let res = aft_fit(&train, &start, &alternating_config(s, a.seed)?)?;
            let eta = res.predictor.eta(test.features(), test.n());
            let (_, hi) = test.time_range();
            let reach = eta.iter().cloned().fold(0.0, f64::max).exp() * hi;
            let cum = Cumulative::new(&res.baselines[0], reach, 4000);
            let scores = survival_scores(&test, &eta, s.grid, |t| {
                eta.iter()
                    .map(|e| (-cum.eval(t * e.exp())).exp())
                    .sum::<f64>()
                    / eta.len() as f64
            })?;
            Ok(Outcome {
                predictor: res.predictor,
                extra: Vec::new(),
                pi: res.pi,
                diag: Diag::Spectral(res.diagnostics),
                baseline: None,
                hazards: res.baselines,
                scores,
                converged: res.converged,
            })
        }
        (model, method) => Err(unsupported(model, method)),
    }
}

fn alternating_config(s: &SolverArgs, seed_value: u64) -> Result<AlternatingConfig> {
    if s.rounds == 0 {
        return Err(invalid("--rounds must be at least 1"));
    }
    Ok(AlternatingConfig {
        outer_rounds: s.rounds,
        admm: admm_config(s, seed_value)?,
        ..AlternatingConfig::default()
    })
}

/// Outcome of a proportional-hazards fit with a Breslow baseline.
fn proportional(
    predictor: Predictor,
    pi: Vec<f64>,
    diag: Diag,
    converged: bool,
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    s: &SolverArgs,
) -> Result<Outcome> {
    let baseline = breslow_baseline(train, &predictor.scores_for(train)?)?;
    let h = predictor.scores_for(test)?;
    let risk: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let scores = survival_scores(test, &risk, s.grid, |t| {
        population_survival(&baseline, &h, t)
    })?;
    Ok(Outcome {
        predictor,
        extra: Vec::new(),
        pi,
        diag,
        baseline: Some(baseline),
        hazards: Vec::new(),
        scores,
        converged,
    })
}

/// One-hot group features: class `c` carries its own intercept.
fn one_hot_spec(classes: Vec<usize>) -> HeterogeneousSpec {
    let k = classes.iter().max().map_or(0, |m| m + 1);
    let mut z = vec![0.0; k * k];
    for c in 0..k {
        z[c * k + c] = 1.0;
    }
    HeterogeneousSpec {
        classes,
        group_features: z,
        q: k,
    }
}

fn fit_hetero(
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    w: &WeightMatrix,
    s: &SolverArgs,
    seed_value: u64,
) -> Result<Outcome> {
    if !s.hidden.is_empty() {
        return Err(Error::Usage(
            "the heterogeneous model uses a linear predictor".into(),
        ));
    }
    let spec = one_hot_spec(require_classes(train)?);
    let res = heterogeneous_fit(train, &spec, w, &admm_config(s, seed_value)?)?;
    let k = spec.n_classes();
    let test_spec = HeterogeneousSpec {
        classes: require_classes(test)?,
        ..spec.clone()
    };
    if test_spec.classes.iter().any(|&c| c >= k) {
        return Err(invalid("test split has a class unseen in training"));
    }
    let train_h: Vec<f64> = res
        .log_scores(train, &spec)
        .iter()
        .map(|e| e.exp())
        .collect();
    let baseline = breslow_baseline(train, &train_h)?;
    let risk = res.log_scores(test, &test_spec);
    let h: Vec<f64> = risk.iter().map(|e| e.exp()).collect();
    let scores = survival_scores(test, &risk, s.grid, |t| {
        population_survival(&baseline, &h, t)
    })?;
    let extra = res
        .eta
        .iter()
        .enumerate()
        .map(|(k, v)| ("eta".to_string(), k, *v))
        .collect();
    Ok(Outcome {
        predictor: Predictor::linear_with(res.theta.clone()),
        extra,
        pi: res.pi,
        diag: Diag::Spectral(res.diagnostics),
        baseline: Some(baseline),
        hazards: Vec::new(),
        scores,
        converged: res.converged,
    })
}

fn fit_counting(a: &DataArgs, s: &SolverArgs) -> Result<Outcome> {
    if s.weights != "unit" {
        return Err(Error::Usage("the counting model takes unit weights".into()));
    }
    let (train, test) = load_journeys(a)?;
    let start = initial_predictor(s, train.d(), a.seed);
    let (predictor, pi, diag, converged) = match s.method {
        Method::Spectral => {
            let res = counting_fit(&train, &start, &admm_config(s, a.seed)?)?;
            (
                res.predictor,
                res.pi,
                Diag::Spectral(res.diagnostics),
                res.converged,
            )
        }
        Method::Gd => {
            let (p, hist) = gd_full_fit(
                &train,
                &start,
                &gd_config(s, train.n_items(), a.seed, false)?,
            )?;
            // scores are scale-free; shifting by the max keeps exp finite
            let eta = p.eta(train.item_features(), train.n_items());
            let top = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pi = eta.iter().map(|e| (e - top).exp()).collect();
            (p, pi, Diag::Gradient(hist), true)
        }
        m => return Err(unsupported(ModelKind::Counting, m)),
    };
    let risk = predictor.eta(test.item_features(), test.n_items());
    let scores = Scores {
        ci: counting_concordance(&test, &risk)?,
        iauc: f64::NAN,
        rmse: f64::NAN,
        n: test.journeys.len(),
        d: test.d(),
    };
    Ok(Outcome {
        predictor,
        extra: Vec::new(),
        pi,
        diag,
        baseline: None,
        hazards: Vec::new(),
        scores,
        converged,
    })
}

fn model_name(m: ModelKind) -> &'static str {
    match m {
        ModelKind::Coxph => "coxph",
        ModelKind::Weighted => "weighted",
        ModelKind::Hetero => "hetero",
        ModelKind::Dhh => "dhh",
        ModelKind::Aft => "aft",
        ModelKind::Counting => "counting",
    }
}

const METRICS_HEADER: [&str; 8] = ["dataset", "model", "ci", "iauc", "rmse", "n", "d", "seed"];

fn write_metrics(
    path: &Path,
    dataset: &str,
    model: ModelKind,
    sc: &Scores,
    seed_value: u64,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(METRICS_HEADER)?;
    w.write_record([
        dataset.to_string(),
        model_name(model).to_string(),
        fmt(sc.ci),
        fmt(sc.iauc),
        fmt(sc.rmse),
        sc.n.to_string(),
        sc.d.to_string(),
        seed_value.to_string(),
    ])?;
    finish(w, path)
}

pub fn run_fit(args: &FitArgs) -> Result<()> {
    let out = fit_model(&args.data, &args.solver)?;
    prepare_out(&args.out)?;
    let dir = &args.out;

    let path = dir.join("model.csv");
    let mut w = csv_writer(&path)?;
    out.predictor.write_rows(&mut w)?;
    for (name, k, v) in &out.extra {
        w.write_record([name.clone(), k.to_string(), v.to_string()])?;
    }
    finish(w, &path)?;

    let path = dir.join("pi.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["index", "pi"])?;
    for (k, v) in out.pi.iter().enumerate() {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    finish(w, &path)?;

    let path = dir.join("diag.csv");
    match &out.diag {
        Diag::Spectral(records) => write_diag(records, &path)?,
        Diag::Gradient(hist) => {
            let mut w = csv_writer(&path)?;
            w.write_record(["iter", "nll"])?;
            for (k, v) in hist.iter().enumerate() {
                w.write_record([k.to_string(), v.to_string()])?;
            }
            finish(w, &path)?;
        }
    }

    if let Some(b) = &out.baseline {
        b.write_csv(&dir.join("baseline.csv"))?;
    }
    if !out.hazards.is_empty() {
        let path = dir.join("hazard.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["class", "time", "hazard"])?;
        for (c, h) in out.hazards.iter().enumerate() {
            let (lo, hi) = h.domain();
            for t in metrics::even_grid(lo.max(0.0), hi, args.solver.grid.max(2)) {
                w.write_record([c.to_string(), t.to_string(), h.eval(t).to_string()])?;
            }
        }
        finish(w, &path)?;
    }

    write_metrics(
        &dir.join("metrics.csv"),
        &dataset_name(&args.data),
        args.solver.model,
        &out.scores,
        args.data.seed,
    )?;
    if !out.converged {
        eprintln!("warning: the solver stopped at its iteration cap before meeting the tolerance");
    }
    Ok(())
}

pub fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let predictor = Predictor::load_csv(&args.model_file)?;
    let name = dataset_name(&args.data);
    let scores = if args.model == ModelKind::Counting {
        let (_, test) = load_journeys(&DataArgs {
            holdout: 0.0,
            ..args.data.clone()
        })?;
        let risk = predictor.eta(test.item_features(), test.n_items());
        Scores {
            ci: counting_concordance(&test, &risk)?,
            iauc: f64::NAN,
            rmse: f64::NAN,
            n: test.journeys.len(),
            d: test.d(),
        }
    } else {
        let ds = load_survival(&args.data, false)?;
        let h = predictor.scores_for(&ds)?;
        let baseline = match &args.baseline_file {
            Some(p) => StepFunction::load_csv(p)?,
            None => breslow_baseline(&ds, &h)?,
        };
        let risk: Vec<f64> = h.iter().map(|v| v.ln()).collect();
        survival_scores(&ds, &risk, args.grid, |t| {
            population_survival(&baseline, &h, t)
        })?
    };
    prepare_out(&args.out)?;
    write_metrics(
        &args.out.join("metrics.csv"),
        &name,
        args.model,
        &scores,
        args.data.seed,
    )
}

pub fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let a = &args.data;
    check_data_args(a)?;
    prepare_out(&args.out)?;
    match a.generate {
        Generator::Linear => {
            let (ds, theta) = generate_linear_cox(a.n, a.d, None, a.censor, a.seed)?;
            let ds = {
                let n = ds.n();
                ds.with_classes((0..n).map(|i| i % a.n_classes).collect())
            }?;
            ds.write_csv(&args.out.join("data.csv"))?;
            Predictor::linear_with(theta).write_csv(&args.out.join("truth.csv"))
        }
        Generator::Ads => {
            let jds = generate_ads_split(a.n, a.max_items, a.seed, "train")?;
            jds.write_csv(&args.out.join("journeys.csv"), &args.out.join("items.csv"))
        }
    }
}

pub fn run_bias_check(args: &BiasArgs) -> Result<()> {
    let a = &args.data;
    check_data_args(a)?;
    let (ds, theta) = match &a.data {
        Some(_) => {
            let ds = load_survival(a, false)?;
            let d = ds.d();
            (ds, vec![0.0; d])
        }
        None => generate_linear_cox(a.n, a.d, None, a.censor, a.seed)?,
    };
    if args.batch_sizes.is_empty() {
        return Err(Error::Usage("--batch-sizes is empty".into()));
    }
    let mut rows = Vec::new();
    for &b in &args.batch_sizes {
        let closed = bias_closed_form(&ds, &theta, b, args.enum_cap)?;
        let (mean, se) = bias_empirical(
            &ds,
            &theta,
            b,
            args.draws,
            seed::derive(a.seed, &format!("bias-{b}")),
        )?;
        rows.push([
            b.to_string(),
            closed.to_string(),
            mean.to_string(),
            se.to_string(),
        ]);
    }
    prepare_out(&args.out)?;
    let path = args.out.join("bias.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "batch_size",
        "closed_form",
        "empirical_mean",
        "empirical_stderr",
    ])?;
    for r in rows {
        w.write_record(r)?;
    }
    finish(w, &path)
}

pub const RHO_GRID: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0];

pub fn run_rho_sweep(args: &SweepArgs, threads: usize) -> Result<()> {
    // fail fast on configuration errors shared by every cell
    admm_config(&args.solver, args.data.seed)?;
    check_data_args(&args.data)?;
    let cells: Vec<(f64, std::result::Result<(Scores, bool), String>)> =
        parallel_map(&RHO_GRID, threads, |&rho| {
            // a fixed ρ per cell; balancing would erase the grid
            let solver = SolverArgs {
                rho,
                adaptive_rho: false,
                method: Method::Spectral,
                ..args.solver.clone()
            };
            let r = fit_model(&args.data, &solver).map(|o| (o.scores, o.converged));
            (rho, r.map_err(|e| e.to_string()))
        });
    prepare_out(&args.out)?;
    let path = args.out.join("rho_sweep.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["rho", "ci", "iauc", "rmse", "converged", "status"])?;
    for (rho, r) in &cells {
        match r {
            Ok((sc, conv)) => w.write_record([
                rho.to_string(),
                fmt(sc.ci),
                fmt(sc.iauc),
                fmt(sc.rmse),
                conv.to_string(),
                "ok".into(),
            ])?,
            Err(e) => w.write_record([
                rho.to_string(),
                "NaN".into(),
                "NaN".into(),
                "NaN".into(),
                "false".into(),
                e.replace(['\n', ','], " "),
            ])?,
        }
    }
    finish(w, &path)?;

    let ci = |target: f64| {
        cells
            .iter()
            .find(|(r, _)| *r == target)
            .and_then(|(_, v)| v.as_ref().ok().map(|(s, _)| s.ci))
    };
    let best = cells
        .iter()
        .filter_map(|(_, v)| v.as_ref().ok().map(|(s, _)| s.ci))
        .fold(f64::NEG_INFINITY, f64::max);
    let line = match ci(1.0) {
        Some(c) => format!(
            "rho=1 ci={c} grid_max={best} within_0.05={}\n",
            c >= best - 0.05
        ),
        None => "rho=1 cell failed\n".to_string(),
    };
    let log = args.out.join("rho_sweep.log");
    std::fs::write(&log, &line).map_err(|e| Error::io(&log, e))?;
    eprint!("{line}");
    Ok(())
}

/// Maps `f` over `items` on up to `threads` scoped workers, keeping order.
pub(crate) fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    threads: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if k >= items.len() {
                    break;
                }
                let r = f(&items[k]);
                results.lock().expect("worker panicked")[k] = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|r| r.expect("every cell is computed"))
        .collect()
}
