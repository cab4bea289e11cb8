use crate::data::SurvivalDataset;
use crate::error::{invalid, Error, Result};
use crate::estimators::{
    breslow_aft, breslow_class, default_bandwidth, smoothed_hazard, Kernel, SmoothedHazard,
};
use crate::predictors::{Predictor, PredictorKind};
use crate::spectral::{admm_fit_survival, AdmmConfig, DiagRecord};
use crate::weights::WeightMatrix;

/// Weights below this fraction of the largest weight are raised to it.
pub const WEIGHT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AlternatingConfig {
    pub outer_rounds: usize,
    /// Kernel bandwidth; a tenth of the time range when unset.
    pub bandwidth: Option<f64>,
    pub kernel: Kernel,
    /// Stop once `‖θ_new − θ_old‖ ≤ tol ‖θ_new‖`.
    pub tol: f64,
    pub admm: AdmmConfig,
}

impl Default for AlternatingConfig {
    fn default() -> Self {
        Self {
            outer_rounds: 10,
            bandwidth: None,
            kernel: Kernel::default(),
            tol: 1e-4,
            admm: AdmmConfig::default(),
        }
    }
}

impl AlternatingConfig {
    fn bandwidth_for(&self, ds: &SurvivalDataset) -> Result<f64> {
        if self.outer_rounds == 0 {
            return Err(invalid("outer_rounds must be at least 1"));
        }
        let b = self.bandwidth.unwrap_or_else(|| default_bandwidth(ds));
        if !(b > 0.0 && b.is_finite()) {
            return Err(invalid(format!("bandwidth must be positive, got {b}")));
        }
        Ok(b)
    }
}

/// Per-round record of the outer loop. Monotonicity is not guaranteed.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub weighted_nll: f64,
    pub theta_change: f64,
    pub admm_iters: usize,
    pub admm_converged: bool,
}

#[derive(Debug, Clone)]
pub struct AlternatingResult {
    pub predictor: Predictor,
    /// One baseline per class (DHH) or a single baseline (AFT).
    pub baselines: Vec<SmoothedHazard>,
    pub pi: Vec<f64>,
    pub rounds: Vec<RoundRecord>,
    /// Diagnostics of the last spectral fit.
    pub diagnostics: Vec<DiagRecord>,
    pub converged: bool,
}

fn floor_weights(mut data: Vec<f64>, n: usize) -> Result<WeightMatrix> {
    let max = data.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return Err(Error::Degenerate(
            "baseline hazard is identically zero on the queried range".into(),
        ));
    }
    let lo = WEIGHT_FLOOR * max;
    for w in data.iter_mut() {
        *w = w.max(lo);
    }
    Ok(WeightMatrix::Dense { n, data })
}

/// `W_ji = λ̂_{c_j}(T_i)`.
pub fn dhh_weights(
    ds: &SurvivalDataset,
    classes: &[usize],
    baselines: &[SmoothedHazard],
) -> Result<WeightMatrix> {
    let n = ds.n();
    let table: Vec<Vec<f64>> = baselines
        .iter()
        .map(|h| (0..n).map(|i| h.eval(ds.time(i))).collect())
        .collect();
    let mut data = Vec::with_capacity(n * n);
    for j in 0..n {
        data.extend_from_slice(&table[classes[j]]);
    }
    floor_weights(data, n)
}

/// `W_ji = λ̂0(T_i e^{θᵀx_j})`, queries clamped to the baseline's event-time range.
pub fn aft_weights(
    ds: &SurvivalDataset,
    theta: &[f64],
    baseline: &SmoothedHazard,
) -> Result<WeightMatrix> {
    let n = ds.n();
    let (lo, hi) = match (baseline.support.first(), baseline.support.last()) {
        (Some(a), Some(z)) => (a.0, z.0),
        _ => return Err(Error::Degenerate("baseline hazard has no support".into())),
    };
    let mut data = Vec::with_capacity(n * n);
    for j in 0..n {
        let scale = ds
            .x(j)
            .iter()
            .zip(theta)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .exp();
        for i in 0..n {
            data.push(baseline.eval((ds.time(i) * scale).clamp(lo, hi)));
        }
    }
    floor_weights(data, n)
}

fn check_events_per_class(ds: &SurvivalDataset, classes: &[usize], k: usize) -> Result<()> {
    let mut events = vec![0usize; k];
    for i in 0..ds.n() {
        if ds.event(i) {
            events[classes[i]] += 1;
        }
    }
    match events.iter().position(|&e| e == 0) {
        Some(c) => Err(Error::Degenerate(format!(
            "class {c} has no events; its baseline is undefined"
        ))),
        None => Ok(()),
    }
}

fn relative_change(old: &[f64], new: &[f64]) -> f64 {
    let diff: f64 = old
        .iter()
        .zip(new)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = new.iter().map(|a| a * a).sum::<f64>().sqrt();
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(f64::MIN_POSITIVE)
    }
}

/// Generic outer loop: weights from the current baselines, one spectral fit,
/// then a baseline refresh at the fitted predictor.
fn alternate(
    ds: &SurvivalDataset,
    predictor: &Predictor,
    cfg: &AlternatingConfig,
    mut baselines: Vec<SmoothedHazard>,
    weights: impl Fn(&Predictor, &[SmoothedHazard]) -> Result<WeightMatrix>,
    refresh: impl Fn(&Predictor) -> Result<Vec<SmoothedHazard>>,
) -> Result<AlternatingResult> {
    let mut pred = predictor.clone();
    let mut rounds = Vec::new();
    let mut last = None;
    let mut converged = false;
    for round in 0..cfg.outer_rounds {
        let w = weights(&pred, &baselines)?;
        let res = admm_fit_survival(ds, &w, &pred, &cfg.admm)?;
        let change = relative_change(&pred.params, &res.predictor.params);
        rounds.push(RoundRecord {
            round,
            weighted_nll: res.diagnostics.last().map_or(f64::NAN, |d| d.nll),
            theta_change: change,
            admm_iters: res.diagnostics.len(),
            admm_converged: res.converged,
        });
        pred = res.predictor.clone();
        baselines = refresh(&pred)?;
        last = Some(res);
        if change <= cfg.tol {
            converged = true;
            break;
        }
    }
    let res = last.expect("at least one round");
    Ok(AlternatingResult {
        predictor: pred,
        baselines,
        pi: res.pi,
        rounds,
        diagnostics: res.diagnostics,
        converged,
    })
}

/// Class-specific baselines with a shared relative-risk predictor.
pub fn dhh_fit(
    ds: &SurvivalDataset,
    classes: &[usize],
    predictor: &Predictor,
    cfg: &AlternatingConfig,
) -> Result<AlternatingResult> {
    let b = cfg.bandwidth_for(ds)?;
    if classes.len() != ds.n() {
        return Err(invalid("class vector length does not match n"));
    }
    let k = crate::estimators::n_classes(classes);
    let init = breslow_class(ds, classes, &vec![1.0; ds.n()], b, cfg.kernel)?;
    check_events_per_class(ds, classes, k)?;
    alternate(
        ds,
        predictor,
        cfg,
        init,
        |_, base| dhh_weights(ds, classes, base),
        |p| breslow_class(ds, classes, &p.scores_for(ds)?, b, cfg.kernel),
    )
}

/// Accelerated failure time model; the predictor must be linear.
pub fn aft_fit(
    ds: &SurvivalDataset,
    predictor: &Predictor,
    cfg: &AlternatingConfig,
) -> Result<AlternatingResult> {
    let b = cfg.bandwidth_for(ds)?;
    if predictor.kind != PredictorKind::LinearExp {
        return Err(Error::Usage(
            "the AFT model requires a linear predictor".into(),
        ));
    }
    if ds.n_events() == 0 {
        return Err(Error::Degenerate(
            "no events; the baseline is undefined".into(),
        ));
    }
    let init = smoothed_hazard(ds, b, cfg.kernel)?;
    alternate(
        ds,
        predictor,
        cfg,
        vec![init],
        |p, base| aft_weights(ds, &p.params, &base[0]),
        |p| Ok(vec![breslow_aft(ds, &p.params, b, cfg.kernel)?]),
    )
}
