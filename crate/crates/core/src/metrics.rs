//! Concordance, IPCW time-dependent AUC, integrated AUC and RMSE against
//! the Kaplan-Meier curve. Risk scores are "higher = earlier event".
//!
//! Undefined quantities (no comparable pairs for AUC, no defined grid point
//! for iAUC) are reported as `NaN`.

use crate::data::{JourneyDataset, SurvivalDataset};
use crate::error::{invalid, Result};
use crate::estimators::{kaplan_meier, StepFunction};

pub const DEFAULT_GRID: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub ci: f64,
    pub iauc: f64,
    pub rmse: f64,
    pub grid: Vec<f64>,
}

fn pair_credit(a: f64, b: f64) -> f64 {
    if a > b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

fn check_risk(ds: &SurvivalDataset, risk: &[f64]) -> Result<()> {
    if risk.len() != ds.n() {
        return Err(invalid("risk vector length does not match n"));
    }
    if risk.iter().any(|r| !r.is_finite()) {
        return Err(invalid("risk scores must be finite"));
    }
    Ok(())
}

/// Harrell's C over pairs `T_i < T_j` with `Δ_i = 1`; score ties earn 1/2.
pub fn concordance_index(ds: &SurvivalDataset, risk: &[f64]) -> Result<f64> {
    check_risk(ds, risk)?;
    let order = ds.sorted_order();
    let n = ds.n();
    // later[p] = risks of samples strictly after position p's time, sorted
    let (mut num, mut den) = (0.0, 0.0);
    let mut later: Vec<f64> = Vec::with_capacity(n);
    let mut q = n;
    while q > 0 {
        let t = ds.time(order[q - 1]);
        let mut p = q;
        while p > 0 && ds.time(order[p - 1]) == t {
            p -= 1;
        }
        for &i in &order[p..q] {
            if ds.event(i) && !later.is_empty() {
                let below = later.partition_point(|&r| r < risk[i]);
                let tied = later.partition_point(|&r| r <= risk[i]) - below;
                num += below as f64 + 0.5 * tied as f64;
                den += later.len() as f64;
            }
        }
        for &i in &order[p..q] {
            let k = later.partition_point(|&r| r < risk[i]);
            later.insert(k, risk[i]);
        }
        q = p;
    }
    Ok(if den == 0.0 { 0.5 } else { num / den })
}

/// Kaplan-Meier of the censoring distribution, events and censorings swapped.
pub fn censoring_km(ds: &SurvivalDataset) -> StepFunction {
    let order = ds.sorted_order();
    let n = ds.n();
    let (mut knots, mut values) = (Vec::new(), Vec::new());
    let mut g = 1.0;
    let mut p = 0;
    while p < n {
        let t = ds.time(order[p]);
        let mut q = p;
        let mut censored = 0;
        while q < n && ds.time(order[q]) == t {
            censored += !ds.event(order[q]) as usize;
            q += 1;
        }
        if censored > 0 {
            g *= 1.0 - censored as f64 / (n - p) as f64;
            knots.push(t);
            values.push(g);
        }
        p = q;
    }
    StepFunction {
        knots,
        values,
        left_value: 1.0,
    }
}

/// `ω_i = 1 / Ĝ(O_i⁻)`, zero where `Ĝ` has reached zero.
pub fn ipcw_weights(ds: &SurvivalDataset) -> Vec<f64> {
    let g = censoring_km(ds);
    (0..ds.n())
        .map(|i| {
            let v = g.eval_left(ds.time(i));
            if v > 0.0 {
                1.0 / v
            } else {
                0.0
            }
        })
        .collect()
}

fn auc_with(ds: &SurvivalDataset, risk: &[f64], omega: &[f64], t: f64) -> f64 {
    let mut controls: Vec<f64> = (0..ds.n())
        .filter(|&j| ds.time(j) > t)
        .map(|j| risk[j])
        .collect();
    controls.sort_by(f64::total_cmp);
    let m = controls.len() as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in (0..ds.n()).filter(|&i| ds.event(i) && ds.time(i) <= t && omega[i] > 0.0) {
        let below = controls.partition_point(|&r| r < risk[i]);
        let tied = controls.partition_point(|&r| r <= risk[i]) - below;
        num += omega[i] * (below as f64 + 0.5 * tied as f64);
        den += omega[i] * m;
    }
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

/// Cumulative/dynamic AUC at `t`: cases are events with `O_i ≤ t` weighted
/// by `ω_i`, controls are samples with `O_j > t`.
pub fn auc_at(ds: &SurvivalDataset, risk: &[f64], t: f64) -> Result<f64> {
    check_risk(ds, risk)?;
    Ok(auc_with(ds, risk, &ipcw_weights(ds), t))
}

/// `size` evenly spaced points covering `[lo, hi]`.
pub fn even_grid(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..size)
            .map(|k| {
                if k + 1 == size {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (size - 1) as f64
                }
            })
            .collect(),
    }
}

/// Trapezoid rule over the points with finite values, normalized by the span
/// they cover. A single finite point is returned as is.
pub fn trapezoid_mean(grid: &[f64], values: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(values)
        .filter(|(_, v)| v.is_finite())
        .map(|(t, v)| (*t, *v))
        .collect();
    match pts.len() {
        0 => f64::NAN,
        1 => pts[0].1,
        _ => {
            let span = pts[pts.len() - 1].0 - pts[0].0;
            if span <= 0.0 {
                return pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
            }
            let area: f64 = pts
                .windows(2)
                .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
                .sum();
            area / span
        }
    }
}

/// Mean AUC over an even grid on the observed time range.
pub fn integrated_auc(ds: &SurvivalDataset, risk: &[f64], grid_size: usize) -> Result<f64> {
    check_risk(ds, risk)?;
    if grid_size < 2 {
        return Err(invalid("grid_size must be at least 2"));
    }
    let (lo, hi) = ds.time_range();
    let grid = even_grid(lo, hi, grid_size);
    let omega = ipcw_weights(ds);
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| auc_with(ds, risk, &omega, t))
        .collect();
    Ok(trapezoid_mean(&grid, &values))
}

/// Root-mean-square distance between two curves sampled on a common grid.
pub fn rms_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Population curve `Ŝ(t) = mean_i exp(−Λ̂0(t) h_i)`.
pub fn population_survival(baseline: &StepFunction, scores: &[f64], t: f64) -> f64 {
    let cum = baseline.eval(t);
    scores.iter().map(|h| (-cum * h).exp()).sum::<f64>() / scores.len().max(1) as f64
}

/// RMSE of a predicted population curve against the Kaplan-Meier curve of
/// `ds` on an even grid over its time range.
pub fn rmse_vs_km(
    ds: &SurvivalDataset,
    predicted: impl Fn(f64) -> f64,
    grid_size: usize,
) -> Result<f64> {
    if grid_size < 1 {
        return Err(invalid("grid_size must be at least 1"));
    }
    let (lo, hi) = ds.time_range();
    let km = kaplan_meier(ds);
    let grid = even_grid(lo, hi, grid_size);
    let a: Vec<f64> = grid.iter().map(|&t| km.eval(t)).collect();
    let b: Vec<f64> = grid.iter().map(|&t| predicted(t)).collect();
    Ok(rms_distance(&a, &b))
}

/// CI, iAUC and RMSE of a Cox-type model on `ds`.
pub fn evaluate(
    ds: &SurvivalDataset,
    baseline: &StepFunction,
    scores: &[f64],
    grid_size: usize,
) -> Result<MetricReport> {
    if grid_size < 2 {
        return Err(invalid("grid_size must be at least 2"));
    }
    let (lo, hi) = ds.time_range();
    Ok(MetricReport {
        ci: concordance_index(ds, scores)?,
        iauc: integrated_auc(ds, scores, grid_size)?,
        rmse: rmse_vs_km(ds, |t| population_survival(baseline, scores, t), grid_size)?,
        grid: even_grid(lo, hi, grid_size),
    })
}

/// Per-journey concordance: the clicked item against every other item still
/// at risk at the click. Ties earn 1/2; 0.5 without any pair.
pub fn counting_concordance(jds: &JourneyDataset, risk: &[f64]) -> Result<f64> {
    if risk.len() != jds.n_items() {
        return Err(invalid("risk vector length does not match the item count"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for j in &jds.journeys {
        if let Some((winner, _)) = j.event {
            for other in j.at_risk().filter(|&k| k != winner) {
                num += pair_credit(risk[winner], risk[other]);
                den += 1.0;
            }
        }
    }
    Ok(if den == 0.0 { 0.5 } else { num / den })
}
