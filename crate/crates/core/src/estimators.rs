//! Kaplan-Meier, Nelson-Aalen, kernel-smoothed hazards and Breslow baselines.

use std::path::Path;
use std::str::FromStr;

use statrs::function::erf::erf;

use crate::data::SurvivalDataset;
use crate::error::{invalid, Error, Result};

/// Right-continuous step function.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub left_value: f64,
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, left_value: f64) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(invalid("knots and values differ in length"));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("knots must be strictly ascending"));
        }
        Ok(Self {
            knots,
            values,
            left_value,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.knots.partition_point(|&x| x <= t);
        if k == 0 {
            self.left_value
        } else {
            self.values[k - 1]
        }
    }

    /// Value just before `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        let k = self.knots.partition_point(|&x| x < t);
        if k == 0 {
            self.left_value
        } else {
            self.values[k - 1]
        }
    }

    /// Jump at each knot.
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = self.left_value;
        self.values
            .iter()
            .map(|&v| {
                let dv = v - prev;
                prev = v;
                dv
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["knot", "value"])?;
        for (k, v) in self.knots.iter().zip(&self.values) {
            w.write_record([k.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a `knot,value` file; the left value is taken as zero, which
    /// suits cumulative hazards.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let (mut knots, mut values) = (Vec::new(), Vec::new());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| {
                    Error::Schema(format!(
                        "{}: row {row} is not a knot,value pair",
                        path.display()
                    ))
                })
            };
            knots.push(parse(0)?);
            values.push(parse(1)?);
        }
        Self::new(knots, values, 0.0)
    }
}

/// Distinct event times with (events, at-risk count, Σ scores over risk set).
fn event_groups(ds: &SurvivalDataset, scores: Option<&[f64]>) -> Vec<(f64, usize, f64)> {
    let order = ds.sorted_order();
    let n = ds.n();
    let mut suffix = vec![0.0; n + 1];
    for p in (0..n).rev() {
        suffix[p] = suffix[p + 1] + scores.map_or(1.0, |s| s[order[p]]);
    }
    let mut out = Vec::new();
    let mut p = 0;
    while p < n {
        let t = ds.time(order[p]);
        let mut q = p;
        let mut events = 0;
        while q < n && ds.time(order[q]) == t {
            events += ds.event(order[q]) as usize;
            q += 1;
        }
        if events > 0 {
            out.push((t, events, suffix[p]));
        }
        p = q;
    }
    out
}

pub fn kaplan_meier(ds: &SurvivalDataset) -> StepFunction {
    let mut s = 1.0;
    let (knots, values) = event_groups(ds, None)
        .into_iter()
        .map(|(t, d, r)| {
            s *= 1.0 - d as f64 / r;
            (t, s)
        })
        .unzip();
    StepFunction {
        knots,
        values,
        left_value: 1.0,
    }
}

pub fn nelson_aalen(ds: &SurvivalDataset) -> StepFunction {
    breslow_cumulative(ds, None)
}

fn breslow_cumulative(ds: &SurvivalDataset, scores: Option<&[f64]>) -> StepFunction {
    let mut acc = 0.0;
    let (knots, values) = event_groups(ds, scores)
        .into_iter()
        .map(|(t, d, r)| {
            acc += d as f64 / r;
            (t, acc)
        })
        .unzip();
    StepFunction {
        knots,
        values,
        left_value: 0.0,
    }
}

fn check_scores(ds: &SurvivalDataset, scores: &[f64]) -> Result<()> {
    if scores.len() != ds.n() {
        return Err(invalid("score vector length does not match n"));
    }
    if let Some(i) = scores.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(invalid(format!("score {i} is not positive and finite")));
    }
    Ok(())
}

/// Cumulative Breslow baseline hazard; its increments are `d / Σ_{R} scores`.
pub fn breslow_baseline(ds: &SurvivalDataset, scores: &[f64]) -> Result<StepFunction> {
    check_scores(ds, scores)?;
    Ok(breslow_cumulative(ds, Some(scores)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    #[default]
    Epanechnikov,
    Uniform,
    /// Gaussian with σ = 1/2 truncated to [-1, 1] and renormalized.
    GaussianTruncated,
}

const GAUSS_SIGMA: f64 = 0.5;

impl Kernel {
    pub fn eval(self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Epanechnikov => 0.75 * (1.0 - u * u),
            Kernel::Uniform => 0.5,
            Kernel::GaussianTruncated => {
                let mass = erf(1.0 / (GAUSS_SIGMA * std::f64::consts::SQRT_2));
                let z = u / GAUSS_SIGMA;
                (-0.5 * z * z).exp() / (GAUSS_SIGMA * (2.0 * std::f64::consts::PI).sqrt() * mass)
            }
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            "uniform" => Ok(Kernel::Uniform),
            "gaussian" | "gaussian-truncated" => Ok(Kernel::GaussianTruncated),
            other => Err(Error::Usage(format!("unknown kernel `{other}`"))),
        }
    }
}

/// `λ(t) = (1/b) Σ_j K((t - t_j)/b) m_j` over support points `(t_j, m_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedHazard {
    pub bandwidth: f64,
    pub kernel: Kernel,
    pub support: Vec<(f64, f64)>,
}

impl SmoothedHazard {
    pub fn new(bandwidth: f64, kernel: Kernel, mut support: Vec<(f64, f64)>) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(invalid(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        support.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            bandwidth,
            kernel,
            support,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let b = self.bandwidth;
        let lo = self.support.partition_point(|p| p.0 < t - b);
        let hi = self.support.partition_point(|p| p.0 <= t + b);
        self.support[lo..hi]
            .iter()
            .map(|&(tj, m)| self.kernel.eval((t - tj) / b) * m)
            .sum::<f64>()
            / b
    }

    /// Support range padded by one bandwidth.
    pub fn domain(&self) -> (f64, f64) {
        match (self.support.first(), self.support.last()) {
            (Some(a), Some(z)) => (a.0 - self.bandwidth, z.0 + self.bandwidth),
            _ => (0.0, 0.0),
        }
    }

    /// Trapezoid rule on `steps` equal intervals.
    pub fn integral(&self, a: f64, b: f64, steps: usize) -> f64 {
        let steps = steps.max(1);
        let h = (b - a) / steps as f64;
        let mut acc = 0.5 * (self.eval(a) + self.eval(b));
        for k in 1..steps {
            acc += self.eval(a + k as f64 * h);
        }
        acc * h
    }

    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|p| p.1).sum()
    }
}

pub fn default_bandwidth(ds: &SurvivalDataset) -> f64 {
    let (lo, hi) = ds.time_range();
    let b = (hi - lo) / 10.0;
    if b > 0.0 {
        b
    } else {
        hi.max(1.0) / 10.0
    }
}

/// Kernel-smoothed Nelson-Aalen hazard.
pub fn smoothed_hazard(ds: &SurvivalDataset, b: f64, kernel: Kernel) -> Result<SmoothedHazard> {
    let support = event_groups(ds, None)
        .into_iter()
        .map(|(t, d, r)| (t, d as f64 / r))
        .collect();
    SmoothedHazard::new(b, kernel, support)
}

/// Kernel-smoothed Breslow hazard.
pub fn smoothed_breslow(
    ds: &SurvivalDataset,
    scores: &[f64],
    b: f64,
    kernel: Kernel,
) -> Result<SmoothedHazard> {
    check_scores(ds, scores)?;
    let support = event_groups(ds, Some(scores))
        .into_iter()
        .map(|(t, d, r)| (t, d as f64 / r))
        .collect();
    SmoothedHazard::new(b, kernel, support)
}

pub fn n_classes(classes: &[usize]) -> usize {
    classes.iter().max().map_or(0, |&c| c + 1)
}

/// Per-class smoothed Breslow hazards; class `c` uses only its own event
/// times and its own members of each risk set.
pub fn breslow_class(
    ds: &SurvivalDataset,
    classes: &[usize],
    scores: &[f64],
    b: f64,
    kernel: Kernel,
) -> Result<Vec<SmoothedHazard>> {
    check_scores(ds, scores)?;
    if classes.len() != ds.n() {
        return Err(invalid("class vector length does not match n"));
    }
    let k = n_classes(classes);
    let mut counts = vec![0usize; k];
    for &c in classes {
        counts[c] += 1;
    }
    if let Some(c) = counts.iter().position(|&m| m == 0) {
        return Err(invalid(format!("class {c} is empty")));
    }
    let order = ds.sorted_order();
    let n = ds.n();
    // suffix[c]: running Σ scores of class c over sorted positions >= p
    let mut suffix = vec![0.0; k];
    let mut support: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];
    let mut p = n;
    while p > 0 {
        let t = ds.time(order[p - 1]);
        let mut q = p;
        while q > 0 && ds.time(order[q - 1]) == t {
            q -= 1;
            suffix[classes[order[q]]] += scores[order[q]];
        }
        for &i in &order[q..p] {
            if ds.event(i) {
                let c = classes[i];
                support[c].push((t, 1.0 / suffix[c]));
            }
        }
        p = q;
    }
    support
        .into_iter()
        .map(|s| SmoothedHazard::new(b, kernel, s))
        .collect()
}

/// Smoothed baseline on the accelerated time scale: each event `j` carries
/// mass `e^{-θᵀx_j} / Σ_{k∈R_j} e^{-2θᵀx_k}`.
pub fn breslow_aft(
    ds: &SurvivalDataset,
    theta: &[f64],
    b: f64,
    kernel: Kernel,
) -> Result<SmoothedHazard> {
    if theta.len() != ds.d() {
        return Err(invalid("theta length does not match d"));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(invalid("theta must be finite"));
    }
    let eta: Vec<f64> = (0..ds.n())
        .map(|i| ds.x(i).iter().zip(theta).map(|(x, t)| x * t).sum())
        .collect();
    let order = ds.sorted_order();
    let n = ds.n();
    let mut suffix = vec![0.0; n + 1];
    for p in (0..n).rev() {
        suffix[p] = suffix[p + 1] + (-2.0 * eta[order[p]]).exp();
    }
    let support = (0..n)
        .filter(|&j| ds.event(j))
        .map(|j| (ds.time(j), (-eta[j]).exp() / suffix[ds.risk_start(j)]))
        .collect();
    SmoothedHazard::new(b, kernel, support)
}
