use std::io::Write;
use std::path::Path;

use super::problem::{EventMode, RankingProblem};
use super::spectral_solve;
use crate::data::SurvivalDataset;
use crate::error::{invalid, Error, Result};
use crate::predictors::{max_entropy_fit, FitConfig, Predictor};
use crate::weights::WeightMatrix;

/// Residual ratio that triggers a `ρ` update under residual balancing.
pub const BALANCE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdmmInit {
    /// `π̂` starts at the initial predictor's scores.
    #[default]
    Predictor,
    /// `π̂ = 1/n`.
    Uniform,
}

#[derive(Debug, Clone)]
pub struct AdmmConfig {
    pub rho: f64,
    pub max_outer: usize,
    /// Cap on power steps per intrinsic-score solve.
    pub max_power: usize,
    /// Floor of the power-iteration tolerance; the solver loosens it to a
    /// tenth of the last outer residual.
    pub inner_tol: f64,
    /// Stop when both primal and dual residuals fall below this.
    pub tol: f64,
    pub fit: FitConfig,
    pub mode: EventMode,
    pub init: AdmmInit,
    /// Residual balancing: halve or double `ρ` when one residual exceeds
    /// the other by the factor `BALANCE`.
    pub adaptive_rho: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_outer: 20_000,
            max_power: 200,
            inner_tol: 1e-10,
            tol: 1e-8,
            fit: FitConfig::default(),
            mode: EventMode::Strict,
            init: AdmmInit::Predictor,
            adaptive_rho: true,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if self.max_outer == 0 || self.max_power == 0 {
            return Err(invalid("iteration caps must be positive"));
        }
        if !(self.tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(invalid("tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagRecord {
    pub iter: usize,
    pub nll: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub power_iters: usize,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmResult {
    pub predictor: Predictor,
    pub pi: Vec<f64>,
    pub u: Vec<f64>,
    pub diagnostics: Vec<DiagRecord>,
    pub converged: bool,
}

impl AdmmResult {
    pub fn write_diagnostics(&self, path: &Path) -> Result<()> {
        write_diag(&self.diagnostics, path)
    }
}

pub fn write_diag(records: &[DiagRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "iter",
        "nll",
        "primal_residual",
        "dual_residual",
        "power_iters",
        "rho",
    ])?;
    for r in records {
        w.write_record([
            r.iter.to_string(),
            r.nll.to_string(),
            r.primal_residual.to_string(),
            r.dual_residual.to_string(),
            r.power_iters.to_string(),
            r.rho.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn rms(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// A positive score model fit inside the ADMM loop.
pub trait ScoreModel {
    /// Log-scores of every item of the ranking problem.
    fn log_scores(&self) -> Vec<f64>;
    /// Max-entropy refit against intrinsic scores `pi` and duals `u`.
    fn refit(&mut self, pi: &[f64], u: &[f64], rho: f64) -> Result<()>;
}

/// A `Predictor` evaluated on a fixed feature table.
pub struct TableModel<'a> {
    pub predictor: Predictor,
    x: &'a [f64],
    n: usize,
    fit: FitConfig,
}

impl<'a> TableModel<'a> {
    pub fn new(predictor: Predictor, x: &'a [f64], n: usize, fit: FitConfig) -> Result<Self> {
        predictor.predict_scores(x, n)?;
        Ok(Self {
            predictor,
            x,
            n,
            fit,
        })
    }
}

impl ScoreModel for TableModel<'_> {
    fn log_scores(&self) -> Vec<f64> {
        self.predictor.eta(self.x, self.n)
    }

    fn refit(&mut self, pi: &[f64], u: &[f64], rho: f64) -> Result<()> {
        self.predictor = max_entropy_fit(&self.predictor, self.x, self.n, pi, u, rho, &self.fit)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdmmTrace {
    pub pi: Vec<f64>,
    pub u: Vec<f64>,
    pub diagnostics: Vec<DiagRecord>,
    pub converged: bool,
}

/// ADMM over `π = h(X)`: intrinsic scores by the spectral solver, the model
/// by its max-entropy refit, then the dual step `u += ρ log(π / h)`.
pub fn admm_run<M: ScoreModel>(
    problem: &RankingProblem,
    model: &mut M,
    cfg: &AdmmConfig,
) -> Result<AdmmTrace> {
    cfg.validate()?;
    let n = problem.n_items();
    let mut rho = cfg.rho;
    let mut target: Vec<f64> = model.log_scores().iter().map(|e| e.exp()).collect();
    if target.len() != n {
        return Err(invalid("model scores do not match the number of items"));
    }
    let mut u = vec![0.0; n];
    let mut pi = match cfg.init {
        AdmmInit::Predictor => target.clone(),
        AdmmInit::Uniform => vec![1.0 / n as f64; n],
    };
    let mut diagnostics = Vec::new();
    let mut best_primal = f64::INFINITY;
    let mut converged = false;
    let mut last_res = f64::INFINITY;
    for iter in 0..cfg.max_outer {
        // inexact inner solves while the outer residuals are still large
        let inner = cfg.inner_tol.max(0.1 * last_res);
        let step = spectral_solve(problem, &target, &u, rho, &pi, cfg.max_power, inner);
        pi = step.pi;
        model.refit(&pi, &u, rho)?;
        let eta = model.log_scores();
        let next: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        if next.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::Divergence {
                what: "ADMM",
                iter,
                detail: "predictor scores left the positive range".into(),
            });
        }
        for i in 0..n {
            u[i] += rho * (pi[i] / next[i]).ln();
        }
        let primal = rms(&pi, &next);
        let dual = rho * rms(&next, &target);
        target = next;
        diagnostics.push(DiagRecord {
            iter,
            nll: problem.report_nll(&eta),
            primal_residual: primal,
            dual_residual: dual,
            power_iters: step.power_iters,
            rho,
        });
        // ρ changes cause transient spikes; only a blow-up counts
        if !primal.is_finite() || primal > 1e3 * best_primal.max(1e-3) {
            return Err(Error::Divergence {
                what: "ADMM",
                iter,
                detail: format!("primal residual {primal:e} vs minimum {best_primal:e}"),
            });
        }
        best_primal = best_primal.min(primal);
        last_res = primal.max(dual);
        if primal.max(dual) <= cfg.tol {
            converged = true;
            break;
        }
        if cfg.adaptive_rho {
            if primal > BALANCE * dual {
                rho *= 2.0;
            } else if dual > BALANCE * primal {
                rho /= 2.0;
            }
        }
    }
    Ok(AdmmTrace {
        pi,
        u,
        diagnostics,
        converged,
    })
}

/// `admm_run` for a predictor on a feature table with one row per item.
pub fn admm_fit(
    problem: &RankingProblem,
    x: &[f64],
    predictor: &Predictor,
    cfg: &AdmmConfig,
) -> Result<AdmmResult> {
    let mut model = TableModel::new(predictor.clone(), x, problem.n_items(), cfg.fit.clone())?;
    let trace = admm_run(problem, &mut model, cfg)?;
    Ok(AdmmResult {
        predictor: model.predictor,
        pi: trace.pi,
        u: trace.u,
        diagnostics: trace.diagnostics,
        converged: trace.converged,
    })
}

/// Survival-data entry point; the likelihood is scaled by `1/n`.
pub fn admm_fit_survival(
    ds: &SurvivalDataset,
    w: &WeightMatrix,
    predictor: &Predictor,
    cfg: &AdmmConfig,
) -> Result<AdmmResult> {
    let problem = RankingProblem::survival(ds, w.clone(), cfg.mode)?.normalized();
    admm_fit(&problem, ds.features(), predictor, cfg)
}

/// Line-delimited text rendering of the diagnostics, one record per line.
pub fn render_diag(records: &[DiagRecord], mut out: impl Write) -> std::io::Result<()> {
    for r in records {
        writeln!(
            out,
            "iter={} nll={} primal={:e} dual={:e} power_iters={} rho={}",
            r.iter, r.nll, r.primal_residual, r.dual_residual, r.power_iters, r.rho
        )?;
    }
    Ok(())
}
