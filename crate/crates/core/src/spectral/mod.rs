//! Intrinsic-score subproblem solved as the steady state of a score-dependent
//! continuous-time Markov chain, and the ADMM loop around it.

mod admm;
mod chain;
mod problem;

pub use admm::{
    admm_fit, admm_fit_survival, admm_run, render_diag, write_diag, AdmmConfig, AdmmInit,
    AdmmResult, AdmmTrace, DiagRecord, ScoreModel, TableModel,
};
pub use chain::{
    balance_residual, mu_rates, steady_state, steady_state_from, transition_matrix,
    TransitionMatrix, TELEPORT,
};
pub use problem::{Anchor, EventMode, Flows, RankingProblem};

use crate::data::SurvivalDataset;
use crate::error::{invalid, Error, Result};

pub const PI_FLOOR: f64 = 1e-300;

/// `σ_i = ρ log(π_i / h_i) + u_i`.
pub fn sigma(pi: &[f64], target: &[f64], u: &[f64], rho: f64) -> Vec<f64> {
    pi.iter()
        .zip(target)
        .zip(u)
        .map(|((p, h), u)| rho * (p / h).ln() + u)
        .collect()
}

/// Multiplies `π` by the unique `c > 0` with `Σ_i c π_i σ_i(c π) = 0`.
pub fn rescale(pi: &mut [f64], target: &[f64], u: &[f64], rho: f64) {
    let s = sigma(pi, target, u, rho);
    let total: f64 = pi.iter().sum();
    let weighted: f64 = pi.iter().zip(&s).map(|(p, s)| p * s).sum();
    let c = (-weighted / (rho * total)).exp();
    for p in pi.iter_mut() {
        *p = (*p * c).max(PI_FLOOR);
    }
}

/// Per-item `π_i · ∂F/∂π_i` for `F = κ·nll(π) + uᵀπ + ρ D(π‖h)`.
pub fn stationarity(
    problem: &RankingProblem,
    pi: &[f64],
    target: &[f64],
    u: &[f64],
    rho: f64,
) -> Vec<f64> {
    let f = problem.flows(pi);
    let s = sigma(pi, target, u, rho);
    (0..pi.len())
        .map(|i| pi[i] * (f.out[i] + s[i]) - f.inflow[i])
        .collect()
}

#[derive(Debug, Clone)]
pub struct SpectralOutcome {
    pub pi: Vec<f64>,
    /// Power steps taken; each step uses rates refreshed at the current `π`.
    pub power_iters: usize,
    pub converged: bool,
    /// Last `max_i |log(π_new/π_old)|`.
    pub change: f64,
}

/// One uniformized power step of the chain with rates `P(π)`, followed by the
/// scale correction. Returns the new `π` and `max |log(π_new/π)|`.
fn power_step(
    problem: &RankingProblem,
    pi: &[f64],
    target: &[f64],
    u: &[f64],
    rho: f64,
) -> (Vec<f64>, f64) {
    let n = pi.len();
    let f = problem.flows(pi);
    let s = sigma(pi, target, u, rho);
    let (mut a_plus, mut a_minus) = (0.0, 0.0);
    for i in 0..n {
        let v = pi[i] * s[i];
        if s[i] > 0.0 {
            a_plus += v;
        } else if s[i] < 0.0 {
            a_minus -= v;
        }
    }
    let denom = a_plus + a_minus;
    let total: f64 = pi.iter().sum();
    let mut row = vec![0.0; n];
    let mut inflow = f.inflow;
    for i in 0..n {
        row[i] = f.out[i] + TELEPORT * (n - 1) as f64;
        inflow[i] += TELEPORT * (total - pi[i]);
        if denom > 0.0 {
            if s[i] > 0.0 {
                row[i] += 2.0 * s[i] * a_minus / denom;
            } else if s[i] < 0.0 {
                inflow[i] += 2.0 * pi[i] * (-s[i]) * a_plus / denom;
            }
        }
    }
    let lambda = (1.05 * row.iter().cloned().fold(0.0, f64::max)).max(rho);
    let mut next: Vec<f64> = (0..n)
        .map(|i| (pi[i] + (inflow[i] - pi[i] * row[i]) / lambda).max(PI_FLOOR))
        .collect();
    rescale(&mut next, target, u, rho);
    let change = next
        .iter()
        .zip(pi)
        .map(|(a, b)| (a / b).ln().abs())
        .fold(0.0, f64::max);
    (next, change)
}

/// Iterates power steps with refreshed rates until successive iterates agree
/// to `tol` in max log-ratio or `max_steps` is reached.
pub fn spectral_solve(
    problem: &RankingProblem,
    target: &[f64],
    u: &[f64],
    rho: f64,
    init: &[f64],
    max_steps: usize,
    tol: f64,
) -> SpectralOutcome {
    let mut pi = init.to_vec();
    rescale(&mut pi, target, u, rho);
    let mut change = f64::INFINITY;
    for step in 0..max_steps {
        let (next, ch) = power_step(problem, &pi, target, u, rho);
        pi = next;
        change = ch;
        if ch < tol {
            return SpectralOutcome {
                pi,
                power_iters: step + 1,
                converged: true,
                change,
            };
        }
    }
    SpectralOutcome {
        pi,
        power_iters: max_steps,
        converged: false,
        change,
    }
}

/// Fixed point of `π ← ssd(P(π))` for the intrinsic-score subproblem,
/// started at `target`. Runs at most `max_outer * max_power` power steps.
pub fn iterative_spectral_ranking(
    problem: &RankingProblem,
    rho: f64,
    u: &[f64],
    target: &[f64],
    max_outer: usize,
    max_power: usize,
    tol: f64,
) -> Result<SpectralOutcome> {
    let n = problem.n_items();
    if target.len() != n || u.len() != n {
        return Err(invalid("target and u must have one entry per item"));
    }
    if !(rho > 0.0) {
        return Err(invalid("rho must be positive"));
    }
    if target.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(invalid("target scores must be positive and finite"));
    }
    let cap = max_outer.saturating_mul(max_power).max(1);
    let out = spectral_solve(problem, target, u, rho, target, cap, tol);
    if !out.converged {
        return Err(Error::NonConvergence {
            what: "spectral ranking",
            iters: out.power_iters,
            residual: out.change,
        });
    }
    Ok(out)
}

/// Won/lost anchor sets per sample of a survival dataset.
pub fn winner_loser_sets(
    ds: &SurvivalDataset,
    mode: EventMode,
) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    RankingProblem::survival(ds, crate::weights::WeightMatrix::Unit, mode)
        .expect("unit weights are valid")
        .winner_loser_sets()
}
