use nalgebra::DMatrix;

use super::problem::RankingProblem;
use crate::error::{invalid, Error, Result};

/// Uniform rate between every ordered pair of states; keeps chains irreducible.
pub const TELEPORT: f64 = 1e-12;

/// Dense rates `μ_ji` (from `j` to `i`): `κ Σ_{a won by i, j ∈ R_a} W_{j,a} / S_a`.
pub fn mu_rates(problem: &RankingProblem, pi: &[f64]) -> DMatrix<f64> {
    let n = problem.n_items();
    let k = problem.kappa();
    let mut mu = DMatrix::zeros(n, n);
    for a in problem.anchors() {
        let members = problem.members(a);
        let s: f64 = members.iter().map(|&j| problem.weight(j, a) * pi[j]).sum();
        for &j in members {
            if j != a.winner {
                mu[(j, a.winner)] += k * problem.weight(j, a) / s;
            }
        }
    }
    mu
}

#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    pub mu: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub sigma: Vec<f64>,
}

impl TransitionMatrix {
    /// Off-diagonal rates `μ + Δ`.
    pub fn rates(&self) -> DMatrix<f64> {
        let mut p = &self.mu + &self.delta;
        p.fill_diagonal(0.0);
        p
    }

    /// Generator with diagonal equal to minus the row sums.
    pub fn rate_matrix(&self) -> DMatrix<f64> {
        generator(self.rates())
    }
}

fn generator(mut p: DMatrix<f64>) -> DMatrix<f64> {
    p.fill_diagonal(0.0);
    for i in 0..p.nrows() {
        let s: f64 = p.row(i).sum();
        p[(i, i)] = -s;
    }
    p
}

/// `μ(π)` plus the correction `Δ_ji = 2 π_i |σ_i| σ_j / (A₊ + |A₋|)` for
/// `σ_j > 0 > σ_i`, where `A± = Σ_{±} π σ`.
pub fn transition_matrix(
    problem: &RankingProblem,
    pi: &[f64],
    sigma: &[f64],
) -> Result<TransitionMatrix> {
    let n = problem.n_items();
    if pi.len() != n || sigma.len() != n {
        return Err(invalid("pi and sigma must have one entry per item"));
    }
    let mu = mu_rates(problem, pi);
    let (mut a_plus, mut a_minus) = (0.0, 0.0);
    for i in 0..n {
        if sigma[i] > 0.0 {
            a_plus += pi[i] * sigma[i];
        } else if sigma[i] < 0.0 {
            a_minus -= pi[i] * sigma[i];
        }
    }
    let mut delta = DMatrix::zeros(n, n);
    if a_plus > 0.0 && a_minus > 0.0 {
        let denom = a_plus + a_minus;
        for j in (0..n).filter(|&j| sigma[j] > 0.0) {
            for i in (0..n).filter(|&i| sigma[i] < 0.0) {
                delta[(j, i)] = 2.0 * pi[i] * (-sigma[i]) * sigma[j] / denom;
            }
        }
    }
    Ok(TransitionMatrix {
        mu,
        delta,
        sigma: sigma.to_vec(),
    })
}

/// `Σ_{j≠i} π_j P_ji − π_i Σ_{j≠i} P_ij` for off-diagonal rates `P`.
pub fn balance_residual(rates: &DMatrix<f64>, pi: &[f64]) -> Vec<f64> {
    let n = pi.len();
    (0..n)
        .map(|i| {
            let mut into = 0.0;
            let mut outof = 0.0;
            for j in 0..n {
                if j != i {
                    into += pi[j] * rates[(j, i)];
                    outof += rates[(i, j)];
                }
            }
            into - pi[i] * outof
        })
        .collect()
}

/// Stationary distribution of the generator `q` (row sums zero), by power
/// iteration on `I + Q/λ` with `λ = 1.05 max|Q_ii|`, from the uniform vector.
pub fn steady_state(q: &DMatrix<f64>, max_iters: usize, tol: f64) -> Result<Vec<f64>> {
    let n = q.nrows();
    steady_state_from(q, &vec![1.0 / n.max(1) as f64; n], max_iters, tol)
}

pub fn steady_state_from(
    q: &DMatrix<f64>,
    start: &[f64],
    max_iters: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let n = q.nrows();
    if q.ncols() != n || start.len() != n || n == 0 {
        return Err(invalid(
            "rate matrix must be square and match the start vector",
        ));
    }
    if start.iter().any(|v| !(*v > 0.0)) {
        return Err(invalid("start vector must be positive"));
    }
    let mut rates = q.clone();
    rates.fill_diagonal(0.0);
    if rates.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(invalid(
            "off-diagonal rates must be non-negative and finite",
        ));
    }
    if n > 1 {
        rates.add_scalar_mut(TELEPORT);
    }
    let gen = generator(rates);
    let lambda = 1.05 * (0..n).map(|i| -gen[(i, i)]).fold(0.0, f64::max);
    let total: f64 = start.iter().sum();
    let mut pi: Vec<f64> = start.iter().map(|v| v / total).collect();
    if n == 1 || lambda == 0.0 {
        return Ok(pi);
    }
    let residual = |pi: &[f64]| -> f64 {
        (0..n)
            .map(|i| (0..n).map(|j| pi[j] * gen[(j, i)]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    };
    let mut last = f64::INFINITY;
    for it in 0..max_iters {
        let mut next = vec![0.0; n];
        for j in 0..n {
            let pj = pi[j];
            if pj == 0.0 {
                continue;
            }
            for i in 0..n {
                next[i] += pj * gen[(j, i)];
            }
        }
        for i in 0..n {
            next[i] = pi[i] + next[i] / lambda;
        }
        let s: f64 = next.iter().sum();
        pi = next.into_iter().map(|v| (v / s).max(0.0)).collect();
        if it % 8 == 7 || it + 1 == max_iters {
            last = residual(&pi);
            if last <= tol {
                return Ok(pi);
            }
        }
    }
    Err(Error::NonConvergence {
        what: "steady state",
        iters: max_iters,
        residual: last,
    })
}
