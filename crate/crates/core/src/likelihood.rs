//! Negative log partial likelihood (1/n form), gradients, mini-batch losses
//! and the mini-batch bias.

use rand::seq::index::sample as sample_indices;

use crate::data::SurvivalDataset;
use crate::error::{invalid, Result};
use crate::seed;
use crate::weights::WeightMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub per_sample_terms: Vec<f64>,
}

/// Loss with its gradient in the log-score `η = log h`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaLoss {
    pub value: f64,
    pub grad_eta: Vec<f64>,
    pub per_sample_terms: Vec<f64>,
}

pub fn linear_eta(ds: &SurvivalDataset, theta: &[f64]) -> Vec<f64> {
    (0..ds.n())
        .map(|i| ds.x(i).iter().zip(theta).map(|(x, t)| x * t).sum())
        .collect()
}

#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Sum of event terms over `members` (sorted by time, then index), with risk
/// sets restricted to `members`. Gradient entries are aligned with `members`.
fn restricted_terms(ds: &SurvivalDataset, members: &[usize], eta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = members.len();
    let mut start = vec![0; m];
    for p in 1..m {
        start[p] = if ds.time(members[p]) == ds.time(members[p - 1]) {
            start[p - 1]
        } else {
            p
        };
    }
    let mut lse = vec![f64::NEG_INFINITY; m + 1];
    for p in (0..m).rev() {
        lse[p] = log_add_exp(eta[members[p]], lse[p + 1]);
    }
    let mut terms = vec![0.0; m];
    let mut inv = vec![f64::NEG_INFINITY; m];
    for p in 0..m {
        let i = members[p];
        if ds.event(i) {
            let l = lse[start[p]];
            terms[p] = l - eta[i];
            inv[start[p]] = log_add_exp(inv[start[p]], -l);
        }
    }
    let mut acc = f64::NEG_INFINITY;
    let mut grad = vec![0.0; m];
    for p in 0..m {
        acc = log_add_exp(acc, inv[p]);
        let j = members[p];
        grad[p] = (eta[j] + acc).exp() - if ds.event(j) { 1.0 } else { 0.0 };
    }
    (terms, grad)
}

/// Weighted loss in log-scores: `(1/n) Σ_i Δ_i [log Σ_{R_i} W_ji e^{η_j} − log(W_ii e^{η_i})]`.
pub fn nll_eta(ds: &SurvivalDataset, w: &WeightMatrix, eta: &[f64]) -> EtaLoss {
    let n = ds.n();
    let nf = n as f64;
    if w.is_column_constant() {
        // column constants cancel inside each anchor's ratio
        let order = ds.sorted_order();
        let (terms, grad) = restricted_terms(ds, order, eta);
        let mut per = vec![0.0; n];
        let mut grad_eta = vec![0.0; n];
        for (p, &i) in order.iter().enumerate() {
            per[i] = terms[p];
            grad_eta[i] = grad[p] / nf;
        }
        let value = per.iter().sum::<f64>() / nf;
        return EtaLoss {
            value,
            grad_eta,
            per_sample_terms: per,
        };
    }
    let mut per = vec![0.0; n];
    let mut grad_eta = vec![0.0; n];
    let mut logw = Vec::new();
    for i in 0..n {
        if !ds.event(i) {
            continue;
        }
        let members = ds.risk_members(i);
        logw.clear();
        logw.extend(members.iter().map(|&j| w.get(j, i).ln() + eta[j]));
        let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let l = mx + logw.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        per[i] = l - w.get(i, i).ln() - eta[i];
        for (&j, &lv) in members.iter().zip(&logw) {
            grad_eta[j] += (lv - l).exp() / nf;
        }
        grad_eta[i] -= 1.0 / nf;
    }
    EtaLoss {
        value: per.iter().sum::<f64>() / nf,
        grad_eta,
        per_sample_terms: per,
    }
}

pub fn nll(ds: &SurvivalDataset, w: &WeightMatrix, scores: &[f64]) -> Result<f64> {
    if scores.len() != ds.n() {
        return Err(invalid("score vector length does not match n"));
    }
    if let Some(i) = scores.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(invalid(format!("score {i} is not positive and finite")));
    }
    w.validate(ds.n())?;
    let eta: Vec<f64> = scores.iter().map(|s| s.ln()).collect();
    Ok(nll_eta(ds, w, &eta).value)
}

fn chain_linear(ds: &SurvivalDataset, loss: EtaLoss) -> LossReport {
    let mut gradient = vec![0.0; ds.d()];
    for (i, g) in loss.grad_eta.iter().enumerate() {
        for (gk, x) in gradient.iter_mut().zip(ds.x(i)) {
            *gk += g * x;
        }
    }
    LossReport {
        value: loss.value,
        gradient,
        per_sample_terms: loss.per_sample_terms,
    }
}

pub fn nll_gradient_linear(ds: &SurvivalDataset, theta: &[f64]) -> Result<LossReport> {
    nll_gradient_linear_weighted(ds, &WeightMatrix::Unit, theta)
}

pub fn nll_gradient_linear_weighted(
    ds: &SurvivalDataset,
    w: &WeightMatrix,
    theta: &[f64],
) -> Result<LossReport> {
    if theta.len() != ds.d() {
        return Err(invalid("theta length does not match d"));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(invalid("theta must be finite"));
    }
    let eta = linear_eta(ds, theta);
    Ok(chain_linear(ds, nll_eta(ds, w, &eta)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawMode {
    WithoutReplacement,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    pub indices: Vec<usize>,
    pub draw_mode: DrawMode,
}

impl BatchSpec {
    pub fn fixed(indices: Vec<usize>) -> Self {
        Self {
            indices,
            draw_mode: DrawMode::Fixed,
        }
    }

    fn sorted_members(&self, ds: &SurvivalDataset) -> Result<Vec<usize>> {
        if self.indices.is_empty() {
            return Err(invalid("batch is empty"));
        }
        if self.indices.iter().any(|&i| i >= ds.n()) {
            return Err(invalid("batch index out of range"));
        }
        let mut m = self.indices.clone();
        m.sort_by_key(|&i| ds.rank(i));
        if m.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("batch indices must be distinct"));
        }
        Ok(m)
    }
}

/// Mini-batch loss in log-scores; gradient pairs are (sample, ∂/∂η).
pub fn nll_minibatch_eta(
    ds: &SurvivalDataset,
    eta: &[f64],
    batch: &BatchSpec,
) -> Result<(f64, Vec<(usize, f64)>)> {
    let members = batch.sorted_members(ds)?;
    let b = members.len() as f64;
    let (terms, grad) = restricted_terms(ds, &members, eta);
    let value = terms.iter().sum::<f64>() / b;
    let grad = members.iter().zip(grad).map(|(&i, g)| (i, g / b)).collect();
    Ok((value, grad))
}

pub fn nll_minibatch(ds: &SurvivalDataset, theta: &[f64], batch: &BatchSpec) -> Result<f64> {
    if theta.len() != ds.d() {
        return Err(invalid("theta length does not match d"));
    }
    let eta = linear_eta(ds, theta);
    Ok(nll_minibatch_eta(ds, &eta, batch)?.0)
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64)
}

/// Calls `f` with every size-`k` subset of `0..n` in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut t = k;
        while t > 0 && idx[t - 1] == n - k + t - 1 {
            t -= 1;
        }
        if t == 0 {
            return;
        }
        idx[t - 1] += 1;
        for s in t..k {
            idx[s] = idx[s - 1] + 1;
        }
    }
}

/// `log(Σ_{R_i ∩ B} e^η / Σ_{R_i} e^η)` for a batch given as a membership mask.
fn log_kept_fraction(members: &[usize], eta: &[f64], in_batch: &[bool]) -> f64 {
    let mx = members
        .iter()
        .map(|&j| eta[j])
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut kept, mut total) = (0.0, 0.0);
    for &j in members {
        let w = (eta[j] - mx).exp();
        total += w;
        if in_batch[j] {
            kept += w;
        }
    }
    (kept / total).ln()
}

/// Expected loss gap `E_B[L − L_B]` over uniform size-`batch_size` batches,
/// evaluated per event through the conditional expectation given `i ∈ B`.
/// Enumerates batches when there are at most `n_enum_or_mc` of them, else
/// uses that many Monte-Carlo draws per event.
pub fn bias_closed_form(
    ds: &SurvivalDataset,
    theta: &[f64],
    batch_size: usize,
    n_enum_or_mc: usize,
) -> Result<f64> {
    let n = ds.n();
    if batch_size == 0 || batch_size > n {
        return Err(invalid(format!("batch size must lie in [1, {n}]")));
    }
    if theta.len() != ds.d() {
        return Err(invalid("theta length does not match d"));
    }
    let eta = linear_eta(ds, theta);
    let enumerate = binomial(n - 1, batch_size - 1) <= n_enum_or_mc as f64;
    let mut rng = seed::stream(0, "bias-closed-form");
    let mut total = 0.0;
    let mut in_batch = vec![false; n];
    for i in 0..n {
        if !ds.event(i) {
            continue;
        }
        let members = ds.risk_members(i);
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let (mut acc, mut count) = (0.0, 0usize);
        let mut eval = |pick: &[usize], acc: &mut f64| {
            in_batch.iter_mut().for_each(|b| *b = false);
            in_batch[i] = true;
            for &p in pick {
                in_batch[others[p]] = true;
            }
            *acc += log_kept_fraction(members, &eta, &in_batch);
        };
        if enumerate {
            for_each_combination(n - 1, batch_size - 1, |pick| {
                eval(pick, &mut acc);
                count += 1;
            });
        } else {
            for _ in 0..n_enum_or_mc.max(1) {
                let pick = sample_indices(&mut rng, n - 1, batch_size - 1).into_vec();
                eval(&pick, &mut acc);
                count += 1;
            }
        }
        total += acc / count as f64;
    }
    Ok(-total / n as f64)
}

/// Sample mean and standard error of `L − L_B` over uniformly drawn batches.
pub fn bias_empirical(
    ds: &SurvivalDataset,
    theta: &[f64],
    batch_size: usize,
    draws: usize,
    seed_value: u64,
) -> Result<(f64, f64)> {
    let n = ds.n();
    if draws < 2 {
        return Err(invalid("bias_empirical needs at least two draws"));
    }
    if batch_size == 0 || batch_size > n {
        return Err(invalid(format!("batch size must lie in [1, {n}]")));
    }
    if theta.len() != ds.d() {
        return Err(invalid("theta length does not match d"));
    }
    let eta = linear_eta(ds, theta);
    let full = nll_minibatch_eta(ds, &eta, &BatchSpec::fixed((0..n).collect()))?.0;
    let mut rng = seed::stream(seed_value, "bias-batches");
    let (mut sum, mut sumsq) = (0.0, 0.0);
    for _ in 0..draws {
        let batch = BatchSpec {
            indices: sample_indices(&mut rng, n, batch_size).into_vec(),
            draw_mode: DrawMode::WithoutReplacement,
        };
        let gap = full - nll_minibatch_eta(ds, &eta, &batch)?.0;
        sum += gap;
        sumsq += gap * gap;
    }
    let k = draws as f64;
    let mean = sum / k;
    let var = ((sumsq - k * mean * mean) / (k - 1.0)).max(0.0);
    Ok((mean, (var / k).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_linear_cox;

    fn toy(times: &[f64], events: &[bool], x: Vec<f64>, d: usize) -> SurvivalDataset {
        SurvivalDataset::from_columns(times, events, x, d).unwrap()
    }

    #[test]
    fn nll_hand_values() {
        let ds = toy(&[1.0, 2.0], &[true, true], vec![0.0, 0.0], 1);
        let v = nll(&ds, &WeightMatrix::Unit, &[1.0, 1.0]).unwrap();
        assert!((v - 2f64.ln() / 2.0).abs() < 1e-15);

        let ds3 = toy(&[1.0, 2.0, 3.0], &[true; 3], vec![0.0; 3], 1);
        let v = nll(&ds3, &WeightMatrix::Unit, &[2.0, 1.0, 1.0]).unwrap();
        assert!((v - 2.0 * 2f64.ln() / 3.0).abs() < 1e-15);

        let cens = toy(&[1.0, 2.0], &[false, false], vec![0.0, 0.0], 1);
        assert_eq!(nll(&cens, &WeightMatrix::Unit, &[1.0, 3.0]).unwrap(), 0.0);
        assert!(nll(&ds, &WeightMatrix::Unit, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn dense_and_fast_paths_agree() {
        let (ds, th) = generate_linear_cox(30, 3, None, 0.3, 5).unwrap();
        let eta = linear_eta(&ds, &th);
        let a = nll_eta(&ds, &WeightMatrix::Unit, &eta);
        let b = nll_eta(&ds, &WeightMatrix::dense_from_fn(30, |_, _| 1.0), &eta);
        assert!((a.value - b.value).abs() < 1e-12);
        for (x, y) in a.grad_eta.iter().zip(&b.grad_eta) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_hand_value() {
        let ds = toy(&[1.0, 2.0], &[true, true], vec![1.0, 0.0], 1);
        let r = nll_gradient_linear(&ds, &[0.0]).unwrap();
        assert!((r.gradient[0] + 0.25).abs() < 1e-15);
        let same = toy(&[1.0, 2.0, 3.0], &[true; 3], vec![0.7; 3], 1);
        let r = nll_gradient_linear(&same, &[1.3]).unwrap();
        assert!(r.gradient[0].abs() < 1e-12);
    }

    #[test]
    fn minibatch_fixtures() {
        let ds = toy(
            &[1.0, 2.0, 3.0],
            &[true, true, true],
            vec![0.5, -1.0, 2.0],
            1,
        );
        let th = [0.3];
        let full = nll_gradient_linear(&ds, &th).unwrap().value;
        let all = nll_minibatch(&ds, &th, &BatchSpec::fixed(vec![2, 0, 1])).unwrap();
        assert!((full - all).abs() < 1e-15);
        assert_eq!(
            nll_minibatch(&ds, &th, &BatchSpec::fixed(vec![2])).unwrap(),
            0.0
        );
        // batch {0, 2}: R_B(T_0) = {0, 2}, R_B(T_2) = {2}
        let (e0, e2) = (0.15f64, 0.6f64);
        let want = 0.5 * ((e0.exp() + e2.exp()).ln() - e0);
        let got = nll_minibatch(&ds, &th, &BatchSpec::fixed(vec![0, 2])).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn shift_invariance() {
        let (ds, th) = generate_linear_cox(25, 2, None, 0.2, 8).unwrap();
        let ext = ds.with_intercept();
        let mut t2 = th.clone();
        t2.push(3.7);
        let a = nll_gradient_linear(&ds, &th).unwrap().value;
        let b = nll_gradient_linear(&ext, &t2).unwrap().value;
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn bias_fixtures() {
        let (ds, th) = generate_linear_cox(6, 2, None, 0.3, 3).unwrap();
        assert_eq!(bias_closed_form(&ds, &th, 6, 1000).unwrap(), 0.0);
        let (m, s) = bias_empirical(&ds, &th, 6, 10, 1).unwrap();
        assert_eq!((m, s), (0.0, 0.0));
        let one = toy(&[1.0], &[true], vec![0.2], 1);
        assert_eq!(bias_closed_form(&one, &[1.0], 1, 10).unwrap(), 0.0);

        let (ds4, th4) = generate_linear_cox(4, 2, None, 0.0, 12).unwrap();
        let cf = bias_closed_form(&ds4, &th4, 2, 1000).unwrap();
        let (m, s) = bias_empirical(&ds4, &th4, 2, 100_000, 3).unwrap();
        assert!((cf - m).abs() <= 3.0 * s, "{cf} {m} {s}");
    }

    #[test]
    fn combinations_count() {
        let mut c = 0;
        for_each_combination(9, 4, |_| c += 1);
        assert_eq!(c as f64, binomial(9, 4));
        let mut c = 0;
        for_each_combination(5, 0, |p| {
            assert!(p.is_empty());
            c += 1
        });
        assert_eq!(c, 1);
    }
}
