//! Positive score models `h(x) = exp(f_θ(x))`: linear and a small ReLU network.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::SurvivalDataset;
use crate::error::{invalid, Error, Result};
use crate::likelihood::{nll_eta, nll_minibatch_eta, BatchSpec, DrawMode};
use crate::seed;
use crate::weights::WeightMatrix;

pub const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorKind {
    LinearExp,
    /// Hidden layer widths; the output layer has one unit.
    FeedForward {
        widths: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub kind: PredictorKind,
    pub d_in: usize,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub step_size: f64,
    /// 0 means full batch.
    pub batch_size: usize,
    pub seed: u64,
    /// Gradient-norm stopping threshold.
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            step_size: 1.0,
            batch_size: 0,
            seed: 0,
            tol: 1e-12,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(invalid("step size must be positive"));
        }
        Ok(())
    }
}

/// (in, out) shapes of each dense layer.
fn layer_shapes(d_in: usize, widths: &[usize]) -> Vec<(usize, usize)> {
    let mut shapes = Vec::with_capacity(widths.len() + 1);
    let mut prev = d_in;
    for &w in widths {
        shapes.push((prev, w));
        prev = w;
    }
    shapes.push((prev, 1));
    shapes
}

impl Predictor {
    pub fn linear(d: usize) -> Self {
        Self {
            kind: PredictorKind::LinearExp,
            d_in: d,
            params: vec![0.0; d],
        }
    }

    pub fn linear_with(theta: Vec<f64>) -> Self {
        Self {
            kind: PredictorKind::LinearExp,
            d_in: theta.len(),
            params: theta,
        }
    }

    fn n_params(d_in: usize, kind: &PredictorKind) -> usize {
        match kind {
            PredictorKind::LinearExp => d_in,
            PredictorKind::FeedForward { widths } => layer_shapes(d_in, widths)
                .iter()
                .map(|(i, o)| i * o + o)
                .sum(),
        }
    }

    pub fn feed_forward_zeros(d: usize, widths: Vec<usize>) -> Self {
        let kind = PredictorKind::FeedForward { widths };
        let params = vec![0.0; Self::n_params(d, &kind)];
        Self {
            kind,
            d_in: d,
            params,
        }
    }

    /// Weights and biases uniform on `±1/sqrt(fan_in)`.
    pub fn feed_forward(d: usize, widths: Vec<usize>, seed_value: u64) -> Self {
        let mut rng = seed::stream(seed_value, "predictor-init");
        let mut params = Vec::new();
        for (fan_in, out) in layer_shapes(d, &widths) {
            let a = 1.0 / (fan_in.max(1) as f64).sqrt();
            for _ in 0..fan_in * out + out {
                params.push(rng.random_range(-a..=a));
            }
        }
        Self {
            kind: PredictorKind::FeedForward { widths },
            d_in: d,
            params,
        }
    }

    pub fn n_parameters(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &[f64], n: usize) -> Result<()> {
        if x.len() != n * self.d_in {
            return Err(invalid(format!(
                "feature matrix has {} entries, expected {n} x {}",
                x.len(),
                self.d_in
            )));
        }
        Ok(())
    }

    /// Log-scores `f_θ(x_i)` for the `n` rows of `x`.
    pub fn eta(&self, x: &[f64], n: usize) -> Vec<f64> {
        match &self.kind {
            PredictorKind::LinearExp => (0..n)
                .map(|i| {
                    x[i * self.d_in..(i + 1) * self.d_in]
                        .iter()
                        .zip(&self.params)
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect(),
            PredictorKind::FeedForward { widths } => {
                let acts = self.forward(x, n, widths);
                acts.last().expect("output layer").clone()
            }
        }
    }

    /// Activations per layer (inputs excluded), each `n × width`, row-major.
    /// Hidden layers hold post-ReLU values; the last holds the raw output.
    fn forward(&self, x: &[f64], n: usize, widths: &[usize]) -> Vec<Vec<f64>> {
        let shapes = layer_shapes(self.d_in, widths);
        let last = shapes.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(shapes.len());
        let mut off = 0;
        for (l, &(fin, fout)) in shapes.iter().enumerate() {
            let w = &self.params[off..off + fin * fout];
            let b = &self.params[off + fin * fout..off + fin * fout + fout];
            off += fin * fout + fout;
            let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
            let mut out = vec![0.0; n * fout];
            for i in 0..n {
                let row = &input[i * fin..(i + 1) * fin];
                for o in 0..fout {
                    let wo = &w[o * fin..(o + 1) * fin];
                    let mut z = b[o];
                    for (a, c) in row.iter().zip(wo) {
                        z += a * c;
                    }
                    out[i * fout + o] = if l == last { z } else { z.max(0.0) };
                }
            }
            acts.push(out);
        }
        acts
    }

    /// Gradient of `Σ_i g_i f_θ(x_i)` with respect to the parameters.
    pub fn vjp(&self, x: &[f64], n: usize, g: &[f64]) -> Vec<f64> {
        match &self.kind {
            PredictorKind::LinearExp => {
                let mut out = vec![0.0; self.d_in];
                for i in 0..n {
                    if g[i] == 0.0 {
                        continue;
                    }
                    for (o, a) in out.iter_mut().zip(&x[i * self.d_in..(i + 1) * self.d_in]) {
                        *o += g[i] * a;
                    }
                }
                out
            }
            PredictorKind::FeedForward { widths } => {
                let shapes = layer_shapes(self.d_in, widths);
                let acts = self.forward(x, n, widths);
                let mut offsets = Vec::with_capacity(shapes.len());
                let mut off = 0;
                for &(fin, fout) in &shapes {
                    offsets.push(off);
                    off += fin * fout + fout;
                }
                let mut grad = vec![0.0; self.params.len()];
                let mut delta: Vec<f64> = g.to_vec();
                for l in (0..shapes.len()).rev() {
                    let (fin, fout) = shapes[l];
                    let off = offsets[l];
                    let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
                    for i in 0..n {
                        let row = &input[i * fin..(i + 1) * fin];
                        for o in 0..fout {
                            let dz = delta[i * fout + o];
                            if dz == 0.0 {
                                continue;
                            }
                            let gw = &mut grad[off + o * fin..off + (o + 1) * fin];
                            for (gk, a) in gw.iter_mut().zip(row) {
                                *gk += dz * a;
                            }
                            grad[off + fin * fout + o] += dz;
                        }
                    }
                    if l > 0 {
                        let w = &self.params[off..off + fin * fout];
                        let prev = &acts[l - 1];
                        let mut next = vec![0.0; n * fin];
                        for i in 0..n {
                            for o in 0..fout {
                                let dz = delta[i * fout + o];
                                if dz == 0.0 {
                                    continue;
                                }
                                for k in 0..fin {
                                    next[i * fin + k] += dz * w[o * fin + k];
                                }
                            }
                            for k in 0..fin {
                                if prev[i * fin + k] <= 0.0 {
                                    next[i * fin + k] = 0.0;
                                }
                            }
                        }
                        delta = next;
                    }
                }
                grad
            }
        }
    }

    pub fn predict_scores(&self, x: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_input(x, n)?;
        let s: Vec<f64> = self.eta(x, n).into_iter().map(f64::exp).collect();
        if let Some(i) = s.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Degenerate(format!(
                "score {i} is not positive and finite"
            )));
        }
        Ok(s)
    }

    pub fn scores_for(&self, ds: &SurvivalDataset) -> Result<Vec<f64>> {
        self.predict_scores(ds.features(), ds.n())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_rows(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_rows<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(["name", "index", "value"])?;
        match &self.kind {
            PredictorKind::LinearExp => {
                for (k, v) in self.params.iter().enumerate() {
                    w.write_record(["theta".to_string(), k.to_string(), v.to_string()])?;
                }
            }
            PredictorKind::FeedForward { widths } => {
                w.write_record(["d_in".to_string(), "0".into(), self.d_in.to_string()])?;
                for (k, width) in widths.iter().enumerate() {
                    w.write_record(["width".to_string(), k.to_string(), width.to_string()])?;
                }
                let mut off = 0;
                for (l, (fin, fout)) in layer_shapes(self.d_in, widths).into_iter().enumerate() {
                    for k in 0..fin * fout {
                        w.write_record([
                            format!("W{l}"),
                            k.to_string(),
                            self.params[off + k].to_string(),
                        ])?;
                    }
                    off += fin * fout;
                    for k in 0..fout {
                        w.write_record([
                            format!("b{l}"),
                            k.to_string(),
                            self.params[off + k].to_string(),
                        ])?;
                    }
                    off += fout;
                }
            }
        }
        Ok(())
    }

    /// Reads the parameter rows written by [`Predictor::write_csv`]; other row
    /// names are ignored.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let mut theta = Vec::new();
        let mut d_in = None;
        let mut widths = Vec::new();
        let mut layer_params = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = || invalid(format!("model row {}: malformed", r + 1));
            if rec.len() < 3 {
                return Err(bad());
            }
            let v: f64 = rec[2].parse().map_err(|_| bad())?;
            match &rec[0] {
                "theta" => theta.push(v),
                "d_in" => d_in = Some(v as usize),
                "width" => widths.push(v as usize),
                name if name.starts_with('W') || name.starts_with('b') => {
                    if name[1..].parse::<usize>().is_ok() {
                        layer_params.push(v)
                    }
                }
                _ => {}
            }
        }
        match d_in {
            None => Ok(Self::linear_with(theta)),
            Some(d) => {
                let kind = PredictorKind::FeedForward { widths };
                if layer_params.len() != Self::n_params(d, &kind) {
                    return Err(invalid(
                        "model file parameter count does not match architecture",
                    ));
                }
                Ok(Self {
                    kind,
                    d_in: d,
                    params: layer_params,
                })
            }
        }
    }
}

/// `Σ_i (−u_i h_i − ρ π_i log h_i + ρ h_i) + RIDGE ‖θ‖²` and its gradient.
pub fn max_entropy_objective(
    p: &Predictor,
    x: &[f64],
    n: usize,
    pi: &[f64],
    u: &[f64],
    rho: f64,
) -> (f64, Vec<f64>) {
    objective_offset(p, x, n, None, pi, u, rho)
}

/// As above with `log h_i = f_θ(x_i) + offset_i`.
fn objective_offset(
    p: &Predictor,
    x: &[f64],
    n: usize,
    offset: Option<&[f64]>,
    pi: &[f64],
    u: &[f64],
    rho: f64,
) -> (f64, Vec<f64>) {
    let mut eta = p.eta(x, n);
    if let Some(o) = offset {
        for (e, o) in eta.iter_mut().zip(o) {
            *e += o;
        }
    }
    let mut value = 0.0;
    let mut g = vec![0.0; n];
    for i in 0..n {
        let h = eta[i].exp();
        value += (rho - u[i]) * h - rho * pi[i] * eta[i];
        g[i] = (rho - u[i]) * h - rho * pi[i];
    }
    let mut grad = p.vjp(x, n, &g);
    for (gk, t) in grad.iter_mut().zip(&p.params) {
        value += RIDGE * t * t;
        *gk += 2.0 * RIDGE * t;
    }
    (value, grad)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Fits the predictor to intrinsic scores. The linear model uses damped
/// Newton steps with Armijo backtracking; the network uses gradient descent
/// with backtracking, full batch or mini-batch.
pub fn max_entropy_fit(
    p: &Predictor,
    x: &[f64],
    n: usize,
    pi: &[f64],
    u: &[f64],
    rho: f64,
    cfg: &FitConfig,
) -> Result<Predictor> {
    max_entropy_fit_offset(p, x, n, None, pi, u, rho, cfg)
}

/// Max-entropy fit with a fixed additive term in the log-score of each row.
#[allow(clippy::too_many_arguments)]
pub fn max_entropy_fit_offset(
    p: &Predictor,
    x: &[f64],
    n: usize,
    offset: Option<&[f64]>,
    pi: &[f64],
    u: &[f64],
    rho: f64,
    cfg: &FitConfig,
) -> Result<Predictor> {
    cfg.validate()?;
    p.check_input(x, n)?;
    if pi.len() != n || u.len() != n || offset.is_some_and(|o| o.len() != n) {
        return Err(invalid("pi, u and offsets must have one entry per row"));
    }
    if pi.iter().any(|v| !(*v > 0.0)) {
        return Err(invalid("pi must be positive"));
    }
    match p.kind {
        PredictorKind::LinearExp => Ok(newton_linear(p, x, n, offset, pi, u, rho, cfg)),
        PredictorKind::FeedForward { .. } => gd_max_entropy(p, x, n, offset, pi, u, rho, cfg),
    }
}

#[allow(clippy::too_many_arguments)]
fn newton_linear(
    p: &Predictor,
    x: &[f64],
    n: usize,
    offset: Option<&[f64]>,
    pi: &[f64],
    u: &[f64],
    rho: f64,
    cfg: &FitConfig,
) -> Predictor {
    let d = p.d_in;
    let mut cur = p.clone();
    let (mut f, mut g) = objective_offset(&cur, x, n, offset, pi, u, rho);
    for _ in 0..cfg.epochs {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= cfg.tol {
            break;
        }
        let mut eta = cur.eta(x, n);
        if let Some(o) = offset {
            for (e, o) in eta.iter_mut().zip(o) {
                *e += o;
            }
        }
        let mut hess = DMatrix::<f64>::zeros(d, d);
        for i in 0..n {
            let c = ((rho - u[i]) * eta[i].exp()).max(0.0);
            let row = &x[i * d..(i + 1) * d];
            for a in 0..d {
                let ca = c * row[a];
                for b in a..d {
                    hess[(a, b)] += ca * row[b];
                }
            }
        }
        for a in 0..d {
            hess[(a, a)] += 2.0 * RIDGE;
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        let gv = DVector::from_column_slice(&g);
        let step: Vec<f64> = match hess.clone().cholesky() {
            Some(ch) => (-ch.solve(&gv)).iter().cloned().collect(),
            None => g.iter().map(|v| -v).collect(),
        };
        let slope: f64 = step.iter().zip(&g).map(|(s, gk)| s * gk).sum();
        // Newton decrement at the rounding level of the objective
        if -slope <= 1e-14 * (1.0 + f.abs()) {
            break;
        }
        let mut a = 1.0;
        let mut accepted = false;
        while a > 1e-14 {
            let cand = Predictor {
                params: cur
                    .params
                    .iter()
                    .zip(&step)
                    .map(|(t, s)| t + a * s)
                    .collect(),
                ..cur.clone()
            };
            let (fc, gc) = objective_offset(&cand, x, n, offset, pi, u, rho);
            if fc <= f + 1e-4 * a * slope {
                cur = cand;
                f = fc;
                g = gc;
                accepted = true;
                break;
            }
            a *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    cur
}

#[allow(clippy::too_many_arguments)]
fn gd_max_entropy(
    p: &Predictor,
    x: &[f64],
    n: usize,
    offset: Option<&[f64]>,
    pi: &[f64],
    u: &[f64],
    rho: f64,
    cfg: &FitConfig,
) -> Result<Predictor> {
    let full_batch = cfg.batch_size == 0 || cfg.batch_size >= n;
    if full_batch {
        let obj = |params: &[f64]| {
            let q = Predictor {
                params: params.to_vec(),
                ..p.clone()
            };
            objective_offset(&q, x, n, offset, pi, u, rho)
        };
        let (params, _) = gd_backtracking(p.params.clone(), obj, cfg)?;
        return Ok(Predictor {
            params,
            ..p.clone()
        });
    }
    let mut rng = seed::stream(cfg.seed, "max-entropy-batches");
    let mut cur = p.clone();
    let d = p.d_in;
    let mut step = cfg.step_size;
    for _ in 0..cfg.epochs {
        let perm = rand::seq::index::sample(&mut rng, n, n).into_vec();
        for chunk in perm.chunks(cfg.batch_size) {
            let xb: Vec<f64> = chunk
                .iter()
                .flat_map(|&i| x[i * d..(i + 1) * d].iter().cloned())
                .collect();
            let pb: Vec<f64> = chunk.iter().map(|&i| pi[i]).collect();
            let ub: Vec<f64> = chunk.iter().map(|&i| u[i]).collect();
            let ob: Option<Vec<f64>> = offset.map(|o| chunk.iter().map(|&i| o[i]).collect());
            let m = chunk.len();
            let (f0, g) = objective_offset(&cur, &xb, m, ob.as_deref(), &pb, &ub, rho);
            let gg: f64 = g.iter().map(|v| v * v).sum();
            let mut a = step;
            while a > 1e-14 {
                let cand = Predictor {
                    params: cur
                        .params
                        .iter()
                        .zip(&g)
                        .map(|(t, gk)| t - a * gk)
                        .collect(),
                    ..cur.clone()
                };
                if objective_offset(&cand, &xb, m, ob.as_deref(), &pb, &ub, rho).0
                    <= f0 - 1e-4 * a * gg
                {
                    cur = cand;
                    break;
                }
                a *= 0.5;
            }
            step = (2.0 * a).min(cfg.step_size.max(a));
        }
    }
    Ok(cur)
}

/// Gradient descent with Armijo backtracking (c = 1e-4, shrink 0.5). The
/// trial step doubles after each accepted step. Returns the parameters and
/// the objective after every epoch.
pub fn gd_backtracking(
    mut params: Vec<f64>,
    mut obj: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    cfg: &FitConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut f, mut g) = obj(&params);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = cfg.step_size;
    for _ in 0..cfg.epochs {
        if norm(&g) <= cfg.tol {
            break;
        }
        let gg: f64 = g.iter().map(|v| v * v).sum();
        let mut a = step;
        let mut accepted = false;
        while a > 1e-20 {
            let cand: Vec<f64> = params.iter().zip(&g).map(|(t, gk)| t - a * gk).collect();
            let (fc, gc) = obj(&cand);
            if fc.is_finite() && fc <= f - 1e-4 * a * gg {
                params = cand;
                f = fc;
                g = gc;
                accepted = true;
                break;
            }
            a *= 0.5;
        }
        history.push(f);
        if !accepted {
            break;
        }
        step = 2.0 * a;
    }
    if !f.is_finite() {
        return Err(Error::Divergence {
            what: "gradient descent",
            iter: history.len(),
            detail: "objective is not finite".into(),
        });
    }
    Ok((params, history))
}

/// Full-batch gradient descent on the (weighted) 1/n negative log partial
/// likelihood plus the ridge floor. Returns the fit and per-epoch loss.
pub fn gd_mle_fit(
    ds: &SurvivalDataset,
    p: &Predictor,
    cfg: &FitConfig,
) -> Result<(Predictor, Vec<f64>)> {
    gd_mle_fit_weighted(ds, &WeightMatrix::Unit, p, cfg)
}

pub fn gd_mle_fit_weighted(
    ds: &SurvivalDataset,
    w: &WeightMatrix,
    p: &Predictor,
    cfg: &FitConfig,
) -> Result<(Predictor, Vec<f64>)> {
    cfg.validate()?;
    p.check_input(ds.features(), ds.n())?;
    w.validate(ds.n())?;
    let x = ds.features();
    let n = ds.n();
    let obj = |params: &[f64]| {
        let q = Predictor {
            params: params.to_vec(),
            ..p.clone()
        };
        let loss = nll_eta(ds, w, &q.eta(x, n));
        let mut grad = q.vjp(x, n, &loss.grad_eta);
        let mut value = loss.value;
        for (gk, t) in grad.iter_mut().zip(params) {
            value += RIDGE * t * t;
            *gk += 2.0 * RIDGE * t;
        }
        (value, grad)
    };
    let (params, history) = gd_backtracking(p.params.clone(), obj, cfg)?;
    Ok((
        Predictor {
            params,
            ..p.clone()
        },
        history,
    ))
}

/// Mini-batch gradient descent on the partial likelihood with uniform
/// batches drawn without replacement each epoch. Returns the fit and the
/// full-data loss after each epoch.
pub fn gd_minibatch_fit(
    ds: &SurvivalDataset,
    p: &Predictor,
    cfg: &FitConfig,
) -> Result<(Predictor, Vec<f64>)> {
    cfg.validate()?;
    let n = ds.n();
    let b = if cfg.batch_size == 0 {
        n
    } else {
        cfg.batch_size.min(n)
    };
    let x = ds.features();
    let mut rng = seed::stream(cfg.seed, "gd-minibatch");
    let mut cur = p.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let perm = rand::seq::index::sample(&mut rng, n, n).into_vec();
        for chunk in perm.chunks(b) {
            let batch = BatchSpec {
                indices: chunk.to_vec(),
                draw_mode: DrawMode::WithoutReplacement,
            };
            let eta = cur.eta(x, n);
            let (_, pairs) = nll_minibatch_eta(ds, &eta, &batch)?;
            let mut g = vec![0.0; n];
            for (i, gi) in pairs {
                g[i] = gi;
            }
            let grad = cur.vjp(x, n, &g);
            for (t, gk) in cur.params.iter_mut().zip(&grad) {
                *t -= cfg.step_size * (gk + 2.0 * RIDGE * *t);
            }
        }
        let loss = nll_eta(ds, &WeightMatrix::Unit, &cur.eta(x, n)).value;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                what: "mini-batch gradient descent",
                iter: history.len(),
                detail: "loss is not finite".into(),
            });
        }
        history.push(loss);
    }
    Ok((cur, history))
}
