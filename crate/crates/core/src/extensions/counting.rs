use crate::data::JourneyDataset;
use crate::error::{invalid, Error, Result};
use crate::likelihood::log_add_exp;
use crate::predictors::{gd_backtracking, FitConfig, Predictor};
use crate::seed;
use crate::spectral::{admm_fit, AdmmConfig, AdmmResult, RankingProblem};

/// `(clicked item, items at risk at the click)` for each journey with an event.
pub fn counting_anchors(jds: &JourneyDataset) -> Result<Vec<(usize, Vec<usize>)>> {
    let mut anchors = Vec::new();
    for j in &jds.journeys {
        if let Some((item, _)) = j.event {
            let members: Vec<usize> = j.at_risk().collect();
            if !members.contains(&item) {
                return Err(invalid(format!(
                    "journey {}: event item {item} absent from its journey",
                    j.id
                )));
            }
            anchors.push((item, members));
        }
    }
    if anchors.is_empty() {
        return Err(Error::Degenerate("no journey has an event".into()));
    }
    Ok(anchors)
}

/// One intrinsic score per item, one anchor per clicked journey. The
/// likelihood is averaged over journeys.
pub fn counting_problem(jds: &JourneyDataset) -> Result<RankingProblem> {
    let anchors = counting_anchors(jds)?;
    RankingProblem::from_groups(jds.n_items(), anchors, jds.journeys.len() as f64)
}

pub fn counting_fit(
    jds: &JourneyDataset,
    predictor: &Predictor,
    cfg: &AdmmConfig,
) -> Result<AdmmResult> {
    if predictor.d_in != jds.d() {
        return Err(invalid(
            "predictor input width does not match the item features",
        ));
    }
    let problem = counting_problem(jds)?.normalized();
    admm_fit(&problem, jds.item_features(), predictor, cfg)
}

/// Journey-averaged negative log partial likelihood at per-item log-scores.
pub fn counting_nll(jds: &JourneyDataset, eta: &[f64]) -> Result<f64> {
    if eta.len() != jds.n_items() {
        return Err(invalid("one log-score per item is required"));
    }
    Ok(counting_problem(jds)?.report_nll(eta))
}

/// Baseline that materializes a feature row per (anchor, at-risk item) pair
/// and differentiates through every copy, as a direct partial-likelihood
/// fit must.
pub struct ExpandedRows {
    pub rows: Vec<f64>,
    /// `(start, end, winner_row)` per anchor.
    pub groups: Vec<(usize, usize, usize)>,
    pub norm: f64,
}

impl ExpandedRows {
    pub fn build(jds: &JourneyDataset) -> Result<Self> {
        let mut rows = Vec::new();
        let mut groups = Vec::new();
        let mut r = 0;
        for (item, members) in counting_anchors(jds)? {
            let start = r;
            let mut winner = start;
            for &m in &members {
                if m == item {
                    winner = r;
                }
                rows.extend_from_slice(jds.item(m));
                r += 1;
            }
            groups.push((start, r, winner));
        }
        Ok(Self {
            rows,
            groups,
            norm: jds.journeys.len() as f64,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.groups.last().map_or(0, |g| g.1)
    }

    pub fn loss_and_grad(&self, p: &Predictor) -> (f64, Vec<f64>) {
        let m = self.n_rows();
        let eta = p.eta(&self.rows, m);
        let mut g = vec![0.0; m];
        let mut value = 0.0;
        for &(s, e, w) in &self.groups {
            let lse = eta[s..e]
                .iter()
                .fold(f64::NEG_INFINITY, |a, &v| log_add_exp(a, v));
            value += lse - eta[w];
            for r in s..e {
                g[r] += (eta[r] - lse).exp() / self.norm;
            }
            g[w] -= 1.0 / self.norm;
        }
        (value / self.norm, p.vjp(&self.rows, m, &g))
    }

    /// Mean loss gradient over the anchors in `batch`, touching only their rows.
    fn batch_grad(&self, p: &Predictor, batch: &[usize]) -> Vec<f64> {
        let d = p.d_in;
        let mut rows = Vec::new();
        let mut spans = Vec::with_capacity(batch.len());
        for &k in batch {
            let (s, e, w) = self.groups[k];
            let off = rows.len() / d;
            rows.extend_from_slice(&self.rows[s * d..e * d]);
            spans.push((off, off + e - s, off + w - s));
        }
        let m = rows.len() / d;
        let eta = p.eta(&rows, m);
        let mut g = vec![0.0; m];
        let scale = 1.0 / batch.len() as f64;
        for &(s, e, w) in &spans {
            let lse = eta[s..e]
                .iter()
                .fold(f64::NEG_INFINITY, |a, &v| log_add_exp(a, v));
            for r in s..e {
                g[r] += (eta[r] - lse).exp() * scale;
            }
            g[w] -= scale;
        }
        p.vjp(&rows, m, &g)
    }
}

/// Mini-batch gradient descent over anchors, with uniform batches drawn
/// without replacement each epoch and a fixed step. Returns the fit and the
/// full loss after every epoch.
pub fn gd_minibatch_counting(
    jds: &JourneyDataset,
    predictor: &Predictor,
    cfg: &FitConfig,
) -> Result<(Predictor, Vec<f64>)> {
    if predictor.d_in != jds.d() {
        return Err(invalid(
            "predictor input width does not match the item features",
        ));
    }
    if !(cfg.step_size > 0.0) {
        return Err(invalid("step size must be positive"));
    }
    let rows = ExpandedRows::build(jds)?;
    let a = rows.groups.len();
    let b = if cfg.batch_size == 0 {
        a
    } else {
        cfg.batch_size.min(a)
    };
    let mut rng = seed::stream(cfg.seed, "gd-minibatch-counting");
    let mut cur = predictor.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let perm = rand::seq::index::sample(&mut rng, a, a).into_vec();
        for chunk in perm.chunks(b) {
            let g = rows.batch_grad(&cur, chunk);
            for (t, gk) in cur.params.iter_mut().zip(&g) {
                *t -= cfg.step_size * gk;
            }
        }
        let (loss, _) = rows.loss_and_grad(&cur);
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

/// Full-batch gradient descent on the expanded rows.
pub fn gd_full_fit(
    jds: &JourneyDataset,
    predictor: &Predictor,
    cfg: &FitConfig,
) -> Result<(Predictor, Vec<f64>)> {
    if predictor.d_in != jds.d() {
        return Err(invalid(
            "predictor input width does not match the item features",
        ));
    }
    let rows = ExpandedRows::build(jds)?;
    let obj = |params: &[f64]| {
        let q = Predictor {
            params: params.to_vec(),
            ..predictor.clone()
        };
        rows.loss_and_grad(&q)
    };
    let (params, history) = gd_backtracking(predictor.params.clone(), obj, cfg)?;
    Ok((
        Predictor {
            params,
            ..predictor.clone()
        },
        history,
    ))
}
