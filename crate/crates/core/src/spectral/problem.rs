use crate::data::SurvivalDataset;
use crate::error::{invalid, Result};
use crate::likelihood::log_add_exp;
use crate::weights::WeightMatrix;

/// Which samples act as anchors of the intrinsic-score subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EventMode {
    /// Only observed events (`Δ = 1`).
    #[default]
    Strict,
    /// Every sample, censored ones included, as a regularizer.
    AllAnchors,
}

/// One likelihood factor: `winner` beats every other item in `pool[start..end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Anchor {
    pub winner: usize,
    pub start: usize,
    pub end: usize,
    /// Column of the weight matrix used by this anchor.
    pub col: usize,
    /// Counted in the reported likelihood.
    pub event: bool,
}

/// Choice-style decomposition of a (weighted) partial likelihood:
/// `κ Σ_a [log Σ_{j∈R_a} W_{j,a} π_j − log(W_{w,a} π_w)]`.
#[derive(Debug, Clone)]
pub struct RankingProblem {
    n_items: usize,
    pool: Vec<usize>,
    anchors: Vec<Anchor>,
    weights: WeightMatrix,
    /// Present when risk sets are suffixes of a pool listing every item once.
    suffix: Option<SuffixIndex>,
    /// Column-major copy of dense weights, `cols[a.col * n + j] = W_{j,a}`.
    cols: Option<Vec<f64>>,
    kappa: f64,
    norm: f64,
}

#[derive(Debug, Clone)]
struct SuffixIndex {
    /// Pool position of each item.
    rank: Vec<usize>,
    /// First pool position of the tie group containing each position.
    group_start: Vec<usize>,
}

/// Per-anchor denominators and per-item flows at a given `π`.
#[derive(Debug, Clone)]
pub struct Flows {
    /// `S_a = Σ_{j∈R_a} W_{j,a} π_j`.
    pub denominators: Vec<f64>,
    /// `Σ_{a won by i} κ (1 − W_{i,a} π_i / S_a)`.
    pub inflow: Vec<f64>,
    /// `Σ_{a lost by j} κ W_{j,a} / S_a`.
    pub out: Vec<f64>,
}

impl RankingProblem {
    pub fn survival(ds: &SurvivalDataset, weights: WeightMatrix, mode: EventMode) -> Result<Self> {
        weights.validate(ds.n())?;
        let n = ds.n();
        let anchors = (0..n)
            .filter(|&l| mode == EventMode::AllAnchors || ds.event(l))
            .map(|l| Anchor {
                winner: l,
                start: ds.risk_start(l),
                end: n,
                col: l,
                event: ds.event(l),
            })
            .collect();
        let suffix = SuffixIndex {
            rank: (0..n).map(|i| ds.rank(i)).collect(),
            group_start: ds
                .sorted_order()
                .iter()
                .map(|&i| ds.risk_start(i))
                .collect(),
        };
        let cols = match &weights {
            WeightMatrix::Dense { n, data } => {
                let mut t = vec![0.0; n * n];
                for j in 0..*n {
                    for i in 0..*n {
                        t[i * n + j] = data[j * n + i];
                    }
                }
                Some(t)
            }
            _ => None,
        };
        Ok(Self {
            n_items: n,
            pool: ds.sorted_order().to_vec(),
            anchors,
            weights,
            suffix: Some(suffix),
            cols,
            kappa: 1.0,
            norm: n as f64,
        })
    }

    /// Arbitrary anchors over `n_items` items with unit weights; each group
    /// is `(winner, members)` and must list the winner among its members.
    pub fn from_groups(
        n_items: usize,
        groups: Vec<(usize, Vec<usize>)>,
        norm: f64,
    ) -> Result<Self> {
        let mut pool = Vec::new();
        let mut anchors = Vec::with_capacity(groups.len());
        for (a, (winner, members)) in groups.into_iter().enumerate() {
            if members.iter().any(|&m| m >= n_items) {
                return Err(invalid(format!("anchor {a}: member out of range")));
            }
            if members.iter().filter(|&&m| m == winner).count() != 1 {
                return Err(invalid(format!(
                    "anchor {a}: winner must appear exactly once among its members"
                )));
            }
            let start = pool.len();
            pool.extend(members);
            anchors.push(Anchor {
                winner,
                start,
                end: pool.len(),
                col: a,
                event: true,
            });
        }
        Ok(Self {
            n_items,
            pool,
            anchors,
            weights: WeightMatrix::Unit,
            suffix: None,
            cols: None,
            kappa: 1.0,
            norm,
        })
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    /// Scales the objective by `1/norm`, matching the reported likelihood.
    pub fn normalized(self) -> Self {
        let k = 1.0 / self.norm;
        self.with_kappa(k)
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn members(&self, a: &Anchor) -> &[usize] {
        &self.pool[a.start..a.end]
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, j: usize, a: &Anchor) -> f64 {
        self.weights.get(j, a.col)
    }

    /// Weights of anchor `a`'s column indexed by item, when stored densely.
    #[inline]
    fn column(&self, a: &Anchor) -> Option<&[f64]> {
        self.cols
            .as_deref()
            .map(|c| &c[a.col * self.n_items..(a.col + 1) * self.n_items])
    }

    /// Entries of the pool, i.e. `Σ_a |R_a|` for explicit anchors.
    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    pub fn flows(&self, pi: &[f64]) -> Flows {
        match &self.suffix {
            Some(idx) if self.weights.is_column_constant() => self.suffix_flows(pi, idx),
            _ => self.generic_flows(pi),
        }
    }

    fn generic_flows(&self, pi: &[f64]) -> Flows {
        let k = self.kappa;
        let mut denominators = Vec::with_capacity(self.anchors.len());
        let mut inflow = vec![0.0; self.n_items];
        let mut out = vec![0.0; self.n_items];
        for a in &self.anchors {
            let members = self.members(a);
            let w = a.winner;
            if let Some(col) = self.column(a) {
                let s: f64 = members.iter().map(|&j| col[j] * pi[j]).sum();
                denominators.push(s);
                inflow[w] += k * (1.0 - col[w] * pi[w] / s);
                let r = k / s;
                for &j in members {
                    out[j] += r * col[j];
                }
                out[w] -= r * col[w];
                continue;
            }
            let s: f64 = members.iter().map(|&j| self.weight(j, a) * pi[j]).sum();
            denominators.push(s);
            inflow[w] += k * (1.0 - self.weight(w, a) * pi[w] / s);
            for &j in members {
                if j != w {
                    out[j] += k * self.weight(j, a) / s;
                }
            }
        }
        Flows {
            denominators,
            inflow,
            out,
        }
    }

    /// Column-constant weights cancel inside each anchor, so only suffix
    /// sums of `π` are needed.
    fn suffix_flows(&self, pi: &[f64], idx: &SuffixIndex) -> Flows {
        let n = self.n_items;
        let k = self.kappa;
        let mut tail = vec![0.0; n + 1];
        for p in (0..n).rev() {
            tail[p] = tail[p + 1] + pi[self.pool[p]];
        }
        // anchors sharing a start share 1/tail; count them per start
        let mut count_at = vec![0usize; n];
        let mut is_anchor = vec![false; n];
        let mut denominators = Vec::with_capacity(self.anchors.len());
        let mut inflow = vec![0.0; n];
        for a in &self.anchors {
            let s = tail[a.start];
            count_at[a.start] += 1;
            is_anchor[a.winner] = true;
            let c = self
                .weights
                .column_constant(a.col)
                .expect("column-constant weights");
            denominators.push(c * s);
            inflow[a.winner] += k * (1.0 - pi[a.winner] / s);
        }
        let mut before = vec![0.0; n + 1];
        for p in 0..n {
            before[p + 1] = before[p] + count_at[p] as f64 / tail[p];
        }
        let mut out = vec![0.0; n];
        for j in 0..n {
            let gs = idx.group_start[idx.rank[j]];
            let same = count_at[gs] - is_anchor[j] as usize;
            out[j] = k * (before[gs] + same as f64 / tail[gs]);
        }
        Flows {
            denominators,
            inflow,
            out,
        }
    }

    /// `(1/norm) Σ_{event anchors} [log Σ W e^η − log(W_w e^{η_w})]`.
    pub fn report_nll(&self, eta: &[f64]) -> f64 {
        if self.suffix.is_some() && self.weights.is_column_constant() {
            let n = self.n_items;
            let mut tail = vec![f64::NEG_INFINITY; n + 1];
            for p in (0..n).rev() {
                tail[p] = log_add_exp(tail[p + 1], eta[self.pool[p]]);
            }
            let total: f64 = self
                .anchors
                .iter()
                .filter(|a| a.event)
                .map(|a| tail[a.start] - eta[a.winner])
                .sum();
            return total / self.norm;
        }
        let m = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<f64> = eta.iter().map(|e| (e - m).exp()).collect();
        let mut total = 0.0;
        for a in self.anchors.iter().filter(|a| a.event) {
            let s: f64 = match self.column(a) {
                Some(col) => self.members(a).iter().map(|&j| col[j] * scaled[j]).sum(),
                None => self
                    .members(a)
                    .iter()
                    .map(|&j| self.weight(j, a) * scaled[j])
                    .sum(),
            };
            if s > 0.0 && s.is_finite() && scaled[a.winner] > 0.0 {
                total += s.ln() + m - self.weight(a.winner, a).ln() - eta[a.winner];
                continue;
            }
            // underflow: fall back to a running log-sum-exp
            let l = self.members(a).iter().fold(f64::NEG_INFINITY, |acc, &j| {
                log_add_exp(acc, self.weight(j, a).ln() + eta[j])
            });
            total += l - self.weight(a.winner, a).ln() - eta[a.winner];
        }
        total / self.norm
    }

    /// Won and lost anchor indices per item.
    pub fn winner_loser_sets(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut won = vec![Vec::new(); self.n_items];
        let mut lost = vec![Vec::new(); self.n_items];
        for (k, a) in self.anchors.iter().enumerate() {
            won[a.winner].push(self.anchor_label(k));
            for &j in self.members(a) {
                if j != a.winner {
                    lost[j].push(self.anchor_label(k));
                }
            }
        }
        for v in lost.iter_mut() {
            v.sort_unstable();
            v.dedup();
        }
        (won, lost)
    }

    /// Survival anchors are labelled by their sample; others by position.
    fn anchor_label(&self, k: usize) -> usize {
        if self.suffix.is_some() {
            self.anchors[k].winner
        } else {
            k
        }
    }
}
