use crate::data::SurvivalDataset;
use crate::error::{invalid, Error, Result};
use crate::estimators::n_classes;
use crate::predictors::{max_entropy_fit_offset, FitConfig, Predictor};
use crate::spectral::{admm_run, AdmmConfig, DiagRecord, RankingProblem, ScoreModel};
use crate::weights::WeightMatrix;

/// Group structure for `h_i = exp(θᵀx_i + η_{c_i}ᵀ z_{c_i})`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneousSpec {
    pub classes: Vec<usize>,
    /// `K × q`, row-major; row `c` holds `z_c`.
    pub group_features: Vec<f64>,
    pub q: usize,
}

impl HeterogeneousSpec {
    pub fn n_classes(&self) -> usize {
        n_classes(&self.classes)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.classes.len() != n {
            return Err(invalid("class vector length does not match n"));
        }
        let k = self.n_classes();
        if k == 0 {
            return Err(invalid("at least one class is required"));
        }
        let mut seen = vec![false; k];
        for &c in &self.classes {
            seen[c] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::Degenerate(format!("class {c} is empty")));
        }
        if self.group_features.len() != k * self.q {
            return Err(invalid(format!(
                "group features must be {k} x {}, got {} entries",
                self.q,
                self.group_features.len()
            )));
        }
        Ok(())
    }

    /// Row `i` carries `z_{c_i}` in block `c_i` and zeros elsewhere.
    fn expanded(&self) -> Vec<f64> {
        let k = self.n_classes();
        let q = self.q;
        let mut out = vec![0.0; self.classes.len() * k * q];
        for (i, &c) in self.classes.iter().enumerate() {
            let row = &mut out[i * k * q..(i + 1) * k * q];
            row[c * q..(c + 1) * q].copy_from_slice(&self.group_features[c * q..(c + 1) * q]);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct HeteroResult {
    pub theta: Vec<f64>,
    /// `K × q`, row-major.
    pub eta: Vec<f64>,
    pub pi: Vec<f64>,
    pub diagnostics: Vec<DiagRecord>,
    pub converged: bool,
}

impl HeteroResult {
    pub fn log_scores(&self, ds: &SurvivalDataset, spec: &HeterogeneousSpec) -> Vec<f64> {
        let q = spec.q;
        (0..ds.n())
            .map(|i| {
                let c = spec.classes[i];
                let lin: f64 = ds.x(i).iter().zip(&self.theta).map(|(a, b)| a * b).sum();
                let grp: f64 = spec.group_features[c * q..(c + 1) * q]
                    .iter()
                    .zip(&self.eta[c * q..(c + 1) * q])
                    .map(|(a, b)| a * b)
                    .sum();
                lin + grp
            })
            .collect()
    }
}

struct BlockModel<'a> {
    theta: Predictor,
    eta: Predictor,
    x: &'a [f64],
    z: Vec<f64>,
    n: usize,
    fit: FitConfig,
}

impl ScoreModel for BlockModel<'_> {
    fn log_scores(&self) -> Vec<f64> {
        let a = self.theta.eta(self.x, self.n);
        if self.eta.d_in == 0 {
            return a;
        }
        let b = self.eta.eta(&self.z, self.n);
        a.iter().zip(&b).map(|(a, b)| a + b).collect()
    }

    /// One θ block step with η fixed, then one η block step with θ fixed.
    fn refit(&mut self, pi: &[f64], u: &[f64], rho: f64) -> Result<()> {
        let n = self.n;
        if self.eta.d_in == 0 {
            self.theta =
                max_entropy_fit_offset(&self.theta, self.x, n, None, pi, u, rho, &self.fit)?;
            return Ok(());
        }
        let group = self.eta.eta(&self.z, n);
        self.theta =
            max_entropy_fit_offset(&self.theta, self.x, n, Some(&group), pi, u, rho, &self.fit)?;
        let lin = self.theta.eta(self.x, n);
        self.eta =
            max_entropy_fit_offset(&self.eta, &self.z, n, Some(&lin), pi, u, rho, &self.fit)?;
        Ok(())
    }
}

/// Spectral fit of the heterogeneous Cox model, alternating the shared and
/// group-specific coefficient blocks in every fitting step.
pub fn heterogeneous_fit(
    ds: &SurvivalDataset,
    spec: &HeterogeneousSpec,
    w: &WeightMatrix,
    cfg: &AdmmConfig,
) -> Result<HeteroResult> {
    spec.validate(ds.n())?;
    let k = spec.n_classes();
    let problem = RankingProblem::survival(ds, w.clone(), cfg.mode)?.normalized();
    let mut model = BlockModel {
        theta: Predictor::linear(ds.d()),
        eta: Predictor::linear(k * spec.q),
        x: ds.features(),
        z: spec.expanded(),
        n: ds.n(),
        fit: cfg.fit.clone(),
    };
    let trace = admm_run(&problem, &mut model, cfg)?;
    Ok(HeteroResult {
        theta: model.theta.params,
        eta: model.eta.params,
        pi: trace.pi,
        diagnostics: trace.diagnostics,
        converged: trace.converged,
    })
}
