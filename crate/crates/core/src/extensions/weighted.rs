use std::path::Path;
use std::str::FromStr;

use crate::data::SurvivalDataset;
use crate::error::{invalid, Error, Result};
use crate::predictors::Predictor;
use crate::spectral::{admm_fit_survival, AdmmConfig, AdmmResult};
use crate::weights::WeightMatrix;

/// Named weight constructions selectable from the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightPreset {
    Unit,
    /// `W_ji = 1 / (1 + |censored before T_i|)`.
    CensorDecay,
    /// Long-format `sample,anchor,weight` file.
    File(String),
}

impl FromStr for WeightPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(Self::Unit),
            "censor-decay" => Ok(Self::CensorDecay),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(Self::File(path.to_string())),
                _ => Err(Error::Usage(format!(
                    "unknown weights '{s}' (expected unit, censor-decay or file:<csv>)"
                ))),
            },
        }
    }
}

impl WeightPreset {
    pub fn build(&self, ds: &SurvivalDataset) -> Result<WeightMatrix> {
        match self {
            Self::Unit => Ok(WeightMatrix::Unit),
            Self::CensorDecay => Ok(censor_decay_weights(ds)),
            Self::File(p) => WeightMatrix::load_csv(Path::new(p), ds.n()),
        }
    }
}

/// One constant per anchor column, decreasing in the number of samples
/// censored strictly before the anchor's time.
pub fn censor_decay_weights(ds: &SurvivalDataset) -> WeightMatrix {
    let order = ds.sorted_order();
    let mut censored_before = vec![0usize; ds.n()];
    let mut count = 0;
    let mut p = 0;
    while p < order.len() {
        let t = ds.time(order[p]);
        let mut q = p;
        while q < order.len() && ds.time(order[q]) == t {
            censored_before[order[q]] = count;
            q += 1;
        }
        count += order[p..q].iter().filter(|&&i| !ds.event(i)).count();
        p = q;
    }
    WeightMatrix::Column(
        censored_before
            .iter()
            .map(|&c| 1.0 / (1.0 + c as f64))
            .collect(),
    )
}

/// Spectral fit of the weighted partial likelihood.
pub fn weighted_cox_fit(
    ds: &SurvivalDataset,
    w: &WeightMatrix,
    predictor: &Predictor,
    cfg: &AdmmConfig,
) -> Result<AdmmResult> {
    w.validate(ds.n())?;
    if predictor.d_in != ds.d() {
        return Err(invalid("predictor input width does not match the dataset"));
    }
    admm_fit_survival(ds, w, predictor, cfg)
}
