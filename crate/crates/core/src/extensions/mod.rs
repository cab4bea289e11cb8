//! CoxPH variants expressed as weight constructions around the spectral fit.

mod alternating;
mod counting;
mod hetero;
mod weighted;

pub use alternating::{
    aft_fit, aft_weights, dhh_fit, dhh_weights, AlternatingConfig, AlternatingResult, RoundRecord,
    WEIGHT_FLOOR,
};
pub use counting::{
    counting_anchors, counting_fit, counting_nll, counting_problem, gd_full_fit,
    gd_minibatch_counting, ExpandedRows,
};
pub use hetero::{heterogeneous_fit, HeteroResult, HeterogeneousSpec};
pub use weighted::{censor_decay_weights, weighted_cox_fit, WeightPreset};
