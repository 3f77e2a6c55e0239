//! Risk models fitted to observational data: a naive regression that ignores
//! treatment, g-computation and iterated conditional expectations.

pub mod features;
pub mod gcomp;
pub mod ice;
pub mod logistic;
pub mod naive;

pub use features::{CellKey, CellMeans, STATE_FEATURES};
pub use gcomp::{
    fit_coarse, fit_continuous, fit_gcomp, gcomp_exact, gcomp_predict, CoarseTables, ContinuousModels, PropensityModel,
    TransitionModels,
};
pub use logistic::{fit_logistic, fit_logistic_or_constant, Design, FitDiagnostics, FitOptions, LogisticModel};
pub use naive::{fit_naive, NaiveModel};
pub use ice::{fit_ice, ice_estimate, IceModel, IceStage, StageModel};
