//! Estimands, counterfactual oracles and estimators for sequential risk
//! prediction under interventions during labor.

pub mod datagen;
pub mod estimand;
pub mod estimators;
pub mod experiment;
pub mod error;
pub mod regimes;
pub mod rng;
pub mod scm;
pub mod service;

pub use error::{Error, ErrorKind, Result};
