//! Machine-readable estimands and their ground-truth evaluation.
//!
//! An estimand names who it applies to, when the prediction is made, which
//! intervention option is assumed from then on, the outcome and its horizon,
//! and the predictors conditioned on. The seven built-in estimands cover
//! single-stage questions asked at the start of labor (ids 1-4) and
//! sequential questions asked at any hour (ids 5-7).

pub(crate) mod exact;
pub(crate) mod oracle;

use serde::{Deserialize, Serialize};

pub use exact::{
    natural_course_marginals, oracle_exact, reachable_cells, regime_marginals, CoarseKernel, Marginals,
    ValueTable,
};
pub use oracle::{oracle_mc, risk_profile, simulate_outcome, OracleMethod};

use crate::error::{Error, Result};
use crate::regimes::Regime;
use crate::scm::{Action, PatientState};

/// Absolute horizon of the built-in estimands, in hours from the start of labor.
pub const DEFAULT_HORIZON: u32 = 72;

/// Covariate names that can appear in a predictor list.
pub const AVAILABLE_PREDICTORS: [&str; 11] = [
    "maternal_age",
    "parity",
    "history_preterm",
    "fhr",
    "brady_persist",
    "dilatation",
    "sbp",
    "dbp",
    "k",
    "a",
    "z",
];

/// Predictors of the built-in estimands: baseline and current vitals.
pub const DEFAULT_PREDICTORS: [&str; 8] = [
    "maternal_age",
    "parity",
    "history_preterm",
    "fhr",
    "brady_persist",
    "dilatation",
    "sbp",
    "dbp",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    /// Still in labor with no adverse outcome yet.
    #[default]
    AtRisk,
}

impl Population {
    pub fn contains(&self, state: &PatientState) -> bool {
        match self {
            Population::AtRisk => state.z(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Adverse neonatal or maternal outcome, whichever comes first.
    #[default]
    CompositeAdverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Horizon {
    /// Fixed hour counted from the start of labor.
    Absolute { hour: u32 },
    /// Hours after the moment of use.
    Relative { hours: u32 },
}

/// A five-element estimand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimandSpec {
    pub population: Population,
    pub moment_of_use: u32,
    #[serde(rename = "intervention_option")]
    pub regime: Regime,
    pub outcome: Outcome,
    pub horizon: Horizon,
    pub predictors: Vec<String>,
}

impl EstimandSpec {
    pub fn new(moment_of_use: u32, regime: Regime, horizon: Horizon) -> Self {
        EstimandSpec {
            population: Population::AtRisk,
            moment_of_use,
            regime,
            outcome: Outcome::CompositeAdverse,
            horizon,
            predictors: DEFAULT_PREDICTORS.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Hour, counted from the start of labor, at which the outcome is read.
    pub fn horizon_hour(&self) -> u32 {
        match self.horizon {
            Horizon::Absolute { hour } => hour,
            Horizon::Relative { hours } => self.moment_of_use + hours,
        }
    }

    /// Horizon hour truncated to the last hour a simulator can reach.
    pub fn effective_horizon(&self, simulator_horizon: u32) -> u32 {
        self.horizon_hour().min(simulator_horizon)
    }

    pub fn validate(&self) -> Result<()> {
        match self.horizon {
            Horizon::Absolute { hour } if hour <= self.moment_of_use => {
                return Err(Error::InvalidEstimand(format!(
                    "horizon hour {hour} is not after the moment of use {}",
                    self.moment_of_use
                )))
            }
            Horizon::Relative { hours: 0 } => {
                return Err(Error::InvalidEstimand("relative horizon must be at least 1 hour".into()))
            }
            _ => {}
        }
        if let Some(p) = self
            .predictors
            .iter()
            .find(|p| !AVAILABLE_PREDICTORS.contains(&p.as_str()))
        {
            return Err(Error::InvalidEstimand(format!("unknown predictor `{p}`")));
        }
        self.regime.validate()
    }

    /// Check that `condition` can be plugged into this estimand.
    pub fn check_condition(&self, condition: &PatientState) -> Result<()> {
        self.validate()?;
        if !self.population.contains(condition) {
            return Err(Error::NotAtRisk { hour: condition.k });
        }
        if condition.k != self.moment_of_use {
            return Err(Error::InvalidEstimand(format!(
                "condition is at hour {} but the estimand is used at hour {}",
                condition.k, self.moment_of_use
            )));
        }
        Ok(())
    }
}

/// The built-in estimand `id` (1 to 7) used at hour `k`.
pub fn builtin_estimand(id: u8, k: u32) -> Result<EstimandSpec> {
    let absolute = Horizon::Absolute { hour: DEFAULT_HORIZON };
    let vaginal_for_one_hour = Regime::FixThenNatural {
        fix_action: Action::Vaginal,
        fix_hours: 1,
    };
    if (1..=4).contains(&id) && k != 0 {
        return Err(Error::InvalidEstimand(format!(
            "estimand {id} is only defined at the start of labor (k = 0), got k = {k}"
        )));
    }
    let spec = match id {
        1 => EstimandSpec::new(0, Regime::ImmediateCesarean, absolute),
        2 => EstimandSpec::new(0, Regime::VaginalOnly, absolute),
        3 => EstimandSpec::new(0, vaginal_for_one_hour, absolute),
        4 => EstimandSpec::new(0, Regime::dynamic_fhr(), absolute),
        5 => EstimandSpec::new(k, Regime::VaginalOnly, absolute),
        6 => EstimandSpec::new(k, vaginal_for_one_hour, absolute),
        7 => EstimandSpec::new(k, vaginal_for_one_hour, Horizon::Relative { hours: 1 }),
        _ => return Err(Error::InvalidEstimand(format!("unknown estimand id {id}"))),
    };
    if spec.horizon_hour() <= k {
        return Err(Error::InvalidEstimand(format!(
            "estimand {id} at hour {k} lies beyond its horizon"
        )));
    }
    Ok(spec)
}

/// The built-in estimand `id` at hour `k`, with estimands 1-4 re-anchored at
/// `k` when `k > 0`. Returns the spec and a display label.
pub fn builtin_estimand_at(id: u8, k: u32) -> Result<(EstimandSpec, String)> {
    if k == 0 || id > 4 {
        let spec = builtin_estimand(id, k)?;
        return Ok((spec, builtin_label(id).to_string()));
    }
    let mut spec = builtin_estimand(id, 0)?;
    spec.moment_of_use = k;
    if spec.horizon_hour() <= k {
        return Err(Error::InvalidEstimand(format!(
            "estimand {id} at hour {k} lies beyond its horizon"
        )));
    }
    Ok((spec, format!("{} (anchored at hour {k})", builtin_label(id))))
}

pub fn builtin_label(id: u8) -> &'static str {
    match id {
        1 => "immediate cesarean",
        2 => "vaginal delivery only",
        3 => "vaginal for one hour, then usual care",
        4 => "cesarean at first abnormal FHR",
        5 => "vaginal delivery only from now",
        6 => "vaginal for the next hour, then usual care",
        7 => "outcome within the next hour under vaginal delivery",
        _ => "unknown",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    OracleMc,
    OracleExact,
    Naive,
    Gcomp,
    Ice,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::OracleMc => "oracle_mc",
            Method::OracleExact => "oracle_exact",
            Method::Naive => "naive",
            Method::Gcomp => "gcomp",
            Method::Ice => "ice",
        }
    }
}

/// A risk with its Monte Carlo standard error; `se` is zero for exact values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub p: f64,
    pub se: f64,
    pub n: u64,
    pub method: Method,
}

impl RiskEstimate {
    pub fn exact(p: f64, method: Method) -> Self {
        RiskEstimate {
            p: p.clamp(0.0, 1.0),
            se: 0.0,
            n: 0,
            method,
        }
    }

    /// Proportion of `hits` among `n` replications.
    pub fn from_count(hits: u64, n: u64, method: Method) -> Self {
        let p = hits as f64 / n as f64;
        RiskEstimate {
            p,
            se: (p * (1.0 - p) / n as f64).sqrt(),
            n,
            method,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_estimands_reduce_at_start_of_labor() {
        assert_eq!(builtin_estimand(2, 0).unwrap(), builtin_estimand(5, 0).unwrap());
        assert_eq!(builtin_estimand(3, 0).unwrap(), builtin_estimand(6, 0).unwrap());
        assert_eq!(builtin_estimand(7, 5).unwrap().horizon_hour(), 6);
    }

    #[test]
    fn single_stage_estimands_reject_later_hours() {
        for id in 1..=4 {
            assert!(builtin_estimand(id, 1).is_err());
        }
        assert!(builtin_estimand(8, 0).is_err());
        let (spec, label) = builtin_estimand_at(1, 3).unwrap();
        assert_eq!(spec.moment_of_use, 3);
        assert_eq!(spec.regime, Regime::ImmediateCesarean);
        assert!(label.contains("hour 3"));
    }

    #[test]
    fn json_uses_table_element_names() {
        let v = serde_json::to_value(builtin_estimand(7, 2).unwrap()).unwrap();
        for key in ["population", "moment_of_use", "intervention_option", "outcome", "horizon", "predictors"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["horizon"]["type"], "relative");
        assert_eq!(v["intervention_option"]["type"], "fix_then_natural");
        let back: EstimandSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, builtin_estimand(7, 2).unwrap());
    }

    #[test]
    fn validation_rejects_bad_horizons_and_predictors() {
        let mut spec = builtin_estimand(5, 3).unwrap();
        spec.horizon = Horizon::Absolute { hour: 3 };
        assert!(spec.validate().is_err());
        spec.horizon = Horizon::Relative { hours: 0 };
        assert!(spec.validate().is_err());
        let mut spec = builtin_estimand(5, 3).unwrap();
        spec.predictors.push("heart_of_gold".into());
        assert!(spec.validate().is_err());
    }
}
