//! Iterated conditional expectations for static intervention options.
//!
//! Working backward from the horizon, each stage regresses a pseudo-outcome
//! on the state among people at risk at that hour whose observed action
//! matches the prescribed one. The pseudo-outcome is 1 if the outcome occurs
//! in the next hour, 0 if labor ends without it or the horizon is reached,
//! and otherwise the next stage's prediction at the next state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::features::{proportion_se, state_features, CellKey, CellMeans, STATE_FEATURES};
use super::logistic::{fit_logistic_or_constant, Design, FitOptions, LogisticModel};
use crate::datagen::{Dataset, PersonHour};
use crate::error::{Error, Result};
use crate::estimand::{EstimandSpec, Method, RiskEstimate};
use crate::regimes::Prescription;
use crate::scm::{Action, Mode, PatientState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StageModel {
    /// Saturated in the coarse cell and parity group.
    Cells { means: CellMeans },
    /// Fractional logistic regression on the state features.
    Logistic { model: LogisticModel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IceStage {
    pub hour: u32,
    pub action: Action,
    pub n_rows: usize,
    pub model: StageModel,
}

impl IceStage {
    fn predict(&self, state: &PatientState) -> Result<(f64, f64, usize)> {
        match &self.model {
            StageModel::Logistic { model } => {
                let x = state_features(state);
                Ok((model.predict(&x), model.predict_se(&x), model.diagnostics.n_rows))
            }
            StageModel::Cells { means } => {
                let key = CellKey::of(state)?;
                if let Some((p, n)) = means.get(&key).or_else(|| means.pooled(&key)) {
                    return Ok((p, proportion_se(p, n), n));
                }
                let p = means.overall().ok_or_else(|| Error::EmptyCell {
                    component: format!("ice_stage_{}", self.hour),
                    cell: key.name(),
                })?;
                Ok((p, proportion_se(p, means.n_rows()), means.n_rows()))
            }
        }
    }
}

/// Fitted sequence of outcome regressions, one per hour from the anchor to
/// the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IceModel {
    pub anchor: u32,
    pub horizon: u32,
    pub stages: Vec<IceStage>,
}

/// Fit iterated conditional expectations for `spec`, whose intervention
/// option must be static.
pub fn fit_ice(ds: &Dataset, spec: &EstimandSpec) -> Result<IceModel> {
    spec.validate()?;
    if !spec.regime.is_static() {
        return Err(Error::InvalidRegime(
            "iterated conditional expectations need a static intervention option".into(),
        ));
    }
    let anchor = spec.moment_of_use;
    let last_hour = ds.rows().iter().map(|r| r.k).max().unwrap_or(0);
    let horizon = spec.horizon_hour().min(last_hour);
    if horizon <= anchor {
        return Err(Error::EmptyRiskSet(format!(
            "no follow-up after hour {anchor} in the dataset"
        )));
    }

    // Transitions out of at-risk rows, grouped by hour.
    let mut by_hour: BTreeMap<u32, Vec<(&PersonHour, &PersonHour)>> = BTreeMap::new();
    for rows in ds.persons() {
        for w in rows.windows(2) {
            if w[0].at_risk() && w[0].k >= anchor && w[0].k < horizon {
                by_hour.entry(w[0].k).or_default().push((&w[0], &w[1]));
            }
        }
    }

    let options = FitOptions::default();
    let mut stages: Vec<IceStage> = Vec::with_capacity((horizon - anchor) as usize);
    for hour in (anchor..horizon).rev() {
        let rows = by_hour.get(&hour).map(Vec::as_slice).unwrap_or(&[]);
        let mut consistent = Vec::new();
        let mut action = None;
        for &(now, next) in rows {
            let state = now.to_state();
            let Prescription::Fixed(a) = spec.regime.prescribe(hour - anchor, &state, false)? else {
                unreachable!("static regimes never defer to usual care");
            };
            action.get_or_insert(a);
            if now.action() == a {
                consistent.push((state, next));
            }
        }
        if !rows.is_empty() && consistent.is_empty() {
            return Err(Error::Positivity {
                hour,
                message: format!(
                    "{} people at risk but none followed the intervention option",
                    rows.len()
                ),
            });
        }
        let later = stages.last();
        let mut pseudo = Vec::with_capacity(consistent.len());
        for (state, next) in consistent {
            let value = if next.y == 1 {
                1.0
            } else if !next.at_risk() || next.k >= horizon {
                0.0
            } else {
                let stage = later.expect("a later stage exists before the horizon");
                stage.predict(&next.to_state())?.0
            };
            pseudo.push((state, value));
        }
        let model = match ds.mode() {
            Mode::Coarse => {
                let mut means = CellMeans::default();
                for (state, v) in &pseudo {
                    means.add(CellKey::of(state)?, *v);
                }
                StageModel::Cells { means }
            }
            Mode::Continuous => {
                let mut design = Design::new(&STATE_FEATURES);
                for (state, v) in &pseudo {
                    design.push(&state_features(state), *v);
                }
                let model = if design.is_empty() {
                    LogisticModel::constant(&format!("ice_stage_{hour}"), design.names(), 0.0, 0)
                } else {
                    fit_logistic_or_constant(&format!("ice_stage_{hour}"), &design, &options)?
                };
                StageModel::Logistic { model }
            }
        };
        stages.push(IceStage {
            hour,
            action: action.unwrap_or(Action::Vaginal),
            n_rows: pseudo.len(),
            model,
        });
    }
    stages.reverse();
    Ok(IceModel {
        anchor,
        horizon,
        stages,
    })
}

impl IceModel {
    /// Risk at a condition observed at the anchor hour. The standard error
    /// treats the later stages as fixed.
    pub fn predict(&self, condition: &PatientState) -> Result<RiskEstimate> {
        if condition.k != self.anchor {
            return Err(Error::InvalidEstimand(format!(
                "condition is at hour {} but the model is anchored at hour {}",
                condition.k, self.anchor
            )));
        }
        if !condition.z() {
            return Err(Error::NotAtRisk { hour: condition.k });
        }
        let stage = &self.stages[0];
        if stage.n_rows == 0 {
            return Err(Error::EmptyRiskSet(format!("no one at risk at hour {}", self.anchor)));
        }
        let (p, se, n) = stage.predict(condition)?;
        Ok(RiskEstimate {
            p,
            se: se.max(f64::MIN_POSITIVE),
            n: n as u64,
            method: Method::Ice,
        })
    }
}

/// Fit and evaluate in one call.
pub fn ice_estimate(ds: &Dataset, spec: &EstimandSpec, condition: &PatientState) -> Result<RiskEstimate> {
    fit_ice(ds, spec)?.predict(condition)
}
