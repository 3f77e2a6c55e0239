//! Conditional risk among those at risk at hour `k`, ignoring what was done
//! to them afterwards. Under confounding by indication this is not the risk
//! under any fixed intervention option.

use serde::{Deserialize, Serialize};

use super::features::{proportion_se, state_features, CellKey, CellMeans, STATE_FEATURES};
use super::logistic::{clamped_logit, fit_logistic_or_constant, Design, FitDiagnostics, FitOptions, LogisticModel};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::estimand::{Method, RiskEstimate};
use crate::scm::{Mode, PatientState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveModel {
    pub k: u32,
    pub horizon: u32,
    pub model: LogisticModel,
    /// Cell means backing the saturated coarse-mode fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<CellMeans>,
}

/// At-risk states at hour `k` with the outcome indicator by `horizon`.
pub(crate) fn risk_set(ds: &Dataset, k: u32, horizon: u32) -> Vec<(PatientState, f64)> {
    let mut out = Vec::new();
    for rows in ds.persons() {
        let Some(at_k) = rows.iter().find(|r| r.k == k) else {
            continue;
        };
        if !at_k.at_risk() {
            continue;
        }
        let last = rows.iter().take_while(|r| r.k <= horizon).last().expect("row at k");
        out.push((at_k.to_state(), f64::from(last.y)));
    }
    out
}

/// Fit the naive model of the outcome by `horizon` given the state at hour `k`.
pub fn fit_naive(ds: &Dataset, k: u32, horizon: u32) -> Result<NaiveModel> {
    if horizon <= k {
        return Err(Error::InvalidEstimand(format!("horizon {horizon} is not after hour {k}")));
    }
    let rows = risk_set(ds, k, horizon);
    if rows.is_empty() {
        return Err(Error::EmptyRiskSet(format!("no person is at risk at hour {k}")));
    }
    let component = format!("naive_k{k}_h{horizon}");
    match ds.mode() {
        Mode::Continuous => {
            let mut design = Design::new(&STATE_FEATURES);
            for (state, y) in &rows {
                design.push(&state_features(state), *y);
            }
            let model = fit_logistic_or_constant(&component, &design, &FitOptions::default())?;
            Ok(NaiveModel { k, horizon, model, cells: None })
        }
        Mode::Coarse => {
            let mut cells = CellMeans::default();
            for (state, y) in &rows {
                cells.add(CellKey::of(state)?, *y);
            }
            let (feature_names, coefficients) = cells
                .iter()
                .map(|(key, p, _)| (key.name(), clamped_logit(p)))
                .unzip();
            let model = LogisticModel {
                component,
                feature_names,
                coefficients,
                fitted: true,
                diagnostics: FitDiagnostics {
                    iterations: 0,
                    gradient_norm: 0.0,
                    converged: true,
                    n_rows: rows.len(),
                },
                covariance: Vec::new(),
            };
            Ok(NaiveModel { k, horizon, model, cells: Some(cells) })
        }
    }
}

impl NaiveModel {
    pub fn predict(&self, state: &PatientState) -> Result<RiskEstimate> {
        let (p, se, n) = match &self.cells {
            None => {
                let x = state_features(state);
                let se = self.model.predict_se(&x);
                (self.model.predict(&x), se, self.model.diagnostics.n_rows)
            }
            Some(cells) => {
                let key = CellKey::of(state)?;
                let (p, n) = cells.get(&key).or_else(|| cells.pooled(&key)).ok_or_else(|| {
                    Error::EmptyCell {
                        component: self.model.component.clone(),
                        cell: key.name(),
                    }
                })?;
                (p, proportion_se(p, n), n)
            }
        };
        Ok(RiskEstimate {
            p,
            se: se.max(f64::MIN_POSITIVE),
            n: n as u64,
            method: Method::Naive,
        })
    }
}
