//! Monte Carlo evaluation of estimands by intervening on a simulator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{exact, EstimandSpec, Method, RiskEstimate};
use crate::error::{Error, Result};
use crate::regimes::{Regime, UsualCare};
use crate::rng::{derive_seed, label, substream, SimRng};
use crate::scm::{step, Dynamics, Mode, PatientState, Scm};

/// Run one counterfactual course from `condition` under the estimand's regime
/// and report whether the outcome occurred by the horizon.
pub fn simulate_outcome<D: Dynamics + ?Sized>(
    dynamics: &D,
    spec: &EstimandSpec,
    condition: &PatientState,
    usual_care: Option<&dyn UsualCare>,
    rng: &mut SimRng,
) -> Result<bool> {
    let horizon = spec.effective_horizon(dynamics.horizon());
    let anchor = spec.moment_of_use;
    let dynamic = matches!(spec.regime, Regime::DynamicFhr { .. });
    let mut state = *condition;
    let mut flag_seen = false;
    while state.z() && state.k < horizon {
        if dynamic && !flag_seen {
            flag_seen = spec.regime.flag(&state)?;
        }
        let action = spec
            .regime
            .act(state.k - anchor, &state, flag_seen, usual_care, rng)?;
        state = step(dynamics, &state, action, rng)?;
    }
    Ok(state.y)
}

pub(crate) fn check_inputs<D: Dynamics + ?Sized>(
    dynamics: &D,
    spec: &EstimandSpec,
    condition: &PatientState,
    usual_care: Option<&dyn UsualCare>,
) -> Result<()> {
    spec.check_condition(condition)?;
    match (dynamics.mode(), condition.tv.is_coarse()) {
        (Mode::Coarse, false) => return Err(Error::WrongMode { expected: "coarse" }),
        (Mode::Continuous, true) => return Err(Error::WrongMode { expected: "continuous" }),
        _ => {}
    }
    if spec.moment_of_use >= dynamics.horizon() {
        return Err(Error::InvalidEstimand(format!(
            "moment of use {} is not before the simulator's last hour {}",
            spec.moment_of_use,
            dynamics.horizon()
        )));
    }
    if spec.regime.has_natural_segment() && usual_care.is_none() {
        return Err(Error::MissingUsualCare);
    }
    Ok(())
}

/// Fraction of `n_mc` forward simulations with the outcome by the horizon.
/// Replication `i` draws from substream `i` of `seed`.
pub fn oracle_mc<D: Dynamics + ?Sized>(
    spec: &EstimandSpec,
    condition: &PatientState,
    dynamics: &D,
    usual_care: Option<&dyn UsualCare>,
    n_mc: u64,
    seed: u64,
) -> Result<RiskEstimate> {
    mc_estimate(spec, condition, dynamics, usual_care, n_mc, seed, Method::OracleMc)
}

pub(crate) fn mc_estimate<D: Dynamics + ?Sized>(
    spec: &EstimandSpec,
    condition: &PatientState,
    dynamics: &D,
    usual_care: Option<&dyn UsualCare>,
    n_mc: u64,
    seed: u64,
    method: Method,
) -> Result<RiskEstimate> {
    check_inputs(dynamics, spec, condition, usual_care)?;
    if n_mc == 0 {
        return Err(Error::InvalidConfig("n_mc must be at least 1".into()));
    }
    let hits: Result<u64> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            simulate_outcome(dynamics, spec, condition, usual_care, &mut rng).map(u64::from)
        })
        .sum();
    Ok(RiskEstimate::from_count(hits?, n_mc, method))
}

/// How a batch of oracle risks is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OracleMethod {
    /// Backward induction; coarse mode only.
    Exact,
    MonteCarlo { n_mc: u64, seed: u64 },
}

/// Oracle risks for several estimands at one condition, in input order.
///
/// Monte Carlo seeds are derived from each spec's content, so a repeated spec
/// gets an identical estimate.
pub fn risk_profile(
    specs: &[EstimandSpec],
    condition: &PatientState,
    scm: &Scm,
    usual_care: Option<&dyn UsualCare>,
    method: OracleMethod,
) -> Result<Vec<RiskEstimate>> {
    specs
        .iter()
        .map(|spec| match method {
            OracleMethod::Exact => exact::oracle_exact(spec, condition, scm, usual_care),
            OracleMethod::MonteCarlo { n_mc, seed } => {
                let key = label(&serde_json::to_string(spec)?);
                oracle_mc(spec, condition, scm, usual_care, n_mc, derive_seed(seed, &[key, n_mc]))
            }
        })
        .collect()
}
