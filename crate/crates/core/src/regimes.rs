//! Intervention options and how they turn an observed history into an action.
//!
//! A regime is always read relative to an anchor hour, its moment of intended
//! use: hour 0 for single-stage estimands, any hour for sequential ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::scm::{
    continuous::bernoulli, Action, History, PatientState, Policy, TimeVaryingCovariates,
    Trajectory, FHR_LOWER, FHR_UPPER,
};

/// Abnormal fetal heart rate at the default thresholds.
pub fn fhr_abnormal_flag(fhr: f64, brady_persist: bool) -> bool {
    fhr_abnormal_flag_with(fhr, brady_persist, FHR_LOWER, FHR_UPPER)
}

/// Sustained bradycardia below `lower`, or tachycardia above `upper`.
pub fn fhr_abnormal_flag_with(fhr: f64, brady_persist: bool, lower: f64, upper: f64) -> bool {
    (fhr < lower && brady_persist) || fhr > upper
}

/// Probability of starting a cesarean in the current hour under usual care.
pub trait UsualCare: Sync {
    fn cesarean_probability(&self, state: &PatientState) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Regime {
    /// Fixed actions for the hours following the anchor.
    StaticSequence { actions: Vec<Action> },
    ImmediateCesarean,
    VaginalOnly,
    /// `fix_action` for `fix_hours` hours, then usual care.
    FixThenNatural { fix_action: Action, fix_hours: u32 },
    /// Cesarean from the first hour with an abnormal FHR onward.
    DynamicFhr { lower: f64, upper: f64 },
    NaturalCourse,
}

/// What a regime asks for at one hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prescription {
    Fixed(Action),
    /// Leave the action to usual care.
    Natural,
}

impl Regime {
    pub fn dynamic_fhr() -> Self {
        Regime::DynamicFhr {
            lower: FHR_LOWER,
            upper: FHR_UPPER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Regime::StaticSequence { actions } => {
                if actions.is_empty() {
                    return Err(Error::InvalidRegime("static sequence is empty".into()));
                }
                if actions.windows(2).any(|w| w[0] > w[1]) {
                    return Err(Error::InvalidRegime(
                        "static sequence returns to vaginal delivery after a cesarean".into(),
                    ));
                }
            }
            Regime::FixThenNatural { fix_hours, .. } if *fix_hours < 1 => {
                return Err(Error::InvalidRegime("fix_hours must be at least 1".into()));
            }
            Regime::DynamicFhr { lower, upper } if !(lower < upper) => {
                return Err(Error::InvalidRegime("lower threshold must be below upper".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Whether some hour is left to usual care.
    pub fn has_natural_segment(&self) -> bool {
        matches!(self, Regime::FixThenNatural { .. } | Regime::NaturalCourse)
    }

    /// Static regimes fix every action in advance.
    pub fn is_static(&self) -> bool {
        matches!(
            self,
            Regime::StaticSequence { .. } | Regime::ImmediateCesarean | Regime::VaginalOnly
        )
    }

    /// Abnormal-FHR flag used by a dynamic rule for one state.
    pub fn flag(&self, state: &PatientState) -> Result<bool> {
        let (lower, upper) = match self {
            Regime::DynamicFhr { lower, upper } => (*lower, *upper),
            _ => (FHR_LOWER, FHR_UPPER),
        };
        match &state.tv {
            TimeVaryingCovariates::Continuous(v) => {
                Ok(fhr_abnormal_flag_with(v.fhr, v.brady_persist, lower, upper))
            }
            TimeVaryingCovariates::Coarse(c) => {
                if lower != FHR_LOWER || upper != FHR_UPPER {
                    return Err(Error::InvalidRegime(
                        "coarse FHR categories only support the 110/160 thresholds".into(),
                    ));
                }
                Ok(c.fhr.is_abnormal())
            }
        }
    }

    /// Prescription at `rel_hour` hours after the anchor. `flag_seen` is whether
    /// an abnormal FHR has been flagged at any hour from the anchor to now.
    pub fn prescribe(
        &self,
        rel_hour: u32,
        state: &PatientState,
        flag_seen: bool,
    ) -> Result<Prescription> {
        if state.a == Action::Cesarean {
            return Ok(Prescription::Fixed(Action::Cesarean));
        }
        let p = match self {
            Regime::ImmediateCesarean => Prescription::Fixed(Action::Cesarean),
            Regime::VaginalOnly => Prescription::Fixed(Action::Vaginal),
            Regime::StaticSequence { actions } => match actions.get(rel_hour as usize) {
                Some(&a) => Prescription::Fixed(a),
                None => {
                    return Err(Error::SequenceExhausted {
                        len: actions.len(),
                        rel_hour,
                    })
                }
            },
            Regime::FixThenNatural {
                fix_action,
                fix_hours,
            } => {
                if rel_hour < *fix_hours {
                    Prescription::Fixed(*fix_action)
                } else {
                    Prescription::Natural
                }
            }
            Regime::DynamicFhr { .. } => Prescription::Fixed(if flag_seen {
                Action::Cesarean
            } else {
                Action::Vaginal
            }),
            Regime::NaturalCourse => Prescription::Natural,
        };
        Ok(p)
    }

    /// Probability of a cesarean at an at-risk state, mixing over usual care on
    /// natural segments. Relies on the cesarean being terminal, so a dynamic
    /// rule can only have fired at the current hour.
    pub fn cesarean_probability(
        &self,
        rel_hour: u32,
        state: &PatientState,
        usual_care: Option<&dyn UsualCare>,
    ) -> Result<f64> {
        let flag = matches!(self, Regime::DynamicFhr { .. }) && self.flag(state)?;
        match self.prescribe(rel_hour, state, flag)? {
            Prescription::Fixed(a) => Ok(f64::from(a.as_u8())),
            Prescription::Natural => usual_care
                .map(|u| u.cesarean_probability(state))
                .ok_or(Error::MissingUsualCare),
        }
    }

    /// Resolve a prescription into an action, sampling usual care if needed.
    pub fn act(
        &self,
        rel_hour: u32,
        state: &PatientState,
        flag_seen: bool,
        usual_care: Option<&dyn UsualCare>,
        rng: &mut SimRng,
    ) -> Result<Action> {
        match self.prescribe(rel_hour, state, flag_seen)? {
            Prescription::Fixed(a) => Ok(a),
            Prescription::Natural => {
                let u = usual_care.ok_or(Error::MissingUsualCare)?;
                Ok(if bernoulli(rng, u.cesarean_probability(state)) {
                    Action::Cesarean
                } else {
                    Action::Vaginal
                })
            }
        }
    }
}

fn flag_seen_since(regime: &Regime, anchor: u32, history: &History<'_>) -> Result<bool> {
    if !matches!(regime, Regime::DynamicFhr { .. }) {
        return Ok(false);
    }
    for s in history.states.iter().filter(|s| s.k >= anchor) {
        if regime.flag(s)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// The regime's action at the current hour of `history`, anchored at `anchor`.
pub fn decide(
    regime: &Regime,
    anchor: u32,
    history: &History<'_>,
    usual_care: Option<&dyn UsualCare>,
    rng: &mut SimRng,
) -> Result<Action> {
    let current = history.current();
    if current.k < anchor {
        return Err(Error::InvalidRegime(format!(
            "history ends at hour {} before the anchor hour {anchor}",
            current.k
        )));
    }
    let flag_seen = flag_seen_since(regime, anchor, history)?;
    regime.act(current.k - anchor, current, flag_seen, usual_care, rng)
}

/// Whether every observed action from `from_hour` until absorption agrees
/// with the regime anchored there. Natural-course hours agree with anything.
pub fn is_regime_consistent(trajectory: &Trajectory, regime: &Regime, from_hour: u32) -> bool {
    (from_hour as usize) < trajectory.states.len()
        && first_departure(trajectory, regime, from_hour).is_none()
}

/// First hour at or after `from_hour` whose observed action disagrees with
/// the regime anchored at `from_hour`. A regime that cannot be evaluated on
/// the trajectory departs at the hour where evaluation fails.
pub fn first_departure(trajectory: &Trajectory, regime: &Regime, from_hour: u32) -> Option<u32> {
    let mut flag_seen = false;
    for j in from_hour as usize..trajectory.actions.len() {
        let state = &trajectory.states[j];
        if matches!(regime, Regime::DynamicFhr { .. }) && !flag_seen {
            match regime.flag(state) {
                Ok(f) => flag_seen = f,
                Err(_) => return Some(j as u32),
            }
        }
        match regime.prescribe(j as u32 - from_hour, state, flag_seen) {
            Ok(Prescription::Fixed(a)) if a != trajectory.actions[j] => return Some(j as u32),
            Ok(_) => {}
            Err(_) => return Some(j as u32),
        }
    }
    None
}

/// A regime anchored at an hour, usable wherever a [`Policy`] is expected.
pub struct RegimePolicy<'a> {
    pub regime: &'a Regime,
    pub anchor: u32,
    pub usual_care: Option<&'a dyn UsualCare>,
}

impl Policy for RegimePolicy<'_> {
    fn decide(&self, history: &History<'_>, rng: &mut SimRng) -> Result<Action> {
        decide(self.regime, self.anchor, history, self.usual_care, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_follows_thresholds() {
        assert!(!fhr_abnormal_flag(130.0, false));
        assert!(fhr_abnormal_flag(170.0, false));
        assert!(!fhr_abnormal_flag(100.0, false));
        assert!(fhr_abnormal_flag(100.0, true));
        assert!(!fhr_abnormal_flag(110.0, true));
        assert!(!fhr_abnormal_flag(160.0, false));
    }

    #[test]
    fn validation_rejects_malformed_regimes() {
        use Action::*;
        assert!(Regime::StaticSequence { actions: vec![Cesarean, Vaginal] }.validate().is_err());
        assert!(Regime::StaticSequence { actions: vec![] }.validate().is_err());
        assert!(Regime::FixThenNatural { fix_action: Vaginal, fix_hours: 0 }.validate().is_err());
        assert!(Regime::DynamicFhr { lower: 160.0, upper: 110.0 }.validate().is_err());
        assert!(Regime::StaticSequence { actions: vec![Vaginal, Cesarean] }.validate().is_ok());
    }

    #[test]
    fn json_tags_are_stable() {
        let r = Regime::dynamic_fhr();
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"type":"dynamic_fhr","lower":110.0,"upper":160.0}"#
        );
        let parsed: Regime =
            serde_json::from_str(r#"{"type":"fix_then_natural","fix_action":0,"fix_hours":1}"#)
                .unwrap();
        assert_eq!(
            parsed,
            Regime::FixThenNatural { fix_action: Action::Vaginal, fix_hours: 1 }
        );
        let parsed: Regime =
            serde_json::from_str(r#"{"type":"static_sequence","actions":[0,0,1]}"#).unwrap();
        assert!(parsed.validate().is_ok());
        for tag in ["immediate_cesarean", "vaginal_only", "natural_course"] {
            let r: Regime = serde_json::from_str(&format!(r#"{{"type":"{tag}"}}"#)).unwrap();
            assert_eq!(serde_json::to_value(&r).unwrap()["type"], tag);
        }
    }
}
