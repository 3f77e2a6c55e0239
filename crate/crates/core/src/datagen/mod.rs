//! Observational data under a confounded usual-care policy.

mod io;
mod positivity;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{person_trajectory, read_dataset, write_dataset, Bp, Dataset, Fhr, PersonHour};
pub use positivity::{positivity_report, PositivityCell, PositivityReport, Strata};

use crate::error::{Error, Result};
use crate::regimes::UsualCare;
use crate::rng::{substream, SimRng};
use crate::scm::{
    continuous::{bernoulli, logistic},
    Action, History, PatientState, Policy, Scm, Trajectory,
};

/// Logistic model of the hourly probability of starting a cesarean.
///
/// Indication is the abnormal-FHR flag, which also drives the outcome hazard,
/// so naive risk models trained under this policy are confounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UsualCarePolicy {
    pub intercept: f64,
    pub abnormal_fhr: f64,
    pub stalled: f64,
    /// Per hour of labor, up to `duration_cap` hours.
    pub per_hour: f64,
    pub duration_cap: u32,
    /// Labor is stalled from this hour on while dilatation is below `stall_below_cm`.
    pub stall_after_hours: u32,
    pub stall_below_cm: f64,
    /// Overrides the model: cesareans are never performed.
    pub never_cesarean: bool,
}

impl Default for UsualCarePolicy {
    fn default() -> Self {
        UsualCarePolicy {
            intercept: -4.5,
            abnormal_fhr: 3.5,
            stalled: 1.0,
            per_hour: 0.015,
            duration_cap: 24,
            stall_after_hours: 6,
            stall_below_cm: 8.0,
            never_cesarean: false,
        }
    }
}

impl UsualCarePolicy {
    pub fn never() -> Self {
        UsualCarePolicy {
            never_cesarean: true,
            ..Default::default()
        }
    }

    pub fn stalled_flag(&self, state: &PatientState) -> bool {
        state.k >= self.stall_after_hours && state.tv.dilatation() < self.stall_below_cm
    }

    pub fn duration(&self, state: &PatientState) -> f64 {
        f64::from(state.k.min(self.duration_cap))
    }

    /// Design row `[1, abnormal FHR, stalled, capped duration]`.
    pub fn features(&self, state: &PatientState) -> [f64; 4] {
        [
            1.0,
            f64::from(u8::from(state.fhr_abnormal())),
            f64::from(u8::from(self.stalled_flag(state))),
            self.duration(state),
        ]
    }

    pub fn coefficients(&self) -> [f64; 4] {
        [self.intercept, self.abnormal_fhr, self.stalled, self.per_hour]
    }
}

impl UsualCare for UsualCarePolicy {
    fn cesarean_probability(&self, state: &PatientState) -> f64 {
        if self.never_cesarean {
            return 0.0;
        }
        let eta: f64 = self
            .features(state)
            .iter()
            .zip(self.coefficients())
            .map(|(x, b)| x * b)
            .sum();
        logistic(eta)
    }
}

impl Policy for UsualCarePolicy {
    fn decide(&self, history: &History<'_>, rng: &mut SimRng) -> Result<Action> {
        let current = history.current();
        if current.a == Action::Cesarean {
            return Ok(Action::Cesarean);
        }
        Ok(if bernoulli(rng, self.cesarean_probability(current)) {
            Action::Cesarean
        } else {
            Action::Vaginal
        })
    }
}

/// `n` independent labors under `policy`; person `i` draws from stream `i`.
pub fn generate_trajectories(
    n: usize,
    scm: &Scm,
    policy: &(dyn Policy + Sync),
    seed: u64,
) -> Result<Vec<Trajectory>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let baseline = scm.sample_baseline(&mut rng);
            scm.simulate_trajectory(baseline, policy, &mut rng)
        })
        .collect()
}

pub fn generate_dataset(n: usize, scm: &Scm, policy: &UsualCarePolicy, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidConfig("number of persons must be at least 1".into()));
    }
    let trajectories = generate_trajectories(n, scm, policy, seed)?;
    Ok(Dataset::from_trajectories(scm.config().mode, &trajectories))
}

/// Independent at-risk states at hour `hour`, reached under usual care.
pub fn sample_conditions(
    scm: &Scm,
    policy: &UsualCarePolicy,
    count: usize,
    hour: u32,
    seed: u64,
) -> Result<Vec<PatientState>> {
    if hour >= scm.config().horizon() {
        return Err(Error::InvalidConfig(format!(
            "no at-risk conditions exist at hour {hour}, the simulator stops at {}",
            scm.config().horizon()
        )));
    }
    let mut out = Vec::with_capacity(count);
    let mut stream = 0u64;
    while out.len() < count {
        let mut rng = substream(seed, stream);
        stream += 1;
        if stream > 1000 * (count as u64 + 1) {
            return Err(Error::EmptyRiskSet(format!("hour {hour} is almost never reached at risk")));
        }
        let baseline = scm.sample_baseline(&mut rng);
        let mut traj = Trajectory {
            states: vec![scm.initial_state(baseline, &mut rng)],
            actions: Vec::new(),
        };
        while traj.last().z() && traj.last().k < hour {
            let action = policy.decide(&traj.history(), &mut rng)?;
            let next = scm.transition(traj.last(), action, &mut rng)?;
            traj.states.push(next);
            traj.actions.push(action);
        }
        let last = *traj.last();
        if last.z() && last.k == hour {
            out.push(last);
        }
    }
    Ok(out)
}
