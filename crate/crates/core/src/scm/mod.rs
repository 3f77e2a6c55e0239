//! Discrete-time structural causal model of labor.
//!
//! Time advances in one-hour steps. Within an hour at risk, a cesarean ends
//! labor and draws the surgical adverse outcome; continued labor draws the
//! in-labor hazard from the current state, then moves the vitals forward,
//! and birth occurs once dilatation reaches 10 cm. The dynamics are first
//! order Markov in the observed state.

pub mod coarse;
pub mod config;
pub mod continuous;
mod state;

use std::collections::{BTreeSet, HashSet, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

pub use config::{Mode, ScmConfig};
pub use state::*;

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Hour-to-hour mechanics shared by the true simulator and fitted models.
pub trait Dynamics: Sync {
    fn mode(&self) -> Mode;

    /// Last hour that can be simulated.
    fn horizon(&self) -> u32;

    /// Probability of the adverse outcome during the current hour of labor.
    fn in_labor_hazard(&self, state: &PatientState) -> f64;

    /// Probability of the adverse outcome when a cesarean is performed now.
    fn surgical_risk(&self, state: &PatientState) -> f64;

    /// Time-varying covariates one hour later under continued labor.
    fn evolve(&self, state: &PatientState, rng: &mut SimRng) -> TimeVaryingCovariates;
}

/// Apply one action for one hour.
pub fn step<D: Dynamics + ?Sized>(
    dynamics: &D,
    state: &PatientState,
    action: Action,
    rng: &mut SimRng,
) -> Result<PatientState> {
    if state.a == Action::Cesarean && action == Action::Vaginal {
        return Err(Error::Irreversible { hour: state.k });
    }
    if !state.z() {
        return Err(Error::NotAtRisk { hour: state.k });
    }
    let mut next = *state;
    next.k = state.k + 1;
    next.a = action;
    match action {
        Action::Cesarean => {
            next.y = rng.random::<f64>() < dynamics.surgical_risk(state);
            next.born = true;
        }
        Action::Vaginal => {
            next.y = rng.random::<f64>() < dynamics.in_labor_hazard(state);
            next.tv = dynamics.evolve(state, rng);
            next.born = next.tv.dilatation() >= FULL_DILATATION;
        }
    }
    Ok(next)
}

/// Decision function over observed history.
pub trait Policy {
    fn decide(&self, history: &History<'_>, rng: &mut SimRng) -> Result<Action>;
}

/// Adapter turning a deterministic closure into a [`Policy`].
pub struct FnPolicy<F>(pub F);

impl<F> Policy for FnPolicy<F>
where
    F: Fn(&History<'_>) -> Action,
{
    fn decide(&self, history: &History<'_>, _rng: &mut SimRng) -> Result<Action> {
        Ok((self.0)(history))
    }
}

/// Reachable coarse state: covariate cell, intervention status and at-risk flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoarseStateKey {
    pub cell: CoarseCell,
    pub a: Action,
    pub z: bool,
}

impl CoarseStateKey {
    pub fn of(state: &PatientState) -> Option<Self> {
        state.cell().map(|cell| CoarseStateKey {
            cell,
            a: state.a,
            z: state.z(),
        })
    }
}

/// The true data-generating process.
#[derive(Debug, Clone)]
pub struct Scm {
    cfg: ScmConfig,
}

impl Scm {
    pub fn new(cfg: ScmConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Scm { cfg })
    }

    pub fn config(&self) -> &ScmConfig {
        &self.cfg
    }

    pub fn sample_baseline(&self, rng: &mut SimRng) -> BaselineCovariates {
        let b = &self.cfg.baseline;
        let age = continuous::normal(rng, b.age_mean, b.age_sd)
            .clamp(config::BaselineParams::AGE_MIN, config::BaselineParams::AGE_MAX);
        let parity = if b.parity_mean > 0.0 {
            let draw: f64 = Poisson::new(b.parity_mean)
                .expect("validated positive mean")
                .sample(rng);
            draw.min(f64::from(config::BaselineParams::PARITY_MAX)) as u8
        } else {
            0
        };
        BaselineCovariates {
            maternal_age: continuous::quantize(age, continuous::AGE_STEP),
            parity,
            history_preterm: continuous::bernoulli(rng, b.preterm_prob),
        }
    }

    /// State at the start of labor.
    pub fn initial_state(&self, baseline: BaselineCovariates, rng: &mut SimRng) -> PatientState {
        let tv = match self.cfg.mode {
            Mode::Continuous => TimeVaryingCovariates::Continuous(continuous::sample_initial(
                &self.cfg.continuous,
                rng,
            )),
            Mode::Coarse => {
                TimeVaryingCovariates::Coarse(coarse::sample_initial(&self.cfg.coarse, rng))
            }
        };
        PatientState {
            k: 0,
            baseline,
            tv,
            a: Action::Vaginal,
            born: false,
            y: false,
        }
    }

    fn check_mode(&self, state: &PatientState) -> Result<()> {
        match (self.cfg.mode, state.tv.is_coarse()) {
            (Mode::Coarse, true) | (Mode::Continuous, false) => Ok(()),
            (Mode::Coarse, false) => Err(Error::WrongMode { expected: "coarse" }),
            (Mode::Continuous, true) => Err(Error::WrongMode {
                expected: "continuous",
            }),
        }
    }

    pub fn transition(
        &self,
        state: &PatientState,
        action: Action,
        rng: &mut SimRng,
    ) -> Result<PatientState> {
        self.check_mode(state)?;
        step(self, state, action, rng)
    }

    /// Run one labor from its start until absorption or the horizon.
    pub fn simulate_trajectory(
        &self,
        baseline: BaselineCovariates,
        policy: &dyn Policy,
        rng: &mut SimRng,
    ) -> Result<Trajectory> {
        let first = self.initial_state(baseline, rng);
        self.continue_trajectory(Trajectory { states: vec![first], actions: Vec::new() }, policy, rng)
    }

    /// Extend a partial trajectory until absorption or the horizon.
    pub fn continue_trajectory(
        &self,
        mut traj: Trajectory,
        policy: &dyn Policy,
        rng: &mut SimRng,
    ) -> Result<Trajectory> {
        let horizon = self.horizon();
        loop {
            let current = *traj.last();
            if !current.z() || current.k >= horizon {
                return Ok(traj);
            }
            let action = policy.decide(&traj.history(), rng)?;
            let next = self.transition(&current, action, rng)?;
            traj.states.push(next);
            traj.actions.push(action);
        }
    }

    /// All coarse states reachable from some initial state under some action
    /// and noise sequence, sorted.
    pub fn enumerate_states(&self) -> Result<Vec<CoarseStateKey>> {
        if self.cfg.mode != Mode::Coarse {
            return Err(Error::WrongMode { expected: "coarse" });
        }
        let p = &self.cfg.coarse;
        let mp = self.cfg.baseline.multiparous_prob();
        let parities: Vec<bool> = [(false, 1.0 - mp), (true, mp)]
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(m, _)| m)
            .collect();

        let mut seen_at_risk: HashSet<(CoarseCell, bool)> = HashSet::new();
        let mut queue = VecDeque::new();
        let mut out = BTreeSet::new();
        for (cell, _) in coarse::initial_cell_distribution(p) {
            for &m in &parities {
                if seen_at_risk.insert((cell, m)) {
                    queue.push_back((cell, m));
                }
            }
        }
        while let Some((cell, m)) = queue.pop_front() {
            out.insert(CoarseStateKey { cell, a: Action::Vaginal, z: true });
            out.insert(CoarseStateKey { cell, a: Action::Cesarean, z: false });
            let hazard = coarse::in_labor_hazard(p, &cell);
            for (next, _) in coarse::next_cell_distribution(p, &cell, m) {
                if hazard > 0.0 {
                    out.insert(CoarseStateKey { cell: next, a: Action::Vaginal, z: false });
                }
                if hazard < 1.0 {
                    if next.dilatation >= 10 {
                        out.insert(CoarseStateKey { cell: next, a: Action::Vaginal, z: false });
                    } else if seen_at_risk.insert((next, m)) {
                        queue.push_back((next, m));
                    }
                }
            }
        }
        Ok(out.into_iter().collect())
    }
}

impl Dynamics for Scm {
    fn mode(&self) -> Mode {
        self.cfg.mode
    }

    fn horizon(&self) -> u32 {
        self.cfg.horizon()
    }

    fn in_labor_hazard(&self, state: &PatientState) -> f64 {
        match &state.tv {
            TimeVaryingCovariates::Continuous(v) => {
                continuous::in_labor_hazard(&self.cfg.continuous, state, v)
            }
            TimeVaryingCovariates::Coarse(c) => coarse::in_labor_hazard(&self.cfg.coarse, c),
        }
    }

    fn surgical_risk(&self, state: &PatientState) -> f64 {
        match &state.tv {
            TimeVaryingCovariates::Continuous(v) => continuous::surgical_risk(&self.cfg.continuous, v),
            TimeVaryingCovariates::Coarse(c) => coarse::surgical_risk(&self.cfg.coarse, c),
        }
    }

    fn evolve(&self, state: &PatientState, rng: &mut SimRng) -> TimeVaryingCovariates {
        match &state.tv {
            TimeVaryingCovariates::Continuous(v) => TimeVaryingCovariates::Continuous(
                continuous::evolve(&self.cfg.continuous, state, v, rng),
            ),
            TimeVaryingCovariates::Coarse(c) => TimeVaryingCovariates::Coarse(coarse::evolve(
                &self.cfg.coarse,
                c,
                state.baseline.multiparous(),
                rng,
            )),
        }
    }
}
