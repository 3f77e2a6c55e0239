//! In-memory sessions for stepping through a simulated labor hour by hour
//! and asking what-if questions at each hour.
//!
//! Each session owns one trajectory of the simulator. Decisions advance it by
//! one hour; risk queries read the current state and never change the
//! session. Randomness is keyed by the session seed: the transition out of
//! hour `k` uses stream `k`, and a query uses a stream derived from the hour,
//! the estimand and the number of replications.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::datagen::{generate_dataset, PersonHour, UsualCarePolicy};
use crate::error::{Error, Result};
use crate::estimand::{builtin_estimand_at, oracle_exact, oracle_mc, RiskEstimate};
use crate::estimators::{fit_gcomp, gcomp_exact, gcomp_predict, TransitionModels};
use crate::rng::{derive_seed, label, substream};
use crate::scm::{Action, Mode, PatientState, Scm, ScmConfig, Trajectory};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: Mode,
    /// Full simulator configuration; its mode must match `mode`.
    #[serde(default)]
    pub scm: Option<ScmConfig>,
    #[serde(default)]
    pub policy: Option<UsualCarePolicy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    ContinueVaginal,
    Cesarean,
}

impl From<Decision> for Action {
    fn from(d: Decision) -> Action {
        match d {
            Decision::ContinueVaginal => Action::Vaginal,
            Decision::Cesarean => Action::Cesarean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Decision { k: u32, action: Decision },
    Born { k: u32 },
    AdverseOutcome { k: u32 },
    /// The simulator's last hour was reached while still in labor.
    HorizonReached { k: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskSource {
    /// The true simulator.
    #[default]
    Oracle,
    /// Models fitted to data simulated under usual care.
    Gcomp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMethod {
    /// Backward induction; coarse sessions only.
    Exact,
    #[default]
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskQuery {
    pub estimands: Vec<u8>,
    pub n_mc: u64,
    #[serde(default)]
    pub source: RiskSource,
    #[serde(default)]
    pub method: RiskMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRisk {
    pub estimand_id: u8,
    pub label: String,
    pub k: u32,
    pub source: RiskSource,
    #[serde(flatten)]
    pub estimate: RiskEstimate,
}

/// Everything needed to restore a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub seed: u64,
    pub scm: ScmConfig,
    pub policy: UsualCarePolicy,
    pub trajectory: Trajectory,
    pub events: Vec<Event>,
}

/// What a client sees of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub seed: u64,
    pub mode: Mode,
    pub k: u32,
    pub at_risk: bool,
    pub terminated: bool,
    pub state: PersonHour,
    pub history: Vec<PersonHour>,
    pub events: Vec<Event>,
}

impl Session {
    fn current(&self) -> &PatientState {
        self.trajectory.last()
    }

    pub fn terminated(&self) -> bool {
        let s = self.current();
        !s.z() || s.k >= self.scm.horizon()
    }

    pub fn view(&self) -> SessionView {
        let states = &self.trajectory.states;
        let history: Vec<PersonHour> = states
            .iter()
            .enumerate()
            .map(|(i, s)| PersonHour::from_state(0, s, self.trajectory.actions.get(i).copied()))
            .collect();
        let current = self.current();
        SessionView {
            session_id: self.id.clone(),
            seed: self.seed,
            mode: self.scm.mode,
            k: current.k,
            at_risk: current.z(),
            terminated: self.terminated(),
            state: history.last().cloned().expect("non-empty history"),
            history,
            events: self.events.clone(),
        }
    }

    fn transition_seed(&self) -> u64 {
        derive_seed(self.seed, &[label("transition")])
    }
}

/// Training setup for fitted-model risks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub n_persons: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            n_persons: 20_000,
            seed: 20_240_601,
        }
    }
}

type FitCache = HashMap<String, Arc<TransitionModels>>;

/// All live sessions.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    counter: AtomicU64,
    training: TrainingConfig,
    fitted: Mutex<FitCache>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl SessionStore {
    pub fn new(training: TrainingConfig) -> Self {
        SessionStore {
            training,
            ..Default::default()
        }
    }

    fn next_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let salt: u32 = rand::random();
        format!("s{n:x}-{salt:08x}")
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(id.to_string()))
    }

    fn insert(&self, session: Session) -> SessionView {
        let view = session.view();
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(session.id.clone(), Arc::new(Mutex::new(session)));
        view
    }

    /// Start a new labor at hour 0. Without a seed, one is drawn and returned.
    pub fn create(&self, request: CreateSession) -> Result<SessionView> {
        let scm = match request.scm {
            Some(cfg) if cfg.mode != request.mode => {
                return Err(Error::InvalidConfig(format!(
                    "simulator configuration is {} but the session asks for {}",
                    cfg.mode.name(),
                    request.mode.name()
                )))
            }
            Some(cfg) => cfg,
            None => ScmConfig::new(request.mode),
        };
        let seed = request.seed.unwrap_or_else(rand::random);
        let model = Scm::new(scm.clone())?;
        let mut rng = substream(derive_seed(seed, &[label("initial")]), 0);
        let baseline = model.sample_baseline(&mut rng);
        let first = model.initial_state(baseline, &mut rng);
        let session = Session {
            id: self.next_id(),
            seed,
            scm,
            policy: request.policy.unwrap_or_default(),
            trajectory: Trajectory {
                states: vec![first],
                actions: Vec::new(),
            },
            events: Vec::new(),
        };
        Ok(self.insert(session))
    }

    pub fn state(&self, id: &str) -> Result<SessionView> {
        let handle = self.get(id)?;
        let view = lock(&handle).view();
        Ok(view)
    }

    pub fn delete(&self, id: &str) -> Result<()> {
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| Error::UnknownSession(id.to_string()))
    }

    /// Apply one hour under `decision`. If `expected_k` is given it must
    /// equal the session's current hour. A decision that arrives while
    /// another is being applied is rejected.
    pub fn decide(&self, id: &str, decision: Decision, expected_k: Option<u32>) -> Result<SessionView> {
        let handle = self.get(id)?;
        let mut session = match handle.try_lock() {
            Ok(s) => s,
            Err(std::sync::TryLockError::Poisoned(e)) => e.into_inner(),
            Err(std::sync::TryLockError::WouldBlock) => {
                return Err(Error::Conflict("another decision is being applied".into()))
            }
        };
        let current = *session.current();
        if session.terminated() {
            return Err(Error::Conflict(format!("session ended at hour {}", current.k)));
        }
        if let Some(k) = expected_k {
            if k != current.k {
                return Err(Error::Conflict(format!(
                    "decision is for hour {k} but the session is at hour {}",
                    current.k
                )));
            }
        }
        let action = Action::from(decision);
        let scm = Scm::new(session.scm.clone())?;
        let mut rng = substream(session.transition_seed(), u64::from(current.k));
        let next = scm.transition(&current, action, &mut rng)?;
        session.trajectory.actions.push(action);
        session.trajectory.states.push(next);
        session.events.push(Event::Decision {
            k: current.k,
            action: decision,
        });
        if next.y {
            session.events.push(Event::AdverseOutcome { k: next.k });
        }
        if next.born {
            session.events.push(Event::Born { k: next.k });
        }
        if next.z() && next.k >= session.scm.horizon() {
            session.events.push(Event::HorizonReached { k: next.k });
        }
        Ok(session.view())
    }

    /// Risks at the session's current state. Estimands 1-4 asked after hour
    /// 0 are re-anchored at the current hour and labeled accordingly.
    pub fn risks(&self, id: &str, query: &RiskQuery) -> Result<Vec<LabeledRisk>> {
        let (seed, scm_cfg, policy, state, terminated) = {
            let handle = self.get(id)?;
            let s = lock(&handle);
            (s.seed, s.scm.clone(), s.policy.clone(), *s.current(), s.terminated())
        };
        if terminated {
            return Err(Error::Conflict(format!("session ended at hour {}", state.k)));
        }
        if query.estimands.is_empty() {
            return Err(Error::InvalidEstimand("no estimands requested".into()));
        }
        if query.n_mc == 0 {
            return Err(Error::InvalidConfig("n_mc must be at least 1".into()));
        }
        if query.method == RiskMethod::Exact && scm_cfg.mode != Mode::Coarse {
            return Err(Error::WrongMode { expected: "coarse" });
        }
        let scm = Scm::new(scm_cfg.clone())?;
        let fitted = match query.source {
            RiskSource::Oracle => None,
            RiskSource::Gcomp => Some(self.fitted_models(&scm_cfg, &policy)?),
        };
        let k = state.k;
        query
            .estimands
            .iter()
            .map(|&id| {
                let (spec, label_text) = builtin_estimand_at(id, k)?;
                let mc_seed = derive_seed(seed, &[label("risks"), u64::from(k), u64::from(id), query.n_mc]);
                let estimate = match (&fitted, query.method) {
                    (None, RiskMethod::Exact) => oracle_exact(&spec, &state, &scm, Some(&policy))?,
                    (None, RiskMethod::Mc) => oracle_mc(&spec, &state, &scm, Some(&policy), query.n_mc, mc_seed)?,
                    (Some(models), RiskMethod::Exact) => match models.as_ref() {
                        TransitionModels::Coarse(tables) => gcomp_exact(tables, &state, &spec)?,
                        TransitionModels::Continuous(_) => return Err(Error::WrongMode { expected: "coarse" }),
                    },
                    (Some(models), RiskMethod::Mc) => gcomp_predict(models, &state, &spec, query.n_mc, mc_seed)?,
                };
                Ok(LabeledRisk {
                    estimand_id: id,
                    label: label_text,
                    k,
                    source: query.source,
                    estimate,
                })
            })
            .collect()
    }

    fn fitted_models(&self, scm: &ScmConfig, policy: &UsualCarePolicy) -> Result<Arc<TransitionModels>> {
        let key = serde_json::to_string(&(scm, policy))?;
        let mut cache = lock(&self.fitted);
        if let Some(m) = cache.get(&key) {
            return Ok(Arc::clone(m));
        }
        let ds = generate_dataset(self.training.n_persons, &Scm::new(scm.clone())?, policy, self.training.seed)?;
        let models = Arc::new(fit_gcomp(&ds)?);
        cache.insert(key, Arc::clone(&models));
        Ok(models)
    }

    /// The session as JSON, for saving and later [`restore`](Self::restore).
    pub fn snapshot(&self, id: &str) -> Result<String> {
        let handle = self.get(id)?;
        let s = lock(&handle);
        Ok(serde_json::to_string(&*s)?)
    }

    pub fn restore(&self, json: &str) -> Result<SessionView> {
        let session: Session = serde_json::from_str(json)?;
        if self.get(&session.id).is_ok() {
            return Err(Error::Conflict(format!("session `{}` already exists", session.id)));
        }
        Scm::new(session.scm.clone())?;
        Ok(self.insert(session))
    }

    pub fn save(&self, id: &str, path: &Path) -> Result<()> {
        std::fs::write(path, self.snapshot(id)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(&self, path: &Path) -> Result<SessionView> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.restore(&text)
    }
}
