use serde::{Deserialize, Serialize};

/// Bradycardia threshold in beats per minute.
pub const FHR_LOWER: f64 = 110.0;
/// Tachycardia threshold in beats per minute.
pub const FHR_UPPER: f64 = 160.0;
/// Dilatation at which vaginal birth completes.
pub const FULL_DILATATION: f64 = 10.0;
/// Systolic pressure treated as hypertensive by the outcome hazard.
pub const SBP_HIGH: f64 = 160.0;

/// Mode of delivery chosen for one hour; serialized as 0 (vaginal) or 1 (cesarean).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Action {
    Vaginal,
    Cesarean,
}

impl Action {
    pub fn as_u8(self) -> u8 {
        match self {
            Action::Vaginal => 0,
            Action::Cesarean => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Action::Vaginal),
            1 => Some(Action::Cesarean),
            _ => None,
        }
    }
}

impl From<Action> for u8 {
    fn from(a: Action) -> u8 {
        a.as_u8()
    }
}

impl TryFrom<u8> for Action {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Action::from_u8(v).ok_or_else(|| format!("action must be 0 or 1, got {v}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FhrCategory {
    BradycardiaTransient,
    BradycardiaPersistent,
    Normal,
    Tachycardia,
}

impl FhrCategory {
    pub const ALL: [FhrCategory; 4] = [
        FhrCategory::BradycardiaTransient,
        FhrCategory::BradycardiaPersistent,
        FhrCategory::Normal,
        FhrCategory::Tachycardia,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    /// Categorize a continuous reading.
    pub fn from_bpm(fhr: f64, brady_persist: bool) -> Self {
        if fhr < FHR_LOWER {
            if brady_persist {
                FhrCategory::BradycardiaPersistent
            } else {
                FhrCategory::BradycardiaTransient
            }
        } else if fhr > FHR_UPPER {
            FhrCategory::Tachycardia
        } else {
            FhrCategory::Normal
        }
    }

    pub fn is_abnormal(self) -> bool {
        matches!(
            self,
            FhrCategory::BradycardiaPersistent | FhrCategory::Tachycardia
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            FhrCategory::BradycardiaTransient => "bradycardia_transient",
            FhrCategory::BradycardiaPersistent => "bradycardia_persistent",
            FhrCategory::Normal => "normal",
            FhrCategory::Tachycardia => "tachycardia",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BpLevel {
    Normal,
    High,
}

impl BpLevel {
    pub const ALL: [BpLevel; 2] = [BpLevel::Normal, BpLevel::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineCovariates {
    /// Years, 16 to 45.
    pub maternal_age: f64,
    /// Previous births, 0 to 6.
    pub parity: u8,
    pub history_preterm: bool,
}

impl BaselineCovariates {
    pub fn multiparous(&self) -> bool {
        self.parity >= 1
    }
}

/// Hourly vitals on the continuous scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousVitals {
    /// Fetal heart rate, bpm.
    pub fhr: f64,
    /// FHR below 110 sustained for at least three minutes within the hour.
    pub brady_persist: bool,
    /// Cervical dilatation, cm.
    pub dilatation: f64,
    pub sbp: f64,
    pub dbp: f64,
}

/// One cell of the finite covariate space used for exact computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoarseCell {
    pub fhr: FhrCategory,
    /// Whole centimetres, 0 to 10.
    pub dilatation: u8,
    pub sbp: BpLevel,
    pub dbp: BpLevel,
}

impl CoarseCell {
    pub const COUNT: usize = 4 * 11 * 2 * 2;

    pub fn index(&self) -> usize {
        ((self.fhr.index() * 11 + self.dilatation as usize) * 2 + self.sbp.index()) * 2
            + self.dbp.index()
    }

    pub fn from_index(i: usize) -> Self {
        let dbp = BpLevel::from_index(i % 2);
        let sbp = BpLevel::from_index((i / 2) % 2);
        let dilatation = ((i / 4) % 11) as u8;
        let fhr = FhrCategory::from_index(i / 44);
        CoarseCell {
            fhr,
            dilatation,
            sbp,
            dbp,
        }
    }

    pub fn all() -> impl Iterator<Item = CoarseCell> {
        (0..Self::COUNT).map(Self::from_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scale", rename_all = "snake_case")]
pub enum TimeVaryingCovariates {
    Continuous(ContinuousVitals),
    Coarse(CoarseCell),
}

impl TimeVaryingCovariates {
    pub fn fhr_category(&self) -> FhrCategory {
        match self {
            TimeVaryingCovariates::Continuous(v) => FhrCategory::from_bpm(v.fhr, v.brady_persist),
            TimeVaryingCovariates::Coarse(c) => c.fhr,
        }
    }

    pub fn dilatation(&self) -> f64 {
        match self {
            TimeVaryingCovariates::Continuous(v) => v.dilatation,
            TimeVaryingCovariates::Coarse(c) => f64::from(c.dilatation),
        }
    }

    pub fn sbp_high(&self) -> bool {
        match self {
            TimeVaryingCovariates::Continuous(v) => v.sbp >= SBP_HIGH,
            TimeVaryingCovariates::Coarse(c) => c.sbp == BpLevel::High,
        }
    }

    pub fn brady_persist(&self) -> bool {
        match self {
            TimeVaryingCovariates::Continuous(v) => v.brady_persist,
            TimeVaryingCovariates::Coarse(c) => c.fhr == FhrCategory::BradycardiaPersistent,
        }
    }

    pub fn as_coarse(&self) -> Option<&CoarseCell> {
        match self {
            TimeVaryingCovariates::Coarse(c) => Some(c),
            TimeVaryingCovariates::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&ContinuousVitals> {
        match self {
            TimeVaryingCovariates::Continuous(v) => Some(v),
            TimeVaryingCovariates::Coarse(_) => None,
        }
    }

    pub fn is_coarse(&self) -> bool {
        matches!(self, TimeVaryingCovariates::Coarse(_))
    }
}

/// Full observed state of one person at hour `k`.
///
/// `a` is the intervention status entering hour `k`: it is 1 once a cesarean
/// has been started. The at-risk indicator is derived, never stored, so it
/// always equals `!born && !y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientState {
    pub k: u32,
    pub baseline: BaselineCovariates,
    pub tv: TimeVaryingCovariates,
    pub a: Action,
    pub born: bool,
    pub y: bool,
}

impl PatientState {
    /// The at-risk indicator: still in labor and outcome-free.
    pub fn z(&self) -> bool {
        !self.born && !self.y
    }

    pub fn fhr_abnormal(&self) -> bool {
        self.tv.fhr_category().is_abnormal()
    }

    /// Dense index of the coarse cell, if this is a coarse state.
    pub fn cell(&self) -> Option<CoarseCell> {
        self.tv.as_coarse().copied()
    }
}

/// One simulated course of labor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// States for hours `0..=T`, where `T` is the absorption hour or the horizon.
    pub states: Vec<PatientState>,
    /// `actions[k]` is the action taken at hour `k`; one fewer than `states`.
    pub actions: Vec<Action>,
}

impl Trajectory {
    pub fn last(&self) -> &PatientState {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn history_at(&self, k: usize) -> History<'_> {
        History {
            states: &self.states[..=k],
            actions: &self.actions[..k],
        }
    }

    pub fn history(&self) -> History<'_> {
        History {
            states: &self.states,
            actions: &self.actions,
        }
    }

    /// Whether a cesarean was performed at any hour.
    pub fn cesarean(&self) -> bool {
        self.actions.contains(&Action::Cesarean)
    }
}

/// Observed history up to and including the current hour.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    pub states: &'a [PatientState],
    pub actions: &'a [Action],
}

impl<'a> History<'a> {
    pub fn new(states: &'a [PatientState], actions: &'a [Action]) -> Self {
        debug_assert_eq!(states.len(), actions.len() + 1);
        History { states, actions }
    }

    pub fn current(&self) -> &'a PatientState {
        self.states.last().expect("history is never empty")
    }
}
