//! Simulator configuration.
//!
//! Every parameter has a default; a JSON document only needs the keys it
//! overrides. Unknown keys are rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Continuous,
    Coarse,
}

impl Mode {
    pub fn default_horizon(self) -> u32 {
        match self {
            Mode::Continuous => 72,
            Mode::Coarse => 12,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Continuous => "continuous",
            Mode::Coarse => "coarse",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(Mode::Continuous),
            "coarse" => Ok(Mode::Coarse),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScmConfig {
    pub mode: Mode,
    /// Last simulated hour `K`; defaults to 72 (continuous) or 12 (coarse).
    pub horizon: Option<u32>,
    pub seed: u64,
    pub baseline: BaselineParams,
    pub continuous: ContinuousParams,
    pub coarse: CoarseParams,
}

impl ScmConfig {
    pub fn new(mode: Mode) -> Self {
        ScmConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn horizon(&self) -> u32 {
        self.horizon.unwrap_or_else(|| self.mode.default_horizon())
    }

    /// Same configuration with every adverse-outcome probability set to zero.
    pub fn with_zero_hazards(mut self) -> Self {
        self.continuous.hazard.enabled = false;
        self.continuous.surgical.enabled = false;
        self.coarse.hazard = [[0.0; 2]; 4];
        self.coarse.surgical = [0.0; 2];
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScmConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon() < 1 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        self.baseline.validate()?;
        self.continuous.validate()?;
        self.coarse.validate()
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::InvalidConfig(format!(
            "{name} = {p} is not a probability"
        )));
    }
    Ok(())
}

fn check_distribution(name: &str, probs: &[f64]) -> Result<()> {
    for (i, &p) in probs.iter().enumerate() {
        check_prob(&format!("{name}[{i}]"), p)?;
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "{name} sums to {total}, expected 1"
        )));
    }
    Ok(())
}

fn check_non_negative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::InvalidConfig(format!("{name} = {v} must be >= 0")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineParams {
    pub age_mean: f64,
    pub age_sd: f64,
    /// Poisson mean of parity before clamping; zero makes parity identically 0.
    pub parity_mean: f64,
    pub preterm_prob: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            age_mean: 30.0,
            age_sd: 5.0,
            parity_mean: 0.9,
            preterm_prob: 0.15,
        }
    }
}

impl BaselineParams {
    pub const AGE_MIN: f64 = 16.0;
    pub const AGE_MAX: f64 = 45.0;
    pub const PARITY_MAX: u8 = 6;

    fn validate(&self) -> Result<()> {
        check_non_negative("baseline.age_sd", self.age_sd)?;
        check_non_negative("baseline.parity_mean", self.parity_mean)?;
        check_prob("baseline.preterm_prob", self.preterm_prob)
    }

    /// Probability that parity is at least one.
    pub fn multiparous_prob(&self) -> f64 {
        1.0 - (-self.parity_mean).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuousParams {
    pub fhr: FhrParams,
    pub dilatation: DilatationParams,
    pub sbp: ArParams,
    pub dbp: ArParams,
    pub hazard: HazardParams,
    pub surgical: SurgicalParams,
}

impl Default for ContinuousParams {
    fn default() -> Self {
        ContinuousParams {
            fhr: FhrParams::default(),
            dilatation: DilatationParams::default(),
            sbp: ArParams::systolic(),
            dbp: ArParams::diastolic(),
            hazard: HazardParams::default(),
            surgical: SurgicalParams::default(),
        }
    }
}

impl ContinuousParams {
    fn validate(&self) -> Result<()> {
        self.fhr.validate()?;
        self.dilatation.validate()?;
        self.sbp.validate("continuous.sbp")?;
        self.dbp.validate("continuous.dbp")
    }
}

/// Fetal heart rate: mean-reverting noise inside the normal band, with
/// excursions whose hourly probability grows with labor duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FhrParams {
    pub initial_abnormal_prob: f64,
    pub initial_sd: f64,
    pub normal_mean: f64,
    pub reversion: f64,
    pub normal_sd: f64,
    /// Logit of the hourly excursion probability at hour 0 from the normal band.
    pub excursion_intercept: f64,
    pub excursion_per_hour: f64,
    /// Added when the current reading is already outside the normal band.
    pub excursion_if_abnormal: f64,
    /// Probability an excursion is bradycardic, by current band.
    pub brady_share_from_normal: f64,
    pub brady_share_from_brady: f64,
    pub brady_share_from_tachy: f64,
    pub brady_mean: f64,
    pub brady_sd: f64,
    pub tachy_mean: f64,
    pub tachy_sd: f64,
    /// Probability that a bradycardic hour contains a sustained episode.
    pub brady_persist_prob: f64,
}

impl Default for FhrParams {
    fn default() -> Self {
        FhrParams {
            initial_abnormal_prob: 0.1,
            initial_sd: 10.0,
            normal_mean: 140.0,
            reversion: 0.5,
            normal_sd: 8.0,
            excursion_intercept: -3.2,
            excursion_per_hour: 0.08,
            excursion_if_abnormal: 1.5,
            brady_share_from_normal: 0.5,
            brady_share_from_brady: 0.8,
            brady_share_from_tachy: 0.2,
            brady_mean: 95.0,
            brady_sd: 7.0,
            tachy_mean: 172.0,
            tachy_sd: 6.0,
            brady_persist_prob: 0.5,
        }
    }
}

impl FhrParams {
    fn validate(&self) -> Result<()> {
        check_prob("fhr.initial_abnormal_prob", self.initial_abnormal_prob)?;
        check_prob("fhr.brady_share_from_normal", self.brady_share_from_normal)?;
        check_prob("fhr.brady_share_from_brady", self.brady_share_from_brady)?;
        check_prob("fhr.brady_share_from_tachy", self.brady_share_from_tachy)?;
        check_prob("fhr.brady_persist_prob", self.brady_persist_prob)?;
        for (n, v) in [
            ("fhr.initial_sd", self.initial_sd),
            ("fhr.normal_sd", self.normal_sd),
            ("fhr.brady_sd", self.brady_sd),
            ("fhr.tachy_sd", self.tachy_sd),
        ] {
            check_non_negative(n, v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DilatationParams {
    pub initial_mean: f64,
    pub initial_sd: f64,
    pub initial_max: f64,
    /// Hourly increment is `max(0, Normal(mean, sd))`, scaled for multiparous women.
    pub increment_mean: f64,
    pub increment_sd: f64,
    pub multiparous_factor: f64,
}

impl Default for DilatationParams {
    fn default() -> Self {
        DilatationParams {
            initial_mean: 3.0,
            initial_sd: 1.0,
            initial_max: 6.0,
            increment_mean: 0.5,
            increment_sd: 0.3,
            multiparous_factor: 1.3,
        }
    }
}

impl DilatationParams {
    fn validate(&self) -> Result<()> {
        check_non_negative("dilatation.initial_sd", self.initial_sd)?;
        check_non_negative("dilatation.increment_sd", self.increment_sd)?;
        check_non_negative("dilatation.multiparous_factor", self.multiparous_factor)
    }
}

/// First-order autoregression clamped to a physiological range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArParams {
    pub initial_mean: f64,
    pub initial_sd: f64,
    pub mean: f64,
    pub reversion: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl ArParams {
    pub fn systolic() -> Self {
        ArParams {
            initial_mean: 140.0,
            initial_sd: 14.0,
            mean: 140.0,
            reversion: 0.85,
            sd: 7.0,
            min: 70.0,
            max: 220.0,
        }
    }

    pub fn diastolic() -> Self {
        ArParams {
            initial_mean: 85.0,
            initial_sd: 10.0,
            mean: 85.0,
            reversion: 0.85,
            sd: 5.0,
            min: 40.0,
            max: 130.0,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        check_non_negative(&format!("{name}.sd"), self.sd)?;
        check_non_negative(&format!("{name}.initial_sd"), self.initial_sd)?;
        if self.min >= self.max {
            return Err(Error::InvalidConfig(format!("{name}: min >= max")));
        }
        Ok(())
    }
}

/// Hourly in-labor adverse-outcome hazard, logistic in its features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HazardParams {
    pub enabled: bool,
    pub intercept: f64,
    pub abnormal_fhr: f64,
    pub brady_persist: f64,
    pub per_hour: f64,
    pub sbp_high: f64,
    pub history_preterm: f64,
}

impl Default for HazardParams {
    fn default() -> Self {
        HazardParams {
            enabled: true,
            intercept: -5.0,
            abnormal_fhr: 2.0,
            brady_persist: 0.7,
            per_hour: 0.03,
            sbp_high: 0.8,
            history_preterm: 0.3,
        }
    }
}

/// One-time adverse-outcome probability of a cesarean, rising with systolic pressure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurgicalParams {
    pub enabled: bool,
    pub intercept: f64,
    /// Per 10 mmHg of systolic pressure above 140.
    pub per_10_mmhg: f64,
}

impl Default for SurgicalParams {
    fn default() -> Self {
        SurgicalParams {
            enabled: true,
            intercept: -3.5,
            per_10_mmhg: 0.3,
        }
    }
}

/// Explicit probability tables of the finite-state simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoarseParams {
    /// Indexed by FHR category: transient bradycardia, persistent bradycardia, normal, tachycardia.
    pub initial_fhr: [f64; 4],
    /// Dilatation 0..=6 cm at the start of labor.
    pub initial_dilatation: [f64; 7],
    pub initial_sbp_high: f64,
    pub initial_dbp_high: f64,
    /// Dilatation from which the `late` FHR transition rows apply.
    pub late_dilatation: u8,
    /// Next-FHR-category distribution by current category, early labor.
    pub fhr_early: [[f64; 4]; 4],
    pub fhr_late: [[f64; 4]; 4],
    /// Probabilities of a 0, 1 or 2 cm increment.
    pub dilatation_nulliparous: [f64; 3],
    pub dilatation_multiparous: [f64; 3],
    /// Row = current level (normal, high).
    pub sbp_transition: [[f64; 2]; 2],
    pub dbp_transition: [[f64; 2]; 2],
    /// In-labor hourly hazard by FHR category and systolic level.
    pub hazard: [[f64; 2]; 4],
    /// Cesarean adverse-outcome probability by systolic level.
    pub surgical: [f64; 2],
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Default for CoarseParams {
    fn default() -> Self {
        let mut hazard = [[0.0; 2]; 4];
        for f in super::FhrCategory::ALL {
            for s in 0..2 {
                let eta = -4.0
                    + if f.is_abnormal() { 2.2 } else { 0.0 }
                    + if f == super::FhrCategory::BradycardiaPersistent {
                        0.6
                    } else {
                        0.0
                    }
                    + 0.8 * s as f64;
                hazard[f.index()][s] = logistic(eta);
            }
        }
        CoarseParams {
            initial_fhr: [0.06, 0.04, 0.82, 0.08],
            initial_dilatation: [0.01, 0.06, 0.24, 0.38, 0.24, 0.06, 0.01],
            initial_sbp_high: 0.1,
            initial_dbp_high: 0.1,
            late_dilatation: 7,
            fhr_early: [
                [0.30, 0.15, 0.50, 0.05],
                [0.20, 0.50, 0.25, 0.05],
                [0.04, 0.02, 0.90, 0.04],
                [0.03, 0.02, 0.35, 0.60],
            ],
            fhr_late: [
                [0.30, 0.20, 0.45, 0.05],
                [0.20, 0.55, 0.20, 0.05],
                [0.06, 0.04, 0.84, 0.06],
                [0.03, 0.02, 0.30, 0.65],
            ],
            dilatation_nulliparous: [0.25, 0.55, 0.20],
            dilatation_multiparous: [0.15, 0.55, 0.30],
            sbp_transition: [[0.96, 0.04], [0.30, 0.70]],
            dbp_transition: [[0.96, 0.04], [0.30, 0.70]],
            hazard,
            surgical: [logistic(-3.5), logistic(-2.5)],
        }
    }
}

impl CoarseParams {
    fn validate(&self) -> Result<()> {
        check_distribution("coarse.initial_fhr", &self.initial_fhr)?;
        check_distribution("coarse.initial_dilatation", &self.initial_dilatation)?;
        check_prob("coarse.initial_sbp_high", self.initial_sbp_high)?;
        check_prob("coarse.initial_dbp_high", self.initial_dbp_high)?;
        for (i, row) in self.fhr_early.iter().enumerate() {
            check_distribution(&format!("coarse.fhr_early[{i}]"), row)?;
        }
        for (i, row) in self.fhr_late.iter().enumerate() {
            check_distribution(&format!("coarse.fhr_late[{i}]"), row)?;
        }
        check_distribution("coarse.dilatation_nulliparous", &self.dilatation_nulliparous)?;
        check_distribution("coarse.dilatation_multiparous", &self.dilatation_multiparous)?;
        for (i, row) in self.sbp_transition.iter().enumerate() {
            check_distribution(&format!("coarse.sbp_transition[{i}]"), row)?;
        }
        for (i, row) in self.dbp_transition.iter().enumerate() {
            check_distribution(&format!("coarse.dbp_transition[{i}]"), row)?;
        }
        for (i, row) in self.hazard.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                check_prob(&format!("coarse.hazard[{i}][{j}]"), p)?;
            }
        }
        for (j, &p) in self.surgical.iter().enumerate() {
            check_prob(&format!("coarse.surgical[{j}]"), p)?;
        }
        Ok(())
    }

    pub fn fhr_row(&self, current: super::FhrCategory, dilatation: u8) -> &[f64; 4] {
        if dilatation >= self.late_dilatation {
            &self.fhr_late[current.index()]
        } else {
            &self.fhr_early[current.index()]
        }
    }

    pub fn dilatation_increments(&self, multiparous: bool) -> &[f64; 3] {
        if multiparous {
            &self.dilatation_multiparous
        } else {
            &self.dilatation_nulliparous
        }
    }
}
