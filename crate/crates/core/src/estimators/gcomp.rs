//! g-computation: fit every mechanism of the simulator from observational
//! data, then simulate forward under the intervention option with the fitted
//! mechanisms in place of the true ones.
//!
//! Fitted models implement [`Dynamics`], so forward simulation is the same
//! code the oracle runs. On the coarse scale each mechanism is a table
//! saturated in its parents (FHR transitions in the current category and
//! whether dilatation has reached the late-labor threshold, dilatation
//! increments in parity group, blood pressure in its own level, hazard in FHR
//! category and systolic level, surgical risk in systolic level). On the
//! continuous scale the binary mechanisms are logistic regressions and the
//! vitals are linear autoregressions.

use serde::{Deserialize, Serialize};

use super::logistic::{fit_logistic, fit_logistic_or_constant, Design, FitOptions, LogisticModel};
use crate::datagen::{Dataset, PersonHour, UsualCarePolicy};
use crate::error::{Error, Result};
use crate::estimand::exact::exact_risk;
use crate::estimand::oracle::mc_estimate;
use crate::estimand::{CoarseKernel, EstimandSpec, Method, RiskEstimate};
use crate::regimes::{Regime, UsualCare};
use crate::rng::SimRng;
use crate::scm::continuous::{band, bernoulli, normal, quantize, FhrBand, BP_STEP, DILATATION_STEP, FHR_STEP};
use crate::scm::config::CoarseParams;
use crate::scm::{
    coarse, Action, CoarseCell, ContinuousVitals, Dynamics, FhrCategory, Mode,
    PatientState, TimeVaryingCovariates, FHR_LOWER, FHR_UPPER, FULL_DILATATION,
};

/// Usual-care propensity: logistic in the abnormal-FHR flag, the stalled-labor
/// flag and capped labor duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub features: UsualCarePolicy,
    pub model: LogisticModel,
}

impl UsualCare for PropensityModel {
    fn cesarean_probability(&self, state: &PatientState) -> f64 {
        self.model.predict(&self.features.features(state))
    }
}

/// One observed hour of labor: the state, the action taken and the next state.
pub(crate) struct Transition<'a> {
    pub from: &'a PersonHour,
    pub action: Action,
    pub to: &'a PersonHour,
}

pub(crate) fn transitions(ds: &Dataset) -> impl Iterator<Item = Transition<'_>> {
    ds.persons().flat_map(|rows| {
        rows.windows(2).filter(|w| w[0].at_risk()).map(|w| Transition {
            from: &w[0],
            action: w[0].action(),
            to: &w[1],
        })
    })
}

fn fit_propensity(ds: &Dataset) -> Result<PropensityModel> {
    let features = UsualCarePolicy::default();
    let mut design = Design::new(&["intercept", "fhr_abnormal", "stalled", "duration"]);
    for t in transitions(ds) {
        let s = t.from.to_state();
        design.push(&features.features(&s), f64::from(t.action.as_u8()));
    }
    let model = fit_logistic_or_constant("propensity", &design, &FitOptions::default())?;
    Ok(PropensityModel { features, model })
}

fn max_hour(ds: &Dataset) -> Result<u32> {
    ds.rows()
        .iter()
        .map(|r| r.k)
        .max()
        .filter(|&k| k > 0)
        .ok_or_else(|| Error::EmptyRiskSet("dataset has no transitions".into()))
}

/// Check that every hour up to the last observed one has at least one
/// at-risk transition.
fn check_hours(ds: &Dataset, horizon: u32) -> Result<()> {
    let mut seen = vec![false; horizon as usize];
    for t in transitions(ds) {
        seen[t.from.k as usize] = true;
    }
    match seen.iter().position(|s| !s) {
        Some(h) => Err(Error::MissingHour { hour: h as u32 }),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------- coarse --

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct Tally {
    events: f64,
    n: usize,
}

impl Tally {
    fn add(&mut self, event: bool) {
        self.events += f64::from(u8::from(event));
        self.n += 1;
    }
}

/// Saturated tables fitted on coarse data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseTables {
    pub horizon: u32,
    pub params: CoarseParams,
    pub multiparous_prob: f64,
    /// Rows behind each hazard cell, by FHR category and systolic level.
    pub hazard_rows: [[usize; 2]; 4],
    pub surgical_rows: [usize; 2],
    /// Whether cesarean outcomes were observed at all.
    pub surgical_observed: bool,
    pub propensity: PropensityModel,
}

fn distribution<const N: usize>(component: &str, cell: String, counts: &[usize; N]) -> Result<[f64; N]> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyCell {
            component: component.to_string(),
            cell,
        });
    }
    Ok(counts.map(|c| c as f64 / total as f64))
}

fn fhr_cell_name(f: usize, late: bool) -> String {
    format!(
        "{} ({} labor)",
        FhrCategory::from_index(f).name(),
        if late { "late" } else { "early" }
    )
}

fn bp_name(level: usize) -> &'static str {
    if level == 1 { "high" } else { "normal" }
}

pub fn fit_coarse(ds: &Dataset) -> Result<CoarseTables> {
    if ds.mode() != Mode::Coarse {
        return Err(Error::WrongMode { expected: "coarse" });
    }
    let horizon = max_hour(ds)?;
    check_hours(ds, horizon)?;
    let late = CoarseParams::default().late_dilatation;

    let mut initial_fhr = [0usize; 4];
    let mut initial_dil = [0usize; 7];
    let mut initial_sbp = [0usize; 2];
    let mut initial_dbp = [0usize; 2];
    let mut multiparous = [0usize; 2];
    for rows in ds.persons() {
        let c = rows[0].to_state();
        let cell = c.cell().expect("coarse dataset");
        initial_fhr[cell.fhr.index()] += 1;
        if let Some(slot) = initial_dil.get_mut(cell.dilatation as usize) {
            *slot += 1;
        }
        initial_sbp[cell.sbp.index()] += 1;
        initial_dbp[cell.dbp.index()] += 1;
        multiparous[usize::from(c.baseline.multiparous())] += 1;
    }

    let mut hazard = [[Tally::default(); 2]; 4];
    let mut surgical = [Tally::default(); 2];
    let mut fhr_next = [[[0usize; 4]; 4]; 2];
    let mut increments = [[0usize; 3]; 2];
    let mut sbp_next = [[0usize; 2]; 2];
    let mut dbp_next = [[0usize; 2]; 2];
    for t in transitions(ds) {
        let s = t.from.to_state();
        let n = t.to.to_state();
        let (c, m) = (s.cell().expect("coarse"), n.cell().expect("coarse"));
        match t.action {
            Action::Cesarean => surgical[c.sbp.index()].add(n.y),
            Action::Vaginal => {
                hazard[c.fhr.index()][c.sbp.index()].add(n.y);
                fhr_next[usize::from(c.dilatation >= late)][c.fhr.index()][m.fhr.index()] += 1;
                // From 9 cm an increment of one and of two both end at 10.
                if c.dilatation <= 8 {
                    let inc = m.dilatation.checked_sub(c.dilatation).filter(|&i| i <= 2).ok_or_else(|| {
                        Error::DatasetInvariant {
                            person_id: t.from.person_id,
                            hour: t.to.k,
                            message: format!(
                                "dilatation moved from {} to {} cm, outside the 0-2 cm increments of the coarse model",
                                c.dilatation, m.dilatation
                            ),
                        }
                    })?;
                    increments[usize::from(s.baseline.multiparous())][inc as usize] += 1;
                }
                sbp_next[c.sbp.index()][m.sbp.index()] += 1;
                dbp_next[c.dbp.index()][m.dbp.index()] += 1;
            }
        }
    }

    let mut params = CoarseParams {
        initial_fhr: distribution("initial_fhr", "all".into(), &initial_fhr)?,
        initial_dilatation: distribution("initial_dilatation", "all".into(), &initial_dil)?,
        initial_sbp_high: initial_sbp[1] as f64 / initial_sbp.iter().sum::<usize>() as f64,
        initial_dbp_high: initial_dbp[1] as f64 / initial_dbp.iter().sum::<usize>() as f64,
        late_dilatation: late,
        ..CoarseParams::default()
    };
    for f in 0..4 {
        params.fhr_early[f] = distribution("fhr_transition", fhr_cell_name(f, false), &fhr_next[0][f])?;
        params.fhr_late[f] = distribution("fhr_transition", fhr_cell_name(f, true), &fhr_next[1][f])?;
    }
    params.dilatation_nulliparous = distribution("dilatation", "nulliparous".into(), &increments[0])?;
    params.dilatation_multiparous = if multiparous[1] == 0 {
        params.dilatation_nulliparous
    } else {
        distribution("dilatation", "multiparous".into(), &increments[1])?
    };
    for l in 0..2 {
        params.sbp_transition[l] = distribution("sbp_transition", bp_name(l).into(), &sbp_next[l])?;
        params.dbp_transition[l] = distribution("dbp_transition", bp_name(l).into(), &dbp_next[l])?;
    }
    let mut hazard_rows = [[0usize; 2]; 4];
    for f in 0..4 {
        for l in 0..2 {
            let t = hazard[f][l];
            if t.n == 0 {
                return Err(Error::EmptyCell {
                    component: "hazard".into(),
                    cell: format!("{} / sbp {}", FhrCategory::from_index(f).name(), bp_name(l)),
                });
            }
            params.hazard[f][l] = t.events / t.n as f64;
            hazard_rows[f][l] = t.n;
        }
    }
    let surgical_observed = surgical.iter().any(|t| t.n > 0);
    for l in 0..2 {
        let t = surgical[l];
        params.surgical[l] = if t.n > 0 { t.events / t.n as f64 } else { f64::NAN };
    }
    let total_persons = multiparous.iter().sum::<usize>() as f64;
    Ok(CoarseTables {
        horizon,
        params,
        multiparous_prob: multiparous[1] as f64 / total_persons,
        hazard_rows,
        surgical_rows: [surgical[0].n, surgical[1].n],
        surgical_observed,
        propensity: fit_propensity(ds)?,
    })
}

impl Dynamics for CoarseTables {
    fn mode(&self) -> Mode {
        Mode::Coarse
    }

    fn horizon(&self) -> u32 {
        self.horizon
    }

    fn in_labor_hazard(&self, state: &PatientState) -> f64 {
        coarse::in_labor_hazard(&self.params, &state.cell().expect("coarse state"))
    }

    fn surgical_risk(&self, state: &PatientState) -> f64 {
        coarse::surgical_risk(&self.params, &state.cell().expect("coarse state"))
    }

    fn evolve(&self, state: &PatientState, rng: &mut SimRng) -> TimeVaryingCovariates {
        let cell = state.cell().expect("coarse state");
        TimeVaryingCovariates::Coarse(coarse::evolve(
            &self.params,
            &cell,
            state.baseline.multiparous(),
            rng,
        ))
    }
}

impl CoarseKernel for CoarseTables {
    fn hazard(&self, cell: &CoarseCell) -> f64 {
        coarse::in_labor_hazard(&self.params, cell)
    }

    fn surgical(&self, cell: &CoarseCell) -> f64 {
        coarse::surgical_risk(&self.params, cell)
    }

    fn next_cells(&self, cell: &CoarseCell, multiparous: bool) -> Vec<(CoarseCell, f64)> {
        coarse::next_cell_distribution(&self.params, cell, multiparous)
    }

    fn initial_cells(&self) -> Vec<(CoarseCell, f64)> {
        coarse::initial_cell_distribution(&self.params)
    }

    fn multiparous_prob(&self) -> f64 {
        self.multiparous_prob
    }
}

// ------------------------------------------------------------ continuous --

/// `next = intercept + slope · current + Normal(0, sd)`, clamped to `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearAr {
    pub intercept: f64,
    pub slope: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl LinearAr {
    fn fit(component: &str, pairs: &[(f64, f64)]) -> Result<Self> {
        let n = pairs.len();
        if n < 3 {
            return Err(Error::EmptyCell {
                component: component.to_string(),
                cell: "all".into(),
            });
        }
        let nf = n as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
        let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx <= 0.0 {
            return Err(Error::Degenerate {
                component: component.to_string(),
                message: "current values do not vary".into(),
            });
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let rss: f64 = pairs
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        let (min, max) = pairs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
        Ok(LinearAr {
            intercept,
            slope,
            sd: (rss / (nf - 2.0)).sqrt(),
            min,
            max,
            n,
        })
    }

    fn sample(&self, current: f64, step: f64, rng: &mut SimRng) -> f64 {
        let v = self.intercept + self.slope * current + normal(rng, 0.0, self.sd);
        quantize(v.clamp(self.min, self.max), step)
    }

    /// Long-run mean of the autoregression.
    pub fn stationary_mean(&self) -> f64 {
        self.intercept / (1.0 - self.slope)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFit {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl NormalFit {
    fn fit(component: &str, values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::EmptyCell {
                component: component.to_string(),
                cell: "all".into(),
            });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(NormalFit {
            mean,
            sd: var.sqrt(),
            n: values.len(),
        })
    }
}

/// Empirical distribution of hourly dilatation increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Increments {
    /// Distinct increments in cm with their counts, ascending.
    pub values: Vec<(f64, usize)>,
    pub n: usize,
}

impl Increments {
    fn fit(component: &str, raw: &mut [f64]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyCell {
                component: component.to_string(),
                cell: "all".into(),
            });
        }
        raw.sort_by(f64::total_cmp);
        let mut values: Vec<(f64, usize)> = Vec::new();
        for &v in raw.iter() {
            match values.last_mut() {
                Some((last, c)) if *last == v => *c += 1,
                _ => values.push((v, 1)),
            }
        }
        Ok(Increments { values, n: raw.len() })
    }

    fn sample(&self, rng: &mut SimRng) -> f64 {
        use rand::Rng;
        let mut u = rng.random_range(0..self.n);
        for &(v, c) in &self.values {
            if u < c {
                return v;
            }
            u -= c;
        }
        self.values.last().expect("non-empty").0
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|(v, c)| v * *c as f64).sum::<f64>() / self.n as f64
    }
}

/// Rows from which a dilatation increment is used: far enough from full
/// dilatation that the cap at 10 cm cannot truncate it.
const INCREMENT_ROW_MAX_CM: f64 = 7.0;

pub const HAZARD_FEATURES: [&str; 6] = [
    "intercept",
    "fhr_abnormal",
    "brady_persist",
    "hour",
    "sbp_high",
    "history_preterm",
];
pub const SURGICAL_FEATURES: [&str; 2] = ["intercept", "sbp_per_10_above_140"];
pub const EXCURSION_FEATURES: [&str; 3] = ["intercept", "hour", "out_of_band"];

fn hazard_features(s: &PatientState) -> [f64; 6] {
    [
        1.0,
        f64::from(u8::from(s.fhr_abnormal())),
        f64::from(u8::from(s.tv.brady_persist())),
        f64::from(s.k),
        f64::from(u8::from(s.tv.sbp_high())),
        f64::from(u8::from(s.baseline.history_preterm)),
    ]
}

fn vitals(s: &PatientState) -> &ContinuousVitals {
    s.tv.as_continuous().expect("continuous state")
}

fn surgical_features(s: &PatientState) -> [f64; 2] {
    [1.0, (vitals(s).sbp - 140.0) / 10.0]
}

fn excursion_features(s: &PatientState) -> [f64; 3] {
    let out = band(vitals(s).fhr) != FhrBand::Normal;
    [1.0, f64::from(s.k), f64::from(u8::from(out))]
}

fn band_index(b: FhrBand) -> usize {
    match b {
        FhrBand::Normal => 0,
        FhrBand::Brady => 1,
        FhrBand::Tachy => 2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousModels {
    pub horizon: u32,
    pub hazard: LogisticModel,
    /// Absent when no cesarean was observed.
    pub surgical: Option<LogisticModel>,
    /// Whether next hour's FHR leaves the 110-160 band.
    pub excursion: LogisticModel,
    /// Probability that an excursion is bradycardic, from a normal, bradycardic
    /// or tachycardic current reading.
    pub brady_share: [f64; 3],
    pub brady_persist: f64,
    pub brady_value: NormalFit,
    pub tachy_value: NormalFit,
    /// FHR inside the band.
    pub fhr: LinearAr,
    pub sbp: LinearAr,
    pub dbp: LinearAr,
    pub dilatation_nulliparous: Increments,
    pub dilatation_multiparous: Increments,
    pub propensity: PropensityModel,
}

pub fn fit_continuous(ds: &Dataset) -> Result<ContinuousModels> {
    if ds.mode() != Mode::Continuous {
        return Err(Error::WrongMode { expected: "continuous" });
    }
    let horizon = max_hour(ds)?;
    check_hours(ds, horizon)?;
    let mut hazard = Design::new(&HAZARD_FEATURES);
    let mut surgical = Design::new(&SURGICAL_FEATURES);
    let mut excursion = Design::new(&EXCURSION_FEATURES);
    let mut share = [(0usize, 0usize); 3];
    let (mut persist, mut brady_n) = (0usize, 0usize);
    let (mut brady_values, mut tachy_values) = (Vec::new(), Vec::new());
    let (mut fhr_pairs, mut sbp_pairs, mut dbp_pairs) = (Vec::new(), Vec::new(), Vec::new());
    let (mut inc_null, mut inc_multi) = (Vec::new(), Vec::new());
    for t in transitions(ds) {
        let s = t.from.to_state();
        let n = t.to.to_state();
        if t.action == Action::Cesarean {
            surgical.push(&surgical_features(&s), f64::from(u8::from(n.y)));
            continue;
        }
        hazard.push(&hazard_features(&s), f64::from(u8::from(n.y)));
        let (v, w) = (vitals(&s), vitals(&n));
        let next_band = band(w.fhr);
        excursion.push(&excursion_features(&s), f64::from(u8::from(next_band != FhrBand::Normal)));
        match next_band {
            FhrBand::Normal => {
                if band(v.fhr) == FhrBand::Normal {
                    fhr_pairs.push((v.fhr, w.fhr));
                }
            }
            FhrBand::Brady => {
                share[band_index(band(v.fhr))].0 += 1;
                share[band_index(band(v.fhr))].1 += 1;
                brady_n += 1;
                persist += usize::from(w.brady_persist);
                brady_values.push(w.fhr);
            }
            FhrBand::Tachy => {
                share[band_index(band(v.fhr))].1 += 1;
                tachy_values.push(w.fhr);
            }
        }
        sbp_pairs.push((v.sbp, w.sbp));
        dbp_pairs.push((v.dbp, w.dbp));
        if v.dilatation <= INCREMENT_ROW_MAX_CM {
            let inc = quantize(w.dilatation - v.dilatation, DILATATION_STEP);
            if s.baseline.multiparous() {
                inc_multi.push(inc);
            } else {
                inc_null.push(inc);
            }
        }
    }
    let options = FitOptions::default();
    let mut brady_share = [0.0; 3];
    for (i, &(b, total)) in share.iter().enumerate() {
        brady_share[i] = if total > 0 { b as f64 / total as f64 } else { 0.5 };
    }
    let dilatation_nulliparous = Increments::fit("dilatation", &mut inc_null)?;
    let dilatation_multiparous = if inc_multi.is_empty() {
        dilatation_nulliparous.clone()
    } else {
        Increments::fit("dilatation", &mut inc_multi)?
    };
    Ok(ContinuousModels {
        horizon,
        hazard: fit_logistic_or_constant("hazard", &hazard, &options)?,
        surgical: if surgical.is_empty() {
            None
        } else {
            Some(fit_logistic_or_constant("surgical", &surgical, &options)?)
        },
        excursion: fit_logistic("excursion", &excursion, &options)?,
        brady_share,
        brady_persist: if brady_n > 0 { persist as f64 / brady_n as f64 } else { 0.0 },
        brady_value: NormalFit::fit("brady_value", &brady_values)?,
        tachy_value: NormalFit::fit("tachy_value", &tachy_values)?,
        fhr: LinearAr::fit("fhr", &fhr_pairs)?,
        sbp: LinearAr::fit("sbp", &sbp_pairs)?,
        dbp: LinearAr::fit("dbp", &dbp_pairs)?,
        dilatation_nulliparous,
        dilatation_multiparous,
        propensity: fit_propensity(ds)?,
    })
}

impl Dynamics for ContinuousModels {
    fn mode(&self) -> Mode {
        Mode::Continuous
    }

    fn horizon(&self) -> u32 {
        self.horizon
    }

    fn in_labor_hazard(&self, state: &PatientState) -> f64 {
        self.hazard.predict(&hazard_features(state))
    }

    fn surgical_risk(&self, state: &PatientState) -> f64 {
        match &self.surgical {
            Some(m) => m.predict(&surgical_features(state)),
            None => f64::NAN,
        }
    }

    fn evolve(&self, state: &PatientState, rng: &mut SimRng) -> TimeVaryingCovariates {
        let v = vitals(state);
        let (fhr, brady_persist) = if bernoulli(rng, self.excursion.predict(&excursion_features(state))) {
            if bernoulli(rng, self.brady_share[band_index(band(v.fhr))]) {
                let x = normal(rng, self.brady_value.mean, self.brady_value.sd).clamp(50.0, FHR_LOWER - FHR_STEP);
                (quantize(x, FHR_STEP), bernoulli(rng, self.brady_persist))
            } else {
                let x = normal(rng, self.tachy_value.mean, self.tachy_value.sd).clamp(FHR_UPPER + FHR_STEP, 220.0);
                (quantize(x, FHR_STEP), false)
            }
        } else {
            let x = self.fhr.intercept + self.fhr.slope * v.fhr + normal(rng, 0.0, self.fhr.sd);
            (quantize(x.clamp(FHR_LOWER, FHR_UPPER), FHR_STEP), false)
        };
        let increments = if state.baseline.multiparous() {
            &self.dilatation_multiparous
        } else {
            &self.dilatation_nulliparous
        };
        let dilatation =
            quantize(v.dilatation + increments.sample(rng), DILATATION_STEP).min(FULL_DILATATION);
        TimeVaryingCovariates::Continuous(ContinuousVitals {
            fhr,
            brady_persist,
            dilatation,
            sbp: self.sbp.sample(v.sbp, BP_STEP, rng),
            dbp: self.dbp.sample(v.dbp, BP_STEP, rng),
        })
    }
}

// ----------------------------------------------------------------- both --

/// Fitted mechanisms for g-computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scale", rename_all = "snake_case")]
pub enum TransitionModels {
    Coarse(CoarseTables),
    Continuous(ContinuousModels),
}

/// Fit every mechanism on `ds`.
pub fn fit_gcomp(ds: &Dataset) -> Result<TransitionModels> {
    match ds.mode() {
        Mode::Coarse => fit_coarse(ds).map(TransitionModels::Coarse),
        Mode::Continuous => fit_continuous(ds).map(TransitionModels::Continuous),
    }
}

impl TransitionModels {
    pub fn propensity(&self) -> &PropensityModel {
        match self {
            TransitionModels::Coarse(m) => &m.propensity,
            TransitionModels::Continuous(m) => &m.propensity,
        }
    }

    fn surgical_observed(&self) -> bool {
        match self {
            TransitionModels::Coarse(m) => m.surgical_observed,
            TransitionModels::Continuous(m) => m.surgical.is_some(),
        }
    }

    /// Refuse regimes that call for a cesarean when none was observed.
    fn check_support(&self, regime: &Regime) -> Result<()> {
        let needs_surgery = match regime {
            Regime::VaginalOnly => false,
            Regime::StaticSequence { actions } => actions.contains(&Action::Cesarean),
            Regime::FixThenNatural { fix_action, .. } => *fix_action == Action::Cesarean,
            Regime::NaturalCourse => false,
            Regime::ImmediateCesarean | Regime::DynamicFhr { .. } => true,
        };
        if needs_surgery && !self.surgical_observed() {
            return Err(Error::EmptyCell {
                component: "surgical".into(),
                cell: "no cesarean observed".into(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl Dynamics for TransitionModels {
    fn mode(&self) -> Mode {
        match self {
            TransitionModels::Coarse(_) => Mode::Coarse,
            TransitionModels::Continuous(_) => Mode::Continuous,
        }
    }

    fn horizon(&self) -> u32 {
        match self {
            TransitionModels::Coarse(m) => m.horizon,
            TransitionModels::Continuous(m) => m.horizon,
        }
    }

    fn in_labor_hazard(&self, state: &PatientState) -> f64 {
        match self {
            TransitionModels::Coarse(m) => m.in_labor_hazard(state),
            TransitionModels::Continuous(m) => m.in_labor_hazard(state),
        }
    }

    fn surgical_risk(&self, state: &PatientState) -> f64 {
        match self {
            TransitionModels::Coarse(m) => m.surgical_risk(state),
            TransitionModels::Continuous(m) => m.surgical_risk(state),
        }
    }

    fn evolve(&self, state: &PatientState, rng: &mut SimRng) -> TimeVaryingCovariates {
        match self {
            TransitionModels::Coarse(m) => m.evolve(state, rng),
            TransitionModels::Continuous(m) => m.evolve(state, rng),
        }
    }
}

/// Monte Carlo g-computation: forward simulation with the fitted mechanisms,
/// natural-course hours drawn from the fitted propensity.
pub fn gcomp_predict(
    models: &TransitionModels,
    condition: &PatientState,
    spec: &EstimandSpec,
    n_mc: u64,
    seed: u64,
) -> Result<RiskEstimate> {
    models.check_support(&spec.regime)?;
    let propensity: &dyn UsualCare = models.propensity();
    mc_estimate(spec, condition, models, Some(propensity), n_mc, seed, Method::Gcomp)
}

/// g-computation evaluated by backward induction on fitted coarse tables.
/// The standard error is that of the fitted one-step hazard at the
/// condition, a lower bound on the estimator's sampling error.
pub fn gcomp_exact(tables: &CoarseTables, condition: &PatientState, spec: &EstimandSpec) -> Result<RiskEstimate> {
    TransitionModels::Coarse(tables.clone()).check_support(&spec.regime)?;
    let mut est = exact_risk(tables, spec, condition, Some(&tables.propensity), Method::Gcomp)?;
    let cell = condition.cell().ok_or(Error::WrongMode { expected: "coarse" })?;
    let rows = tables.hazard_rows[cell.fhr.index()][cell.sbp.index()];
    est.n = rows as u64;
    est.se = super::features::proportion_se(est.p, rows);
    Ok(est)
}
