//! Continuous-scale dynamics.

use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{ArParams, ContinuousParams, FhrParams};
use super::state::{ContinuousVitals, PatientState, FHR_LOWER, FHR_UPPER, FULL_DILATATION, SBP_HIGH};
use crate::rng::SimRng;

/// Measurement precision of recorded values.
pub const FHR_STEP: f64 = 0.1;
pub const DILATATION_STEP: f64 = 0.01;
pub const BP_STEP: f64 = 0.1;
pub const AGE_STEP: f64 = 0.1;

pub(crate) fn quantize(x: f64, step: f64) -> f64 {
    let inv = (1.0 / step).round();
    (x * inv).round() / inv
}

pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn normal(rng: &mut SimRng, mean: f64, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + sd * z
}

pub(crate) fn bernoulli(rng: &mut SimRng, p: f64) -> bool {
    rng.random::<f64>() < p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FhrBand {
    Brady,
    Normal,
    Tachy,
}

pub(crate) fn band(fhr: f64) -> FhrBand {
    if fhr < FHR_LOWER {
        FhrBand::Brady
    } else if fhr > FHR_UPPER {
        FhrBand::Tachy
    } else {
        FhrBand::Normal
    }
}

fn excursion_value(p: &FhrParams, brady: bool, rng: &mut SimRng) -> (f64, bool) {
    if brady {
        let v = normal(rng, p.brady_mean, p.brady_sd).clamp(50.0, FHR_LOWER - FHR_STEP);
        let persist = bernoulli(rng, p.brady_persist_prob);
        (quantize(v, FHR_STEP), persist)
    } else {
        let v = normal(rng, p.tachy_mean, p.tachy_sd).clamp(FHR_UPPER + FHR_STEP, 220.0);
        (quantize(v, FHR_STEP), false)
    }
}

fn ar_step(p: &ArParams, current: f64, rng: &mut SimRng) -> f64 {
    let v = p.mean + p.reversion * (current - p.mean) + normal(rng, 0.0, p.sd);
    quantize(v.clamp(p.min, p.max), BP_STEP)
}

pub fn sample_initial(p: &ContinuousParams, rng: &mut SimRng) -> ContinuousVitals {
    let f = &p.fhr;
    let (fhr, brady_persist) = if bernoulli(rng, f.initial_abnormal_prob) {
        let brady = bernoulli(rng, f.brady_share_from_normal);
        excursion_value(f, brady, rng)
    } else {
        let v = normal(rng, f.normal_mean, f.initial_sd).clamp(FHR_LOWER, FHR_UPPER);
        (quantize(v, FHR_STEP), false)
    };
    let d = &p.dilatation;
    let dilatation = quantize(
        normal(rng, d.initial_mean, d.initial_sd).clamp(0.0, d.initial_max),
        DILATATION_STEP,
    );
    let sbp = quantize(
        normal(rng, p.sbp.initial_mean, p.sbp.initial_sd).clamp(p.sbp.min, p.sbp.max),
        BP_STEP,
    );
    let dbp = quantize(
        normal(rng, p.dbp.initial_mean, p.dbp.initial_sd).clamp(p.dbp.min, p.dbp.max),
        BP_STEP,
    );
    ContinuousVitals {
        fhr,
        brady_persist,
        dilatation,
        sbp,
        dbp,
    }
}

/// Probability that the next FHR reading leaves the normal band.
pub fn excursion_probability(p: &FhrParams, fhr: f64, hour: u32) -> f64 {
    let abnormal = if band(fhr) == FhrBand::Normal {
        0.0
    } else {
        p.excursion_if_abnormal
    };
    logistic(p.excursion_intercept + p.excursion_per_hour * f64::from(hour) + abnormal)
}

/// Probability that an excursion is bradycardic.
pub fn brady_share(p: &FhrParams, fhr: f64) -> f64 {
    match band(fhr) {
        FhrBand::Brady => p.brady_share_from_brady,
        FhrBand::Normal => p.brady_share_from_normal,
        FhrBand::Tachy => p.brady_share_from_tachy,
    }
}

/// One hour of labor: FHR, dilatation and blood pressure move forward.
pub fn evolve(
    p: &ContinuousParams,
    state: &PatientState,
    v: &ContinuousVitals,
    rng: &mut SimRng,
) -> ContinuousVitals {
    let f = &p.fhr;
    let (fhr, brady_persist) = if bernoulli(rng, excursion_probability(f, v.fhr, state.k)) {
        let brady = bernoulli(rng, brady_share(f, v.fhr));
        excursion_value(f, brady, rng)
    } else {
        let next = f.normal_mean + f.reversion * (v.fhr - f.normal_mean) + normal(rng, 0.0, f.normal_sd);
        (quantize(next.clamp(FHR_LOWER, FHR_UPPER), FHR_STEP), false)
    };

    let d = &p.dilatation;
    let mut increment = normal(rng, d.increment_mean, d.increment_sd).max(0.0);
    if state.baseline.multiparous() {
        increment *= d.multiparous_factor;
    }
    let dilatation = quantize(v.dilatation + increment, DILATATION_STEP).min(FULL_DILATATION);

    ContinuousVitals {
        fhr,
        brady_persist,
        dilatation,
        sbp: ar_step(&p.sbp, v.sbp, rng),
        dbp: ar_step(&p.dbp, v.dbp, rng),
    }
}

pub fn in_labor_hazard(p: &ContinuousParams, state: &PatientState, v: &ContinuousVitals) -> f64 {
    let h = &p.hazard;
    if !h.enabled {
        return 0.0;
    }
    let mut eta = h.intercept + h.per_hour * f64::from(state.k);
    if state.fhr_abnormal() {
        eta += h.abnormal_fhr;
    }
    if v.brady_persist {
        eta += h.brady_persist;
    }
    if v.sbp >= SBP_HIGH {
        eta += h.sbp_high;
    }
    if state.baseline.history_preterm {
        eta += h.history_preterm;
    }
    logistic(eta)
}

pub fn surgical_risk(p: &ContinuousParams, v: &ContinuousVitals) -> f64 {
    let s = &p.surgical;
    if !s.enabled {
        return 0.0;
    }
    logistic(s.intercept + s.per_10_mmhg * (v.sbp - 140.0) / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_is_idempotent_on_grid() {
        let q = quantize(137.34, FHR_STEP);
        assert_eq!(q, 137.3);
        assert_eq!(quantize(q, FHR_STEP), q);
        assert_eq!(quantize(9.999, DILATATION_STEP), 10.0);
    }

    #[test]
    fn excursions_grow_with_labor_duration() {
        let p = FhrParams::default();
        let early = excursion_probability(&p, 140.0, 0);
        let late = excursion_probability(&p, 140.0, 20);
        assert!(late > early);
        assert!(excursion_probability(&p, 100.0, 0) > early);
    }
}
