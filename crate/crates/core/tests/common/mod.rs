//! Strategies and property checks shared by the regime tests and the
//! acceptance suite.

#![allow(dead_code)]

use labrisk_core::datagen::UsualCarePolicy;
use labrisk_core::regimes::{decide, is_regime_consistent, Regime, RegimePolicy, UsualCare};
use labrisk_core::rng::substream;
use labrisk_core::scm::*;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::seq::SliceRandom;

/// Usual care that depends on the state in an arbitrary but fixed way.
pub struct TableCare;

impl UsualCare for TableCare {
    fn cesarean_probability(&self, state: &PatientState) -> f64 {
        let fhr = state.tv.as_continuous().map_or(0.0, |v| v.fhr);
        ((fhr * 7.0).rem_euclid(10.0)).floor() / 10.0
    }
}

/// Usual care that always operates.
pub struct AlwaysCesarean;

impl UsualCare for AlwaysCesarean {
    fn cesarean_probability(&self, _: &PatientState) -> f64 {
        1.0
    }
}

/// Hourly covariates of a history: FHR in bpm and the persistence flag.
pub type Readings = Vec<(f64, bool)>;

pub fn readings(max_len: usize) -> impl Strategy<Value = Readings> {
    prop::collection::vec((80.0f64..200.0, any::<bool>()), 1..=max_len)
}

pub fn action() -> impl Strategy<Value = Action> {
    prop_oneof![Just(Action::Vaginal), Just(Action::Cesarean)]
}

/// Any valid regime whose static sequences cover `hours` hours.
pub fn regime(hours: usize) -> impl Strategy<Value = Regime> {
    prop_oneof![
        (0..=hours).prop_map(move |switch| Regime::StaticSequence {
            actions: (0..hours.max(1))
                .map(|i| if i < switch { Action::Vaginal } else { Action::Cesarean })
                .collect(),
        }),
        Just(Regime::ImmediateCesarean),
        Just(Regime::VaginalOnly),
        (action(), 1u32..=80).prop_map(|(fix_action, fix_hours)| Regime::FixThenNatural { fix_action, fix_hours }),
        (90.0f64..130.0, 20.0f64..60.0).prop_map(|(lower, width)| Regime::DynamicFhr {
            lower,
            upper: lower + width,
        }),
        Just(Regime::NaturalCourse),
    ]
}

pub fn state(k: u32, fhr: f64, brady_persist: bool, a: Action) -> PatientState {
    PatientState {
        k,
        baseline: BaselineCovariates {
            maternal_age: 30.0,
            parity: 0,
            history_preterm: false,
        },
        tv: TimeVaryingCovariates::Continuous(ContinuousVitals {
            fhr,
            brady_persist,
            dilatation: 4.0,
            sbp: 120.0,
            dbp: 75.0,
        }),
        a,
        born: false,
        y: false,
    }
}

/// Decisions of `regime` anchored at `anchor` over the hours of `readings`,
/// feeding each decision back into the next state's treatment status.
/// Usual-care draws at hour `j` come from stream `j` of `seed`.
pub fn decisions(
    regime: &Regime,
    anchor: u32,
    readings: &Readings,
    usual_care: &dyn UsualCare,
    seed: u64,
) -> labrisk_core::Result<Vec<Action>> {
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut out = Vec::new();
    let mut previous = Action::Vaginal;
    for (j, &(fhr, persist)) in readings.iter().enumerate() {
        states.push(state(j as u32, fhr, persist, previous));
        let history = History::new(&states, &actions);
        let a = if (j as u32) < anchor {
            Action::Vaginal
        } else {
            let a = decide(regime, anchor, &history, Some(usual_care), &mut substream(seed, j as u64))?;
            out.push(a);
            a
        };
        actions.push(a);
        previous = a;
    }
    Ok(out)
}

pub fn check_monotone(regime: &Regime, anchor: u32, readings: &Readings, seed: u64) -> Result<(), TestCaseError> {
    let d = decisions(regime, anchor, readings, &TableCare, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(
        d.windows(2).all(|w| w[0] <= w[1]),
        "{regime:?} produced {d:?}"
    );
    Ok(())
}

/// Cesarean from the first flagged hour on; shuffling the hours after it
/// changes nothing.
pub fn check_first_trigger(lower: f64, width: f64, readings: &Readings, shuffle_seed: u64) -> Result<(), TestCaseError> {
    let regime = Regime::DynamicFhr { lower, upper: lower + width };
    let flag = |&(fhr, persist): &(f64, bool)| (fhr < lower && persist) || fhr > lower + width;
    let d = decisions(&regime, 0, readings, &TableCare, 0).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let first = readings.iter().position(flag);
    for (j, a) in d.iter().enumerate() {
        let expected = if first.is_some_and(|f| j >= f) { Action::Cesarean } else { Action::Vaginal };
        prop_assert_eq!(*a, expected, "hour {} of {:?}", j, readings);
    }
    if let Some(f) = first {
        let mut permuted = readings.clone();
        permuted[f + 1..].shuffle(&mut substream(shuffle_seed, 0));
        let e = decisions(&regime, 0, &permuted, &TableCare, 0).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(d, e);
    }
    Ok(())
}

/// FixThenNatural(0, K) with K at least the remaining hours, and an all-zero
/// static sequence, both decide like VaginalOnly; an all-one sequence decides
/// like ImmediateCesarean.
pub fn check_equivalences(anchor: u32, readings: &Readings, seed: u64) -> Result<(), TestCaseError> {
    let run = |r: &Regime| decisions(r, anchor, readings, &AlwaysCesarean, seed).map_err(|e| TestCaseError::fail(e.to_string()));
    let remaining = readings.len().saturating_sub(anchor as usize).max(1);
    let vaginal = run(&Regime::VaginalOnly)?;
    prop_assert_eq!(
        &run(&Regime::FixThenNatural { fix_action: Action::Vaginal, fix_hours: remaining as u32 })?,
        &vaginal
    );
    prop_assert_eq!(
        &run(&Regime::StaticSequence { actions: vec![Action::Vaginal; remaining] })?,
        &vaginal
    );
    prop_assert_eq!(
        run(&Regime::StaticSequence { actions: vec![Action::Cesarean; remaining] })?,
        run(&Regime::ImmediateCesarean)?
    );
    Ok(())
}

/// A trajectory simulated under a regime is consistent with it.
pub fn check_round_trip(mode: Mode, regime: &Regime, anchor: u32, seed: u64) -> Result<(), TestCaseError> {
    let scm = Scm::new(ScmConfig::new(mode)).unwrap();
    let regime = match (mode, regime) {
        (Mode::Coarse, Regime::DynamicFhr { .. }) => Regime::dynamic_fhr(),
        _ => regime.clone(),
    };
    let usual = UsualCarePolicy::default();
    let mut rng = substream(seed, 0);
    let baseline = scm.sample_baseline(&mut rng);
    let first = scm.initial_state(baseline, &mut rng);
    let mut prefix = Trajectory { states: vec![first], actions: Vec::new() };
    while prefix.last().z() && prefix.last().k < anchor {
        let a = usual.decide(&prefix.history(), &mut rng).unwrap();
        let next = scm.transition(prefix.last(), a, &mut rng).unwrap();
        prefix.states.push(next);
        prefix.actions.push(a);
    }
    if prefix.last().k != anchor || !prefix.last().z() {
        return Ok(());
    }
    let policy = RegimePolicy { regime: &regime, anchor, usual_care: Some(&usual) };
    match scm.continue_trajectory(prefix, &policy, &mut rng) {
        Ok(t) => {
            prop_assert!(is_regime_consistent(&t, &regime, anchor), "{regime:?} from {anchor}: {:?}", t.actions);
        }
        Err(labrisk_core::Error::SequenceExhausted { .. }) => {}
        Err(e) => return Err(TestCaseError::fail(e.to_string())),
    }
    Ok(())
}
