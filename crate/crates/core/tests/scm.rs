use std::collections::{BTreeMap, HashMap};

use labrisk_core::datagen::{generate_trajectories, UsualCarePolicy};
use labrisk_core::estimand::natural_course_marginals;
use labrisk_core::rng::substream;
use labrisk_core::scm::coarse::next_cell_distribution;
use labrisk_core::scm::config::BaselineParams;
use labrisk_core::scm::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn coarse() -> Scm {
    Scm::new(ScmConfig::new(Mode::Coarse)).unwrap()
}

fn vaginal() -> FnPolicy<fn(&History<'_>) -> Action> {
    FnPolicy(|_| Action::Vaginal)
}

/// Mean of `Normal(mean, sd)` clamped to `[lo, hi]`.
fn clamped_normal_mean(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let n = Normal::new(mean, sd).unwrap();
    let std = Normal::new(0.0, 1.0).unwrap();
    let (a, b) = ((lo - mean) / sd, (hi - mean) / sd);
    let phi = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let inside = mean * (n.cdf(hi) - n.cdf(lo)) + sd * (phi(a) - phi(b));
    lo * std.cdf(a) + inside + hi * (1.0 - std.cdf(b))
}

#[test]
fn baseline_age_mean_matches_configuration() {
    let scm = coarse();
    let mut rng = substream(1, 0);
    let n = 100_000;
    let mean = (0..n).map(|_| scm.sample_baseline(&mut rng).maternal_age).sum::<f64>() / n as f64;
    let b = &scm.config().baseline;
    let expected = clamped_normal_mean(b.age_mean, b.age_sd, BaselineParams::AGE_MIN, BaselineParams::AGE_MAX);
    assert!((mean - expected).abs() <= 0.1, "mean age {mean}, expected {expected}");
}

#[test]
fn initial_dilatation_mean_is_three_in_both_modes() {
    for mode in [Mode::Coarse, Mode::Continuous] {
        let scm = Scm::new(ScmConfig::new(mode)).unwrap();
        let mut rng = substream(2, 0);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| {
                let b = scm.sample_baseline(&mut rng);
                scm.initial_state(b, &mut rng).tv.dilatation()
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 3.0).abs() <= 0.05, "{mode:?}: {mean}");
    }
}

#[test]
fn initial_state_is_at_risk_at_hour_zero() {
    let scm = coarse();
    let mut rng = substream(3, 0);
    let b = scm.sample_baseline(&mut rng);
    let s = scm.initial_state(b, &mut rng);
    assert_eq!((s.k, s.a, s.born, s.y), (0, Action::Vaginal, false, false));
    assert!(s.z());
}

#[test]
fn coarse_transition_frequencies_match_the_kernel() {
    let scm = coarse();
    let cell = CoarseCell {
        fhr: FhrCategory::Tachycardia,
        dilatation: 6,
        sbp: BpLevel::High,
        dbp: BpLevel::Normal,
    };
    let state = PatientState {
        k: 2,
        baseline: BaselineCovariates {
            maternal_age: 30.0,
            parity: 1,
            history_preterm: false,
        },
        tv: TimeVaryingCovariates::Coarse(cell),
        a: Action::Vaginal,
        born: false,
        y: false,
    };
    // Outcome and next cell are drawn independently, so tabulate the cell
    // among all draws and the outcome separately.
    let n = 1_000_000u64;
    let mut counts: HashMap<CoarseCell, u64> = HashMap::new();
    let mut outcomes = 0u64;
    let mut rng = substream(4, 0);
    for _ in 0..n {
        let next = scm.transition(&state, Action::Vaginal, &mut rng).unwrap();
        outcomes += u64::from(next.y);
        *counts.entry(next.cell().unwrap()).or_default() += 1;
    }
    let kernel = next_cell_distribution(&scm.config().coarse, &cell, true);
    let total: f64 = kernel.iter().map(|(_, p)| p).sum();
    assert!((total - 1.0).abs() < 1e-12);
    for (next, p) in &kernel {
        let observed = *counts.get(next).unwrap_or(&0) as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((observed - p).abs() <= 3.0 * se.max(1e-9), "{next:?}: {observed} vs {p}");
    }
    assert!(counts.keys().all(|c| kernel.iter().any(|(k, _)| k == c)));
    let h = scm.in_labor_hazard(&state);
    let se = (h * (1.0 - h) / n as f64).sqrt();
    assert!((outcomes as f64 / n as f64 - h).abs() <= 3.0 * se);
}

#[test]
fn one_extra_lag_carries_no_information() {
    // Among continued-labor transitions out of one coarse state, the next FHR
    // category is independent of the previous hour's FHR category.
    let scm = coarse();
    let trajectories = generate_trajectories(300_000, &scm, &UsualCarePolicy::default(), 5).unwrap();
    let mut strata: BTreeMap<(CoarseCell, bool), [[u64; 4]; 4]> = BTreeMap::new();
    let mut transitions = 0usize;
    for t in &trajectories {
        for j in 1..t.actions.len() {
            if t.actions[j] != Action::Vaginal {
                continue;
            }
            transitions += 1;
            let prev = t.states[j - 1].cell().unwrap().fhr.index();
            let now = t.states[j].cell().unwrap();
            let next = t.states[j + 1].cell().unwrap().fhr.index();
            strata.entry((now, t.states[j].baseline.multiparous())).or_default()[prev][next] += 1;
        }
    }
    assert!(transitions >= 1_000_000, "only {transitions} transitions");
    let (mut statistic, mut df) = (0.0, 0.0);
    for table in strata.values() {
        let rows: Vec<usize> = (0..4).filter(|&r| table[r].iter().sum::<u64>() > 0).collect();
        let cols: Vec<usize> = (0..4).filter(|&c| rows.iter().map(|&r| table[r][c]).sum::<u64>() > 0).collect();
        let total: u64 = rows.iter().map(|&r| table[r].iter().sum::<u64>()).sum();
        if rows.len() < 2 || cols.len() < 2 || total < 200 {
            continue;
        }
        let row_sum = |r: usize| table[r].iter().sum::<u64>() as f64;
        let col_sum = |c: usize| rows.iter().map(|&r| table[r][c]).sum::<u64>() as f64;
        // Keep strata whose expected counts support the asymptotic test.
        let min_expected = rows
            .iter()
            .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
            .map(|(r, c)| row_sum(r) * col_sum(c) / total as f64)
            .fold(f64::INFINITY, f64::min);
        if min_expected < 5.0 {
            continue;
        }
        for &r in &rows {
            for &c in &cols {
                let e = row_sum(r) * col_sum(c) / total as f64;
                statistic += (table[r][c] as f64 - e).powi(2) / e;
            }
        }
        df += ((rows.len() - 1) * (cols.len() - 1)) as f64;
    }
    assert!(df > 0.0);
    let p_value = 1.0 - ChiSquared::new(df).unwrap().cdf(statistic);
    assert!(p_value > 0.01, "chi-square {statistic:.1} on {df} df, p = {p_value:.4}");
}

#[test]
fn zero_hazards_give_births_without_outcomes() {
    for mode in [Mode::Coarse, Mode::Continuous] {
        let scm = Scm::new(ScmConfig::new(mode).with_zero_hazards()).unwrap();
        let trajectories = generate_trajectories(2_000, &scm, &UsualCarePolicy::default(), 6).unwrap();
        for t in &trajectories {
            assert!(t.states.iter().all(|s| !s.y));
            let last = t.last();
            assert!(last.born || last.k == scm.config().horizon(), "{last:?}");
        }
        assert!(trajectories.iter().filter(|t| t.last().born).count() > 1_900);
    }
}

#[test]
fn deterministic_progress_reaches_birth_at_hour_seven() {
    let mut cfg = ScmConfig::new(Mode::Coarse).with_zero_hazards();
    cfg.coarse.initial_dilatation = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    cfg.coarse.dilatation_nulliparous = [0.0, 1.0, 0.0];
    cfg.coarse.dilatation_multiparous = [0.0, 1.0, 0.0];
    let scm = Scm::new(cfg).unwrap();
    let mut rng = substream(7, 0);
    for _ in 0..50 {
        let b = scm.sample_baseline(&mut rng);
        let t = scm.simulate_trajectory(b, &vaginal(), &mut rng).unwrap();
        let dil: Vec<u8> = t.states.iter().map(|s| s.cell().unwrap().dilatation).collect();
        assert_eq!(dil, vec![3, 4, 5, 6, 7, 8, 9, 10]);
        let last = t.last();
        assert_eq!((last.k, last.born, last.y), (7, true, false));
        assert!(t.states[..7].iter().all(PatientState::z));
    }
}

#[test]
fn cesarean_ends_labor_and_vaginal_after_cesarean_is_rejected() {
    let scm = coarse();
    let mut rng = substream(8, 0);
    let b = scm.sample_baseline(&mut rng);
    let s = scm.initial_state(b, &mut rng);
    let next = scm.transition(&s, Action::Cesarean, &mut rng).unwrap();
    assert!(next.born && next.a == Action::Cesarean && next.k == 1 && !next.z());
    assert_eq!(next.tv, s.tv);
    let mut pending = s;
    pending.a = Action::Cesarean;
    assert!(matches!(
        scm.transition(&pending, Action::Vaginal, &mut rng),
        Err(labrisk_core::Error::Irreversible { hour: 0 })
    ));
    assert!(matches!(
        scm.transition(&next, Action::Cesarean, &mut rng),
        Err(labrisk_core::Error::NotAtRisk { hour: 1 })
    ));
}

#[test]
fn cesarean_fraction_matches_the_exact_marginal() {
    let scm = coarse();
    let policy = UsualCarePolicy::default();
    let marginals = natural_course_marginals(&scm, &policy).unwrap();
    let n = 100_000;
    let trajectories = generate_trajectories(n, &scm, &policy, 9).unwrap();
    let fraction = trajectories.iter().filter(|t| t.cesarean()).count() as f64 / n as f64;
    let p = marginals.cesarean;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((fraction - p).abs() <= 3.0 * se, "{fraction} vs {p}");
    let adverse = trajectories.iter().filter(|t| t.last().y).count() as f64 / n as f64;
    let q = marginals.adverse;
    assert!((adverse - q).abs() <= 3.0 * (q * (1.0 - q) / n as f64).sqrt(), "{adverse} vs {q}");
}

#[test]
fn enumerated_states_are_sorted_unique_and_cover_simulated_states() {
    let scm = coarse();
    let states = scm.enumerate_states().unwrap();
    assert!(states.windows(2).all(|w| w[0] < w[1]));
    assert!(states.len() <= 3000);
    let trajectories = generate_trajectories(20_000, &scm, &UsualCarePolicy::default(), 10).unwrap();
    for t in &trajectories {
        for s in &t.states {
            let key = CoarseStateKey::of(s).unwrap();
            assert!(states.binary_search(&key).is_ok(), "{key:?} missing");
        }
    }
    assert!(matches!(
        Scm::new(ScmConfig::new(Mode::Continuous)).unwrap().enumerate_states(),
        Err(labrisk_core::Error::WrongMode { .. })
    ));
}

#[test]
fn configuration_round_trips_through_json() {
    let cfg = ScmConfig::new(Mode::Coarse);
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(ScmConfig::from_json(&text).unwrap(), cfg);
    assert!(ScmConfig::from_json(r#"{"mode": "coarse", "bogus": 1}"#).is_err());
    let mut bad = ScmConfig::new(Mode::Coarse);
    bad.coarse.initial_fhr = [0.5, 0.5, 0.5, 0.0];
    assert!(Scm::new(bad).is_err());
}
