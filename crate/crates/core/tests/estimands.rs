use labrisk_core::datagen::{sample_conditions, UsualCarePolicy};
use labrisk_core::estimand::*;
use labrisk_core::regimes::Regime;
use labrisk_core::scm::*;
use labrisk_core::Error;

fn coarse(cfg: ScmConfig) -> Scm {
    Scm::new(cfg).unwrap()
}

fn condition(cell: CoarseCell, k: u32) -> PatientState {
    PatientState {
        k,
        baseline: BaselineCovariates {
            maternal_age: 30.0,
            parity: 0,
            history_preterm: false,
        },
        tv: TimeVaryingCovariates::Coarse(cell),
        a: Action::Vaginal,
        born: false,
        y: false,
    }
}

fn cell(fhr: FhrCategory, dilatation: u8, sbp: BpLevel) -> CoarseCell {
    CoarseCell {
        fhr,
        dilatation,
        sbp,
        dbp: BpLevel::Normal,
    }
}

#[test]
fn builtin_reductions_and_horizons() {
    assert_eq!(builtin_estimand(2, 0).unwrap(), builtin_estimand(5, 0).unwrap());
    assert_eq!(builtin_estimand(3, 0).unwrap(), builtin_estimand(6, 0).unwrap());
    assert_eq!(builtin_estimand(7, 5).unwrap().horizon_hour(), 6);
    for id in 1..=4 {
        assert!(matches!(builtin_estimand(id, 1), Err(Error::InvalidEstimand(_))));
    }
    assert!(builtin_estimand(8, 0).is_err());
    let spec = builtin_estimand(4, 0).unwrap();
    let json = serde_json::to_value(&spec).unwrap();
    for key in ["population", "moment_of_use", "intervention_option", "outcome", "horizon", "predictors"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(serde_json::from_value::<EstimandSpec>(json).unwrap(), spec);
}

#[test]
fn re_anchored_start_of_labor_estimands_are_labeled() {
    let (spec, label) = builtin_estimand_at(1, 4).unwrap();
    assert_eq!(spec.moment_of_use, 4);
    assert_eq!(spec.regime, Regime::ImmediateCesarean);
    assert!(label.contains("hour 4"), "{label}");
    let (spec, label) = builtin_estimand_at(5, 4).unwrap();
    assert_eq!(spec, builtin_estimand(5, 4).unwrap());
    assert_eq!(label, builtin_label(5));
}

#[test]
fn zero_hazards_give_zero_risk() {
    let policy = UsualCarePolicy::default();
    let exact = coarse(ScmConfig::new(Mode::Coarse).with_zero_hazards());
    let continuous = coarse(ScmConfig::new(Mode::Continuous).with_zero_hazards());
    let c0 = sample_conditions(&exact, &policy, 3, 0, 1).unwrap();
    let d0 = sample_conditions(&continuous, &policy, 3, 0, 1).unwrap();
    for id in 1..=7 {
        let spec = builtin_estimand(id, 0).unwrap();
        for c in &c0 {
            assert_eq!(oracle_exact(&spec, c, &exact, Some(&policy)).unwrap().p, 0.0);
            assert_eq!(oracle_mc(&spec, c, &exact, Some(&policy), 2_000, 1).unwrap().p, 0.0);
        }
        for c in &d0 {
            assert_eq!(oracle_mc(&spec, c, &continuous, Some(&policy), 2_000, 1).unwrap().p, 0.0);
        }
    }
}

#[test]
fn one_hour_horizon_reads_the_hazard_table() {
    let scm = coarse(ScmConfig::new(Mode::Coarse));
    let policy = UsualCarePolicy::default();
    for c in CoarseCell::all().filter(|c| c.dilatation >= 3 && c.dilatation <= 6) {
        let spec = builtin_estimand(7, 2).unwrap();
        let p = oracle_exact(&spec, &condition(c, 2), &scm, Some(&policy)).unwrap().p;
        let table = scm.config().coarse.hazard[c.fhr.index()][c.sbp.index()];
        assert!((p - table).abs() < 1e-15, "{c:?}: {p} vs {table}");
    }
}

#[test]
fn immediate_cesarean_is_the_surgical_risk_without_labor_hazard() {
    let mut cfg = ScmConfig::new(Mode::Coarse);
    cfg.coarse.hazard = [[0.0; 2]; 4];
    let scm = coarse(cfg);
    let spec = builtin_estimand(1, 0).unwrap();
    for sbp in BpLevel::ALL {
        let c = condition(cell(FhrCategory::Normal, 3, sbp), 0);
        let p = oracle_exact(&spec, &c, &scm, None).unwrap().p;
        assert_eq!(p, scm.config().coarse.surgical[sbp.index()]);
    }
}

#[test]
fn free_surgery_makes_the_dynamic_rule_no_riskier() {
    let mut cfg = ScmConfig::new(Mode::Coarse);
    cfg.coarse.surgical = [0.0; 2];
    let scm = coarse(cfg);
    let specs = [builtin_estimand(2, 0).unwrap(), builtin_estimand(4, 0).unwrap()];
    for (c, _) in scm.initial_cells() {
        for parity in [0, 2] {
            let mut s = condition(c, 0);
            s.baseline.parity = parity;
            let p = risk_profile(&specs, &s, &scm, None, OracleMethod::Exact).unwrap();
            assert!(p[1].p <= p[0].p + 1e-15, "{c:?}: {} > {}", p[1].p, p[0].p);
        }
    }
}

#[test]
fn risk_is_non_decreasing_in_the_horizon_for_every_state() {
    let scm = coarse(ScmConfig::new(Mode::Coarse));
    let policy = UsualCarePolicy::default();
    let k_max = scm.config().horizon();
    let regimes = [
        Regime::ImmediateCesarean,
        Regime::VaginalOnly,
        Regime::FixThenNatural { fix_action: Action::Vaginal, fix_hours: 1 },
        Regime::dynamic_fhr(),
        Regime::NaturalCourse,
    ];
    for regime in regimes {
        for parity in [0, 1] {
            let baseline = BaselineCovariates { maternal_age: 30.0, parity, history_preterm: false };
            let tables: Vec<ValueTable> = (1..=k_max)
                .map(|h| {
                    let spec = EstimandSpec::new(0, regime.clone(), Horizon::Absolute { hour: h });
                    ValueTable::compute(&scm, &spec, baseline, Some(&policy)).unwrap()
                })
                .collect();
            for w in tables.windows(2) {
                for hour in 0..w[0].horizon() {
                    for c in CoarseCell::all() {
                        let (a, b) = (w[0].value(hour, &c).unwrap(), w[1].value(hour, &c).unwrap());
                        assert!(b >= a - 1e-15, "{regime:?} {c:?} at {hour}: {a} -> {b}");
                    }
                }
            }
        }
    }
}

#[test]
fn monte_carlo_agrees_with_exact_for_the_dynamic_rule() {
    let scm = coarse(ScmConfig::new(Mode::Coarse));
    let policy = UsualCarePolicy::default();
    let spec = builtin_estimand(4, 0).unwrap();
    for (i, c) in sample_conditions(&scm, &policy, 3, 0, 2).unwrap().iter().enumerate() {
        let e = oracle_exact(&spec, c, &scm, None).unwrap();
        let m = oracle_mc(&spec, c, &scm, None, 100_000, 10 + i as u64).unwrap();
        assert!((m.p - e.p).abs() <= 3.0 * m.se, "{} vs {} (se {})", m.p, e.p, m.se);
        assert_eq!(e.se, 0.0);
        assert!(m.se > 0.0);
    }
}

#[test]
fn estimand_five_at_hour_zero_equals_estimand_two_with_the_same_seed() {
    let scm = coarse(ScmConfig::new(Mode::Continuous));
    let policy = UsualCarePolicy::default();
    let c = sample_conditions(&scm, &policy, 1, 0, 3).unwrap()[0];
    let a = oracle_mc(&builtin_estimand(2, 0).unwrap(), &c, &scm, None, 5_000, 9).unwrap();
    let b = oracle_mc(&builtin_estimand(5, 0).unwrap(), &c, &scm, None, 5_000, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn risk_profile_keeps_order_and_repeats() {
    let scm = coarse(ScmConfig::new(Mode::Coarse));
    let policy = UsualCarePolicy::default();
    let c = sample_conditions(&scm, &policy, 1, 0, 4).unwrap()[0];
    let mc = OracleMethod::MonteCarlo { n_mc: 5_000, seed: 3 };
    assert!(risk_profile(&[], &c, &scm, Some(&policy), mc).unwrap().is_empty());
    let s2 = builtin_estimand(2, 0).unwrap();
    let s3 = builtin_estimand(3, 0).unwrap();
    let out = risk_profile(&[s2.clone(), s3, s2], &c, &scm, Some(&policy), mc).unwrap();
    assert_eq!(out.len(), 3);
    assert_eq!(out[0], out[2]);
}

#[test]
fn invalid_oracle_inputs_are_rejected() {
    let scm = coarse(ScmConfig::new(Mode::Coarse));
    let policy = UsualCarePolicy::default();
    let spec = builtin_estimand(2, 0).unwrap();
    let mut born = condition(cell(FhrCategory::Normal, 3, BpLevel::Normal), 0);
    born.born = true;
    assert!(matches!(oracle_exact(&spec, &born, &scm, None), Err(Error::NotAtRisk { .. })));
    let later = condition(cell(FhrCategory::Normal, 3, BpLevel::Normal), 2);
    assert!(oracle_mc(&spec, &later, &scm, None, 10, 1).is_err());
    let natural = builtin_estimand(3, 0).unwrap();
    let start = condition(cell(FhrCategory::Normal, 3, BpLevel::Normal), 0);
    assert!(matches!(oracle_exact(&natural, &start, &scm, None), Err(Error::MissingUsualCare)));
    // Ten centimetres at hour 0 cannot be at risk; nine at hour 0 is never reached.
    let unreachable = condition(cell(FhrCategory::Normal, 9, BpLevel::Normal), 0);
    assert!(matches!(oracle_exact(&spec, &unreachable, &scm, Some(&policy)), Err(Error::Unreachable(_))));
    let continuous = coarse(ScmConfig::new(Mode::Continuous));
    let c = sample_conditions(&continuous, &policy, 1, 0, 1).unwrap()[0];
    assert!(matches!(oracle_exact(&spec, &c, &continuous, None), Err(Error::WrongMode { .. })));
}

#[test]
fn risk_estimates_satisfy_their_invariants() {
    let e = RiskEstimate::exact(0.3, Method::OracleExact);
    assert_eq!(e.se, 0.0);
    let m = RiskEstimate::from_count(30, 100, Method::OracleMc);
    assert!((m.p - 0.3).abs() < 1e-15 && (m.se - (0.21f64 / 100.0).sqrt()).abs() < 1e-15);
}
