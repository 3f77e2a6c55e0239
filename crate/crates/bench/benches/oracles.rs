use criterion::{criterion_group, criterion_main, Criterion};
use labrisk_core::datagen::{sample_conditions, UsualCarePolicy};
use labrisk_core::estimand::{builtin_estimand, natural_course_marginals, oracle_exact, oracle_mc};
use labrisk_core::scm::{Mode, Scm, ScmConfig};

fn oracles(c: &mut Criterion) {
    let policy = UsualCarePolicy::default();
    let coarse = Scm::new(ScmConfig::new(Mode::Coarse)).unwrap();
    let condition = sample_conditions(&coarse, &policy, 1, 0, 1).unwrap()[0];
    let dynamic = builtin_estimand(4, 0).unwrap();
    let natural = builtin_estimand(3, 0).unwrap();

    c.bench_function("exact/dynamic_fhr", |b| {
        b.iter(|| oracle_exact(&dynamic, &condition, &coarse, Some(&policy)).unwrap())
    });
    c.bench_function("exact/natural_course_marginals", |b| {
        b.iter(|| natural_course_marginals(&coarse, &policy).unwrap())
    });

    let mut group = c.benchmark_group("mc");
    group.sample_size(10);
    group.bench_function("coarse/vaginal_then_usual_care/10k", |b| {
        b.iter(|| oracle_mc(&natural, &condition, &coarse, Some(&policy), 10_000, 3).unwrap())
    });
    let continuous = Scm::new(ScmConfig::new(Mode::Continuous)).unwrap();
    let condition = sample_conditions(&continuous, &policy, 1, 0, 1).unwrap()[0];
    group.bench_function("continuous/vaginal_then_usual_care/10k", |b| {
        b.iter(|| oracle_mc(&natural, &condition, &continuous, Some(&policy), 10_000, 3).unwrap())
    });
    group.finish();
}

criterion_group!(benches, oracles);
criterion_main!(benches);
