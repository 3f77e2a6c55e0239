use criterion::{criterion_group, criterion_main, Criterion};
use labrisk_core::datagen::{generate_dataset, UsualCarePolicy};
use labrisk_core::estimand::builtin_estimand;
use labrisk_core::estimators::{fit_gcomp, fit_ice, fit_naive};
use labrisk_core::scm::{Mode, Scm, ScmConfig};

fn estimators(c: &mut Criterion) {
    let policy = UsualCarePolicy::default();
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    for mode in [Mode::Coarse, Mode::Continuous] {
        let scm = Scm::new(ScmConfig::new(mode)).unwrap();
        let ds = generate_dataset(10_000, &scm, &policy, 5).unwrap();
        let spec = builtin_estimand(2, 0).unwrap();
        let horizon = spec.horizon_hour().min(scm.config().horizon());
        group.bench_function(format!("{}/gcomp/10k", mode.name()), |b| b.iter(|| fit_gcomp(&ds).unwrap()));
        group.bench_function(format!("{}/naive/10k", mode.name()), |b| {
            b.iter(|| fit_naive(&ds, 0, horizon).unwrap())
        });
        group.bench_function(format!("{}/ice/10k", mode.name()), |b| b.iter(|| fit_ice(&ds, &spec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, estimators);
criterion_main!(benches);
