use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mmi_core::instances::{random_covariance, random_weights};
use mmi_core::rng::{substream, Domain};
use mmi_core::{
    breakpoints, estimate_entropy, exact_linear_mi, maximize_mi, mmi_fc, model_spectrum,
    ChannelModel, ChannelParams, MCConfig, OptimizerConfig, SpectrumModel, WeightMatrix,
};

fn closed_form(c: &mut Criterion) {
    let mut group = c.benchmark_group("closed_form");
    for n in [10, 100, 1000] {
        let s = model_spectrum(&SpectrumModel::ExpDecay { rate: 0.1 }, n).unwrap();
        let params = ChannelParams::new(1.0, 50.0).unwrap();
        group.bench_with_input(BenchmarkId::new("mmi_fc", n), &s, |b, s| {
            b.iter(|| mmi_fc(params, black_box(s), n, n / 2).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("breakpoints", n), &s, |b, s| {
            b.iter(|| breakpoints(black_box(s), 1.0, n).unwrap())
        });
    }
    group.finish();
}

fn oracles(c: &mut Criterion) {
    let mut rng = substream(1, Domain::Instances, 0);
    let s = model_spectrum(&SpectrumModel::Harmonic, 16).unwrap();
    let cov = random_covariance(&mut rng, &s).unwrap();
    let w = WeightMatrix::new(random_weights(&mut rng, 8, 16, 4.0));
    c.bench_function("exact_linear_mi_8x16", |b| {
        b.iter(|| exact_linear_mi(black_box(&w), &cov, 1.0).unwrap())
    });

    let small = random_covariance(
        &mut rng,
        &model_spectrum(&SpectrumModel::Harmonic, 4).unwrap(),
    )
    .unwrap();
    let config = OptimizerConfig {
        restarts: 1,
        ..OptimizerConfig::default()
    };
    c.bench_function("maximize_mi_4x3", |b| {
        b.iter(|| maximize_mi(2.0, &small, 1.0, 3, &config).unwrap())
    });

    let model =
        ChannelModel::linear(WeightMatrix::new(random_weights(&mut rng, 3, 4, 2.0)), 1.0).unwrap();
    let mc = MCConfig::new(500, 500, 0).unwrap();
    c.bench_function("estimate_entropy_500", |b| {
        b.iter(|| estimate_entropy(&model, &small, &mc).unwrap())
    });
}

criterion_group!(benches, closed_form, oracles);
criterion_main!(benches);
