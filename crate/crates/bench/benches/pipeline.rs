use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use sigkit_core::dataset::{self, Distortion, SyntheticSpec};
use sigkit_core::eval::synthetic_samples;
use sigkit_core::features::{dct2, extract_features};
use sigkit_core::image::{self, GrayImage};
use sigkit_core::rbfn::RbfnModel;
use sigkit_core::rst::{self, ncc};
use sigkit_core::FeatureExtractor;

fn pair() -> (GrayImage, GrayImage) {
    let reference = dataset::render_clean(&SyntheticSpec::new(1));
    let d = Distortion {
        rotation_deg: 23.0,
        scale: 0.8,
        ..Distortion::identity()
    };
    let probe = dataset::distort(&reference, &d, (300, 220)).unwrap();
    (reference, probe)
}

fn transforms(c: &mut Criterion) {
    let (reference, probe) = pair();
    let frame = image::resize(&reference, 64, 64);
    let other = image::resize(&probe, 64, 64);
    c.bench_function("dct2 64x64", |b| b.iter(|| dct2(black_box(&frame))));
    c.bench_function("ncc 64x64", |b| {
        b.iter(|| ncc(black_box(&frame), black_box(&other)))
    });
    c.bench_function("rotate 256x128 by 17deg", |b| {
        b.iter(|| image::rotate(black_box(&reference), 17.0))
    });
    c.bench_function("extract_features", |b| {
        b.iter(|| extract_features(black_box(&reference)))
    });
}

fn alignment(c: &mut Criterion) {
    let (reference, probe) = pair();
    let mut group = c.benchmark_group("alignment");
    group.sample_size(20);
    group.bench_function("estimate_rotation", |b| {
        b.iter(|| rst::estimate_rotation(black_box(&reference), black_box(&probe)))
    });
    group.bench_function("correct_rst", |b| {
        b.iter(|| rst::correct_rst(black_box(&reference), black_box(&probe)))
    });
    group.finish();
}

fn network(c: &mut Criterion) {
    let samples = synthetic_samples(50, 1, 0, FeatureExtractor::default()).unwrap();
    c.bench_function("fit_exact 50", |b| {
        b.iter(|| RbfnModel::fit_exact(black_box(&samples), 0.5))
    });
    let model = RbfnModel::fit_exact(&samples, 0.5).unwrap();
    c.bench_function("classify against 50 units", |b| {
        b.iter(|| model.classify(black_box(&samples[7].features), 0.5))
    });
}

criterion_group!(benches, transforms, alignment, network);
criterion_main!(benches);
