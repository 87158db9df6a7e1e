use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fairadv_core::datagen::{generate_synthetic, GeneratorSpec, SkewSpec, Split};
use fairadv_core::fairmodel::{adversarial_train_step, difference_loss, AdversarialConfig, AdversarialModel, Method};
use fairadv_core::inlp::{train_linear_probe, ProbeConfig};
use fairadv_core::numkit::matmul;
use fairadv_core::RealMatrix;

fn filled(rows: usize, cols: usize, salt: usize) -> RealMatrix {
    RealMatrix::from_fn(rows, cols, |r, c| (((r * 31 + c * 17 + salt) % 97) as f64 / 48.5) - 1.0)
}

fn kernels(c: &mut Criterion) {
    let a = filled(256, 48, 1);
    let b = filled(48, 64, 2);
    c.bench_function("matmul 256x48x64", |bench| bench.iter(|| matmul(black_box(&a), black_box(&b)).unwrap()));

    let hs: Vec<RealMatrix> = (0..3).map(|i| filled(256, 64, i)).collect();
    c.bench_function("difference_loss k=3 256x64", |bench| bench.iter(|| difference_loss(black_box(&hs)).unwrap()));

    let data = generate_synthetic(&GeneratorSpec::default(), 2048, 0, 0, &SkewSpec::skewed()).unwrap();
    let train = data.subset(Split::Train);
    let batch = train.select(&(0..64).collect::<Vec<_>>());
    for method in [Method::AdvSingle, Method::DiffEnsemble] {
        let cfg = AdversarialConfig {
            method,
            k: if method == Method::AdvSingle { 1 } else { 3 },
            lambda_diff: if method == Method::DiffEnsemble { 1e-9 } else { 0.0 },
            hidden_main: 64,
            hidden_disc: 64,
            ..AdversarialConfig::default()
        };
        let mut model = AdversarialModel::new(train.x.cols(), 2, 2, &cfg);
        c.bench_function(&format!("train step {method} batch 64"), |bench| {
            bench.iter(|| adversarial_train_step(&mut model, &batch.x, &batch.y, &batch.g, &cfg).unwrap())
        });
    }

    let probe = ProbeConfig { epochs: 2, ..ProbeConfig::default() };
    c.bench_function("linear probe 2048x48, 2 epochs", |bench| {
        bench.iter(|| train_linear_probe(&train.x, &train.g, &probe).unwrap())
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
