use candle_core::{Device, Tensor, Var};
use criterion::{criterion_group, criterion_main, Criterion};

use musclenet::complexity::ConvSpec;
use musclenet::layers::{batch_norm, conv3d, ParamStore};

fn input(b: usize, t: usize, c: usize, s: usize) -> Tensor {
    Tensor::randn(0f32, 1.0, (b, t, c, s, s), &Device::Cpu).unwrap()
}

fn weight(spec: &ConvSpec) -> Tensor {
    Tensor::randn(0f32, 0.1, spec.weight_shape().to_vec(), &Device::Cpu).unwrap()
}

fn convolutions(c: &mut Criterion) {
    let x = input(2, 8, 24, 32);
    let dense = ConvSpec::new("dense", 24, 48, [3, 3, 3]);
    let w = weight(&dense);
    c.bench_function("conv3d dense 24->48 k333 on 2x8x32x32", |b| b.iter(|| conv3d(&x, &w, &dense).unwrap()));

    let dw = ConvSpec::new("dw", 24, 24, [3, 3, 3]).depthwise();
    let w = weight(&dw);
    c.bench_function("conv3d depthwise 24 k333 on 2x8x32x32", |b| b.iter(|| conv3d(&x, &w, &dw).unwrap()));

    let xv = Var::from_tensor(&x).unwrap();
    let wv = Var::from_tensor(&w).unwrap();
    c.bench_function("conv3d depthwise forward+backward", |b| {
        b.iter(|| conv3d(xv.as_tensor(), wv.as_tensor(), &dw).unwrap().sqr().unwrap().sum_all().unwrap().backward().unwrap())
    });
}

fn normalization(c: &mut Criterion) {
    let x = input(2, 8, 48, 16);
    let mut store = ParamStore::new(0);
    store.add_bn("bn", 48).unwrap();
    c.bench_function("batch_norm train 2x8x48x16x16", |b| b.iter(|| batch_norm(&x, &store, "bn", true).unwrap()));
    c.bench_function("batch_norm eval 2x8x48x16x16", |b| b.iter(|| batch_norm(&x, &store, "bn", false).unwrap()));
}

criterion_group!(benches, convolutions, normalization);
criterion_main!(benches);
