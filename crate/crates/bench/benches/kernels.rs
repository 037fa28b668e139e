use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use ndarray::Array2;
use wavclip_core::data::{decode_embeddings, encode_embeddings, make_synthetic};
use wavclip_core::wavelet::{dwt1d, idwt1d};
use wavclip_core::{auc, make_filter_bank, roc_curve, Family, Head, WaveletHeadParams};

fn wavelet(c: &mut Criterion) {
    let mut g = c.benchmark_group("dwt1d");
    let x: Vec<f64> = (0..768).map(|i| ((i * 37 % 101) as f64).sin()).collect();
    for family in [Family::Haar, Family::Db2] {
        let fb = make_filter_bank(family);
        g.bench_with_input(BenchmarkId::new("forward", family), &x, |b, x| b.iter(|| dwt1d(&fb, black_box(x))));
        let sb = dwt1d(&fb, &x).unwrap();
        g.bench_with_input(BenchmarkId::new("inverse", family), &sb, |b, sb| b.iter(|| idwt1d(&fb, black_box(sb))));
    }
    g.finish();
}

fn head(c: &mut Criterion) {
    let mut g = c.benchmark_group("head_forward");
    let head = WaveletHeadParams::init(768, 384, 256, Family::Haar, 0).unwrap();
    for rows in [1, 64, 512] {
        let z = Array2::from_shape_fn((rows, 768), |(i, j)| ((i * 768 + j) as f64 * 0.001).cos());
        g.throughput(Throughput::Elements(rows as u64));
        g.bench_with_input(BenchmarkId::from_parameter(rows), &z, |b, z| b.iter(|| head.forward(black_box(z.view()))));
    }
    g.finish();

    let z = Array2::from_shape_fn((64, 768), |(i, j)| ((i * 31 + j) as f64 * 0.01).sin());
    let labels: Vec<u8> = (0..64).map(|i| (i % 2) as u8).collect();
    c.bench_function("head_loss_and_grads/64", |b| {
        b.iter(|| head.loss_and_grads(black_box(z.view()), &labels, None))
    });
}

fn metrics(c: &mut Criterion) {
    let mut g = c.benchmark_group("metrics");
    for n in [1_000usize, 100_000] {
        let scores: Vec<f64> = (0..n).map(|i| ((i * 7919 % 1000) as f64) / 1000.0).collect();
        let labels: Vec<u8> = (0..n).map(|i| ((i * 31 + i / 3) % 2) as u8).collect();
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("auc", n), &n, |b, _| b.iter(|| auc(black_box(&scores), &labels)));
        g.bench_with_input(BenchmarkId::new("roc_curve", n), &n, |b, _| {
            b.iter(|| roc_curve(black_box(&scores), &labels))
        });
    }
    g.finish();
}

fn format(c: &mut Criterion) {
    let bytes = encode_embeddings(&make_synthetic(500, 768, 4.0, 0).unwrap());
    let mut g = c.benchmark_group("wemb");
    g.throughput(Throughput::Bytes(bytes.len() as u64));
    g.bench_function("decode_1000x768", |b| b.iter(|| decode_embeddings(black_box(&bytes))));
    g.finish();
}

criterion_group!(benches, wavelet, head, metrics, format);
criterion_main!(benches);
