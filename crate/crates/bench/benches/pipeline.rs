use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qlle_bench::{random_density, s_curve, s_curve_weights};
use qlle_core::hhl::{build_rho_m_qram, hhl_weights, HhlConfig};
use qlle_core::lle::{classical_lle, knn, WeightConfig};
use qlle_core::qpca::{exp_j, qpca_spectrum, ExpConfig};
use qlle_core::qsim::{quantum_knn, subtractor, Shots, StateVector};
use qlle_core::vqlle::{gradient, Ansatz, Entangler, GradientMethod};

fn lle(c: &mut Criterion) {
    let mut g = c.benchmark_group("classical_lle");
    for n in [32, 64, 128] {
        let data = s_curve(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &data, |b, data| {
            b.iter(|| classical_lle(black_box(data), 4, 2, &WeightConfig::default()).unwrap())
        });
    }
    g.finish();
}

fn neighbors(c: &mut Criterion) {
    let data = s_curve(32);
    c.bench_function("knn/classical/32", |b| b.iter(|| knn(black_box(&data), 4).unwrap()));
    c.bench_function("knn/overlap_test/32", |b| {
        b.iter(|| quantum_knn(black_box(&data), 4, Shots::Exact).unwrap())
    });
}

fn simulator(c: &mut Criterion) {
    let mut g = c.benchmark_group("subtractor");
    for q in [3usize, 5, 7] {
        let circ = subtractor(q).unwrap();
        let input = StateVector::basis(2 * q, 5).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(q), &input, |b, s| b.iter(|| circ.apply(s).unwrap()));
    }
    g.finish();
}

fn hhl(c: &mut Criterion) {
    let data = s_curve(32);
    let graph = knn(&data, 4).unwrap();
    let mut g = c.benchmark_group("hhl_weights");
    g.sample_size(10);
    for t in [8usize, 12, 16] {
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| hhl_weights(&data, &graph, &WeightConfig::default(), &HhlConfig::inverse(t)).unwrap())
        });
    }
    g.finish();
}

fn qpca(c: &mut Criterion) {
    let rho = build_rho_m_qram(&s_curve_weights(16, 4)).unwrap();
    let cfg = ExpConfig::default();
    c.bench_function("qpca/exp_j/16", |b| b.iter(|| exp_j(black_box(&rho), &cfg).unwrap()));
    let mut g = c.benchmark_group("qpca/spectrum");
    g.sample_size(10);
    g.bench_function("16", |b| b.iter(|| qpca_spectrum(black_box(&rho), 2, &cfg).unwrap()));
    g.finish();
}

fn variational(c: &mut Criterion) {
    let rho = random_density(16, 3);
    let mut g = c.benchmark_group("gradient");
    for layers in [2usize, 4, 8] {
        let ansatz = Ansatz::new(4, layers, Entangler::Ring).unwrap();
        let theta = vec![0.3; ansatz.parameter_count()];
        let cost = |t: &[f64]| {
            let psi = ansatz.amplitudes(t).unwrap();
            psi.dot(&(&rho * &psi))
        };
        g.bench_with_input(BenchmarkId::new("parameter_shift", layers), &theta, |b, th| {
            b.iter(|| gradient(&cost, th, GradientMethod::ParameterShift))
        });
    }
    g.finish();
}

criterion_group!(benches, lle, neighbors, simulator, hhl, qpca, variational);
criterion_main!(benches);
