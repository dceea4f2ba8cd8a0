use std::hint::black_box;

use barcode_growth::barcode::bottleneck_distance;
use barcode_growth::delzant::{count_fixed_points, CountMode, DelzantPolytope, Hamiltonian};
use barcode_growth::filtered_complex::reduce;
use barcode_growth::orbit_enum::{enumerate_spectrum, EnumConfig, Route};
use barcode_growth::ToricDomain;
use barcode_growth_bench::{barcode, complex};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn spectrum(c: &mut Criterion) {
    let mut g = c.benchmark_group("spectrum");
    g.sample_size(10);
    let e = ToricDomain::ellipsoid(vec![1.0, 2f64.sqrt()]).unwrap();
    g.bench_function("ellipsoid_s200", |b| {
        b.iter(|| enumerate_spectrum(black_box(&e), 200.0, &EnumConfig::default()).unwrap())
    });
    let d = ToricDomain::pnorm(vec![1.0, 1.0], 4.0).unwrap();
    for route in [Route::Support, Route::Gauss] {
        let cfg = EnumConfig { route, ..EnumConfig::default() };
        g.bench_with_input(BenchmarkId::new("pnorm4_s20", format!("{route:?}")), &cfg, |b, cfg| {
            b.iter(|| enumerate_spectrum(black_box(&d), 20.0, cfg).unwrap())
        });
    }
    g.finish();
}

fn persistence(c: &mut Criterion) {
    let mut g = c.benchmark_group("persistence");
    for size in [50usize, 200] {
        let cx = complex(11, size);
        g.bench_with_input(BenchmarkId::new("reduce", size), &cx, |b, cx| b.iter(|| reduce(black_box(cx))));
    }
    let (x, y) = (barcode(1, 200), barcode(2, 200));
    g.bench_function("bottleneck_200", |b| b.iter(|| bottleneck_distance(black_box(&x), black_box(&y))));
    g.finish();
}

fn delzant(c: &mut Criterion) {
    let p = DelzantPolytope::standard_simplex(2).unwrap();
    let h = Hamiltonian::half_norm_squared(2);
    c.bench_function("cp2_fixed_points_k20", |b| {
        b.iter(|| count_fixed_points(black_box(&p), &h, 20, CountMode::Divisor).unwrap())
    });
}

criterion_group!(benches, spectrum, persistence, delzant);
criterion_main!(benches);
