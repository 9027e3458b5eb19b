//! Single-threaded against all-threads runs of the data-parallel kernels.
//! Build with `--no-default-features` to measure the sequential fallback.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use embodied_core::array_model::{ArrayConfig, Position, SceneConfig};
use embodied_core::bounds::{info_bound_support, SupportSolver};
use embodied_core::channel_sim::estimate_errors;
use embodied_core::codebook::{verify_codebook, Codebook};
use embodied_core::par::{current_threads, with_threads};
use embodied_core::reliability_field::{RaySearch, ReliabilityField};

fn field(snr: f64, snapshots: u32) -> ReliabilityField {
    let array = ArrayConfig::from_carrier(64, 16, 7e9).unwrap();
    let scene = SceneConfig {
        distance: 100.0,
        extent_y: 2.0,
        extent_z: 2.0,
        snr,
        noise_var: 1.0,
        snapshots,
        pulse_duration: 1.0,
        far_field_ratio: 0.05,
    };
    ReliabilityField::new(array, scene).unwrap()
}

fn thread_counts() -> Vec<usize> {
    let mut t = vec![1, current_threads()];
    t.dedup();
    t
}

fn kernels(c: &mut Criterion) {
    let f = field(100.0, 5);
    let grid: Vec<Position> = (0..1600)
        .map(|k| Position::new(-1.0 + 0.05 * (k % 40) as f64, -1.0 + 0.05 * (k / 40) as f64))
        .collect();
    let big = Codebook::new(grid, &f).unwrap();
    let pair = Codebook::new(vec![Position::new(-0.1, 0.0), Position::new(0.1, 0.0)], &f).unwrap();
    let solver = SupportSolver {
        grid_n: 21,
        ..SupportSolver::default()
    };

    let mut g = c.benchmark_group("parallel");
    g.sample_size(10);
    for threads in thread_counts() {
        g.bench_with_input(
            BenchmarkId::new("min_pairwise_b_1600", threads),
            &threads,
            |b, &t| {
                b.iter(|| with_threads(t, || verify_codebook(black_box(&big), 1e-3, &f).unwrap()))
            },
        );
        g.bench_with_input(
            BenchmarkId::new("necessary_separation_720", threads),
            &threads,
            |b, &t| {
                b.iter(|| {
                    with_threads(t, || {
                        f.necessary_separation(1e-3, 5, &RaySearch::default())
                            .unwrap()
                    })
                })
            },
        );
        g.bench_with_input(
            BenchmarkId::new("simulate_pair_2000", threads),
            &threads,
            |b, &t| {
                b.iter(|| {
                    with_threads(t, || {
                        estimate_errors(black_box(&pair), 2000, 7, &f).unwrap()
                    })
                })
            },
        );
        g.bench_with_input(
            BenchmarkId::new("support_bound_21x21", threads),
            &threads,
            |b, &t| b.iter(|| with_threads(t, || info_bound_support(1e-3, &f, &solver).unwrap())),
        );
    }
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
