//! Compares the rayon data-parallel helper against the sequential fallback
//! on the two workloads that dominate wall time in practice: per-cell grade
//! envelope sampling (the partition audit inner loop) and batch simulation
//! from many initial states.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use it2lmi::bench_pendulum::{build_system, PendulumParams};
use it2lmi::par::{map_indexed, map_indexed_seq};
use it2lmi::simulate::{integrate, DisturbanceSpec, IntegrateOptions};
use nalgebra::DVector;

fn grade_sampling(c: &mut Criterion) {
    let params = PendulumParams::default();
    let system = build_system(&params).unwrap();
    let r = params.r_i_rad();
    let cells = 256usize;
    let samples = 64usize;

    // worst observed grade-sum deviation over a sample grid inside cell k
    let audit_cell = |k: usize| -> f64 {
        let x1 = -r + 2.0 * r * (k as f64 + 0.5) / cells as f64;
        let mut worst: f64 = 0.0;
        for s in 0..samples {
            let x2 = -10.0 + 20.0 * s as f64 / (samples - 1) as f64;
            let x = DVector::from_vec(vec![x1, x2]);
            for i in 0..2 {
                let h = system.combined_grades(i, &x).unwrap();
                worst = worst.max((h.sum() - 1.0).abs());
            }
        }
        worst
    };

    let mut group = c.benchmark_group("grade_sampling");
    group.bench_with_input(BenchmarkId::new("parallel", cells), &cells, |b, &n| {
        b.iter(|| map_indexed(n, audit_cell))
    });
    group.bench_with_input(BenchmarkId::new("sequential", cells), &cells, |b, &n| {
        b.iter(|| map_indexed_seq(n, audit_cell))
    });
    group.finish();
}

fn batch_simulation(c: &mut Criterion) {
    let params = PendulumParams::default();
    let system = build_system(&params).unwrap();
    let r = params.r_i_rad();
    let runs = 32usize;
    let opts = IntegrateOptions {
        t_final: 0.2,
        dt: 1e-3,
        blow_up: 1e12,
        substeps: 1,
    };

    let simulate_one = |k: usize| -> f64 {
        let frac = k as f64 / runs as f64;
        let x0 = vec![
            DVector::from_vec(vec![r * (2.0 * frac - 1.0), 0.0]),
            DVector::from_vec(vec![r * (1.0 - 2.0 * frac), 0.0]),
        ];
        let dist = vec![DisturbanceSpec::Zero, DisturbanceSpec::Zero];
        let traj = integrate(&system, None, &x0, &dist, &opts).unwrap();
        traj.state_norm(traj.num_steps() - 1)
    };

    let mut group = c.benchmark_group("batch_simulation");
    group.bench_with_input(BenchmarkId::new("parallel", runs), &runs, |b, &n| {
        b.iter(|| map_indexed(n, simulate_one))
    });
    group.bench_with_input(BenchmarkId::new("sequential", runs), &runs, |b, &n| {
        b.iter(|| map_indexed_seq(n, simulate_one))
    });
    group.finish();
}

criterion_group!(benches, grade_sampling, batch_simulation);
criterion_main!(benches);
