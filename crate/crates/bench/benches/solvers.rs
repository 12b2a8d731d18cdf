use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lrhp::detect::{ep_solve_problem, prepare_triangular, sesd_solve, EpOptions, EpProblem};
use lrhp::hybrid::alternate;
use lrhp::{Alphabet, CMatrix, CVector, Complex64, SolverKind};
use lrhp_bench::{bench_config, target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(m: usize, seed: u64) -> (CVector, CMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let g = CMatrix::from_fn(m + 2, m, |_, _| z());
    let c = CVector::from_fn(m + 2, |_, _| z());
    (c, g)
}

fn detectors(c: &mut Criterion) {
    let alphabet = Alphabet::analog(1).unwrap();
    let mut group = c.benchmark_group("detect");
    for m in [4, 6, 8] {
        let (cv, g) = problem(m, m as u64);
        let sys = prepare_triangular(&g, &cv, 0.0).unwrap();
        group.bench_with_input(BenchmarkId::new("sesd", m), &sys, |b, sys| {
            b.iter(|| sesd_solve(sys, &alphabet).unwrap())
        });
        let p = EpProblem::new(&cv, &g).unwrap();
        let opts = EpOptions::default();
        group.bench_with_input(BenchmarkId::new("ep", m), &p, |b, p| {
            b.iter(|| ep_solve_problem(p, &alphabet, &opts).unwrap())
        });
    }
    group.finish();
}

fn designs(c: &mut Criterion) {
    let mut group = c.benchmark_group("design");
    group.sample_size(10);
    for m_rf in [4, 6, 8] {
        let cfg = bench_config(m_rf);
        let fd = target(&cfg, 0);
        for kind in [SolverKind::Sesd, SolverKind::Ep] {
            group.bench_with_input(BenchmarkId::new(kind.name(), m_rf), &fd, |b, fd| {
                b.iter(|| alternate(fd, &cfg, kind).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, detectors, designs);
criterion_main!(benches);
