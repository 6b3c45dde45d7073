use criterion::{criterion_group, criterion_main, Criterion};
use heatsrc::eigensystem::enumerate_basis;
use heatsrc::forward::{assemble_q_operator, synthesize, NoiseModel, TimeGrid};
use heatsrc::inversion::{alternate, AlternatingConfig};
use heatsrc::presets::{e1_p, e1_q, BETA_Q, DT, E1_LAMBDA_MAX, HORIZON, TWO_ANGLES};
use heatsrc::solvers::{tv_solve, TvProblem, TvSettings};
use nalgebra::DVector;

fn e1(c: &mut Criterion) {
    let basis = enumerate_basis(E1_LAMBDA_MAX).unwrap();
    let grid = TimeGrid::new(HORIZON, DT).unwrap();
    let data = synthesize(&e1_p(), &e1_q(), &TWO_ANGLES, &grid, &basis, 0.01, 0, NoiseModel::Uniform).unwrap();

    let a = assemble_q_operator(&e1_p().resized(basis.len()), &TWO_ANGLES, &grid, &basis).unwrap();
    let g = DVector::from_vec(data.stacked());
    c.bench_function("tv_solve/e1", |b| {
        b.iter(|| {
            tv_solve(&TvProblem {
                matrix: &a,
                data: &g,
                settings: TvSettings::with_beta(BETA_Q),
            })
            .unwrap()
        })
    });

    let cfg = AlternatingConfig::new(basis.len());
    let mut group = c.benchmark_group("alternate");
    group.sample_size(10);
    group.bench_function("e1", |b| b.iter(|| alternate(&data, &cfg, &basis).unwrap()));
    group.finish();
}

criterion_group!(benches, e1);
criterion_main!(benches);
