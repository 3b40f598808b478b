use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use mutransfer::models::TransmittanceModel;
use mutransfer::propagator::{integrate, ConstantCoupling, PropagationState, Stepper};
use mutransfer::surface::SurfaceSolver;
use mutransfer::{MassSet, PotentialModel, TailForm};
use nalgebra::DMatrix;

fn surface_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("surface_solve");
    g.sample_size(10);
    for model in [PotentialModel::coulomb(MassSet::default()), PotentialModel::thomas_fermi(MassSet::default())] {
        for n_l in [150, 350] {
            let s = SurfaceSolver::new(model, n_l).unwrap();
            g.bench_with_input(BenchmarkId::new(model.variant.to_string(), n_l), &s, |b, s| {
                b.iter(|| s.solve(black_box(1.0), 33).unwrap())
            });
        }
    }
    g.finish();
}

fn de_vogelaere_steps(c: &mut Criterion) {
    let n = 29;
    let u = DMatrix::from_fn(n, n, |i, j| if i == j { -(i as f64 + 1.0) } else { 0.01 / (1.0 + (i + j) as f64) });
    let coupling = ConstantCoupling(u);
    c.bench_function("de_vogelaere_29ch_100_steps", |b| {
        b.iter(|| {
            let mut st = PropagationState::regular(n, 0.0);
            let mut stepper = Stepper::new(n, n);
            integrate(&mut st, &mut stepper, &coupling, 1.0, 100, 10, 1e6).unwrap();
            black_box(st.f[(0, 0)])
        })
    });
}

fn transmittance(c: &mut Criterion) {
    let t = TransmittanceModel::new(PotentialModel::thomas_fermi(MassSet::default()), 0.0786, TailForm::Polarization);
    c.bench_function("transmittance_tf_polarization_0.04eV", |b| b.iter(|| t.transmittance(black_box(0.04)).unwrap()));
}

criterion_group!(benches, surface_solve, de_vogelaere_steps, transmittance);
criterion_main!(benches);
