//! Independent oracles for quantities the engine takes in closed form.

use mutransfer::constants::MassSet;
use mutransfer::potential::pmu_polarizability;

/// Hylleraas variational estimate of the static dipole polarizability of a
/// hydrogen-like 1s state (unit mass, unit charge) with the p-wave trial
/// radial functions u_k = r^(k+2) e^-r, integrals by Simpson's rule.
fn hylleraas_polarizability(n_basis: usize) -> f64 {
    let (r_max, n) = (60.0, 60_000);
    let h = r_max / n as f64;
    let simpson = |f: &dyn Fn(f64) -> f64| {
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * f(i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    };
    let u = |k: usize, r: f64| r.powi(k as i32 + 2) * (-r).exp();
    let du = |k: usize, r: f64| ((k + 2) as f64 * r.powi(k as i32 + 1) - r.powi(k as i32 + 2)) * (-r).exp();
    // <1|H0 - E0|1> with l = 1, E0 = -1/2
    let mut a = nalgebra::DMatrix::zeros(n_basis, n_basis);
    let mut b = nalgebra::DVector::zeros(n_basis);
    for i in 0..n_basis {
        for j in 0..n_basis {
            a[(i, j)] = simpson(&|r| {
                if r == 0.0 {
                    return 0.0;
                }
                0.5 * du(i, r) * du(j, r) + (1.0 / (r * r) - 1.0 / r + 0.5) * u(i, r) * u(j, r)
            });
        }
        // <1| z |0> with psi0 = 2 e^-r Y00 and z Y00 = r Y10 / sqrt(3)
        b[i] = 2.0 / 3f64.sqrt() * simpson(&|r| u(i, r) * r * r * (-r).exp());
    }
    let x = a.lu().solve(&b).unwrap();
    2.0 * b.dot(&x)
}

#[test]
fn pmu_polarizability_matches_variational_oracle() {
    let alpha_h = hylleraas_polarizability(3);
    assert!((alpha_h - 4.5).abs() < 1e-6, "hydrogen alpha {alpha_h}");
    // one-parameter trial (r^2 e^-r) is a strict lower bound
    assert!(hylleraas_polarizability(1) < alpha_h);
    let m = MassSet::default();
    let scaled = alpha_h / m.m_p_mu.powi(3);
    assert!((pmu_polarizability(&m) / scaled - 1.0).abs() < 1e-6);
}
