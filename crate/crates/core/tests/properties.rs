use proptest::prelude::*;

use mutransfer::constants::{MassSet, UnitSystem};
use mutransfer::models::{cascade, landau_zener_probability, TransmittanceModel};
use mutransfer::pipeline::{GridSpec, RunConfig};
use mutransfer::rates::{cross_section, rate};
use mutransfer::{PotentialModel, TailForm};

const R0: f64 = 0.0786;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cascade_is_a_probability(p in 0.0..=1.0_f64, q in 0.0..=1.0_f64) {
        let c = cascade(Some(p), Some(q));
        prop_assert!(c.inner >= 0.0 && c.outer >= 0.0);
        prop_assert!(c.total() <= 1.0 + 1e-15);
        let only_outer = cascade(Some(p), None).total();
        prop_assert!((0.0..=0.5 + 1e-15).contains(&only_outer));
    }

    #[test]
    fn cascade_is_continuous(p in 0.0..=0.999_f64, q in 0.0..=0.999_f64) {
        let a = cascade(Some(p), Some(q)).total();
        let b = cascade(Some(p + 1e-6), Some(q + 1e-6)).total();
        prop_assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn landau_zener_single_passage_in_unit_interval(h in 1e-6..1.0_f64, v in 1e-4..10.0_f64, f in 1e-2..1e4_f64) {
        let p = landau_zener_probability(h, v, f);
        prop_assert!(p > 0.0 || h * h / (v * f) > 100.0);
        prop_assert!(p <= 1.0);
    }

    #[test]
    fn cross_section_is_linear_and_rate_bounded(log_e in -6.0..3.0_f64, p in 0.0..=1.0_f64) {
        let (m, u) = (MassSet::default(), UnitSystem::default());
        let e = 10f64.powf(log_e);
        let s = cross_section(e, p, &m, &u).unwrap();
        let s1 = cross_section(e, 1.0, &m, &u).unwrap();
        prop_assert!((s - p * s1).abs() <= 1e-14 * s1);
        prop_assert!(rate(e, s, &m, &u).unwrap() <= rate(e, s1, &m, &u).unwrap());
    }

    #[test]
    fn grid_spec_round_trips(lo in 1e-6..1.0_f64, span in 1.0..1e6_f64, n in 2usize..500, log: bool) {
        let g = GridSpec { lo, hi: lo * span * 1.0001, points: n, log };
        let back: GridSpec = g.to_string().parse().unwrap();
        prop_assert_eq!(back.points, n);
        prop_assert_eq!(back.log, log);
        prop_assert!((back.lo - lo).abs() <= 1e-12 * lo);
        let v = back.values();
        prop_assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn thomas_fermi_charge_is_screened_and_monotone(d in 1e-4..20.0_f64) {
        let tf = PotentialModel::thomas_fermi(MassSet::default());
        let (z, dz) = tf.charge_and_slope(d);
        prop_assert!(z > 0.0 && z < 8.0);
        prop_assert!(dz < 0.0);
        prop_assert!(tf.charge(d * 1.01) < z);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn transmittance_never_exceeds_one(log_e in -6.0..3.0_f64, tf: bool, polar: bool) {
        let m = MassSet::default();
        let model = if tf { PotentialModel::thomas_fermi(m) } else { PotentialModel::coulomb(m) };
        let form = if polar { TailForm::Polarization } else { TailForm::ColinearDipole };
        let t = TransmittanceModel::new(model, R0, form).transmittance(10f64.powf(log_e)).unwrap();
        prop_assert!(t.t >= 0.0 && t.t <= 1.0 + 1e-9, "T = {}", t.t);
    }

    #[test]
    fn config_hash_tracks_content(n_l in 20usize..800, rho_end in 2.0..40.0_f64) {
        let mut a = RunConfig::default();
        a.basis.n_l = n_l;
        a.grid.rho_end = rho_end;
        let b = RunConfig::from_toml_str(&a.to_toml_string()).unwrap();
        prop_assert_eq!(a.hash(), b.hash());
        let mut c = b.clone();
        c.grid.rho_end = rho_end * 1.5;
        prop_assert_ne!(a.hash(), c.hash());
    }
}

#[test]
fn transmittance_step_halving_self_convergence() {
    let m = MassSet::default();
    for model in [PotentialModel::coulomb(m), PotentialModel::thomas_fermi(m)] {
        for form in [TailForm::ColinearDipole, TailForm::Polarization] {
            let t = TransmittanceModel::new(model, R0, form);
            let mut fine = t;
            fine.steps_per_radian *= 2.0;
            for e in [1e-5, 1e-2, 0.04, 1.0, 100.0] {
                let (a, b) = (t.transmittance(e).unwrap().t, fine.transmittance(e).unwrap().t);
                assert!((a - b).abs() < 1e-8, "{:?} {form:?} E = {e}: {a} vs {b}", model.variant);
            }
        }
    }
}
