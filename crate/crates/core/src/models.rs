//! Reduced models: Landau-Zener cascade through the two transfer crossings,
//! one-channel transmittance through the entrance tail, the factorized
//! probability |T|^2 P_max and the 3D polarization estimate.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::asymptotics::{inward_reference_with_density, negligible_radius, REFERENCE_STEPS_PER_RADIAN};
use crate::constants::ev_to_hartree;
use crate::error::{Error, Result};
use crate::potential::{EffectivePotential1Ch, PotentialModel, TailForm};
use crate::surface::{locate_gap_minimum, SurfaceSolver};

/// A two-state crossing in the mass-scaled hyperradius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandauZenerCrossing {
    pub rho_c: f64,
    /// Half the adiabatic gap.
    pub h12: f64,
    /// |d(E1 - E2)/d rho| of the diabats.
    pub delta_f: f64,
    /// Mean adiabatic energy at the crossing, hartree (absolute).
    pub mean_energy: f64,
    /// Mass of the hyperradial motion.
    pub mass: f64,
}

impl LandauZenerCrossing {
    /// Local hyperradial speed at total energy `e_total`, or None if the
    /// crossing is classically unreachable.
    pub fn velocity(&self, e_total: f64) -> Option<f64> {
        let t = e_total - self.mean_energy;
        (t > 0.0).then(|| (2.0 * t / self.mass).sqrt())
    }

    /// Probability of staying on the diabat in one passage.
    pub fn diabatic_probability(&self, e_total: f64) -> Option<f64> {
        let v = self.velocity(e_total)?;
        Some((-TAU * self.h12 * self.h12 / (v * self.delta_f)).exp())
    }
}

/// Extracts crossing parameters between adiabatic states `lower` and
/// `lower + 1` from a local scan around `rho_guess`.
pub fn extract_crossing(solver: &SurfaceSolver, lower: usize, lo: f64, hi: f64, points: usize) -> Result<LandauZenerCrossing> {
    if !(hi > lo && lo > 0.0) || points < 5 {
        return Err(Error::InvalidInput("crossing scan needs 0 < lo < hi and at least 5 points".into()));
    }
    let n = lower + 2;
    let scan = |a: f64, b: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let rho: Vec<f64> = (0..points).map(|i| a * (b / a).powf(i as f64 / (points - 1) as f64)).collect();
        let gap = rho
            .iter()
            .map(|&r| solver.energies(r, n).map(|e| e[lower + 1] - e[lower]))
            .collect::<Result<Vec<_>>>()?;
        Ok((rho, gap))
    };
    let (rho, gap) = scan(lo, hi)?;
    let coarse = locate_gap_minimum(&rho, &gap).ok_or(Error::CrossingNotFound { i: lower, j: lower + 1 })?;
    // zoom in so the parabola is accurate
    let k = rho.iter().position(|&r| r >= coarse.rho_c).unwrap_or(1).clamp(1, rho.len() - 1);
    let (rho, gap) = scan(rho[k - 1].min(coarse.rho_c * 0.999), rho[(k + 1).min(rho.len() - 1)].max(coarse.rho_c * 1.001))?;
    let fine = locate_gap_minimum(&rho, &gap).unwrap_or(coarse);
    let rho_c = fine.rho_c;
    let e_c = solver.energies(rho_c, n)?;
    let g = e_c[lower + 1] - e_c[lower];
    // slope from the hyperbola sqrt(dF^2 d^2 + g^2), sampled where the
    // diabatic separation is about twice the gap
    let hyperbola = |d: f64| -> Result<f64> {
        let mut acc = 0.0;
        for sign in [-1.0, 1.0] {
            let e = solver.energies(rho_c + sign * d, n)?;
            let de = e[lower + 1] - e[lower];
            acc += 0.5 * (de * de - g * g).max(0.0).sqrt() / d;
        }
        Ok(acc)
    };
    let mut slope = hyperbola(0.05 * rho_c)?;
    for _ in 0..3 {
        if !(slope > 0.0) {
            break;
        }
        slope = hyperbola((2.0 * g / slope).min(0.5 * rho_c))?;
    }
    let slopes = [slope];
    let delta_f = slopes.iter().sum::<f64>() / slopes.len() as f64;
    Ok(LandauZenerCrossing {
        rho_c,
        h12: 0.5 * g,
        delta_f,
        mean_energy: 0.5 * (e_c[lower] + e_c[lower + 1]),
        mass: solver.model.masses.m_scaled,
    })
}

/// Transfer into the two product channels of the cascade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeResult {
    /// Transfer into the inner-crossing channel (mu O)(5).
    pub inner: f64,
    /// Transfer into the outer-crossing channel (mu O)(6).
    pub outer: f64,
}

impl CascadeResult {
    pub fn total(&self) -> f64 {
        self.inner + self.outer
    }
}

/// Incoherent in-and-out cascade through the outer then inner crossing.
/// `p_outer`, `p_inner` are single-passage diabatic probabilities; None
/// marks an unreachable crossing.
pub fn cascade(p_outer: Option<f64>, p_inner: Option<f64>) -> CascadeResult {
    let Some(p6) = p_outer else {
        return CascadeResult { inner: 0.0, outer: 0.0 };
    };
    let q6 = 1.0 - p6;
    match p_inner {
        Some(p5) => {
            let q5 = 1.0 - p5;
            CascadeResult { inner: 2.0 * p6 * p5 * q5, outer: q6 * p6 + p6 * (q5 * q5 + p5 * p5) * q6 }
        }
        None => CascadeResult { inner: 0.0, outer: 2.0 * q6 * p6 },
    }
}

/// Total Landau-Zener transfer at collision energy `energy_ev` above the
/// entrance threshold `threshold`.
pub fn landau_zener_total(energy_ev: f64, threshold: f64, outer: &LandauZenerCrossing, inner: &LandauZenerCrossing) -> Result<CascadeResult> {
    if !(energy_ev > 0.0) {
        return Err(Error::Domain(format!("energy must be positive, got {energy_ev}")));
    }
    let e = threshold + ev_to_hartree(energy_ev);
    Ok(cascade(outer.diabatic_probability(e), inner.diabatic_probability(e)))
}

/// One-channel problem with the effective potential of the entrance channel.
#[derive(Debug, Clone, Copy)]
pub struct TransmittanceModel {
    pub potential: EffectivePotential1Ch,
    /// Reduced mass of the relative motion.
    pub mass: f64,
    /// RK4 density of the inward integration.
    pub steps_per_radian: f64,
}

/// Transmittance and the data behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmittance {
    /// Flux transmittance into an absorbing core, |T| <= 1.
    pub t: f64,
    /// Amplitude of the standing wave T sin(KR)/sqrt(K) in the core.
    pub standing: f64,
    pub inner_k: f64,
    pub outer_k: f64,
    /// E below the core depth: inner region classically forbidden.
    pub tunneling: bool,
}

impl TransmittanceModel {
    pub fn new(model: PotentialModel, r0: f64, form: TailForm) -> Self {
        Self {
            potential: EffectivePotential1Ch::new(model, r0, form),
            mass: model.masses.m_o_pmu,
            steps_per_radian: REFERENCE_STEPS_PER_RADIAN,
        }
    }

    fn anchor(&self, k: f64) -> (f64, bool) {
        let v = &self.potential;
        match v.inverse_square_coefficient() {
            Some(c) => {
                let nu = (2.0 * self.mass * c - 0.25).abs().sqrt();
                (v.r0.max(100.0 * (nu + 1.0) / k), true)
            }
            None => (negligible_radius(&|r| v.value_unchecked(r), v.r0, 1e-14).max(v.r0 + 10.0 / k), false),
        }
    }

    /// |T| for F(R) = T sin(K R)/sqrt(K) inside R0, unit-flux outside.
    pub fn transmittance(&self, energy_ev: f64) -> Result<Transmittance> {
        if !(energy_ev > 0.0) {
            return Err(Error::Domain(format!("energy must be positive, got {energy_ev}")));
        }
        let e = ev_to_hartree(energy_ev);
        let r0 = self.potential.r0;
        let k = (2.0 * self.mass * e).sqrt();
        let kin = 2.0 * self.mass * (e - self.potential.core());
        let (r_far, langer) = self.anchor(k);
        let v = |r| self.potential.value_unchecked(r);
        let pair = inward_reference_with_density(2.0 * self.mass, &v, langer, k, r_far, r0, self.steps_per_radian)?;
        // standing-wave inner solution, with sinh for a forbidden core
        let (u, up, inner_k, tunneling) = if kin > 0.0 {
            let kk = kin.sqrt();
            ((kk * r0).sin() / kk.sqrt(), kk.sqrt() * (kk * r0).cos(), kk, false)
        } else {
            let kk = (-kin).sqrt().max(f64::MIN_POSITIVE);
            ((kk * r0).sinh() / kk.sqrt(), kk.sqrt() * (kk * r0).cosh(), kk, true)
        };
        // u = a f + b g with f' g - f g' = 1
        let a = up * pair.g - u * pair.gp;
        let b = u * pair.fp - up * pair.f;
        let standing = 1.0 / (a * a + b * b).sqrt();
        // unit-flux ingoing wave exp(-iKR)/sqrt(K) absorbed inside the core
        let t = if tunneling {
            0.0
        } else {
            let w = Complex64::from_polar(inner_k.sqrt().recip(), -inner_k * r0);
            let wp = Complex64::new(0.0, -inner_k) * w;
            let a = wp * pair.g - w * pair.gp;
            let b = w * pair.fp - wp * pair.f;
            2.0 / (b + Complex64::i() * a).norm()
        };
        Ok(Transmittance { t, standing, inner_k, outer_k: k, tunneling })
    }
}

pub fn factorized_probability(t: f64, p_max: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_max) {
        return Err(Error::InvalidInput(format!("P_max must lie in [0, 1], got {p_max}")));
    }
    Ok(t * t * p_max)
}

/// Upper-limit 3D estimate: transmittance through the -C4/R^4 tail times
/// the colinear plateau.
pub fn estimate_3d(energy_ev: f64, model: &TransmittanceModel, p_max: f64) -> Result<f64> {
    if model.potential.form != TailForm::Polarization {
        return Err(Error::InvalidInput("3D estimate needs the polarization tail".into()));
    }
    factorized_probability(model.transmittance(energy_ev)?.t, p_max)
}

/// Characteristic energy 1/(2 M beta^2), beta = sqrt(2 M C4), of a -C4/R^4
/// tail.
pub fn polarization_energy_scale(c4: f64, mass: f64) -> f64 {
    let beta2 = 2.0 * mass * c4;
    1.0 / (2.0 * mass * beta2)
}

/// Single-passage probability for given parameters (textbook form).
pub fn landau_zener_probability(h12: f64, v: f64, delta_f: f64) -> f64 {
    (-2.0 * PI * h12 * h12 / (v * delta_f)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::MassSet;
    use approx::assert_relative_eq;

    #[test]
    fn cascade_limits() {
        let z = cascade(Some(1.0), Some(1.0));
        assert_eq!(z.total(), 0.0);
        let a = cascade(Some(0.0), Some(0.0));
        assert_eq!(a.total(), 0.0);
        assert_eq!(cascade(None, Some(0.5)).total(), 0.0);
        // probabilities stay within [0, 1]
        for i in 0..=20 {
            for j in 0..=20 {
                let c = cascade(Some(i as f64 / 20.0), Some(j as f64 / 20.0));
                assert!(c.inner >= 0.0 && c.outer >= 0.0 && c.total() <= 1.0);
            }
        }
    }

    #[test]
    fn weak_and_strong_coupling_limits() {
        let mk = |h12| LandauZenerCrossing { rho_c: 0.1, h12, delta_f: 50.0, mean_energy: -100.0, mass: 600.0 };
        let e = -93.0;
        assert!(landau_zener_total(1.0, e, &mk(1e-9), &mk(1e-9)).unwrap().total() < 1e-12);
        assert!(landau_zener_total(1.0, e, &mk(10.0), &mk(10.0)).unwrap().total() < 1e-12);
        let mid = landau_zener_total(1.0, e, &mk(0.3), &mk(0.3)).unwrap().total();
        assert!(mid > 0.1);
    }

    #[test]
    fn no_tail_gives_unit_transmittance() {
        let mut model = TransmittanceModel::new(PotentialModel::coulomb(MassSet::default()), 0.08, TailForm::ColinearDipole);
        model.potential.alpha = 0.0;
        for e in [1e-4, 1e-2, 1.0] {
            assert_relative_eq!(model.transmittance(e).unwrap().t, 1.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn coulomb_tail_is_transparent() {
        let model = TransmittanceModel::new(PotentialModel::coulomb(MassSet::default()), 0.078, TailForm::ColinearDipole);
        for e in [1e-6, 1e-3, 1.0, 100.0] {
            let t = model.transmittance(e).unwrap().t;
            assert!((t - 1.0).abs() < 1e-3, "T({e}) = {t}");
        }
    }

    #[test]
    fn energy_scale_of_polarization_tail() {
        let m = MassSet::default();
        let c4 = 0.5 * crate::potential::pmu_polarizability(&m) * 64.0;
        let e = crate::constants::hartree_to_ev(polarization_energy_scale(c4, m.m_o_pmu));
        assert_relative_eq!(e, 0.083, max_relative = 0.02);
    }
}
