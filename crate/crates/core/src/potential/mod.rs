//! Colinear three-body interaction under the bare-Coulomb and
//! Thomas-Fermi screened models, plus the one-channel effective potentials
//! used by the reduced models.

pub mod thomas_fermi;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::constants::{distances_unchecked, Distances, MassSet};
use crate::error::{Error, Result};
pub use thomas_fermi::ThomasFermi;

/// Thomas-Fermi length prefactor (0.8853 a0 Z^{-1/3}).
pub const TF_LENGTH_PREFACTOR: f64 = 0.8853;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Coulomb,
    #[serde(rename = "tf")]
    ThomasFermi,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Coulomb => "coulomb",
            Variant::ThomasFermi => "tf",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coulomb" | "c" => Ok(Variant::Coulomb),
            "tf" | "thomas-fermi" | "thomasfermi" => Ok(Variant::ThomasFermi),
            other => Err(Error::Config(format!("unknown potential variant `{other}`"))),
        }
    }
}

/// Interaction model for the colinear p-mu-O system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialModel {
    pub variant: Variant,
    /// Bare nuclear charge of the oxygen.
    pub z: f64,
    pub masses: MassSet,
    /// Thomas-Fermi screening length in Bohr radii.
    pub screening_length: f64,
}

impl PotentialModel {
    pub fn new(variant: Variant, z: f64, masses: MassSet) -> Self {
        if variant == Variant::ThomasFermi {
            // build the shared table eagerly, outside any hot loop
            ThomasFermi::shared();
        }
        Self { variant, z, masses, screening_length: TF_LENGTH_PREFACTOR * z.powf(-1.0 / 3.0) }
    }

    pub fn coulomb(masses: MassSet) -> Self {
        Self::new(Variant::Coulomb, 8.0, masses)
    }

    pub fn thomas_fermi(masses: MassSet) -> Self {
        Self::new(Variant::ThomasFermi, 8.0, masses)
    }

    /// True when V(lambda rho, theta) = V(rho, theta) / lambda.
    pub fn is_scale_invariant(&self) -> bool {
        self.variant == Variant::Coulomb
    }

    /// Effective oxygen charge seen at distance `d` (Bohr radii).
    pub fn effective_charge(&self, d: f64) -> Result<f64> {
        if d < 0.0 || d.is_nan() {
            return Err(Error::Domain(format!("distance must be nonnegative, got {d}")));
        }
        Ok(self.charge(d))
    }

    #[inline]
    pub fn charge(&self, d: f64) -> f64 {
        match self.variant {
            Variant::Coulomb => self.z,
            Variant::ThomasFermi => self.z * ThomasFermi::shared().chi(d / self.screening_length),
        }
    }

    /// Z*(d) and its derivative with respect to d.
    pub fn charge_and_slope(&self, d: f64) -> (f64, f64) {
        match self.variant {
            Variant::Coulomb => (self.z, 0.0),
            Variant::ThomasFermi => {
                let (c, dc) = ThomasFermi::shared().eval(d / self.screening_length);
                (self.z * c, self.z * dc / self.screening_length)
            }
        }
    }

    /// Potential for given interparticle distances (hartree).
    #[inline]
    pub fn from_distances(&self, d: &Distances) -> f64 {
        -self.charge(d.mu_o) / d.mu_o + self.charge(d.p_o) / d.p_o - 1.0 / d.p_mu
    }

    /// Interaction energy at an interior colinear geometry.
    pub fn potential(&self, rho: f64, theta: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::Domain(format!("rho must be positive, got {rho}")));
        }
        if theta <= 0.0 || theta >= self.masses.theta_mu {
            return Err(Error::Singularity { rho, theta });
        }
        let d = distances_unchecked(rho, theta, &self.masses);
        Ok(self.from_distances(&d))
    }

    /// Potential without checks, for quadrature loops on interior nodes.
    #[inline]
    pub fn potential_unchecked(&self, rho: f64, theta: f64) -> f64 {
        self.from_distances(&distances_unchecked(rho, theta, &self.masses))
    }
}

/// Long-range form of the one-channel effective potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TailForm {
    /// -alpha Z*(R) / R^2, the colinear charge-dipole interaction.
    ColinearDipole,
    /// -C4(R) / R^4 with C4 = alpha_d Z*(R)^2 / 2, the 3D polarization term.
    Polarization,
}

/// Static dipole polarizability of ground-state (p mu), atomic units.
pub fn pmu_polarizability(masses: &MassSet) -> f64 {
    4.5 / masses.m_p_mu.powi(3)
}

/// One-channel effective potential with a flat core inside `r0`.
/// Distances are physical Bohr radii.
#[derive(Debug, Clone, Copy)]
pub struct EffectivePotential1Ch {
    pub alpha: f64,
    pub polarizability: f64,
    pub r0: f64,
    pub form: TailForm,
    pub model: PotentialModel,
}

impl EffectivePotential1Ch {
    pub fn new(model: PotentialModel, r0: f64, form: TailForm) -> Self {
        Self {
            alpha: 3.0 / (2.0 * model.masses.m_p_mu),
            polarizability: pmu_polarizability(&model.masses),
            r0,
            form,
            model,
        }
    }

    fn tail(&self, r: f64) -> f64 {
        match self.form {
            TailForm::ColinearDipole => -self.alpha * self.model.charge(r) / (r * r),
            TailForm::Polarization => {
                let z = self.model.charge(r);
                -0.5 * self.polarizability * z * z / r.powi(4)
            }
        }
    }

    /// Depth of the flat core, V_eff(R0).
    pub fn core(&self) -> f64 {
        self.tail(self.r0)
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("R must be positive, got {r}")));
        }
        Ok(self.value_unchecked(r))
    }

    #[inline]
    pub fn value_unchecked(&self, r: f64) -> f64 {
        if r < self.r0 {
            self.core()
        } else {
            self.tail(r)
        }
    }

    /// Coefficient c of a pure -c/R^2 tail, when the tail is exactly of that form.
    pub fn inverse_square_coefficient(&self) -> Option<f64> {
        match (self.form, self.model.variant) {
            (TailForm::ColinearDipole, Variant::Coulomb) => Some(self.alpha * self.model.z),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn masses() -> MassSet {
        MassSet::default()
    }

    #[test]
    fn tf_charge_limits() {
        let m = PotentialModel::thomas_fermi(masses());
        assert_eq!(m.effective_charge(0.0).unwrap(), 8.0);
        assert!(m.effective_charge(1e4).unwrap() < 1e-8);
        let b = m.screening_length;
        assert_relative_eq!(m.charge(b), 8.0 * 0.424_008_052_080_705_6, max_relative = 1e-8);
        assert!(m.effective_charge(-1.0).is_err());
    }

    #[test]
    fn coulomb_charge_is_constant() {
        let m = PotentialModel::coulomb(masses());
        for d in [0.0, 1e-3, 1.0, 1e3] {
            assert_eq!(m.charge(d), 8.0);
        }
    }

    #[test]
    fn singular_boundaries_are_rejected() {
        let m = PotentialModel::coulomb(masses());
        assert!(matches!(m.potential(1.0, 0.0), Err(Error::Singularity { .. })));
        assert!(matches!(m.potential(1.0, m.masses.theta_mu), Err(Error::Singularity { .. })));
        assert!(m.potential(1.0, 0.1).is_ok());
    }

    #[test]
    fn dominant_singular_term_near_oxygen() {
        let m = PotentialModel::coulomb(masses());
        let theta = m.masses.theta_mu * (1.0 - 1e-9);
        let d = distances_unchecked(1.0, theta, &m.masses);
        let v = m.potential(1.0, theta).unwrap();
        assert_relative_eq!(v * d.mu_o, -8.0, max_relative = 1e-6);
    }

    #[test]
    fn isolated_pmu_at_large_rho() {
        let m = PotentialModel::coulomb(masses());
        let (rho, theta) = (1e6, 1e-9);
        let d = distances_unchecked(rho, theta, &m.masses);
        let v = m.potential(rho, theta).unwrap();
        assert_relative_eq!(v * d.p_mu, -1.0, max_relative = 1e-6);
    }

    #[test]
    fn tf_residual_falls_faster_than_coulomb() {
        let c = PotentialModel::coulomb(masses());
        let tf = PotentialModel::thomas_fermi(masses());
        // O-dependent part of V at fixed p-mu separation, times R^2
        let residual = |m: &PotentialModel, rho: f64| {
            let theta = 4e-3 / rho;
            let d = distances_unchecked(rho, theta, &m.masses);
            (m.potential(rho, theta).unwrap() + 1.0 / d.p_mu) * d.p_o * d.p_o
        };
        let (r1, r2) = (20.0, 40.0);
        let c_ratio = residual(&c, r2) / residual(&c, r1);
        let tf_ratio = residual(&tf, r2) / residual(&tf, r1);
        assert!((c_ratio - 1.0).abs() < 0.05, "Coulomb residual is charge-dipole, ratio {c_ratio}");
        assert!(tf_ratio.abs() < 0.3, "screened residual ratio {tf_ratio}");
    }

    #[test]
    fn tf_agrees_with_coulomb_inside_screening_length() {
        let c = PotentialModel::coulomb(masses());
        let tf = PotentialModel::thomas_fermi(masses());
        // geometries with all O distances well below b ~ 0.44
        for &rho in &[1e-4, 5e-4] {
            for k in 1..10 {
                let theta = c.masses.theta_mu * k as f64 / 10.0;
                let vc = c.potential(rho, theta).unwrap();
                let vt = tf.potential(rho, theta).unwrap();
                assert!(((vt - vc) / vc).abs() < 1e-3, "rho={rho} theta={theta}");
            }
        }
    }

    #[test]
    fn screening_weakens_oxygen_attraction() {
        let c = PotentialModel::coulomb(masses());
        let tf = PotentialModel::thomas_fermi(masses());
        for &rho in &[0.05, 0.2, 1.0, 5.0] {
            for k in 0..20 {
                // mu close to O: the -Z*/d_muO term dominates
                let theta = c.masses.theta_mu * (0.9 + 0.0999 * k as f64 / 20.0);
                assert!(tf.potential(rho, theta).unwrap() >= c.potential(rho, theta).unwrap());
            }
        }
    }

    #[test]
    fn depends_only_on_distances() {
        let m = PotentialModel::thomas_fermi(masses());
        let d = Distances { p_mu: 0.3, mu_o: 0.2, p_o: 0.5 };
        let direct = -m.charge(0.2) / 0.2 + m.charge(0.5) / 0.5 - 1.0 / 0.3;
        assert_eq!(m.from_distances(&d), direct);
    }

    #[test]
    fn effective_potential_forms() {
        let model = PotentialModel::coulomb(masses());
        let r0 = 0.08;
        let v = EffectivePotential1Ch::new(model, r0, TailForm::ColinearDipole);
        assert_relative_eq!(v.value(2.0 * r0).unwrap(), -8.0 * v.alpha / (4.0 * r0 * r0), max_relative = 1e-14);
        assert_eq!(v.value(r0 / 2.0).unwrap(), v.value(r0).unwrap());
        assert!(v.value(0.0).is_err());
        let v3 = EffectivePotential1Ch::new(model, r0, TailForm::Polarization);
        let r = 0.3;
        let c4 = 0.5 * 4.5 / model.masses.m_p_mu.powi(3) * 64.0;
        assert_relative_eq!(v3.value(r).unwrap(), -c4 / r.powi(4), max_relative = 1e-14);
    }
}
