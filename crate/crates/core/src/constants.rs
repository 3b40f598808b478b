//! Physical constants, particle masses and the colinear mass-scaled
//! hyperspherical coordinate system.
//!
//! Everything inside the engine is in electron atomic units
//! (hbar = e = m_e = 1). Lengths in the hyperspherical coordinate `rho` are
//! mass-scaled Bohr radii; interparticle distances are physical Bohr radii.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Hartree to electron-volt (CODATA).
pub const HARTREE_EV: f64 = 27.211386;
/// Bohr radius in cm.
pub const BOHR_CM: f64 = 0.529_177_210_903e-8;
/// Atomic unit of time in seconds.
pub const AU_TIME_S: f64 = 2.418_884_326_585_7e-17;
/// Number density of liquid hydrogen, cm^-3.
pub const LIQUID_H2_DENSITY_CM3: f64 = 4.25e22;

/// Default masses in electron masses. The oxygen value is the bare 16O nucleus.
pub const PROTON_MASS: f64 = 1836.1527;
pub const MUON_MASS: f64 = 206.7683;
pub const OXYGEN_NUCLEUS_MASS: f64 = 29148.95;

pub fn ev_to_hartree(ev: f64) -> f64 {
    ev / HARTREE_EV
}

pub fn hartree_to_ev(h: f64) -> f64 {
    h * HARTREE_EV
}

/// Unit conventions carried with a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub hartree_ev: f64,
    pub bohr_cm: f64,
    pub au_time_s: f64,
    pub density_cm3: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self {
            hartree_ev: HARTREE_EV,
            bohr_cm: BOHR_CM,
            au_time_s: AU_TIME_S,
            density_cm3: LIQUID_H2_DENSITY_CM3,
        }
    }
}

impl UnitSystem {
    /// Atomic unit of velocity in cm/s.
    pub fn velocity_cm_s(&self) -> f64 {
        self.bohr_cm / self.au_time_s
    }
}

/// Particle masses and the reduced/scaled masses of the three-body problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassSet {
    pub m_p: f64,
    pub m_mu: f64,
    pub m_o: f64,
    /// O against the (p mu) centre of mass.
    pub m_o_pmu: f64,
    /// p against mu.
    pub m_p_mu: f64,
    /// mu against O (product atom).
    pub m_mu_o: f64,
    /// p against the (mu O) centre of mass.
    pub m_p_muo: f64,
    /// Three-body scaled mass.
    pub m_scaled: f64,
    /// Upper bound of the hyperangle.
    pub theta_mu: f64,
}

impl Default for MassSet {
    fn default() -> Self {
        build_mass_set(PROTON_MASS, MUON_MASS, OXYGEN_NUCLEUS_MASS).expect("default masses are valid")
    }
}

pub fn build_mass_set(m_p: f64, m_mu: f64, m_o: f64) -> Result<MassSet> {
    for (name, m) in [("m_p", m_p), ("m_mu", m_mu), ("m_O", m_o)] {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::InvalidInput(format!("{name} must be positive and finite, got {m}")));
        }
    }
    let total = m_p + m_mu + m_o;
    let m_scaled = (m_o * m_p * m_mu / total).sqrt();
    Ok(MassSet {
        m_p,
        m_mu,
        m_o,
        m_o_pmu: m_o * (m_p + m_mu) / total,
        m_p_mu: m_p * m_mu / (m_p + m_mu),
        m_mu_o: m_mu * m_o / (m_mu + m_o),
        m_p_muo: m_p * (m_mu + m_o) / total,
        m_scaled,
        theta_mu: (m_mu / m_scaled).atan(),
    })
}

impl MassSet {
    /// Physical (p mu)-O distance for a mass-scaled Jacobi length.
    pub fn entrance_physical(&self, scaled: f64) -> f64 {
        scaled * (self.m_scaled / self.m_o_pmu).sqrt()
    }

    /// Mass-scaled entrance Jacobi length for a physical (p mu)-O distance.
    pub fn entrance_scaled(&self, physical: f64) -> f64 {
        physical * (self.m_o_pmu / self.m_scaled).sqrt()
    }

    /// Physical p-(mu O) distance for a mass-scaled product Jacobi length.
    pub fn product_physical(&self, scaled: f64) -> f64 {
        scaled * (self.m_scaled / self.m_p_muo).sqrt()
    }

    /// Hydrogenic level of the (p mu) atom, hartree.
    pub fn pmu_level(&self, n: u32) -> f64 {
        -self.m_p_mu / (2.0 * f64::from(n * n))
    }

    /// Hydrogenic level of the (mu O) ion with nuclear charge `z`, hartree.
    pub fn muo_level(&self, z: f64, n: u32) -> f64 {
        -z * z * self.m_mu_o / (2.0 * f64::from(n * n))
    }
}

/// Polar form of the mass-scaled Jacobi pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperspherical {
    pub rho: f64,
    pub theta: f64,
    /// Set when `rho == 0` and the angle is meaningless.
    pub degenerate: bool,
}

pub fn to_hyperspherical(big_r: f64, small_r: f64) -> Result<Hyperspherical> {
    if big_r < 0.0 || small_r < 0.0 {
        return Err(Error::Domain(format!("Jacobi lengths must be nonnegative, got R={big_r}, r={small_r}")));
    }
    let rho = big_r.hypot(small_r);
    if rho == 0.0 {
        return Ok(Hyperspherical { rho, theta: 0.0, degenerate: true });
    }
    let theta = if big_r == 0.0 { FRAC_PI_2 } else { (small_r / big_r).atan() };
    Ok(Hyperspherical { rho, theta, degenerate: false })
}

pub fn from_hyperspherical(rho: f64, theta: f64) -> (f64, f64) {
    (rho * theta.cos(), rho * theta.sin())
}

/// Physical interparticle distances in the colinear p-mu-O arrangement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distances {
    pub p_mu: f64,
    pub mu_o: f64,
    pub p_o: f64,
}

pub fn interparticle_distances(rho: f64, theta: f64, masses: &MassSet) -> Result<Distances> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("rho must be positive, got {rho}")));
    }
    if !(0.0..=masses.theta_mu).contains(&theta) {
        return Err(Error::Domain(format!("theta={theta} outside [0, {}]", masses.theta_mu)));
    }
    Ok(distances_unchecked(rho, theta, masses))
}

/// Distances without domain checks; used in quadrature loops where the
/// angle is known to be interior.
#[inline]
pub fn distances_unchecked(rho: f64, theta: f64, masses: &MassSet) -> Distances {
    let (big_r, small_r) = from_hyperspherical(rho, theta);
    let p_mu = small_r * (masses.m_scaled / masses.m_p_mu).sqrt();
    let r_phys = big_r * (masses.m_scaled / masses.m_o_pmu).sqrt();
    let frac_p = masses.m_p / (masses.m_p + masses.m_mu);
    let frac_mu = masses.m_mu / (masses.m_p + masses.m_mu);
    let mu_o = (r_phys - frac_p * p_mu).max(0.0);
    let p_o = r_phys + frac_mu * p_mu;
    Distances { p_mu, mu_o, p_o }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn default_masses_match_direct_evaluation() {
        let m = MassSet::default();
        // frozen from a 30-digit evaluation of the reduced-mass formulas
        assert_relative_eq!(m.m_p_mu, 185.840848627729608, max_relative = 1e-14);
        assert_relative_eq!(m.m_o_pmu, 1909.11927286920365, max_relative = 1e-14);
        assert_relative_eq!(m.m_scaled, 595.644479367992542, max_relative = 1e-14);
        assert_relative_eq!(m.theta_mu, 0.334119086071219921, max_relative = 1e-14);
        assert_relative_eq!(m.m_mu_o, 205.311918335345247, max_relative = 1e-14);
    }

    #[test]
    fn equal_masses() {
        let m = build_mass_set(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(m.m_p_mu, 0.5);
        assert_relative_eq!(m.m_scaled, (1.0f64 / 3.0).sqrt());
    }

    #[test]
    fn heavy_oxygen_limit() {
        let m = build_mass_set(PROTON_MASS, MUON_MASS, 1e15).unwrap();
        assert_relative_eq!(m.m_o_pmu, PROTON_MASS + MUON_MASS, max_relative = 1e-10);
    }

    #[test]
    fn nonpositive_mass_rejected() {
        assert!(matches!(build_mass_set(0.0, 1.0, 1.0), Err(Error::InvalidInput(_))));
        assert!(build_mass_set(1.0, -2.0, 1.0).is_err());
    }

    #[test]
    fn hyperspherical_examples() {
        let h = to_hyperspherical(1.0, 0.0).unwrap();
        assert_eq!((h.rho, h.theta), (1.0, 0.0));
        let h = to_hyperspherical(0.0, 1.0).unwrap();
        assert_relative_eq!(h.theta, FRAC_PI_2);
        let h = to_hyperspherical(3.0, 4.0).unwrap();
        assert_relative_eq!(h.rho, 5.0);
        assert_relative_eq!(h.theta, (4.0f64 / 3.0).atan());
        let h = to_hyperspherical(0.0, 0.0).unwrap();
        assert!(h.degenerate);
        assert_eq!(h.theta, 0.0);
    }

    #[test]
    fn singular_boundaries() {
        let m = MassSet::default();
        let d = interparticle_distances(1.0, 0.0, &m).unwrap();
        assert_eq!(d.p_mu, 0.0);
        let d = interparticle_distances(1.0, m.theta_mu, &m).unwrap();
        assert!(d.mu_o.abs() < 1e-14);
        assert!(interparticle_distances(1.0, m.theta_mu + 1e-3, &m).is_err());
        assert!(interparticle_distances(1.0, -1e-3, &m).is_err());
    }

    #[test]
    fn midpoint_distances_are_colinear() {
        let m = MassSet::default();
        let d = interparticle_distances(1.0, m.theta_mu / 2.0, &m).unwrap();
        assert!(d.p_mu > 0.0 && d.mu_o > 0.0 && d.p_o > 0.0);
        assert_relative_eq!(d.p_o, d.p_mu + d.mu_o, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn round_trip(rho in 1e-3f64..100.0, frac in 0.0f64..1.0) {
            let theta = frac * FRAC_PI_2 * 0.999;
            let (big_r, small_r) = from_hyperspherical(rho, theta);
            let h = to_hyperspherical(big_r, small_r).unwrap();
            prop_assert!((h.rho - rho).abs() <= 1e-12 * rho);
            prop_assert!((h.theta - theta).abs() <= 1e-12);
        }

        #[test]
        fn colinear_identity(rho in 1e-3f64..100.0, frac in 1e-6f64..(1.0 - 1e-6)) {
            let m = MassSet::default();
            let d = interparticle_distances(rho, frac * m.theta_mu, &m).unwrap();
            prop_assert!((d.p_o - d.p_mu - d.mu_o).abs() <= 1e-12 * d.p_o);
        }
    }
}
