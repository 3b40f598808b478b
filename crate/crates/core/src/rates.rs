//! s-wave cross sections and transfer rates at liquid-hydrogen density.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::constants::{ev_to_hartree, MassSet, UnitSystem};
use crate::error::{Error, Result};

/// Above this collision energy more than one partial wave contributes.
pub const S_WAVE_LIMIT_EV: f64 = 0.2;

/// Where a probability curve came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RateSource {
    MultichannelCoulomb,
    MultichannelTf,
    Estimate3d,
    LandauZener,
    UnitProbability,
}

impl fmt::Display for RateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateSource::MultichannelCoulomb => "multichannel-coulomb",
            RateSource::MultichannelTf => "multichannel-tf",
            RateSource::Estimate3d => "3d-estimate",
            RateSource::LandauZener => "landau-zener",
            RateSource::UnitProbability => "p-unity",
        })
    }
}

fn check(energy_ev: f64) -> Result<()> {
    if energy_ev > 0.0 && energy_ev.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("energy must be positive, got {energy_ev}")))
    }
}

/// Entrance wavenumber in inverse Bohr radii.
pub fn entrance_wavenumber(energy_ev: f64, masses: &MassSet) -> f64 {
    (2.0 * masses.m_o_pmu * ev_to_hartree(energy_ev)).sqrt()
}

/// sigma = pi P / k^2, cm^2.
pub fn cross_section(energy_ev: f64, p: f64, masses: &MassSet, units: &UnitSystem) -> Result<f64> {
    check(energy_ev)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("probability must lie in [0, 1], got {p}")));
    }
    let k = entrance_wavenumber(energy_ev, masses);
    Ok(PI * p / (k * k) * units.bohr_cm * units.bohr_cm)
}

/// lambda = N v sigma, s^-1.
pub fn rate(energy_ev: f64, sigma_cm2: f64, masses: &MassSet, units: &UnitSystem) -> Result<f64> {
    check(energy_ev)?;
    let v = (2.0 * ev_to_hartree(energy_ev) / masses.m_o_pmu).sqrt() * units.velocity_cm_s();
    Ok(units.density_cm3 * v * sigma_cm2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub source: RateSource,
    pub energy_ev: Vec<f64>,
    pub sigma_cm2: Vec<f64>,
    pub lambda_per_s: Vec<f64>,
    pub s_wave_valid: Vec<bool>,
}

pub fn rate_scan(
    energy_ev: &[f64],
    probability: &[f64],
    source: RateSource,
    masses: &MassSet,
    units: &UnitSystem,
) -> Result<RateCurve> {
    if energy_ev.len() != probability.len() {
        return Err(Error::InvalidInput("energy and probability grids differ in length".into()));
    }
    if energy_ev.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("energy grid must be strictly increasing".into()));
    }
    let mut curve = RateCurve {
        source,
        energy_ev: energy_ev.to_vec(),
        sigma_cm2: Vec::with_capacity(energy_ev.len()),
        lambda_per_s: Vec::with_capacity(energy_ev.len()),
        s_wave_valid: Vec::with_capacity(energy_ev.len()),
    };
    for (&e, &p) in energy_ev.iter().zip(probability) {
        let s = cross_section(e, p, masses, units)?;
        curve.sigma_cm2.push(s);
        curve.lambda_per_s.push(rate(e, s, masses, units)?);
        curve.s_wave_valid.push(e <= S_WAVE_LIMIT_EV);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn thermal_reference_values() {
        let m = MassSet::default();
        let u = UnitSystem::default();
        let s = cross_section(0.04, 0.6, &m, &u).unwrap();
        assert_relative_eq!(s, 9.40439805538e-18, max_relative = 1e-9);
        assert_relative_eq!(rate(0.04, s, &m, &u).unwrap(), 1.08507334877e11, max_relative = 1e-9);
    }

    #[test]
    fn scaling_laws() {
        let m = MassSet::default();
        let u = UnitSystem::default();
        let s1 = cross_section(0.1, 0.5, &m, &u).unwrap();
        let s2 = cross_section(0.2, 0.5, &m, &u).unwrap();
        assert_relative_eq!(s1 / s2, 2.0, max_relative = 1e-14);
        let l1 = rate(0.1, cross_section(0.1, 1.0, &m, &u).unwrap(), &m, &u).unwrap();
        let l4 = rate(0.4, cross_section(0.4, 1.0, &m, &u).unwrap(), &m, &u).unwrap();
        assert_relative_eq!(l4 / l1, 0.5, max_relative = 1e-14);
        assert_eq!(cross_section(1.0, 0.0, &m, &u).unwrap(), 0.0);
        assert!(cross_section(-1.0, 0.5, &m, &u).is_err());
        assert!(cross_section(1.0, 1.5, &m, &u).is_err());
    }

    #[test]
    fn validity_flags() {
        let m = MassSet::default();
        let c = rate_scan(&[0.04, 0.2, 0.5], &[0.5; 3], RateSource::Estimate3d, &m, &UnitSystem::default()).unwrap();
        assert_eq!(c.s_wave_valid, vec![true, true, false]);
        assert!(rate_scan(&[0.2, 0.1], &[0.5; 2], RateSource::Estimate3d, &m, &UnitSystem::default()).is_err());
    }
}
