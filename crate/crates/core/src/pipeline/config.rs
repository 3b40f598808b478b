//! Run configuration, read from and written to TOML.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::constants::{build_mass_set, MassSet, UnitSystem, LIQUID_H2_DENSITY_CM3, MUON_MASS, OXYGEN_NUCLEUS_MASS, PROTON_MASS};
use crate::error::{Error, Result};
use crate::potential::{PotentialModel, Variant};
use crate::propagator::{SectorGridSpec, StepControl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassConfig {
    pub p: f64,
    pub mu: f64,
    #[serde(rename = "O")]
    pub o: f64,
}

impl Default for MassConfig {
    fn default() -> Self {
        Self { p: PROTON_MASS, mu: MUON_MASS, o: OXYGEN_NUCLEUS_MASS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitsConfig {
    pub density_cm3: f64,
}

impl Default for UnitsConfig {
    fn default() -> Self {
        Self { density_cm3: LIQUID_H2_DENSITY_CM3 }
    }
}

/// Which interaction models to run. Absent `variant` means both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(rename = "Z")]
    pub z: f64,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self { variant: None, z: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub n_l: usize,
    /// Lowest surface states kept as channels.
    pub n_channels: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { n_l: 350, n_channels: 29 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub rho_start: f64,
    pub rho_end: f64,
    pub ratio: f64,
    pub max_defect: f64,
    pub min_relative_step: f64,
    pub buffer: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let s = SectorGridSpec::default();
        Self {
            rho_start: s.rho_start,
            rho_end: 20.0,
            ratio: s.ratio,
            max_defect: s.max_defect,
            min_relative_step: s.min_relative_step,
            buffer: s.buffer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub steps_per_wavelength: f64,
    pub min_steps_per_sector: usize,
    pub stabilization_threshold: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        let c = StepControl::default();
        Self {
            steps_per_wavelength: c.steps_per_wavelength,
            min_steps_per_sector: c.min_steps_per_sector,
            stabilization_threshold: c.stabilization_threshold,
        }
    }
}

/// `lo:hi:n` with an optional `_LOG` (default) or `_LIN` suffix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub log: bool,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                let t = i as f64 / last;
                if i + 1 == self.points {
                    self.hi
                } else if self.log {
                    self.lo * (self.hi / self.lo).powf(t)
                } else {
                    self.lo + (self.hi - self.lo) * t
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lo.is_finite()
            && self.hi.is_finite()
            && self.points >= 1
            && (self.hi > self.lo || (self.points == 1 && self.hi == self.lo))
            && (!self.log || self.lo > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("bad grid `{self}`")))
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}:{:e}:{}_{}", self.lo, self.hi, self.points, if self.log { "LOG" } else { "LIN" })
    }
}

impl FromStr for GridSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("grid `{s}` is not of the form LO:HI:N[_LOG|_LIN]"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n = parts[2].trim();
        let (n, log) = match n.split_once('_') {
            Some((n, kind)) if kind.eq_ignore_ascii_case("log") => (n, true),
            Some((n, kind)) if kind.eq_ignore_ascii_case("lin") => (n, false),
            Some(_) => return Err(bad()),
            None => (n, true),
        };
        let g = GridSpec { lo, hi, points: n.parse().map_err(|_| bad())?, log };
        g.validate()?;
        Ok(g)
    }
}

impl Serialize for GridSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for GridSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// Collision energies, eV.
    pub energies: GridSpec,
    /// Hyperradii of the adiabatic-curve dump.
    pub curves: GridSpec,
    pub curve_states: usize,
    /// Distances of the Z*(d) dump, Bohr radii.
    pub zstar: GridSpec,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            energies: GridSpec { lo: 1e-6, hi: 1e3, points: 37, log: true },
            curves: GridSpec { lo: 0.05, hi: 40.0, points: 200, log: true },
            curve_states: 29,
            zstar: GridSpec { lo: 1e-4, hi: 10.0, points: 200, log: true },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    /// Plateau used when no Coulomb scan is part of the run.
    pub p_max: f64,
    /// Hyperradius window searched for the two transfer crossings.
    pub crossing_window: [f64; 2],
    /// Product quantum numbers of the outer and inner crossing.
    pub crossing_levels: [u32; 2],
    /// Energy window defining the Coulomb plateau, eV.
    pub plateau_window: [f64; 2],
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self { p_max: 0.8, crossing_window: [0.03, 1.0], crossing_levels: [6, 5], plateau_window: [1e-2, 1e2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    pub unitarity: f64,
    pub symmetry: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self { unitarity: 1e-6, symmetry: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CachePolicy {
    /// Reuse cached sectors and store new ones.
    ReadWrite,
    /// Always rebuild, then store.
    Refresh,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub cache: CachePolicy,
    /// Worker threads for the energy loop; 0 picks the machine size.
    pub threads: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("mutransfer-out"), cache: CachePolicy::ReadWrite, threads: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mass: MassConfig,
    pub units: UnitsConfig,
    pub potential: PotentialConfig,
    pub basis: BasisConfig,
    pub grid: GridConfig,
    pub propagation: PropagationConfig,
    pub scan: ScanConfig,
    pub models: ModelsConfig,
    pub tolerance: ToleranceConfig,
    pub output: OutputConfig,
}

/// Keys whose default value is taken from the published calculation;
/// all other defaults are engineering choices.
const PUBLISHED_DEFAULTS: &[&str] =
    &["potential.Z", "basis.n_l", "basis.n_channels", "models.p_max", "models.crossing_levels", "units.density_cm3"];

/// Where the value of a config key came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    User,
    PublishedDefault,
    EngineeringDefault,
}

impl RunConfig {
    /// Reduced continuous-integration profile.
    pub fn ci_profile() -> Self {
        let mut c = Self::default();
        c.basis.n_l = 150;
        c.grid.rho_end = 8.0;
        c
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        self.masses()?;
        if !(self.units.density_cm3 > 0.0) {
            return cfg("units.density_cm3 must be positive".into());
        }
        if !(self.potential.z > 0.0) {
            return cfg("potential.Z must be positive".into());
        }
        if self.basis.n_l < 2 || self.basis.n_channels < 2 || self.basis.n_channels > self.basis.n_l {
            return cfg("need 2 <= basis.n_channels <= basis.n_l".into());
        }
        let g = &self.grid;
        if !(g.rho_start > 0.0 && g.rho_end > g.rho_start && g.ratio > 1.0 && g.max_defect > 0.0 && g.min_relative_step > 0.0) {
            return cfg("grid needs 0 < rho_start < rho_end, ratio > 1 and positive tolerances".into());
        }
        if g.buffer >= self.basis.n_channels {
            return cfg("grid.buffer must be smaller than basis.n_channels".into());
        }
        let p = &self.propagation;
        if !(p.steps_per_wavelength > 0.0 && p.stabilization_threshold > 1.0) || p.min_steps_per_sector == 0 {
            return cfg("propagation settings must be positive".into());
        }
        self.scan.energies.validate()?;
        self.scan.curves.validate()?;
        self.scan.zstar.validate()?;
        if self.scan.energies.lo <= 0.0 {
            return cfg("energies must be positive".into());
        }
        let m = &self.models;
        if !(0.0..=1.0).contains(&m.p_max) {
            return cfg("models.p_max must lie in [0, 1]".into());
        }
        if !(m.crossing_window[0] > 0.0 && m.crossing_window[1] > m.crossing_window[0]) {
            return cfg("models.crossing_window must be increasing and positive".into());
        }
        if !(m.plateau_window[0] > 0.0 && m.plateau_window[1] > m.plateau_window[0]) {
            return cfg("models.plateau_window must be increasing and positive".into());
        }
        if m.crossing_levels.contains(&0) {
            return cfg("models.crossing_levels must be positive".into());
        }
        if !(self.tolerance.unitarity > 0.0 && self.tolerance.symmetry > 0.0) {
            return cfg("tolerances must be positive".into());
        }
        Ok(())
    }

    pub fn masses(&self) -> Result<MassSet> {
        build_mass_set(self.mass.p, self.mass.mu, self.mass.o).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn units(&self) -> UnitSystem {
        UnitSystem { density_cm3: self.units.density_cm3, ..UnitSystem::default() }
    }

    pub fn variants(&self) -> Vec<Variant> {
        match self.potential.variant {
            Some(v) => vec![v],
            None => vec![Variant::Coulomb, Variant::ThomasFermi],
        }
    }

    pub fn model(&self, variant: Variant) -> Result<PotentialModel> {
        Ok(PotentialModel::new(variant, self.potential.z, self.masses()?))
    }

    pub fn grid_spec(&self) -> SectorGridSpec {
        let g = &self.grid;
        SectorGridSpec {
            rho_start: g.rho_start,
            rho_end: g.rho_end,
            ratio: g.ratio,
            max_defect: g.max_defect,
            min_relative_step: g.min_relative_step,
            n_channels: self.basis.n_channels,
            buffer: g.buffer,
        }
    }

    pub fn step_control(&self) -> StepControl {
        let p = &self.propagation;
        StepControl {
            min_steps_per_sector: p.min_steps_per_sector,
            steps_per_wavelength: p.steps_per_wavelength,
            stabilization_threshold: p.stabilization_threshold,
            refine: 1.0,
        }
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        super::sha256_hex(self.to_toml_string().as_bytes())
    }
}

/// Provenance of every leaf key, given the raw text the config came from
/// (None when no file was read).
pub fn provenance(raw: Option<&str>) -> Result<Vec<(String, Provenance)>> {
    let user: toml::Table = match raw {
        Some(s) => toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?,
        None => toml::Table::new(),
    };
    let mut full: toml::Table = toml::from_str(&RunConfig::default().to_toml_string()).expect("defaults round-trip");
    // variant is omitted from the default form
    if let Some(toml::Value::Table(p)) = full.get_mut("potential") {
        p.entry("variant").or_insert(toml::Value::String("both".into()));
    }
    let mut out = Vec::new();
    for (section, value) in &full {
        let toml::Value::Table(t) = value else { continue };
        for key in t.keys() {
            let path = format!("{section}.{key}");
            let given = user.get(section).and_then(|v| v.as_table()).is_some_and(|u| u.contains_key(key));
            let p = if given {
                Provenance::User
            } else if PUBLISHED_DEFAULTS.contains(&path.as_str()) {
                Provenance::PublishedDefault
            } else {
                Provenance::EngineeringDefault
            };
            out.push((path, p));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut c = RunConfig::ci_profile();
        c.potential.variant = Some(Variant::ThomasFermi);
        c.mass.o = 29148.951234567891;
        c.scan.energies = "1e-3:10:7_LIN".parse().unwrap();
        let s = c.to_toml_string();
        let back = RunConfig::from_toml_str(&s).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml_string(), s);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn spec_keys_parse() {
        let c = RunConfig::from_toml_str(
            "[mass]\np = 1836.0\nmu = 206.0\nO = 29000.0\n[units]\ndensity_cm3 = 4.0e22\n[potential]\nvariant = \"tf\"\nZ = 8\n",
        )
        .unwrap();
        assert_eq!(c.potential.variant, Some(Variant::ThomasFermi));
        assert_eq!(c.mass.o, 29000.0);
        assert!(RunConfig::from_toml_str("[mass]\nq = 1.0\n").unwrap_err().is_config());
        assert!(RunConfig::from_toml_str("[mass]\np = -1.0\n").unwrap_err().is_config());
    }

    #[test]
    fn grid_specs() {
        let g: GridSpec = "0.05:40:200_LOG".parse().unwrap();
        let v = g.values();
        assert_eq!(v.len(), 200);
        assert_eq!(v[0], 0.05);
        assert_eq!(v[199], 40.0);
        let l: GridSpec = "0:1:5_LIN".parse().unwrap();
        assert_eq!(l.values(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!("0:1:5_LOG".parse::<GridSpec>().is_err());
        assert!("1:2".parse::<GridSpec>().is_err());
    }

    #[test]
    fn provenance_marks_user_keys() {
        let p = provenance(Some("[basis]\nn_l = 200\n")).unwrap();
        let get = |k: &str| p.iter().find(|(n, _)| n == k).unwrap().1;
        assert_eq!(get("basis.n_l"), Provenance::User);
        assert_eq!(get("basis.n_channels"), Provenance::PublishedDefault);
        assert_eq!(get("grid.ratio"), Provenance::EngineeringDefault);
        assert_eq!(get("potential.variant"), Provenance::EngineeringDefault);
    }
}
