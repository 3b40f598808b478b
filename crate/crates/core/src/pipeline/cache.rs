//! On-disk cache of sector sets, keyed by everything that determines them.

use nalgebra::DMatrix;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::constants::MassSet;
use crate::error::{Error, Result};
use crate::potential::PotentialModel;
use crate::propagator::{Sector, SectorGridSpec, SectorSet};

pub const CACHE_DIR_ENV: &str = "MUTRANSFER_CACHE_DIR";
const MAGIC: &[u8; 8] = b"MUTSEC02";

/// Cache key for a sector set.
pub fn sector_key(model: &PotentialModel, n_l: usize, spec: &SectorGridSpec) -> String {
    let m = &model.masses;
    let text = format!(
        "v1|{}|{:e}|{:e}|{:e}|{:e}|{:e}|{}|{:e}|{:e}|{:e}|{:e}|{:e}|{}|{}",
        model.variant,
        model.z,
        model.screening_length,
        m.m_p,
        m.m_mu,
        m.m_o,
        n_l,
        spec.rho_start,
        spec.rho_end,
        spec.ratio,
        spec.max_defect,
        spec.min_relative_step,
        spec.n_channels,
        spec.buffer
    );
    super::sha256_hex(text.as_bytes())
}

/// Directory from the environment, if set.
pub fn dir_from_env() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV).filter(|s| !s.is_empty()).map(PathBuf::from)
}

pub fn path_for(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("sectors-{key}.bin"))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn vec(&mut self, v: &[f64]) {
        self.u64(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn mat(&mut self, m: &DMatrix<f64>) {
        self.u64(m.nrows());
        self.u64(m.ncols());
        m.as_slice().iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.0.len() < n {
            return Err(Error::Config("truncated sector cache file".into()));
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }
    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn vec(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn mat(&mut self) -> Result<DMatrix<f64>> {
        let (r, c) = (self.u64()?, self.u64()?);
        let data: Vec<f64> = (0..r * c).map(|_| self.f64()).collect::<Result<_>>()?;
        Ok(DMatrix::from_vec(r, c, data))
    }
}

pub fn encode(set: &SectorSet) -> Vec<u8> {
    let mut w = Writer(MAGIC.to_vec());
    let s = &set.spec;
    for v in [s.rho_start, s.rho_end, s.ratio, s.max_defect, s.min_relative_step] {
        w.f64(v);
    }
    w.u64(s.n_channels);
    w.u64(s.buffer);
    w.u64(set.n_l);
    let m = &set.masses;
    for v in [m.m_p, m.m_mu, m.m_o] {
        w.f64(v);
    }
    w.u64(set.forced);
    w.vec(&set.final_energies);
    w.vec(&set.final_pmu_weight);
    w.mat(&set.final_transform);
    w.u64(set.sectors.len());
    for sec in &set.sectors {
        for v in [sec.lo, sec.hi, sec.center, sec.defect] {
            w.f64(v);
        }
        w.vec(&sec.energies);
        w.vec(&sec.pmu_weight);
        w.mat(&sec.kinetic);
        sec.scaled_potential.iter().for_each(|p| w.mat(p));
        w.mat(&sec.entry);
    }
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<SectorSet> {
    let mut r = Reader(bytes);
    if r.take(8)? != MAGIC {
        return Err(Error::Config("not a sector cache file".into()));
    }
    let mut f = [0.0; 5];
    for v in &mut f {
        *v = r.f64()?;
    }
    let spec = SectorGridSpec {
        rho_start: f[0],
        rho_end: f[1],
        ratio: f[2],
        max_defect: f[3],
        min_relative_step: f[4],
        n_channels: r.u64()?,
        buffer: r.u64()?,
    };
    let n_l = r.u64()?;
    let masses: MassSet = crate::constants::build_mass_set(r.f64()?, r.f64()?, r.f64()?)?;
    let forced = r.u64()?;
    let final_energies = r.vec()?;
    let final_pmu_weight = r.vec()?;
    let final_transform = r.mat()?;
    let n = r.u64()?;
    let mut sectors = Vec::with_capacity(n);
    for _ in 0..n {
        let (lo, hi, center, defect) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        sectors.push(Sector {
            lo,
            hi,
            center,
            defect,
            energies: r.vec()?,
            pmu_weight: r.vec()?,
            kinetic: r.mat()?,
            scaled_potential: [r.mat()?, r.mat()?, r.mat()?],
            entry: r.mat()?,
        });
    }
    if !r.0.is_empty() {
        return Err(Error::Config("trailing bytes in sector cache file".into()));
    }
    Ok(SectorSet { spec, n_l, masses, sectors, final_energies, final_pmu_weight, final_transform, forced })
}

/// Loads a cached set, treating unreadable or corrupt files as misses.
pub fn load(path: &Path) -> Option<SectorSet> {
    let mut bytes = Vec::new();
    fs::File::open(path).ok()?.read_to_end(&mut bytes).ok()?;
    decode(&bytes).ok()
}

/// Writes through a temporary file and a rename.
pub fn store(path: &Path, set: &SectorSet) -> Result<()> {
    write_atomic(path, &encode(set))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
