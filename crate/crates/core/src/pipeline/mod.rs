//! End-to-end runs: sector construction, energy scans, reduced models,
//! rates, CSV and plot-script output and the run manifest.

pub mod cache;
pub mod config;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::asymptotics::{
    build_channel_table, fit_entrance_tail, match_and_extract, reference_set, EntranceTail, ScatteringResult, TailShape,
};
use crate::constants::{hartree_to_ev, MassSet};
use crate::error::{Error, Result};
use crate::models::{extract_crossing, landau_zener_total, LandauZenerCrossing, TransmittanceModel};
use crate::potential::{PotentialModel, TailForm, Variant};
use crate::propagator::{build_sectors, propagate, PropagateOptions, SectorGridSpec, SectorSet, StepControl};
use crate::rates::{rate_scan, RateCurve, RateSource};
use crate::surface::{adiabatic_curve_scan, Arrangement, ChannelLabel, CurveTable, SurfaceSolver};
pub use config::{CachePolicy, GridSpec, Provenance, RunConfig};

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn stage<T>(name: &str, energy: Option<f64>, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage { stage: name.to_string(), energy, source: Box::new(e) },
    })
}

/// Sector set, entrance tail and stepping options for one interaction model.
#[derive(Debug, Clone)]
pub struct Engine {
    pub model: PotentialModel,
    pub sectors: SectorSet,
    pub tail: EntranceTail,
    pub options: PropagateOptions,
    /// True when the sectors came from the cache.
    pub cache_hit: bool,
}

/// Where an engine may cache its sectors.
#[derive(Debug, Clone)]
pub struct CacheSettings {
    pub dir: PathBuf,
    pub policy: CachePolicy,
}

impl Engine {
    pub fn build(
        model: PotentialModel,
        n_l: usize,
        spec: &SectorGridSpec,
        control: StepControl,
        cache: Option<&CacheSettings>,
    ) -> Result<Self> {
        let solver = SurfaceSolver::new(model, n_l)?;
        let path = cache
            .filter(|c| c.policy != CachePolicy::Off)
            .map(|c| (c, cache::path_for(&c.dir, &cache::sector_key(&model, n_l, spec))));
        let cached = path.as_ref().filter(|(c, _)| c.policy == CachePolicy::ReadWrite).and_then(|(_, p)| cache::load(p));
        let cache_hit = cached.is_some();
        let sectors = match cached {
            Some(s) => s,
            None => {
                let s = build_sectors(&solver, spec)?;
                if let Some((_, p)) = &path {
                    cache::store(p, &s)?;
                }
                s
            }
        };
        let tail = fit_tail(&model, n_l, spec.rho_end, spec.n_channels)?;
        let options = PropagateOptions { control, ..PropagateOptions::default() };
        Ok(Self { model, sectors, tail, options, cache_hit })
    }

    /// Full close-coupling solution at collision energy `energy_ev`.
    pub fn scatter(&self, energy_ev: f64) -> Result<ScatteringResult> {
        if !(energy_ev > 0.0) {
            return Err(Error::Domain(format!("collision energy must be positive, got {energy_ev}")));
        }
        let rho_end = self.sectors.spec.rho_end;
        let set = &self.sectors;
        let table = build_channel_table(energy_ev, &self.model, &set.final_energies, &set.final_pmu_weight, rho_end)?;
        let state = propagate(table.total_energy, set, &self.options)?;
        let refs = reference_set(&table, &self.tail, rho_end)?;
        match_and_extract(&state, &table, &refs, self.model.masses.m_scaled)
    }
}

/// Entrance tail: C2 from the bare-Coulomb curves (the dipole coefficient
/// of the unscreened field), shape from the model.
pub fn fit_tail(model: &PotentialModel, n_l: usize, rho_end: f64, n_keep: usize) -> Result<EntranceTail> {
    let coulomb = SurfaceSolver::new(PotentialModel::new(Variant::Coulomb, model.z, model.masses), n_l)?;
    let radii: Vec<f64> = [0.5, 2.0 / 3.0, 5.0 / 6.0, 1.0].iter().map(|f| f * rho_end).collect();
    let (c2, c3) = fit_entrance_tail(&coulomb, &radii, n_keep)?;
    let shape = match model.variant {
        Variant::Coulomb => TailShape::InverseSquare,
        Variant::ThomasFermi => TailShape::ScreenedField { model: *model },
    };
    Ok(EntranceTail { c2, c3, shape, m_scaled: model.masses.m_scaled })
}

/// Transfer probabilities at one energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    pub energy_ev: f64,
    pub total: f64,
    /// (n, P) for every open (mu O)(n) channel.
    pub muo: Vec<(u32, f64)>,
    pub unitarity_defect: f64,
    pub symmetry_defect: f64,
    pub k_asymmetry: f64,
    pub matching_residual: f64,
}

impl EnergyPoint {
    pub fn from_result(energy_ev: f64, r: &ScatteringResult) -> Self {
        let mut muo: Vec<(u32, f64)> = r
            .table
            .channels
            .iter()
            .zip(&r.probabilities)
            .filter(|(c, _)| c.open && c.label.arrangement == Arrangement::Muo)
            .map(|(c, &p)| (c.label.n, p))
            .collect();
        muo.sort_by_key(|&(n, _)| n);
        Self {
            energy_ev,
            total: r.total_transfer(),
            muo,
            unitarity_defect: r.unitarity_defect,
            symmetry_defect: r.symmetry_defect,
            k_asymmetry: r.k_asymmetry,
            matching_residual: r.matching_residual,
        }
    }

    pub fn muo(&self, n: u32) -> f64 {
        self.muo.iter().find(|&&(k, _)| k == n).map(|&(_, p)| p).unwrap_or(0.0)
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Scans energies on a bounded worker pool; results keep the input order.
pub fn scan_energies(engine: &Engine, energies: &[f64], threads: usize) -> Result<Vec<EnergyPoint>> {
    let name = format!("scatter-{}", engine.model.variant);
    pool(threads)?.install(|| {
        energies
            .par_iter()
            .map(|&e| stage(&name, Some(e), engine.scatter(e).map(|r| EnergyPoint::from_result(e, &r))))
            .collect()
    })
}

/// Mean total probability over the energies inside `window`.
pub fn plateau(points: &[EnergyPoint], window: [f64; 2]) -> Option<f64> {
    let v: Vec<f64> =
        points.iter().filter(|p| p.energy_ev >= window[0] && p.energy_ev <= window[1]).map(|p| p.total).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Crossing parameters consumed by the reduced models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferCrossings {
    pub outer: LandauZenerCrossing,
    pub inner: LandauZenerCrossing,
    /// Physical (p mu)-O distance of the outer crossing, the core radius R0.
    pub r0: f64,
}

/// Locates the pmu(1) crossings with (mu O)(levels[0]) and (mu O)(levels[1])
/// in the bare-Coulomb curves. Below the crossing with (mu O)(n) the
/// adiabatic states 0..n-1 are (mu O)(1..n-1), so the pair is (n-1, n).
pub fn transfer_crossings(masses: MassSet, z: f64, n_l: usize, levels: [u32; 2], window: [f64; 2]) -> Result<TransferCrossings> {
    let solver = SurfaceSolver::new(PotentialModel::new(Variant::Coulomb, z, masses), n_l)?;
    let find = |n: u32| extract_crossing(&solver, n as usize - 1, window[0], window[1], 60);
    let outer = find(levels[0])?;
    let inner = find(levels[1])?;
    Ok(TransferCrossings { outer, inner, r0: masses.entrance_physical(outer.rho_c) })
}

/// One row of the reduced-model table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub energy_ev: f64,
    pub p_lz: f64,
    pub t2_coulomb: f64,
    pub t2_tf: f64,
    pub p_sim_tf: f64,
    pub p_3d: f64,
}

/// Reduced models on an energy grid. `p_max` scales the 3D estimate,
/// `p_max_tf` the screened colinear factorization.
pub fn model_table(
    masses: MassSet,
    z: f64,
    crossings: &TransferCrossings,
    energies: &[f64],
    p_max: f64,
    p_max_tf: f64,
) -> Result<Vec<ModelRow>> {
    let c = PotentialModel::new(Variant::Coulomb, z, masses);
    let tf = PotentialModel::new(Variant::ThomasFermi, z, masses);
    let t_c = TransmittanceModel::new(c, crossings.r0, TailForm::ColinearDipole);
    let t_tf = TransmittanceModel::new(tf, crossings.r0, TailForm::ColinearDipole);
    let t_3d = TransmittanceModel::new(tf, crossings.r0, TailForm::Polarization);
    let threshold = masses.pmu_level(1);
    energies
        .iter()
        .map(|&e| {
            let lz = landau_zener_total(e, threshold, &crossings.outer, &crossings.inner)?.total();
            let tc = t_c.transmittance(e)?.t;
            let tt = t_tf.transmittance(e)?.t;
            let t3 = t_3d.transmittance(e)?.t;
            Ok(ModelRow {
                energy_ev: e,
                p_lz: lz,
                t2_coulomb: tc * tc,
                t2_tf: tt * tt,
                p_sim_tf: crate::models::factorized_probability(tt, p_max_tf)?,
                p_3d: crate::models::factorized_probability(t3, p_max)?,
            })
        })
        .collect()
}

/// Which parts of a run to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub zstar: bool,
    pub curves: bool,
    pub coulomb: bool,
    pub tf: bool,
    pub models: bool,
    pub rates: bool,
}

impl Stages {
    pub fn all() -> Self {
        Self { zstar: true, curves: true, coulomb: true, tf: true, models: true, rates: true }
    }

    /// Stages behind one figure (1 = Z*, 2 = curves, 3 = Coulomb, 4 = TF,
    /// 5 = reduced models, 6 = rates).
    pub fn for_figure(n: u8) -> Result<Self> {
        let none = Self { zstar: false, curves: false, coulomb: false, tf: false, models: false, rates: false };
        Ok(match n {
            1 => Self { zstar: true, ..none },
            2 => Self { curves: true, ..none },
            3 => Self { coulomb: true, ..none },
            4 => Self { tf: true, models: true, ..none },
            5 => Self { models: true, ..none },
            6 => Self { coulomb: true, tf: true, models: true, rates: true, ..none },
            _ => return Err(Error::Config(format!("unknown figure {n}; expected 1-6"))),
        })
    }
}

/// Files written by a run, staged under `.partial` names until the run
/// completes.
struct Outputs {
    dir: PathBuf,
    written: Vec<(String, usize)>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn partial(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.partial"))
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        fs::write(self.partial(name), text)?;
        self.written.push((name.to_string(), text.len()));
        Ok(())
    }

    fn commit(self) -> Result<Vec<OutputFile>> {
        let mut index = Vec::new();
        for (name, bytes) in &self.written {
            let (name, bytes) = (name.clone(), *bytes);
            let from = self.partial(&name);
            let data = fs::read(&from)?;
            fs::rename(&from, self.dir.join(&name))?;
            index.push(OutputFile { name, bytes, sha256: sha256_hex(&data) });
        }
        Ok(index)
    }
}

fn csv_header(title: &str, hash: &str, units: &[&str]) -> String {
    let mut s = format!("# {title}\n# config_hash = {hash}\n# code_version = {}\n", env!("CARGO_PKG_VERSION"));
    for u in units {
        let _ = writeln!(s, "# {u}");
    }
    s
}

pub fn zstar_csv(model: &PotentialModel, grid: &GridSpec, hash: &str) -> Result<String> {
    let tf = PotentialModel::new(Variant::ThomasFermi, model.z, model.masses);
    let mut s = csv_header("effective charge", hash, &["d in bohr; Z* dimensionless; Z*_field = Z*(d) - d dZ*/dd"]);
    s.push_str("d_bohr,Zstar_coulomb,Zstar_tf,Zstar_field_tf\n");
    for d in grid.values() {
        let (q, dq) = tf.charge_and_slope(d);
        let _ = writeln!(s, "{d:.10e},{:.10e},{q:.10e},{:.10e}", model.z, q - d * dq);
    }
    Ok(s)
}

pub fn curves_csv(table: &CurveTable, hash: &str) -> String {
    let labels: Vec<String> = table.track_labels.iter().map(ChannelLabel::to_string).collect();
    let mut s = csv_header(
        "adiabatic energies",
        hash,
        &["rho in mass-scaled bohr; eps in eV, adiabatic order", &format!("labels at the last rho: {}", labels.join(" "))],
    );
    s.push_str("rho");
    for i in 1..=labels.len() {
        let _ = write!(s, ",eps_{i}");
    }
    s.push('\n');
    for (rho, e) in table.rho.iter().zip(&table.energies) {
        let _ = write!(s, "{rho:.10e}");
        for &x in e {
            let _ = write!(s, ",{:.12e}", hartree_to_ev(x));
        }
        s.push('\n');
    }
    for d in &table.diagnostics {
        let _ = writeln!(s, "# diagnostic: {d}");
    }
    s
}

pub fn probabilities_csv(variant: Variant, points: &[EnergyPoint], hash: &str) -> String {
    let mut s = csv_header(&format!("transfer probabilities, {variant} model"), hash, &["E in eV"]);
    s.push_str("E_eV,P_n5,P_n6,P_total,unitarity_defect\n");
    for p in points {
        let _ = writeln!(
            s,
            "{:.10e},{:.10e},{:.10e},{:.10e},{:.3e}",
            p.energy_ev,
            p.muo(5),
            p.muo(6),
            p.total,
            p.unitarity_defect
        );
    }
    s
}

pub fn models_csv(rows: &[ModelRow], hash: &str, notes: &[String]) -> String {
    let notes: Vec<&str> = notes.iter().map(String::as_str).collect();
    let mut units = vec!["E in eV"];
    units.extend(notes);
    let mut s = csv_header("reduced models", hash, &units);
    s.push_str("E_eV,P_LZ,T2_coulomb,T2_tf,P_sim_tf,P_3D\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
            r.energy_ev, r.p_lz, r.t2_coulomb, r.t2_tf, r.p_sim_tf, r.p_3d
        );
    }
    s
}

pub fn rates_csv(curves: &[RateCurve], hash: &str, density: f64) -> String {
    let mut s = csv_header("transfer rates", hash, &["E in eV; sigma in cm^2; lambda in 1/s", &format!("density = {density:e} cm^-3")]);
    s.push_str("E_eV,sigma_cm2,lambda_per_s,source,s_wave_valid\n");
    for c in curves {
        for i in 0..c.energy_ev.len() {
            let _ = writeln!(
                s,
                "{:.10e},{:.10e},{:.10e},{},{}",
                c.energy_ev[i], c.sigma_cm2[i], c.lambda_per_s[i], c.source, c.s_wave_valid[i]
            );
        }
    }
    s
}

fn plot_script(csv: &str, title: &str, xlabel: &str, ylabel: &str, logy: bool, series: &[(usize, usize, &str)]) -> String {
    let mut s = format!(
        "# gnuplot script for {csv}\nset datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n\
         set logscale x\n{}set xlabel '{xlabel}'\nset ylabel '{ylabel}'\nset title '{title}'\n",
        if logy { "set logscale y\n" } else { "" }
    );
    let plots: Vec<String> =
        series.iter().map(|(x, y, t)| format!("'{csv}' every ::1 using {x}:{y} with linespoints title '{t}'")).collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

/// Output file entry of the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub n_sectors: usize,
    pub max_defect: f64,
    pub forced_sectors: usize,
    pub cache_hit: bool,
    pub c2: f64,
    pub c3: f64,
    pub max_unitarity_defect: f64,
    pub max_symmetry_defect: f64,
    pub max_k_asymmetry: f64,
    pub plateau: Option<f64>,
    /// Energies whose unitarity or symmetry defect exceeds the tolerance.
    pub tolerance_violations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingSummary {
    pub rho_c: f64,
    pub gap_ev: f64,
    pub h12: f64,
    pub delta_f: f64,
}

impl From<&LandauZenerCrossing> for CrossingSummary {
    fn from(c: &LandauZenerCrossing) -> Self {
        Self { rho_c: c.rho_c, gap_ev: hartree_to_ev(2.0 * c.h12), h12: c.h12, delta_f: c.delta_f }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub models: BTreeMap<String, ModelSummary>,
    pub outer_crossing: Option<CrossingSummary>,
    pub inner_crossing: Option<CrossingSummary>,
    pub r0_bohr: Option<f64>,
    pub p_max: Option<f64>,
    pub p_max_source: Option<String>,
    pub p_max_tf: Option<f64>,
    pub curve_diagnostics: Vec<String>,
    /// Energies are independent tasks and every reduction runs in a fixed
    /// sequential order, so outputs do not depend on the thread count.
    pub reduction_order: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub stage_seconds: BTreeMap<String, f64>,
    pub diagnostics: Diagnostics,
    pub outputs: Vec<OutputFile>,
    pub provenance: BTreeMap<String, Provenance>,
    pub config: RunConfig,
}

pub const MANIFEST_NAME: &str = "manifest.toml";

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let s = fs::read_to_string(dir.join(MANIFEST_NAME))?;
        toml::from_str(&s).map_err(|e| Error::Config(format!("manifest: {e}")))
    }
}

/// Options of a run beyond the config itself.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub stages: Stages,
    /// Raw config text, for provenance.
    pub raw_config: Option<String>,
    /// Cache directory; None disables caching.
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { stages: Stages::all(), raw_config: None, cache_dir: cache::dir_from_env() }
    }
}

/// Runs the configured stages and writes CSVs, plot scripts and the
/// manifest into the output directory. On failure the files written so
/// far stay behind with a `.partial` suffix and no manifest is written.
pub fn run_scan(cfg: &RunConfig, opts: &RunOptions) -> Result<RunManifest> {
    stage("config", None, cfg.validate())?;
    let hash = cfg.hash();
    let masses = cfg.masses()?;
    let st = opts.stages;
    let mut out = Outputs::new(&cfg.output.dir)?;
    let mut times = BTreeMap::new();
    let mut diag = Diagnostics {
        reduction_order: "energies independent, sequential reductions per energy".into(),
        ..Diagnostics::default()
    };
    let variants = cfg.variants();
    let threads = cfg.output.threads;
    let energies = cfg.scan.energies.values();
    let cache = opts.cache_dir.clone().map(|dir| CacheSettings { dir, policy: cfg.output.cache });
    let base = cfg.model(variants[0])?;

    if st.zstar {
        let t = Instant::now();
        out.write("zstar.csv", &stage("zstar", None, zstar_csv(&base, &cfg.scan.zstar, &hash))?)?;
        out.write("fig1.gp", &plot_script("zstar.csv", "effective charge", "d (bohr)", "Z*", false, &[(1, 2, "coulomb"), (1, 3, "TF"), (1, 4, "TF field")]))?;
        times.insert("zstar".into(), t.elapsed().as_secs_f64());
    }

    if st.curves {
        let t = Instant::now();
        let mut notes = Vec::new();
        for &v in &variants {
            let solver = stage("curves", None, SurfaceSolver::new(cfg.model(v)?, cfg.basis.n_l))?;
            let table = stage("curves", None, adiabatic_curve_scan(&cfg.scan.curves.values(), &solver, cfg.scan.curve_states))?;
            notes.extend(table.diagnostics.iter().map(|d| format!("{v}: {d}")));
            let name = format!("curves_{v}.csv");
            out.write(&name, &curves_csv(&table, &hash))?;
            let series: Vec<(usize, usize, &str)> = (2..=table.track_labels.len() + 1).map(|c| (1, c, "")).collect();
            let mut script = plot_script(&name, &format!("adiabatic curves, {v}"), "rho (mass-scaled bohr)", "energy (eV)", false, &series);
            script = script.replace("title ''", "notitle");
            out.write(&format!("fig2_{v}.gp"), &script)?;
        }
        diag.curve_diagnostics = notes;
        times.insert("curves".into(), t.elapsed().as_secs_f64());
    }

    let mut scans: BTreeMap<Variant, Vec<EnergyPoint>> = BTreeMap::new();
    for &v in &variants {
        let wanted = match v {
            Variant::Coulomb => st.coulomb,
            Variant::ThomasFermi => st.tf,
        };
        if !wanted {
            continue;
        }
        let t = Instant::now();
        let engine = stage(&format!("sectors-{v}"), None, Engine::build(cfg.model(v)?, cfg.basis.n_l, &cfg.grid_spec(), cfg.step_control(), cache.as_ref()))?;
        times.insert(format!("sectors-{v}"), t.elapsed().as_secs_f64());
        let t = Instant::now();
        let points = scan_energies(&engine, &energies, threads)?;
        times.insert(format!("scatter-{v}"), t.elapsed().as_secs_f64());
        let tol = &cfg.tolerance;
        let summary = ModelSummary {
            n_sectors: engine.sectors.sectors.len(),
            max_defect: engine.sectors.max_defect(),
            forced_sectors: engine.sectors.forced,
            cache_hit: engine.cache_hit,
            c2: engine.tail.c2,
            c3: engine.tail.c3,
            max_unitarity_defect: points.iter().map(|p| p.unitarity_defect).fold(0.0, f64::max),
            max_symmetry_defect: points.iter().map(|p| p.symmetry_defect).fold(0.0, f64::max),
            max_k_asymmetry: points.iter().map(|p| p.k_asymmetry).fold(0.0, f64::max),
            plateau: plateau(&points, cfg.models.plateau_window),
            tolerance_violations: points
                .iter()
                .filter(|p| p.unitarity_defect > tol.unitarity || p.symmetry_defect > tol.symmetry)
                .map(|p| p.energy_ev)
                .collect(),
        };
        for e in &summary.tolerance_violations {
            eprintln!("warning: {v} model exceeds the unitarity/symmetry tolerance at E = {e:e} eV");
        }
        diag.models.insert(v.to_string(), summary);
        let name = format!("probabilities_{v}.csv");
        out.write(&name, &probabilities_csv(v, &points, &hash))?;
        let fig = if v == Variant::Coulomb { 3 } else { 4 };
        out.write(
            &format!("fig{fig}.gp"),
            &plot_script(&name, &format!("transfer probability, {v}"), "E (eV)", "P", false, &[(1, 2, "n=5"), (1, 3, "n=6"), (1, 4, "total")]),
        )?;
        scans.insert(v, points);
    }

    let mut model_rows = Vec::new();
    if st.models {
        let t = Instant::now();
        let crossings = stage(
            "crossings",
            None,
            transfer_crossings(masses, cfg.potential.z, cfg.basis.n_l, cfg.models.crossing_levels, cfg.models.crossing_window),
        )?;
        let coulomb_plateau = scans.get(&Variant::Coulomb).and_then(|p| plateau(p, cfg.models.plateau_window));
        let (p_max, source) = match coulomb_plateau {
            Some(p) => (p, "coulomb multichannel plateau".to_string()),
            None => (cfg.models.p_max, "models.p_max".to_string()),
        };
        let p_max_tf = scans.get(&Variant::ThomasFermi).and_then(|p| plateau(p, cfg.models.plateau_window)).unwrap_or(p_max);
        model_rows = stage("models", None, model_table(masses, cfg.potential.z, &crossings, &energies, p_max, p_max_tf))?;
        diag.outer_crossing = Some((&crossings.outer).into());
        diag.inner_crossing = Some((&crossings.inner).into());
        diag.r0_bohr = Some(crossings.r0);
        diag.p_max = Some(p_max);
        diag.p_max_source = Some(source.clone());
        diag.p_max_tf = Some(p_max_tf);
        let notes = vec![
            format!("R0 = {:.6e} bohr", crossings.r0),
            format!("P_max = {p_max:.6} ({source}); P_max for P_sim_tf = {p_max_tf:.6}"),
        ];
        out.write("models.csv", &models_csv(&model_rows, &hash, &notes))?;
        out.write(
            "fig5.gp",
            &plot_script(
                "models.csv",
                "reduced models",
                "E (eV)",
                "P, |T|^2",
                false,
                &[(1, 2, "Landau-Zener"), (1, 3, "|T|^2 coulomb"), (1, 4, "|T|^2 TF"), (1, 5, "|T|^2 P_max (TF)"), (1, 6, "3D estimate")],
            ),
        )?;
        times.insert("models".into(), t.elapsed().as_secs_f64());
    }

    if st.rates {
        let t = Instant::now();
        let units = cfg.units();
        let mut curves = Vec::new();
        let mut add = |p: Vec<f64>, src: RateSource| -> Result<()> {
            curves.push(stage("rates", None, rate_scan(&energies, &p, src, &masses, &units))?);
            Ok(())
        };
        if let Some(p) = scans.get(&Variant::Coulomb) {
            add(p.iter().map(|x| x.total.clamp(0.0, 1.0)).collect(), RateSource::MultichannelCoulomb)?;
        }
        if let Some(p) = scans.get(&Variant::ThomasFermi) {
            add(p.iter().map(|x| x.total.clamp(0.0, 1.0)).collect(), RateSource::MultichannelTf)?;
        }
        if !model_rows.is_empty() {
            add(model_rows.iter().map(|r| r.p_3d).collect(), RateSource::Estimate3d)?;
            add(model_rows.iter().map(|r| r.p_lz).collect(), RateSource::LandauZener)?;
        }
        add(vec![1.0; energies.len()], RateSource::UnitProbability)?;
        out.write("rates.csv", &rates_csv(&curves, &hash, units.density_cm3))?;
        let mut script = format!(
            "# gnuplot script for rates.csv\nset datafile separator ','\nset datafile commentschars '#'\nset logscale xy\n\
             set xlabel 'E (eV)'\nset ylabel 'lambda (1/s)'\nset title 'transfer rate'\nplot "
        );
        let plots: Vec<String> = curves
            .iter()
            .map(|c| format!("'rates.csv' every ::1 using 1:(strcol(4) eq '{0}' ? $3 : 1/0) with lines title '{0}'", c.source))
            .collect();
        script.push_str(&plots.join(", \\\n     "));
        script.push('\n');
        out.write("fig6.gp", &script)?;
        times.insert("rates".into(), t.elapsed().as_secs_f64());
    }

    let outputs = out.commit()?;
    let provenance = config::provenance(opts.raw_config.as_deref())?.into_iter().collect();
    let manifest = RunManifest {
        config_hash: hash,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        stage_seconds: times,
        diagnostics: diag,
        outputs,
        provenance,
        config: cfg.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    cache::write_atomic(&cfg.output.dir.join(MANIFEST_NAME), text.as_bytes())?;
    Ok(manifest)
}

/// Per-state relative errors of the surface energies against a reference
/// basis size.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub n_ls: Vec<usize>,
    pub n_ref: usize,
    pub rows: Vec<ConvergenceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub rho: f64,
    pub label: ChannelLabel,
    pub reference: f64,
    /// One entry per basis size; None when the label is not found.
    pub rel_error: Vec<Option<f64>>,
}

impl ConvergenceTable {
    /// States with relative error below `tol`, per (rho, basis size).
    pub fn count_below(&self, rho: f64, n_l: usize, tol: f64) -> usize {
        let Some(j) = self.n_ls.iter().position(|&n| n == n_l) else { return 0 };
        self.rows.iter().filter(|r| r.rho == rho && r.rel_error[j].is_some_and(|e| e < tol)).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,state,E_ref_eV");
        for n in &self.n_ls {
            let _ = write!(s, ",relerr_nl{n}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:.6e},{},{:.12e}", r.rho, r.label, hartree_to_ev(r.reference));
            for e in &r.rel_error {
                match e {
                    Some(e) => {
                        let _ = write!(s, ",{e:.3e}");
                    }
                    None => s.push_str(",nan"),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Surface-state convergence study; states are compared by label.
pub fn convergence_report(model: &PotentialModel, n_ls: &[usize], n_ref: usize, rhos: &[f64], n_states: usize) -> Result<ConvergenceTable> {
    if n_ls.is_empty() || rhos.is_empty() || n_states == 0 {
        return Err(Error::InvalidInput("convergence study needs basis sizes, radii and states".into()));
    }
    let reference = SurfaceSolver::new(*model, n_ref)?;
    let solvers: Vec<SurfaceSolver> = n_ls.iter().map(|&n| SurfaceSolver::new(*model, n)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &rho in rhos {
        let keep = n_states.min(n_ref);
        let r = reference.solve(rho, keep)?;
        let trial: Vec<_> = solvers.iter().map(|s| s.solve(rho, (keep + 10).min(s.n_l))).collect::<Result<_>>()?;
        for (i, label) in r.labels().into_iter().enumerate() {
            let e_ref = r.energies[i];
            let rel_error = trial
                .iter()
                .map(|b| b.find(label).map(|k| ((b.energies[k] - e_ref) / e_ref).abs()))
                .collect();
            rows.push(ConvergenceRow { rho, label, reference: e_ref, rel_error });
        }
    }
    Ok(ConvergenceTable { n_ls: n_ls.to_vec(), n_ref, rows })
}
