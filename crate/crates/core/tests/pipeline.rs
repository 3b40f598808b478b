use std::fs;
use std::path::Path;

use mutransfer::pipeline::cache::{path_for, sector_key};
use mutransfer::pipeline::{run_scan, CachePolicy, CacheSettings, Engine, RunConfig, RunManifest, RunOptions, Stages, MANIFEST_NAME};
use mutransfer::{MassSet, PotentialModel, Variant};

fn small_config(dir: &Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.basis.n_l = 100;
    c.grid.rho_end = 2.0;
    c.potential.variant = Some(Variant::Coulomb);
    c.scan.energies = "0.01:1:2_LOG".parse().unwrap();
    c.scan.curves = "0.1:2:6_LOG".parse().unwrap();
    c.scan.curve_states = 8;
    c.scan.zstar = "0.01:1:5_LOG".parse().unwrap();
    c.models.plateau_window = [1e-3, 10.0];
    c.output.dir = dir.to_path_buf();
    c.output.threads = 1;
    c
}

#[test]
fn cached_sectors_reproduce_uncached_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let model = PotentialModel::coulomb(MassSet::default());
    let spec = cfg.grid_spec();
    let settings = CacheSettings { dir: tmp.path().join("cache"), policy: CachePolicy::ReadWrite };
    let build = |s: &CacheSettings| Engine::build(model, 100, &spec, cfg.step_control(), Some(s)).unwrap();

    let cold = build(&settings);
    assert!(!cold.cache_hit);
    let file = path_for(&settings.dir, &sector_key(&model, 100, &spec));
    assert!(file.exists());
    let warm = build(&settings);
    assert!(warm.cache_hit);
    let a = cold.scatter(0.1).unwrap();
    let b = warm.scatter(0.1).unwrap();
    assert_eq!(a.probabilities, b.probabilities);
    assert_eq!(a.k_matrix, b.k_matrix);

    // a damaged file is a miss, then gets rewritten
    fs::write(&file, b"MUTSEC02 truncated").unwrap();
    let repaired = build(&settings);
    assert!(!repaired.cache_hit);
    assert_eq!(repaired.scatter(0.1).unwrap().probabilities, a.probabilities);
    assert!(build(&settings).cache_hit);

    let refresh = CacheSettings { policy: CachePolicy::Refresh, ..settings.clone() };
    assert!(!build(&refresh).cache_hit);

    let mut other = spec;
    other.n_channels = 25;
    assert_ne!(sector_key(&model, 100, &spec), sector_key(&model, 100, &other));
    assert_ne!(sector_key(&model, 100, &spec), sector_key(&model, 120, &spec));
    let tf = PotentialModel::thomas_fermi(MassSet::default());
    assert_ne!(sector_key(&model, 100, &spec), sector_key(&tf, 100, &spec));
}

#[test]
fn disabled_cache_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let settings = CacheSettings { dir: tmp.path().join("cache"), policy: CachePolicy::Off };
    let model = PotentialModel::coulomb(MassSet::default());
    let e = Engine::build(model, 100, &cfg.grid_spec(), cfg.step_control(), Some(&settings)).unwrap();
    assert!(!e.cache_hit);
    assert!(!settings.dir.exists());
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn run_writes_outputs_and_manifest_independent_of_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let one = tmp.path().join("one");
    let two = tmp.path().join("two");
    let raw = "[basis]\nn_l = 100\n";
    let opts = RunOptions { stages: Stages::all(), raw_config: Some(raw.into()), cache_dir: None };

    let cfg1 = small_config(&one);
    let m1 = run_scan(&cfg1, &opts).unwrap();
    let mut cfg2 = small_config(&two);
    cfg2.output.threads = 2;
    run_scan(&cfg2, &opts).unwrap();

    for name in ["zstar.csv", "curves_coulomb.csv", "probabilities_coulomb.csv", "models.csv", "rates.csv", "fig1.gp", "fig3.gp", "fig5.gp", "fig6.gp"] {
        let a = read(&one, name);
        assert!(a.starts_with('#'), "{name} has no header");
        if name.ends_with(".csv") {
            // identical apart from the config hash, which includes the thread count
            let strip = |s: &str| s.lines().filter(|l| !l.starts_with("# config_hash")).collect::<Vec<_>>().join("\n");
            assert_eq!(strip(&a), strip(&read(&two, name)), "{name} depends on the thread count");
        }
    }
    let probs = read(&one, "probabilities_coulomb.csv");
    assert!(probs.lines().any(|l| l == "E_eV,P_n5,P_n6,P_total,unitarity_defect"));
    assert_eq!(probs.lines().filter(|l| !l.starts_with('#')).count(), 3);
    assert!(read(&one, "models.csv").lines().any(|l| l == "E_eV,P_LZ,T2_coulomb,T2_tf,P_sim_tf,P_3D"));
    assert!(read(&one, "rates.csv").lines().any(|l| l == "E_eV,sigma_cm2,lambda_per_s,source,s_wave_valid"));
    assert!(fs::read_dir(&one).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".partial")));

    let back = RunManifest::load(&one).unwrap();
    assert_eq!(back, m1);
    assert_eq!(back.config_hash, cfg1.hash());
    assert_eq!(back.provenance["basis.n_l"], mutransfer::pipeline::Provenance::User);
    assert!(back.outputs.iter().any(|o| o.name == "models.csv" && o.sha256.len() == 64));
    let d = &back.diagnostics;
    assert!(d.outer_crossing.as_ref().unwrap().rho_c > d.inner_crossing.as_ref().unwrap().rho_c);
    assert!(d.models["coulomb"].max_unitarity_defect < 1e-3);
    assert!(one.join(MANIFEST_NAME).exists());
}

#[test]
fn figure_selection_runs_only_its_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let opts = RunOptions { stages: Stages::for_figure(1).unwrap(), raw_config: None, cache_dir: None };
    let m = run_scan(&cfg, &opts).unwrap();
    let names: Vec<&str> = m.outputs.iter().map(|o| o.name.as_str()).collect();
    assert_eq!(names, ["zstar.csv", "fig1.gp"]);
    assert!(Stages::for_figure(7).unwrap_err().is_config());
}

#[test]
fn invalid_config_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path());
    cfg.grid.rho_end = 0.01;
    let err = run_scan(&cfg, &RunOptions { cache_dir: None, ..RunOptions::default() }).unwrap_err();
    assert!(err.is_config(), "{err}");
    assert!(!tmp.path().join(MANIFEST_NAME).exists());
}
