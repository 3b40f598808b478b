use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use mutransfer::pipeline::{self, GridSpec, RunConfig, RunOptions, Stages};
use mutransfer::surface::SurfaceSolver;
use mutransfer::{Error, Variant};

#[derive(Parser)]
#[command(name = "mutransfer", version, about = "Muon transfer (p mu) + O -> p + (mu O) in hyperspherical close coupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scan described by a TOML config.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Only the stages behind one figure (1-6).
        #[arg(long)]
        figure: Option<u8>,
        /// coulomb or tf; overrides the config.
        #[arg(long)]
        potential: Option<Variant>,
        /// Energy grid LO:HI:N[_LOG|_LIN] in eV; overrides the config.
        #[arg(long)]
        energies: Option<GridSpec>,
        /// Start from the reduced CI profile instead of the defaults.
        #[arg(long)]
        ci: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        /// Print the effective config and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Relative errors of surface energies for several basis sizes.
    Converge {
        /// Comma-separated basis sizes.
        #[arg(long, value_delimiter = ',', default_values_t = [150usize, 250, 350])]
        nl: Vec<usize>,
        /// Reference basis size.
        #[arg(long = "ref", default_value_t = 600)]
        n_ref: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 8.0, 20.0])]
        rho: Vec<f64>,
        #[arg(long, default_value_t = 29)]
        states: usize,
        #[arg(long, default_value = "coulomb")]
        potential: Variant,
    },
    /// Labelled surface energies at one hyperradius.
    Curves {
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 350)]
        nl: usize,
        #[arg(long, default_value_t = 29)]
        states: usize,
        #[arg(long, default_value = "coulomb")]
        potential: Variant,
    },
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_config() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, figure, potential, energies, ci, out, threads, dry_run } => {
            let (mut cfg, raw) = match &config {
                Some(p) => {
                    let raw = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    (RunConfig::from_toml_str(&raw)?, Some(raw))
                }
                None if ci => (RunConfig::ci_profile(), None),
                None => (RunConfig::default(), None),
            };
            if potential.is_some() {
                cfg.potential.variant = potential;
            }
            if let Some(e) = energies {
                cfg.scan.energies = e;
            }
            if let Some(d) = out {
                cfg.output.dir = d;
            }
            if let Some(t) = threads {
                cfg.output.threads = t;
            }
            cfg.validate()?;
            if dry_run {
                print!("{}", cfg.to_toml_string());
                return Ok(());
            }
            let stages = figure.map(Stages::for_figure).transpose()?.unwrap_or_else(Stages::all);
            let opts = RunOptions { stages, raw_config: raw, ..RunOptions::default() };
            let m = pipeline::run_scan(&cfg, &opts)?;
            for f in &m.outputs {
                println!("{}", cfg.output.dir.join(&f.name).display());
            }
            println!("{}", cfg.output.dir.join(pipeline::MANIFEST_NAME).display());
            let bad: usize = m.diagnostics.models.values().map(|s| s.tolerance_violations.len()).sum();
            if bad > 0 {
                eprintln!("{bad} energies exceed the unitarity/symmetry tolerance; see the manifest");
            }
            Ok(())
        }
        Command::Converge { nl, n_ref, rho, states, potential } => {
            let cfg = RunConfig::default();
            let model = mutransfer::PotentialModel::new(potential, cfg.potential.z, cfg.masses()?);
            let t = pipeline::convergence_report(&model, &nl, n_ref, &rho, states)?;
            print!("{}", t.to_csv());
            for &r in &rho {
                for &n in &nl {
                    eprintln!("rho {r}: n_L {n}: {} states within 1e-6", t.count_below(r, n, 1e-6));
                }
            }
            Ok(())
        }
        Command::Curves { rho, nl, states, potential } => {
            let cfg = RunConfig::default();
            let model = mutransfer::PotentialModel::new(potential, cfg.potential.z, cfg.masses()?);
            let b = SurfaceSolver::new(model, nl)?.solve(rho, states)?;
            println!("index,state,E_eV");
            for (i, l) in b.labels().into_iter().enumerate() {
                println!("{},{l},{:.10e}", i + 1, mutransfer::constants::hartree_to_ev(b.energies[i]));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
