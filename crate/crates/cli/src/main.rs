use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use otoc_core::calib::{
    bare_frequency, coupler_effective_j, fit_phase_accumulation, fit_rb_decay, rb_infidelity, unwrap_phases,
    CouplerParams, DressedFrequencies, RbCurve,
};
use otoc_core::protocol::pauli_average_otoc;
use otoc_core::spinchain::{CouplingScheme, HamiltonianSpec};
use otoc_cli::calib_io::read_two_columns;
use otoc_cli::config::ConfigFile;
use otoc_cli::presets::{self, Overrides, PresetName};
use otoc_cli::runner::run_and_write;
use otoc_cli::CliError;
use serde_json::json;

#[derive(Parser)]
#[command(name = "otoc", version, about = "Teleportation-based OTOC experiments on simulated spin chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Run a named figure preset.
    Preset {
        name: PresetName,
        #[command(flatten)]
        exec: ExecArgs,
        /// Drop EPR, decoherence, Bell-measurement and readout errors.
        #[arg(long)]
        noiseless: bool,
        /// Master seed for sampled runs.
        #[arg(long)]
        seed: Option<u64>,
        /// Sample this many shots per input state instead of exact probabilities.
        #[arg(long)]
        shots: Option<u64>,
        /// End of the time grid in µs.
        #[arg(long)]
        t_max: Option<f64>,
        /// Number of grid points.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Pauli-averaged OTOC between the first and last site of a bare chain.
    Oracle {
        #[arg(long, value_parser = parse_scheme)]
        scheme: CouplingScheme,
        #[arg(long)]
        n: usize,
        /// Uniform coupling in MHz.
        #[arg(long)]
        j: f64,
        /// Uniform detuning in MHz (ZZ only).
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        /// Uniform drive in MHz (ZZ only).
        #[arg(long, default_value_t = 0.0)]
        omega: f64,
        /// Time in µs.
        #[arg(long)]
        t: f64,
    },
    /// Calibration formulas.
    #[command(subcommand)]
    Calib(CalibCommand),
}

#[derive(Args)]
struct ExecArgs {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum CalibCommand {
    /// Fit an RB curve (CSV columns m,F); with an interleaved curve also report the gate infidelity.
    Rb {
        reference: PathBuf,
        #[arg(long)]
        interleaved: Option<PathBuf>,
    },
    /// Effective coupling through a tunable coupler (all MHz).
    Coupler {
        #[arg(long)]
        g1: f64,
        #[arg(long)]
        g2: f64,
        #[arg(long)]
        gd: f64,
        #[arg(long, allow_negative_numbers = true)]
        delta1: f64,
        #[arg(long, allow_negative_numbers = true)]
        delta2: f64,
        #[arg(long, allow_negative_numbers = true)]
        sigma1: f64,
        #[arg(long, allow_negative_numbers = true)]
        sigma2: f64,
    },
    /// Bare frequency and ZZ couplings from dressed frequencies (GHz).
    BareFreq {
        #[arg(long)]
        w00: f64,
        #[arg(long)]
        w10: f64,
        #[arg(long)]
        w01: f64,
    },
    /// Linear fit of accumulated phase (CSV columns t_us,phi_rad).
    Phase {
        samples: PathBuf,
        /// Fit the phases as given, without removing 2π jumps.
        #[arg(long)]
        no_unwrap: bool,
    },
}

fn parse_scheme(s: &str) -> Result<CouplingScheme, String> {
    match s.to_ascii_lowercase().as_str() {
        "zz" => Ok(CouplingScheme::Zz),
        "xy" => Ok(CouplingScheme::Xy),
        _ => Err(format!("unknown scheme {s:?}; expected zz or xy")),
    }
}

fn print_json(v: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&v).expect("JSON value"));
}

fn run_preset(name: PresetName, overrides: &Overrides, out: Option<PathBuf>, workers: usize) -> Result<(), CliError> {
    let cfgs = presets::resolve(name, overrides);
    let out = out.unwrap_or_else(|| PathBuf::from("out").join(name.as_str()));
    let manifest = run_and_write(&cfgs, &out, workers, &format!("preset {}", name.as_str()))?;
    eprintln!("wrote {} experiments to {}", manifest.experiments.len(), out.display());
    Ok(())
}

fn calib(cmd: CalibCommand) -> Result<(), CliError> {
    match cmd {
        CalibCommand::Rb { reference, interleaved } => {
            let fit = |path: &PathBuf| -> Result<_, CliError> {
                let (m, f) = read_two_columns(path)?;
                let curve = RbCurve::new(m, f).map_err(CliError::config)?;
                fit_rb_decay(&curve).map_err(CliError::invariant)
            };
            let reference = fit(&reference)?;
            let mut out = json!({ "reference": reference });
            if let Some(path) = interleaved {
                let gate = fit(&path)?;
                out["interleaved"] = json!(gate);
                out["gate_infidelity"] = json!(rb_infidelity(reference.p, gate.p).map_err(CliError::invariant)?);
            }
            print_json(out);
        }
        CalibCommand::Coupler { g1, g2, gd, delta1, delta2, sigma1, sigma2 } => {
            let c = CouplerParams {
                g1_mhz: g1,
                g2_mhz: g2,
                gd_mhz: gd,
                delta1_mhz: delta1,
                delta2_mhz: delta2,
                sigma1_mhz: sigma1,
                sigma2_mhz: sigma2,
            };
            print_json(json!({ "j_mhz": coupler_effective_j(&c).map_err(CliError::config)? }));
        }
        CalibCommand::BareFreq { w00, w10, w01 } => {
            let d = DressedFrequencies { w00_ghz: w00, w10_ghz: w10, w01_ghz: w01 };
            print_json(json!(bare_frequency(&d).map_err(CliError::config)?));
        }
        CalibCommand::Phase { samples, no_unwrap } => {
            let (t, phi) = read_two_columns(&samples)?;
            let phi = if no_unwrap { phi } else { unwrap_phases(&phi) };
            print_json(json!(fit_phase_accumulation(&t, &phi).map_err(CliError::config)?));
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, exec } => match ConfigFile::load(&config)? {
            ConfigFile::Experiment(cfg) => {
                let out = exec.out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
                run_and_write(std::slice::from_ref(&*cfg), &out, exec.workers, &format!("run {}", config.display()))?;
                eprintln!("wrote {}", out.display());
                Ok(())
            }
            ConfigFile::Preset { name, overrides, output } => run_preset(name, &overrides, exec.out.or(output), exec.workers),
        },
        Command::Preset { name, exec, noiseless, seed, shots, t_max, points } => {
            let overrides = Overrides { noiseless, master_seed: seed, shots, t_max_us: t_max, n_points: points };
            run_preset(name, &overrides, exec.out, exec.workers)
        }
        Command::Oracle { scheme, n, j, delta, omega, t } => {
            if n == 0 {
                return Err(CliError::Config("--n must be at least 1".into()));
            }
            let couplings = vec![j; n - 1];
            let spec = match scheme {
                CouplingScheme::Zz => HamiltonianSpec::zz(vec![delta; n], vec![omega; n], couplings),
                CouplingScheme::Xy => HamiltonianSpec::xy(couplings),
            }
            .map_err(CliError::config)?;
            let v = pauli_average_otoc(&spec, t, 0, n - 1).map_err(CliError::config)?;
            print_json(json!({ "t_us": t, "avg_otoc": v }));
            Ok(())
        }
        Command::Calib(cmd) => calib(cmd),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
