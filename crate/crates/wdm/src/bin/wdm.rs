//! Experiment driver for the wavenumber-division multiplexing library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wdm::error::WdmError;
use wdm::experiments::{self, ExperimentId, ExperimentSpec};
use wdm::scenario::{baseline_config, parse_config, validate};

#[derive(Parser)]
#[command(
    name = "wdm",
    version,
    about = "Line-of-sight wavenumber-division multiplexing experiments",
    after_help = "Configuration is a flat `key = value` file (SI units); \
                  any key can be overridden with --set. Outputs are CSV \
                  files plus a manifest sidecar in the output directory."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (defaults to the built-in baseline link).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set Lr=2`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Output directory for CSV artifacts and manifests.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,

    /// Coarser sweep grids for quick runs.
    #[arg(long, global = true)]
    fast: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Spatial Green's function profiles (CSV).
    Green(CommonArgs),
    /// Wavenumber spectra of the Green's function.
    Spectra(CommonArgs),
    /// Diagonal coupling coefficients against the spectrum.
    Coupling(CommonArgs),
    /// Significant-mode staircase over distance.
    Nbar(CommonArgs),
    /// EMI covariance eigenvalue profiles.
    EmiEig(CommonArgs),
    /// Spectral efficiency of all schemes versus receiver length.
    SeVsLr(CommonArgs),
    /// Spectral efficiency versus distance.
    SeVsD(CommonArgs),
    /// WDM versus the electromagnetic matched filter.
    EmmfCompare(CommonArgs),
    /// WDM versus classical dipole MIMO with matched RF chains.
    MimoCompare(CommonArgs),
    /// Radiated-power bound Monte Carlo check.
    PowerCheck(CommonArgs),
    /// Channel-operator eigenvalues.
    Modes(CommonArgs),
    /// Dump the Green's function for one scenario (both domains).
    DumpGreen(CommonArgs),
    /// Dump the WDM coupling matrix for one scenario.
    DumpCoupling(CommonArgs),
    /// Dump the EMI covariance (entries and eigenvalues).
    DumpEmi(CommonArgs),
    /// Dump channel-operator eigenvalues (and optionally eigenfunctions).
    DumpModes {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write sampled eigenfunctions.
        #[arg(long)]
        functions: bool,
    },
}

fn parse_overrides(pairs: &[String]) -> Result<Vec<(String, String)>, WdmError> {
    pairs
        .iter()
        .map(|pair| {
            pair.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| WdmError::BadValue {
                    key: "--set".to_string(),
                    value: pair.clone(),
                    reason: "expected KEY=VALUE".to_string(),
                })
        })
        .collect()
}

fn load_config_text(common: &CommonArgs) -> Result<Option<String>, WdmError> {
    match &common.config {
        None => Ok(None),
        Some(path) => Ok(Some(std::fs::read_to_string(path)?)),
    }
}

fn run_experiment(id: ExperimentId, common: &CommonArgs) -> Result<(), WdmError> {
    let text = load_config_text(common)?;
    let overrides = parse_overrides(&common.set)?;
    let spec = ExperimentSpec::resolve(id, text.as_deref(), &overrides, &common.out, common.fast)?;
    let summary = experiments::run(&spec)?;
    println!("{}: {}", id.label(), summary.headline);
    for file in &summary.files {
        println!("  wrote {}", file.display());
    }
    println!("  wall time {:.2} s", summary.wall_time_s);
    Ok(())
}

fn resolved_scenario(common: &CommonArgs) -> Result<wdm::Scenario, WdmError> {
    let mut config = baseline_config();
    if let Some(text) = load_config_text(common)? {
        for (k, v) in parse_config(&text)? {
            config.insert(k, v);
        }
    }
    for (k, v) in parse_overrides(&common.set)? {
        config.insert(k, v);
    }
    validate(&config)
}

fn run_dump(command: &Command) -> Result<(), WdmError> {
    match command {
        Command::DumpGreen(common) => {
            let scenario = resolved_scenario(common)?;
            let path = experiments::dump_green(&scenario, &common.out)?;
            println!("wrote {}", path.display());
        }
        Command::DumpCoupling(common) => {
            let scenario = resolved_scenario(common)?;
            let path = experiments::dump_coupling(&scenario, &common.out)?;
            println!("wrote {}", path.display());
        }
        Command::DumpEmi(common) => {
            let scenario = resolved_scenario(common)?;
            for path in experiments::dump_emi(&scenario, &common.out)? {
                println!("wrote {}", path.display());
            }
        }
        Command::DumpModes { common, functions } => {
            let scenario = resolved_scenario(common)?;
            for path in experiments::dump_modes(&scenario, &common.out, *functions)? {
                println!("wrote {}", path.display());
            }
        }
        _ => unreachable!("not a dump command"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Green(c) => run_experiment(ExperimentId::Green, c),
        Command::Spectra(c) => run_experiment(ExperimentId::Spectra, c),
        Command::Coupling(c) => run_experiment(ExperimentId::Coupling, c),
        Command::Nbar(c) => run_experiment(ExperimentId::Nbar, c),
        Command::EmiEig(c) => run_experiment(ExperimentId::EmiEig, c),
        Command::SeVsLr(c) => run_experiment(ExperimentId::SeVsLr, c),
        Command::SeVsD(c) => run_experiment(ExperimentId::SeVsD, c),
        Command::EmmfCompare(c) => run_experiment(ExperimentId::EmmfCompare, c),
        Command::MimoCompare(c) => run_experiment(ExperimentId::MimoCompare, c),
        Command::PowerCheck(c) => run_experiment(ExperimentId::PowerCheck, c),
        Command::Modes(c) => run_experiment(ExperimentId::Modes, c),
        dump => run_dump(dump),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(inner) = source {
                eprintln!("  caused by: {inner}");
                source = inner.source();
            }
            ExitCode::FAILURE
        }
    }
}
