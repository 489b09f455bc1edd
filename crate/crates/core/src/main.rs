use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nfsync_core::config::ConfigFile;
use nfsync_core::experiment::{self, ExperimentConfig, ExperimentKind};
use nfsync_core::fim::write_peb_table;
use nfsync_core::{classify_regime, ModelKind, Result};

#[derive(Parser)]
#[command(
    name = "nfsync",
    version,
    about = "Near-field localization and synchronization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with scenario, estimator and sweep settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Signal phase along the array and along the subcarriers.
    Phase {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<ModelKind>>,
        /// Bearing in radians (broadside by default).
        #[arg(long)]
        theta_rad: Option<f64>,
    },
    /// Position error bound sweeps over distance or antenna spacing.
    Peb {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Axis::Distance)]
        axis: Axis,
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<ModelKind>>,
        #[arg(long, value_enum, default_value_t = BiasFlags::Both)]
        bias_known: BiasFlags,
        /// Bearing in radians for the distance axis (atan(8) by default).
        #[arg(long)]
        theta_rad: Option<f64>,
        /// Also write the per-row PEB table with geometry columns.
        #[arg(long)]
        peb_table: Option<PathBuf>,
    },
    /// Monte Carlo RMSE of the sub-array and far-field estimators.
    Rmse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        /// Distance used to size sub-arrays; each point's distance by default.
        #[arg(long)]
        dbar_m: Option<f64>,
        /// Skip the LOS + scatterer variant.
        #[arg(long)]
        los_only: bool,
    },
    /// Field zone and bandwidth class of the configured scenario.
    Regime {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Distance,
    Spacing,
}

#[derive(Clone, Copy, ValueEnum)]
enum BiasFlags {
    True,
    False,
    Both,
}

impl BiasFlags {
    fn flags(self) -> Vec<bool> {
        match self {
            BiasFlags::True => vec![true],
            BiasFlags::False => vec![false],
            BiasFlags::Both => vec![true, false],
        }
    }
}

fn load(path: &Option<PathBuf>) -> Result<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

fn base_config(kind: ExperimentKind, common: &Common) -> Result<ExperimentConfig> {
    let file = load(&common.config)?;
    let mut cfg = ExperimentConfig::new(kind);
    let mut scenario = file.scenario.to_scenario()?;
    if kind == ExperimentKind::PhasePlot && common.config.is_none() {
        scenario.bandwidth_hz = cfg.scenario.bandwidth_hz;
    }
    cfg.scenario = scenario;
    cfg.estimator = file.estimator;
    cfg.seed = common.seed;
    if let Some(v) = file.sweep.values {
        cfg.values = v;
    }
    if let Some(t) = file.sweep.theta_rad {
        cfg.theta_rad = t;
    }
    if kind == ExperimentKind::PhasePlot {
        if let Some(d) = file.sweep.phase_distances_m {
            cfg.values = d;
        }
    }
    if let Some(n) = file.sweep.phase_antennas {
        cfg.phase_antennas = n;
    }
    Ok(cfg)
}

fn emit(rows: &[experiment::ResultRow], out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(p) => experiment::write_rows(rows, BufWriter::new(File::create(p)?)),
        None => experiment::write_rows(rows, io::stdout().lock()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Phase {
            common,
            models,
            theta_rad,
        } => {
            let mut cfg = base_config(ExperimentKind::PhasePlot, &common)?;
            if let Some(m) = models {
                cfg.models = m;
            }
            if let Some(t) = theta_rad {
                cfg.theta_rad = t;
            }
            emit(&experiment::run_phase_plot(&cfg)?, &common.out)
        }
        Command::Peb {
            common,
            axis,
            models,
            bias_known,
            theta_rad,
            peb_table,
        } => {
            let kind = match axis {
                Axis::Distance => ExperimentKind::PebVsDistance,
                Axis::Spacing => ExperimentKind::PebVsSpacing,
            };
            let mut cfg = base_config(kind, &common)?;
            if let Some(m) = models {
                cfg.models = m;
            }
            if let Some(t) = theta_rad {
                cfg.theta_rad = t;
            }
            cfg.bias_known = bias_known.flags();
            if let Some(p) = peb_table {
                let table = experiment::peb_table(&cfg)?;
                write_peb_table(&table, BufWriter::new(File::create(p)?))?;
            }
            emit(&experiment::run_peb_sweep(&cfg)?, &common.out)
        }
        Command::Rmse {
            common,
            trials,
            dbar_m,
            los_only,
        } => {
            let mut cfg = base_config(ExperimentKind::MonteCarloRmse, &common)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            cfg.d_bar_m = dbar_m;
            cfg.nlos = !los_only;
            emit(&experiment::run_monte_carlo(&cfg)?, &common.out)
        }
        Command::Regime { config } => {
            let s = load(&config)?.scenario.to_scenario()?;
            let r = classify_regime(&s);
            let mut w = io::stdout().lock();
            writeln!(w, "distance_m,{}", s.distance())?;
            writeln!(w, "field_zone,{:?}", r.field_zone)?;
            writeln!(w, "bandwidth_class,{:?}", r.bandwidth_class)?;
            writeln!(w, "beam_squint,{}", r.beam_squint)?;
            writeln!(w, "far_field_distance_m,{}", r.far_field_distance_m)?;
            writeln!(w, "reactive_distance_m,{}", r.reactive_distance_m)?;
            writeln!(w, "wideband_threshold_hz,{}", r.wideband_threshold_hz)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
