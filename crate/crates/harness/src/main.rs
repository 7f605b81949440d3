use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use osm_harness::config::{AlgorithmName, InitName, Mode, RunConfig, Transmission};
use osm_harness::experiments;

#[derive(Parser)]
#[command(name = "osm", version, about = "Optimized Schwarz solver for NLS and rotating GPE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation to the final time.
    Solve {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a scripted experiment.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentName {
    Table1,
    Psweep,
    Msweep,
    Bec,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tc {
    Robin,
    Pade,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(clap::Args)]
struct Overrides {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nsub: Option<usize>,
    #[arg(long, value_enum)]
    tc: Option<Tc>,
    /// Robin parameter.
    #[arg(long)]
    p: Option<f64>,
    /// Padé order.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_enum)]
    precond: Option<OnOff>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Zero,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Nls,
    Gpe,
}

impl Overrides {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(n) = self.nsub {
            cfg.n_sub = n;
        }
        let (cur_p, cur_m, theta, sum_from_one) = match cfg.transmission {
            Transmission::Robin { p } => (p, 6, std::f64::consts::FRAC_PI_4, false),
            Transmission::Pade { m, theta, sum_from_one } => (10.0, m, theta, sum_from_one),
        };
        let tc = self.tc.unwrap_or(match cfg.transmission {
            Transmission::Robin { .. } => Tc::Robin,
            Transmission::Pade { .. } => Tc::Pade,
        });
        cfg.transmission = match tc {
            Tc::Robin => Transmission::Robin { p: self.p.unwrap_or(cur_p) },
            Tc::Pade => Transmission::Pade {
                m: self.m.unwrap_or(cur_m),
                theta,
                sum_from_one,
            },
        };
        if let Some(on) = self.precond {
            cfg.algorithm = match on {
                OnOff::On => AlgorithmName::Preconditioned,
                OnOff::Off => AlgorithmName::Classical,
            };
        }
        if let Some(init) = self.init {
            cfg.init = match init {
                InitArg::Zero => InitName::Zero,
                InitArg::Random => InitName::Random,
            };
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if let Some(mode) = self.mode {
            cfg.mode = match mode {
                ModeArg::Nls => Mode::Nls,
                ModeArg::Gpe => Mode::Gpe,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { overrides } => {
            let cfg = overrides.resolve()?;
            let s = experiments::solve(&cfg)?;
            println!(
                "{} steps, iterations per step {:?}, relative mass drift {:.3e}, {:.2} s",
                s.steps, s.iterations, s.max_relative_mass_drift, s.wall_time_s
            );
            println!("output written to {}", cfg.output.display());
        }
        Command::Experiment { name, overrides } => {
            let cfg = overrides.resolve()?;
            match name {
                ExperimentName::Table1 => print_counts("N", &experiments::iteration_table(&cfg)?),
                ExperimentName::Psweep => print_counts("p", &experiments::p_sweep(&cfg)?),
                ExperimentName::Msweep => print_counts("m", &experiments::m_sweep(&cfg)?),
                ExperimentName::Bec => {
                    let s = experiments::bec(&cfg)?;
                    println!(
                        "{} steps, relative mass drift {:.3e}, {:.2} s",
                        s.steps, s.max_relative_mass_drift, s.wall_time_s
                    );
                }
            }
            println!("output written to {}", cfg.output.display());
        }
    }
    Ok(())
}

fn print_counts(column: &str, rows: &[experiments::CountRow]) {
    println!("{column:>8} {:>10} {:>15}", "classical", "preconditioned");
    for r in rows {
        println!("{:>8} {:>10} {:>15}", r.parameter, r.classical, r.preconditioned);
    }
}
