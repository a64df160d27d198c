use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kinwave::sim::SimConfig;
use kinwave_cli::conditioning::ConditioningStudy;
use kinwave_cli::presets::BISTABILITY_SEEDS;
use kinwave_cli::scenarios::{self, BifurcationSweep, Overrides, Patch, Report};
use kinwave_cli::{Error, Result};

#[derive(Parser)]
#[command(
    name = "kinwave",
    version,
    about = "Kinetic chemotaxis waves: scattering matrices, wave speeds and simulations"
)]
struct Cli {
    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct RunFlags {
    #[arg(long)]
    dx: Option<f64>,
    /// Fixed time step instead of the automatic one.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
}

impl From<RunFlags> for Overrides {
    fn from(f: RunFlags) -> Self {
        Overrides {
            dx: f.dx,
            dt: f.dt,
            t_end: f.t_end,
        }
    }
}

#[derive(Args)]
struct PresetFlags {
    /// TOML keys laid over each preset configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the preset configurations and exit.
    #[arg(long)]
    print: bool,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Subcommand)]
enum Command {
    /// Condition numbers of Case and finite-difference S-matrices.
    Conditioning {
        /// Study parameters (k_list, dx_list, chi_m, chi_n, pattern) in TOML.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        dx: Option<Vec<f64>>,
    },
    /// WB-WB and TS-TS aggregation runs with frozen and dynamic signal.
    Symmetry(PresetFlags),
    /// Pulse formation under WB-WB, WB-TS, TS-TS with MD-1 and MD-2.
    Wavespeed(PresetFlags),
    /// Cauchy runs seeded with moving-frame profiles.
    Bistability {
        #[arg(long, value_delimiter = ',', default_values_t = BISTABILITY_SEEDS)]
        seeds: Vec<f64>,
        #[command(flatten)]
        preset: PresetFlags,
    },
    /// Wave speeds against the smallest velocity.
    Bifurcation {
        #[arg(long, value_delimiter = ',')]
        v_min: Option<Vec<f64>>,
        /// Roots of the wave-speed function only.
        #[arg(long)]
        analytic_only: bool,
        #[arg(long, default_value_t = 100)]
        scan_points: usize,
        #[command(flatten)]
        preset: PresetFlags,
    },
    /// One simulation from a complete configuration file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn patch(flags: &PresetFlags) -> Result<Patch> {
    flags
        .config
        .as_deref()
        .map_or_else(|| Ok(Patch::default()), Patch::load)
}

fn print_presets(runs: &[scenarios::Labeled], patch: &Patch, ov: &Overrides) -> Result<()> {
    for r in runs {
        let mut cfg = patch.apply(&r.config)?;
        ov.apply(&mut cfg);
        println!("# {}\n{}", r.label, cfg.to_toml());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<Option<Report>> {
    let out = &cli.out;
    Ok(Some(match cli.command {
        Command::Conditioning { config, k, dx } => {
            let mut study = match config {
                Some(p) => toml::from_str(&read(&p)?)
                    .map_err(|e| kinwave::error::Error::Config(e.to_string()))?,
                None => ConditioningStudy::default(),
            };
            if let Some(k) = k {
                study.k_list = k;
            }
            if let Some(dx) = dx {
                study.dx_list = dx;
            }
            scenarios::conditioning(&study, out)?
        }
        Command::Symmetry(flags) => {
            let (p, ov) = (patch(&flags)?, flags.run.into());
            if flags.print {
                print_presets(&scenarios::symmetry_runs(), &p, &ov)?;
                return Ok(None);
            }
            scenarios::symmetry(&p, &ov, out)?
        }
        Command::Wavespeed(flags) => {
            let (p, ov) = (patch(&flags)?, flags.run.into());
            if flags.print {
                print_presets(&scenarios::wavespeed_runs(), &p, &ov)?;
                return Ok(None);
            }
            scenarios::wavespeed(&p, &ov, out)?
        }
        Command::Bistability { seeds, preset } => {
            let (p, ov) = (patch(&preset)?, preset.run.into());
            if preset.print {
                print_presets(&scenarios::bistability_runs(&seeds), &p, &ov)?;
                return Ok(None);
            }
            scenarios::bistability(&seeds, &p, &ov, out)?
        }
        Command::Bifurcation {
            v_min,
            analytic_only,
            scan_points,
            preset,
        } => {
            let mut sweep = BifurcationSweep {
                analytic_only,
                scan_points,
                ..BifurcationSweep::default()
            };
            if let Some(v) = v_min {
                sweep.v_min = v;
            }
            let ov: Overrides = preset.run.into();
            if let Some(dx) = ov.dx {
                sweep.dx = dx;
            }
            if let Some(t) = ov.t_end {
                sweep.t_end = t;
            }
            scenarios::bifurcation(&sweep, &patch(&preset)?, &ov, out)?
        }
        Command::Run { config, run } => {
            let cfg = SimConfig::from_toml(&read(&config)?)?;
            scenarios::custom(cfg, &run.into(), out)?
        }
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(cli).and_then(|r| r.map(Report::into_result).transpose()) {
        Ok(Some(report)) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
