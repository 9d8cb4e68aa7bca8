use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gscm_sched::channel::write_channel_dump;
use gscm_sched::harness::{
    emit_csv, load_config, run_sweep, write_csv, Preset, SweepSpec, SweepVariable, TrialContext,
    CONFIG_ENV,
};
use gscm_sched::localization::{perturb_and_rebuild, write_diagnostics_csv, EllipseModel};
use gscm_sched::rng::{substream, Stream};
use gscm_sched::scheduler::SchedulerKind;
use gscm_sched::{Result, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "gscm",
    version,
    about = "Geometry-based user scheduling on a cluster channel model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eps_h: Option<f64>,
    #[arg(long)]
    eps_g: Option<f64>,
    /// Number of users to select
    #[arg(long)]
    ks: Option<usize>,
    /// Unit noise floor in the SINR instead of filtered noise
    #[arg(long)]
    eq4_literal: bool,
}

impl Common {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut cfg = load_config(self.config.as_deref())?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.eps_h {
            cfg.eps_h = e;
        }
        if let Some(e) = self.eps_g {
            cfg.eps_g = e;
            cfg.eps_g_grid.clear();
        }
        if let Some(k) = self.ks {
            cfg.num_selected = k;
        }
        cfg.eq4_literal |= self.eq4_literal;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one drop and print every scheduler's outcome
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_scheduler)]
        scheduler: Option<SchedulerKind>,
        #[arg(long, default_value_t = 0.0)]
        omega: f64,
        /// Write the full channel matrix to this file
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Monte Carlo sweep over one parameter, written as CSV
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_preset)]
        preset: Option<Preset>,
        /// Swept variable when no preset is given: R, K, M, K_s or omega
        #[arg(long, value_parser = parse_variable)]
        var: Option<SweepVariable>,
        /// Comma-separated sweep values
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_parser = parse_scheduler, value_delimiter = ',')]
        scheduler: Vec<SchedulerKind>,
        #[arg(long)]
        omega: Option<f64>,
        /// Worker threads, 0 for all cores
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Output CSV, stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Localize the active clusters of one drop and report per-path legs
    Localize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_scheduler(s: &str) -> std::result::Result<SchedulerKind, String> {
    s.parse().map_err(|e: gscm_sched::Error| e.to_string())
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: gscm_sched::Error| e.to_string())
}

fn parse_variable(s: &str) -> std::result::Result<SweepVariable, String> {
    s.parse().map_err(|e: gscm_sched::Error| e.to_string())
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            common,
            scheduler,
            omega,
            dump,
        } => {
            let cfg = common.config()?;
            let ctx = TrialContext::build(&cfg, cfg.seed)?;
            println!(
                "drop seed {}: {} users, {} clusters, M = {}, K_s = {}",
                cfg.seed,
                ctx.drop.num_users(),
                ctx.drop.num_clusters(),
                cfg.num_antennas,
                cfg.num_selected
            );
            let kinds = scheduler.map_or_else(|| SchedulerKind::ALL.to_vec(), |k| vec![k]);
            for kind in kinds {
                let r = ctx.run(kind, omega)?;
                let cond = r
                    .condition
                    .map_or("singular".to_string(), |c| format!("{c:.3e}"));
                println!(
                    "{:<14} sum-rate {:>8.3} bit/s/Hz  load {:>6}  common clusters {:.3}  cond {}  selected {:?}",
                    kind.name(),
                    r.sum_rate,
                    r.load,
                    r.mean_common,
                    cond,
                    r.selected
                );
            }
            if let Some(path) = dump {
                write_channel_dump(
                    BufWriter::new(File::create(&path)?),
                    &ctx.channel.h,
                    cfg.seed,
                )?;
                println!("channel written to {}", path.display());
            }
        }
        Command::Sweep {
            common,
            preset,
            var,
            values,
            trials,
            scheduler,
            omega,
            threads,
            out,
        } => {
            let cfg = common.config()?;
            let mut spec = match (preset, var) {
                (Some(p), _) => p.spec(&cfg),
                (None, Some(v)) => SweepSpec {
                    base: cfg.clone(),
                    variable: v,
                    values: values.clone(),
                    trials: 50,
                    schedulers: vec![
                        SchedulerKind::GusThreshold,
                        SchedulerKind::Gwc,
                        SchedulerKind::Random,
                    ],
                    omega: 0.0,
                    seed: cfg.seed,
                },
                (None, None) => {
                    return Err(gscm_sched::Error::Config(
                        "sweep needs --preset or --var".into(),
                    ))
                }
            };
            if preset.is_some() && !values.is_empty() {
                spec.values = values;
            }
            if let Some(t) = trials {
                spec.trials = t;
            }
            if !scheduler.is_empty() {
                spec.schedulers = scheduler;
            }
            if let Some(o) = omega {
                spec.omega = o;
            }
            let table = run_sweep(&spec, threads)?;
            match out {
                Some(p) => write_csv(&table.rows, p)?,
                None => emit_csv(&table.rows, io::stdout().lock())?,
            }
        }
        Command::Localize { common, omega, out } => {
            let cfg = common.config()?;
            let ctx = TrialContext::build(&cfg, cfg.seed)?;
            let mut rng = substream(cfg.seed, Stream::LocalizationError, &[]);
            let p = perturb_and_rebuild(
                &ctx.drop,
                &ctx.v,
                &cfg.sounder(),
                omega,
                EllipseModel::Full3d,
                &mut rng,
            )?;
            eprintln!(
                "{} paths, {} lost, relative visibility error {:.4}",
                p.paths.len(),
                p.lost_count(),
                p.relative_error(&ctx.v)
            );
            write_diagnostics_csv(output(out.as_ref())?, &p.paths)?;
        }
    }
    Ok(())
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
