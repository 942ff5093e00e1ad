use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use taskauthor_core::harness::{
    autonomy_periods, mean_period, read_log, total_autonomy, write_report, AUTONOMY_THRESHOLD,
    GAP_TOLERANCE,
};
use taskauthor_core::{
    run_agent, serve, HumanLatencyProfile, LinkConfig, Mode, ServerConfig, SessionConfig, StudyConfig,
    WorkspaceSpec,
};

#[derive(Parser)]
#[command(name = "taskauthor", version, about = "Task-level robot authoring: server, study and metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the teleoperation server for one operator at a time.
    Serve {
        /// Workspace layout JSON; the built-in layout when absent.
        #[arg(long)]
        workspace: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        /// Injected one-way delay on each direction.
        #[arg(long, default_value_t = 0)]
        delay_ms: u64,
        #[arg(long, default_value_t = 0)]
        jitter_ms: u64,
        #[arg(long, default_value_t = 10.0)]
        state_rate_hz: f64,
        /// Detection pose noise, meters.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pace the simulation at wall-clock speed.
        #[arg(long)]
        realtime: bool,
        /// JSONL session log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run scripted operators through the five tasks and write a CSV report.
    Study {
        #[arg(long, value_enum, default_value = "all")]
        mode: ModeArg,
        #[arg(long)]
        workspace: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        delay_ms: u64,
        #[arg(long, default_value_t = 0)]
        jitter_ms: u64,
        /// Operator think-time profile JSON.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Session length in seconds; 0 for unlimited.
        #[arg(long, default_value_t = 900.0)]
        budget: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Autonomy periods of a session log.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = AUTONOMY_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = GAP_TOLERANCE)]
        gap: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Tla,
    Pc,
    Cc,
    All,
}

impl ModeArg {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::Tla => vec![Mode::Tla],
            ModeArg::Pc => vec![Mode::Pc],
            ModeArg::Cc => vec![Mode::Cc],
            ModeArg::All => vec![Mode::Tla, Mode::Pc, Mode::Cc],
        }
    }
}

fn load_spec(path: Option<&Path>) -> Result<Arc<WorkspaceSpec>> {
    let spec = match path {
        Some(p) => WorkspaceSpec::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => WorkspaceSpec::default_layout(),
    };
    Ok(Arc::new(spec))
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve {
            workspace,
            host,
            port,
            delay_ms,
            jitter_ms,
            state_rate_hz,
            sigma,
            seed,
            realtime,
            log,
        } => {
            let spec = load_spec(workspace.as_deref())?;
            let config = ServerConfig {
                link: LinkConfig {
                    one_way_delay_ms: delay_ms,
                    jitter_ms,
                    state_rate_hz,
                },
                session: SessionConfig { sigma, seed },
                realtime,
                log_path: log,
            };
            let handle = serve(spec, config, &format!("{host}:{port}"))?;
            println!("listening on {}", handle.addr());
            handle.join();
        }
        Command::Study {
            mode,
            workspace,
            delay_ms,
            jitter_ms,
            profile,
            budget,
            seed,
            out,
        } => {
            let spec = load_spec(workspace.as_deref())?;
            let profile = match profile {
                Some(p) => HumanLatencyProfile::load(&p).map_err(anyhow::Error::msg)?,
                None => HumanLatencyProfile::default(),
            };
            if budget < 0.0 {
                bail!("budget must be non-negative");
            }
            let config = StudyConfig {
                profile,
                budget: (budget > 0.0).then_some(budget),
                link: LinkConfig {
                    one_way_delay_ms: delay_ms,
                    jitter_ms,
                    ..LinkConfig::default()
                },
                session: SessionConfig { sigma: 0.0, seed },
                ..StudyConfig::default()
            };
            let mut reports = Vec::new();
            for m in mode.modes() {
                let (run, _) = run_agent(spec.clone(), m, &config)?;
                for (task, why) in &run.failures {
                    tracing::warn!("{m}: task {task} failed: {why}");
                }
                tracing::info!(
                    "{m}: score {} autonomy {:.1} s over {:.1} s",
                    run.report.score,
                    run.report.total_autonomy,
                    run.report.wall_time
                );
                reports.push(run.report);
            }
            match out {
                Some(path) => {
                    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    write_report(&reports, f)?;
                }
                None => write_report(&reports, std::io::stdout().lock())?,
            }
        }
        Command::Metrics { log, threshold, gap } => {
            let f = File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let events = read_log(BufReader::new(f))?;
            let periods = autonomy_periods(&events, threshold, gap)?;
            let mut out = std::io::stdout().lock();
            for p in &periods {
                writeln!(out, "{:.3}\t{:.3}\t{:.3}", p.start, p.end, p.duration())?;
            }
            writeln!(
                out,
                "periods {} total {:.3} s mean {:.3} s",
                periods.len(),
                total_autonomy(&periods),
                mean_period(&periods)
            )?;
        }
    }
    Ok(())
}
