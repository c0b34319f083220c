//! Command-line entry point.
//!
//! Exit status: 0 on success, 1 on operational failure, 2 on usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use crowdfit_core::{Action, Study, Timestamp};

use crate::config::{ConfigFile, ADMIN_TOKEN_ENV};
use crate::journal::{self, Journal};
use crate::service::{self, Service};
use crate::{export, simdir};

#[derive(Parser, Debug)]
#[command(
    name = "crowdfit",
    version,
    about = "Crowdsourced outcome surveys: serve, model, simulate, analyze"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the HTTP service and the engine scheduler.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Event log (overrides `server.log` in the config).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Engine period in seconds (overrides the study config).
        #[arg(long)]
        period: Option<u64>,
        #[arg(long)]
        bind: Option<std::net::SocketAddr>,
    },
    /// Replay a log, fit one model on the final state and print it.
    ModelOnce {
        #[arg(long)]
        log: PathBuf,
        /// Also write the artifact here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a simulation spec and write its results to a directory.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        period: Option<u64>,
    },
    /// Write analytics reports for a log.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a log and check every recorded model, and optionally a saved
    /// artifact file, byte for byte.
    VerifyLog {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        artifact: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command, writing reports to `stdout` and
/// diagnostics to standard error.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e:#}");
            ExitCode::from(1)
        }
    }
}

fn replay(log: &Path) -> anyhow::Result<Study> {
    journal::replay_log(log)?.ok_or_else(|| anyhow!("{} holds no events", log.display()))
}

fn execute(command: Command, stdout: &mut dyn Write) -> anyhow::Result<()> {
    match command {
        Command::Serve {
            config,
            log,
            period,
            bind,
        } => serve(&config, log, period, bind),
        Command::ModelOnce { log, out } => {
            let study = replay(&log)?;
            let artifact = study.build_artifact(study.last_at())?;
            let bytes = artifact.to_json();
            if let Some(path) = out {
                std::fs::write(&path, &bytes)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            stdout.write_all(&bytes)?;
            writeln!(stdout)?;
            Ok(())
        }
        Command::Simulate {
            spec,
            out,
            seed,
            period,
        } => {
            let file = simdir::SpecFile::load(&spec)?;
            let result = simdir::run(&file, seed, period)?;
            let mut used = file.spec.clone();
            used.seed = seed.unwrap_or(used.seed);
            simdir::write_result(&used, &result, &out)?;
            writeln!(
                stdout,
                "{} events, {} engine runs, final model_r2 {}",
                result.events.len(),
                result.result.quality.len(),
                result
                    .result
                    .final_artifact
                    .as_ref()
                    .map_or("n/a".to_string(), |a| a.model_r2.to_string())
            )?;
            Ok(())
        }
        Command::Analyze { log, out } => {
            let study = replay(&log)?;
            let artifact = match study.current_artifact() {
                Some(a) => (**a).clone(),
                None => study.build_artifact(study.last_at())?,
            };
            export::write_analysis(&study, &artifact, &out)?;
            writeln!(
                stdout,
                "wrote analytics for {} events to {}",
                study.last_seq(),
                out.display()
            )?;
            Ok(())
        }
        Command::VerifyLog { log, artifact } => {
            let events = journal::read_events(&log)?;
            let study = journal::replay_events(&events)?
                .ok_or_else(|| anyhow!("{} holds no events", log.display()))?;
            let runs = events
                .iter()
                .filter(|e| matches!(e.action, Action::EngineRun { .. }))
                .count();
            let current = study.current_artifact();
            if let Some(path) = artifact {
                let recorded =
                    std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
                let Some(a) = current else {
                    bail!("artifact mismatch: the log records no model")
                };
                if a.to_json() != recorded {
                    bail!(
                        "artifact mismatch: replayed model differs from {}",
                        path.display()
                    );
                }
            }
            writeln!(
                stdout,
                "ok: {} events, {} engine runs verified{}",
                events.len(),
                runs,
                current.map_or(String::new(), |a| format!(", final digest {}", a.digest()))
            )?;
            Ok(())
        }
    }
}

fn wall_clock_now() -> Timestamp {
    (service::system_clock())()
}

fn serve(
    config: &Path,
    log: Option<PathBuf>,
    period: Option<u64>,
    bind: Option<std::net::SocketAddr>,
) -> anyhow::Result<()> {
    let cfg = ConfigFile::load(config)?;
    let log = log.unwrap_or(cfg.server.log.clone());
    let journal = Journal::open(
        &log,
        Some(&cfg.study),
        wall_clock_now(),
        cfg.server.snapshot_every,
    )?;
    if !journal.study().config().same_identity(&cfg.study) {
        tracing::warn!("config file differs from the study in the log; the log wins (use PUT /api/admin/config)");
    }
    let admin = std::env::var(ADMIN_TOKEN_ENV)
        .ok()
        .filter(|t| !t.is_empty());
    if admin.is_none() {
        tracing::warn!("{ADMIN_TOKEN_ENV} is not set; admin endpoints are disabled");
    }
    let svc = Service::new(journal, admin.as_deref(), period, service::system_clock());
    let addr = bind.unwrap_or(cfg.server.bind);

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!("listening on {addr}, log {}", log.display());
        let scheduler = tokio::spawn(service::run_scheduler(svc.clone()));
        axum::serve(listener, service::router(svc))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        scheduler.abort();
        Ok(())
    })
}
