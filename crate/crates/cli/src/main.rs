use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use minesentinel_core::harness::{render, ReportFormat, RunLog, RunOptions, Scenario, Simulation};
use minesentinel_core::Millis;
use minesentinel_service::{router, run_clock, serve_tcp, AppState};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "minesentinel",
    version,
    about = "Smart-helmet mine safety simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and print its detection metrics.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "text")]
        format: ReportFormat,
        /// Write the event log (JSON lines) here, plus a `.truth.json` sidecar.
        #[arg(long)]
        out_log: Option<PathBuf>,
        /// Drive the clock in wall time and expose the HTTP API and TCP ingest.
        #[arg(long)]
        serve: bool,
        #[arg(long, default_value = "127.0.0.1:8080")]
        http: SocketAddr,
        #[arg(long, default_value = "127.0.0.1:9000")]
        tcp: SocketAddr,
        /// Wall milliseconds per simulated tick when serving; 0 runs the
        /// scenario instantly and then only serves.
        #[arg(long, default_value_t = 100)]
        wall_ms_per_tick: u64,
    },
    /// Recompute metrics from a saved run log.
    Metrics {
        runlog: PathBuf,
        #[arg(long, default_value = "text")]
        format: ReportFormat,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn exit(self) -> ExitCode {
        match self {
            Failure::Validation(m) => {
                eprintln!("error: {m}");
                ExitCode::from(2)
            }
            Failure::Runtime(m) => {
                eprintln!("error: {m}");
                ExitCode::from(1)
            }
        }
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    Scenario::from_json_str(&text)
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn emit(log: &RunLog, format: ReportFormat, out_log: Option<&Path>) -> Result<(), Failure> {
    if let Some(p) = out_log {
        log.save(p)
            .map_err(|e| Failure::Runtime(format!("writing {}: {e}", p.display())))?;
    }
    let report = render(&log.metrics(), format);
    print!("{report}");
    if !report.ends_with('\n') {
        println!();
    }
    Ok(())
}

fn run_batch(
    scenario: &Scenario,
    seed: u64,
    format: ReportFormat,
    out_log: Option<&Path>,
) -> Result<(), Failure> {
    let log = Simulation::new(scenario, seed, RunOptions::default())
        .map_err(|e| Failure::Validation(e.to_string()))?
        .run_to_end();
    emit(&log, format, out_log)
}

struct ServeArgs {
    http: SocketAddr,
    tcp: SocketAddr,
    wall_ms_per_tick: u64,
}

async fn serve(
    scenario: Scenario,
    seed: u64,
    format: ReportFormat,
    out_log: Option<PathBuf>,
    args: ServeArgs,
) -> Result<(), Failure> {
    let sim = Simulation::new(&scenario, seed, RunOptions::default())
        .map_err(|e| Failure::Validation(e.to_string()))?;
    let state = AppState::new(sim);

    let http = tokio::net::TcpListener::bind(args.http)
        .await
        .map_err(|e| Failure::Runtime(format!("bind {}: {e}", args.http)))?;
    let tcp = tokio::net::TcpListener::bind(args.tcp)
        .await
        .map_err(|e| Failure::Runtime(format!("bind {}: {e}", args.tcp)))?;
    tracing::info!(http = %http.local_addr().unwrap(), tcp = %tcp.local_addr().unwrap(), "serving");
    eprintln!(
        "http on {}, tcp ingest on {}",
        http.local_addr().unwrap(),
        tcp.local_addr().unwrap()
    );

    let app = router(state.clone());
    let http_task = tokio::spawn(async move { axum::serve(http, app).await });
    let tcp_task = tokio::spawn(serve_tcp(tcp, state.clone()));

    let last: Option<Millis> = if args.wall_ms_per_tick == 0 {
        state.with_sim(|s| {
            while s.tick().is_some() {}
            s.now()
        })
    } else {
        run_clock(state.clone(), Duration::from_millis(args.wall_ms_per_tick)).await
    };
    tracing::info!(t = ?last, "horizon reached");
    let log = state.with_sim(|s| s.snapshot());
    emit(&log, format, out_log.as_deref())?;
    eprintln!("horizon reached; still serving, ctrl-c to stop");

    tokio::select! {
        r = http_task => match r {
            Ok(Ok(())) => Ok(()),
            Ok(Err(e)) => Err(Failure::Runtime(format!("http server: {e}"))),
            Err(e) => Err(Failure::Runtime(format!("http server: {e}"))),
        },
        r = tcp_task => Err(Failure::Runtime(format!("tcp ingest stopped: {r:?}"))),
        _ = tokio::signal::ctrl_c() => Ok(()),
    }
}

fn metrics(runlog: &Path, format: ReportFormat) -> Result<(), Failure> {
    if !runlog.exists() {
        return Err(Failure::Runtime(format!(
            "{}: no such file",
            runlog.display()
        )));
    }
    let log = RunLog::load(runlog).map_err(Failure::Validation)?;
    emit(&log, format, None)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            format,
            out_log,
            serve: live,
            http,
            tcp,
            wall_ms_per_tick,
        } => load_scenario(&scenario).and_then(|sc| {
            if !live {
                return run_batch(&sc, seed, format, out_log.as_deref());
            }
            let rt = tokio::runtime::Runtime::new()
                .map_err(|e| Failure::Runtime(format!("starting runtime: {e}")))?;
            rt.block_on(serve(
                sc,
                seed,
                format,
                out_log,
                ServeArgs {
                    http,
                    tcp,
                    wall_ms_per_tick,
                },
            ))
        }),
        Command::Metrics { runlog, format } => metrics(&runlog, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}
