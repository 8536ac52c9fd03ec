use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use keygen_energy::analysis::{aggregate, fleet_savings, write_outputs, FleetScenario, LevelMap, NULL_LABEL};
use keygen_energy::clock::{SharedClock, SystemClock};
use keygen_energy::collector::{prompt_port, select_port, serve, CollectorConfig};
use keygen_energy::meter::{list_serial_ports, open_serial, MeterBackend, SimMeter, SimProfile, Tc66Meter};
use keygen_energy::protocol::DEFAULT_PORT;
use keygen_energy::runner::{
    parse_batch_file, ExperimentSpec, KeygenCommand, PlatformHooks, RunError, Runner, UdpSink,
    DEFAULT_POLL_HZ,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_WORKLOAD: u8 = 3;

#[derive(Parser)]
#[command(name = "keygen-energy", version, about = "Energy benchmarking of key generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment on the device under test.
    Experiment {
        #[arg(long)]
        algorithm: String,
        #[arg(long)]
        iterations: u64,
        #[command(flatten)]
        dut: DutArgs,
    },
    /// Run every `<algorithm>,<iterations>` line of a file.
    Batch {
        /// Replace every line's iteration count.
        #[arg(long)]
        iterations: Option<u64>,
        file: PathBuf,
        #[command(flatten)]
        dut: DutArgs,
    },
    /// Listen for experiments and record the meter.
    Collect {
        /// Serial port of the meter; skips the selection menu.
        #[arg(long)]
        com: Option<String>,
        #[arg(long, env = "KEYGEN_ENERGY_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Backend::Tc66)]
        backend: Backend,
        /// Power profile for the simulated meter (TOML).
        #[arg(long)]
        sim_profile: Option<PathBuf>,
        /// Seconds without STOP and without changing readings before a
        /// session is closed as truncated.
        #[arg(long, default_value_t = 120.0)]
        idle_timeout: f64,
        /// Exit after this many sessions.
        #[arg(long)]
        sessions: Option<usize>,
        /// Seconds to wait for a port choice before taking the first.
        #[arg(long, default_value_t = 10)]
        menu_timeout: u64,
    },
    /// Turn AllResults.csv into level tables, charts and a fleet report.
    Analyze {
        #[arg(long)]
        all_results: PathBuf,
        #[arg(long)]
        levels: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        fleet: Option<PathBuf>,
        #[arg(long, default_value = NULL_LABEL)]
        null_label: String,
    },
}

#[derive(Args)]
struct DutArgs {
    /// Collector address as host:port.
    #[arg(long, env = "KEYGEN_ENERGY_COLLECTOR", default_value_t = format!("127.0.0.1:{DEFAULT_PORT}"))]
    collector: String,
    /// Seconds to wait after pinning fan and clock.
    #[arg(long, default_value_t = 5.0)]
    settle: f64,
    #[arg(long, default_value_t = DEFAULT_POLL_HZ)]
    poll_hz: f64,
    /// TOML file with set_fan_max / pin_cpu_clock / restore / read_temp commands.
    #[arg(long)]
    hooks: Option<PathBuf>,
    #[arg(long, default_value = "openssl")]
    keygen_binary: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Tc66,
    Sim,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error: error.into(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Experiment {
            algorithm,
            iterations,
            dut,
        } => {
            let (mut runner, template) = dut_runner(&dut)?;
            let spec = ExperimentSpec {
                algorithm_label: algorithm,
                iterations,
                ..template
            };
            runner.run_experiment(&spec).map_err(run_failure)?;
            Ok(())
        }
        Command::Batch { iterations, file, dut } => {
            let text = std::fs::read_to_string(&file)
                .with_context(|| file.display().to_string())
                .map_err(config)?;
            let lines = parse_batch_file(&text)
                .with_context(|| file.display().to_string())
                .map_err(config)?;
            let (mut runner, template) = dut_runner(&dut)?;
            match runner.run_batch(&lines, iterations, &template) {
                Ok(reports) => {
                    println!("Batch complete: {} experiment(s)", reports.len());
                    Ok(())
                }
                Err(e) => {
                    println!("Batch stopped after {} experiment(s)", e.completed.len());
                    let code = run_failure_code(&e.source);
                    Err(Failure {
                        code,
                        error: anyhow!(e),
                    })
                }
            }
        }
        Command::Collect {
            com,
            port,
            out,
            backend,
            sim_profile,
            idle_timeout,
            sessions,
            menu_timeout,
        } => collect(
            com,
            port,
            out,
            backend,
            sim_profile,
            idle_timeout,
            sessions,
            Duration::from_secs(menu_timeout),
        ),
        Command::Analyze {
            all_results,
            levels,
            out,
            fleet,
            null_label,
        } => analyze(&all_results, levels.as_deref(), &out, fleet.as_deref(), &null_label),
    }
}

fn dut_runner(dut: &DutArgs) -> Result<(Runner<UdpSink>, ExperimentSpec), Failure> {
    if !(dut.settle >= 0.0 && dut.settle.is_finite()) {
        return Err(config(anyhow!("--settle must be a non-negative number of seconds")));
    }
    let hooks = match &dut.hooks {
        Some(path) => PlatformHooks::load(path).map_err(|e| config(anyhow!(e)))?,
        None => PlatformHooks::default(),
    };
    let sink = UdpSink::connect(dut.collector.as_str())
        .with_context(|| format!("collector address {}", dut.collector))
        .map_err(config)?;
    let clock: SharedClock = Arc::new(SystemClock::new());
    let runner = Runner::new(sink, clock)
        .with_hooks(hooks)
        .with_keygen(KeygenCommand::with_binary(&dut.keygen_binary));
    let template = ExperimentSpec::new("", 1)
        .with_settle(Duration::from_secs_f64(dut.settle))
        .with_poll_hz(dut.poll_hz);
    Ok((runner, template))
}

fn run_failure_code(e: &RunError) -> u8 {
    match e {
        RunError::Params(_) => EXIT_CONFIG,
        RunError::Workload { .. } => EXIT_WORKLOAD,
    }
}

fn run_failure(e: RunError) -> Failure {
    Failure {
        code: run_failure_code(&e),
        error: e.into(),
    }
}

#[allow(clippy::too_many_arguments)]
fn collect(
    com: Option<String>,
    port: u16,
    out: PathBuf,
    backend: Backend,
    sim_profile: Option<PathBuf>,
    idle_timeout: f64,
    sessions: Option<usize>,
    menu_timeout: Duration,
) -> Result<(), Failure> {
    if !(idle_timeout > 0.0 && idle_timeout.is_finite()) {
        return Err(config(anyhow!("--idle-timeout must be positive")));
    }
    let clock: SharedClock = Arc::new(SystemClock::new());
    let factory: Box<dyn FnOnce() -> _> = match backend {
        Backend::Sim => {
            let profile = match &sim_profile {
                Some(path) => SimProfile::load(path).map_err(config)?,
                None => SimProfile::constant(5.0),
            };
            let clock = clock.clone();
            Box::new(move || Ok(Box::new(SimMeter::new(profile, clock)) as Box<dyn MeterBackend>))
        }
        Backend::Tc66 => {
            let candidates = list_serial_ports();
            let chosen = select_port(&candidates, com.as_deref(), |ports| {
                prompt_port(ports, &mut io::stderr(), BufReader::new(io::stdin()), menu_timeout)
            })
            .map_err(config)?;
            println!("Selected {chosen}");
            let clock = clock.clone();
            Box::new(move || {
                let port = open_serial(&chosen)?;
                Ok(Box::new(Tc66Meter::new(port, clock, chosen)) as Box<dyn MeterBackend>)
            })
        }
    };
    let config_ = CollectorConfig {
        bind: ([0, 0, 0, 0], port).into(),
        out_dir: out,
        idle_timeout: Duration::from_secs_f64(idle_timeout),
        live_status: true,
        max_sessions: sessions,
    };
    println!("Please start the experiment on the device under test");
    serve(config_, clock, factory).map_err(config)?;
    Ok(())
}

fn analyze(
    all_results: &Path,
    levels: Option<&Path>,
    out: &Path,
    fleet: Option<&Path>,
    null_label: &str,
) -> Result<(), Failure> {
    let map = match levels {
        Some(path) => LevelMap::load(path).map_err(config)?,
        None => LevelMap::builtin(),
    };
    let report = aggregate(all_results, null_label, &map).map_err(config)?;
    let fleet_report = match fleet {
        Some(path) => {
            let scenario = FleetScenario::load(path).map_err(config)?;
            Some(fleet_savings(&scenario).map_err(config)?)
        }
        None => None,
    };
    print!("{}", report.summary_text());
    if let Some(f) = &fleet_report {
        println!("\n{f}");
    }
    for path in write_outputs(&report, out, fleet_report.as_ref()).map_err(config)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
