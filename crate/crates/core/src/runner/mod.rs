//! Device-under-test side: pin the platform, run the workload, and bracket
//! it with GETREADY / START / STOP datagrams.

mod batch;
mod hooks;
mod workload;

use std::io::{self, Write};
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::time::Duration;

use chrono::NaiveDateTime;
use thiserror::Error;

pub use batch::{parse_batch_file, BatchLine, BatchParseError};
pub use hooks::{parse_temperature, HookCommand, PlatformHooks};
pub use workload::{
    null_iteration, KeygenCommand, KeygenWorkload, NullWorkload, Workload, WorkloadError, NULL_DELAY,
};

use crate::clock::SharedClock;
use crate::protocol::{encode_control, ControlMessage, EncodeError, ExperimentParams, FieldError};

pub const DEFAULT_SETTLE: Duration = Duration::from_secs(5);
pub const DEFAULT_POLL_HZ: f64 = 10.0;
const ID_FORMAT: &str = "%Y%m%d%H%M%S";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub algorithm_label: String,
    pub iterations: u64,
    pub settle: Duration,
    pub poll_hz: f64,
}

impl ExperimentSpec {
    pub fn new(algorithm_label: impl Into<String>, iterations: u64) -> Self {
        Self {
            algorithm_label: algorithm_label.into(),
            iterations,
            settle: DEFAULT_SETTLE,
            poll_hz: DEFAULT_POLL_HZ,
        }
    }

    pub fn with_settle(mut self, settle: Duration) -> Self {
        self.settle = settle;
        self
    }

    pub fn with_poll_hz(mut self, poll_hz: f64) -> Self {
        self.poll_hz = poll_hz;
        self
    }

    pub fn is_null(&self) -> bool {
        self.algorithm_label == crate::analysis::NULL_LABEL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DutRunReport {
    pub experiment_id: String,
    pub algorithm_label: String,
    pub iterations: u64,
    /// GETREADY to STOP, settle time included.
    pub wall_seconds: f64,
    /// START to STOP.
    pub workload_seconds: f64,
    pub start_temp: Option<f64>,
    pub stop_temp: Option<f64>,
    pub iterations_completed: u64,
    /// A fan or clock hook was missing or failed.
    pub unpinned: bool,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid experiment: {0}")]
    Params(#[from] FieldError),
    #[error("iteration {index} of {algorithm} failed: {source}")]
    Workload {
        algorithm: String,
        index: u64,
        source: WorkloadError,
    },
}

impl RunError {
    pub fn is_environment(&self) -> bool {
        matches!(self, RunError::Workload { source, .. } if source.is_environment())
    }
}

/// Where control messages go.
pub trait ControlSink {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()>;
}

pub struct UdpSink {
    socket: UdpSocket,
    target: SocketAddr,
}

impl UdpSink {
    pub fn connect(target: impl ToSocketAddrs) -> io::Result<Self> {
        let target = target
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address for collector"))?;
        let bind: SocketAddr = if target.is_ipv4() {
            ([0, 0, 0, 0], 0).into()
        } else {
            (std::net::Ipv6Addr::UNSPECIFIED, 0).into()
        };
        Ok(Self {
            socket: UdpSocket::bind(bind)?,
            target,
        })
    }

    pub fn target(&self) -> SocketAddr {
        self.target
    }
}

impl ControlSink for UdpSink {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        self.socket.send_to(datagram, self.target).map(|_| ())
    }
}

/// Collects datagrams in memory.
#[derive(Debug, Default, Clone)]
pub struct RecordingSink {
    pub sent: Vec<Vec<u8>>,
}

impl ControlSink for RecordingSink {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        self.sent.push(datagram.to_vec());
        Ok(())
    }
}

impl<S: ControlSink + ?Sized> ControlSink for &mut S {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        (**self).send(datagram)
    }
}

#[derive(Debug, Error)]
#[error("batch line {line} ({algorithm}): {source}")]
pub struct BatchError {
    /// Reports of the experiments that finished before the failure.
    pub completed: Vec<DutRunReport>,
    pub line: usize,
    pub algorithm: String,
    pub source: RunError,
}

pub struct Runner<S: ControlSink> {
    sink: S,
    clock: SharedClock,
    hooks: PlatformHooks,
    keygen: KeygenCommand,
    console: Box<dyn Write + Send>,
    last_id: Option<String>,
}

struct RestoreGuard<'a>(&'a PlatformHooks);

impl Drop for RestoreGuard<'_> {
    fn drop(&mut self) {
        self.0.restore();
    }
}

impl<S: ControlSink> Runner<S> {
    pub fn new(sink: S, clock: SharedClock) -> Self {
        Self {
            sink,
            clock,
            hooks: PlatformHooks::default(),
            keygen: KeygenCommand::default(),
            console: Box::new(io::stdout()),
            last_id: None,
        }
    }

    pub fn with_hooks(mut self, hooks: PlatformHooks) -> Self {
        self.hooks = hooks;
        self
    }

    pub fn with_keygen(mut self, keygen: KeygenCommand) -> Self {
        self.keygen = keygen;
        self
    }

    pub fn with_console(mut self, console: Box<dyn Write + Send>) -> Self {
        self.console = console;
        self
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn into_sink(self) -> S {
        self.sink
    }

    fn say(&mut self, line: &str) {
        let _ = writeln!(self.console, "{line}");
        let _ = self.console.flush();
    }

    fn send(&mut self, msg: &ControlMessage) {
        let datagram = match encode_control(msg) {
            Ok(d) => d,
            Err(EncodeError::Field(e)) => unreachable!("parameters validated before sending: {e}"),
            Err(e) => {
                self.say(&format!("UDP: cannot encode {}: {e}", msg.kind()));
                return;
            }
        };
        let text = String::from_utf8_lossy(&datagram).into_owned();
        match self.sink.send(&datagram) {
            Ok(()) => self.say(&format!("UDP: Sent '{text}'")),
            Err(e) => self.say(&format!("UDP: failed to send '{text}': {e}")),
        }
    }

    /// Timestamp id, bumped by one second when it would not sort after the
    /// previous one.
    fn next_id(&mut self) -> String {
        let mut stamp = self.clock.timestamp().naive_utc();
        if let Some(last) = self
            .last_id
            .as_deref()
            .and_then(|s| NaiveDateTime::parse_from_str(s, ID_FORMAT).ok())
        {
            let floor = last + chrono::Duration::seconds(1);
            if stamp < floor {
                stamp = floor;
            }
        }
        let id = stamp.format(ID_FORMAT).to_string();
        self.last_id = Some(id.clone());
        id
    }

    /// Run the NULL delay or the configured key-generation command.
    pub fn run_experiment(&mut self, spec: &ExperimentSpec) -> Result<DutRunReport, RunError> {
        let clock = self.clock.clone();
        let keygen = self.keygen.clone();
        if spec.is_null() {
            self.run_with_workload(spec, &mut NullWorkload { clock: &*clock })
        } else {
            self.run_with_workload(
                spec,
                &mut KeygenWorkload {
                    command: &keygen,
                    algorithm_label: &spec.algorithm_label,
                },
            )
        }
    }

    pub fn run_with_workload(
        &mut self,
        spec: &ExperimentSpec,
        workload: &mut dyn Workload,
    ) -> Result<DutRunReport, RunError> {
        let id = self.next_id();
        let params = ExperimentParams::new(&id, &spec.algorithm_label, spec.iterations, spec.poll_hz);
        params.validate()?;
        let clock = self.clock.clone();
        let hooks = self.hooks.clone();

        let began = clock.now();
        self.send(&ControlMessage::GetReady(params));
        self.say(&format!(
            "Starting experiment {id}: {} x {}",
            spec.iterations, spec.algorithm_label
        ));

        let _restore = RestoreGuard(&hooks);
        self.say("Setting up environment: fan to maximum, CPU clock pinned");
        let pinned = hooks.pin();
        if !pinned {
            self.say("Warning: environment hooks missing or failed, running unpinned");
        }
        clock.sleep(spec.settle);
        let start_temp = hooks.read_temperature();
        self.say(&format!("Start Temperature: {}", show_temp(start_temp)));

        self.send(&ControlMessage::Start);
        self.say(&format!(
            "STARTing experiment: {} iterations of {}",
            spec.iterations, spec.algorithm_label
        ));
        let work_began = clock.now();
        let mut completed = 0;
        let mut failure = None;
        while completed < spec.iterations {
            if let Err(e) = workload.run_once() {
                failure = Some(e);
                break;
            }
            completed += 1;
        }
        let stopped = clock.now();
        match &failure {
            None => self.say("Experiment finished"),
            Some(e) => self.say(&format!("Experiment failed at iteration {completed}: {e}")),
        }
        self.send(&ControlMessage::Stop);

        let wall_seconds = (stopped - began).as_secs_f64();
        let workload_seconds = (stopped - work_began).as_secs_f64();
        let stop_temp = hooks.read_temperature();
        self.say(&format!("Time to run: {workload_seconds:.3} s"));
        self.say(&format!("Start Temperature: {}", show_temp(start_temp)));
        self.say(&format!("Stop Temperature: {}", show_temp(stop_temp)));
        drop(_restore);
        self.say("Environment restored to defaults");

        if let Some(source) = failure {
            return Err(RunError::Workload {
                algorithm: spec.algorithm_label.clone(),
                index: completed,
                source,
            });
        }
        Ok(DutRunReport {
            experiment_id: id,
            algorithm_label: spec.algorithm_label.clone(),
            iterations: spec.iterations,
            wall_seconds,
            workload_seconds,
            start_temp,
            stop_temp,
            iterations_completed: completed,
            unpinned: !pinned,
        })
    }

    /// Run every line in order. `iterations` replaces each line's count when
    /// given. Stops at the first failure.
    pub fn run_batch(
        &mut self,
        lines: &[BatchLine],
        iterations: Option<u64>,
        template: &ExperimentSpec,
    ) -> Result<Vec<DutRunReport>, Box<BatchError>> {
        let mut reports = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            let spec = ExperimentSpec {
                algorithm_label: line.algorithm_label.clone(),
                iterations: iterations.unwrap_or(line.iterations),
                ..template.clone()
            };
            match self.run_experiment(&spec) {
                Ok(report) => reports.push(report),
                Err(source) => {
                    return Err(Box::new(BatchError {
                        completed: reports,
                        line: i + 1,
                        algorithm: line.algorithm_label.clone(),
                        source,
                    }))
                }
            }
        }
        Ok(reports)
    }
}

fn show_temp(t: Option<f64>) -> String {
    t.map_or_else(|| "n/a".to_owned(), |t| format!("{t:.1}'C"))
}
