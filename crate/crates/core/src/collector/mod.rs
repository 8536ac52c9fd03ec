//! Collector side: react to control datagrams, poll the meter between START
//! and STOP, write per-sample CSV files and append session totals.
//!
//! [`Coordinator`] owns the state machine and every file. [`serve`] wraps it
//! with a UDP listener thread and an acquisition thread; [`record_session`]
//! drives it inline, which is what deterministic virtual-clock tests use.

mod inline;
mod port;
mod serve;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use thiserror::Error;

pub use inline::record_session;
pub use port::{prompt_port, select_port};
pub use serve::{serve, Collector, CollectorConfig, ShutdownHandle};

use crate::analysis::JOULES_PER_MWH;
use crate::clock::SharedClock;
use crate::meter::{MeterError, MeterReading};
use crate::protocol::{advance_state, CollectorState, ControlMessage, ExperimentParams};
use crate::results::{append_summary, ResultsError, SessionStatus, SummaryRow, ALL_RESULTS_FILE};

pub const DATA_SCHEMA: &str = "# schema=1 columns=timestamp,elapsed_s,voltage_v,current_a,power_w,energy_mwh,energy_j";
pub const DATA_HEADER: &str = "timestamp,elapsed_s,voltage_v,current_a,power_w,energy_mwh,energy_j";
pub const MAX_CONSECUTIVE_POLL_ERRORS: u32 = 3;
pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(120);
/// How long to wait for the final sample after STOP before finalizing anyway.
const STOP_GRACE: f64 = 2.0;

#[derive(Debug, Error)]
pub enum CollectorError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Results(#[from] ResultsError),
    #[error("no serial ports found; pass one explicitly")]
    NoPorts,
    #[error(transparent)]
    Meter(#[from] MeterError),
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CollectorError + '_ {
    move |source| CollectorError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Replace spaces and path separators so a label is safe in a file name.
pub fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_whitespace() || matches!(c, '/' | '\\' | ':') { '_' } else { c })
        .collect()
}

/// `<id>-<label>-<iterations>_data.csv`
pub fn data_file_name(params: &ExperimentParams) -> String {
    format!(
        "{}-{}-{}_data.csv",
        params.experiment_id,
        sanitize_label(&params.algorithm_label),
        params.iterations
    )
}

/// UTC ISO-8601 with four fractional digits.
pub fn format_timestamp(stamp: DateTime<Utc>) -> String {
    format!(
        "{}.{:04}Z",
        stamp.format("%Y-%m-%dT%H:%M:%S"),
        stamp.timestamp_subsec_nanos() / 100_000
    )
}

/// One per-sample CSV line, relative to the session's first reading.
pub fn sample_row(reading: &MeterReading, first: &MeterReading, stamp: DateTime<Utc>) -> String {
    let delta_mwh = reading.energy_mwh.saturating_sub(first.energy_mwh);
    format!(
        "{},{:.3},{:.4},{:.5},{:.4},{},{:.1}",
        format_timestamp(stamp),
        reading.t - first.t,
        reading.voltage,
        reading.current,
        reading.power,
        reading.energy_mwh,
        delta_mwh as f64 * JOULES_PER_MWH
    )
}

fn millis(seconds: f64) -> i64 {
    (seconds * 1000.0).round() as i64
}

/// What the acquisition role should do next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Directive {
    Nothing,
    Begin { tag: u64, poll_hz: f64 },
    End { tag: u64 },
}

/// One experiment from GETREADY to its summary row.
#[derive(Debug)]
pub struct AcquisitionSession {
    pub params: ExperimentParams,
    pub tag: u64,
    pub data_path: PathBuf,
    pub first: Option<MeterReading>,
    pub last: Option<MeterReading>,
    pub first_stamp: Option<DateTime<Utc>>,
    pub sample_count: u64,
    writer: BufWriter<File>,
    last_flush_t: f64,
    poll_errors: u32,
    last_change: f64,
    stop_requested: Option<f64>,
}

impl AcquisitionSession {
    pub fn delta_mwh(&self) -> u64 {
        match (self.first, self.last) {
            (Some(a), Some(b)) => b.energy_mwh.saturating_sub(a.energy_mwh),
            _ => 0,
        }
    }

    pub fn sample_span(&self) -> f64 {
        match (self.first, self.last) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Summary for AllResults. `dut_wall_seconds` overrides the sample span
    /// when the device reported its own timing.
    pub fn summary(&self, status: SessionStatus, dut_wall_seconds: Option<f64>) -> SummaryRow {
        let stamp = self.first_stamp.map_or_else(String::new, |s| s.format("%Y-%m-%dT%H:%M:%SZ").to_string());
        if self.sample_count == 0 {
            return SummaryRow::new(stamp, &self.params.algorithm_label, self.params.iterations, 0.0, 0.0, SessionStatus::NoData);
        }
        SummaryRow::new(
            stamp,
            &self.params.algorithm_label,
            self.params.iterations,
            self.delta_mwh() as f64 * JOULES_PER_MWH,
            dut_wall_seconds.unwrap_or_else(|| self.sample_span()),
            status,
        )
    }
}

pub struct Coordinator {
    out_dir: PathBuf,
    clock: SharedClock,
    console: Box<dyn Write + Send>,
    idle_timeout: Duration,
    live_status: bool,
    status_open: bool,
    meter_name: String,
    state: CollectorState,
    session: Option<AcquisitionSession>,
    next_tag: u64,
    completed: Vec<SummaryRow>,
}

impl Coordinator {
    pub fn new(out_dir: impl Into<PathBuf>, clock: SharedClock) -> Self {
        Self {
            out_dir: out_dir.into(),
            clock,
            console: Box::new(io::stdout()),
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            live_status: false,
            status_open: false,
            meter_name: "meter".into(),
            state: CollectorState::Idle,
            session: None,
            next_tag: 1,
            completed: Vec::new(),
        }
    }

    pub fn with_console(mut self, console: Box<dyn Write + Send>) -> Self {
        self.console = console;
        self
    }

    pub fn with_idle_timeout(mut self, timeout: Duration) -> Self {
        self.idle_timeout = timeout;
        self
    }

    /// Rewrite a "Joules thus far" line after every sample.
    pub fn with_live_status(mut self, on: bool) -> Self {
        self.live_status = on;
        self
    }

    pub fn with_meter_name(mut self, name: impl Into<String>) -> Self {
        self.meter_name = name.into();
        self
    }

    pub fn idle_timeout(&self) -> Duration {
        self.idle_timeout
    }

    pub fn state(&self) -> CollectorState {
        self.state
    }

    pub fn session(&self) -> Option<&AcquisitionSession> {
        self.session.as_ref()
    }

    /// Summary rows of every finalized session, oldest first.
    pub fn completed(&self) -> &[SummaryRow] {
        &self.completed
    }

    pub fn all_results_path(&self) -> PathBuf {
        self.out_dir.join(ALL_RESULTS_FILE)
    }

    pub fn say(&mut self, line: &str) {
        if self.status_open {
            let _ = writeln!(self.console);
            self.status_open = false;
        }
        let _ = writeln!(self.console, "{line}");
        let _ = self.console.flush();
    }

    pub fn handle_control(&mut self, msg: ControlMessage) -> Result<Directive, CollectorError> {
        match (&msg, self.state) {
            (ControlMessage::GetReady(p), CollectorState::Ready | CollectorState::Acquiring)
                if self.session.as_ref().is_some_and(|s| &s.params == p) =>
            {
                return Ok(Directive::Nothing);
            }
            (ControlMessage::GetReady(_), CollectorState::Ready) => {
                self.say("New GETREADY replaces the pending experiment");
                self.discard_pending();
                self.state = CollectorState::Idle;
            }
            (ControlMessage::GetReady(_), CollectorState::Acquiring) => {
                self.say("New GETREADY while acquiring; closing current session as truncated");
                let tag = self.session.as_ref().map(|s| s.tag);
                self.finalize(SessionStatus::Truncated, None)?;
                let directive = self.handle_control(msg)?;
                return Ok(match (directive, tag) {
                    (Directive::Nothing, Some(tag)) => Directive::End { tag },
                    (d, _) => d,
                });
            }
            (ControlMessage::GetReady(_), CollectorState::Done) => {
                if self.session.is_some() {
                    self.finalize(SessionStatus::Ok, None)?;
                }
                self.state = CollectorState::Idle;
            }
            (ControlMessage::Stop, CollectorState::Done) => return Ok(Directive::Nothing),
            _ => {}
        }

        let next = match advance_state(self.state, &msg) {
            Ok(next) => next,
            Err(e) => {
                self.say(&format!("Protocol-order warning: {e}; ignored"));
                return Ok(Directive::Nothing);
            }
        };
        let directive = match msg {
            ControlMessage::GetReady(params) => {
                self.open_session(params)?;
                Directive::Nothing
            }
            ControlMessage::Start => {
                let session = self.session.as_mut().expect("Ready implies a session");
                session.last_change = self.clock.now_secs();
                let (tag, poll_hz) = (session.tag, session.params.poll_hz);
                self.say("START signal received, beginning data acquisition");
                self.say(&format!("Data Acquisition: polling {} at {poll_hz} Hz, counters to 0", self.meter_name));
                Directive::Begin { tag, poll_hz }
            }
            ControlMessage::Stop => {
                let session = self.session.as_mut().expect("Acquiring implies a session");
                session.stop_requested = Some(self.clock.now_secs());
                let tag = session.tag;
                self.say("STOP signal received, taking final sample");
                Directive::End { tag }
            }
        };
        self.state = next;
        Ok(directive)
    }

    fn open_session(&mut self, params: ExperimentParams) -> Result<(), CollectorError> {
        fs::create_dir_all(&self.out_dir).map_err(io_error(&self.out_dir))?;
        let data_path = self.out_dir.join(data_file_name(&params));
        let file = File::create(&data_path).map_err(io_error(&data_path))?;
        let mut writer = BufWriter::new(file);
        writeln!(writer, "{DATA_SCHEMA}\n{DATA_HEADER}")
            .and_then(|_| writer.flush())
            .map_err(io_error(&data_path))?;
        self.say(&format!(
            "Experiment parameters: id={} algorithm={} iterations={} poll_hz={}",
            params.experiment_id, params.algorithm_label, params.iterations, params.poll_hz
        ));
        self.say(&format!("Output file opened: {}", data_path.display()));
        self.say(&format!("GETREADY received; meter {} standing by", self.meter_name));
        let tag = self.next_tag;
        self.next_tag += 1;
        self.session = Some(AcquisitionSession {
            params,
            tag,
            data_path,
            first: None,
            last: None,
            first_stamp: None,
            sample_count: 0,
            writer,
            last_flush_t: f64::NEG_INFINITY,
            poll_errors: 0,
            last_change: self.clock.now_secs(),
            stop_requested: None,
        });
        Ok(())
    }

    /// Drop a session that never started. Its data file holds only headers.
    fn discard_pending(&mut self) {
        if let Some(session) = self.session.take() {
            drop(session.writer);
            let _ = fs::remove_file(&session.data_path);
        }
    }

    fn active(&mut self, tag: u64) -> Option<&mut AcquisitionSession> {
        self.session.as_mut().filter(|s| s.tag == tag)
    }

    /// Record one sample. Samples from stale sessions and samples that do
    /// not move time forward are dropped.
    pub fn on_sample(&mut self, tag: u64, reading: MeterReading, stamp: DateTime<Utc>) -> Result<(), CollectorError> {
        if !matches!(self.state, CollectorState::Acquiring | CollectorState::Done) {
            return Ok(());
        }
        let now = self.clock.now_secs();
        let Some(session) = self.session.as_mut().filter(|s| s.tag == tag) else { return Ok(()) };
        // elapsed_s is written in milliseconds; a sample that would repeat
        // the previous row's time is dropped
        if let (Some(first), Some(last)) = (session.first, session.last) {
            if millis(reading.t - first.t) <= millis(last.t - first.t) {
                return Ok(());
            }
        }
        let first = *session.first.get_or_insert(reading);
        session.first_stamp.get_or_insert(stamp);
        let changed = session
            .last
            .is_none_or(|l| l.energy_mwh != reading.energy_mwh || l.power != reading.power);
        if changed {
            session.last_change = now;
        }
        session.poll_errors = 0;
        session.last = Some(reading);
        session.sample_count += 1;
        let path = session.data_path.clone();
        writeln!(session.writer, "{}", sample_row(&reading, &first, stamp)).map_err(io_error(&path))?;
        if reading.t - session.last_flush_t >= 1.0 {
            session.writer.flush().map_err(io_error(&path))?;
            session.last_flush_t = reading.t;
        }
        if self.live_status {
            let joules = session.delta_mwh() as f64 * JOULES_PER_MWH;
            let elapsed = reading.t - first.t;
            let _ = write!(self.console, "\rJoules thus far: {joules:.1} J, {elapsed:.1} s elapsed");
            let _ = self.console.flush();
            self.status_open = true;
        }
        Ok(())
    }

    /// A failed poll. The third consecutive failure ends the session as
    /// truncated.
    pub fn on_poll_error(&mut self, tag: u64, error: &MeterError) -> Result<Directive, CollectorError> {
        let Some(session) = self.active(tag) else { return Ok(Directive::Nothing) };
        session.poll_errors += 1;
        let count = session.poll_errors;
        self.say(&format!("Meter poll failed ({count}/{MAX_CONSECUTIVE_POLL_ERRORS}): {error}"));
        if count >= MAX_CONSECUTIVE_POLL_ERRORS {
            self.finalize(SessionStatus::Truncated, None)?;
            return Ok(Directive::End { tag });
        }
        Ok(Directive::Nothing)
    }

    /// The acquisition role took its last sample after STOP.
    pub fn on_acquisition_finished(&mut self, tag: u64) -> Result<Option<SummaryRow>, CollectorError> {
        let ours = self.session.as_ref().is_some_and(|s| s.tag == tag && s.stop_requested.is_some());
        if !ours {
            return Ok(None);
        }
        self.say("Data Acquisition: meter released");
        self.finalize(SessionStatus::Ok, None)
    }

    /// Time-based checks: samples frozen for the idle timeout with no STOP,
    /// or a final sample that never arrived after STOP.
    pub fn check_idle(&mut self) -> Result<Directive, CollectorError> {
        let now = self.clock.now_secs();
        let Some(session) = &self.session else { return Ok(Directive::Nothing) };
        let tag = session.tag;
        if let Some(stop_at) = session.stop_requested {
            if now - stop_at > STOP_GRACE {
                self.finalize(SessionStatus::Ok, None)?;
            }
            return Ok(Directive::Nothing);
        }
        if self.state == CollectorState::Acquiring && now - session.last_change >= self.idle_timeout.as_secs_f64() {
            self.say(&format!(
                "No STOP and no change in readings for {} s; closing session as truncated",
                self.idle_timeout.as_secs_f64()
            ));
            self.finalize(SessionStatus::Truncated, None)?;
            return Ok(Directive::End { tag });
        }
        Ok(Directive::Nothing)
    }

    /// Close the current session: flush its data file, append one summary
    /// row and print the totals. The collector returns to Idle.
    pub fn finalize(
        &mut self,
        status: SessionStatus,
        dut_wall_seconds: Option<f64>,
    ) -> Result<Option<SummaryRow>, CollectorError> {
        let Some(mut session) = self.session.take() else { return Ok(None) };
        self.state = CollectorState::Idle;
        session.writer.flush().map_err(io_error(&session.data_path))?;
        self.say(&format!("Data logging finished: {}", session.data_path.display()));
        let row = session.summary(status, dut_wall_seconds);
        drop(session);
        self.say(&format!(
            "*Total Energy: {:.1} J over {:.3} s",
            row.gross_joules, row.wall_seconds
        ));
        self.say(&format!(
            "*Energy Rate: {:.4} J per 1,000 x {}",
            row.joules_per_1000, row.algorithm
        ));
        let all_results = self.all_results_path();
        append_summary(&all_results, &row)?;
        self.say(&format!(
            "Master:{ALL_RESULTS_FILE} {},{},{},{:.4},{:.3},{}",
            row.timestamp, row.algorithm, row.iterations, row.gross_joules, row.wall_seconds, row.status
        ));
        self.completed.push(row.clone());
        Ok(Some(row))
    }

    /// Finalize whatever is open, as truncated when acquisition was cut off.
    pub fn shutdown(&mut self) -> Result<Option<SummaryRow>, CollectorError> {
        match self.state {
            CollectorState::Ready => {
                self.discard_pending();
                self.state = CollectorState::Idle;
                Ok(None)
            }
            CollectorState::Acquiring => self.finalize(SessionStatus::Truncated, None),
            CollectorState::Done => self.finalize(SessionStatus::Ok, None),
            CollectorState::Idle => Ok(None),
        }
    }
}
