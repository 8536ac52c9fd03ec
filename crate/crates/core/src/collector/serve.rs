use std::io::{self, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use chrono::{DateTime, Utc};

use super::{CollectorError, Coordinator, Directive, DEFAULT_IDLE_TIMEOUT};
use crate::clock::{Pacer, SharedClock};
use crate::meter::{MeterBackend, MeterError, MeterReading};
use crate::protocol::{decode_control, ControlMessage, DEFAULT_PORT, MAX_DATAGRAM};
use crate::results::SummaryRow;

const LISTEN_POLL: Duration = Duration::from_millis(100);
const EVENT_POLL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone)]
pub struct CollectorConfig {
    pub bind: SocketAddr,
    pub out_dir: PathBuf,
    pub idle_timeout: Duration,
    pub live_status: bool,
    /// Exit after this many finalized sessions.
    pub max_sessions: Option<usize>,
}

impl Default for CollectorConfig {
    fn default() -> Self {
        Self {
            bind: ([0, 0, 0, 0], DEFAULT_PORT).into(),
            out_dir: PathBuf::from("."),
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            live_status: false,
            max_sessions: None,
        }
    }
}

/// Stops a running [`Collector`] from another thread.
#[derive(Debug, Clone)]
pub struct ShutdownHandle(Arc<AtomicBool>);

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    fn requested(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

enum Event {
    Control { msg: ControlMessage, text: String },
    Malformed { text: String, error: String },
    Sample { tag: u64, reading: MeterReading, stamp: DateTime<Utc> },
    PollError { tag: u64, error: MeterError },
    Finished { tag: u64 },
}

enum Command {
    Begin { tag: u64, poll_hz: f64 },
    End { tag: u64 },
}

pub struct Collector {
    socket: UdpSocket,
    config: CollectorConfig,
    clock: SharedClock,
    console: Box<dyn Write + Send>,
    shutdown: ShutdownHandle,
}

impl Collector {
    pub fn bind(config: CollectorConfig, clock: SharedClock) -> Result<Self, CollectorError> {
        let bind_error = |source| CollectorError::Bind {
            addr: config.bind.to_string(),
            source,
        };
        let socket = UdpSocket::bind(config.bind).map_err(bind_error)?;
        socket.set_read_timeout(Some(LISTEN_POLL)).map_err(bind_error)?;
        Ok(Self {
            socket,
            config,
            clock,
            console: Box::new(io::stdout()),
            shutdown: ShutdownHandle(Arc::new(AtomicBool::new(false))),
        })
    }

    pub fn with_console(mut self, console: Box<dyn Write + Send>) -> Self {
        self.console = console;
        self
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        self.shutdown.clone()
    }

    /// Serve until shut down (or `max_sessions` is reached). The backend is
    /// created once, up front, and owned by the acquisition thread.
    pub fn run<F>(self, backend_factory: F) -> Result<Vec<SummaryRow>, CollectorError>
    where
        F: FnOnce() -> Result<Box<dyn MeterBackend>, MeterError>,
    {
        let backend = backend_factory()?;
        let addr = self.local_addr().map_err(|source| CollectorError::Bind {
            addr: self.config.bind.to_string(),
            source,
        })?;
        let mut coordinator = Coordinator::new(&self.config.out_dir, self.clock.clone())
            .with_console(self.console)
            .with_idle_timeout(self.config.idle_timeout)
            .with_live_status(self.config.live_status)
            .with_meter_name(backend.describe());

        let (event_tx, event_rx) = mpsc::channel();
        let (command_tx, command_rx) = mpsc::channel();
        let listener = {
            let tx = event_tx.clone();
            let stop = self.shutdown.clone();
            let socket = self.socket;
            thread::spawn(move || listen(socket, tx, stop))
        };
        let acquisition = {
            let stop = self.shutdown.clone();
            let clock = self.clock.clone();
            thread::spawn(move || acquire(backend, clock, command_rx, event_tx, stop))
        };

        coordinator.say(&format!("Network Listener: UDP control messages on {addr}"));
        coordinator.say("Main thread started, waiting for GETREADY");
        let outcome = coordinate(&mut coordinator, &event_rx, &command_tx, &self.shutdown, self.config.max_sessions);
        self.shutdown.shutdown();
        let closing = coordinator.shutdown();
        let _ = listener.join();
        let _ = acquisition.join();
        coordinator.say("Cleanup complete; Network Listener stopped");
        outcome?;
        closing?;
        Ok(coordinator.completed().to_vec())
    }
}

/// Bind and serve on the calling thread.
pub fn serve<F>(config: CollectorConfig, clock: SharedClock, backend_factory: F) -> Result<Vec<SummaryRow>, CollectorError>
where
    F: FnOnce() -> Result<Box<dyn MeterBackend>, MeterError>,
{
    Collector::bind(config, clock)?.run(backend_factory)
}

fn coordinate(
    coordinator: &mut Coordinator,
    events: &Receiver<Event>,
    commands: &Sender<Command>,
    stop: &ShutdownHandle,
    max_sessions: Option<usize>,
) -> Result<(), CollectorError> {
    let forward = |d: Directive| {
        let cmd = match d {
            Directive::Nothing => return,
            Directive::Begin { tag, poll_hz } => Command::Begin { tag, poll_hz },
            Directive::End { tag } => Command::End { tag },
        };
        let _ = commands.send(cmd);
    };
    while !stop.requested() {
        match events.recv_timeout(EVENT_POLL) {
            Ok(Event::Control { msg, text }) => {
                coordinator.say(&format!("Received: '{text}'"));
                forward(coordinator.handle_control(msg)?);
            }
            Ok(Event::Malformed { text, error }) => {
                coordinator.say(&format!("Ignoring malformed datagram '{text}': {error}"));
            }
            Ok(Event::Sample { tag, reading, stamp }) => coordinator.on_sample(tag, reading, stamp)?,
            Ok(Event::PollError { tag, error }) => forward(coordinator.on_poll_error(tag, &error)?),
            Ok(Event::Finished { tag }) => {
                coordinator.on_acquisition_finished(tag)?;
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
        forward(coordinator.check_idle()?);
        if max_sessions.is_some_and(|n| coordinator.completed().len() >= n) {
            coordinator.say("STOP message handled; all sessions complete");
            break;
        }
    }
    Ok(())
}

fn listen(socket: UdpSocket, events: Sender<Event>, stop: ShutdownHandle) {
    let mut buf = [0u8; MAX_DATAGRAM * 2];
    while !stop.requested() {
        let n = match socket.recv_from(&mut buf) {
            Ok((n, _)) => n,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
            Err(e) => {
                log::warn!("udp receive failed: {e}");
                continue;
            }
        };
        let text = String::from_utf8_lossy(&buf[..n]).trim_end().to_owned();
        let event = match decode_control(&buf[..n]) {
            Ok(msg) => Event::Control { msg, text },
            Err(e) => Event::Malformed {
                text,
                error: e.to_string(),
            },
        };
        if events.send(event).is_err() {
            break;
        }
    }
}

fn acquire(
    mut backend: Box<dyn MeterBackend>,
    clock: SharedClock,
    commands: Receiver<Command>,
    events: Sender<Event>,
    stop: ShutdownHandle,
) {
    let poll = |backend: &mut Box<dyn MeterBackend>, tag: u64| {
        let event = match backend.poll() {
            Ok(reading) => Event::Sample {
                tag,
                reading,
                stamp: clock.timestamp(),
            },
            Err(error) => Event::PollError { tag, error },
        };
        events.send(event).is_ok()
    };
    let mut active: Option<(u64, Pacer)> = None;
    while !stop.requested() {
        let command = if active.is_some() {
            match commands.try_recv() {
                Ok(c) => Some(c),
                Err(mpsc::TryRecvError::Empty) => None,
                Err(mpsc::TryRecvError::Disconnected) => break,
            }
        } else {
            match commands.recv_timeout(LISTEN_POLL) {
                Ok(c) => Some(c),
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => break,
            }
        };
        match command {
            Some(Command::Begin { tag, poll_hz }) => {
                active = Some((tag, Pacer::from_hz(poll_hz, clock.now())));
                if !poll(&mut backend, tag) {
                    break;
                }
                continue;
            }
            Some(Command::End { tag }) => {
                if active.as_ref().is_some_and(|(t, _)| *t == tag) {
                    active = None;
                    if !poll(&mut backend, tag) || events.send(Event::Finished { tag }).is_err() {
                        break;
                    }
                }
                continue;
            }
            None => {}
        }
        if let Some((tag, pacer)) = active.as_mut() {
            pacer.wait(&*clock);
            let tag = *tag;
            if !poll(&mut backend, tag) {
                break;
            }
        }
    }
}
