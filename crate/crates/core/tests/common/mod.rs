#![allow(dead_code)]

use std::io;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use keygen_energy::clock::{AcceleratedClock, SharedClock};
use keygen_energy::collector::{Collector, CollectorConfig};
use keygen_energy::meter::{MeterBackend, SimMeter, SimProfile};
use keygen_energy::results::{read_summaries, SummaryRow, ALL_RESULTS_FILE};
use keygen_energy::runner::{ControlSink, DutRunReport, ExperimentSpec, Runner, UdpSink};

/// Forwards datagrams, optionally losing every STOP.
pub struct LossySink {
    pub inner: UdpSink,
    pub drop_stop: bool,
}

impl ControlSink for LossySink {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        if self.drop_stop && datagram == b"STOP" {
            return Ok(());
        }
        self.inner.send(datagram)
    }
}

pub struct Loopback {
    pub dir: tempfile::TempDir,
    pub report: DutRunReport,
    pub rows: Vec<SummaryRow>,
    pub stored: Vec<SummaryRow>,
    pub data_files: Vec<PathBuf>,
    pub elapsed: Duration,
}

pub struct LoopbackSetup {
    pub profile: SimProfile,
    pub spec: ExperimentSpec,
    pub speedup: f64,
    pub drop_stop: bool,
    pub idle_timeout: Duration,
}

impl LoopbackSetup {
    pub fn null_run(iterations: u64) -> Self {
        Self {
            profile: SimProfile::constant(5.0),
            spec: ExperimentSpec::new("NULL", iterations).with_settle(Duration::from_secs(1)),
            speedup: 10.0,
            drop_stop: false,
            idle_timeout: Duration::from_secs(120),
        }
    }
}

/// Runner and collector in one process over 127.0.0.1, both on an
/// accelerated clock, with a simulated meter.
pub fn run_loopback(setup: LoopbackSetup) -> Loopback {
    let began = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let clock: SharedClock = Arc::new(AcceleratedClock::new(setup.speedup));
    let config = CollectorConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        out_dir: dir.path().to_owned(),
        idle_timeout: setup.idle_timeout,
        live_status: false,
        max_sessions: Some(1),
    };
    let collector = Collector::bind(config, clock.clone())
        .unwrap()
        .with_console(Box::new(io::sink()));
    let addr = collector.local_addr().unwrap();
    let watchdog = collector.shutdown_handle();
    let meter_clock = clock.clone();
    let profile = setup.profile.clone();
    let server = thread::spawn(move || {
        collector.run(move || {
            Ok(Box::new(SimMeter::new(profile, meter_clock).with_initial_mwh(777)) as Box<dyn MeterBackend>)
        })
    });
    thread::spawn(move || {
        thread::sleep(Duration::from_secs(60));
        watchdog.shutdown();
    });

    let sink = LossySink {
        inner: UdpSink::connect(addr).unwrap(),
        drop_stop: setup.drop_stop,
    };
    let mut runner = Runner::new(sink, clock).with_console(Box::new(io::sink()));
    let report = runner.run_experiment(&setup.spec).unwrap();
    let rows = server.join().unwrap().unwrap();

    let stored = read_summaries(&dir.path().join(ALL_RESULTS_FILE)).unwrap();
    let mut data_files: Vec<PathBuf> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with("_data.csv"))
        .collect();
    data_files.sort();
    Loopback {
        dir,
        report,
        rows,
        stored,
        data_files,
        elapsed: began.elapsed(),
    }
}

/// (elapsed_s, energy_j) columns of a data file.
pub fn data_samples(path: &std::path::Path) -> Vec<(f64, f64)> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(2)
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            (cols[1].parse().unwrap(), cols[6].parse().unwrap())
        })
        .collect()
}
