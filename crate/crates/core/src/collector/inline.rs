use std::time::Duration;

use super::{CollectorError, Coordinator, Directive};
use crate::clock::{Clock, Pacer};
use crate::meter::MeterBackend;
use crate::protocol::{ControlMessage, ExperimentParams};
use crate::results::SummaryRow;

fn poll_into<M: MeterBackend + ?Sized>(
    coordinator: &mut Coordinator,
    backend: &mut M,
    clock: &dyn Clock,
    tag: u64,
) -> Result<Directive, CollectorError> {
    match backend.poll() {
        Ok(reading) => {
            coordinator.on_sample(tag, reading, clock.timestamp())?;
            Ok(Directive::Nothing)
        }
        Err(e) => coordinator.on_poll_error(tag, &e),
    }
}

/// Run one GETREADY / START / STOP session on the calling thread, polling
/// `backend` on `clock` for `duration` after START.
///
/// With `send_stop` false the STOP datagram is treated as lost and the
/// session ends through the idle timeout (or, failing that, is truncated
/// once the timeout has passed beyond `duration`).
pub fn record_session<M: MeterBackend + ?Sized>(
    coordinator: &mut Coordinator,
    backend: &mut M,
    clock: &dyn Clock,
    params: ExperimentParams,
    duration: Duration,
    send_stop: bool,
) -> Result<Option<SummaryRow>, CollectorError> {
    let done_before = coordinator.completed().len();
    coordinator.handle_control(ControlMessage::GetReady(params))?;
    let Directive::Begin { tag, poll_hz } = coordinator.handle_control(ControlMessage::Start)? else {
        return Ok(None);
    };
    let start = clock.now();
    let give_up = start + duration + coordinator.idle_timeout() + Duration::from_secs(1);
    let mut pacer = Pacer::from_hz(poll_hz, start);

    if let Directive::End { .. } = poll_into(coordinator, backend, clock, tag)? {
        return Ok(coordinator.completed().get(done_before).cloned());
    }
    loop {
        if send_stop && clock.now() >= start + duration {
            coordinator.handle_control(ControlMessage::Stop)?;
            poll_into(coordinator, backend, clock, tag)?;
            return coordinator.on_acquisition_finished(tag);
        }
        if clock.now() >= give_up {
            return coordinator.shutdown();
        }
        pacer.wait(clock);
        let directive = poll_into(coordinator, backend, clock, tag)?;
        let idle = coordinator.check_idle()?;
        if matches!(directive, Directive::End { .. }) || matches!(idle, Directive::End { .. }) {
            return Ok(coordinator.completed().get(done_before).cloned());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;
    use crate::meter::{PortFault, Segment, SimMeter, SimProfile, SimTc66Port, Tc66Meter};
    use crate::results::SessionStatus;
    use std::io;
    use std::sync::Arc;

    fn setup() -> (tempfile::TempDir, Arc<VirtualClock>, Coordinator) {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(VirtualClock::new());
        let c = Coordinator::new(dir.path(), clock.clone()).with_console(Box::new(io::sink()));
        (dir, clock, c)
    }

    fn params(iters: u64) -> ExperimentParams {
        ExperimentParams::new("20250507133228", "NULL", iters, 10.0)
    }

    #[test]
    fn five_watts_for_a_minute() {
        let (_dir, clock, mut c) = setup();
        let mut meter = SimMeter::new(SimProfile::constant(5.0), clock.clone()).with_initial_mwh(4321);
        let row = record_session(&mut c, &mut meter, &*clock, params(300), Duration::from_secs(60), true)
            .unwrap()
            .unwrap();
        assert!((295.2..=300.0).contains(&row.gross_joules), "{}", row.gross_joules);
        assert!((984.0..=1000.0).contains(&row.joules_per_1000), "{}", row.joules_per_1000);
        assert_eq!(row.status, SessionStatus::Ok);
    }

    #[test]
    fn row_count_and_period() {
        let (_dir, clock, mut c) = setup();
        let mut meter = SimMeter::new(SimProfile::constant(2.0), clock.clone());
        let row = record_session(&mut c, &mut meter, &*clock, params(10), Duration::from_secs(30), true)
            .unwrap()
            .unwrap();
        let path = std::fs::read_dir(_dir.path())
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| p.to_string_lossy().ends_with("_data.csv"))
            .unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let samples: Vec<&str> = text.lines().skip(2).collect();
        assert!((samples.len() as i64 - 300).abs() <= 1, "{}", samples.len());
        let times: Vec<f64> = samples
            .iter()
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        let mean = (times.last().unwrap() - times[0]) / (times.len() - 1) as f64;
        assert!((mean - 0.1).abs() < 0.001, "{mean}");
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        let last_j: f64 = samples.last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
        assert!((last_j - row.gross_joules).abs() <= 0.05);
    }

    #[test]
    fn lost_stop_ends_on_idle_timeout() {
        let (_dir, clock, c) = setup();
        let mut c = c.with_idle_timeout(Duration::from_secs(5));
        let profile = SimProfile::new(vec![
            Segment { duration: 10.0, power: 5.0 },
            Segment { duration: 1.0, power: 0.0 },
        ])
        .unwrap();
        let mut meter = SimMeter::new(profile, clock.clone());
        let row = record_session(&mut c, &mut meter, &*clock, params(10), Duration::from_secs(10), false)
            .unwrap()
            .unwrap();
        assert_eq!(row.status, SessionStatus::Truncated);
        assert!(clock.now() < Duration::from_secs(17), "{:?}", clock.now());
    }

    #[test]
    fn meter_faults_truncate_after_three() {
        let (_dir, clock, mut c) = setup();
        let sim = SimMeter::new(SimProfile::constant(5.0), clock.clone());
        let mut port = SimTc66Port::new(sim);
        for fault in [PortFault::Silent, PortFault::Truncate(100), PortFault::Corrupt(70)] {
            port.inject(fault);
        }
        let mut good = Tc66Meter::new(port, clock.clone(), "sim");
        // first poll fails, so the first three polls exhaust the retry budget
        let row = record_session(&mut c, &mut good, &*clock, params(10), Duration::from_secs(5), true)
            .unwrap()
            .unwrap();
        assert_eq!(row.status, SessionStatus::NoData);
    }
}
