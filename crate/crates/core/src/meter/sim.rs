use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::path::Path;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use super::tc66::{encode_sim_frame, tc66_build_poll};
use super::{MeterBackend, MeterError, MeterReading};
use crate::clock::SharedClock;

const DEFAULT_SUPPLY_VOLTAGE: f64 = 5.1;
const JOULES_PER_MWH: f64 = 3.6;

/// Device rounding of the cumulative counter. Floor is assumed.
pub fn quantize_mwh(mwh: f64) -> u64 {
    mwh.floor() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct Segment {
    /// seconds
    pub duration: f64,
    /// watts
    pub power: f64,
}

/// Piecewise-constant power draw. The last segment's power is held after
/// the profile ends; an empty profile draws nothing.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimProfile {
    #[serde(default, rename = "segment")]
    pub segments: Vec<Segment>,
    #[serde(default = "default_supply_voltage")]
    pub supply_voltage: f64,
    /// Fraction of the nominal sampling period.
    #[serde(default)]
    pub sample_jitter: f64,
}

fn default_supply_voltage() -> f64 {
    DEFAULT_SUPPLY_VOLTAGE
}

#[derive(Debug, Error)]
pub enum SimProfileError {
    #[error("segment {index}: duration {duration} must be positive and finite")]
    Duration { index: usize, duration: f64 },
    #[error("segment {index}: power {power} must be non-negative and finite")]
    Power { index: usize, power: f64 },
    #[error("supply voltage {0} must be positive")]
    Voltage(f64),
    #[error("sample jitter {0} must lie in [0, 1)")]
    Jitter(f64),
    #[error("cannot read profile: {0}")]
    Io(#[from] io::Error),
    #[error("cannot parse profile: {0}")]
    Parse(#[from] toml::de::Error),
}

impl SimProfile {
    pub fn new(segments: Vec<Segment>) -> Result<Self, SimProfileError> {
        let profile = Self {
            segments,
            supply_voltage: DEFAULT_SUPPLY_VOLTAGE,
            sample_jitter: 0.0,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Constant draw forever.
    pub fn constant(watts: f64) -> Self {
        Self::new(vec![Segment {
            duration: 1.0,
            power: watts,
        }])
        .expect("constant power must be non-negative")
    }

    pub fn with_jitter(mut self, jitter: f64) -> Result<Self, SimProfileError> {
        self.sample_jitter = jitter;
        self.validate()?;
        Ok(self)
    }

    pub fn from_toml(text: &str) -> Result<Self, SimProfileError> {
        let profile: SimProfile = toml::from_str(text)?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<Self, SimProfileError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), SimProfileError> {
        for (index, s) in self.segments.iter().enumerate() {
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(SimProfileError::Duration {
                    index,
                    duration: s.duration,
                });
            }
            if !(s.power.is_finite() && s.power >= 0.0) {
                return Err(SimProfileError::Power {
                    index,
                    power: s.power,
                });
            }
        }
        if !(self.supply_voltage.is_finite() && self.supply_voltage > 0.0) {
            return Err(SimProfileError::Voltage(self.supply_voltage));
        }
        if !(0.0..1.0).contains(&self.sample_jitter) {
            return Err(SimProfileError::Jitter(self.sample_jitter));
        }
        Ok(())
    }

    pub fn power_at(&self, t: f64) -> f64 {
        let mut start = 0.0;
        for s in &self.segments {
            if t < start + s.duration {
                return s.power;
            }
            start += s.duration;
        }
        self.segments.last().map_or(0.0, |s| s.power)
    }

    /// Exact integral of power over `[0, t]`, in joules.
    pub fn energy_joules(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let mut start = 0.0;
        let mut joules = 0.0;
        for s in &self.segments {
            if t <= start + s.duration {
                return joules + (t - start) * s.power;
            }
            joules += s.duration * s.power;
            start += s.duration;
        }
        joules + (t - start) * self.segments.last().map_or(0.0, |s| s.power)
    }

    pub fn reported_mwh(&self, t: f64) -> u64 {
        quantize_mwh(self.energy_joules(t) / JOULES_PER_MWH)
    }
}

/// Deterministic meter following a [`SimProfile`] on an injected clock.
///
/// Profile time zero is the clock reading when the meter was created.
pub struct SimMeter {
    profile: SimProfile,
    clock: SharedClock,
    origin: f64,
    initial_mwh: u64,
    nominal_period: Duration,
    rng: ChaCha8Rng,
}

impl SimMeter {
    pub fn new(profile: SimProfile, clock: SharedClock) -> Self {
        let origin = clock.now_secs();
        Self {
            profile,
            clock,
            origin,
            initial_mwh: 0,
            nominal_period: Duration::from_millis(100),
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Start the device counter at a non-zero value, as a real meter would.
    pub fn with_initial_mwh(mut self, mwh: u64) -> Self {
        self.initial_mwh = mwh;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    /// Period the jitter fraction is applied to.
    pub fn with_nominal_period(mut self, period: Duration) -> Self {
        self.nominal_period = period;
        self
    }

    pub fn profile(&self) -> &SimProfile {
        &self.profile
    }

    /// Reading at profile time `tau` reported at clock time `t`.
    pub fn reading_at(&self, tau: f64, t: f64) -> MeterReading {
        let power = self.profile.power_at(tau);
        let voltage = self.profile.supply_voltage;
        MeterReading {
            t,
            voltage,
            current: power / voltage,
            power,
            energy_mwh: self.initial_mwh + self.profile.reported_mwh(tau),
        }
    }
}

impl MeterBackend for SimMeter {
    fn poll(&mut self) -> Result<MeterReading, MeterError> {
        let jitter = if self.profile.sample_jitter > 0.0 {
            self.rng.gen::<f64>() * self.profile.sample_jitter * self.nominal_period.as_secs_f64()
        } else {
            0.0
        };
        let t = self.clock.now_secs() + jitter;
        Ok(self.reading_at(t - self.origin, t))
    }

    fn describe(&self) -> String {
        format!("simulated meter ({} segments)", self.profile.segments.len())
    }
}

/// Faults a [`SimTc66Port`] can inject into its next responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortFault {
    /// Stay silent, as if the read timed out.
    Silent,
    /// Answer with only part of the frame.
    Truncate(usize),
    /// Flip one ciphertext byte.
    Corrupt(usize),
}

/// Serial-port stand-in that answers `getva` with encrypted frames from a
/// [`SimMeter`].
pub struct SimTc66Port {
    meter: SimMeter,
    command: Vec<u8>,
    pending: VecDeque<u8>,
    faults: VecDeque<PortFault>,
    polls: usize,
}

impl SimTc66Port {
    pub fn new(meter: SimMeter) -> Self {
        Self {
            meter,
            command: Vec::new(),
            pending: VecDeque::new(),
            faults: VecDeque::new(),
            polls: 0,
        }
    }

    pub fn inject(&mut self, fault: PortFault) {
        self.faults.push_back(fault);
    }

    pub fn polls(&self) -> usize {
        self.polls
    }

    fn respond(&mut self) -> io::Result<()> {
        self.polls += 1;
        let reading = self.meter.poll().map_err(io::Error::other)?;
        let mut frame = encode_sim_frame(&reading).to_vec();
        match self.faults.pop_front() {
            Some(PortFault::Silent) => return Ok(()),
            Some(PortFault::Truncate(n)) => frame.truncate(n),
            Some(PortFault::Corrupt(i)) => {
                let at = i % frame.len();
                frame[at] ^= 0x5a;
            }
            None => {}
        }
        self.pending.extend(frame);
        Ok(())
    }
}

impl Write for SimTc66Port {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.command.extend_from_slice(buf);
        let verb = tc66_build_poll();
        if self.command.ends_with(verb) {
            self.command.clear();
            // A new poll discards any unread reply, like a fresh serial exchange.
            self.pending.clear();
            self.respond()?;
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Read for SimTc66Port {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.pending.is_empty() {
            return Err(io::Error::new(io::ErrorKind::TimedOut, "no reply"));
        }
        let n = buf.len().min(self.pending.len());
        for (dst, src) in buf.iter_mut().zip(self.pending.drain(..n)) {
            *dst = src;
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{Clock, VirtualClock};
    use crate::meter::{Tc66Meter, FrameError};
    use std::sync::Arc;

    fn seg(duration: f64, power: f64) -> Segment {
        Segment { duration, power }
    }

    #[test]
    fn constant_five_watts_for_ten_seconds() {
        let clock = VirtualClock::new();
        let mut meter = SimMeter::new(SimProfile::constant(5.0), Arc::new(clock.clone()));
        clock.advance(Duration::from_secs(10));
        let r = meter.poll().unwrap();
        assert_eq!(r.power, 5.0);
        // 50 J = 13.888 mWh, floored
        assert_eq!(r.energy_mwh, 13);
        assert_eq!(r.t, 10.0);
    }

    #[test]
    fn zero_power_profile() {
        let clock = VirtualClock::new();
        let mut meter = SimMeter::new(SimProfile::constant(0.0), Arc::new(clock.clone()));
        clock.advance(Duration::from_secs(1000));
        let r = meter.poll().unwrap();
        assert_eq!((r.power, r.energy_mwh), (0.0, 0));
        assert_eq!(SimProfile::new(vec![]).unwrap().reported_mwh(50.0), 0);
    }

    #[test]
    fn analytic_integrals() {
        let single = SimProfile::new(vec![seg(2.0, 3.0)]).unwrap();
        assert_eq!(single.energy_joules(2.0), 6.0);
        assert_eq!(single.reported_mwh(2.0), 1);
        let double = SimProfile::new(vec![seg(1.0, 2.0), seg(1.0, 4.0)]).unwrap();
        assert_eq!(double.energy_joules(2.0), 6.0);
        assert_eq!(double.reported_mwh(2.0), 1);
        assert_eq!(double.energy_joules(0.0), 0.0);
        assert_eq!(double.reported_mwh(0.0), 0);
        // last segment is held
        assert_eq!(double.energy_joules(3.0), 10.0);
        assert_eq!(double.power_at(1.0), 4.0);
    }

    #[test]
    fn profile_validation() {
        assert!(matches!(
            SimProfile::new(vec![seg(0.0, 1.0)]),
            Err(SimProfileError::Duration { index: 0, .. })
        ));
        assert!(matches!(
            SimProfile::new(vec![seg(1.0, -1.0)]),
            Err(SimProfileError::Power { index: 0, .. })
        ));
        assert!(matches!(
            SimProfile::constant(1.0).with_jitter(1.0),
            Err(SimProfileError::Jitter(_))
        ));
    }

    #[test]
    fn profile_from_toml() {
        let p = SimProfile::from_toml(
            "supply_voltage = 5.0\n[[segment]]\nduration = 2.0\npower = 3.0\n[[segment]]\nduration = 1.0\npower = 1.0\n",
        )
        .unwrap();
        assert_eq!(p.segments, vec![seg(2.0, 3.0), seg(1.0, 1.0)]);
        assert_eq!(p.supply_voltage, 5.0);
        assert!(SimProfile::from_toml("[[segment]]\nduration = -2.0\npower = 3.0\n").is_err());
    }

    #[test]
    fn current_follows_supply_voltage() {
        let clock = VirtualClock::new();
        let mut meter = SimMeter::new(SimProfile::constant(5.1), Arc::new(clock));
        let r = meter.poll().unwrap();
        assert!((r.current - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jittered_samples_stay_strictly_increasing() {
        let clock = VirtualClock::new();
        let profile = SimProfile::constant(2.0).with_jitter(0.9).unwrap();
        let mut meter = SimMeter::new(profile, Arc::new(clock.clone())).with_seed(7);
        let mut last = f64::NEG_INFINITY;
        for _ in 0..500 {
            let r = meter.poll().unwrap();
            assert!(r.t > last);
            last = r.t;
            clock.sleep(Duration::from_millis(100));
        }
    }

    #[test]
    fn tc66_backend_over_simulated_port() {
        let clock = VirtualClock::new();
        let shared: SharedClock = Arc::new(clock.clone());
        let sim = SimMeter::new(SimProfile::constant(5.0), shared.clone()).with_initial_mwh(1234);
        let mut meter = Tc66Meter::new(SimTc66Port::new(sim), shared, "sim0");
        clock.advance(Duration::from_secs(36));
        let r = meter.poll().unwrap();
        assert_eq!(r.energy_mwh, 1234 + 50);
        assert_eq!(r.power, 5.0);
        assert_eq!(r.voltage, 5.1);
    }

    #[test]
    fn tc66_backend_reports_transient_faults() {
        let clock: SharedClock = Arc::new(VirtualClock::new());
        let mut port = SimTc66Port::new(SimMeter::new(SimProfile::constant(1.0), clock.clone()));
        port.inject(PortFault::Silent);
        port.inject(PortFault::Truncate(100));
        port.inject(PortFault::Corrupt(70));
        let mut meter = Tc66Meter::new(port, clock, "sim0");
        let e1 = meter.poll().unwrap_err();
        assert!(matches!(e1, MeterError::Timeout));
        let e2 = meter.poll().unwrap_err();
        assert!(matches!(e2, MeterError::ShortRead { got: 100 }));
        let e3 = meter.poll().unwrap_err();
        assert!(matches!(
            e3,
            MeterError::Frame(FrameError::TagMismatch { .. } | FrameError::Integrity { .. })
        ));
        assert!(e1.is_transient() && e2.is_transient() && e3.is_transient());
        assert!(meter.poll().is_ok());
        let port = meter.close().unwrap();
        assert_eq!(port.polls(), 4);
        assert!(matches!(meter.poll(), Err(MeterError::NotOpen)));
        assert!(!MeterError::NotOpen.is_transient());
    }
}
