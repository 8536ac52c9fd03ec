//! Injectable time sources.
//!
//! Every component that sleeps or timestamps goes through [`Clock`], so the
//! acquisition loop and the runner can be driven by virtual time in tests.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};

/// A monotonic clock with an attached wall-clock origin.
pub trait Clock: Send + Sync {
    /// Monotonic time elapsed since the clock's origin.
    fn now(&self) -> Duration;

    /// Block (or advance virtual time) for `d`.
    fn sleep(&self, d: Duration);

    /// Wall-clock time corresponding to [`Clock::now`].
    fn timestamp(&self) -> DateTime<Utc>;

    fn now_secs(&self) -> f64 {
        self.now().as_secs_f64()
    }
}

pub type SharedClock = Arc<dyn Clock>;

/// Real time.
#[derive(Debug, Clone)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }

    fn timestamp(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Manually driven virtual time: `sleep` advances the clock instantly.
///
/// Meant for a single driving thread. Clones share the same counter.
#[derive(Debug, Clone)]
pub struct VirtualClock {
    nanos: Arc<AtomicU64>,
    epoch: DateTime<Utc>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::with_epoch(default_epoch())
    }

    pub fn with_epoch(epoch: DateTime<Utc>) -> Self {
        Self {
            nanos: Arc::new(AtomicU64::new(0)),
            epoch,
        }
    }

    pub fn advance(&self, d: Duration) {
        self.nanos.fetch_add(d.as_nanos() as u64, Ordering::AcqRel);
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::Acquire))
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }

    fn timestamp(&self) -> DateTime<Utc> {
        self.epoch + chrono::Duration::from_std(self.now()).unwrap_or_default()
    }
}

/// Virtual time that runs `speedup` times faster than real time.
///
/// Unlike [`VirtualClock`] it can be shared by several threads that all
/// sleep, because virtual time is derived from the real elapsed time.
#[derive(Debug, Clone)]
pub struct AcceleratedClock {
    origin: Instant,
    speedup: f64,
    epoch: DateTime<Utc>,
}

impl AcceleratedClock {
    pub fn new(speedup: f64) -> Self {
        assert!(speedup > 0.0 && speedup.is_finite(), "speedup must be positive");
        Self {
            origin: Instant::now(),
            speedup,
            epoch: default_epoch(),
        }
    }
}

impl Clock for AcceleratedClock {
    fn now(&self) -> Duration {
        self.origin.elapsed().mul_f64(self.speedup)
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d.div_f64(self.speedup));
    }

    fn timestamp(&self) -> DateTime<Utc> {
        self.epoch + chrono::Duration::from_std(self.now()).unwrap_or_default()
    }
}

fn default_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 5, 7, 13, 32, 28).unwrap()
}

/// Fixed-rate tick schedule. Missed ticks are skipped rather than replayed,
/// so consecutive samples never share a timestamp.
#[derive(Debug, Clone)]
pub struct Pacer {
    period: Duration,
    next: Duration,
}

impl Pacer {
    pub fn new(period: Duration, start: Duration) -> Self {
        Self {
            period,
            next: start + period,
        }
    }

    pub fn from_hz(hz: f64, start: Duration) -> Self {
        Self::new(Duration::from_secs_f64(1.0 / hz), start)
    }

    pub fn period(&self) -> Duration {
        self.period
    }

    /// Sleep until the next tick and schedule the one after it.
    pub fn wait(&mut self, clock: &dyn Clock) {
        let now = clock.now();
        while self.next <= now {
            self.next += self.period;
        }
        clock.sleep(self.next - now);
        self.next += self.period;
    }
}
