//! Meter backends: a TC66C USB tester on a serial line, or a deterministic
//! simulator. Both hand out [`MeterReading`]s through [`MeterBackend`].

mod sim;
mod tc66;

use thiserror::Error;

pub use sim::{quantize_mwh, SimMeter, SimProfile, SimProfileError, SimTc66Port, Segment, PortFault};
pub use tc66::{
    encode_frame, encode_sim_frame, list_serial_ports, open_serial, tc66_build_poll, tc66_decode,
    FieldSlot, FrameError, Tc66Fields, Tc66Layout, Tc66Meter, FRAME_LEN, SERIAL_BAUD,
    SERIAL_TIMEOUT, TC66_AES_KEY, TC66_LAYOUT,
};

/// One timestamped electrical sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeterReading {
    /// Monotonic seconds on the acquiring clock.
    pub t: f64,
    pub voltage: f64,
    pub current: f64,
    pub power: f64,
    /// Cumulative device counter, never reset by this crate.
    pub energy_mwh: u64,
}

#[derive(Debug, Error)]
pub enum MeterError {
    #[error("meter did not answer within the read timeout")]
    Timeout,
    #[error("short read: {got} of {FRAME_LEN} bytes")]
    ShortRead { got: usize },
    #[error("bad frame: {0}")]
    Frame(#[from] FrameError),
    #[error("serial i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("meter backend is not open")]
    NotOpen,
    #[error("cannot open meter: {0}")]
    Open(String),
}

impl MeterError {
    /// Transient errors may succeed on the next poll.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            MeterError::Timeout | MeterError::ShortRead { .. } | MeterError::Frame(_) | MeterError::Io(_)
        )
    }
}

/// A source of meter readings. One instance belongs to one acquisition loop.
pub trait MeterBackend: Send {
    fn poll(&mut self) -> Result<MeterReading, MeterError>;

    fn describe(&self) -> String {
        "meter".to_owned()
    }
}

impl<M: MeterBackend + ?Sized> MeterBackend for Box<M> {
    fn poll(&mut self) -> Result<MeterReading, MeterError> {
        (**self).poll()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}
