//! Energy measurement of key generation on a small device, with the meter
//! polled from a separate collector host.
//!
//! The runner on the device under test sends control datagrams
//! ([`protocol`]) to the collector, which polls a USB power meter
//! ([`meter`]) and appends per-experiment totals ([`results`]). The
//! [`analysis`] module turns those totals into baseline-corrected rates per
//! 1,000 key generations.

pub mod analysis;
pub mod clock;
pub mod collector;
pub mod meter;
pub mod protocol;
pub mod results;
pub mod runner;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/meter.md")]
    mod meter {}
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
}
