//! RDTech TC66/TC66C serial protocol.
//!
//! The host writes the ASCII verb `getva`; the meter answers with 192 bytes
//! encrypted with AES-256 in ECB mode under a fixed vendor key. The plaintext
//! is three 64-byte blocks tagged `pac1`, `pac2`, `pac3`, each closed by a
//! CRC-16/MODBUS of its first 60 bytes stored as a little-endian u32.

use std::io::{self, Read, Write};
use std::time::Duration;

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockDecrypt, BlockEncrypt, KeyInit};
use aes::Aes256;
use thiserror::Error;

use super::{MeterBackend, MeterError, MeterReading};
use crate::clock::SharedClock;

pub const FRAME_LEN: usize = 192;
const BLOCK_LEN: usize = 64;
const AES_BLOCK: usize = 16;

pub const SERIAL_BAUD: u32 = 115_200;
pub const SERIAL_TIMEOUT: Duration = Duration::from_secs(1);

const POLL_VERB: &[u8; 5] = b"getva";

/// Static key shipped with the vendor's application.
pub const TC66_AES_KEY: [u8; 32] = [
    0x58, 0x21, 0xfa, 0x56, 0x01, 0xb2, 0xf0, 0x26, 0x87, 0xff, 0x12, 0x04, 0x62, 0x2a, 0x4f, 0xb0,
    0x86, 0xf4, 0x02, 0x60, 0x81, 0x6f, 0x9a, 0x0b, 0xa7, 0xf1, 0x06, 0x61, 0x9a, 0xb8, 0x72, 0x88,
];

const CRC16_MODBUS: crc::Crc<u16> = crc::Crc::<u16>::new(&crc::CRC_16_MODBUS);

/// Position of a little-endian u32 inside the decrypted frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldSlot {
    pub block: usize,
    pub offset: usize,
}

impl FieldSlot {
    const fn at(block: usize, offset: usize) -> Self {
        Self { block, offset }
    }

    fn range(self) -> std::ops::Range<usize> {
        let start = self.block * BLOCK_LEN + self.offset;
        start..start + 4
    }

    fn read(self, plain: &[u8; FRAME_LEN]) -> u32 {
        u32::from_le_bytes(plain[self.range()].try_into().unwrap())
    }

    fn write(self, plain: &mut [u8; FRAME_LEN], value: u32) {
        plain[self.range()].copy_from_slice(&value.to_le_bytes());
    }
}

/// Byte layout of the decrypted frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tc66Layout {
    pub tags: [&'static [u8; 4]; 3],
    pub crc_offset: usize,
    pub product: FieldSlot,
    pub version: FieldSlot,
    pub serial: FieldSlot,
    pub runs: FieldSlot,
    pub voltage: FieldSlot,
    pub current: FieldSlot,
    pub power: FieldSlot,
    pub resistance: FieldSlot,
    pub group0_mah: FieldSlot,
    pub group0_mwh: FieldSlot,
    pub group1_mah: FieldSlot,
    pub group1_mwh: FieldSlot,
    pub temp_sign: FieldSlot,
    pub temp: FieldSlot,
    pub data_plus: FieldSlot,
    pub data_minus: FieldSlot,
}

pub const TC66_LAYOUT: Tc66Layout = Tc66Layout {
    tags: [b"pac1", b"pac2", b"pac3"],
    crc_offset: 60,
    product: FieldSlot::at(0, 4),
    version: FieldSlot::at(0, 8),
    serial: FieldSlot::at(0, 12),
    runs: FieldSlot::at(0, 44),
    voltage: FieldSlot::at(0, 48),
    current: FieldSlot::at(0, 52),
    power: FieldSlot::at(0, 56),
    resistance: FieldSlot::at(1, 4),
    group0_mah: FieldSlot::at(1, 8),
    group0_mwh: FieldSlot::at(1, 12),
    group1_mah: FieldSlot::at(1, 16),
    group1_mwh: FieldSlot::at(1, 20),
    temp_sign: FieldSlot::at(1, 24),
    temp: FieldSlot::at(1, 28),
    data_plus: FieldSlot::at(1, 32),
    data_minus: FieldSlot::at(1, 36),
};

/// Decoded frame in device units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tc66Fields {
    pub product: [u8; 4],
    pub version: [u8; 4],
    pub serial: u32,
    pub runs: u32,
    /// 0.1 mV
    pub voltage_raw: u32,
    /// 10 µA
    pub current_raw: u32,
    /// 0.1 mW
    pub power_raw: u32,
    /// 0.1 Ω
    pub resistance_raw: u32,
    pub group0_mah: u32,
    pub group0_mwh: u32,
    pub group1_mah: u32,
    pub group1_mwh: u32,
    pub temperature_c: i32,
    /// 10 mV
    pub data_plus_raw: u32,
    pub data_minus_raw: u32,
}

impl Tc66Fields {
    pub fn voltage(&self) -> f64 {
        self.voltage_raw as f64 / 1e4
    }

    pub fn current(&self) -> f64 {
        self.current_raw as f64 / 1e5
    }

    pub fn power(&self) -> f64 {
        self.power_raw as f64 / 1e4
    }

    pub fn resistance(&self) -> f64 {
        self.resistance_raw as f64 / 1e1
    }

    pub fn data_plus(&self) -> f64 {
        self.data_plus_raw as f64 / 1e2
    }

    pub fn data_minus(&self) -> f64 {
        self.data_minus_raw as f64 / 1e2
    }

    pub fn to_reading(&self, t: f64) -> MeterReading {
        MeterReading {
            t,
            voltage: self.voltage(),
            current: self.current(),
            power: self.power(),
            energy_mwh: u64::from(self.group0_mwh),
        }
    }

    /// Device-unit image of a reading, rounded to the meter's resolution.
    pub fn from_reading(reading: &MeterReading) -> Self {
        let raw = |v: f64, scale: f64| (v * scale).round().clamp(0.0, u32::MAX as f64) as u32;
        Self {
            product: *b"TC66",
            version: *b"1.14",
            serial: 0x0001_e240,
            runs: 1,
            voltage_raw: raw(reading.voltage, 1e4),
            current_raw: raw(reading.current, 1e5),
            power_raw: raw(reading.power, 1e4),
            resistance_raw: if reading.current > 0.0 {
                raw(reading.voltage / reading.current, 1e1)
            } else {
                9_999_999
            },
            group0_mah: 0,
            group0_mwh: reading.energy_mwh.min(u32::MAX as u64) as u32,
            group1_mah: 0,
            group1_mwh: 0,
            temperature_c: 25,
            data_plus_raw: 0,
            data_minus_raw: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame is {0} bytes, expected {FRAME_LEN}")]
    Length(usize),
    #[error("block {block} tag {found:?} does not match {expected:?}")]
    TagMismatch {
        block: usize,
        expected: String,
        found: String,
    },
    #[error("block {block} checksum {found:#06x} does not match computed {computed:#06x}")]
    Integrity { block: usize, computed: u16, found: u32 },
}

/// The poll command written to the meter.
pub fn tc66_build_poll() -> &'static [u8] {
    POLL_VERB
}

fn block_checksum(plain: &[u8; FRAME_LEN], block: usize) -> u16 {
    let start = block * BLOCK_LEN;
    CRC16_MODBUS.checksum(&plain[start..start + TC66_LAYOUT.crc_offset])
}

pub fn tc66_decode(raw: &[u8], key: &[u8; 32]) -> Result<Tc66Fields, FrameError> {
    let layout = &TC66_LAYOUT;
    let mut plain: [u8; FRAME_LEN] = raw.try_into().map_err(|_| FrameError::Length(raw.len()))?;
    let cipher = Aes256::new(GenericArray::from_slice(key));
    for chunk in plain.chunks_exact_mut(AES_BLOCK) {
        cipher.decrypt_block(GenericArray::from_mut_slice(chunk));
    }

    for (block, tag) in layout.tags.iter().enumerate() {
        let found = &plain[block * BLOCK_LEN..block * BLOCK_LEN + 4];
        if found != &tag[..] {
            return Err(FrameError::TagMismatch {
                block,
                expected: String::from_utf8_lossy(&tag[..]).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
    }
    for block in 0..layout.tags.len() {
        let computed = block_checksum(&plain, block);
        let found = FieldSlot::at(block, layout.crc_offset).read(&plain);
        if found != u32::from(computed) {
            return Err(FrameError::Integrity {
                block,
                computed,
                found,
            });
        }
    }

    let temp = layout.temp.read(&plain) as i32;
    Ok(Tc66Fields {
        product: layout.product.read(&plain).to_le_bytes(),
        version: layout.version.read(&plain).to_le_bytes(),
        serial: layout.serial.read(&plain),
        runs: layout.runs.read(&plain),
        voltage_raw: layout.voltage.read(&plain),
        current_raw: layout.current.read(&plain),
        power_raw: layout.power.read(&plain),
        resistance_raw: layout.resistance.read(&plain),
        group0_mah: layout.group0_mah.read(&plain),
        group0_mwh: layout.group0_mwh.read(&plain),
        group1_mah: layout.group1_mah.read(&plain),
        group1_mwh: layout.group1_mwh.read(&plain),
        temperature_c: if layout.temp_sign.read(&plain) == 1 { -temp } else { temp },
        data_plus_raw: layout.data_plus.read(&plain),
        data_minus_raw: layout.data_minus.read(&plain),
    })
}

/// Build an encrypted frame in the device layout. Inverse of [`tc66_decode`].
pub fn encode_frame(fields: &Tc66Fields, key: &[u8; 32]) -> [u8; FRAME_LEN] {
    let layout = &TC66_LAYOUT;
    let mut plain = [0u8; FRAME_LEN];
    for (block, tag) in layout.tags.iter().enumerate() {
        plain[block * BLOCK_LEN..block * BLOCK_LEN + 4].copy_from_slice(&tag[..]);
    }
    layout.product.write(&mut plain, u32::from_le_bytes(fields.product));
    layout.version.write(&mut plain, u32::from_le_bytes(fields.version));
    layout.serial.write(&mut plain, fields.serial);
    layout.runs.write(&mut plain, fields.runs);
    layout.voltage.write(&mut plain, fields.voltage_raw);
    layout.current.write(&mut plain, fields.current_raw);
    layout.power.write(&mut plain, fields.power_raw);
    layout.resistance.write(&mut plain, fields.resistance_raw);
    layout.group0_mah.write(&mut plain, fields.group0_mah);
    layout.group0_mwh.write(&mut plain, fields.group0_mwh);
    layout.group1_mah.write(&mut plain, fields.group1_mah);
    layout.group1_mwh.write(&mut plain, fields.group1_mwh);
    layout
        .temp_sign
        .write(&mut plain, u32::from(fields.temperature_c < 0));
    layout.temp.write(&mut plain, fields.temperature_c.unsigned_abs());
    layout.data_plus.write(&mut plain, fields.data_plus_raw);
    layout.data_minus.write(&mut plain, fields.data_minus_raw);
    for block in 0..layout.tags.len() {
        let crc = block_checksum(&plain, block);
        FieldSlot::at(block, layout.crc_offset).write(&mut plain, u32::from(crc));
    }

    let cipher = Aes256::new(GenericArray::from_slice(key));
    for chunk in plain.chunks_exact_mut(AES_BLOCK) {
        cipher.encrypt_block(GenericArray::from_mut_slice(chunk));
    }
    plain
}

/// Frame the simulator would emit for `reading`.
pub fn encode_sim_frame(reading: &MeterReading) -> [u8; FRAME_LEN] {
    encode_frame(&Tc66Fields::from_reading(reading), &TC66_AES_KEY)
}

/// TC66C backend over any byte transport (a serial port, or a mock).
pub struct Tc66Meter<P> {
    port: Option<P>,
    clock: SharedClock,
    name: String,
}

impl<P: Read + Write + Send> Tc66Meter<P> {
    pub fn new(port: P, clock: SharedClock, name: impl Into<String>) -> Self {
        Self {
            port: Some(port),
            clock,
            name: name.into(),
        }
    }

    pub fn close(&mut self) -> Option<P> {
        self.port.take()
    }

    fn read_frame(port: &mut P) -> Result<[u8; FRAME_LEN], MeterError> {
        let mut buf = [0u8; FRAME_LEN];
        let mut got = 0;
        while got < FRAME_LEN {
            match port.read(&mut buf[got..]) {
                Ok(0) => return Err(MeterError::ShortRead { got }),
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) if matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock) => {
                    return Err(if got == 0 {
                        MeterError::Timeout
                    } else {
                        MeterError::ShortRead { got }
                    });
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(buf)
    }
}

impl<P: Read + Write + Send> MeterBackend for Tc66Meter<P> {
    fn poll(&mut self) -> Result<MeterReading, MeterError> {
        let port = self.port.as_mut().ok_or(MeterError::NotOpen)?;
        port.write_all(tc66_build_poll())?;
        port.flush()?;
        let frame = Self::read_frame(port)?;
        let t = self.clock.now_secs();
        Ok(tc66_decode(&frame, &TC66_AES_KEY)?.to_reading(t))
    }

    fn describe(&self) -> String {
        format!("TC66C on {}", self.name)
    }
}

/// Open a serial line with the meter's settings (115200 8N1, 1 s timeout).
pub fn open_serial(path: &str) -> Result<Box<dyn serialport::SerialPort>, MeterError> {
    serialport::new(path, SERIAL_BAUD)
        .data_bits(serialport::DataBits::Eight)
        .parity(serialport::Parity::None)
        .stop_bits(serialport::StopBits::One)
        .flow_control(serialport::FlowControl::None)
        .timeout(SERIAL_TIMEOUT)
        .open()
        .map_err(|e| MeterError::Open(format!("{path}: {e}")))
}

pub fn list_serial_ports() -> Vec<String> {
    serialport::available_ports()
        .map(|ports| ports.into_iter().map(|p| p.port_name).collect())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn poll_command_is_getva() {
        assert_eq!(tc66_build_poll(), b"getva");
        assert_eq!(tc66_build_poll().len(), 5);
        assert_eq!(tc66_build_poll(), tc66_build_poll());
    }

    #[test]
    fn crc16_modbus_check_value() {
        assert_eq!(CRC16_MODBUS.checksum(b"123456789"), 0x4b37);
    }

    #[test]
    fn key_matches_vendor_signed_byte_table() {
        // The vendor app stores the key as Java signed bytes.
        let signed: [i8; 32] = [
            88, 33, -6, 86, 1, -78, -16, 38, -121, -1, 18, 4, 98, 42, 79, -80, -122, -12, 2, 96,
            -127, 111, -102, 11, -89, -15, 6, 97, -102, -72, 114, -120,
        ];
        let unsigned: Vec<u8> = signed.iter().map(|b| *b as u8).collect();
        assert_eq!(unsigned, TC66_AES_KEY);
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert_eq!(
            tc66_decode(&[0u8; 191], &TC66_AES_KEY).unwrap_err(),
            FrameError::Length(191)
        );
    }

    #[test]
    fn garbage_fails_tag_check() {
        let err = tc66_decode(&[0u8; FRAME_LEN], &TC66_AES_KEY).unwrap_err();
        assert!(matches!(err, FrameError::TagMismatch { block: 0, .. }));
    }

    #[test]
    fn flipped_payload_byte_fails_integrity() {
        let fields = Tc66Fields::from_reading(&MeterReading {
            t: 0.0,
            voltage: 5.1,
            current: 0.5,
            power: 2.55,
            energy_mwh: 42,
        });
        let mut frame = encode_frame(&fields, &TC66_AES_KEY);
        let cipher = Aes256::new(GenericArray::from_slice(&TC66_AES_KEY));
        // Re-encrypt block 1 with a modified field so tags stay intact.
        let mut plain = frame;
        for chunk in plain.chunks_exact_mut(16) {
            cipher.decrypt_block(GenericArray::from_mut_slice(chunk));
        }
        plain[64 + 12] ^= 0x01;
        for chunk in plain.chunks_exact_mut(16) {
            cipher.encrypt_block(GenericArray::from_mut_slice(chunk));
        }
        frame.copy_from_slice(&plain);
        assert!(matches!(
            tc66_decode(&frame, &TC66_AES_KEY).unwrap_err(),
            FrameError::Integrity { block: 1, .. }
        ));
    }

    #[test]
    fn scaling_to_si() {
        let fields = Tc66Fields {
            voltage_raw: 51_234,
            current_raw: 123_456,
            power_raw: 63_210,
            group0_mwh: 1_000,
            ..Default::default()
        };
        let r = fields.to_reading(1.5);
        assert_eq!(r.voltage, 5.1234);
        assert_eq!(r.current, 1.23456);
        assert_eq!(r.power, 6.321);
        assert_eq!(r.energy_mwh, 1_000);
        assert_eq!(r.t, 1.5);
    }

    fn arb_fields() -> impl Strategy<Value = Tc66Fields> {
        (
            any::<[u8; 4]>(),
            any::<[u32; 12]>(),
            -1000i32..1000,
            any::<[u8; 4]>(),
        )
            .prop_map(|(product, w, temperature_c, version)| Tc66Fields {
                product,
                version,
                serial: w[0],
                runs: w[1],
                voltage_raw: w[2],
                current_raw: w[3],
                power_raw: w[4],
                resistance_raw: w[5],
                group0_mah: w[6],
                group0_mwh: w[7],
                group1_mah: w[8],
                group1_mwh: w[9],
                temperature_c,
                data_plus_raw: w[10],
                data_minus_raw: w[11],
            })
    }

    proptest! {
        #[test]
        fn frame_round_trip(fields in arb_fields()) {
            let frame = encode_frame(&fields, &TC66_AES_KEY);
            prop_assert_eq!(tc66_decode(&frame, &TC66_AES_KEY).unwrap(), fields);
        }
    }
}
