//! Control-plane messages exchanged between the runner and the collector.
//!
//! Datagrams are plain ASCII with `|` separators:
//!
//! ```text
//! GETREADY|<experiment_id>|<algorithm>|<iterations>|<poll_hz>
//! START
//! STOP
//! ```

use std::fmt;

use thiserror::Error;

/// Largest datagram the collector is expected to receive.
pub const MAX_DATAGRAM: usize = 512;

/// Highest polling rate the meter supports.
pub const MAX_POLL_HZ: f64 = 10.0;

pub const DEFAULT_PORT: u16 = 55555;

const SEPARATOR: char = '|';

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentParams {
    pub experiment_id: String,
    pub algorithm_label: String,
    pub iterations: u64,
    pub poll_hz: f64,
}

impl ExperimentParams {
    pub fn new(
        experiment_id: impl Into<String>,
        algorithm_label: impl Into<String>,
        iterations: u64,
        poll_hz: f64,
    ) -> Self {
        Self {
            experiment_id: experiment_id.into(),
            algorithm_label: algorithm_label.into(),
            iterations,
            poll_hz,
        }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        check_text("experiment_id", &self.experiment_id)?;
        check_text("algorithm", &self.algorithm_label)?;
        if self.iterations == 0 {
            return Err(FieldError::new("iterations", "must be at least 1"));
        }
        check_poll_hz(self.poll_hz)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlMessage {
    GetReady(ExperimentParams),
    Start,
    Stop,
}

impl ControlMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            ControlMessage::GetReady(_) => MessageKind::GetReady,
            ControlMessage::Start => MessageKind::Start,
            ControlMessage::Stop => MessageKind::Stop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    GetReady,
    Start,
    Stop,
}

impl MessageKind {
    pub const ALL: [MessageKind; 3] = [MessageKind::GetReady, MessageKind::Start, MessageKind::Stop];

    pub fn verb(self) -> &'static str {
        match self {
            MessageKind::GetReady => "GETREADY",
            MessageKind::Start => "START",
            MessageKind::Stop => "STOP",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.verb())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CollectorState {
    Idle,
    Ready,
    Acquiring,
    Done,
}

impl CollectorState {
    pub const ALL: [CollectorState; 4] = [
        CollectorState::Idle,
        CollectorState::Ready,
        CollectorState::Acquiring,
        CollectorState::Done,
    ];
}

impl fmt::Display for CollectorState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {reason}")]
pub struct FieldError {
    pub field: &'static str,
    pub reason: String,
}

impl FieldError {
    fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("invalid field {0}")]
    Field(#[from] FieldError),
    #[error("datagram of {0} bytes exceeds {MAX_DATAGRAM}")]
    TooLong(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("datagram is not printable ASCII")]
    NotAscii,
    #[error("datagram of {0} bytes exceeds {MAX_DATAGRAM}")]
    TooLong(usize),
    #[error("unknown verb {0:?}")]
    UnknownVerb(String),
    #[error("{verb} expects {expected} fields, got {found}")]
    FieldCount {
        verb: MessageKind,
        expected: usize,
        found: usize,
    },
    #[error("invalid field {0}")]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{message} is not valid in state {state}")]
pub struct TransitionError {
    pub state: CollectorState,
    pub message: MessageKind,
}

fn check_text(field: &'static str, value: &str) -> Result<(), FieldError> {
    if value.is_empty() {
        return Err(FieldError::new(field, "must not be empty"));
    }
    if let Some(c) = value.chars().find(|c| *c == SEPARATOR || !(' '..='~').contains(c)) {
        return Err(FieldError::new(
            field,
            format!("contains forbidden character {c:?}"),
        ));
    }
    Ok(())
}

fn check_poll_hz(hz: f64) -> Result<(), FieldError> {
    if !(hz.is_finite() && hz > 0.0 && hz <= MAX_POLL_HZ) {
        return Err(FieldError::new(
            "poll_hz",
            format!("{hz} outside (0, {MAX_POLL_HZ}]"),
        ));
    }
    Ok(())
}

pub fn encode_control(msg: &ControlMessage) -> Result<Vec<u8>, EncodeError> {
    let text = match msg {
        ControlMessage::GetReady(p) => {
            p.validate()?;
            format!(
                "GETREADY|{}|{}|{}|{}",
                p.experiment_id, p.algorithm_label, p.iterations, p.poll_hz
            )
        }
        ControlMessage::Start => "START".to_owned(),
        ControlMessage::Stop => "STOP".to_owned(),
    };
    if text.len() > MAX_DATAGRAM {
        return Err(EncodeError::TooLong(text.len()));
    }
    Ok(text.into_bytes())
}

pub fn decode_control(datagram: &[u8]) -> Result<ControlMessage, DecodeError> {
    if datagram.len() > MAX_DATAGRAM {
        return Err(DecodeError::TooLong(datagram.len()));
    }
    // Tolerate a trailing newline from hand-typed test senders.
    let datagram = datagram
        .strip_suffix(b"\n")
        .map(|d| d.strip_suffix(b"\r").unwrap_or(d))
        .unwrap_or(datagram);
    if !datagram.iter().all(|b| (b' '..=b'~').contains(b)) {
        return Err(DecodeError::NotAscii);
    }
    let text = std::str::from_utf8(datagram).map_err(|_| DecodeError::NotAscii)?;
    let fields: Vec<&str> = text.split(SEPARATOR).collect();
    let kind = match fields[0] {
        "GETREADY" => MessageKind::GetReady,
        "START" => MessageKind::Start,
        "STOP" => MessageKind::Stop,
        other => return Err(DecodeError::UnknownVerb(other.to_owned())),
    };
    let expected = if kind == MessageKind::GetReady { 5 } else { 1 };
    if fields.len() != expected {
        return Err(DecodeError::FieldCount {
            verb: kind,
            expected,
            found: fields.len(),
        });
    }
    Ok(match kind {
        MessageKind::Start => ControlMessage::Start,
        MessageKind::Stop => ControlMessage::Stop,
        MessageKind::GetReady => {
            let iterations = fields[3]
                .parse::<u64>()
                .map_err(|_| FieldError::new("iterations", format!("{:?} is not an integer", fields[3])))?;
            let poll_hz = fields[4]
                .parse::<f64>()
                .map_err(|_| FieldError::new("poll_hz", format!("{:?} is not a number", fields[4])))?;
            let params = ExperimentParams::new(fields[1], fields[2], iterations, poll_hz);
            params.validate()?;
            ControlMessage::GetReady(params)
        }
    })
}

/// Successor state for a (state, message) pair. Exactly three pairs are legal.
pub fn advance_state(
    state: CollectorState,
    msg: &ControlMessage,
) -> Result<CollectorState, TransitionError> {
    use CollectorState::*;
    match (state, msg.kind()) {
        (Idle, MessageKind::GetReady) => Ok(Ready),
        (Ready, MessageKind::Start) => Ok(Acquiring),
        (Acquiring, MessageKind::Stop) => Ok(Done),
        (state, message) => Err(TransitionError { state, message }),
    }
}
