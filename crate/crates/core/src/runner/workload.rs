use std::io;
use std::process::{Command, Stdio};
use std::time::Duration;

use thiserror::Error;

use crate::clock::Clock;

/// Sleep used by NULL runs in place of a key generation.
pub const NULL_DELAY: Duration = Duration::from_millis(5);

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("key generation binary {0:?} not found")]
    MissingBinary(String),
    #[error("{program} exited with {status}")]
    Failed { program: String, status: String },
    #[error("cannot run {program}: {source}")]
    Io { program: String, source: io::Error },
}

impl WorkloadError {
    /// The environment cannot run the workload at all.
    pub fn is_environment(&self) -> bool {
        matches!(self, WorkloadError::MissingBinary(_))
    }
}

/// One unit of measured work.
pub trait Workload {
    fn run_once(&mut self) -> Result<(), WorkloadError>;
}

impl<F: FnMut() -> Result<(), WorkloadError>> Workload for F {
    fn run_once(&mut self) -> Result<(), WorkloadError> {
        self()
    }
}

pub fn null_iteration(clock: &dyn Clock) {
    clock.sleep(NULL_DELAY);
}

pub struct NullWorkload<'a> {
    pub clock: &'a dyn Clock,
}

impl Workload for NullWorkload<'_> {
    fn run_once(&mut self) -> Result<(), WorkloadError> {
        null_iteration(self.clock);
        Ok(())
    }
}

/// External key-generation command: `<binary> <subcommand...> -algorithm
/// <first token> <remaining tokens>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeygenCommand {
    pub binary: String,
    pub subcommand: Vec<String>,
}

impl Default for KeygenCommand {
    fn default() -> Self {
        Self {
            binary: "openssl".into(),
            subcommand: vec!["genpkey".into()],
        }
    }
}

impl KeygenCommand {
    pub fn with_binary(binary: impl Into<String>) -> Self {
        Self {
            binary: binary.into(),
            ..Self::default()
        }
    }

    pub fn command(&self, algorithm_label: &str) -> Command {
        let mut tokens = algorithm_label.split_whitespace();
        let mut cmd = Command::new(&self.binary);
        cmd.args(&self.subcommand);
        if let Some(algorithm) = tokens.next() {
            cmd.arg("-algorithm").arg(algorithm);
        }
        cmd.args(tokens)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null());
        cmd
    }

    pub fn invoke(&self, algorithm_label: &str) -> Result<(), WorkloadError> {
        let status = self.command(algorithm_label).status().map_err(|source| {
            if source.kind() == io::ErrorKind::NotFound {
                WorkloadError::MissingBinary(self.binary.clone())
            } else {
                WorkloadError::Io {
                    program: self.binary.clone(),
                    source,
                }
            }
        })?;
        if status.success() {
            Ok(())
        } else {
            Err(WorkloadError::Failed {
                program: self.binary.clone(),
                status: status.to_string(),
            })
        }
    }
}

pub struct KeygenWorkload<'a> {
    pub command: &'a KeygenCommand,
    pub algorithm_label: &'a str,
}

impl Workload for KeygenWorkload<'_> {
    fn run_once(&mut self) -> Result<(), WorkloadError> {
        self.command.invoke(self.algorithm_label)
    }
}
