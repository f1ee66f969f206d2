//! Errors carrying the process exit code: 1 usage/configuration,
//! 2 data or file format, 3 runtime.

use std::fmt;

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const RUNTIME: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: DATA,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: RUNTIME,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<obslab_core::Error> for Failure {
    fn from(e: obslab_core::Error) -> Self {
        match e {
            obslab_core::Error::Argument(_) => Failure::usage(e.to_string()),
            _ => Failure::data(e.to_string()),
        }
    }
}

impl From<obslab_nn::Error> for Failure {
    fn from(e: obslab_nn::Error) -> Self {
        match e {
            obslab_nn::Error::Checkpoint { .. } | obslab_nn::Error::Io { .. } => Failure::data(e.to_string()),
            obslab_nn::Error::Argument(_) => Failure::usage(e.to_string()),
            _ => Failure::runtime(e.to_string()),
        }
    }
}

impl From<obslab_harness::Error> for Failure {
    fn from(e: obslab_harness::Error) -> Self {
        use obslab_harness::Error as E;
        match e {
            E::Config(_) | E::Argument(_) => Failure::usage(e.to_string()),
            E::Data(inner) => inner.into(),
            E::Network(inner) => inner.into(),
            E::Io { .. } | E::Json { .. } => Failure::data(e.to_string()),
            E::Diverged(_) => Failure::runtime(e.to_string()),
        }
    }
}
