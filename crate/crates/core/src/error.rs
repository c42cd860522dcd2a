// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("parity must be +1 or -1, got {0}")]
    InvalidParity(i32),

    #[error("temperature must be positive, got k_B T = {0} µeV")]
    InvalidTemperature(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("degenerate spectrum: {0}")]
    FitDegenerate(String),

    #[error("linewidth must be positive, got {0} Hz")]
    InvalidLinewidth(f64),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("I/O failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite, got {value}"),
        })
    }
}
