use std::path::PathBuf;

use thiserror::Error;

use crate::layout::ApartmentId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("apartment {apt} is outside the building ({floors} floors x {rows} rows x {columns} columns)")]
    ApartmentOutOfRange {
        apt: ApartmentId,
        floors: u32,
        rows: u32,
        columns: u32,
    },

    #[error("degenerate segment: both endpoints are at ({x}, {y}, {z})")]
    DegenerateSegment { x: f64, y: f64, z: f64 },

    #[error("path-loss model is only valid for d > 1 m (got d = {0} m)")]
    DistanceOutOfDomain(f64),

    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("{path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
