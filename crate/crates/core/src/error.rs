use thiserror::Error;

/// Every failure the simulator can report.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates an invariant. `field` is the dotted
    /// path of the offending key, e.g. `array.pitch`.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("configuration parse error: {0}")]
    Parse(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("index ({row}, {col}) out of range for {rows}x{cols} array")]
    Index {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    /// Field evaluated on top of a point source.
    #[error("field point {point} lies within {tolerance} mm of element {element}")]
    Singularity {
        point: String,
        element: usize,
        tolerance: f64,
    },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("detection failure: {0}")]
    Detection(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
