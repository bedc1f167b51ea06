use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("input contains no valid trips")]
    EmptyDataset,

    #[error("tessellation contains no valid tiles")]
    EmptyTessellation,

    #[error("duplicate tile_id `{0}`")]
    DuplicateTile(String),

    #[error("sensitivity of `{0}` is unbounded; set a finite --max-trips-per-user")]
    UnboundedSensitivity(String),

    #[error("unknown measure `{0}`")]
    UnknownMeasure(String),

    #[error("invalid bin configuration for `{measure}`: {reason}")]
    InvalidBins { measure: String, reason: String },

    #[error("{0} requires a non-empty input")]
    EmptyInput(&'static str),

    #[error("error measure is undefined: {0}")]
    Undefined(String),

    #[error("invalid geo-feature document: {0}")]
    GeoJson(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Configuration problems are the caller's fault (bad flags, bad config
    /// files); everything else is a problem with the data itself.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::MissingColumn(_)
                | Error::DuplicateTile(_)
                | Error::UnboundedSensitivity(_)
                | Error::UnknownMeasure(_)
                | Error::InvalidBins { .. }
        )
    }
}
