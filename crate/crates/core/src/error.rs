use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("chart parse error in feature {feature}: {message}")]
    ChartParse { feature: String, message: String },

    #[error("chart contains no shoreline or landmark features")]
    EmptyChart,

    #[error("no shoreline samples in range")]
    NoShoreline,

    #[error("radar scan has no observations")]
    EmptyScan,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("singular covariance after regularization")]
    SingularCovariance,

    #[error("timestamp {t} is not after previous sample at {prev}")]
    OutOfOrder { prev: f64, t: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV")]
    Csv(#[from] csv::Error),

    #[error("malformed JSON")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
