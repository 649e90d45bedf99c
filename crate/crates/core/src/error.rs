use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("channel error: {0}")]
    Channel(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("reference vector has zero energy")]
    ZeroEnergyReference,

    #[error("singular innovation covariance: {0}")]
    SingularInnovation(String),

    #[error("gradient detector diverged: {0}")]
    Divergence(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
