use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty ball: center {center}, radius {radius}")]
    EmptyBall { center: usize, radius: f64 },

    #[error("ball family is empty")]
    EmptyFamily,

    #[error("rho infinite: potential vanishes identically on the window")]
    RhoInfinite,

    #[error("potential vanishes on every ball of the family")]
    PotentialVanishes,

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("scale unresolvable for m = {m}; largest feasible m is {max_feasible}")]
    ScaleUnresolvable { m: u32, max_feasible: u32 },

    #[error("monotone chain stuck at point {point} (distance {distance} to target)")]
    ChainStuck { point: usize, distance: f64 },

    #[error("chain-ball verification failed: {0}")]
    Verification(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// CLI exit code: 1 for validation problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Config { .. } | Error::Io(_) => 1,
            _ => 2,
        }
    }
}
