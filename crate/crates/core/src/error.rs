use thiserror::Error;

/// Errors raised by the formation library and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (|S + S^T| = {0:e})")]
    NotSkew(f64),

    #[error("matrix is not a proper rotation")]
    NotRotation,

    #[error("rotation angle too close to pi for a unique logarithm (trace = {0})")]
    NearPiSingularity(f64),

    #[error("Euler-angle rates undefined at pitch = +/-pi/2")]
    GimbalLock,

    #[error("communication graph contains a cycle")]
    CycleDetected,

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("formation requires zero forward speed (fixed-wing UAVs cannot hover)")]
    HoverRequired,

    #[error("invalid velocity limits: {0}")]
    InvalidLimits(String),

    #[error("invalid control gains: {0}")]
    InvalidGains(String),

    #[error("time {0} s is outside the leader schedule")]
    OutOfSchedule(f64),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("infeasible formation for node {node}: {reason}")]
    Infeasible { node: usize, reason: String },

    #[error("tick {tick}, node {node}: {source}")]
    Runtime {
        tick: usize,
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("plot error: {0}")]
    Plot(String),

    #[error("trajectory log is empty")]
    EmptyLog,
}

impl Error {
    /// Strips `Runtime` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Runtime { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the command-line tool.
    ///
    /// 2 for invalid or infeasible scenarios, 3 for runtime singularities,
    /// 4 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::NearPiSingularity(_) | Error::GimbalLock => 3,
            Error::Io(_) | Error::Csv(_) | Error::Plot(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
