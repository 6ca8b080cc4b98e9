use thiserror::Error;

/// Errors produced by the scheduling library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value is out of its admissible range.
    #[error("configuration error: {0}")]
    Config(String),

    /// A value object failed its construction invariant.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    /// A trace row could not be parsed.
    #[error("trace parse error at row {row}: {reason}")]
    TraceParse { row: usize, reason: String },

    /// Aggregate compute exceeds the edge capacity.
    #[error("infeasible compute allocation: {sum_compute} > {capacity} cycles/s")]
    InfeasibleCompute { sum_compute: f64, capacity: f64 },

    /// A non-finite number was fed to the predictor.
    #[error("non-finite predictor input: {0}")]
    NonFinite(f64),

    /// A predictor was queried with no history at all.
    #[error("empty observation history")]
    EmptyHistory,

    /// The brute-force oracle refused an instance whose joint space is too large.
    #[error("joint action space of {size} exceeds enumeration cap {cap}")]
    SpaceTooLarge { size: u128, cap: u128 },

    /// A closed-loop invariant was violated during an episode.
    #[error("invariant breach at slot {slot}: {reason}")]
    InvariantBreach { slot: usize, reason: String },

    /// Malformed parameter dump.
    #[error("parameter dump error: {0}")]
    Dump(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Error {
    Error::Invalid {
        what,
        reason: reason.into(),
    }
}
