//! Crate-wide error type.

use crate::ingest::PlayerId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    /// Wraps a stage failure with the pipeline stage name so the CLI can
    /// report where a run died.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(
        "parse: {rejected} malformed lines exceeds the reject threshold {threshold} \
         (last at line {line}: {reason})"
    )]
    RejectThreshold {
        rejected: u64,
        threshold: u64,
        line: u64,
        reason: String,
    },

    #[error("clip: no samples fall inside the supplied timeline")]
    EmptyClip,

    #[error("timeline: periods must be sorted, non-overlapping, with start < end")]
    BadTimeline,

    #[error("roster: expected exactly 5 active players, got {0}")]
    RosterSize(usize),

    #[error("roster: player {0} is not present in the session")]
    UnknownPlayer(PlayerId),

    #[error("regularize: grid step must be >= 1 ms, got {0}")]
    BadGridStep(i64),

    #[error("regularize: session has no samples")]
    EmptySession,

    #[error("regularize: player {0} has no sample at or before the first grid instant")]
    LeadingGap(PlayerId),

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("expected exactly 5 players, got {0}")]
    PlayerCount(usize),

    #[error("kmeans: k must be >= 1, got {0}")]
    BadK(usize),

    #[error("kmeans: {rows} rows is fewer than k = {k}")]
    TooFewRows { rows: usize, k: usize },

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("label {label} is out of range for k = {k}")]
    BadLabel { label: usize, k: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("mds: need at least 2 points, got {0}")]
    MatrixTooSmall(usize),

    #[error("mds: matrix must be square and symmetric with zero diagonal, non-negative entries")]
    BadDistanceMatrix,

    #[error("offense: instant {0} ms falls outside every timeline period")]
    InstantOutsideTimeline(i64),

    #[error("partition enumeration is limited to 12 points, got {0}")]
    TooManyPoints(usize),

    #[error("scenario: {0}")]
    Scenario(String),

    /// Malformed intermediate artifact (frames.csv, model.txt, ...).
    #[error("{file}: {reason}")]
    Format { file: &'static str, reason: String },
}

impl Error {
    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
