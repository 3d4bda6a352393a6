use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("discount factor {0} outside [0, 1)")]
    BadGamma(f64),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("action {action} out of range (n_actions = {n_actions})")]
    ActionOutOfRange { action: usize, n_actions: usize },
    #[error("action {0} is masked out")]
    MaskedAction(usize),
    #[error("every action is masked out")]
    AllMasked,
    #[error("agent id {id} out of range (population size {n})")]
    BadId { id: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("joint distribution is not normalized (sum = {0})")]
    NotNormalized(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid character spec: {0}")]
    Character(String),
    #[error("batch was not collected against the frozen baseline")]
    NotAgainstBaseline,
    #[error("operation requires an enumerable game")]
    NotEnumerable,
    #[error("non-finite loss at generation {0}")]
    Diverged(usize),
    #[error("episode {episode} failed: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
