use crate::model::PatternKind;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// The (η, v) point lies outside the validity region of the chosen pattern.
    #[error("(eta={eta}, v={v}) is outside the validity region of the {kind} model")]
    InfeasibleParameters { eta: f64, v: f64, kind: PatternKind },

    /// η = 1, v = 1: the error fraction c is of the form 0/0.
    #[error("(eta=1, v=1) is a degenerate point: the error fraction is 0/0")]
    DegeneratePoint,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// No coincidences were recorded, so the conditional correlation is undefined.
    #[error("tally has no coincidences; correlation is undefined")]
    EmptyTally,
}

pub type Result<T> = std::result::Result<T, Error>;
