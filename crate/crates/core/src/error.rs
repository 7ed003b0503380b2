use thiserror::Error;

use crate::engine::Conflict;
use crate::grid::Node;
use crate::model::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("neighborhood position {0} out of range 1..=18")]
    PositionOutOfRange(usize),

    #[error("empty node set")]
    EmptyNodeSet,

    #[error("configuration has no particles")]
    EmptyConfiguration,

    #[error("two particles on node {0}")]
    DuplicateNode(Node),

    #[error("invalid configuration: {}", join(.0))]
    InvalidConfiguration(Vec<Violation>),

    #[error("configuration is not initial (contracted and connected)")]
    NotInitial,

    #[error("node {0} holds no particle")]
    NotOccupied(Node),

    #[error("particle at {0} is not contracted")]
    NotContracted(Node),

    #[error("unknown particle id {0}")]
    UnknownParticle(usize),

    #[error("empty activation set")]
    EmptyActivation,

    #[error("adversary chose {chosen} outside conflict group {group:?}")]
    InvalidChoice { chosen: usize, group: Vec<usize> },

    #[error("conflict at {} needs a tie-break among {:?}", .0.site, .0.group)]
    MissingTieBreak(Conflict),

    #[error("fairness breach: particle {id} idle for {gap} rounds (bound {bound})")]
    Unfair { id: usize, gap: u64, bound: u64 },

    #[error("instance size {n} exceeds bound {max}")]
    TooLarge { n: usize, max: usize },

    #[error("state budget of {0} states exhausted")]
    StateBudget(usize),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("replay diverged at step {step}: expected {expected}, got {actual}")]
    Divergence {
        step: u64,
        expected: String,
        actual: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
