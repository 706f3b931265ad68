use thiserror::Error;

/// Errors produced anywhere in the traceback pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("modulus {0} is not a prime in (2, 2^32)")]
    InvalidModulus(u64),

    #[error("value {value} is not a residue modulo {p}")]
    NotAResidue { value: u64, p: u64 },

    #[error("zero has no multiplicative inverse")]
    ZeroInverse,

    #[error("a path needs at least one node")]
    EmptyPath,

    #[error("position {position} is out of range 1..={max}")]
    PositionOutOfRange { position: usize, max: usize },

    #[error("cannot delete the only node of a path")]
    EmptyPathDeletion,

    #[error("x-value sampler exhausted all p-1 values; it has been reseeded")]
    XExhausted,

    #[error("packet is not marked")]
    UnmarkedPacket,

    #[error("marking scheme gives the first node zero marking fraction")]
    DegenerateScheme,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("hop {hop} holds {have} distinct value-pairs, {need} are needed")]
    InsufficientPairs {
        hop: usize,
        have: usize,
        need: usize,
    },

    #[error("x-value {0} appears twice in one evaluation set")]
    DuplicateX(u64),

    #[error("value-pairs at hop {hop} disagree with the recovered polynomial")]
    InconsistentEvidence { hop: usize },

    #[error("polynomial index k={k} outside {lo}..={hi}")]
    KOutOfRange { k: usize, lo: usize, hi: usize },

    #[error("x = 0 cannot be used by the incremental decoder")]
    ZeroX,

    #[error("no unique candidate row after {retries} retries (rows matched: {rows:?})")]
    AmbiguousChange { rows: Vec<usize>, retries: usize },

    #[error("pair stream ended after {consumed} pairs")]
    StreamExhausted { consumed: usize },

    #[error("buffer holds {have} usable packets, {need} required")]
    InsufficientBuffer { have: usize, need: usize },

    #[error("marked packet hop {hop} does not match a known path of length {d}")]
    UnexpectedHop { hop: usize, d: usize },

    #[error("no path from {from} to {to}")]
    NoPath { from: u64, to: u64 },

    #[error("failure subgraphs have an empty intersection")]
    EmptyIntersection,

    #[error("malformed trace file: {0}")]
    BadTrace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
