//! Algebraic packet traceback over GF(p) for paths that change.
//!
//! Routers fold their IDs into a polynomial carried in each packet. The
//! victim interpolates the polynomial to recover the attack path, and once a
//! path is known it detects single-node additions and deletions from far
//! fewer packets than a full reconstruction needs.

pub mod cli;
pub mod error;
pub mod field;
pub mod incremental;
pub mod marking;
pub mod netcode;
pub mod path;
pub mod reconstruct;
pub mod sim;
pub mod stats;
pub mod trace_file;

pub use error::{Error, Result};
pub use field::{FieldCtx, FieldElement, DEFAULT_MODULUS};
pub use marking::{MarkingConfig, MarkingScheme, Packet};
pub use path::{ChangeEvent, Path};
