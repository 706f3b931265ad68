//! Incremental change detection on an already-traced path.
//!
//! After a single-node change, every new mark satisfies a linear relation in
//! the unknown `(position, id)` pair. Evaluating that relation for each
//! candidate position gives one row per position; the true row is constant
//! across packets while the others look uniformly random.

mod detect;
mod known;
mod matrix;
mod randomized;

pub use detect::{detect_addition, detect_deletion, DetectionResult, PairDetector};
pub use known::KnownPath;
pub use matrix::{
    build_r, build_s, required_l, CandidateMatrix, DecoderParams, MarkPair, MatrixKind,
};
pub use randomized::{detect_change_randomized, randomized_window, RandomizedDetector};
