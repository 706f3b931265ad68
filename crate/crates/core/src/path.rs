//! Paths and single-node changes.
//!
//! A path is the router sequence `r_1 .. r_d` from the source up to (but not
//! including) the destination. Positions are 1-based. For an addition,
//! position `m` means "insert before the current `r_m`", so `1` is in front of
//! the source and `d + 1` is right after `r_d`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldCtx, FieldElement};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<FieldElement>", into = "Vec<FieldElement>")]
pub struct Path {
    nodes: Vec<FieldElement>,
}

impl TryFrom<Vec<FieldElement>> for Path {
    type Error = Error;

    fn try_from(nodes: Vec<FieldElement>) -> Result<Self> {
        Path::new(nodes)
    }
}

impl From<Path> for Vec<FieldElement> {
    fn from(path: Path) -> Self {
        path.nodes
    }
}

impl Path {
    pub fn new(nodes: Vec<FieldElement>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyPath);
        }
        Ok(Path { nodes })
    }

    /// Builds a path from raw IDs, rejecting any ID outside `[0, p)`.
    pub fn from_ids(ids: &[u64], ctx: &FieldCtx) -> Result<Self> {
        let nodes = ids
            .iter()
            .map(|&v| ctx.element(v))
            .collect::<Result<Vec<_>>>()?;
        Path::new(nodes)
    }

    /// Number of routers `d`.
    #[inline]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Always false; a path has at least its source.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn nodes(&self) -> &[FieldElement] {
        &self.nodes
    }

    /// `r_i`, 1-based.
    #[inline]
    pub fn node(&self, i: usize) -> FieldElement {
        self.nodes[i - 1]
    }

    pub fn ids(&self) -> Vec<u64> {
        self.nodes.iter().map(|n| n.value()).collect()
    }

    /// The last `k` nodes, i.e. the sub-path a mark of hop count `k` encodes.
    pub fn suffix(&self, k: usize) -> Result<Path> {
        if k == 0 || k > self.len() {
            return Err(Error::PositionOutOfRange {
                position: k,
                max: self.len(),
            });
        }
        Ok(Path {
            nodes: self.nodes[self.len() - k..].to_vec(),
        })
    }

    /// Returns the changed path; `self` is left untouched.
    pub fn apply_change(&self, event: &ChangeEvent) -> Result<Path> {
        let d = self.len();
        match *event {
            ChangeEvent::NoChange => Ok(self.clone()),
            ChangeEvent::Added { position, id } => {
                if position == 0 || position > d + 1 {
                    return Err(Error::PositionOutOfRange {
                        position,
                        max: d + 1,
                    });
                }
                let mut nodes = self.nodes.clone();
                nodes.insert(position - 1, id);
                Ok(Path { nodes })
            }
            ChangeEvent::Deleted { position, .. } => {
                if position == 0 || position > d {
                    return Err(Error::PositionOutOfRange { position, max: d });
                }
                if d == 1 {
                    return Err(Error::EmptyPathDeletion);
                }
                let mut nodes = self.nodes.clone();
                nodes.remove(position - 1);
                Ok(Path { nodes })
            }
        }
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, ")")
    }
}

/// A single-node mutation of a path.
///
/// For `Deleted`, `id` records the removed router (`r_m`). It is reporting
/// data: [`Path::apply_change`] removes by position only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChangeEvent {
    Added { position: usize, id: FieldElement },
    Deleted { position: usize, id: FieldElement },
    NoChange,
}

impl ChangeEvent {
    /// Deletion of `r_position` with the ID filled in from `path`.
    pub fn deletion_of(path: &Path, position: usize) -> Result<ChangeEvent> {
        if position == 0 || position > path.len() {
            return Err(Error::PositionOutOfRange {
                position,
                max: path.len(),
            });
        }
        Ok(ChangeEvent::Deleted {
            position,
            id: path.node(position),
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ChangeEvent::Added { .. } => "add",
            ChangeEvent::Deleted { .. } => "delete",
            ChangeEvent::NoChange => "none",
        }
    }

    pub fn position(&self) -> Option<usize> {
        match *self {
            ChangeEvent::Added { position, .. } | ChangeEvent::Deleted { position, .. } => {
                Some(position)
            }
            ChangeEvent::NoChange => None,
        }
    }

    pub fn id(&self) -> Option<FieldElement> {
        match *self {
            ChangeEvent::Added { id, .. } | ChangeEvent::Deleted { id, .. } => Some(id),
            ChangeEvent::NoChange => None,
        }
    }

    /// Change in path length this event causes.
    pub fn length_delta(&self) -> isize {
        match self {
            ChangeEvent::Added { .. } => 1,
            ChangeEvent::Deleted { .. } => -1,
            ChangeEvent::NoChange => 0,
        }
    }
}

impl fmt::Display for ChangeEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChangeEvent::Added { position, id } => write!(f, "added {id} at position {position}"),
            ChangeEvent::Deleted { position, id } => {
                write!(f, "deleted {id} from position {position}")
            }
            ChangeEvent::NoChange => write!(f, "no change"),
        }
    }
}
