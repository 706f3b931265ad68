use std::collections::VecDeque;

use serde::Serialize;

use super::known::KnownPath;
use super::matrix::{build_r, build_s, CandidateMatrix, DecoderParams, MarkPair, MatrixKind};
use crate::error::{Error, Result};
use crate::field::FieldElement;
use crate::path::ChangeEvent;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DetectionResult {
    pub event: ChangeEvent,
    /// Every row that matched on the deciding window.
    pub rows_matched: Vec<usize>,
    /// Marked packets fed to the detector up to the verdict.
    pub packets_consumed: usize,
    pub retries: usize,
    /// Field multiplications spent on candidate matrices.
    pub mults: u64,
}

/// Whether a set of matching rows all describe the same changed path.
///
/// Inserting `s` next to an equal neighbour, or deleting one of a run of
/// equal IDs, yields the same polynomial for each position in the run.
pub(crate) fn equivalent_rows(
    kp: &KnownPath,
    kind: MatrixKind,
    rows: &[(usize, FieldElement)],
) -> bool {
    let Some(&(first, v)) = rows.first() else {
        return false;
    };
    let contiguous = rows
        .iter()
        .enumerate()
        .all(|(i, &(k, val))| k == first + i && val == v);
    if !contiguous {
        return false;
    }
    match kind {
        // rows m and m+1 agree iff s == r_m
        MatrixKind::SHat => rows[..rows.len() - 1].iter().all(|&(k, _)| kp.r(k) == v),
        MatrixKind::RHat => rows.iter().all(|&(k, _)| kp.r(k) == v),
    }
}

/// Constant rows that name a coherent change. A deletion row must also
/// agree with the node already known at that position: row `d` is constant
/// (at `r_{d-1}`) whenever `r_{d-1}` was the one removed.
pub(crate) fn candidate_rows(
    kp: &KnownPath,
    m: &CandidateMatrix,
    min_valid: usize,
) -> Vec<(usize, FieldElement)> {
    let mut rows = m.consistent_rows(min_valid);
    if m.kind == MatrixKind::RHat {
        rows.retain(|&(k, v)| kp.r(k) == v);
    }
    rows
}

pub(crate) fn verdict(kind: MatrixKind, k: usize, v: FieldElement) -> ChangeEvent {
    match kind {
        MatrixKind::SHat => ChangeEvent::Added { position: k, id: v },
        MatrixKind::RHat => ChangeEvent::Deleted { position: k, id: v },
    }
}

/// Addition or deletion detection over a stream of full-path marks, fed one pair at a
/// time.
///
/// The first `l` pairs form the window. If no single row (or run of
/// equivalent rows) is constant across it, the oldest `epsilon` pairs are
/// dropped and the window refills from the stream.
#[derive(Debug, Clone)]
pub struct PairDetector {
    kp: KnownPath,
    params: DecoderParams,
    kind: MatrixKind,
    window: VecDeque<MarkPair>,
    consumed: usize,
    retries: usize,
    mults: u64,
}

impl PairDetector {
    pub fn new(kp: KnownPath, params: DecoderParams, kind: MatrixKind) -> Result<Self> {
        params.validate()?;
        if kind == MatrixKind::RHat && kp.d() < 2 {
            return Err(Error::EmptyPathDeletion);
        }
        Ok(PairDetector {
            kp,
            params,
            kind,
            window: VecDeque::new(),
            consumed: 0,
            retries: 0,
            mults: 0,
        })
    }

    pub fn addition(kp: KnownPath, params: DecoderParams) -> Result<Self> {
        Self::new(kp, params, MatrixKind::SHat)
    }

    pub fn deletion(kp: KnownPath, params: DecoderParams) -> Result<Self> {
        Self::new(kp, params, MatrixKind::RHat)
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    fn hop(&self) -> usize {
        match self.kind {
            MatrixKind::SHat => self.kp.d() + 1,
            MatrixKind::RHat => self.kp.d() - 1,
        }
    }

    fn build(&self) -> Result<CandidateMatrix> {
        let pairs: Vec<MarkPair> = self.window.iter().copied().collect();
        match self.kind {
            MatrixKind::SHat => build_s(&self.kp, &pairs),
            MatrixKind::RHat => build_r(&self.kp, &pairs),
        }
    }

    /// Adds one `(x, z)` pair. Returns the verdict once a window decides.
    pub fn push(&mut self, x: FieldElement, z: FieldElement) -> Result<Option<DetectionResult>> {
        self.consumed += 1;
        self.window.push_back(MarkPair::new(x, z, self.hop()));
        if self.window.len() < self.params.l {
            return Ok(None);
        }
        let m = self.build()?;
        self.mults += m.mults;
        let rows = candidate_rows(&self.kp, &m, self.params.l);
        if !rows.is_empty() && (rows.len() == 1 || equivalent_rows(&self.kp, self.kind, &rows)) {
            let (k, v) = rows[0];
            return Ok(Some(DetectionResult {
                event: verdict(self.kind, k, v),
                rows_matched: rows.iter().map(|r| r.0).collect(),
                packets_consumed: self.consumed,
                retries: self.retries,
                mults: self.mults,
            }));
        }
        if self.retries == self.params.max_retries {
            return Err(Error::AmbiguousChange {
                rows: rows.iter().map(|r| r.0).collect(),
                retries: self.retries,
            });
        }
        self.retries += 1;
        for _ in 0..self.params.epsilon {
            self.window.pop_front();
        }
        Ok(None)
    }
}

fn run<I>(mut det: PairDetector, stream: I) -> Result<DetectionResult>
where
    I: IntoIterator<Item = (FieldElement, FieldElement)>,
{
    for (x, z) in stream {
        if let Some(r) = det.push(x, z)? {
            return Ok(r);
        }
    }
    Err(Error::StreamExhausted {
        consumed: det.consumed(),
    })
}

/// Locates a node inserted into `kp` from marks of hop `d + 1`.
pub fn detect_addition<I>(
    kp: &KnownPath,
    stream: I,
    params: DecoderParams,
) -> Result<DetectionResult>
where
    I: IntoIterator<Item = (FieldElement, FieldElement)>,
{
    run(PairDetector::addition(kp.clone(), params)?, stream)
}

/// Locates a node removed from `kp` from marks of hop `d - 1`.
pub fn detect_deletion<I>(
    kp: &KnownPath,
    stream: I,
    params: DecoderParams,
) -> Result<DetectionResult>
where
    I: IntoIterator<Item = (FieldElement, FieldElement)>,
{
    run(PairDetector::deletion(kp.clone(), params)?, stream)
}
