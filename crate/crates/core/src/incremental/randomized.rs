use super::detect::{candidate_rows, equivalent_rows, verdict, DetectionResult};
use super::known::KnownPath;
use super::matrix::{build_r, build_s, CandidateMatrix, DecoderParams, MarkPair, MatrixKind};
use crate::error::{Error, Result};
use crate::field::FieldElement;
use crate::marking::{MarkingConfig, Packet};
use crate::path::ChangeEvent;
use crate::stats::worst_case_ratio;

/// Marked packets to wait for before a quiet epoch is called:
/// `scale * l * ceil((1 - F_0) / F_1)`.
pub fn randomized_window(config: &MarkingConfig, d: usize, l: usize, scale: f64) -> Result<usize> {
    let base = worst_case_ratio(config, d)?.buffer_len(l);
    Ok(((base as f64) * scale).ceil().max(1.0) as usize)
}

enum Pick {
    None,
    One(usize, FieldElement, Vec<usize>),
    Ambiguous(Vec<usize>),
}

fn pick(kp: &KnownPath, kind: MatrixKind, rows: &[(usize, FieldElement)]) -> Pick {
    match rows {
        [] => Pick::None,
        [(k, v)] => Pick::One(*k, *v, vec![*k]),
        _ if equivalent_rows(kp, kind, rows) => {
            Pick::One(rows[0].0, rows[0].1, rows.iter().map(|r| r.0).collect())
        }
        _ => Pick::Ambiguous(rows.iter().map(|r| r.0).collect()),
    }
}

type Rows = Vec<(usize, FieldElement)>;

fn split_by_degeneracy(kp: &KnownPath, m: &CandidateMatrix) -> (Rows, Rows) {
    candidate_rows(kp, m, 2)
        .into_iter()
        .partition(|&(k, _)| !m.is_degenerate(k))
}

/// Change detection under randomized marking, fed one packet at a time.
///
/// Only informative marks enter the candidate matrices: those with hop
/// `d + 1`, or whose value differs from what the known path would produce
/// at that hop. A mark whose segment misses the change matches the old
/// suffix exactly and would otherwise create spurious constant rows.
///
/// Verdict rules, in order:
/// * any informative hop `>= d` means an addition; only the addition matrix
///   is consulted;
/// * a unique constant row supported by marks from two different markers
///   decides as soon as `l` informative marks are in hand;
/// * a row supported by a single marker only decides once the window of
///   marked packets is full, and deletion wins a tie, since a deletion right
///   after `r_1` can never produce a second marker;
/// * a full window with no informative mark is no change if the longest mark
///   still spans `d` nodes, otherwise the loss of `r_1`, which leaves every
///   mark identical to an old suffix.
#[derive(Debug, Clone)]
pub struct RandomizedDetector {
    kp: KnownPath,
    params: DecoderParams,
    window: usize,
    marked: usize,
    max_hop: usize,
    informative: Vec<MarkPair>,
    retries: usize,
    mults: u64,
    dirty: bool,
    was_filled: bool,
}

impl RandomizedDetector {
    pub fn new(kp: KnownPath, params: DecoderParams, window: usize) -> Result<Self> {
        params.validate()?;
        if window == 0 {
            return Err(Error::InvalidConfig(
                "detection window must be positive".into(),
            ));
        }
        Ok(RandomizedDetector {
            kp,
            params,
            window,
            marked: 0,
            max_hop: 0,
            informative: Vec::new(),
            retries: 0,
            mults: 0,
            dirty: false,
            was_filled: false,
        })
    }

    pub fn marked(&self) -> usize {
        self.marked
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn informative(&self) -> usize {
        self.informative.len()
    }

    pub fn push(&mut self, pkt: &Packet) -> Result<Option<DetectionResult>> {
        if !pkt.flag {
            return Ok(None);
        }
        let d = self.kp.d();
        let h = pkt.hop as usize;
        if h == 0 || h > d + 1 {
            return Err(Error::UnexpectedHop { hop: h, d });
        }
        if pkt.x.is_zero() {
            return Err(Error::ZeroX);
        }
        self.marked += 1;
        self.max_hop = self.max_hop.max(h);
        if h == d + 1 || self.kp.suffix_value(h, pkt.x) != Some(pkt.y) {
            self.informative.push(MarkPair::new(pkt.x, pkt.y, h));
            self.dirty = true;
        }
        let filled = self.marked >= self.window;
        if filled && !self.was_filled {
            self.was_filled = true;
            self.dirty = true;
        }
        if !self.dirty {
            return Ok(None);
        }
        self.dirty = false;
        self.evaluate(filled)
    }

    fn done(&self, event: ChangeEvent, rows: Vec<usize>) -> Option<DetectionResult> {
        Some(DetectionResult {
            event,
            rows_matched: rows,
            packets_consumed: self.marked,
            retries: self.retries,
            mults: self.mults,
        })
    }

    fn evaluate(&mut self, filled: bool) -> Result<Option<DetectionResult>> {
        let d = self.kp.d();
        let l = self.params.l;
        if self.informative.is_empty() {
            if !filled {
                return Ok(None);
            }
            let event = if self.max_hop >= d || d == 1 {
                ChangeEvent::NoChange
            } else {
                ChangeEvent::deletion_of(self.kp.path(), 1)?
            };
            return Ok(self.done(event, Vec::new()));
        }

        let mut sorted = self.informative.clone();
        sorted.sort_by_key(|m| std::cmp::Reverse(m.hop));
        let offset = (self.retries * self.params.epsilon).min(sorted.len());
        let cols: Vec<MarkPair> = sorted[offset..].iter().take(l).copied().collect();
        if cols.len() < 2 || (cols.len() < l && !filled) {
            return Ok(None);
        }

        let addition_only = self.informative.iter().any(|p| p.hop >= d);
        let s = build_s(&self.kp, &cols)?;
        self.mults += s.mults;
        let (s_firm, s_weak) = split_by_degeneracy(&self.kp, &s);

        let outcome = if addition_only {
            match pick(&self.kp, MatrixKind::SHat, &s_firm) {
                Pick::None => pick(&self.kp, MatrixKind::SHat, &s_weak),
                other => other,
            }
            .tag(MatrixKind::SHat)
        } else {
            let r = (d >= 2).then(|| build_r(&self.kp, &cols)).transpose()?;
            if let Some(r) = &r {
                self.mults += r.mults;
            }
            let (r_firm, r_weak) = r
                .as_ref()
                .map(|r| split_by_degeneracy(&self.kp, r))
                .unwrap_or_default();
            let firm_s = pick(&self.kp, MatrixKind::SHat, &s_firm);
            let firm_r = pick(&self.kp, MatrixKind::RHat, &r_firm);
            match (firm_s, firm_r) {
                (Pick::None, Pick::None) => {
                    if !filled {
                        return Ok(None);
                    }
                    match pick(&self.kp, MatrixKind::RHat, &r_weak) {
                        Pick::None => {
                            pick(&self.kp, MatrixKind::SHat, &s_weak).tag(MatrixKind::SHat)
                        }
                        other => other.tag(MatrixKind::RHat),
                    }
                }
                (one, Pick::None) => one.tag(MatrixKind::SHat),
                (Pick::None, one) => one.tag(MatrixKind::RHat),
                (a, b) => {
                    // both matrices claim a change; the two cannot hold together
                    let mut rows = a.rows();
                    rows.extend(b.rows());
                    Tagged::Ambiguous(rows)
                }
            }
        };

        let rows = match outcome {
            Tagged::One(kind, k, v, rows) => return Ok(self.done(verdict(kind, k, v), rows)),
            Tagged::None if !filled => return Ok(None),
            Tagged::None => Vec::new(),
            Tagged::Ambiguous(rows) => rows,
        };
        if self.retries == self.params.max_retries {
            return Err(Error::AmbiguousChange {
                rows,
                retries: self.retries,
            });
        }
        self.retries += 1;
        Ok(None)
    }
}

enum Tagged {
    None,
    One(MatrixKind, usize, FieldElement, Vec<usize>),
    Ambiguous(Vec<usize>),
}

impl Pick {
    fn tag(self, kind: MatrixKind) -> Tagged {
        match self {
            Pick::None => Tagged::None,
            Pick::One(k, v, rows) => Tagged::One(kind, k, v, rows),
            Pick::Ambiguous(rows) => Tagged::Ambiguous(rows),
        }
    }

    fn rows(self) -> Vec<usize> {
        match self {
            Pick::None => Vec::new(),
            Pick::One(_, _, rows) | Pick::Ambiguous(rows) => rows,
        }
    }
}

/// Runs the randomized-marking detector over a captured buffer, stopping at the first verdict.
pub fn detect_change_randomized(
    kp: &KnownPath,
    buffer: &[Packet],
    params: DecoderParams,
    window: usize,
) -> Result<DetectionResult> {
    let mut det = RandomizedDetector::new(kp.clone(), params, window)?;
    for pkt in buffer {
        if let Some(r) = det.push(pkt)? {
            return Ok(r);
        }
    }
    if det.marked() < window {
        return Err(Error::InsufficientBuffer {
            have: det.marked(),
            need: window,
        });
    }
    Err(Error::StreamExhausted {
        consumed: det.marked(),
    })
}
