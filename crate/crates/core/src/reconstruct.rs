//! Full-path recovery from marked packets.
//!
//! A hop-`k` mark carries `y = r_{d-k+1} x^{k-1} + ... + r_d`, so `k` pairs
//! with distinct `x` pin down the last `k` routers. Interpolation uses Newton
//! divided differences and converts the result to monomial coefficients.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::field::{FieldCtx, FieldElement};
use crate::marking::Packet;
use crate::path::Path;

/// Value-pairs sharing one hop count.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvaluationSet {
    pub hop: usize,
    pub pairs: Vec<(FieldElement, FieldElement)>,
}

impl EvaluationSet {
    pub fn new(hop: usize, pairs: Vec<(FieldElement, FieldElement)>) -> Self {
        EvaluationSet { hop, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Segregated {
    pub buckets: BTreeMap<usize, EvaluationSet>,
    /// Packets dropped because their `x` already appeared in the bucket.
    pub duplicates: usize,
    /// Unmarked packets skipped.
    pub unmarked: usize,
}

impl Segregated {
    pub fn max_hop(&self) -> Option<usize> {
        self.buckets.keys().next_back().copied()
    }

    pub fn get(&self, hop: usize) -> Option<&EvaluationSet> {
        self.buckets.get(&hop)
    }
}

/// Buckets marked packets by hop count, keeping the first pair for each `x`.
pub fn segregate_by_hopcount(packets: &[Packet]) -> Segregated {
    let mut out = Segregated::default();
    let mut seen: HashSet<(usize, FieldElement)> = HashSet::new();
    for p in packets {
        if !p.flag {
            out.unmarked += 1;
            continue;
        }
        let hop = p.hop as usize;
        if !seen.insert((hop, p.x)) {
            out.duplicates += 1;
            continue;
        }
        out.buckets
            .entry(hop)
            .or_insert_with(|| EvaluationSet::new(hop, Vec::new()))
            .pairs
            .push((p.x, p.y));
    }
    out
}

/// Monomial coefficients `c_0 .. c_{n-1}` of the polynomial through `pairs`.
fn newton_coefficients(
    pairs: &[(FieldElement, FieldElement)],
    ctx: &FieldCtx,
) -> Result<Vec<FieldElement>> {
    let n = pairs.len();
    let xs: Vec<FieldElement> = pairs.iter().map(|p| p.0).collect();
    let mut dd: Vec<FieldElement> = pairs.iter().map(|p| p.1).collect();
    for level in 1..n {
        for i in (level..n).rev() {
            let den = ctx.sub(xs[i], xs[i - level]);
            dd[i] = ctx.div(ctx.sub(dd[i], dd[i - 1]), den)?;
        }
    }
    // expand dd[0] + dd[1](x - x0) + ... nested from the innermost term
    let mut coeffs = vec![FieldElement::ZERO; n];
    coeffs[0] = dd[n - 1];
    let mut deg = 0;
    for k in (0..n - 1).rev() {
        deg += 1;
        for j in (1..=deg).rev() {
            coeffs[j] = ctx.sub(coeffs[j - 1], ctx.mul(coeffs[j], xs[k]));
        }
        coeffs[0] = ctx.sub(dd[k], ctx.mul(coeffs[0], xs[k]));
    }
    Ok(coeffs)
}

/// Recovers the `d` routers encoded by `set` from its first `d` pairs.
/// Any further pairs must lie on the same polynomial.
pub fn interpolate_path(set: &EvaluationSet, d: usize, ctx: &FieldCtx) -> Result<Path> {
    if d == 0 {
        return Err(Error::EmptyPath);
    }
    if set.len() < d {
        return Err(Error::InsufficientPairs {
            hop: set.hop,
            have: set.len(),
            need: d,
        });
    }
    let mut seen = HashSet::with_capacity(set.len());
    for &(x, _) in &set.pairs {
        if !seen.insert(x) {
            return Err(Error::DuplicateX(x.value()));
        }
    }
    let coeffs = newton_coefficients(&set.pairs[..d], ctx)?;
    let nodes: Vec<FieldElement> = coeffs.iter().rev().copied().collect();
    for &(x, y) in &set.pairs[d..] {
        if ctx.horner(&nodes, x) != y {
            return Err(Error::InconsistentEvidence { hop: set.hop });
        }
    }
    Path::new(nodes)
}

/// Reconstructs a path of known length `d` from the hop-`d` bucket, then
/// checks every lower bucket against the matching suffix.
pub fn reconstruct_with_len(seg: &Segregated, d: usize, ctx: &FieldCtx) -> Result<Path> {
    let empty = EvaluationSet::new(d, Vec::new());
    let top = seg.get(d).unwrap_or(&empty);
    let path = interpolate_path(top, d, ctx)?;
    for (&hop, set) in seg.buckets.range(..d) {
        let suffix = &path.nodes()[d - hop..];
        if set.pairs.iter().any(|&(x, y)| ctx.horner(suffix, x) != y) {
            return Err(Error::InconsistentEvidence { hop });
        }
    }
    if let Some((&hop, _)) = seg.buckets.range(d + 1..).next() {
        return Err(Error::UnexpectedHop { hop, d });
    }
    Ok(path)
}

/// Randomized-mode traceback: the largest hop count observed is taken as
/// the path length.
pub fn reconstruct_randomized(packets: &[Packet], ctx: &FieldCtx) -> Result<Path> {
    let seg = segregate_by_hopcount(packets);
    let d = seg.max_hop().ok_or(Error::InsufficientPairs {
        hop: 0,
        have: 0,
        need: 1,
    })?;
    reconstruct_with_len(&seg, d, ctx)
}
