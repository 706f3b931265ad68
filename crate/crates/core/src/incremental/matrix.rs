use serde::Serialize;

use super::known::KnownPath;
use crate::error::{Error, Result};
use crate::field::{FieldCtx, FieldElement};

/// One observed mark: its x-value, carried value and hop count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MarkPair {
    pub x: FieldElement,
    pub z: FieldElement,
    pub hop: usize,
}

impl MarkPair {
    pub fn new(x: FieldElement, z: FieldElement, hop: usize) -> Self {
        MarkPair { x, z, hop }
    }
}

/// Packet budget `ceil(log d / log p) + delta`, computed with integer powers
/// so exact powers of `p` do not round the wrong way.
pub fn required_l(d: usize, ctx: &FieldCtx, delta: usize) -> usize {
    assert!(d >= 1, "path length must be positive");
    let p = ctx.modulus() as u128;
    let mut k = 0;
    let mut pw: u128 = 1;
    while pw < d as u128 {
        pw *= p;
        k += 1;
    }
    k + delta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DecoderParams {
    pub delta: usize,
    /// Pairs dropped from the front of the window on each retry.
    pub epsilon: usize,
    pub l: usize,
    pub max_retries: usize,
}

impl DecoderParams {
    pub const DEFAULT_MAX_RETRIES: usize = 8;

    /// `l = required_l(d, p, delta)`, raised to 2 when smaller: a single
    /// column makes every row trivially constant.
    pub fn new(d: usize, ctx: &FieldCtx, delta: usize) -> Self {
        DecoderParams {
            delta,
            epsilon: 1,
            l: required_l(d, ctx, delta).max(2),
            max_retries: Self::DEFAULT_MAX_RETRIES,
        }
    }

    pub fn with_l(mut self, l: usize) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidConfig(format!("l = {l} must be at least 2")));
        }
        self.l = l;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 2 || self.epsilon == 0 || self.epsilon >= self.l {
            return Err(Error::InvalidConfig(format!(
                "need l >= 2 and 1 <= epsilon < l (l = {}, epsilon = {})",
                self.l, self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MatrixKind {
    /// Addition hypotheses, rows `1..=d+1`.
    SHat,
    /// Deletion hypotheses, rows `1..=d`.
    RHat,
}

/// Candidate values per (position, packet). Entries a packet cannot speak
/// to are masked out rather than zeroed, since 0 is a legal node ID.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateMatrix {
    pub kind: MatrixKind,
    d: usize,
    rows: usize,
    cols: usize,
    entries: Vec<Option<FieldElement>>,
    hops: Vec<usize>,
    /// Field multiplications spent building the matrix.
    pub mults: u64,
    /// Field inversions spent building the matrix (one per column).
    pub inversions: u64,
}

impl CandidateMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row `k` (1-based), column `j` (0-based); `None` if masked.
    pub fn entry(&self, k: usize, j: usize) -> Option<FieldElement> {
        self.entries[(k - 1) * self.cols + j]
    }

    pub fn row(&self, k: usize) -> &[Option<FieldElement>] {
        &self.entries[(k - 1) * self.cols..k * self.cols]
    }

    /// Smallest hop count at which row `k` is unmasked.
    pub fn min_hop(&self, k: usize) -> usize {
        match self.kind {
            MatrixKind::SHat => self.d + 2 - k,
            MatrixKind::RHat => (self.d + 1 - k).min(self.d - 1),
        }
    }

    /// The common value of row `k` if it has at least `min_valid` unmasked
    /// entries and they are all equal.
    pub fn row_consensus(&self, k: usize, min_valid: usize) -> Option<FieldElement> {
        let mut valid = self.row(k).iter().flatten();
        let first = *valid.next()?;
        let mut count = 1;
        for &v in valid {
            if v != first {
                return None;
            }
            count += 1;
        }
        (count >= min_valid).then_some(first)
    }

    /// Rows with a consensus, as `(k, value)` in increasing `k`.
    pub fn consistent_rows(&self, min_valid: usize) -> Vec<(usize, FieldElement)> {
        (1..=self.rows)
            .filter_map(|k| self.row_consensus(k, min_valid).map(|v| (k, v)))
            .collect()
    }

    /// True when every unmasked entry of row `k` comes from a packet at the
    /// row's smallest admissible hop. Such rows carry no cross-check from a
    /// second marker and can be matched by the other change kind.
    pub fn is_degenerate(&self, k: usize) -> bool {
        let min = self.min_hop(k);
        self.row(k)
            .iter()
            .zip(&self.hops)
            .all(|(e, &h)| e.is_none() || h == min)
    }
}

fn check_pairs(pairs: &[MarkPair]) -> Result<()> {
    if pairs.iter().any(|p| p.x.is_zero()) {
        return Err(Error::ZeroX);
    }
    Ok(())
}

/// Addition matrix:
/// `s_kj = (z_j - a_k(x_j)) / x_j^{d-k+1} - x_j b_{k,h_j}(x_j)`, unmasked for
/// `k >= d - h_j + 2`. Full-path marks (`h = d + 1`) unmask every row.
pub fn build_s(kp: &KnownPath, pairs: &[MarkPair]) -> Result<CandidateMatrix> {
    check_pairs(pairs)?;
    let ctx = kp.ctx();
    let d = kp.d();
    let (rows, cols) = (d + 1, pairs.len());
    let mut entries = vec![None; rows * cols];
    let mut mults = 0u64;
    let mut b = vec![FieldElement::ZERO; d + 2];
    for (j, pair) in pairs.iter().enumerate() {
        let (x, z) = (pair.x, pair.z);
        let lo = kp.b_h_start(pair.hop);
        // b_{k,h}: zero at k = lo, then b_{k+1} = b_k x + r_k
        b[lo] = FieldElement::ZERO;
        for k in lo..=d {
            b[k + 1] = ctx.add(ctx.mul(b[k], x), kp.r(k));
            mults += 1;
        }
        let ix = ctx.inv(x)?;
        // walk k = d+1 down to lo keeping a_k, x^{d-k} and x^{-(d-k+1)}
        let mut a = FieldElement::ZERO;
        let mut xp = FieldElement::ONE;
        let mut ipow = FieldElement::ONE;
        for k in (lo..=d + 1).rev() {
            if k <= d {
                a = ctx.add(a, ctx.mul(kp.r(k), xp));
                xp = ctx.mul(xp, x);
                ipow = ctx.mul(ipow, ix);
                mults += 3;
            }
            let v = ctx.sub(ctx.mul(ctx.sub(z, a), ipow), ctx.mul(x, b[k]));
            mults += 2;
            entries[(k - 1) * cols + j] = Some(v);
        }
    }
    Ok(CandidateMatrix {
        kind: MatrixKind::SHat,
        d,
        rows,
        cols,
        entries,
        hops: pairs.iter().map(|p| p.hop).collect(),
        mults,
        inversions: cols as u64,
    })
}

/// Deletion matrix:
/// `r_kj = b_{k,h_j+2}(x_j) - (w_j - a_k(x_j)) / x_j^{d-k}`, unmasked for
/// `k >= d - h_j + 1`, or for every row when the mark spans the whole
/// shortened path (`h_j = d - 1`).
pub fn build_r(kp: &KnownPath, pairs: &[MarkPair]) -> Result<CandidateMatrix> {
    check_pairs(pairs)?;
    let ctx = kp.ctx();
    let d = kp.d();
    let (rows, cols) = (d, pairs.len());
    let mut entries = vec![None; rows * cols];
    let mut mults = 0u64;
    let mut b = vec![FieldElement::ZERO; d + 2];
    for (j, pair) in pairs.iter().enumerate() {
        let (x, w, h) = (pair.x, pair.z, pair.hop);
        let lo = if h + 1 >= d { 1 } else { d - h + 1 };
        let b_lo = kp.b_h_start(h + 2);
        b[b_lo] = FieldElement::ZERO;
        for k in b_lo..d {
            b[k + 1] = ctx.add(ctx.mul(b[k], x), kp.r(k));
            mults += 1;
        }
        let ix = ctx.inv(x)?;
        // a_k accumulates down from a_{d+1} = 0; ipow = x^{-(d-k)}
        let mut a = FieldElement::ZERO;
        let mut xp = FieldElement::ONE;
        let mut ipow = FieldElement::ONE;
        for k in (lo..=d).rev() {
            a = ctx.add(a, ctx.mul(kp.r(k), xp));
            mults += 1;
            if k < d {
                ipow = ctx.mul(ipow, ix);
                mults += 1;
            }
            xp = ctx.mul(xp, x);
            let v = ctx.sub(b[k], ctx.mul(ctx.sub(w, a), ipow));
            mults += 2;
            entries[(k - 1) * cols + j] = Some(v);
        }
    }
    Ok(CandidateMatrix {
        kind: MatrixKind::RHat,
        d,
        rows,
        cols,
        entries,
        hops: pairs.iter().map(|p| p.hop).collect(),
        mults,
        inversions: cols as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::Path;

    fn ctx11() -> FieldCtx {
        FieldCtx::new(11).unwrap()
    }

    fn e(v: u64) -> FieldElement {
        ctx11().element(v).unwrap()
    }

    fn kp(ids: &[u64]) -> KnownPath {
        KnownPath::new(Path::from_ids(ids, &ctx11()).unwrap(), ctx11())
    }

    #[test]
    fn required_l_examples() {
        let big = FieldCtx::default();
        assert_eq!(required_l(1000, &big, 2), 3);
        assert_eq!(required_l(1, &big, 2), 2);
        assert_eq!(required_l(65_537 * 65_537, &big, 2), 4);
        assert_eq!(required_l(65_537 * 65_537 + 1, &big, 2), 5);
        for d in 2..=100 {
            assert_eq!(required_l(d, &big, 2), 3);
        }
        assert_eq!(required_l(8, &ctx11(), 1), 2);
        assert_eq!(required_l(11, &ctx11(), 1), 2);
        assert_eq!(required_l(12, &ctx11(), 1), 3);
    }

    #[test]
    fn required_l_matches_float_formula_off_boundaries() {
        let big = FieldCtx::default();
        for d in [2usize, 3, 10, 999, 70_000, 1 << 30] {
            let f = ((d as f64).log2() / 65_537f64.log2() + 2.0).ceil() as usize;
            assert_eq!(required_l(d, &big, 2), f, "d={d}");
        }
    }

    #[test]
    fn decoder_params() {
        let p = DecoderParams::new(1, &FieldCtx::default(), 0);
        assert_eq!(p.l, 2);
        assert!(p.with_l(1).is_err());
        let p = DecoderParams::new(100, &FieldCtx::default(), 2);
        assert_eq!((p.l, p.epsilon, p.max_retries), (3, 1, 8));
    }

    #[test]
    fn s_hat_example() {
        // (3,5,2) -> (3,7,5,2); z = y'(2)
        let c = ctx11();
        let z = c.horner(&[e(3), e(7), e(5), e(2)], e(2));
        assert_eq!(z.value(), 9);
        let m = build_s(&kp(&[3, 5, 2]), &[MarkPair::new(e(2), z, 4)]).unwrap();
        assert_eq!(m.rows(), 4);
        assert_eq!(m.cols(), 1);
        assert_eq!(m.entry(2, 0), Some(e(7)));
    }

    #[test]
    fn r_hat_example() {
        let c = ctx11();
        let w = c.horner(&[e(3), e(2)], e(5));
        assert_eq!(w.value(), 6);
        let m = build_r(&kp(&[3, 5, 2]), &[MarkPair::new(e(5), w, 2)]).unwrap();
        assert_eq!(m.rows(), 3);
        assert_eq!(m.entry(2, 0), Some(e(5)));
    }

    #[test]
    fn single_node_r_hat() {
        let m = build_r(
            &kp(&[4]),
            &[MarkPair::new(e(3), e(1), 0), MarkPair::new(e(5), e(1), 0)],
        )
        .unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 2));
    }

    #[test]
    fn masks_follow_hop() {
        let k = kp(&[3, 5, 2, 8, 1]);
        // addition mark with hop 3 covers new positions 4..6
        let s = build_s(&k, &[MarkPair::new(e(2), e(7), 3)]).unwrap();
        for row in 1..=6 {
            assert_eq!(s.entry(row, 0).is_some(), row >= 4, "row {row}");
        }
        // deletion mark with hop 2 on the 4-node path: rows >= 4
        let r = build_r(&k, &[MarkPair::new(e(2), e(7), 2)]).unwrap();
        for row in 1..=5 {
            assert_eq!(r.entry(row, 0).is_some(), row >= 4, "row {row}");
        }
        // whole-path deletion mark unmasks everything
        let r = build_r(&k, &[MarkPair::new(e(2), e(7), 4)]).unwrap();
        assert!((1..=5).all(|row| r.entry(row, 0).is_some()));
    }

    #[test]
    fn zero_x_rejected() {
        let k = kp(&[3, 5, 2]);
        assert!(matches!(
            build_s(&k, &[MarkPair::new(e(0), e(1), 4)]),
            Err(Error::ZeroX)
        ));
        assert!(matches!(
            build_r(&k, &[MarkPair::new(e(0), e(1), 2)]),
            Err(Error::ZeroX)
        ));
    }

    #[test]
    fn entries_match_naive_formula() {
        let c = ctx11();
        let k = kp(&[3, 5, 2, 8, 1, 0, 4]);
        let d = 7;
        for x in 1..11u64 {
            for z in [0u64, 6] {
                for h in 1..=d + 1 {
                    let s = build_s(&k, &[MarkPair::new(e(x), e(z), h)]).unwrap();
                    for row in (d + 2).saturating_sub(h).max(1)..=d + 1 {
                        let a = k.poly_a(row, e(x)).unwrap();
                        let den = c.pow(e(x), (d + 1 - row) as u64);
                        let b = k.poly_b_h(row, h, e(x)).unwrap();
                        let want = c.sub(c.div(c.sub(e(z), a), den).unwrap(), c.mul(e(x), b));
                        assert_eq!(s.entry(row, 0), Some(want));
                    }
                }
                for h in 1..d {
                    let r = build_r(&k, &[MarkPair::new(e(x), e(z), h)]).unwrap();
                    let lo = if h + 1 >= d { 1 } else { d - h + 1 };
                    for row in lo..=d {
                        let a = k.poly_a(row, e(x)).unwrap();
                        let den = c.pow(e(x), (d - row) as u64);
                        let b = k.poly_b_h(row, h + 2, e(x)).unwrap();
                        let want = c.sub(b, c.div(c.sub(e(z), a), den).unwrap());
                        assert_eq!(r.entry(row, 0), Some(want));
                    }
                }
            }
        }
    }

    #[test]
    fn consensus_and_degeneracy() {
        let c = ctx11();
        let k = kp(&[3, 5, 2]);
        let new = [e(3), e(7), e(5), e(2)];
        let pairs: Vec<MarkPair> = [2u64, 6]
            .iter()
            .map(|&x| MarkPair::new(e(x), c.horner(&new, e(x)), 4))
            .collect();
        let s = build_s(&k, &pairs).unwrap();
        assert_eq!(s.row_consensus(2, 2), Some(e(7)));
        assert_eq!(s.consistent_rows(2), vec![(2, e(7))]);
        assert!(!s.is_degenerate(2));
        assert!(s.is_degenerate(1));
        assert_eq!(s.row_consensus(2, 3), None);
    }

    #[test]
    fn operation_count_is_linear_in_d_times_l() {
        let ctx = FieldCtx::default();
        for d in [10usize, 100, 1000] {
            let ids: Vec<u64> = (0..d as u64).collect();
            let k = KnownPath::new(Path::from_ids(&ids, &ctx).unwrap(), ctx);
            let pairs: Vec<MarkPair> = (1..=3)
                .map(|x| MarkPair::new(ctx.reduce(x), ctx.reduce(x * 7), d + 1))
                .collect();
            let s = build_s(&k, &pairs).unwrap();
            assert!(s.mults <= 6 * (d as u64 + 1) * 3);
            assert_eq!(s.inversions, 3);
            let pairs: Vec<MarkPair> = (1..=3)
                .map(|x| MarkPair::new(ctx.reduce(x), ctx.reduce(x * 7), d - 1))
                .collect();
            let r = build_r(&k, &pairs).unwrap();
            assert!(r.mults <= 6 * d as u64 * 3);
        }
    }
}
