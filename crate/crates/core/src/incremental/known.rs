use crate::error::{Error, Result};
use crate::field::{FieldCtx, FieldElement};
use crate::path::Path;

/// The path as traced before the change, `r_1 .. r_d`.
///
/// `a_k(x) = r_d + r_{d-1} x + ... + r_k x^{d-k}` is the part of the mark
/// contributed from `r_k` onwards, `b_k(x) = r_{k-1} + ... + r_1 x^{k-2}` the
/// part before it, and `y = a_k + x^{d-k+1} b_k` for every `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnownPath {
    path: Path,
    ctx: FieldCtx,
}

impl KnownPath {
    pub fn new(path: Path, ctx: FieldCtx) -> Self {
        KnownPath { path, ctx }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn ctx(&self) -> &FieldCtx {
        &self.ctx
    }

    pub fn d(&self) -> usize {
        self.path.len()
    }

    /// `r_i`, 1-based.
    pub(crate) fn r(&self, i: usize) -> FieldElement {
        self.path.node(i)
    }

    fn check_k(&self, k: usize, lo: usize) -> Result<()> {
        let hi = self.d() + 1;
        if k < lo || k > hi {
            return Err(Error::KOutOfRange { k, lo, hi });
        }
        Ok(())
    }

    /// Full-path mark value `y(x)`.
    pub fn y(&self, x: FieldElement) -> FieldElement {
        self.ctx.horner(self.path.nodes(), x)
    }

    /// Mark value a hop-`h` packet carries when the path is unchanged.
    pub fn suffix_value(&self, h: usize, x: FieldElement) -> Option<FieldElement> {
        if h == 0 || h > self.d() {
            return None;
        }
        Some(self.ctx.horner(&self.path.nodes()[self.d() - h..], x))
    }

    pub fn poly_a(&self, k: usize, x: FieldElement) -> Result<FieldElement> {
        self.check_k(k, 1)?;
        Ok(self.ctx.horner(&self.path.nodes()[k - 1..], x))
    }

    pub fn poly_b(&self, k: usize, x: FieldElement) -> Result<FieldElement> {
        self.check_k(k, 1)?;
        Ok(self.ctx.horner(&self.path.nodes()[..k - 1], x))
    }

    /// First node a hop-`h` mark on a one-node-longer path can have folded in.
    pub(crate) fn b_h_start(&self, h: usize) -> usize {
        (self.d() + 2).saturating_sub(h).max(1)
    }

    /// `b_k` restricted to the nodes a hop-`h` mark covers:
    /// `r_{k-1} + r_{k-2} x + ... + r_{d-h+2} x^{k-d+h-3}`, zero at `k = d-h+2`.
    /// For `h >= d+1` this is `b_k`.
    pub fn poly_b_h(&self, k: usize, h: usize, x: FieldElement) -> Result<FieldElement> {
        let lo = self.b_h_start(h);
        self.check_k(k, lo)?;
        Ok(self.ctx.horner(&self.path.nodes()[lo - 1..k - 1], x))
    }
}
