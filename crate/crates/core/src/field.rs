//! Arithmetic in the prime field GF(p).
//!
//! Node IDs and every value carried in a mark are residues modulo `p`.
//! The modulus lives in a [`FieldCtx`] that is passed explicitly to each
//! operation, so a [`FieldElement`] is just a reduced integer.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2^16 + 1, the smallest prime above the 16-bit ID space.
pub const DEFAULT_MODULUS: u64 = 65_537;

/// A residue in `[0, p)`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }

    /// Caller guarantees `v < p` for the field in use.
    #[inline]
    pub(crate) fn from_raw(v: u64) -> FieldElement {
        FieldElement(v)
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// The prime modulus. Products of two residues must fit in a `u64`,
/// hence `p < 2^32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct FieldCtx {
    p: u64,
}

impl Default for FieldCtx {
    fn default() -> Self {
        FieldCtx { p: DEFAULT_MODULUS }
    }
}

impl TryFrom<u64> for FieldCtx {
    type Error = Error;

    fn try_from(p: u64) -> Result<Self> {
        FieldCtx::new(p)
    }
}

impl From<FieldCtx> for u64 {
    fn from(ctx: FieldCtx) -> u64 {
        ctx.p
    }
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

impl FieldCtx {
    pub fn new(p: u64) -> Result<Self> {
        if p <= 2 || p >= 1 << 32 || !is_prime(p) {
            return Err(Error::InvalidModulus(p));
        }
        Ok(FieldCtx { p })
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.p
    }

    /// Checked conversion; rejects values `>= p`.
    pub fn element(&self, value: u64) -> Result<FieldElement> {
        if value >= self.p {
            return Err(Error::NotAResidue { value, p: self.p });
        }
        Ok(FieldElement(value))
    }

    /// Reduces an arbitrary integer into the field.
    #[inline]
    pub fn reduce(&self, value: u64) -> FieldElement {
        FieldElement(value % self.p)
    }

    /// Reduces a signed integer, mapping negatives into `[0, p)`.
    #[inline]
    pub fn reduce_signed(&self, value: i64) -> FieldElement {
        FieldElement(value.rem_euclid(self.p as i64) as u64)
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = a.0 + b.0;
        FieldElement(if s >= self.p { s - self.p } else { s })
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(if a.0 >= b.0 {
            a.0 - b.0
        } else {
            a.0 + self.p - b.0
        })
    }

    #[inline]
    pub fn neg(&self, a: FieldElement) -> FieldElement {
        FieldElement(if a.0 == 0 { 0 } else { self.p - a.0 })
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(a.0 * b.0 % self.p)
    }

    /// Multiplicative inverse by the extended Euclidean algorithm.
    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        if a.0 == 0 {
            return Err(Error::ZeroInverse);
        }
        let (mut r0, mut r1) = (self.p as i64, a.0 as i64);
        let (mut t0, mut t1) = (0i64, 1i64);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        debug_assert_eq!(r0, 1);
        Ok(self.reduce_signed(t0))
    }

    pub fn div(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, base: FieldElement, mut exp: u64) -> FieldElement {
        let mut acc = 1u64;
        let mut b = base.0;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * b % self.p;
            }
            b = b * b % self.p;
            exp >>= 1;
        }
        FieldElement(acc % self.p)
    }

    /// Evaluates a polynomial given highest-degree coefficient first by
    /// folding `y <- y*x + c` left to right, the same update a router applies
    /// to a passing mark.
    ///
    /// An empty coefficient list evaluates to zero.
    pub fn horner(&self, coeffs: &[FieldElement], x: FieldElement) -> FieldElement {
        coeffs
            .iter()
            .fold(FieldElement::ZERO, |y, &c| self.add(self.mul(y, x), c))
    }
}
