//! Prime-field arithmetic and the keyed polynomial hash of transcript views.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{StepSchedule, Transcript, View};
use crate::numerics::Fixed;
use crate::rng::Stream;

pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// A prime modulus below 2^63.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct PrimeField {
    p: u64,
}

impl Default for PrimeField {
    fn default() -> Self {
        PrimeField { p: MERSENNE_61 }
    }
}

impl TryFrom<u64> for PrimeField {
    type Error = Error;

    fn try_from(p: u64) -> Result<Self> {
        PrimeField::new(p)
    }
}

impl From<PrimeField> for u64 {
    fn from(f: PrimeField) -> u64 {
        f.p
    }
}

/// Element of a [`PrimeField`], always in `0..p`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElement(u64);

impl FieldElement {
    pub fn value(self) -> u64 {
        self.0
    }
}

/// A hash key `s`.
pub type HashKey = FieldElement;

impl PrimeField {
    pub fn new(p: u64) -> Result<Self> {
        if p >= 1 << 63 || !is_prime(p) {
            return Err(Error::InvalidParameter(format!("{p} is not a prime below 2^63")));
        }
        Ok(PrimeField { p })
    }

    pub fn modulus(self) -> u64 {
        self.p
    }

    pub fn element(self, v: u64) -> FieldElement {
        FieldElement(v % self.p)
    }

    /// Maps a signed integer to its residue; negatives go to `p − (|r| mod p)`.
    pub fn from_signed(self, v: i64) -> FieldElement {
        FieldElement((v as i128).rem_euclid(self.p as i128) as u64)
    }

    fn reduce(self, v: u128) -> u64 {
        if self.p == MERSENNE_61 {
            let folded = (v & MERSENNE_61 as u128) + (v >> 61);
            let folded = (folded & MERSENNE_61 as u128) + (folded >> 61);
            let r = folded as u64;
            if r >= MERSENNE_61 {
                r - MERSENNE_61
            } else {
                r
            }
        } else {
            (v % self.p as u128) as u64
        }
    }

    pub fn add(self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = a.0 + b.0;
        FieldElement(if s >= self.p { s - self.p } else { s })
    }

    pub fn sub(self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(if a.0 >= b.0 { a.0 - b.0 } else { a.0 + self.p - b.0 })
    }

    pub fn neg(self, a: FieldElement) -> FieldElement {
        self.sub(FieldElement(0), a)
    }

    pub fn mul(self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(self.reduce(a.0 as u128 * b.0 as u128))
    }

    pub fn pow(self, mut base: FieldElement, mut exp: u64) -> FieldElement {
        let mut acc = FieldElement(1 % self.p);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(self, a: FieldElement) -> Option<FieldElement> {
        (a.0 != 0).then(|| self.pow(a, self.p - 2))
    }

    /// Uniform key.
    pub fn random_key(self, rng: &mut Stream) -> HashKey {
        FieldElement(rng.random_range(0..self.p))
    }

    /// `Σ ξ_i s^{i−1} mod p`, by Horner's rule.
    pub fn hash(self, s: HashKey, xi: &[i64]) -> FieldElement {
        xi.iter()
            .rev()
            .fold(FieldElement(0), |acc, &v| self.add(self.mul(acc, s), self.from_signed(v)))
    }

    pub fn hash_fixed(self, s: HashKey, xi: &[Fixed]) -> FieldElement {
        xi.iter()
            .rev()
            .fold(FieldElement(0), |acc, v| self.add(self.mul(acc, s), self.from_signed(v.raw())))
    }
}

/// Hashes of the four views of one directed edge under one key.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ViewHashes {
    pub out: FieldElement,
    pub inn: FieldElement,
    pub in_eta: FieldElement,
    pub gamma: FieldElement,
}

impl ViewHashes {
    pub fn get(&self, view: View) -> FieldElement {
        match view {
            View::Out => self.out,
            View::In => self.inn,
            View::InEta => self.in_eta,
            View::Gamma => self.gamma,
        }
    }
}

/// Materialized views of one directed edge, so that many keys can be applied.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeViews {
    pub out: Vec<Fixed>,
    pub inn: Vec<Fixed>,
    pub in_eta: Vec<Fixed>,
    pub gamma: Vec<Fixed>,
}

impl EdgeViews {
    pub fn new(tr: &Transcript, edge: usize, schedule: &StepSchedule) -> Result<Self> {
        Ok(EdgeViews {
            out: tr.view(edge, View::Out, schedule)?,
            inn: tr.view(edge, View::In, schedule)?,
            in_eta: tr.view(edge, View::InEta, schedule)?,
            gamma: tr.view(edge, View::Gamma, schedule)?,
        })
    }

    pub fn hash(&self, field: PrimeField, s: HashKey) -> ViewHashes {
        ViewHashes {
            out: field.hash_fixed(s, &self.out),
            inn: field.hash_fixed(s, &self.inn),
            in_eta: field.hash_fixed(s, &self.in_eta),
            gamma: field.hash_fixed(s, &self.gamma),
        }
    }
}

/// `(h^out, h^in, h^{in,η}, h^Γ)` of a directed edge.
pub fn hash_transcript_views(
    field: PrimeField,
    s: HashKey,
    tr: &Transcript,
    edge: usize,
    schedule: &StepSchedule,
) -> Result<ViewHashes> {
    Ok(EdgeViews::new(tr, edge, schedule)?.hash(field, s))
}

/// Deterministic Miller–Rabin for 64-bit integers.
fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &b in &BASES {
        if n.is_multiple_of(b) {
            return n == b;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        r += 1;
    }
    let mulmod = |a: u64, b: u64| (a as u128 * b as u128 % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    'outer: for &a in &BASES {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}
