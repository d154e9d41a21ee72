//! Binary fixed-point scalars and vectors.
//!
//! Every quantity that crosses the wire (models, gradients, step-scaled views,
//! final estimates) is a [`Fixed`]. Addition is exact and products round half
//! to even at 2^-32, so the linear transcript identities checked by the
//! validators hold over the integers rather than up to a tolerance.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FRAC_BITS: u32 = 32;
const ONE_RAW: i64 = 1 << FRAC_BITS;
const SCALE: f64 = ONE_RAW as f64;

/// Largest admissible raw magnitude. Anything beyond is an overflow.
pub const MAX_RAW: i64 = 1 << 62;

/// Signed fixed-point number with `FRAC_BITS` fractional bits.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fixed(i64);

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);
    pub const ONE: Fixed = Fixed(ONE_RAW);
    /// One unit in the last place.
    pub const ULP: Fixed = Fixed(1);

    pub fn from_raw(raw: i64) -> Result<Self> {
        if raw.unsigned_abs() > MAX_RAW as u64 {
            return Err(Error::Overflow("fixed from raw"));
        }
        Ok(Fixed(raw))
    }

    pub const fn raw(self) -> i64 {
        self.0
    }

    /// Nearest representable value, ties to even.
    pub fn from_f64(value: f64) -> Result<Self> {
        let scaled = value * SCALE;
        if !scaled.is_finite() || scaled.abs() > MAX_RAW as f64 {
            return Err(Error::Overflow("fixed from real"));
        }
        Ok(Fixed(scaled.round_ties_even() as i64))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE
    }

    pub fn checked_add(self, other: Fixed) -> Result<Fixed> {
        Fixed::from_raw(self.0 + other.0)
    }

    pub fn checked_sub(self, other: Fixed) -> Result<Fixed> {
        Fixed::from_raw(self.0 - other.0)
    }

    /// Product rounded half to even at the last fractional bit.
    pub fn mul(self, other: Fixed) -> Result<Fixed> {
        let product = self.0 as i128 * other.0 as i128;
        let rounded = round_shift(product, FRAC_BITS);
        if rounded.unsigned_abs() > MAX_RAW as u128 {
            return Err(Error::Overflow("fixed multiply"));
        }
        Fixed::from_raw(rounded as i64)
    }

    /// Some `g` with `coeff.mul(g) == target`, for `0 < coeff < 1`.
    ///
    /// For such coefficients consecutive integers map to values at most one
    /// ulp apart, so every target has a preimage.
    pub fn mul_preimage(coeff: Fixed, target: Fixed) -> Result<Fixed> {
        if coeff.0 <= 0 || coeff.0 >= ONE_RAW {
            return Err(Error::InvalidParameter(format!(
                "preimage needs a coefficient in (0, 1), got {}",
                coeff.to_f64()
            )));
        }
        let guess = ((target.0 as i128) << FRAC_BITS) / coeff.0 as i128;
        for delta in [0i128, 1, -1, 2, -2, 3, -3] {
            let candidate = guess + delta;
            if candidate.unsigned_abs() > MAX_RAW as u128 {
                continue;
            }
            let candidate = Fixed(candidate as i64);
            if coeff.mul(candidate)? == target {
                return Ok(candidate);
            }
        }
        Err(Error::Overflow("fixed preimage"))
    }
}

/// `value / 2^bits`, rounded half to even.
pub(crate) fn round_shift(value: i128, bits: u32) -> i128 {
    let quotient = value >> bits;
    let remainder = value - (quotient << bits);
    let half = 1i128 << (bits - 1);
    if remainder > half || (remainder == half && quotient & 1 == 1) {
        quotient + 1
    } else {
        quotient
    }
}

impl fmt::Debug for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fixed({})", self.to_f64())
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// A d-dimensional model or gradient.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelVec(Vec<Fixed>);

impl ModelVec {
    pub fn zeros(dim: usize) -> Self {
        ModelVec(vec![Fixed::ZERO; dim])
    }

    pub fn from_fixed(entries: Vec<Fixed>) -> Self {
        ModelVec(entries)
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        values.iter().map(|&v| Fixed::from_f64(v)).collect::<Result<Vec<_>>>().map(ModelVec)
    }

    pub fn from_raw(raw: &[i64]) -> Result<Self> {
        raw.iter().map(|&r| Fixed::from_raw(r)).collect::<Result<Vec<_>>>().map(ModelVec)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.to_f64()).collect()
    }

    pub fn into_inner(self) -> Vec<Fixed> {
        self.0
    }

    pub fn checked_add(&self, other: &[Fixed]) -> Result<ModelVec> {
        zip_with(&self.0, other, Fixed::checked_add)
    }

    pub fn checked_sub(&self, other: &[Fixed]) -> Result<ModelVec> {
        zip_with(&self.0, other, Fixed::checked_sub)
    }

    /// Entrywise `coeff * self`, each entry rounded once.
    pub fn scale(&self, coeff: Fixed) -> Result<ModelVec> {
        scale(&self.0, coeff)
    }
}

impl Deref for ModelVec {
    type Target = [Fixed];

    fn deref(&self) -> &[Fixed] {
        &self.0
    }
}

impl fmt::Debug for ModelVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter().map(|v| v.to_f64())).finish()
    }
}

impl From<Vec<Fixed>> for ModelVec {
    fn from(entries: Vec<Fixed>) -> Self {
        ModelVec(entries)
    }
}

fn zip_with(a: &[Fixed], b: &[Fixed], op: fn(Fixed, Fixed) -> Result<Fixed>) -> Result<ModelVec> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    a.iter().zip(b).map(|(&x, &y)| op(x, y)).collect::<Result<Vec<_>>>().map(ModelVec)
}

pub fn scale(values: &[Fixed], coeff: Fixed) -> Result<ModelVec> {
    values.iter().map(|&v| coeff.mul(v)).collect::<Result<Vec<_>>>().map(ModelVec)
}

/// Squared Euclidean norm of the raw integers, in units of 2^-64.
///
/// Saturates at `u128::MAX`, which is far beyond any admissible bound.
pub fn norm_sq_raw(values: &[Fixed]) -> u128 {
    values.iter().fold(0u128, |acc, v| {
        let r = v.raw().unsigned_abs() as u128;
        acc.saturating_add(r * r)
    })
}

pub fn norm_sq(values: &[Fixed]) -> f64 {
    norm_sq_raw(values) as f64 / (SCALE * SCALE)
}

pub fn norm(values: &[Fixed]) -> f64 {
    norm_sq(values).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_half_even_at_the_last_bit() {
        // 0.5 ulp ties go to the even neighbour.
        assert_eq!(round_shift(1 << 31, 32), 0);
        assert_eq!(round_shift(3 << 31, 32), 2);
        assert_eq!(round_shift(-(1 << 31), 32), 0);
        assert_eq!(round_shift(-(3 << 31), 32), -2);
        assert_eq!(round_shift((1 << 31) + 1, 32), 1);
    }

    #[test]
    fn conversions() {
        assert_eq!(Fixed::from_f64(1.0).unwrap(), Fixed::ONE);
        assert_eq!(Fixed::from_f64(-0.25).unwrap().raw(), -(1 << 30));
        assert_eq!(Fixed::from_f64(0.25).unwrap().to_f64(), 0.25);
        assert!(Fixed::from_f64(f64::NAN).is_err());
        assert!(Fixed::from_f64(3.0e9).is_err());
    }

    #[test]
    fn overflow_is_an_error() {
        let big = Fixed::from_raw(MAX_RAW).unwrap();
        assert!(big.checked_add(Fixed::ULP).is_err());
        assert!(Fixed::from_raw(MAX_RAW + 1).is_err());
        let large = Fixed::from_f64(1.0e9).unwrap();
        assert!(large.mul(large).is_err());
    }

    #[test]
    fn norm_is_exact_in_wide_integers() {
        let v = ModelVec::from_f64(&[3.0, -4.0]).unwrap();
        assert_eq!(norm_sq(&v), 25.0);
        assert_eq!(norm(&v), 5.0);
        assert_eq!(norm_sq_raw(&[Fixed::ULP, Fixed::ULP]), 2);
    }

    proptest! {
        #[test]
        fn multiplication_is_deterministic_and_close(a in -1.0e4f64..1.0e4, b in -1.0e2f64..1.0e2) {
            let x = Fixed::from_f64(a).unwrap();
            let y = Fixed::from_f64(b).unwrap();
            let p = x.mul(y).unwrap();
            prop_assert_eq!(p, x.mul(y).unwrap());
            prop_assert_eq!(p, y.mul(x).unwrap());
            let err = (p.to_f64() - x.to_f64() * y.to_f64()).abs();
            prop_assert!(err <= 0.5 / SCALE + 1e-9 * (a * b).abs());
        }

        #[test]
        fn preimage_inverts_rounded_product(c in (1i64 << 20)..(1i64 << 32), t in -(1i64 << 40)..(1i64 << 40)) {
            let coeff = Fixed::from_raw(c).unwrap();
            let target = Fixed::from_raw(t).unwrap();
            let g = Fixed::mul_preimage(coeff, target).unwrap();
            prop_assert_eq!(coeff.mul(g).unwrap(), target);
        }
    }
}
