//! Signed fixed-point codec between kWh quantities and the plaintext ring.
//!
//! A value `x` at scale `s` is the integer `round(x * s)`. Non-negative
//! integers map to themselves; negative ones map to `n - |u|`. Ring elements
//! with `2 * raw < n` decode as non-negative, the rest as negative.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};

use super::{PaillierError, PaillierPublicKey, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EncodedValue {
    raw: BigUint,
    scale: u64,
}

impl EncodedValue {
    /// Wraps a ring element. Fails if `raw >= n` or `scale == 0`.
    pub fn new(raw: BigUint, scale: u64, pk: &PaillierPublicKey) -> Result<Self> {
        if scale == 0 {
            return Err(PaillierError::InvalidScale);
        }
        if &raw >= pk.n() {
            return Err(PaillierError::PlaintextOutOfRange);
        }
        Ok(Self { raw, scale })
    }

    pub fn raw(&self) -> &BigUint {
        &self.raw
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }
}

/// Encodes a signed integer count of `1/scale` kWh units.
pub fn encode_units(units: &BigInt, scale: u64, pk: &PaillierPublicKey) -> Result<EncodedValue> {
    if scale == 0 {
        return Err(PaillierError::InvalidScale);
    }
    let magnitude = units.magnitude();
    if magnitude * 2u32 >= *pk.n() {
        return Err(PaillierError::EncodingOverflow {
            value: units.to_string(),
            scale,
        });
    }
    let raw = if units.sign() == Sign::Minus {
        pk.n() - magnitude
    } else {
        magnitude.clone()
    };
    Ok(EncodedValue { raw, scale })
}

/// Rounds `x * scale` to the nearest integer and encodes it.
pub fn encode_signed(x: f64, scale: u64, pk: &PaillierPublicKey) -> Result<EncodedValue> {
    let overflow = || PaillierError::EncodingOverflow {
        value: x.to_string(),
        scale,
    };
    if !x.is_finite() {
        return Err(overflow());
    }
    let units = BigInt::from_f64((x * scale as f64).round()).ok_or_else(overflow)?;
    encode_units(&units, scale, pk)
}

/// Signed integer units represented by `v`.
pub fn decode_units(v: &EncodedValue, pk: &PaillierPublicKey) -> BigInt {
    if &v.raw * 2u32 < *pk.n() {
        BigInt::from(v.raw.clone())
    } else {
        -BigInt::from(pk.n() - &v.raw)
    }
}

/// kWh value represented by `v`.
pub fn decode_signed(v: &EncodedValue, pk: &PaillierPublicKey) -> f64 {
    let units = decode_units(v, pk);
    let scale = v.scale as f64;
    match units.to_i64() {
        Some(u) => u as f64 / scale,
        None => {
            let mag = units.abs().to_f64().unwrap_or(f64::INFINITY) / scale;
            if units.is_negative() {
                -mag
            } else if units.is_zero() {
                0.0
            } else {
                mag
            }
        }
    }
}
