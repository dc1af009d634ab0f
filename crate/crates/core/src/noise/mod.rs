//! Per-meter Gaussian perturbation.
//!
//! Uniform variates come from a Threefry-4x64-20 stream keyed by the 256-bit
//! master seed, with the counter block `[meter_id (2 words), interval,
//! counter / 4]`. Every `(seed, meter, interval, counter)` tuple therefore
//! names one fixed 64-bit word, which makes every round replayable and every
//! meter's stream independent of the others.

mod gaussian;
mod threefry;

pub use gaussian::{box_muller, inverse_cdf_sample, standard_normal_quantile};
pub use threefry::threefry4x64_20;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("{what} = {value} is outside the transform's domain")]
    Domain { what: &'static str, value: f64 },
    #[error("invalid master seed: {0}")]
    InvalidSeed(String),
    #[error("unknown noise transform {0:?} (expected box-muller or inverse-cdf)")]
    UnknownTransform(String),
}

/// 2^-64, substituted for a zero uniform so `ln(u1)` stays finite.
pub const MIN_UNIFORM: f64 = 5.421_010_862_427_522e-20;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MasterSeed(pub [u8; 32]);

impl MasterSeed {
    fn key_words(&self) -> [u64; 4] {
        let mut words = [0u64; 4];
        for (w, chunk) in words.iter_mut().zip(self.0.chunks_exact(8)) {
            *w = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        words
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl FromStr for MasterSeed {
    type Err = NoiseError;

    /// Accepts up to 64 hex digits; shorter inputs are left-padded with zeros.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().trim_start_matches("0x");
        if s.is_empty() || s.len() > 64 {
            return Err(NoiseError::InvalidSeed(s.to_owned()));
        }
        let padded = format!("{s:0>64}");
        let bytes = hex::decode(&padded).map_err(|e| NoiseError::InvalidSeed(e.to_string()))?;
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&bytes);
        Ok(MasterSeed(seed))
    }
}

impl fmt::Debug for MasterSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MasterSeed({})", self.to_hex())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    #[default]
    BoxMuller,
    InverseCdf,
}

impl FromStr for Transform {
    type Err = NoiseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "box-muller" => Ok(Transform::BoxMuller),
            "inverse-cdf" => Ok(Transform::InverseCdf),
            other => Err(NoiseError::UnknownTransform(other.to_owned())),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::BoxMuller => "box-muller",
            Transform::InverseCdf => "inverse-cdf",
        })
    }
}

/// Position in one meter's noise stream for one interval.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseContext {
    pub master_seed: MasterSeed,
    pub meter_id: [u8; 16],
    pub interval: u64,
    /// Standard deviation in kWh.
    pub sigma: f64,
    pub counter: u64,
}

impl NoiseContext {
    pub fn new(master_seed: MasterSeed, meter_id: [u8; 16], interval: u64, sigma: f64) -> Self {
        Self {
            master_seed,
            meter_id,
            interval,
            sigma,
            counter: 0,
        }
    }

    /// The 64-bit word at the current counter; advances the counter by one.
    pub fn next_u64(&mut self) -> u64 {
        let id_lo = u64::from_le_bytes(self.meter_id[..8].try_into().expect("8 bytes"));
        let id_hi = u64::from_le_bytes(self.meter_id[8..].try_into().expect("8 bytes"));
        let block = threefry4x64_20(
            [id_lo, id_hi, self.interval, self.counter / 4],
            self.master_seed.key_words(),
        );
        let word = block[(self.counter % 4) as usize];
        self.counter += 1;
        word
    }

    /// `int(r) / 2^64` truncated to double precision, in `[0, 1)`.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Two uniforms for one Box-Muller draw. `u1` is never zero.
pub fn uniform_pair(ctx: &mut NoiseContext) -> (f64, f64) {
    let mut u1 = ctx.next_uniform();
    if u1 == 0.0 {
        u1 = MIN_UNIFORM;
    }
    let u2 = ctx.next_uniform();
    (u1, u2)
}

/// A Gaussian draw together with its fixed-point quantization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianSample {
    /// kWh
    pub value: f64,
    /// `round(value * scale)`
    pub quantized: i64,
}

impl GaussianSample {
    pub fn quantize(value: f64, scale: u64) -> Self {
        Self {
            value,
            quantized: (value * scale as f64).round() as i64,
        }
    }
}

/// Picks `first` when `b == 0`, `second` otherwise.
pub fn select_output(pair: (f64, f64), b: u64) -> f64 {
    if b & 1 == 0 {
        pair.0
    } else {
        pair.1
    }
}

/// One perturbation value `s` for `ctx`, quantized at `scale`.
///
/// With Box-Muller, both outputs of the pair are computed and one further
/// word of the stream picks which is kept; the other is discarded.
pub fn sample_round_noise(ctx: &mut NoiseContext, transform: Transform, scale: u64) -> GaussianSample {
    if ctx.sigma == 0.0 {
        return GaussianSample::quantize(0.0, scale);
    }
    let value = match transform {
        Transform::BoxMuller => {
            let (u1, u2) = uniform_pair(ctx);
            let pair = box_muller(u1, u2, ctx.sigma).expect("uniform_pair stays in domain");
            select_output(pair, ctx.next_u64() >> 63)
        }
        Transform::InverseCdf => {
            let mut u = ctx.next_uniform();
            if u == 0.0 {
                u = MIN_UNIFORM;
            }
            inverse_cdf_sample(u, ctx.sigma).expect("uniform stays in domain")
        }
    };
    GaussianSample::quantize(value, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(id: u8) -> NoiseContext {
        NoiseContext::new(MasterSeed([7; 32]), [id; 16], 3, 1.0)
    }

    #[test]
    fn uniform_pair_is_deterministic() {
        let mut a = ctx(1);
        let mut b = ctx(1);
        assert_eq!(uniform_pair(&mut a), uniform_pair(&mut b));
        assert_eq!(a.counter, 2);
    }

    #[test]
    fn stream_matches_block_function() {
        let mut c = NoiseContext::new(MasterSeed::default(), [0; 16], 0, 1.0);
        let words: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(&words[..4], &threefry4x64_20([0; 4], [0; 4]));
        assert_eq!(&words[4..], &threefry4x64_20([0, 0, 0, 1], [0; 4]));
    }

    #[test]
    fn meters_have_distinct_streams() {
        let (mut a, mut b) = (ctx(1), ctx(2));
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
        let mut later = ctx(1);
        later.interval = 4;
        assert_ne!(xs[0], later.next_u64());
    }

    #[test]
    fn uniform_moments_and_ks() {
        let mut c = ctx(9);
        let n = 1_000_000;
        let mut us: Vec<f64> = (0..n).map(|_| c.next_uniform()).collect();
        let mean = us.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.002, "{mean}");
        us.sort_by(f64::total_cmp);
        let d = us
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                (u - lo).abs().max((hi - u).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.002, "KS statistic {d}");
        assert!(us.iter().all(|u| (0.0..1.0).contains(u)));
    }

    #[test]
    fn forced_selection_bit() {
        let u1 = (-2.0f64).exp();
        let pair = box_muller(u1, 0.25, 1.5).unwrap();
        assert!(select_output(pair, 0).abs() < 1e-12);
        assert!((select_output(pair, 1) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sample_round_noise_is_deterministic_and_quantized() {
        for transform in [Transform::BoxMuller, Transform::InverseCdf] {
            let mut a = ctx(5);
            a.sigma = 0.37;
            let mut b = a.clone();
            let sa = sample_round_noise(&mut a, transform, 1000);
            let sb = sample_round_noise(&mut b, transform, 1000);
            assert_eq!(sa, sb);
            assert!((sa.quantized as f64 - sa.value * 1000.0).abs() <= 0.5);
        }
    }

    #[test]
    fn zero_sigma_is_silent() {
        let mut c = ctx(1);
        c.sigma = 0.0;
        let s = sample_round_noise(&mut c, Transform::BoxMuller, 1000);
        assert_eq!(s.quantized, 0);
    }

    #[test]
    fn seed_parsing() {
        let s: MasterSeed = "01".parse().unwrap();
        assert_eq!(s.0[31], 1);
        assert_eq!(s.to_hex().len(), 64);
        assert!("xyz".parse::<MasterSeed>().is_err());
        assert!("0".repeat(65).parse::<MasterSeed>().is_err());
        assert_eq!("inverse-cdf".parse::<Transform>().unwrap(), Transform::InverseCdf);
        assert!("ziggurat".parse::<Transform>().is_err());
    }
}
