//! Three-role aggregation protocol: smart meters, the aggregator and the
//! utility provider.
//!
//! Per interval the aggregator picks one designated meter. Every other meter
//! draws Gaussian noise `s`, sends `Enc(pk_sel, s)` and `Enc(pk_up, c + s)`.
//! The aggregator folds the noise ciphertexts and hands the sum to the
//! designated meter, which subtracts it from its own reading before
//! encrypting for the utility. The noises cancel in the final homomorphic
//! sum, so the utility decrypts the exact domain total while any single
//! report it could see is perturbed.
//!
//! Readings and noise are fixed-point integers before they are combined,
//! which makes the cancellation an integer identity.

mod message;
mod roles;
mod round;

pub use message::{Envelope, MessageKind, Transcript, WireMessage, HEADER_BYTES};
pub use roles::{AggregatorAgent, AggregatorPhase, MeterAgent, MeterPhase, UtilityAgent};
pub use round::{run_round, RoundResult};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::{BigInt, BigUint};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::noise::{sample_round_noise, GaussianSample, MasterSeed, NoiseContext, Transform};
use crate::paillier::{
    self, decode_signed, decode_units, encode_units, sum_ciphertexts, Ciphertext, Keypair, PaillierError,
    PaillierPublicKey,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("no active meters in the domain")]
    NoActiveMeters,
    #[error("meter {0} is not active in this round")]
    UnknownMeter(EntityId),
    #[error("meter {meter} cannot act as {attempted} meter this round")]
    Role { meter: EntityId, attempted: &'static str },
    #[error("duplicate report from {0}")]
    DuplicateReport(EntityId),
    #[error("incomplete round: expected {expected} reports, received {received}")]
    IncompleteRound { expected: usize, received: usize },
    #[error("reading {0} kWh is not a non-negative finite value")]
    InvalidReading(f64),
    #[error("fixed-point arithmetic overflow")]
    Overflow,
    #[error("noise inverse does not fit the plaintext ring")]
    InverseOverflow,
    #[error("ring too small: worst-case total needs {needed_bits} bits, modulus half-range has {available_bits}")]
    RingTooSmall { needed_bits: u64, available_bits: u64 },
    #[error("unexpected {kind} message while {state}")]
    UnexpectedMessage { kind: MessageKind, state: String },
    #[error("wire format: {0}")]
    Wire(String),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// Opaque 16-byte entity identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct EntityId(pub [u8; 16]);

impl EntityId {
    pub const AGGREGATOR: EntityId = EntityId(*b"AGGREGATOR\0\0\0\0\0\0");
    pub const UTILITY: EntityId = EntityId(*b"UTILITY\0\0\0\0\0\0\0\0\0");
    pub const BROADCAST: EntityId = EntityId([0xff; 16]);

    /// `"SM"` followed by the big-endian index.
    pub fn meter(index: u32) -> Self {
        let mut id = [0u8; 16];
        id[..2].copy_from_slice(b"SM");
        id[12..].copy_from_slice(&index.to_be_bytes());
        EntityId(id)
    }

    /// First 16 bytes of SHA-256 over an external meter label.
    pub fn from_label(label: &str) -> Self {
        let digest = Sha256::digest(label.as_bytes());
        let mut id = [0u8; 16];
        id.copy_from_slice(&digest[..16]);
        EntityId(id)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EntityId({self})")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeterIdentity {
    pub id: EntityId,
    pub keypair: Keypair,
}

/// Public keys every party holds before the protocol starts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Directory {
    pub utility: PaillierPublicKey,
    meters: BTreeMap<EntityId, PaillierPublicKey>,
}

impl Directory {
    pub fn meter_key(&self, id: &EntityId) -> Result<&PaillierPublicKey> {
        self.meters.get(id).ok_or(ProtocolError::UnknownMeter(*id))
    }
}

/// Keys and identities of one aggregation domain.
#[derive(Clone, Debug)]
pub struct Deployment {
    pub domain: u32,
    pub meters: Vec<MeterIdentity>,
    pub utility: Keypair,
    directory: Directory,
}

impl Deployment {
    pub fn new(domain: u32, meters: Vec<MeterIdentity>, utility: Keypair) -> Self {
        let directory = Directory {
            utility: utility.public.clone(),
            meters: meters.iter().map(|m| (m.id, m.keypair.public.clone())).collect(),
        };
        Self {
            domain,
            meters,
            utility,
            directory,
        }
    }

    /// Generates one keypair per meter id plus the utility keypair.
    pub fn generate<R: RngCore>(domain: u32, ids: &[EntityId], key_bits: u32, rng: &mut R) -> Result<Self> {
        let utility = paillier::generate_keypair(key_bits, rng)?;
        let meters = ids
            .iter()
            .map(|&id| {
                Ok(MeterIdentity {
                    id,
                    keypair: paillier::generate_keypair(key_bits, rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(domain, meters, utility))
    }

    pub fn directory(&self) -> &Directory {
        &self.directory
    }

    pub fn meter(&self, id: &EntityId) -> Result<&MeterIdentity> {
        self.meters
            .iter()
            .find(|m| &m.id == id)
            .ok_or(ProtocolError::UnknownMeter(*id))
    }

    pub fn meter_ids(&self) -> Vec<EntityId> {
        self.meters.iter().map(|m| m.id).collect()
    }

    /// Asserts `M * max_reading + M * 9 sigma` (in fixed-point units) stays
    /// below `n / 2` for every key in the domain.
    pub fn check_ring_capacity(&self, max_reading_kwh: f64, sigma: f64, scale: u64) -> Result<()> {
        let m = self.meters.len().max(1);
        let keys = std::iter::once(&self.utility.public).chain(self.meters.iter().map(|k| &k.keypair.public));
        for pk in keys {
            check_ring_capacity(pk, m, max_reading_kwh, sigma, scale)?;
        }
        Ok(())
    }
}

pub fn check_ring_capacity(
    pk: &PaillierPublicKey,
    meters: usize,
    max_reading_kwh: f64,
    sigma: f64,
    scale: u64,
) -> Result<()> {
    let per_meter = (max_reading_kwh.max(0.0) * scale as f64).ceil() + (9.0 * sigma.max(0.0) * scale as f64).ceil();
    let per_meter = BigUint::from(per_meter as u128);
    let worst = per_meter * meters;
    let half = pk.n() >> 1u32;
    if worst >= half {
        return Err(ProtocolError::RingTooSmall {
            needed_bits: worst.bits(),
            available_bits: half.bits(),
        });
    }
    Ok(())
}

/// A meter's full internal record for one interval. Only `active_kwh`
/// leaves the meter.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct MeterRecord {
    pub active_kwh: f64,
    pub reactive_kvarh: Option<f64>,
    pub voltage_v: Option<f64>,
}

impl MeterRecord {
    /// Data minimization: project the record onto the single reported field.
    pub fn minimized(&self) -> f64 {
        self.active_kwh
    }
}

impl From<f64> for MeterRecord {
    fn from(active_kwh: f64) -> Self {
        Self {
            active_kwh,
            ..Default::default()
        }
    }
}

/// Parameters of one protocol round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundConfig {
    pub interval: u32,
    pub domain: u32,
    pub active_meters: Vec<EntityId>,
    pub designated: EntityId,
    /// Noise standard deviation in kWh.
    pub sigma: f64,
    pub scale: u64,
    pub transform: Transform,
    pub selection_seed: [u8; 32],
}

impl RoundConfig {
    /// Builds a round and draws its designated meter from `selection_seed`.
    pub fn new(
        interval: u32,
        domain: u32,
        active_meters: Vec<EntityId>,
        sigma: f64,
        scale: u64,
        selection_seed: [u8; 32],
    ) -> Result<Self> {
        let designated = select_designated(&active_meters, interval, &selection_seed)?;
        Ok(Self {
            interval,
            domain,
            active_meters,
            designated,
            sigma,
            scale,
            transform: Transform::BoxMuller,
            selection_seed,
        })
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }

    /// Overrides the designated meter, which must be active.
    pub fn with_designated(mut self, id: EntityId) -> Result<Self> {
        if !self.active_meters.contains(&id) {
            return Err(ProtocolError::UnknownMeter(id));
        }
        self.designated = id;
        Ok(self)
    }

    pub fn meter_count(&self) -> usize {
        self.active_meters.len()
    }

    fn is_active(&self, id: &EntityId) -> bool {
        self.active_meters.contains(id)
    }
}

/// Uniform choice of the designated meter, deterministic in `(seed, interval)`.
pub fn select_designated(active_ids: &[EntityId], interval: u32, seed: &[u8; 32]) -> Result<EntityId> {
    if active_ids.is_empty() {
        return Err(ProtocolError::NoActiveMeters);
    }
    let mut h = Sha256::new();
    h.update(b"designated-meter");
    h.update(seed);
    h.update(interval.to_be_bytes());
    let mut round_seed = [0u8; 32];
    round_seed.copy_from_slice(&h.finalize());
    let mut rng = ChaCha20Rng::from_seed(round_seed);
    Ok(active_ids[rng.gen_range(0..active_ids.len())])
}

/// Source of the per-meter perturbation `s`.
pub trait NoiseSource {
    fn draw(&self, meter: &EntityId, cfg: &RoundConfig) -> GaussianSample;
}

/// Counter-based Gaussian noise keyed by a master seed.
#[derive(Clone, Debug)]
pub struct SeededNoise {
    pub master_seed: MasterSeed,
}

impl NoiseSource for SeededNoise {
    fn draw(&self, meter: &EntityId, cfg: &RoundConfig) -> GaussianSample {
        let mut ctx = NoiseContext::new(self.master_seed, meter.0, u64::from(cfg.interval), cfg.sigma);
        sample_round_noise(&mut ctx, cfg.transform, cfg.scale)
    }
}

/// Preset noise in fixed-point units; meters without an entry draw zero.
#[derive(Clone, Debug, Default)]
pub struct FixedNoise {
    units: BTreeMap<EntityId, i64>,
}

impl FixedNoise {
    pub fn new(units: impl IntoIterator<Item = (EntityId, i64)>) -> Self {
        Self {
            units: units.into_iter().collect(),
        }
    }
}

impl NoiseSource for FixedNoise {
    fn draw(&self, meter: &EntityId, cfg: &RoundConfig) -> GaussianSample {
        let q = self.units.get(meter).copied().unwrap_or(0);
        GaussianSample {
            value: q as f64 / cfg.scale as f64,
            quantized: q,
        }
    }
}

/// The pair of ciphertexts a non-designated meter reports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeterOutput {
    pub sender: EntityId,
    /// Noise under the designated meter's key.
    pub noise_cipher: Ciphertext,
    /// Noisy reading under the utility key.
    pub reading_cipher: Ciphertext,
}

/// Fixed-point units of a reading. Rounds to the nearest unit.
pub fn reading_units(reading_kwh: f64, scale: u64) -> Result<i64> {
    if !reading_kwh.is_finite() || reading_kwh < 0.0 {
        return Err(ProtocolError::InvalidReading(reading_kwh));
    }
    let units = (reading_kwh * scale as f64).round();
    if units >= i64::MAX as f64 {
        return Err(ProtocolError::Overflow);
    }
    Ok(units as i64)
}

pub fn meter_step_nondesignated<R: RngCore + ?Sized>(
    meter: &MeterIdentity,
    record: &MeterRecord,
    cfg: &RoundConfig,
    directory: &Directory,
    noise: &dyn NoiseSource,
    rng: &mut R,
) -> Result<MeterOutput> {
    if !cfg.is_active(&meter.id) {
        return Err(ProtocolError::UnknownMeter(meter.id));
    }
    if meter.id == cfg.designated {
        return Err(ProtocolError::Role {
            meter: meter.id,
            attempted: "non-designated",
        });
    }
    let consumption = reading_units(record.minimized(), cfg.scale)?;
    let s = noise.draw(&meter.id, cfg).quantized;
    let noisy = consumption.checked_add(s).ok_or(ProtocolError::Overflow)?;

    let pk_sel = directory.meter_key(&cfg.designated)?;
    let pk_up = &directory.utility;
    let noise_cipher = paillier::encrypt(pk_sel, &encode_units(&BigInt::from(s), cfg.scale, pk_sel)?, rng)?;
    let reading_cipher = paillier::encrypt(pk_up, &encode_units(&BigInt::from(noisy), cfg.scale, pk_up)?, rng)?;
    Ok(MeterOutput {
        sender: meter.id,
        noise_cipher,
        reading_cipher,
    })
}

fn check_reports(outputs: &[MeterOutput], cfg: &RoundConfig) -> Result<()> {
    let mut seen = BTreeSet::new();
    for o in outputs {
        if !cfg.is_active(&o.sender) {
            return Err(ProtocolError::UnknownMeter(o.sender));
        }
        if o.sender == cfg.designated {
            return Err(ProtocolError::Role {
                meter: o.sender,
                attempted: "non-designated",
            });
        }
        if !seen.insert(o.sender) {
            return Err(ProtocolError::DuplicateReport(o.sender));
        }
    }
    let expected = cfg.meter_count() - 1;
    if outputs.len() != expected {
        return Err(ProtocolError::IncompleteRound {
            expected,
            received: outputs.len(),
        });
    }
    Ok(())
}

/// Homomorphic sum of the noise ciphertexts of all `M - 1` non-designated
/// meters.
pub fn aggregator_collect_noise(
    outputs: &[MeterOutput],
    cfg: &RoundConfig,
    pk_sel: &PaillierPublicKey,
) -> Result<Ciphertext> {
    check_reports(outputs, cfg)?;
    Ok(sum_ciphertexts(pk_sel, outputs.iter().map(|o| &o.noise_cipher))?)
}

/// The designated meter cancels the noise sum against its own reading.
pub fn meter_step_designated<R: RngCore + ?Sized>(
    meter: &MeterIdentity,
    record: &MeterRecord,
    noise_total: &Ciphertext,
    cfg: &RoundConfig,
    directory: &Directory,
    rng: &mut R,
) -> Result<Ciphertext> {
    if meter.id != cfg.designated {
        return Err(ProtocolError::Role {
            meter: meter.id,
            attempted: "designated",
        });
    }
    let own = &meter.keypair;
    let total = paillier::decrypt(&own.public, &own.secret, noise_total, cfg.scale)?;
    let inverse = -decode_units(&total, &own.public);
    let consumption = BigInt::from(reading_units(record.minimized(), cfg.scale)?);
    let noisy = consumption + inverse;
    let pk_up = &directory.utility;
    let encoded = encode_units(&noisy, cfg.scale, pk_up).map_err(|e| match e {
        PaillierError::EncodingOverflow { .. } => ProtocolError::InverseOverflow,
        other => other.into(),
    })?;
    Ok(paillier::encrypt(pk_up, &encoded, rng)?)
}

/// Homomorphic sum of every noisy reading, designated one included.
pub fn aggregator_final(
    nondesignated: &[MeterOutput],
    designated_cipher: &Ciphertext,
    pk_up: &PaillierPublicKey,
) -> Result<Ciphertext> {
    let folded = sum_ciphertexts(pk_up, nondesignated.iter().map(|o| &o.reading_cipher))?;
    Ok(paillier::add_ciphertexts(pk_up, &folded, designated_cipher)?)
}

/// Decrypted domain total.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateValue {
    /// Exact total in `1/scale` kWh units.
    pub units: BigInt,
    pub kwh: f64,
}

pub fn utility_decrypt(utility: &Keypair, aggregate: &Ciphertext, scale: u64) -> Result<AggregateValue> {
    let v = paillier::decrypt(&utility.public, &utility.secret, aggregate, scale)?;
    Ok(AggregateValue {
        units: decode_units(&v, &utility.public),
        kwh: decode_signed(&v, &utility.public),
    })
}
