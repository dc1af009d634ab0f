//! Paillier additively homomorphic encryption.
//!
//! Keys use the `g = n + 1` generator, so `g^m mod n^2` collapses to
//! `1 + m*n` and the scheme's order condition always holds. Plaintexts are
//! ring elements in `[0, n)`; [`codec`] maps signed fixed-point kWh values
//! into that ring.
//!
//! The decryption helper is `L(x) = (x - 1) / n` with exact integer
//! division.

mod codec;
mod prime;
mod wire;

pub use codec::{decode_signed, decode_units, encode_signed, encode_units, EncodedValue};
pub use prime::{is_probable_prime, random_prime, MILLER_RABIN_ROUNDS};

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Smallest modulus size accepted by [`generate_keypair`].
pub const MIN_KEY_BITS: u32 = 16;
/// Largest modulus size accepted by [`generate_keypair`].
pub const MAX_KEY_BITS: u32 = 4096;

const PRIME_CANDIDATES_PER_BIT: usize = 64;
const KEYGEN_ATTEMPTS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PaillierError {
    #[error("unsupported key size {0} bits (need an even size in {MIN_KEY_BITS}..={MAX_KEY_BITS})")]
    InvalidKeySize(u32),
    #[error("key generation failed: {0}")]
    KeygenFailure(String),
    #[error("plaintext is outside [0, n)")]
    PlaintextOutOfRange,
    #[error("ciphertext is not a unit modulo n^2")]
    MalformedCiphertext,
    #[error("ciphertexts belong to different public keys")]
    DomainMismatch,
    #[error("value {value} at scale {scale} does not fit the signed half-range of the plaintext ring")]
    EncodingOverflow { value: String, scale: u64 },
    #[error("fixed-point scale must be positive")]
    InvalidScale,
    #[error("malformed key encoding: {0}")]
    MalformedKey(String),
}

pub type Result<T> = std::result::Result<T, PaillierError>;

/// Fingerprint of a public modulus, carried by every ciphertext so that
/// operations across keys can be rejected without comparing full moduli.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyTag(u64);

impl KeyTag {
    fn of(n: &BigUint) -> Self {
        let digest = Sha256::digest(n.to_bytes_be());
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        KeyTag(u64::from_be_bytes(word))
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PaillierPublicKey {
    bits: u32,
    n: BigUint,
    g: BigUint,
    n_squared: BigUint,
    tag: KeyTag,
}

impl PaillierPublicKey {
    fn from_parts(bits: u32, n: BigUint, g: BigUint) -> Result<Self> {
        if n < BigUint::from(3u32) {
            return Err(PaillierError::MalformedKey("modulus too small".into()));
        }
        let n_squared = &n * &n;
        if g.is_zero() || g >= n_squared || !g.gcd(&n).is_one() {
            return Err(PaillierError::MalformedKey("g is not a unit modulo n^2".into()));
        }
        let tag = KeyTag::of(&n);
        Ok(Self {
            bits,
            n,
            g,
            n_squared,
            tag,
        })
    }

    /// Nominal key size in bits.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn tag(&self) -> KeyTag {
        self.tag
    }

    /// Fixed width of a serialized ciphertext under this key.
    pub fn ciphertext_bytes(&self) -> usize {
        self.n_squared.bits().div_ceil(8) as usize
    }

    fn l_function(&self, x: &BigUint) -> BigUint {
        (x - 1u32) / &self.n
    }

    fn g_pow(&self, m: &BigUint) -> BigUint {
        if self.g == &self.n + 1u32 {
            (BigUint::one() + m * &self.n) % &self.n_squared
        } else {
            self.g.modpow(m, &self.n_squared)
        }
    }
}

impl fmt::Debug for PaillierPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PaillierPublicKey")
            .field("bits", &self.bits)
            .field("tag", &format_args!("{:016x}", self.tag.0))
            .finish()
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PaillierSecretKey {
    lambda: BigUint,
    mu: BigUint,
}

impl PaillierSecretKey {
    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }
}

impl fmt::Debug for PaillierSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PaillierSecretKey(..)")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Keypair {
    pub public: PaillierPublicKey,
    pub secret: PaillierSecretKey,
}

/// A Paillier ciphertext, tagged with the key it was produced under.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    value: BigUint,
    key: KeyTag,
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn key_tag(&self) -> KeyTag {
        self.key
    }

    /// The deterministic encryption of zero (`r = 1`), identity of
    /// [`add_ciphertexts`].
    pub fn identity(pk: &PaillierPublicKey) -> Self {
        Ciphertext {
            value: BigUint::one(),
            key: pk.tag,
        }
    }

    /// Big-endian magnitude, left-padded to [`PaillierPublicKey::ciphertext_bytes`].
    pub fn to_bytes(&self, pk: &PaillierPublicKey) -> Vec<u8> {
        let raw = self.value.to_bytes_be();
        let width = pk.ciphertext_bytes();
        let mut out = vec![0u8; width.saturating_sub(raw.len())];
        out.extend_from_slice(&raw);
        out
    }

    /// Parses big-endian magnitude bytes and validates group membership.
    pub fn from_bytes(pk: &PaillierPublicKey, bytes: &[u8]) -> Result<Self> {
        let value = BigUint::from_bytes_be(bytes);
        validate_ciphertext(pk, &value)?;
        Ok(Ciphertext { value, key: pk.tag })
    }
}

fn validate_ciphertext(pk: &PaillierPublicKey, value: &BigUint) -> Result<()> {
    if value.is_zero() || value >= &pk.n_squared || !value.gcd(&pk.n).is_one() {
        return Err(PaillierError::MalformedCiphertext);
    }
    Ok(())
}

/// Generates a keypair whose modulus has exactly `bits` bits.
pub fn generate_keypair<R: RngCore + ?Sized>(bits: u32, rng: &mut R) -> Result<Keypair> {
    if !(MIN_KEY_BITS..=MAX_KEY_BITS).contains(&bits) || !bits.is_multiple_of(2) {
        return Err(PaillierError::InvalidKeySize(bits));
    }
    let half = bits / 2;
    let budget = PRIME_CANDIDATES_PER_BIT * half as usize;
    for _ in 0..KEYGEN_ATTEMPTS {
        let p = random_prime(half, budget, rng)
            .ok_or_else(|| PaillierError::KeygenFailure(format!("no {half}-bit prime found")))?;
        let q = random_prime(half, budget, rng)
            .ok_or_else(|| PaillierError::KeygenFailure(format!("no {half}-bit prime found")))?;
        if p == q {
            continue;
        }
        match keypair_from_primes(&p, &q) {
            Ok(kp) if kp.public.n.bits() == u64::from(bits) => return Ok(kp),
            _ => continue,
        }
    }
    Err(PaillierError::KeygenFailure(format!(
        "no admissible prime pair after {KEYGEN_ATTEMPTS} attempts"
    )))
}

/// Builds a keypair from explicit primes. Primality is the caller's
/// responsibility; the coprimality condition `gcd(pq, (p-1)(q-1)) = 1` is
/// checked here.
pub fn keypair_from_primes(p: &BigUint, q: &BigUint) -> Result<Keypair> {
    let one = BigUint::one();
    if p <= &one || q <= &one || p == q {
        return Err(PaillierError::KeygenFailure("p and q must be distinct primes".into()));
    }
    let n = p * q;
    let p1 = p - &one;
    let q1 = q - &one;
    if !n.gcd(&(&p1 * &q1)).is_one() {
        return Err(PaillierError::KeygenFailure("gcd(pq, (p-1)(q-1)) != 1".into()));
    }
    let lambda = p1.lcm(&q1);
    let g = &n + &one;
    let bits = n.bits() as u32;
    let public = PaillierPublicKey::from_parts(bits, n, g)?;
    let mu = derive_mu(&public, &lambda)?;
    Ok(Keypair {
        public,
        secret: PaillierSecretKey { lambda, mu },
    })
}

fn derive_mu(pk: &PaillierPublicKey, lambda: &BigUint) -> Result<BigUint> {
    let x = pk.g.modpow(lambda, &pk.n_squared);
    let l = pk.l_function(&x);
    mod_inverse(&l, &pk.n).ok_or_else(|| PaillierError::KeygenFailure("L(g^lambda mod n^2) is not invertible".into()))
}

/// Modular inverse via the extended Euclidean algorithm.
pub(crate) fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    use num_bigint::BigInt;
    let m_int = BigInt::from(m.clone());
    let e = BigInt::from(a % m).extended_gcd(&m_int);
    if !e.gcd.is_one() {
        return None;
    }
    e.x.mod_floor(&m_int).to_biguint()
}

/// Encrypts `m` with a fresh nonce `r` drawn from `rng`.
pub fn encrypt<R: RngCore + ?Sized>(pk: &PaillierPublicKey, m: &EncodedValue, rng: &mut R) -> Result<Ciphertext> {
    if m.raw() >= &pk.n {
        return Err(PaillierError::PlaintextOutOfRange);
    }
    let one = BigUint::one();
    let r = loop {
        let r = rng.gen_biguint_range(&one, &pk.n);
        if r.gcd(&pk.n).is_one() {
            break r;
        }
    };
    encrypt_with_nonce(pk, m.raw(), &r)
}

/// Encrypts a ring element with an explicit nonce: `c = g^m * r^n mod n^2`.
pub fn encrypt_with_nonce(pk: &PaillierPublicKey, m: &BigUint, r: &BigUint) -> Result<Ciphertext> {
    if m >= &pk.n {
        return Err(PaillierError::PlaintextOutOfRange);
    }
    if r.is_zero() || r >= &pk.n || !r.gcd(&pk.n).is_one() {
        return Err(PaillierError::MalformedCiphertext);
    }
    let rn = r.modpow(&pk.n, &pk.n_squared);
    let value = (pk.g_pow(m) * rn) % &pk.n_squared;
    Ok(Ciphertext { value, key: pk.tag })
}

/// Decrypts to the ring element `L(c^lambda mod n^2) * mu mod n`.
pub fn decrypt_raw(pk: &PaillierPublicKey, sk: &PaillierSecretKey, c: &Ciphertext) -> Result<BigUint> {
    if c.key != pk.tag {
        return Err(PaillierError::DomainMismatch);
    }
    validate_ciphertext(pk, &c.value)?;
    let x = c.value.modpow(&sk.lambda, &pk.n_squared);
    Ok((pk.l_function(&x) * &sk.mu) % &pk.n)
}

/// Decrypts `c` and tags the result with the fixed-point `scale` the
/// plaintext was encoded at.
pub fn decrypt(pk: &PaillierPublicKey, sk: &PaillierSecretKey, c: &Ciphertext, scale: u64) -> Result<EncodedValue> {
    let raw = decrypt_raw(pk, sk, c)?;
    EncodedValue::new(raw, scale, pk)
}

/// Homomorphic addition: `a * b mod n^2`.
pub fn add_ciphertexts(pk: &PaillierPublicKey, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
    if a.key != pk.tag || b.key != pk.tag {
        return Err(PaillierError::DomainMismatch);
    }
    Ok(Ciphertext {
        value: (&a.value * &b.value) % &pk.n_squared,
        key: pk.tag,
    })
}

/// Folds [`add_ciphertexts`] over `items`, starting from [`Ciphertext::identity`].
pub fn sum_ciphertexts<'a, I>(pk: &PaillierPublicKey, items: I) -> Result<Ciphertext>
where
    I: IntoIterator<Item = &'a Ciphertext>,
{
    items
        .into_iter()
        .try_fold(Ciphertext::identity(pk), |acc, c| add_ciphertexts(pk, &acc, c))
}
