//! Byte layout for keys.
//!
//! Public key: `[u32 bits][u32 len][n][u32 len][g]`. Secret key:
//! `[u32 len][lambda][u32 len][mu]`. All integers are big-endian; files
//! carry the bytes hex-armored.

use num_bigint::BigUint;

use super::{Keypair, PaillierError, PaillierPublicKey, PaillierSecretKey, Result};

fn put_int(out: &mut Vec<u8>, v: &BigUint) {
    let bytes = v.to_bytes_be();
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&bytes);
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < len {
            return Err(PaillierError::MalformedKey("truncated".into()));
        }
        let (head, tail) = self.bytes.split_at(len);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn int(&mut self) -> Result<BigUint> {
        let len = self.u32()? as usize;
        Ok(BigUint::from_bytes_be(self.take(len)?))
    }

    fn finish(self) -> Result<()> {
        if self.bytes.is_empty() {
            Ok(())
        } else {
            Err(PaillierError::MalformedKey("trailing bytes".into()))
        }
    }
}

impl PaillierPublicKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.bits.to_be_bytes());
        put_int(&mut out, &self.n);
        put_int(&mut out, &self.g);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes };
        let key = Self::read(&mut r)?;
        r.finish()?;
        Ok(key)
    }

    fn read(r: &mut Reader<'_>) -> Result<Self> {
        let bits = r.u32()?;
        let n = r.int()?;
        let g = r.int()?;
        if n.bits() != u64::from(bits) {
            return Err(PaillierError::MalformedKey(format!(
                "declared {bits} bits, modulus has {}",
                n.bits()
            )));
        }
        Self::from_parts(bits, n, g)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim()).map_err(|e| PaillierError::MalformedKey(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

impl PaillierSecretKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_int(&mut out, &self.lambda);
        put_int(&mut out, &self.mu);
        out
    }
}

impl Keypair {
    /// Public layout followed by secret layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.public.to_bytes();
        out.extend_from_slice(&self.secret.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes };
        let public = PaillierPublicKey::read(&mut r)?;
        let lambda = r.int()?;
        let mu = r.int()?;
        r.finish()?;
        if mu >= public.n || lambda.bits() == 0 {
            return Err(PaillierError::MalformedKey("secret components out of range".into()));
        }
        let x = public.g.modpow(&lambda, &public.n_squared);
        let check = (public.l_function(&x) * &mu) % &public.n;
        if check != BigUint::from(1u32) {
            return Err(PaillierError::MalformedKey("mu * L(g^lambda) != 1 mod n".into()));
        }
        Ok(Keypair {
            public,
            secret: PaillierSecretKey { lambda, mu },
        })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim()).map_err(|e| PaillierError::MalformedKey(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}
