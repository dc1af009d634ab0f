use std::io::Write;

/// Byte sizes of the stored values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SizeTable {
    pub id: u64,
    pub cipher: u64,
    pub consumption: u64,
    pub noisy_consumption: u64,
    pub rand: u64,
    pub keypair: u64,
    pub public_key: u64,
}

impl SizeTable {
    pub const fn unit() -> Self {
        Self {
            id: 1,
            cipher: 1,
            consumption: 1,
            noisy_consumption: 1,
            rand: 1,
            keypair: 1,
            public_key: 1,
        }
    }

    /// Sizes as held by this implementation: 16-byte ids, ciphertexts in
    /// `Z_{n^2}`, 64-bit fixed-point readings and noise, `(n, g)` public keys
    /// and `(n, g, lambda, mu)` keypairs.
    pub fn for_key_bits(bits: u32) -> Self {
        let n = u64::from(bits).div_ceil(8);
        Self {
            id: 16,
            cipher: 2 * n,
            consumption: 8,
            noisy_consumption: 8,
            rand: 8,
            keypair: 2 * n + 2 * n,
            public_key: 2 * n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryEstimate {
    pub s_sm: u64,
    pub s_sm_sel: u64,
    pub s_agg: u64,
    pub s_up: u64,
    pub s_op: u64,
    pub sizes: SizeTable,
    pub meters: u64,
}

impl MemoryEstimate {
    /// `(entity, bytes)` in a fixed order.
    pub fn rows(&self) -> [(&'static str, u64); 5] {
        [
            ("smart_meter", self.s_sm),
            ("designated_meter", self.s_sm_sel),
            ("aggregator", self.s_agg),
            ("utility", self.s_up),
            ("total", self.s_op),
        ]
    }
}

/// Worst-case per-entity memory for one interval with `meters` active meters.
pub fn estimate_memory(t: &SizeTable, meters: u64) -> MemoryEstimate {
    let s_sm = 2 * t.id + t.rand + t.consumption + t.noisy_consumption + 2 * t.cipher + t.keypair + t.public_key;
    let s_sm_sel = t.id + t.rand + t.consumption + t.noisy_consumption + 2 * t.cipher + t.keypair + t.public_key;
    let s_agg = meters * t.id + 2 * meters * t.cipher + t.keypair + t.public_key;
    let s_up = t.cipher + t.consumption + t.keypair + t.public_key;
    MemoryEstimate {
        s_sm,
        s_sm_sel,
        s_agg,
        s_up,
        s_op: s_sm + s_sm_sel + s_agg + s_up,
        sizes: *t,
        meters,
    }
}

/// `entity,bytes`
pub fn write_memory_csv<W: Write>(est: &MemoryEstimate, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["entity", "bytes"])?;
    for (entity, bytes) in est.rows() {
        w.write_record([entity.to_owned(), bytes.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_table() {
        let e = estimate_memory(&SizeTable::unit(), 1);
        assert_eq!(e.s_sm, 9);
        assert_eq!(e.s_sm_sel, 8);
        assert_eq!(e.s_agg, 5);
        assert_eq!(e.s_up, 4);
        assert_eq!(e.s_op, 26);
    }

    #[test]
    fn aggregator_scales_linearly() {
        let t = SizeTable::for_key_bits(1024);
        let fixed = t.keypair + t.public_key;
        let a = estimate_memory(&t, 20).s_agg - fixed;
        let b = estimate_memory(&t, 40).s_agg - fixed;
        assert_eq!(b, 2 * a);
    }

    #[test]
    fn realistic_total_is_small() {
        let e = estimate_memory(&SizeTable::for_key_bits(1024), 20);
        assert_eq!(e.sizes.cipher, 256);
        assert_eq!(e.s_agg, 20 * 16 + 40 * 256 + 512 + 256);
        assert!(e.s_op < 1 << 30);
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_memory_csv(&estimate_memory(&SizeTable::unit(), 1), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "entity,bytes\nsmart_meter,9\ndesignated_meter,8\naggregator,5\nutility,4\ntotal,26\n"
        );
    }
}
