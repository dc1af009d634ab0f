#![allow(dead_code)]

use std::cell::RefCell;
use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use smartagg::noise::{GaussianSample, MasterSeed};
use smartagg::protocol::{Deployment, EntityId, MeterRecord, NoiseSource, RoundConfig, SeededNoise};

pub fn ids(m: u32) -> Vec<EntityId> {
    (0..m).map(EntityId::meter).collect()
}

pub fn deployment(m: u32, bits: u32, seed: u64) -> Deployment {
    Deployment::generate(1, &ids(m), bits, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
}

pub fn readings(ids: &[EntityId], kwh: &[f64]) -> BTreeMap<EntityId, MeterRecord> {
    ids.iter()
        .zip(kwh)
        .map(|(&id, &v)| (id, MeterRecord::from(v)))
        .collect()
}

/// Sum of readings in fixed-point units.
pub fn plain_units(kwh: &[f64], scale: u64) -> i64 {
    kwh.iter().map(|v| (v * scale as f64).round() as i64).sum()
}

/// Seeded noise that records which meters drew.
pub struct CountingNoise {
    pub inner: SeededNoise,
    pub draws: RefCell<Vec<EntityId>>,
}

impl CountingNoise {
    pub fn new(seed: u8) -> Self {
        Self {
            inner: SeededNoise {
                master_seed: MasterSeed([seed; 32]),
            },
            draws: RefCell::new(Vec::new()),
        }
    }
}

impl NoiseSource for CountingNoise {
    fn draw(&self, meter: &EntityId, cfg: &RoundConfig) -> GaussianSample {
        self.draws.borrow_mut().push(*meter);
        self.inner.draw(meter, cfg)
    }
}
