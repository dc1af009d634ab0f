//! Privacy-preserving aggregation of smart-meter readings.
//!
//! Meters perturb their readings with Gaussian noise that sums to zero over
//! the domain, encrypt under Paillier, and an aggregator combines the
//! ciphertexts so that the utility decrypts only the exact domain total.

pub mod cli;
pub mod ingest;
pub mod metrics;
pub mod noise;
pub mod paillier;
pub mod protocol;
pub mod simnet;
