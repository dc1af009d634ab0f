use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::ProfileParams;
use crate::noise::{MasterSeed, Transform};
use crate::simnet::Topology;

/// Everything one experiment needs. Missing keys take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub key_bits: u32,
    pub meters: usize,
    pub intervals: usize,
    /// Fixed-point units per kWh.
    pub scale: u64,
    pub domain: u32,
    pub out: PathBuf,
    /// Reading CSV; synthetic profiles are used when absent.
    pub data: Option<PathBuf>,
    pub seeds: Seeds,
    pub noise: NoiseConfig,
    pub profile: ProfileParams,
    pub links: Topology,
    pub bench: BenchConfig,
    pub privacy: PrivacyConfig,
    pub comm: CommConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            key_bits: 1024,
            meters: 20,
            intervals: 96,
            scale: 1000,
            domain: 0,
            out: PathBuf::from("out"),
            data: None,
            seeds: Seeds::default(),
            noise: NoiseConfig::default(),
            profile: ProfileParams::default(),
            links: Topology::default(),
            bench: BenchConfig::default(),
            privacy: PrivacyConfig::default(),
            comm: CommConfig::default(),
        }
    }
}

/// Hex seeds. Unset sub-seeds are derived from `master`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub master: String,
    pub keygen: Option<String>,
    pub selection: Option<String>,
    pub noise: Option<String>,
    pub profile: Option<String>,
    pub encryption: Option<String>,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            master: "5eed".into(),
            keygen: None,
            selection: None,
            noise: None,
            profile: None,
            encryption: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub transform: Transform,
    /// Multiplier on the calibration standard deviation, e.g. `"1/3"`.
    pub sigma_scale: String,
    /// One sigma in kWh, replacing the calibration deviation.
    pub sigma_kwh: Option<f64>,
    pub master_seed: Option<String>,
    /// Intervals of the dataset whose pooled deviation defines one sigma.
    pub calibration_intervals: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            transform: Transform::BoxMuller,
            sigma_scale: "1".into(),
            sigma_kwh: None,
            master_seed: None,
            calibration_intervals: 96,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub key_bits: Vec<u32>,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            key_bits: vec![128, 256, 512, 1024, 2048],
            repetitions: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacyConfig {
    pub sigma_scales: Vec<String>,
    pub bins: usize,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self {
            sigma_scales: ["1/9", "1/6", "1/3", "1", "3", "6", "9"].map(String::from).to_vec(),
            bins: 64,
        }
    }
}

/// Payload sizes used for the communication table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommConfig {
    pub id_bytes: u64,
    pub cipher_bytes: u64,
}

impl Default for CommConfig {
    fn default() -> Self {
        Self {
            id_bytes: 16,
            cipher_bytes: 512,
        }
    }
}

/// Command-line values that override the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub meters: Option<usize>,
    pub key_bits: Option<u32>,
    pub intervals: Option<usize>,
    pub sigma_scale: Option<String>,
    pub seed: Option<String>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
}

/// `"1/9"`, `"3"` or `"0.5"`.
pub fn parse_sigma_scale(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = if s.contains('/') {
        let r = Ratio::<u64>::from_str(s).map_err(|e| anyhow::anyhow!("sigma scale {s:?}: {e}"))?;
        *r.numer() as f64 / *r.denom() as f64
    } else {
        s.parse::<f64>().with_context(|| format!("sigma scale {s:?}"))?
    };
    if !v.is_finite() || v < 0.0 {
        bail!("sigma scale {s:?} must be a non-negative finite number");
    }
    Ok(v)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// File (if any) then overrides on top.
    pub fn resolve(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(o);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.meters {
            self.meters = m;
        }
        if let Some(b) = o.key_bits {
            self.key_bits = b;
            self.bench.key_bits = vec![b];
        }
        if let Some(i) = o.intervals {
            self.intervals = i;
        }
        if let Some(s) = &o.sigma_scale {
            self.noise.sigma_scale = s.clone();
            self.privacy.sigma_scales = vec![s.clone()];
        }
        if let Some(s) = &o.seed {
            self.seeds.master = s.clone();
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(p) = &o.data {
            self.data = Some(p.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.meters == 0 {
            bail!("meters must be at least 1");
        }
        if self.intervals == 0 {
            bail!("intervals must be at least 1");
        }
        if self.scale == 0 {
            bail!("scale must be positive");
        }
        if self.bench.key_bits.is_empty() {
            bail!("bench.key_bits is empty");
        }
        if self.privacy.sigma_scales.is_empty() {
            bail!("privacy.sigma_scales is empty");
        }
        if self.privacy.bins == 0 {
            bail!("privacy.bins must be positive");
        }
        parse_sigma_scale(&self.noise.sigma_scale)?;
        for s in &self.privacy.sigma_scales {
            parse_sigma_scale(s)?;
        }
        for link in [
            &self.links.sm_agg,
            &self.links.agg_enb,
            &self.links.enb_pgw,
            &self.links.pgw_up,
        ] {
            link.validate()?;
        }
        self.seeds.resolved()?;
        if let Some(s) = &self.noise.master_seed {
            MasterSeed::from_str(s)?;
        }
        Ok(())
    }

    pub fn seeds(&self) -> Result<ResolvedSeeds> {
        let mut seeds = self.seeds.resolved()?;
        if let Some(s) = &self.noise.master_seed {
            seeds.noise = MasterSeed::from_str(s)?.0;
        }
        Ok(seeds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResolvedSeeds {
    pub keygen: [u8; 32],
    pub selection: [u8; 32],
    pub noise: [u8; 32],
    pub profile: [u8; 32],
    pub encryption: [u8; 32],
}

impl ResolvedSeeds {
    pub fn profile_u64(&self) -> u64 {
        u64::from_be_bytes(self.profile[..8].try_into().expect("8 bytes"))
    }
}

fn derive(master: &MasterSeed, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update(master.0);
    h.finalize().into()
}

impl Seeds {
    pub fn resolved(&self) -> Result<ResolvedSeeds> {
        let master = MasterSeed::from_str(&self.master).context("seeds.master")?;
        let pick = |v: &Option<String>, label: &str| -> Result<[u8; 32]> {
            match v {
                Some(s) => Ok(MasterSeed::from_str(s).with_context(|| format!("seeds.{label}"))?.0),
                None => Ok(derive(&master, label)),
            }
        };
        Ok(ResolvedSeeds {
            keygen: pick(&self.keygen, "keygen")?,
            selection: pick(&self.selection, "selection")?,
            noise: pick(&self.noise, "noise")?,
            profile: pick(&self.profile, "profile")?,
            encryption: pick(&self.encryption, "encryption")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.privacy.sigma_scales.len(), 7);
        assert_eq!(cfg.links, Topology::default());
    }

    #[test]
    fn partial_file_and_precedence() {
        let cfg = RunConfig::from_toml(
            "meters = 5\nkey_bits = 256\n[noise]\ntransform = \"inverse-cdf\"\n[links.sm_agg]\nstack = \"WISUN_802_15_4G\"\nbase_header_bytes = 1\nper_fragment_header_bytes = 2\nmax_fragment_payload_bytes = 3\nbandwidth_bps = 100\nper_meter_bandwidth_bps = 10\n",
        )
        .unwrap();
        assert_eq!(cfg.meters, 5);
        assert_eq!(cfg.intervals, 96);
        assert_eq!(cfg.noise.transform, Transform::InverseCdf);
        assert_eq!(cfg.links.sm_agg.base_header_bytes, 1);
        assert_eq!(cfg.links.agg_enb, Topology::default().agg_enb);

        let mut cfg = cfg;
        cfg.apply(&Overrides {
            meters: Some(3),
            sigma_scale: Some("1/3".into()),
            ..Default::default()
        });
        assert_eq!(cfg.meters, 3);
        assert_eq!(cfg.key_bits, 256);
        assert_eq!(cfg.privacy.sigma_scales, vec!["1/3".to_string()]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("metres = 3").is_err());
    }

    #[test]
    fn sigma_scales() {
        assert_eq!(parse_sigma_scale("1/9").unwrap(), 1.0 / 9.0);
        assert_eq!(parse_sigma_scale("3").unwrap(), 3.0);
        assert_eq!(parse_sigma_scale("0").unwrap(), 0.0);
        assert!(parse_sigma_scale("-1").is_err());
        assert!(parse_sigma_scale("1/0").is_err());
        assert!(parse_sigma_scale("x").is_err());
    }

    #[test]
    fn seeds_derive_and_override() {
        let a = Seeds::default().resolved().unwrap();
        assert_ne!(a.keygen, a.noise);
        let b = Seeds {
            noise: Some("ff".into()),
            ..Seeds::default()
        }
        .resolved()
        .unwrap();
        assert_eq!(a.keygen, b.keygen);
        assert_eq!(b.noise[31], 0xff);
    }
}
