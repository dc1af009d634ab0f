//! Analytical link-layer model and in-process message delivery.
//!
//! A link stack expands a payload into a frame of
//! `payload + base_header + fragments * per_fragment_header` bytes, where
//! `fragments = ceil(payload / max_fragment_payload)`. Transmission time is
//! `frame * 8 / per_meter_bandwidth`, kept as an exact rational.

mod network;

pub use network::{DeliveryRecord, Network};

use std::collections::HashSet;
use std::fmt;
use std::ops::Add;

use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimnetError {
    #[error("payload list is empty")]
    NoPayloads,
    #[error("meter count must be positive")]
    NoMeters,
    #[error("duplicate hop name {0:?}")]
    DuplicateHop(String),
    #[error("invalid link parameters for {stack}: {reason}")]
    InvalidLink { stack: LinkStack, reason: String },
}

/// Exact simulated duration in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Seconds(pub Ratio<u64>);

impl Seconds {
    pub const ZERO: Seconds = Seconds(Ratio::new_raw(0, 1));

    pub fn new(numer: u64, denom: u64) -> Self {
        Seconds(Ratio::new(numer, denom))
    }

    pub fn as_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl Add for Seconds {
    type Output = Seconds;

    fn add(self, rhs: Seconds) -> Seconds {
        Seconds(self.0 + rhs.0)
    }
}

impl std::iter::Sum for Seconds {
    fn sum<I: Iterator<Item = Seconds>>(iter: I) -> Seconds {
        iter.fold(Seconds::ZERO, |a, b| a + b)
    }
}

/// Writes the exact decimal expansion when the denominator has only the
/// prime factors 2 and 5, and a 12-digit rounding otherwise.
impl fmt::Display for Seconds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_zero() {
            return f.write_str("0");
        }
        let mut denom = *self.0.denom();
        let (mut twos, mut fives) = (0u32, 0u32);
        while denom.is_multiple_of(2) {
            denom /= 2;
            twos += 1;
        }
        while denom.is_multiple_of(5) {
            denom /= 5;
            fives += 1;
        }
        if denom != 1 {
            return write!(f, "{:.12}", self.as_f64());
        }
        let digits = twos.max(fives);
        let scaled = u128::from(*self.0.numer()) * 10u128.pow(digits) / u128::from(*self.0.denom());
        let pow = 10u128.pow(digits);
        let (int, frac) = (scaled / pow, scaled % pow);
        if digits == 0 {
            write!(f, "{int}")
        } else {
            write!(f, "{int}.{frac:0width$}", width = digits as usize)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LinkStack {
    #[serde(rename = "WISUN_802_15_4G")]
    WiSun,
    LtePdcp,
    #[serde(rename = "ETHERNET_802_3")]
    Ethernet,
}

impl fmt::Display for LinkStack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkStack::WiSun => "WISUN_802_15_4G",
            LinkStack::LtePdcp => "LTE_PDCP",
            LinkStack::Ethernet => "ETHERNET_802_3",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkModel {
    pub stack: LinkStack,
    pub base_header_bytes: u64,
    pub per_fragment_header_bytes: u64,
    pub max_fragment_payload_bytes: u64,
    pub bandwidth_bps: u64,
    pub per_meter_bandwidth_bps: u64,
}

/// Meters sharing each link in the reference deployment.
pub const REFERENCE_METERS: u64 = 20;

impl LinkModel {
    // Header parameters are fitted to the reference frame sizes:
    // Wi-SUN 16 -> 45 and 512 -> 661, LTE 512 -> 566, Ethernet 512 -> 634
    // (eNB-PGW, tunnelled) and 512 -> 578 (PGW-UP).

    /// IEEE 802.15.4g with 6LoWPAN fragmentation, SM <-> AGG.
    pub fn wisun() -> Self {
        Self::shared(LinkStack::WiSun, 5, 24, 96, 250_000)
    }

    /// 4G-LTE PDCP, AGG <-> eNB.
    pub fn lte_pdcp() -> Self {
        Self::shared(LinkStack::LtePdcp, 54, 0, 1500, 1_000_000)
    }

    /// Ethernet with GTP-U encapsulation, eNB <-> PGW.
    pub fn ethernet_tunnel() -> Self {
        Self::shared(LinkStack::Ethernet, 122, 0, 1500, 1_000_000)
    }

    /// Plain Ethernet/IP, PGW <-> UP.
    pub fn ethernet() -> Self {
        Self::shared(LinkStack::Ethernet, 66, 0, 1500, 1_000_000)
    }

    fn shared(stack: LinkStack, base: u64, per_frag: u64, max_frag: u64, bw: u64) -> Self {
        Self {
            stack,
            base_header_bytes: base,
            per_fragment_header_bytes: per_frag,
            max_fragment_payload_bytes: max_frag,
            bandwidth_bps: bw,
            per_meter_bandwidth_bps: bw / REFERENCE_METERS,
        }
    }

    /// Re-divides the link bandwidth among `meters` meters.
    pub fn with_meter_share(mut self, meters: u64) -> Result<Self, SimnetError> {
        if meters == 0 {
            return Err(SimnetError::NoMeters);
        }
        self.per_meter_bandwidth_bps = self.bandwidth_bps / meters;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), SimnetError> {
        let fail = |reason: &str| SimnetError::InvalidLink {
            stack: self.stack,
            reason: reason.to_owned(),
        };
        if self.max_fragment_payload_bytes == 0 {
            return Err(fail("max_fragment_payload_bytes must be positive"));
        }
        if self.bandwidth_bps == 0 || self.per_meter_bandwidth_bps == 0 {
            return Err(fail("bandwidth must be positive"));
        }
        if self.per_meter_bandwidth_bps > self.bandwidth_bps {
            return Err(fail("per-meter bandwidth exceeds link bandwidth"));
        }
        Ok(())
    }
}

pub fn frame_size(payload_bytes: u64, link: &LinkModel) -> u64 {
    let fragments = payload_bytes.div_ceil(link.max_fragment_payload_bytes).max(1);
    payload_bytes + link.base_header_bytes + fragments * link.per_fragment_header_bytes
}

pub fn transmission_time(frame_bytes: u64, per_meter_bw_bps: u64) -> Seconds {
    assert!(per_meter_bw_bps > 0, "bandwidth must be positive");
    Seconds::new(frame_bytes * 8, per_meter_bw_bps)
}

/// Minimum bandwidth per interval: the largest payload times the number of
/// meters behind one aggregator.
pub fn min_bandwidth(payload_sizes: &[u64], meter_count: u64) -> Result<u64, SimnetError> {
    if meter_count == 0 {
        return Err(SimnetError::NoMeters);
    }
    payload_sizes
        .iter()
        .max()
        .map(|&p| p * meter_count)
        .ok_or(SimnetError::NoPayloads)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hop {
    pub name: String,
    pub link: LinkModel,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PathModel {
    hops: Vec<Hop>,
}

impl PathModel {
    /// Builds a path; hop names must be unique. An empty path delivers
    /// instantly.
    pub fn new(hops: Vec<Hop>) -> Result<Self, SimnetError> {
        let mut seen = HashSet::new();
        for hop in &hops {
            if !seen.insert(hop.name.as_str()) {
                return Err(SimnetError::DuplicateHop(hop.name.clone()));
            }
            hop.link.validate()?;
        }
        Ok(Self { hops })
    }

    pub fn hops(&self) -> &[Hop] {
        &self.hops
    }
}

/// The link set of one aggregation domain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Topology {
    pub sm_agg: LinkModel,
    pub agg_enb: LinkModel,
    pub enb_pgw: LinkModel,
    pub pgw_up: LinkModel,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            sm_agg: LinkModel::wisun(),
            agg_enb: LinkModel::lte_pdcp(),
            enb_pgw: LinkModel::ethernet_tunnel(),
            pgw_up: LinkModel::ethernet(),
        }
    }
}

pub const HOP_SM_AGG: &str = "SM-AGG";
pub const HOP_AGG_ENB: &str = "AGG-eNB";
pub const HOP_ENB_PGW: &str = "eNB-PGW";
pub const HOP_PGW_UP: &str = "PGW-UP";

impl Topology {
    /// Divides every link's bandwidth among `meters` meters.
    pub fn for_meters(&self, meters: u64) -> Result<Self, SimnetError> {
        Ok(Self {
            sm_agg: self.sm_agg.with_meter_share(meters)?,
            agg_enb: self.agg_enb.with_meter_share(meters)?,
            enb_pgw: self.enb_pgw.with_meter_share(meters)?,
            pgw_up: self.pgw_up.with_meter_share(meters)?,
        })
    }

    /// Neighbourhood path between meters and their aggregator.
    pub fn neighbourhood(&self) -> PathModel {
        PathModel {
            hops: vec![Hop {
                name: HOP_SM_AGG.into(),
                link: self.sm_agg,
            }],
        }
    }

    /// Full path followed by the aggregate on its way to the utility.
    pub fn uplink(&self) -> PathModel {
        PathModel {
            hops: vec![
                Hop {
                    name: HOP_SM_AGG.into(),
                    link: self.sm_agg,
                },
                Hop {
                    name: HOP_AGG_ENB.into(),
                    link: self.agg_enb,
                },
                Hop {
                    name: HOP_ENB_PGW.into(),
                    link: self.enb_pgw,
                },
                Hop {
                    name: HOP_PGW_UP.into(),
                    link: self.pgw_up,
                },
            ],
        }
    }
}
