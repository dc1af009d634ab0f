use std::collections::BTreeMap;

use rand::RngCore;

use super::{
    AggregateValue, AggregatorAgent, Deployment, EntityId, MeterAgent, MeterRecord, NoiseSource, ProtocolError, Result,
    RoundConfig, Transcript, UtilityAgent, WireMessage,
};
use crate::paillier::Ciphertext;
use crate::simnet::{Network, PathModel, Seconds, Topology};

#[derive(Clone, Debug)]
pub struct RoundResult {
    pub interval: u32,
    pub designated: EntityId,
    pub aggregate_cipher: Ciphertext,
    pub aggregate: AggregateValue,
    /// Every message in send order.
    pub transcript: Transcript,
    /// Simulated transmission time spent in this round.
    pub network_time: Seconds,
}

impl RoundResult {
    pub fn aggregate_kwh(&self) -> f64 {
        self.aggregate.kwh
    }
}

struct Wire<'a> {
    interval: u32,
    network: &'a mut Network,
    transcript: Transcript,
}

impl Wire<'_> {
    /// Serializes, routes and re-parses `msg`, as the recipient would see it.
    fn send(&mut self, recipient: EntityId, msg: WireMessage, path: &PathModel) -> Result<WireMessage> {
        let bytes = msg.encode();
        self.network.deliver(
            self.interval,
            msg.kind.name(),
            msg.sender.0,
            msg.payload.len() as u64,
            path,
        );
        self.transcript.push(recipient, msg);
        WireMessage::decode(&bytes)
    }
}

/// Runs one interval end to end: selection, non-designated reports, noise
/// aggregation, designated cancellation, final aggregation and utility
/// decryption. Every message crosses `network` over `topology`.
///
/// Aborts on the first error; a round is never partially aggregated.
pub fn run_round<R: RngCore + ?Sized>(
    cfg: &RoundConfig,
    deployment: &Deployment,
    readings: &BTreeMap<EntityId, MeterRecord>,
    noise: &dyn NoiseSource,
    rng: &mut R,
    network: &mut Network,
    topology: &Topology,
) -> Result<RoundResult> {
    let present = cfg.active_meters.iter().filter(|id| readings.contains_key(id)).count();
    if present != cfg.meter_count() {
        return Err(ProtocolError::IncompleteRound {
            expected: cfg.meter_count(),
            received: present,
        });
    }
    let directory = deployment.directory();
    let nan = topology.neighbourhood();
    let uplink = topology.uplink();
    let start = network.clock();
    let mut wire = Wire {
        interval: cfg.interval,
        network,
        transcript: Transcript::default(),
    };

    let mut aggregator = AggregatorAgent::new(cfg.clone(), directory)?;
    let mut meters = cfg
        .active_meters
        .iter()
        .map(|id| Ok(MeterAgent::new(deployment.meter(id)?, readings[id])))
        .collect::<Result<Vec<_>>>()?;

    let select = aggregator.announce()?;
    let select = wire.send(EntityId::BROADCAST, select, &nan)?;

    let mut designated = None;
    for (idx, meter) in meters.iter_mut().enumerate() {
        let reports = meter.on_select(&select, cfg, directory, noise, rng)?;
        if reports.is_empty() {
            designated = Some(idx);
        }
        for report in reports {
            let received = wire.send(EntityId::AGGREGATOR, report, &nan)?;
            aggregator.on_report(&received)?;
        }
    }
    let designated = designated.ok_or(ProtocolError::UnknownMeter(cfg.designated))?;

    let total = aggregator.noise_total()?;
    let total = wire.send(cfg.designated, total, &nan)?;
    let own = meters[designated].on_noise_total(&total, cfg, directory, rng)?;
    let own = wire.send(EntityId::AGGREGATOR, own, &nan)?;

    let aggregate = aggregator.on_designated(&own)?;
    let aggregate = wire.send(EntityId::UTILITY, aggregate, &uplink)?;
    let (aggregate_cipher, value) = UtilityAgent::new(&deployment.utility, cfg.scale).on_aggregate(&aggregate)?;

    let network_time = Seconds(wire.network.clock().0 - start.0);
    Ok(RoundResult {
        interval: cfg.interval,
        designated: cfg.designated,
        aggregate_cipher,
        aggregate: value,
        transcript: wire.transcript,
        network_time,
    })
}
