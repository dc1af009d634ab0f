//! Message-driven state machines for the three protocol roles.

use std::collections::BTreeMap;

use rand::RngCore;

use super::{
    aggregator_collect_noise, aggregator_final, meter_step_designated, meter_step_nondesignated, utility_decrypt,
    AggregateValue, Directory, EntityId, MessageKind, MeterIdentity, MeterOutput, MeterRecord, NoiseSource,
    ProtocolError, Result, RoundConfig, WireMessage,
};
use crate::paillier::{Ciphertext, Keypair, PaillierPublicKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeterPhase {
    AwaitingSelection,
    AwaitingNoiseTotal,
    Done,
}

fn unexpected(kind: MessageKind, state: impl std::fmt::Debug) -> ProtocolError {
    ProtocolError::UnexpectedMessage {
        kind,
        state: format!("{state:?}"),
    }
}

fn expect_kind(msg: &WireMessage, kind: MessageKind, state: impl std::fmt::Debug) -> Result<()> {
    if msg.kind != kind {
        return Err(unexpected(msg.kind, state));
    }
    Ok(())
}

fn ciphertext_message(
    kind: MessageKind,
    cfg: &RoundConfig,
    sender: EntityId,
    c: &Ciphertext,
    pk: &PaillierPublicKey,
) -> WireMessage {
    WireMessage {
        kind,
        interval: cfg.interval,
        sender,
        payload: c.to_bytes(pk),
    }
}

/// One smart meter for one interval.
#[derive(Debug)]
pub struct MeterAgent<'a> {
    identity: &'a MeterIdentity,
    record: MeterRecord,
    phase: MeterPhase,
}

impl<'a> MeterAgent<'a> {
    pub fn new(identity: &'a MeterIdentity, record: MeterRecord) -> Self {
        Self {
            identity,
            record,
            phase: MeterPhase::AwaitingSelection,
        }
    }

    pub fn id(&self) -> EntityId {
        self.identity.id
    }

    pub fn phase(&self) -> MeterPhase {
        self.phase
    }

    /// Handles the selection broadcast. A non-designated meter answers with
    /// its NOISE and NOISY_READING reports; the designated meter answers with
    /// nothing and waits for the noise total.
    pub fn on_select<R: RngCore + ?Sized>(
        &mut self,
        msg: &WireMessage,
        cfg: &RoundConfig,
        directory: &Directory,
        noise: &dyn NoiseSource,
        rng: &mut R,
    ) -> Result<Vec<WireMessage>> {
        expect_kind(msg, MessageKind::Select, self.phase)?;
        if self.phase != MeterPhase::AwaitingSelection || msg.interval != cfg.interval {
            return Err(unexpected(msg.kind, self.phase));
        }
        let selected: [u8; 16] = msg
            .payload
            .as_slice()
            .try_into()
            .map_err(|_| ProtocolError::Wire("SELECT payload must be a 16-byte id".into()))?;
        let selected = EntityId(selected);
        if selected != cfg.designated {
            return Err(ProtocolError::Wire(format!(
                "SELECT names {selected}, round designates {}",
                cfg.designated
            )));
        }
        if selected == self.identity.id {
            self.phase = MeterPhase::AwaitingNoiseTotal;
            return Ok(Vec::new());
        }
        let out = meter_step_nondesignated(self.identity, &self.record, cfg, directory, noise, rng)?;
        self.phase = MeterPhase::Done;
        let pk_sel = directory.meter_key(&cfg.designated)?;
        Ok(vec![
            ciphertext_message(MessageKind::Noise, cfg, self.identity.id, &out.noise_cipher, pk_sel),
            ciphertext_message(
                MessageKind::NoisyReading,
                cfg,
                self.identity.id,
                &out.reading_cipher,
                &directory.utility,
            ),
        ])
    }

    /// Designated meter only: cancels the received noise total.
    pub fn on_noise_total<R: RngCore + ?Sized>(
        &mut self,
        msg: &WireMessage,
        cfg: &RoundConfig,
        directory: &Directory,
        rng: &mut R,
    ) -> Result<WireMessage> {
        expect_kind(msg, MessageKind::NoiseTotal, self.phase)?;
        if self.phase != MeterPhase::AwaitingNoiseTotal || msg.sender != EntityId::AGGREGATOR {
            return Err(unexpected(msg.kind, self.phase));
        }
        let total = Ciphertext::from_bytes(&self.identity.keypair.public, &msg.payload)?;
        let c = meter_step_designated(self.identity, &self.record, &total, cfg, directory, rng)?;
        self.phase = MeterPhase::Done;
        Ok(ciphertext_message(
            MessageKind::NoisyReading,
            cfg,
            self.identity.id,
            &c,
            &directory.utility,
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggregatorPhase {
    Idle,
    Collecting,
    AwaitingDesignated,
    Done,
}

/// The aggregator for one interval.
#[derive(Debug)]
pub struct AggregatorAgent {
    cfg: RoundConfig,
    pk_sel: PaillierPublicKey,
    pk_up: PaillierPublicKey,
    phase: AggregatorPhase,
    noise: BTreeMap<EntityId, Ciphertext>,
    readings: BTreeMap<EntityId, Ciphertext>,
}

impl AggregatorAgent {
    pub fn new(cfg: RoundConfig, directory: &Directory) -> Result<Self> {
        let pk_sel = directory.meter_key(&cfg.designated)?.clone();
        Ok(Self {
            cfg,
            pk_sel,
            pk_up: directory.utility.clone(),
            phase: AggregatorPhase::Idle,
            noise: BTreeMap::new(),
            readings: BTreeMap::new(),
        })
    }

    pub fn phase(&self) -> AggregatorPhase {
        self.phase
    }

    /// `id_sel || t_i` broadcast; the interval travels in the header.
    pub fn announce(&mut self) -> Result<WireMessage> {
        if self.phase != AggregatorPhase::Idle {
            return Err(unexpected(MessageKind::Select, self.phase));
        }
        self.phase = AggregatorPhase::Collecting;
        Ok(WireMessage {
            kind: MessageKind::Select,
            interval: self.cfg.interval,
            sender: EntityId::AGGREGATOR,
            payload: self.cfg.designated.0.to_vec(),
        })
    }

    /// Buffers one NOISE or NOISY_READING report from a non-designated meter.
    pub fn on_report(&mut self, msg: &WireMessage) -> Result<()> {
        if self.phase != AggregatorPhase::Collecting || msg.interval != self.cfg.interval {
            return Err(unexpected(msg.kind, self.phase));
        }
        if !self.cfg.is_active(&msg.sender) {
            return Err(ProtocolError::UnknownMeter(msg.sender));
        }
        if msg.sender == self.cfg.designated {
            return Err(ProtocolError::Role {
                meter: msg.sender,
                attempted: "non-designated",
            });
        }
        let (buffer, pk) = match msg.kind {
            MessageKind::Noise => (&mut self.noise, &self.pk_sel),
            MessageKind::NoisyReading => (&mut self.readings, &self.pk_up),
            other => return Err(unexpected(other, self.phase)),
        };
        let c = Ciphertext::from_bytes(pk, &msg.payload)?;
        if buffer.insert(msg.sender, c).is_some() {
            return Err(ProtocolError::DuplicateReport(msg.sender));
        }
        Ok(())
    }

    fn outputs(&self) -> Result<Vec<MeterOutput>> {
        let expected = self.cfg.meter_count() - 1;
        let received = self.noise.len().min(self.readings.len());
        if self.noise.len() != expected || self.readings.len() != expected {
            return Err(ProtocolError::IncompleteRound { expected, received });
        }
        self.noise
            .iter()
            .map(|(id, noise_cipher)| {
                let reading_cipher = self
                    .readings
                    .get(id)
                    .ok_or(ProtocolError::IncompleteRound { expected, received })?;
                Ok(MeterOutput {
                    sender: *id,
                    noise_cipher: noise_cipher.clone(),
                    reading_cipher: reading_cipher.clone(),
                })
            })
            .collect()
    }

    /// First barrier: every non-designated meter has reported. Returns the
    /// NOISE_TOTAL message for the designated meter.
    pub fn noise_total(&mut self) -> Result<WireMessage> {
        if self.phase != AggregatorPhase::Collecting {
            return Err(unexpected(MessageKind::NoiseTotal, self.phase));
        }
        let outputs = self.outputs()?;
        let total = aggregator_collect_noise(&outputs, &self.cfg, &self.pk_sel)?;
        self.phase = AggregatorPhase::AwaitingDesignated;
        Ok(ciphertext_message(
            MessageKind::NoiseTotal,
            &self.cfg,
            EntityId::AGGREGATOR,
            &total,
            &self.pk_sel,
        ))
    }

    /// Second barrier: the designated report arrived. Returns the AGGREGATE
    /// message for the utility.
    pub fn on_designated(&mut self, msg: &WireMessage) -> Result<WireMessage> {
        expect_kind(msg, MessageKind::NoisyReading, self.phase)?;
        if self.phase != AggregatorPhase::AwaitingDesignated || msg.sender != self.cfg.designated {
            return Err(unexpected(msg.kind, self.phase));
        }
        let designated = Ciphertext::from_bytes(&self.pk_up, &msg.payload)?;
        let aggregate = aggregator_final(&self.outputs()?, &designated, &self.pk_up)?;
        self.phase = AggregatorPhase::Done;
        Ok(ciphertext_message(
            MessageKind::Aggregate,
            &self.cfg,
            EntityId::AGGREGATOR,
            &aggregate,
            &self.pk_up,
        ))
    }
}

/// The utility provider: decrypts only the domain aggregate.
#[derive(Debug)]
pub struct UtilityAgent<'a> {
    keypair: &'a Keypair,
    scale: u64,
}

impl<'a> UtilityAgent<'a> {
    pub fn new(keypair: &'a Keypair, scale: u64) -> Self {
        Self { keypair, scale }
    }

    pub fn on_aggregate(&self, msg: &WireMessage) -> Result<(Ciphertext, AggregateValue)> {
        expect_kind(msg, MessageKind::Aggregate, "awaiting aggregate")?;
        if msg.sender != EntityId::AGGREGATOR {
            return Err(unexpected(msg.kind, "awaiting aggregate"));
        }
        let c = Ciphertext::from_bytes(&self.keypair.public, &msg.payload)?;
        let value = utility_decrypt(self.keypair, &c, self.scale)?;
        Ok((c, value))
    }
}
