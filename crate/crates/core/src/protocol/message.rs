//! Wire encoding for protocol messages.
//!
//! `tag (u8) | interval (u32) | sender (16 bytes) | payload length (u32) | payload`,
//! all integers big-endian.

use std::fmt;
use std::io::Write;

use super::{EntityId, ProtocolError};

pub const HEADER_BYTES: usize = 1 + 4 + 16 + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MessageKind {
    /// Designated meter id, aggregator to all meters.
    Select = 1,
    /// Encrypted noise sum, aggregator to the designated meter.
    NoiseTotal = 2,
    /// A meter's noise under the designated meter's key.
    Noise = 3,
    /// A meter's noisy reading under the utility key.
    NoisyReading = 4,
    /// Encrypted domain total, aggregator to utility.
    Aggregate = 5,
}

impl MessageKind {
    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => MessageKind::Select,
            2 => MessageKind::NoiseTotal,
            3 => MessageKind::Noise,
            4 => MessageKind::NoisyReading,
            5 => MessageKind::Aggregate,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            MessageKind::Select => "SELECT",
            MessageKind::NoiseTotal => "NOISE_TOTAL",
            MessageKind::Noise => "NOISE",
            MessageKind::NoisyReading => "NOISY_READING",
            MessageKind::Aggregate => "AGGREGATE",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireMessage {
    pub kind: MessageKind,
    pub interval: u32,
    pub sender: EntityId,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.payload.len());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.interval.to_be_bytes());
        out.extend_from_slice(&self.sender.0);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let wire = |m: &str| ProtocolError::Wire(m.to_owned());
        if bytes.len() < HEADER_BYTES {
            return Err(wire("truncated header"));
        }
        let kind = MessageKind::from_tag(bytes[0]).ok_or_else(|| wire("unknown message tag"))?;
        let interval = u32::from_be_bytes(bytes[1..5].try_into().expect("4 bytes"));
        let mut sender = [0u8; 16];
        sender.copy_from_slice(&bytes[5..21]);
        let len = u32::from_be_bytes(bytes[21..25].try_into().expect("4 bytes")) as usize;
        if bytes.len() != HEADER_BYTES + len {
            return Err(wire("payload length mismatch"));
        }
        Ok(Self {
            kind,
            interval,
            sender: EntityId(sender),
            payload: bytes[HEADER_BYTES..].to_vec(),
        })
    }
}

/// A message together with its addressee, in send order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub recipient: EntityId,
    pub message: WireMessage,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    entries: Vec<Envelope>,
}

impl Transcript {
    pub fn push(&mut self, recipient: EntityId, message: WireMessage) {
        self.entries.push(Envelope { recipient, message });
    }

    pub fn entries(&self) -> &[Envelope] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Concatenated wire encodings, each preceded by the recipient id.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.entries {
            out.extend_from_slice(&e.recipient.0);
            out.extend_from_slice(&e.message.encode());
        }
        out
    }

    /// Appends `round,seq,type,sender,recipient,wire_hex` rows.
    pub fn write_csv_rows<W: Write>(&self, round: u32, w: &mut csv::Writer<W>) -> csv::Result<()> {
        for (seq, e) in self.entries.iter().enumerate() {
            w.write_record([
                round.to_string(),
                seq.to_string(),
                e.message.kind.name().to_owned(),
                e.message.sender.to_string(),
                e.recipient.to_string(),
                hex::encode(e.message.encode()),
            ])?;
        }
        Ok(())
    }

    pub const CSV_HEADER: [&'static str; 6] = ["round", "seq", "message_type", "sender", "recipient", "wire_hex"];
}
