use std::io::Write;

use super::{frame_size, transmission_time, PathModel, Seconds};

/// One message crossing one hop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub round: u32,
    pub message_type: String,
    pub sender: [u8; 16],
    pub hop: String,
    pub payload_bytes: u64,
    pub frame_bytes: u64,
    pub seconds: Seconds,
    /// Simulated clock when the frame finished crossing this hop.
    pub arrived_at: Seconds,
}

/// Reliable in-order transport on a simulated clock.
///
/// Messages are processed in submission order, so a sender's stream is never
/// reordered. The clock advances by the transmission time of every hop.
#[derive(Debug, Default, Clone)]
pub struct Network {
    clock: Seconds,
    records: Vec<DeliveryRecord>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clock(&self) -> Seconds {
        self.clock
    }

    pub fn records(&self) -> &[DeliveryRecord] {
        &self.records
    }

    /// Routes `payload_bytes` along `path` and returns the total time spent.
    pub fn deliver(
        &mut self,
        round: u32,
        message_type: &str,
        sender: [u8; 16],
        payload_bytes: u64,
        path: &PathModel,
    ) -> Seconds {
        let start = self.clock;
        for hop in path.hops() {
            let frame_bytes = frame_size(payload_bytes, &hop.link);
            let seconds = transmission_time(frame_bytes, hop.link.per_meter_bandwidth_bps);
            self.clock = self.clock + seconds;
            self.records.push(DeliveryRecord {
                round,
                message_type: message_type.to_owned(),
                sender,
                hop: hop.name.clone(),
                payload_bytes,
                frame_bytes,
                seconds,
                arrived_at: self.clock,
            });
        }
        Seconds(self.clock.0 - start.0)
    }

    /// `round,message_type,hop,payload_bytes,frame_bytes,seconds`
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "round",
            "message_type",
            "hop",
            "payload_bytes",
            "frame_bytes",
            "seconds",
        ])?;
        for r in &self.records {
            w.write_record([
                r.round.to_string(),
                r.message_type.clone(),
                r.hop.clone(),
                r.payload_bytes.to_string(),
                r.frame_bytes.to_string(),
                r.seconds.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
