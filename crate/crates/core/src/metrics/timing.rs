use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::RngCore;

use super::{MetricsError, Result};
use crate::protocol::{
    aggregator_collect_noise, aggregator_final, meter_step_designated, meter_step_nondesignated, select_designated,
    utility_decrypt, Deployment, EntityId, MeterRecord, NoiseSource, ProtocolError, RoundConfig,
};

/// Median computation time per entity for one round, in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingBreakdown {
    pub key_bits: u32,
    pub meter_count: usize,
    /// One non-designated meter.
    pub t_sm: f64,
    pub t_sm_sel: f64,
    pub t_agg: f64,
    pub t_up: f64,
    pub t_op: f64,
}

impl TimingBreakdown {
    pub fn new(key_bits: u32, meter_count: usize, t_sm: f64, t_sm_sel: f64, t_agg: f64, t_up: f64) -> Self {
        Self {
            key_bits,
            meter_count,
            t_sm,
            t_sm_sel,
            t_agg,
            t_up,
            t_op: t_sm + t_sm_sel + t_agg + t_up,
        }
    }

    pub fn composition_holds(&self) -> bool {
        self.t_op == self.t_sm + self.t_sm_sel + self.t_agg + self.t_up
    }

    pub fn rows(&self) -> [(&'static str, f64); 5] {
        [
            ("designated_meter", self.t_sm_sel),
            ("smart_meter", self.t_sm),
            ("aggregator", self.t_agg),
            ("utility", self.t_up),
            ("total", self.t_op),
        ]
    }
}

/// Wall-clock seconds of a single repetition.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct TimingSample {
    pub t_sm: f64,
    pub t_sm_sel: f64,
    pub t_agg: f64,
    pub t_up: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

fn time_one<R: RngCore + ?Sized>(
    cfg: &RoundConfig,
    deployment: &Deployment,
    readings: &BTreeMap<EntityId, MeterRecord>,
    noise: &dyn NoiseSource,
    rng: &mut R,
) -> Result<TimingSample> {
    let dir = deployment.directory();
    let record = |id: &EntityId| {
        readings.get(id).copied().ok_or(ProtocolError::IncompleteRound {
            expected: cfg.meter_count(),
            received: readings.len(),
        })
    };

    let start = Instant::now();
    let designated = select_designated(&cfg.active_meters, cfg.interval, &cfg.selection_seed)?;
    let mut t_agg = start.elapsed().as_secs_f64();

    let mut outputs = Vec::with_capacity(cfg.meter_count());
    let start = Instant::now();
    for id in cfg.active_meters.iter().filter(|&&id| id != designated) {
        outputs.push(meter_step_nondesignated(
            deployment.meter(id)?,
            &record(id)?,
            cfg,
            dir,
            noise,
            rng,
        )?);
    }
    let t_sm = if outputs.is_empty() {
        0.0
    } else {
        start.elapsed().as_secs_f64() / outputs.len() as f64
    };

    let pk_sel = dir.meter_key(&designated)?;
    let start = Instant::now();
    let total = aggregator_collect_noise(&outputs, cfg, pk_sel)?;
    t_agg += start.elapsed().as_secs_f64();

    let start = Instant::now();
    let own = meter_step_designated(
        deployment.meter(&designated)?,
        &record(&designated)?,
        &total,
        cfg,
        dir,
        rng,
    )?;
    let t_sm_sel = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let aggregate = aggregator_final(&outputs, &own, &dir.utility)?;
    t_agg += start.elapsed().as_secs_f64();

    let start = Instant::now();
    utility_decrypt(&deployment.utility, &aggregate, cfg.scale)?;
    let t_up = start.elapsed().as_secs_f64();

    Ok(TimingSample {
        t_sm,
        t_sm_sel,
        t_agg,
        t_up,
    })
}

/// Runs the round's computations `repetitions` times and reports per-entity
/// medians. Key generation and transmission are excluded.
pub fn benchmark_round<R: RngCore + ?Sized>(
    cfg: &RoundConfig,
    deployment: &Deployment,
    readings: &BTreeMap<EntityId, MeterRecord>,
    noise: &dyn NoiseSource,
    repetitions: usize,
    rng: &mut R,
) -> Result<TimingBreakdown> {
    if repetitions < 3 {
        return Err(MetricsError::TooFewRepetitions(repetitions));
    }
    let samples = (0..repetitions)
        .map(|_| time_one(cfg, deployment, readings, noise, rng))
        .collect::<Result<Vec<_>>>()?;
    let med = |f: fn(&TimingSample) -> f64| median(&mut samples.iter().map(f).collect::<Vec<_>>());
    Ok(TimingBreakdown::new(
        deployment.utility.public.bits(),
        cfg.meter_count(),
        med(|s| s.t_sm),
        med(|s| s.t_sm_sel),
        med(|s| s.t_agg),
        med(|s| s.t_up),
    ))
}

/// `key_bits,entity,seconds`
pub fn write_timing_csv<W: Write>(rows: &[TimingBreakdown], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["key_bits", "entity", "seconds"])?;
    for b in rows {
        for (entity, secs) in b.rows() {
            w.write_record([b.key_bits.to_string(), entity.to_owned(), format!("{secs:.9}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::MasterSeed;
    use crate::protocol::SeededNoise;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup(m: u32, bits: u32) -> (Deployment, RoundConfig, BTreeMap<EntityId, MeterRecord>) {
        let ids: Vec<EntityId> = (0..m).map(EntityId::meter).collect();
        let dep = Deployment::generate(1, &ids, bits, &mut ChaCha20Rng::seed_from_u64(u64::from(m))).unwrap();
        let cfg = RoundConfig::new(0, 1, ids.clone(), 0.4, 1000, [3; 32]).unwrap();
        let readings = ids.iter().map(|&id| (id, MeterRecord::from(0.5))).collect();
        (dep, cfg, readings)
    }

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn breakdown_composes() {
        let (dep, cfg, readings) = setup(4, 128);
        let noise = SeededNoise {
            master_seed: MasterSeed([1; 32]),
        };
        let b = benchmark_round(&cfg, &dep, &readings, &noise, 3, &mut ChaCha20Rng::seed_from_u64(0)).unwrap();
        assert!(b.composition_holds());
        assert_eq!(b.key_bits, 128);
        assert_eq!(b.meter_count, 4);
        assert!(b.t_sm > 0.0 && b.t_sm_sel > 0.0 && b.t_up > 0.0);
    }

    #[test]
    fn rejects_few_repetitions() {
        let (dep, cfg, readings) = setup(2, 64);
        let noise = SeededNoise {
            master_seed: MasterSeed::default(),
        };
        let err = benchmark_round(&cfg, &dep, &readings, &noise, 2, &mut ChaCha20Rng::seed_from_u64(0));
        assert!(matches!(err, Err(MetricsError::TooFewRepetitions(2))));
    }

    #[test]
    fn aggregator_time_grows_linearly_in_meters() {
        let noise = SeededNoise {
            master_seed: MasterSeed([2; 32]),
        };
        let ms = [5u32, 10, 20, 40];
        let mut pts = Vec::new();
        for &m in &ms {
            let (dep, cfg, readings) = setup(m, 1024);
            let b = benchmark_round(&cfg, &dep, &readings, &noise, 5, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
            pts.push((f64::from(m), b.t_agg));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        let slope = sxy / sxx;
        let r2 = sxy * sxy / (sxx * syy);
        assert!(slope > 0.0, "{pts:?}");
        assert!(r2 > 0.8, "r2 {r2}, {pts:?}");
    }

    #[test]
    fn csv_layout() {
        let b = TimingBreakdown::new(128, 20, 0.25, 0.5, 0.125, 0.0625);
        let mut buf = Vec::new();
        write_timing_csv(&[b], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.ends_with("128,total,0.937500000\n"));
    }
}
