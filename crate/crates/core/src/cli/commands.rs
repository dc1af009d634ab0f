use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use num_bigint::BigInt;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::config::{parse_sigma_scale, RunConfig};
use crate::ingest::{load_readings, synthesize_readings, ReadingSeries, Schema};
use crate::metrics::{
    benchmark_round, estimate_memory, nce, write_memory_csv, write_nce_csv, write_timing_csv, SizeTable,
    TimingBreakdown,
};
use crate::noise::{sample_round_noise, MasterSeed, NoiseContext};
use crate::protocol::{
    reading_units, run_round, Deployment, EntityId, MeterRecord, RoundConfig, SeededNoise, Transcript,
};
use crate::simnet::{
    frame_size, min_bandwidth, transmission_time, Network, Seconds, HOP_AGG_ENB, HOP_ENB_PGW, HOP_PGW_UP, HOP_SM_AGG,
};

/// Readings aligned on a common interval window.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub ids: Vec<EntityId>,
    pub intervals: Vec<u64>,
    /// `records[meter][interval]`
    pub records: Vec<Vec<MeterRecord>>,
}

impl Dataset {
    pub fn from_series(series: &[ReadingSeries], max_intervals: usize) -> Result<Self> {
        let first = series.first().context("dataset has no meters")?;
        let len = series
            .iter()
            .map(|s| s.readings.len())
            .min()
            .unwrap_or(0)
            .min(max_intervals);
        if len == 0 {
            bail!("dataset has no intervals");
        }
        let intervals: Vec<u64> = first.readings[..len].iter().map(|r| r.interval).collect();
        let mut ids = Vec::with_capacity(series.len());
        let mut records = Vec::with_capacity(series.len());
        for s in series {
            let window: Vec<u64> = s.readings[..len].iter().map(|r| r.interval).collect();
            if window != intervals {
                bail!(
                    "meter {} does not cover intervals {}..={}",
                    s.meter_id,
                    intervals[0],
                    intervals[len - 1]
                );
            }
            ids.push(EntityId::from_label(&s.meter_id));
            records.push(
                s.readings[..len]
                    .iter()
                    .map(|r| MeterRecord {
                        active_kwh: r.active_kwh,
                        reactive_kvarh: r.reactive_kvarh,
                        voltage_v: None,
                    })
                    .collect(),
            );
        }
        let mut unique = ids.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != ids.len() {
            bail!("meter identifiers collide");
        }
        Ok(Self {
            ids,
            intervals,
            records,
        })
    }

    /// Loads `cfg.data` or synthesizes `cfg.meters` profiles.
    pub fn for_config(cfg: &RunConfig) -> Result<Self> {
        let series = match &cfg.data {
            Some(path) => load_readings(path, &Schema::default())?,
            None => {
                let seeds = cfg.seeds()?;
                synthesize_readings(cfg.meters, cfg.intervals, seeds.profile_u64(), &cfg.profile)
            }
        };
        Self::from_series(&series, cfg.intervals)
    }

    pub fn interval_readings(&self, i: usize) -> BTreeMap<EntityId, MeterRecord> {
        self.ids.iter().zip(&self.records).map(|(&id, r)| (id, r[i])).collect()
    }

    pub fn max_reading(&self) -> f64 {
        self.records.iter().flatten().map(|r| r.active_kwh).fold(0.0, f64::max)
    }

    /// Population standard deviation of the first `window` intervals, pooled
    /// over meters.
    pub fn calibration_sigma(&self, window: usize) -> f64 {
        let vals: Vec<f64> = self
            .records
            .iter()
            .flat_map(|r| r.iter().take(window.max(1)))
            .map(|r| r.active_kwh)
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

fn sigma_kwh(cfg: &RunConfig, data: &Dataset, scale_label: &str) -> Result<f64> {
    if let Some(s) = cfg.noise.sigma_kwh {
        if !s.is_finite() || s < 0.0 {
            bail!("noise.sigma_kwh must be non-negative");
        }
        return Ok(s * parse_sigma_scale(scale_label)?);
    }
    Ok(parse_sigma_scale(scale_label)? * data.calibration_sigma(cfg.noise.calibration_intervals))
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// `units / scale` as an exact decimal when `scale` is a power of ten.
pub fn format_units(units: &BigInt, scale: u64) -> String {
    let digits = scale.ilog10();
    if 10u64.pow(digits) != scale {
        let v: f64 = units.to_string().parse().unwrap_or(f64::NAN);
        return format!("{}", v / scale as f64);
    }
    let neg = units.sign() == num_bigint::Sign::Minus;
    let s = units.magnitude().to_string();
    let d = digits as usize;
    let padded = format!("{s:0>width$}", width = d + 1);
    let (int, frac) = padded.split_at(padded.len() - d);
    let sign = if neg { "-" } else { "" };
    if d == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalAggregate {
    pub interval: u64,
    pub domain: u32,
    pub units: BigInt,
    pub plain_units: BigInt,
    pub network_time: Seconds,
}

/// One protocol round per interval. Writes `aggregates.csv`,
/// `transcript.csv` and `deliveries.csv` to `cfg.out`.
pub fn cmd_run(cfg: &RunConfig) -> Result<Vec<IntervalAggregate>> {
    let data = Dataset::for_config(cfg)?;
    let seeds = cfg.seeds()?;
    let sigma = sigma_kwh(cfg, &data, &cfg.noise.sigma_scale)?;
    let mut keygen = ChaCha20Rng::from_seed(seeds.keygen);
    let deployment = Deployment::generate(cfg.domain, &data.ids, cfg.key_bits, &mut keygen)?;
    deployment.check_ring_capacity(data.max_reading(), sigma, cfg.scale)?;
    let topology = cfg.links.for_meters(data.ids.len() as u64)?;
    let noise = SeededNoise {
        master_seed: MasterSeed(seeds.noise),
    };

    let mut network = Network::new();
    let mut transcripts: Vec<(u32, Transcript)> = Vec::new();
    let mut results = Vec::new();
    for (i, &t) in data.intervals.iter().enumerate() {
        let interval = u32::try_from(t).context("interval index exceeds 32 bits")?;
        let round = (|| -> Result<IntervalAggregate> {
            let rc = RoundConfig::new(
                interval,
                cfg.domain,
                data.ids.clone(),
                sigma,
                cfg.scale,
                seeds.selection,
            )?
            .with_transform(cfg.noise.transform);
            let readings = data.interval_readings(i);
            let mut rng = ChaCha20Rng::from_seed(seeds.encryption);
            rng.set_stream(t);
            let r = run_round(&rc, &deployment, &readings, &noise, &mut rng, &mut network, &topology)?;
            let plain_units = readings
                .values()
                .map(|rec| reading_units(rec.minimized(), cfg.scale).map(BigInt::from))
                .sum::<Result<BigInt, _>>()?;
            if r.aggregate.units != plain_units {
                bail!("aggregate {} differs from plain sum {}", r.aggregate.units, plain_units);
            }
            transcripts.push((interval, r.transcript));
            Ok(IntervalAggregate {
                interval: t,
                domain: cfg.domain,
                units: r.aggregate.units,
                plain_units,
                network_time: r.network_time,
            })
        })()
        .with_context(|| format!("interval {t}"))?;
        println!("interval {t}: {} kWh", format_units(&round.units, cfg.scale));
        results.push(round);
    }

    let mut w = csv::Writer::from_writer(create(&cfg.out, "aggregates.csv")?);
    w.write_record(["interval", "domain", "kwh"])?;
    for r in &results {
        w.write_record([
            r.interval.to_string(),
            r.domain.to_string(),
            format_units(&r.units, cfg.scale),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(&cfg.out, "transcript.csv")?);
    w.write_record(Transcript::CSV_HEADER)?;
    for (round, tr) in &transcripts {
        tr.write_csv_rows(*round, &mut w)?;
    }
    w.flush()?;

    network.write_csv(create(&cfg.out, "deliveries.csv")?)?;
    Ok(results)
}

/// Timing grid over `cfg.bench.key_bits`. Writes `timing.csv` and
/// `memory.csv`.
pub fn cmd_bench(cfg: &RunConfig) -> Result<Vec<TimingBreakdown>> {
    let data = Dataset::for_config(cfg)?;
    let seeds = cfg.seeds()?;
    let sigma = sigma_kwh(cfg, &data, &cfg.noise.sigma_scale)?;
    let noise = SeededNoise {
        master_seed: MasterSeed(seeds.noise),
    };
    let readings = data.interval_readings(0);
    let interval = u32::try_from(data.intervals[0]).context("interval index exceeds 32 bits")?;
    let mut rows = Vec::new();
    for &bits in &cfg.bench.key_bits {
        let mut keygen = ChaCha20Rng::from_seed(seeds.keygen);
        keygen.set_stream(u64::from(bits));
        let deployment = Deployment::generate(cfg.domain, &data.ids, bits, &mut keygen)
            .with_context(|| format!("{bits}-bit keys"))?;
        deployment.check_ring_capacity(data.max_reading(), sigma, cfg.scale)?;
        let rc = RoundConfig::new(
            interval,
            cfg.domain,
            data.ids.clone(),
            sigma,
            cfg.scale,
            seeds.selection,
        )?
        .with_transform(cfg.noise.transform);
        let mut rng = ChaCha20Rng::from_seed(seeds.encryption);
        let b = benchmark_round(&rc, &deployment, &readings, &noise, cfg.bench.repetitions, &mut rng)?;
        println!(
            "{bits}-bit: designated {:.5} s, meter {:.5} s, aggregator {:.5} s, utility {:.5} s, total {:.5} s",
            b.t_sm_sel, b.t_sm, b.t_agg, b.t_up, b.t_op
        );
        rows.push(b);
    }
    write_timing_csv(&rows, create(&cfg.out, "timing.csv")?)?;
    let mem = estimate_memory(&SizeTable::for_key_bits(cfg.key_bits), data.ids.len() as u64);
    write_memory_csv(&mem, create(&cfg.out, "memory.csv")?)?;
    Ok(rows)
}

/// Pooled original readings and their per-meter perturbations at
/// `sigma` kWh, both on the fixed-point grid.
pub fn perturb(cfg: &RunConfig, data: &Dataset, noise_seed: MasterSeed, sigma: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let scale = cfg.scale as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (id, recs) in data.ids.iter().zip(&data.records) {
        for (&t, rec) in data.intervals.iter().zip(recs) {
            let c = reading_units(rec.minimized(), cfg.scale)?;
            let mut ctx = NoiseContext::new(noise_seed, id.0, t, sigma);
            let s = sample_round_noise(&mut ctx, cfg.noise.transform, cfg.scale).quantized;
            xs.push(c as f64 / scale);
            ys.push((c + s) as f64 / scale);
        }
    }
    Ok((xs, ys))
}

/// NCE across `cfg.privacy.sigma_scales`. Writes `nce.csv`.
pub fn cmd_privacy(cfg: &RunConfig) -> Result<Vec<(String, f64)>> {
    let data = Dataset::for_config(cfg)?;
    let seeds = cfg.seeds()?;
    let mut rows = Vec::new();
    for label in &cfg.privacy.sigma_scales {
        let sigma = sigma_kwh(cfg, &data, label)?;
        let (xs, ys) = perturb(cfg, &data, MasterSeed(seeds.noise), sigma)?;
        let v = nce(&xs, &ys, cfg.privacy.bins).with_context(|| format!("sigma scale {label}"))?;
        println!("sigma x {label}: NCE {v:.5}");
        rows.push((label.clone(), v));
    }
    write_nce_csv(&rows, create(&cfg.out, "nce.csv")?)?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommRow {
    pub payload: &'static str,
    pub payload_bytes: u64,
    pub hop: &'static str,
    pub frame_bytes: u64,
    pub seconds: Seconds,
}

/// Frame sizes and per-meter times of every protocol payload on the hops it
/// crosses, plus the minimum bandwidth. Writes `comm.csv`.
pub fn cmd_comm(cfg: &RunConfig) -> Result<(Vec<CommRow>, u64)> {
    let topo = cfg.links.for_meters(cfg.meters as u64)?;
    let id = cfg.comm.id_bytes;
    let c = cfg.comm.cipher_bytes;
    let nan = [(HOP_SM_AGG, topo.sm_agg)];
    let uplink = [
        (HOP_SM_AGG, topo.sm_agg),
        (HOP_AGG_ENB, topo.agg_enb),
        (HOP_ENB_PGW, topo.enb_pgw),
        (HOP_PGW_UP, topo.pgw_up),
    ];
    let payloads: [(&'static str, u64, &[(&'static str, _)]); 5] = [
        ("id_sel", id, &nan),
        ("noise_total", c, &nan),
        ("noise", c, &nan),
        ("noisy_reading", c, &nan),
        ("aggregate", c, &uplink),
    ];
    let mut rows = Vec::new();
    for (payload, bytes, hops) in payloads {
        for (hop, link) in hops {
            let frame_bytes = frame_size(bytes, link);
            rows.push(CommRow {
                payload,
                payload_bytes: bytes,
                hop,
                frame_bytes,
                seconds: transmission_time(frame_bytes, link.per_meter_bandwidth_bps),
            });
        }
    }
    let sizes: Vec<u64> = payloads.iter().map(|p| p.1).collect();
    let min_bw = min_bandwidth(&sizes, cfg.meters as u64)?;

    let mut w = csv::Writer::from_writer(create(&cfg.out, "comm.csv")?);
    w.write_record(["payload", "payload_bytes", "hop", "frame_bytes", "seconds"])?;
    for r in &rows {
        w.write_record([
            r.payload.to_owned(),
            r.payload_bytes.to_string(),
            r.hop.to_owned(),
            r.frame_bytes.to_string(),
            r.seconds.to_string(),
        ])?;
        println!(
            "{:<14} {:>4} B  {:<8} {:>4} B  {} s",
            r.payload, r.payload_bytes, r.hop, r.frame_bytes, r.seconds
        );
    }
    w.write_record(["min_bandwidth", &min_bw.to_string(), "", "", ""])?;
    w.flush()?;
    println!("minimum bandwidth for {} meters: {min_bw} B per interval", cfg.meters);
    Ok((rows, min_bw))
}
