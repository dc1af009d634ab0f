//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use smartagg::cli::{cmd_privacy, Dataset, RunConfig};
use smartagg::ingest::{synthesize_readings, ProfileParams};
use smartagg::metrics::{
    benchmark_round, conditional_entropy, entropy, estimate_memory, ks_critical, ks_statistic, nce, nce_from_joint,
    Histogram2D, SizeTable, TimingBreakdown,
};
use smartagg::noise::{sample_round_noise, MasterSeed, NoiseContext, Transform};
use smartagg::paillier::{
    add_ciphertexts, decode_units, decrypt, decrypt_raw, encrypt, encrypt_with_nonce, generate_keypair,
    keypair_from_primes, Ciphertext, EncodedValue,
};
use smartagg::protocol::{
    reading_units, run_round, Deployment, EntityId, MessageKind, NoiseSource, RoundConfig, SeededNoise,
};
use smartagg::simnet::{frame_size, min_bandwidth, transmission_time, LinkModel, Network, Seconds, Topology};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.1?}, limit {limit:?}"))
}

fn paillier_correctness() -> Outcome {
    let start = Instant::now();
    let toy = keypair_from_primes(&BigUint::from(5u32), &BigUint::from(7u32)).map_err(|e| e.to_string())?;
    let n = BigUint::from(35u32);
    let mut toy_cases = 0;
    for m in 0u32..35 {
        for r in 1u32..35 {
            if BigUint::from(r).gcd(&n) != BigUint::one() {
                continue;
            }
            let c = encrypt_with_nonce(&toy.public, &BigUint::from(m), &BigUint::from(r)).map_err(|e| e.to_string())?;
            let back = decrypt_raw(&toy.public, &toy.secret, &c).map_err(|e| e.to_string())?;
            ensure(back == BigUint::from(m), || {
                format!("toy key: m={m} r={r} decrypted to {back}")
            })?;
            toy_cases += 1;
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(0xacce);
    let kp = generate_keypair(1024, &mut rng).map_err(|e| e.to_string())?;
    let pk = &kp.public;
    let enc = |m: &BigUint, rng: &mut ChaCha20Rng| {
        encrypt(pk, &EncodedValue::new(m.clone(), 1, pk).expect("m < n"), rng).expect("encrypt")
    };
    for i in 0..1000 {
        let m = rng.gen_biguint_below(pk.n());
        let back = decrypt_raw(pk, &kp.secret, &enc(&m, &mut rng)).map_err(|e| e.to_string())?;
        ensure(back == m, || format!("1024-bit roundtrip {i} failed"))?;
    }
    for i in 0..1000 {
        let a = rng.gen_biguint_below(pk.n());
        let b = rng.gen_biguint_below(pk.n());
        let sum = add_ciphertexts(pk, &enc(&a, &mut rng), &enc(&b, &mut rng)).map_err(|e| e.to_string())?;
        let back = decrypt_raw(pk, &kp.secret, &sum).map_err(|e| e.to_string())?;
        ensure(back == (a + b) % pk.n(), || format!("homomorphic pair {i} failed"))?;
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!(
        "toy key {toy_cases} (m, r) cases, 1000 roundtrips + 1000 homomorphic pairs at 1024 bits, {elapsed:.1?}"
    ))
}

struct RoundCheck {
    rounds: usize,
    collusion_reports: usize,
    perturbed_reports: usize,
}

/// Zero-sum cancellation over the meter/sigma grid; also inspects every
/// round with at least two meters for what a colluding aggregator and
/// utility could see.
fn zero_sum_and_collusion() -> Result<(RoundCheck, Duration), String> {
    let start = Instant::now();
    let scale = 1000u64;
    let noise = SeededNoise {
        master_seed: MasterSeed([0x51; 32]),
    };
    let mut check = RoundCheck {
        rounds: 0,
        collusion_reports: 0,
        perturbed_reports: 0,
    };
    for m in [1usize, 2, 5, 20, 100] {
        let series = synthesize_readings(m, 50, 77 + m as u64, &ProfileParams::default());
        let data = Dataset::from_series(&series, 50).map_err(|e| e.to_string())?;
        let mut keygen = ChaCha20Rng::seed_from_u64(m as u64);
        let dep = Deployment::generate(1, &data.ids, 512, &mut keygen).map_err(|e| e.to_string())?;
        let unit_sigma = data.calibration_sigma(50).max(0.05);
        for mult in [1.0 / 9.0, 1.0, 9.0] {
            let sigma = unit_sigma * mult;
            dep.check_ring_capacity(data.max_reading(), sigma, scale)
                .map_err(|e| e.to_string())?;
            for (i, &t) in data.intervals.iter().enumerate() {
                let cfg = RoundConfig::new(t as u32, 1, data.ids.clone(), sigma, scale, [m as u8; 32])
                    .map_err(|e| e.to_string())?;
                let readings = data.interval_readings(i);
                let mut rng = ChaCha20Rng::seed_from_u64(t ^ (m as u64) << 32);
                let r = run_round(
                    &cfg,
                    &dep,
                    &readings,
                    &noise,
                    &mut rng,
                    &mut Network::new(),
                    &Topology::default(),
                )
                .map_err(|e| format!("M={m} sigma x {mult:.3} interval {t}: {e}"))?;
                let truth: i64 = readings
                    .values()
                    .map(|rec| reading_units(rec.active_kwh, scale).expect("valid reading"))
                    .sum();
                ensure(r.aggregate.units == BigInt::from(truth), || {
                    format!("M={m} interval {t}: aggregate {} != {truth}", r.aggregate.units)
                })?;
                check.rounds += 1;
                if m >= 2 {
                    collusion_view(&dep, &cfg, &readings, &noise, &r.transcript, &mut check)?;
                }
            }
        }
    }
    Ok((check, start.elapsed()))
}

fn collusion_view(
    dep: &Deployment,
    cfg: &RoundConfig,
    readings: &BTreeMap<EntityId, smartagg::protocol::MeterRecord>,
    noise: &SeededNoise,
    transcript: &smartagg::protocol::Transcript,
    check: &mut RoundCheck,
) -> Result<(), String> {
    let up = &dep.utility;
    let mut needles: Vec<Vec<u8>> = Vec::new();
    for e in transcript.entries() {
        let msg = &e.message;
        if msg.kind != MessageKind::NoisyReading || msg.sender == cfg.designated {
            continue;
        }
        let c = Ciphertext::from_bytes(&up.public, &msg.payload).map_err(|e| e.to_string())?;
        let seen = decode_units(
            &decrypt(&up.public, &up.secret, &c, cfg.scale).map_err(|e| e.to_string())?,
            &up.public,
        );
        let truth = reading_units(readings[&msg.sender].active_kwh, cfg.scale).expect("valid reading");
        let s = noise.draw(&msg.sender, cfg).quantized;
        ensure(seen == BigInt::from(truth + s), || {
            format!("meter {} report is not reading + noise", msg.sender)
        })?;
        if s != 0 {
            ensure(seen != BigInt::from(truth), || {
                format!("meter {} report equals its reading", msg.sender)
            })?;
            check.perturbed_reports += 1;
        }
        check.collusion_reports += 1;
    }
    for (id, rec) in readings {
        let units = reading_units(rec.active_kwh, cfg.scale).expect("valid reading");
        needles.push(units.to_be_bytes().to_vec());
        needles.push(units.to_le_bytes().to_vec());
        needles.push(rec.active_kwh.to_be_bytes().to_vec());
        needles.push(rec.active_kwh.to_le_bytes().to_vec());
        needles.push(format!("{:.3}", rec.active_kwh).into_bytes());
        if *id != cfg.designated {
            let s = noise.draw(id, cfg).quantized;
            needles.push(s.to_be_bytes().to_vec());
            needles.push((units + s).to_be_bytes().to_vec());
        }
    }
    // Headers carry only routing metadata and SELECT carries only the
    // designated id; everything else must be ciphertext.
    for e in transcript.entries() {
        let msg = &e.message;
        if msg.kind == MessageKind::Select {
            ensure(msg.payload == cfg.designated.0, || {
                "SELECT payload is not the designated id".into()
            })?;
            continue;
        }
        for n in &needles {
            ensure(!msg.payload.windows(n.len()).any(|w| w == n.as_slice()), || {
                format!(
                    "interval {}: {} payload contains plaintext bytes {n:02x?}",
                    cfg.interval, msg.kind
                )
            })?;
        }
    }
    Ok(())
}

fn gaussian_sampler() -> Outcome {
    let start = Instant::now();
    let n = 1_000_000u64;
    let draw = |transform: Transform, seed: u8| -> Vec<f64> {
        (0..n)
            .map(|k| {
                let mut ctx = NoiseContext::new(MasterSeed([seed; 32]), [0xab; 16], k, 1.0);
                sample_round_noise(&mut ctx, transform, 1_000_000_000).value
            })
            .collect()
    };
    let mut bm = draw(Transform::BoxMuller, 1);
    let mean = bm.iter().sum::<f64>() / n as f64;
    let std = (bm.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    ensure(mean.abs() < 0.005, || format!("mean {mean}"))?;
    ensure((0.98..=1.02).contains(&std), || format!("std {std}"))?;
    let mut inv = draw(Transform::InverseCdf, 2);
    let d = ks_statistic(&mut bm, &mut inv);
    let crit = ks_critical(0.01, bm.len(), inv.len());
    ensure(d < crit, || format!("KS D = {d:.5} >= {crit:.5}"))?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!(
        "mean {mean:+.5}, std {std:.5}, KS D {d:.5} < {crit:.5}, {elapsed:.1?}"
    ))
}

fn communication_model() -> Outcome {
    let topo = Topology::default();
    let secs = |s: &str| -> Seconds {
        let (int, frac) = s.split_once('.').expect("decimal");
        let denom = 10u64.pow(frac.len() as u32);
        Seconds::new(
            int.parse::<u64>().unwrap() * denom + frac.parse::<u64>().unwrap(),
            denom,
        )
    };
    let cells: [(&str, u64, LinkModel, u64, &str); 8] = [
        ("id_sel", 16, topo.sm_agg, 45, "0.02880"),
        ("noise_total", 512, topo.sm_agg, 661, "0.42304"),
        ("noise", 512, topo.sm_agg, 661, "0.42304"),
        ("noisy_reading", 512, topo.sm_agg, 661, "0.42304"),
        ("aggregate", 512, topo.sm_agg, 661, "0.42304"),
        ("aggregate", 512, topo.agg_enb, 566, "0.09056"),
        ("aggregate", 512, topo.enb_pgw, 634, "0.10144"),
        ("aggregate", 512, topo.pgw_up, 578, "0.09248"),
    ];
    for (name, payload, link, frame, time) in cells {
        let f = frame_size(payload, &link);
        ensure(f == frame, || format!("{name} on {}: frame {f} != {frame}", link.stack))?;
        let t = transmission_time(f, link.per_meter_bandwidth_bps);
        ensure(t == secs(time), || {
            format!("{name} on {}: {t} s != {time} s", link.stack)
        })?;
    }
    ensure(topo.sm_agg.per_meter_bandwidth_bps * 20 == 250_000, || {
        "NAN share".into()
    })?;
    for link in [topo.agg_enb, topo.enb_pgw, topo.pgw_up] {
        ensure(link.per_meter_bandwidth_bps * 20 == 1_000_000, || "WAN share".into())?;
    }
    let bw = min_bandwidth(&[16, 512, 512, 512, 512], 20).map_err(|e| e.to_string())?;
    ensure(bw == 512 * 20, || format!("minimum bandwidth {bw} != 10240"))?;
    Ok(format!(
        "8 frame sizes and 8 times bit-exact, minimum bandwidth {bw} B for 20 meters"
    ))
}

fn privacy_and_timing() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(0xf022);
    let mut worst_gap = f64::INFINITY;
    for i in 0..1000 {
        let (rows, cols) = (rng.gen_range(1..12), rng.gen_range(1..12));
        let counts: Vec<Vec<u64>> = (0..rows)
            .map(|_| {
                (0..cols)
                    .map(|_| if rng.gen_bool(0.3) { 0 } else { rng.gen_range(0..100) })
                    .collect()
            })
            .collect();
        let joint = Histogram2D::from_counts(counts).map_err(|e| e.to_string())?;
        if joint.total == 0 {
            continue;
        }
        let hx = entropy(&joint.x_marginal()).map_err(|e| e.to_string())?;
        let hc = conditional_entropy(&joint).map_err(|e| e.to_string())?;
        ensure(hc >= 0.0 && hc <= hx + 1e-12, || {
            format!("histogram {i}: H(X|Y) {hc} outside [0, {hx}]")
        })?;
        if hx > 0.0 {
            let v = nce_from_joint(&joint).map_err(|e| e.to_string())?;
            ensure((0.0..=1.0).contains(&v), || format!("histogram {i}: NCE {v}"))?;
            worst_gap = worst_gap.min(hx - hc);
        }
        let len = rng.gen_range(2..400);
        let xs: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..5.0)).collect();
        let spread = rng.gen_range(0.0..10.0);
        let ys: Vec<f64> = xs.iter().map(|x| x + rng.gen_range(-spread..=spread)).collect();
        if let Ok(v) = nce(&xs, &ys, rng.gen_range(1..80)) {
            ensure((0.0..=1.0).contains(&v), || format!("series pair {i}: NCE {v}"))?;
        }
        let self_nce = nce(&xs, &xs, 64).map_err(|e| e.to_string())?;
        ensure(self_nce == 0.0, || format!("series {i}: NCE(X|X) = {self_nce}"))?;
    }

    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = RunConfig {
        out: out.path().to_path_buf(),
        ..RunConfig::default()
    };
    let sweep = cmd_privacy(&cfg).map_err(|e| format!("{e:#}"))?;
    let reference = [0.25216, 0.32217, 0.48160, 0.69743, 0.82740, 0.88500, 0.91025];
    for ((label, v), r) in sweep.iter().zip(reference) {
        println!("    sigma x {label:<4} NCE {v:.5}  (reference {r:.5})");
    }
    ensure(sweep.windows(2).all(|w| w[0].1 < w[1].1), || {
        format!("NCE not strictly increasing: {sweep:?}")
    })?;

    let data = Dataset::for_config(&cfg).map_err(|e| format!("{e:#}"))?;
    let noise = SeededNoise {
        master_seed: MasterSeed([9; 32]),
    };
    let readings = data.interval_readings(0);
    let sigma = data.calibration_sigma(96);
    let mut rows: Vec<TimingBreakdown> = Vec::new();
    for bits in [128u32, 256, 512, 1024, 2048] {
        let mut keygen = ChaCha20Rng::seed_from_u64(u64::from(bits));
        let dep = Deployment::generate(0, &data.ids, bits, &mut keygen).map_err(|e| e.to_string())?;
        let rc = RoundConfig::new(0, 0, data.ids.clone(), sigma, 1000, [1; 32]).map_err(|e| e.to_string())?;
        let b = benchmark_round(&rc, &dep, &readings, &noise, 5, &mut ChaCha20Rng::seed_from_u64(1))
            .map_err(|e| e.to_string())?;
        ensure(b.composition_holds(), || {
            format!("{bits}-bit: t_op is not the sum of its parts")
        })?;
        println!(
            "    {bits:>4}-bit  t_sm_sel {:.5}  t_sm {:.5}  t_agg {:.5}  t_up {:.5}  t_op {:.5} s",
            b.t_sm_sel, b.t_sm, b.t_agg, b.t_up, b.t_op
        );
        rows.push(b);
    }
    ensure(rows.windows(2).all(|w| w[0].t_op < w[1].t_op), || {
        "t_op not strictly increasing in key size".into()
    })?;
    let t1024 = rows[3].t_op;
    Ok(format!(
        "1000 fuzzed histograms bounded (min H(X) - H(X|Y) {worst_gap:.3e}), NCE(X|X) = 0, sweep strictly increasing {:.5} -> {:.5}, t_op increasing; 1024-bit t_op {t1024:.5} s (reference 2.21245 s, different hardware)",
        sweep[0].1,
        sweep[6].1
    ))
}

fn memory_model() -> Outcome {
    let unit = estimate_memory(&SizeTable::unit(), 1);
    let got = (unit.s_sm, unit.s_sm_sel, unit.s_agg, unit.s_up, unit.s_op);
    ensure(got == (9, 8, 5, 4, 26), || format!("unit sizes gave {got:?}"))?;
    let two = estimate_memory(&SizeTable::unit(), 2);
    ensure(two.s_agg - unit.s_agg == 3, || "aggregator term not linear in M".into())?;
    let real = estimate_memory(&SizeTable::for_key_bits(1024), 20);
    ensure(real.s_op < 1 << 30, || format!("{} B exceeds 1 GB", real.s_op))?;
    Ok(format!(
        "unit table (9, 8, 5, 4, 26), 1024-bit M=20 total {} B < 1 GB (reference measurement 50.34 MB)",
        real.s_op
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_smartagg");
    for out in ["first", "second"] {
        for cmd in ["run", "privacy", "comm"] {
            let o = Command::new(bin)
                .args([
                    cmd,
                    "--meters",
                    "10",
                    "--intervals",
                    "12",
                    "--key-bits",
                    "512",
                    "--seed",
                    "c0ffee",
                    "--out",
                    out,
                ])
                .current_dir(dir.path())
                .env_remove("SMARTAGG_CONFIG")
                .output()
                .map_err(|e| e.to_string())?;
            ensure(o.status.success(), || {
                format!("{cmd}: {}", String::from_utf8_lossy(&o.stderr))
            })?;
        }
    }
    let files = [
        "aggregates.csv",
        "transcript.csv",
        "deliveries.csv",
        "nce.csv",
        "comm.csv",
    ];
    let read = |d: &str, f: &str| fs::read(Path::new(dir.path()).join(d).join(f)).map_err(|e| format!("{d}/{f}: {e}"));
    for f in files {
        ensure(read("first", f)? == read("second", f)?, || {
            format!("{f} differs between invocations")
        })?;
    }
    Ok(format!(
        "{} output files byte-identical across two invocations",
        files.len()
    ))
}

fn report(id: u32, name: &str, outcome: Outcome, failures: &mut u32) {
    match outcome {
        Ok(detail) => println!("criterion {id} PASS {name}: {detail}"),
        Err(why) => {
            *failures += 1;
            println!("criterion {id} FAIL {name}: {why}");
        }
    }
}

fn main() {
    let mut failures = 0;
    report(1, "paillier correctness", paillier_correctness(), &mut failures);

    let grid = zero_sum_and_collusion();
    let (c2, c3) = match grid {
        Ok((check, elapsed)) => {
            let c2 = within(elapsed, Duration::from_secs(300)).map(|_| {
                format!(
                    "{} rounds exact over M in {{1,2,5,20,100}} x 3 sigma levels at 512 bits, {elapsed:.1?}",
                    check.rounds
                )
            });
            let c3 = ensure(check.perturbed_reports > 0, || "no perturbed report observed".into()).map(|_| {
                format!(
                    "{} non-designated reports decrypted by the utility, {} perturbed and none equal to the reading; no plaintext in transcripts",
                    check.collusion_reports, check.perturbed_reports
                )
            });
            (c2, c3)
        }
        Err(e) => (Err(e.clone()), Err(format!("not evaluated: {e}"))),
    };
    report(2, "zero-sum cancellation", c2, &mut failures);
    report(3, "collusion view", c3, &mut failures);
    report(4, "gaussian sampler", gaussian_sampler(), &mut failures);
    report(5, "communication model", communication_model(), &mut failures);
    report(6, "privacy metric and timing", privacy_and_timing(), &mut failures);
    report(7, "memory model", memory_model(), &mut failures);
    report(8, "determinism", determinism(), &mut failures);

    println!("{} of 8 criteria passed", 8 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
