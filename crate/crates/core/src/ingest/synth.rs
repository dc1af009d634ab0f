use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Reading, ReadingSeries, DEFAULT_INTERVAL_SECONDS};

/// Shape of the synthetic residential day. Energies are kWh per interval,
/// times are hours of the day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileParams {
    pub base_kwh: f64,
    pub morning_kwh: f64,
    pub morning_hour: f64,
    pub morning_width_h: f64,
    pub evening_kwh: f64,
    pub evening_hour: f64,
    pub evening_width_h: f64,
    pub jitter_sigma: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self {
            base_kwh: 0.08,
            morning_kwh: 0.22,
            morning_hour: 7.5,
            morning_width_h: 1.0,
            evening_kwh: 0.40,
            evening_hour: 19.5,
            evening_width_h: 1.75,
            jitter_sigma: 0.04,
        }
    }
}

fn bump(hour: f64, centre: f64, width: f64) -> f64 {
    let d = (hour - centre).rem_euclid(24.0);
    let d = d.min(24.0 - d);
    (-0.5 * (d / width).powi(2)).exp()
}

/// `meters` series of `intervals` readings starting at interval 0, rounded to
/// watt-hours. Pure in its arguments.
pub fn synthesize_readings(meters: usize, intervals: usize, seed: u64, p: &ProfileParams) -> Vec<ReadingSeries> {
    let per_day = 86_400 / DEFAULT_INTERVAL_SECONDS;
    (0..meters)
        .map(|k| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let size = rng.gen_range(0.6..1.4);
            let shift = rng.gen_range(-0.75..0.75);
            let jitter = Normal::new(0.0, p.jitter_sigma.max(0.0)).expect("finite sigma");
            let readings = (0..intervals as u64)
                .map(|i| {
                    let hour = (i % per_day) as f64 * 24.0 / per_day as f64;
                    let shape = p.base_kwh
                        + p.morning_kwh * bump(hour, p.morning_hour + shift, p.morning_width_h)
                        + p.evening_kwh * bump(hour, p.evening_hour + shift, p.evening_width_h);
                    let v = (size * shape + jitter.sample(&mut rng)).max(0.0);
                    Reading {
                        interval: i,
                        active_kwh: (v * 1000.0).round() / 1000.0,
                        reactive_kvarh: Some((0.2 * v * 1000.0).round() / 1000.0),
                    }
                })
                .collect();
            ReadingSeries {
                meter_id: format!("SM{:04}", k + 1),
                interval_seconds: DEFAULT_INTERVAL_SECONDS,
                readings,
            }
        })
        .collect()
}
