use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use super::TimeSeries;
use crate::error::{Error, Result};
use crate::JobRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// `1 + sin(2πt/24)`: a clean daily cycle in [0, 2].
    Sine,
    /// Daily cycle on a slowly drifting regime level plus bounded noise,
    /// clipped at zero.
    DiurnalNoise,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Sine => "sine",
            Profile::DiurnalNoise => "diurnal-noise",
        })
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(Profile::Sine),
            "diurnal-noise" | "diurnal" => Ok(Profile::DiurnalNoise),
            other => Err(Error::config(format!(
                "unknown profile `{other}` (expected sine or diurnal-noise)"
            ))),
        }
    }
}

/// Base rating that the synthetic profiles are scaled to, in watts.
const RATED: f64 = 1000.0;

/// Deterministic hourly series starting 2020-01-01T00:00:00.
pub fn synthesize_series(n: usize, seed: u64, profile: Profile) -> Result<TimeSeries> {
    if n == 0 {
        return Err(Error::config("synthetic series needs n ≥ 1"));
    }
    let values = match profile {
        Profile::Sine => (0..n).map(|t| 1.0 + (2.0 * PI * t as f64 / 24.0).sin()).collect(),
        Profile::DiurnalNoise => diurnal(n, seed),
    };
    let start = NaiveDate::from_ymd_opt(2020, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start date");
    TimeSeries::hourly(start, values)
}

fn diurnal(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = JobRng::seed_from_u64(seed);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let step = Normal::new(0.0, 0.05).expect("valid std");
    // AR(1) regime level, mean-reverting toward 0.5 with a slow time constant
    let mut level: f64 = 0.5;
    (0..n)
        .map(|t| {
            level += 0.02 * (0.5 - level) + 0.1 * step.sample(&mut rng);
            level = level.clamp(0.1, 0.9);
            let cycle = 0.35 * (2.0 * PI * t as f64 / 24.0 + phase).sin();
            let noise: f64 = rng.gen_range(-0.05..0.05);
            (RATED * (level + cycle * level + noise)).max(0.0)
        })
        .collect()
}
