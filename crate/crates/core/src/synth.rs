//! Synthetic machine fleets.
//!
//! Each machine draws a per-alarm Poisson rate, places a fixed number of
//! work orders at random (well separated) days and inflates every alarm rate
//! by `1 + degradation_gain` over a random 3..=10 day lead-in ending on each
//! work-order day. With `degradation_gain = 0` alarms carry no information
//! about the labels.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded per machine with a
//! splitmix64 mix of `(seed, machine_index)`, so output is identical across
//! platforms, runs and thread counts.

use chrono::NaiveDate;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{DailyObservation, MachineSeries, N_ALARMS};

pub const DEFAULT_RATE_RANGE: (f64, f64) = (0.01, 0.5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub n_machines: usize,
    pub n_days: usize,
    pub positive_rate: f64,
    /// Shared per-alarm Poisson means. When absent every machine draws its
    /// own from a log-uniform range over [`DEFAULT_RATE_RANGE`].
    pub base_alarm_rates: Option<Vec<f64>>,
    pub degradation_gain: f64,
    /// Inclusive range of the pre-failure lead-in length, in days.
    pub lead_days: (usize, usize),
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig {
            n_machines: 23,
            n_days: 1000,
            positive_rate: 0.013,
            base_alarm_rates: None,
            degradation_gain: 3.0,
            lead_days: (3, 10),
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid fleet config: {0}")]
    InvalidConfig(String),
}

impl FleetConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_machines == 0 {
            return bad("n_machines must be positive".into());
        }
        if self.n_days == 0 {
            return bad("n_days must be positive".into());
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return bad(format!("positive_rate {} not in (0,1)", self.positive_rate));
        }
        if !(self.degradation_gain >= 0.0 && self.degradation_gain.is_finite()) {
            return bad(format!("degradation_gain {} must be finite and >= 0", self.degradation_gain));
        }
        let (lo, hi) = self.lead_days;
        if lo == 0 || lo > hi {
            return bad(format!("lead_days ({lo}, {hi}) must satisfy 1 <= lo <= hi"));
        }
        if let Some(rates) = &self.base_alarm_rates {
            if rates.len() != N_ALARMS {
                return bad(format!("base_alarm_rates has {} entries, expected {N_ALARMS}", rates.len()));
            }
            if rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
                return bad("base_alarm_rates must be finite and >= 0".into());
            }
        }
        let events = self.events_per_machine();
        if events > 0 && (events - 1) * self.event_gap() + 1 > self.n_days {
            return bad(format!("{events} work orders do not fit in {} days", self.n_days));
        }
        Ok(())
    }

    /// Work orders per machine: the positive rate applied to the horizon.
    pub fn events_per_machine(&self) -> usize {
        (self.positive_rate * self.n_days as f64).round() as usize
    }

    /// Minimum spacing between work orders so lead-ins never overlap.
    fn event_gap(&self) -> usize {
        self.lead_days.1 + 1
    }
}

/// Per-machine generation facts recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineManifest {
    pub machine_id: String,
    pub seed: u64,
    pub alarm_rates: Vec<f64>,
    pub work_order_days: Vec<usize>,
    pub lead_days: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetManifest {
    pub config: FleetConfig,
    pub prng: String,
    pub machines: Vec<MachineManifest>,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `index` under `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}

pub fn machine_id(index: usize) -> String {
    format!("M{:03}", index + 1)
}

pub fn generate_machine(cfg: &FleetConfig, machine_index: usize) -> Result<MachineSeries, SynthError> {
    generate_machine_with_manifest(cfg, machine_index).map(|(s, _)| s)
}

pub fn generate_machine_with_manifest(
    cfg: &FleetConfig,
    machine_index: usize,
) -> Result<(MachineSeries, MachineManifest), SynthError> {
    cfg.validate()?;
    if machine_index >= cfg.n_machines {
        return Err(SynthError::InvalidConfig(format!(
            "machine index {machine_index} out of range for {} machines",
            cfg.n_machines
        )));
    }
    let seed = derive_seed(cfg.seed, machine_index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let rates: Vec<f64> = match &cfg.base_alarm_rates {
        Some(r) => r.clone(),
        None => {
            let (lo, hi) = (DEFAULT_RATE_RANGE.0.ln(), DEFAULT_RATE_RANGE.1.ln());
            (0..N_ALARMS).map(|_| rng.random_range(lo..hi).exp()).collect()
        }
    };

    // Sorted, gap-separated event days: pick k distinct slots in the
    // compressed line and stretch them back out.
    let k = cfg.events_per_machine();
    let gap = cfg.event_gap();
    let events: Vec<usize> = if k == 0 {
        Vec::new()
    } else {
        let slots = cfg.n_days - (k - 1) * (gap - 1);
        let mut picked = index::sample(&mut rng, slots, k).into_vec();
        picked.sort_unstable();
        picked.iter().enumerate().map(|(i, &v)| v + i * (gap - 1)).collect()
    };
    let leads: Vec<usize> = events.iter().map(|_| rng.random_range(cfg.lead_days.0..=cfg.lead_days.1)).collect();

    let mut degraded = vec![false; cfg.n_days];
    for (&day, &lead) in events.iter().zip(&leads) {
        for flag in &mut degraded[(day + 1).saturating_sub(lead)..=day] {
            *flag = true;
        }
    }

    let normal: Vec<Option<Poisson<f64>>> = rates.iter().map(|&r| poisson(r)).collect();
    let inflated: Vec<Option<Poisson<f64>>> =
        rates.iter().map(|&r| poisson(r * (1.0 + cfg.degradation_gain))).collect();

    let mut days = Vec::with_capacity(cfg.n_days);
    for &hot in &degraded {
        let dists = if hot { &inflated } else { &normal };
        let mut counts = [0u32; N_ALARMS];
        for (c, dist) in counts.iter_mut().zip(dists) {
            if let Some(dist) = dist {
                *c = dist.sample(&mut rng) as u32;
            }
        }
        days.push(DailyObservation { alarm_counts: counts, label: false, filled: false });
    }
    for &day in &events {
        days[day].label = true;
    }

    let id = machine_id(machine_index);
    let series = MachineSeries { machine_id: id.clone(), start_date: cfg.start_date, days };
    let manifest = MachineManifest { machine_id: id, seed, alarm_rates: rates, work_order_days: events, lead_days: leads };
    Ok((series, manifest))
}

fn poisson(rate: f64) -> Option<Poisson<f64>> {
    (rate > 0.0).then(|| Poisson::new(rate).expect("positive finite rate"))
}

pub fn generate_fleet(cfg: &FleetConfig) -> Result<Vec<MachineSeries>, SynthError> {
    generate_fleet_with_manifest(cfg).map(|(s, _)| s)
}

/// Generates all machines, in parallel on the current rayon pool. Output
/// order is machine index order regardless of scheduling.
pub fn generate_fleet_with_manifest(cfg: &FleetConfig) -> Result<(Vec<MachineSeries>, FleetManifest), SynthError> {
    cfg.validate()?;
    let results: Vec<_> = (0..cfg.n_machines)
        .into_par_iter()
        .map(|i| generate_machine_with_manifest(cfg, i))
        .collect::<Result<_, _>>()?;
    let (series, machines) = results.into_iter().unzip();
    let manifest = FleetManifest {
        config: cfg.clone(),
        prng: "ChaCha8 (rand_chacha 0.9), per-machine seed = splitmix64(seed ^ splitmix64(index + 1))".into(),
        machines,
    };
    Ok((series, manifest))
}
