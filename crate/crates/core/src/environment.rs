//! Stochastic world model: user activation, task draws, Gauss-Markov
//! shadowing channels, SINR, edge backlog, and activity-trace ingestion.

use std::collections::{HashMap, HashSet};
use std::io::Read;

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{ResourcePools, TaskSpec, BITS_PER_MB, CYCLES_PER_GIGA};

/// Linear gain from decibels.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(g: f64) -> f64 {
    10.0 * g.log10()
}

/// Per-user AR(1) shadowing process in the dB domain:
/// `x <- μ + φ (x - μ) + N(0, σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProcess {
    mean_db: Vec<f64>,
    ar_coeff: f64,
    innovation_std_db: f64,
    state_db: Vec<f64>,
}

impl ChannelProcess {
    /// Starts every user at its mean gain.
    pub fn new(mean_db: Vec<f64>, ar_coeff: f64, innovation_std_db: f64) -> Result<Self> {
        if !(ar_coeff.abs() < 1.0) {
            return Err(invalid("channel process", format!("|φ| = {} must be < 1", ar_coeff.abs())));
        }
        if !(innovation_std_db >= 0.0 && innovation_std_db.is_finite()) {
            return Err(invalid("channel process", "innovation std must be nonnegative"));
        }
        if mean_db.iter().any(|m| !m.is_finite()) {
            return Err(invalid("channel process", "mean gains must be finite"));
        }
        Ok(Self {
            state_db: mean_db.clone(),
            mean_db,
            ar_coeff,
            innovation_std_db,
        })
    }

    /// Redraws the state from the stationary distribution `N(μ, σ²/(1-φ²))`.
    pub fn init_stationary<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let sd = self.stationary_std_db();
        if sd == 0.0 {
            self.state_db.clone_from(&self.mean_db);
            return;
        }
        let normal = Normal::new(0.0, sd).expect("finite std");
        for (x, &mu) in self.state_db.iter_mut().zip(&self.mean_db) {
            *x = mu + normal.sample(rng);
        }
    }

    pub fn stationary_std_db(&self) -> f64 {
        self.innovation_std_db / (1.0 - self.ar_coeff * self.ar_coeff).sqrt()
    }

    /// Advances one slot and returns the new linear gains.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let normal = Normal::new(0.0, self.innovation_std_db).expect("validated std");
        for (x, &mu) in self.state_db.iter_mut().zip(&self.mean_db) {
            let noise = if self.innovation_std_db > 0.0 {
                normal.sample(rng)
            } else {
                0.0
            };
            *x = mu + self.ar_coeff * (*x - mu) + noise;
        }
        self.gains()
    }

    pub fn state_db(&self) -> &[f64] {
        &self.state_db
    }

    pub fn gains(&self) -> Vec<f64> {
        self.state_db.iter().map(|&x| db_to_linear(x)).collect()
    }
}

/// Transmit and noise power of the uplink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub tx_power_w: f64,
    pub noise_w: f64,
}

impl RadioParams {
    pub fn new(tx_power_w: f64, noise_w: f64) -> Result<Self> {
        if !(tx_power_w > 0.0 && noise_w > 0.0 && tx_power_w.is_finite() && noise_w.is_finite()) {
            return Err(invalid("radio parameters", "powers must be strictly positive"));
        }
        Ok(Self { tx_power_w, noise_w })
    }
}

/// `P g / σ²`; independent of the allocated bandwidth.
pub fn compute_sinr(gain: f64, radio: &RadioParams) -> f64 {
    radio.tx_power_w * gain / radio.noise_w
}

/// Background edge workload.
#[derive(Debug, Clone, PartialEq)]
pub struct BacklogProcess {
    backlog: f64,
    arrival_max: f64,
}

impl BacklogProcess {
    /// `arrival_max` bounds the uniform background arrival per slot, in cycles.
    pub fn new(initial_backlog: f64, arrival_max: f64) -> Result<Self> {
        if !(initial_backlog >= 0.0 && arrival_max >= 0.0 && arrival_max.is_finite()) {
            return Err(invalid("backlog process", "backlog and arrival bound must be nonnegative"));
        }
        Ok(Self {
            backlog: initial_backlog,
            arrival_max,
        })
    }

    pub fn backlog(&self) -> f64 {
        self.backlog
    }

    pub fn draw_arrival<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.arrival_max == 0.0 {
            0.0
        } else {
            rng.random_range(0.0..self.arrival_max)
        }
    }

    /// `Q <- max(0, Q + A - (F_tot - Σf) τ)` with an explicit arrival.
    pub fn step_with_arrival(&mut self, arrival: f64, sum_compute: f64, pools: &ResourcePools) -> f64 {
        let residual = (pools.total_compute - sum_compute).max(0.0);
        self.backlog = (self.backlog + arrival - residual * pools.slot_duration).max(0.0);
        self.backlog
    }

    /// Draws the background arrival and advances one slot.
    pub fn step<R: Rng + ?Sized>(&mut self, sum_compute: f64, pools: &ResourcePools, rng: &mut R) -> f64 {
        let arrival = self.draw_arrival(rng);
        self.step_with_arrival(arrival, sum_compute, pools)
    }
}

/// Uniform task-tuple generator. Ranges are in configuration units
/// (MB, giga-cycles, seconds) and converted on every draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDistribution {
    pub data_mb: [f64; 2],
    pub workload_gcycles: [f64; 2],
    pub deadline_s: [f64; 2],
}

impl Default for TaskDistribution {
    fn default() -> Self {
        Self {
            data_mb: [0.12, 0.90],
            workload_gcycles: [0.08, 0.95],
            deadline_s: [0.28, 0.82],
        }
    }
}

impl TaskDistribution {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("data size", self.data_mb),
            ("workload", self.workload_gcycles),
            ("deadline", self.deadline_s),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Config(format!("task {name} range [{lo}, {hi}] is invalid")));
            }
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, weight: f64, rng: &mut R) -> TaskSpec {
        TaskSpec {
            data_bits: uniform(self.data_mb, rng) * BITS_PER_MB,
            workload_cycles: uniform(self.workload_gcycles, rng) * CYCLES_PER_GIGA,
            deadline_s: uniform(self.deadline_s, rng),
            weight,
        }
    }
}

fn uniform<R: Rng + ?Sized>([lo, hi]: [f64; 2], rng: &mut R) -> f64 {
    if lo == hi {
        lo
    } else {
        Uniform::new_inclusive(lo, hi).expect("validated range").sample(rng)
    }
}

/// Independent Bernoulli activation per user.
pub fn draw_activation<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Vec<bool> {
    probs
        .iter()
        .map(|&p| Bernoulli::new(p.clamp(0.0, 1.0)).expect("clamped").sample(rng))
        .collect()
}

/// Activity probabilities drawn i.i.d. uniform on `range`.
pub fn synthesize_activity_probabilities<R: Rng + ?Sized>(n_users: usize, range: [f64; 2], rng: &mut R) -> Vec<f64> {
    (0..n_users).map(|_| uniform_closed(range, rng)).collect()
}

fn uniform_closed<R: Rng + ?Sized>([lo, hi]: [f64; 2], rng: &mut R) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    vehicle_id: String,
    date: String,
    community_area: String,
}

/// Activity probabilities from a `vehicle_id,date,community_area` trace.
///
/// Vehicles map to users in order of first appearance anywhere in the trace.
/// A user's probability is the number of distinct dates on which its vehicle
/// appears in `target_region` (any region when `None`) divided by
/// `days_in_month`, clamped to `[0, 1]`.
pub fn load_activity_probabilities<R: Read>(
    trace: R,
    n_users: usize,
    days_in_month: u32,
    target_region: Option<&str>,
) -> Result<Vec<f64>> {
    if days_in_month == 0 {
        return Err(Error::Config("days_in_month must be positive".into()));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(trace);
    let headers = reader.headers()?.clone();
    for col in ["vehicle_id", "date", "community_area"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::TraceParse {
                row: 1,
                reason: format!("missing column {col}"),
            });
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut days: HashMap<String, HashSet<NaiveDate>> = HashMap::new();
    for (idx, rec) in reader.deserialize::<TraceRow>().enumerate() {
        // header is row 1
        let row = idx + 2;
        let rec = rec.map_err(|e| Error::TraceParse {
            row,
            reason: e.to_string(),
        })?;
        if rec.vehicle_id.is_empty() {
            return Err(Error::TraceParse {
                row,
                reason: "empty vehicle id".into(),
            });
        }
        let date = NaiveDate::parse_from_str(&rec.date, "%Y-%m-%d").map_err(|e| Error::TraceParse {
            row,
            reason: format!("bad date {:?}: {e}", rec.date),
        })?;
        let entry = days.entry(rec.vehicle_id.clone()).or_insert_with(|| {
            order.push(rec.vehicle_id.clone());
            HashSet::new()
        });
        if target_region.is_none_or(|r| r == rec.community_area) {
            entry.insert(date);
        }
    }

    if order.len() < n_users {
        return Err(Error::Config(format!(
            "trace has {} vehicles but {n_users} users were requested",
            order.len()
        )));
    }
    Ok(order
        .iter()
        .take(n_users)
        .map(|v| (days[v].len() as f64 / f64::from(days_in_month)).clamp(0.0, 1.0))
        .collect())
}
