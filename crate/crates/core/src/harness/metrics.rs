//! Episode metrics and their aggregation across episodes.

use serde::{Deserialize, Serialize};

use crate::model::EpisodeLog;

/// A ratio-type metric together with a flag set when its denominator was empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub empty: bool,
}

fn active_pairs(log: &EpisodeLog) -> impl Iterator<Item = (usize, usize)> + '_ {
    log.slots
        .iter()
        .enumerate()
        .flat_map(|(t, s)| s.active.iter().enumerate().filter(|(_, a)| **a).map(move |(i, _)| (t, i)))
}

/// Timely inference ratio: timely active tasks over active tasks.
/// An episode without active tasks reports 1.0 with the empty flag.
pub fn metric_tir(log: &EpisodeLog) -> Metric {
    let (mut hits, mut total) = (0usize, 0usize);
    for (t, i) in active_pairs(log) {
        total += 1;
        hits += usize::from(log.slots[t].timely[i]);
    }
    if total == 0 {
        Metric { value: 1.0, empty: true }
    } else {
        Metric {
            value: hits as f64 / total as f64,
            empty: false,
        }
    }
}

/// Average predicted risk at the chosen profiles over active (user, slot) pairs.
/// An episode without active tasks reports 0 with the empty flag.
pub fn metric_avr(log: &EpisodeLog) -> Metric {
    let (mut sum, mut total) = (0.0, 0usize);
    for (t, i) in active_pairs(log) {
        total += 1;
        sum += log.slots[t].predicted_risk[i];
    }
    if total == 0 {
        Metric { value: 0.0, empty: true }
    } else {
        Metric {
            value: sum / total as f64,
            empty: false,
        }
    }
}

/// Lengths of every maximal run of consecutive deadline failures, per user in
/// time order. A run ends at a timely slot or an inactive slot.
pub fn violation_runs(log: &EpisodeLog) -> Vec<usize> {
    let n = log.users.len();
    let mut runs = Vec::new();
    for i in 0..n {
        let mut current = 0usize;
        for s in &log.slots {
            if s.active[i] && s.timely[i] == 0 {
                current += 1;
            } else if current > 0 {
                runs.push(current);
                current = 0;
            }
        }
        if current > 0 {
            runs.push(current);
        }
    }
    runs
}

/// Deadline-violation burst length: mean length over all failure runs, 0 without runs.
pub fn metric_dvbl(log: &EpisodeLog) -> f64 {
    let runs = violation_runs(log);
    if runs.is_empty() {
        0.0
    } else {
        runs.iter().sum::<usize>() as f64 / runs.len() as f64
    }
}

/// Average end-to-end delay of admitted tasks. Reports 0 with the empty flag
/// when nothing was admitted.
pub fn metric_aed(log: &EpisodeLog) -> Metric {
    let (mut sum, mut total) = (0.0, 0usize);
    for (t, i) in active_pairs(log) {
        let s = &log.slots[t];
        if !s.profile[i].is_null() && s.realized_delay[i].is_finite() {
            sum += s.realized_delay[i];
            total += 1;
        }
    }
    if total == 0 {
        Metric { value: 0.0, empty: true }
    } else {
        Metric {
            value: sum / total as f64,
            empty: false,
        }
    }
}

/// Average per-slot potential of the chosen profiles.
pub fn metric_asu(log: &EpisodeLog) -> f64 {
    if log.slots.is_empty() {
        return 0.0;
    }
    log.slots.iter().map(|s| s.potential).sum::<f64>() / log.slots.len() as f64
}

/// Average per-slot improvement steps.
pub fn metric_cr(log: &EpisodeLog) -> f64 {
    if log.slots.is_empty() {
        return 0.0;
    }
    log.slots.iter().map(|s| s.iterations as f64).sum::<f64>() / log.slots.len() as f64
}

/// All six metrics of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub tir: Metric,
    pub avr: Metric,
    pub dvbl: f64,
    pub aed: Metric,
    pub asu: f64,
    pub cr: f64,
}

impl EpisodeMetrics {
    pub fn of(log: &EpisodeLog) -> Self {
        Self {
            tir: metric_tir(log),
            avr: metric_avr(log),
            dvbl: metric_dvbl(log),
            aed: metric_aed(log),
            asu: metric_asu(log),
            cr: metric_cr(log),
        }
    }

    /// Values in the column order TIR, AVR, DVBL, AED, ASU, CR.
    pub fn values(&self) -> [f64; 6] {
        [self.tir.value, self.avr.value, self.dvbl, self.aed.value, self.asu, self.cr]
    }
}

pub const METRIC_NAMES: [&str; 6] = ["tir", "avr", "dvbl", "aed", "asu", "cr"];

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One aggregated row per (policy, user count).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub policy: String,
    pub n_users: usize,
    pub episodes: usize,
    /// `(mean, std)` in the order of [`METRIC_NAMES`].
    pub stats: [(f64, f64); 6],
    /// Episodes whose TIR/AVR/AED denominators were empty.
    pub empty_episodes: usize,
}

impl MetricsRow {
    pub fn aggregate(policy: &str, n_users: usize, episodes: &[EpisodeMetrics]) -> Self {
        let mut stats = [(0.0, 0.0); 6];
        for (k, s) in stats.iter_mut().enumerate() {
            let xs: Vec<f64> = episodes.iter().map(|m| m.values()[k]).collect();
            *s = mean_std(&xs);
        }
        Self {
            policy: policy.to_string(),
            n_users,
            episodes: episodes.len(),
            stats,
            empty_episodes: episodes.iter().filter(|m| m.tir.empty || m.aed.empty).count(),
        }
    }

    pub fn mean(&self, metric: &str) -> f64 {
        let k = METRIC_NAMES.iter().position(|m| *m == metric).expect("known metric name");
        self.stats[k].0
    }
}
