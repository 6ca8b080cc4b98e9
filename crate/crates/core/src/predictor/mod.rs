//! One-step-ahead forecasts of per-user channel gain and edge backlog.
//!
//! Two interchangeable predictors implement [`StatePredictor`]: an online
//! LSTM (one model per user channel, one shared backlog model) and the
//! last-observation forecaster. Channel series are modelled in dB.

mod lstm;

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use lstm::{CellState, LstmParams, Sample, TrainOutcome};

use crate::environment::{db_to_linear, linear_to_db};
use crate::error::{Error, Result};

/// Forecast of the states a slot will see.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    /// Linear channel gain per user, strictly positive.
    pub channel: Vec<f64>,
    /// Edge backlog in cycles, nonnegative.
    pub backlog: f64,
}

pub trait StatePredictor {
    /// Records the states realized in the slot that just ended.
    fn observe(&mut self, channel_gains: &[f64], backlog: f64) -> Result<()>;

    /// Forecast for the next slot.
    fn predict(&self) -> Result<Forecast>;
}

/// Most recent value of a history.
pub fn last_observation(history: &[f64]) -> Result<f64> {
    history.last().copied().ok_or(Error::EmptyHistory)
}

#[derive(Debug, Clone, Default)]
pub struct LastObservationPredictor {
    channel: Option<Vec<f64>>,
    backlog: Option<f64>,
}

impl LastObservationPredictor {
    pub fn new() -> Self {
        Self::default()
    }
}

impl StatePredictor for LastObservationPredictor {
    fn observe(&mut self, channel_gains: &[f64], backlog: f64) -> Result<()> {
        self.channel = Some(channel_gains.to_vec());
        self.backlog = Some(backlog);
        Ok(())
    }

    fn predict(&self) -> Result<Forecast> {
        match (&self.channel, self.backlog) {
            (Some(c), Some(q)) => Ok(Forecast {
                channel: c.clone(),
                backlog: q,
            }),
            _ => Err(Error::EmptyHistory),
        }
    }
}

/// Training hyper-parameters shared by every online model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LstmConfig {
    /// Observation window H.
    pub window: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    /// Number of most recent (window, next) pairs in each per-slot update.
    pub replay: usize,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            window: 8,
            hidden: 16,
            // 1e-2 overshoots on a few percent of AR(1) series within 180 steps
            learning_rate: 5e-3,
            clip_norm: 5.0,
            replay: 1,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.hidden == 0 || self.replay == 0 {
            return Err(Error::Config("predictor window, hidden size and replay must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.clip_norm > 0.0) {
            return Err(Error::Config("learning rate must be >= 0 and clip norm > 0".into()));
        }
        Ok(())
    }
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / self.count as f64).sqrt()
        }
    }

    /// Normalization scale; falls back to 1 for a constant series.
    pub fn scale(&self) -> f64 {
        let s = self.std();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

/// An LSTM forecaster for one scalar series, trained once per observation.
#[derive(Debug, Clone)]
pub struct OnlineLstm {
    params: LstmParams,
    stats: RunningStats,
    history: VecDeque<f64>,
    cfg: LstmConfig,
    clipped_steps: u64,
    last_loss: Option<f64>,
}

impl OnlineLstm {
    pub fn new<R: Rng + ?Sized>(cfg: LstmConfig, rng: &mut R) -> Self {
        Self {
            params: LstmParams::init(cfg.hidden, rng),
            stats: RunningStats::default(),
            history: VecDeque::with_capacity(cfg.window + cfg.replay),
            cfg,
            clipped_steps: 0,
            last_loss: None,
        }
    }

    pub fn params(&self) -> &LstmParams {
        &self.params
    }

    pub fn history(&self) -> Vec<f64> {
        self.history.iter().copied().collect()
    }

    /// Number of updates whose gradient was clipped.
    pub fn clipped_steps(&self) -> u64 {
        self.clipped_steps
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    pub fn is_warm(&self) -> bool {
        self.history.len() >= self.cfg.window
    }

    fn sync_normalization(&mut self) {
        self.params.norm_mean = self.stats.mean();
        self.params.norm_scale = self.stats.scale();
    }

    /// Appends an observation and, once a full (window, next) pair exists,
    /// takes one gradient step on the most recent pairs.
    pub fn observe(&mut self, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(value));
        }
        self.stats.push(value);
        if self.history.len() == self.cfg.window + self.cfg.replay {
            self.history.pop_front();
        }
        self.history.push_back(value);
        self.sync_normalization();

        let h = self.cfg.window;
        let pairs = self.history.len().saturating_sub(h);
        if pairs == 0 {
            return Ok(());
        }
        let hist = self.history.make_contiguous();
        let batch: Vec<Sample> = (0..pairs)
            .map(|k| Sample {
                window: hist[k..k + h].to_vec(),
                next: hist[k + h],
            })
            .collect();
        let outcome = self.params.train_step(&batch, self.cfg.learning_rate, self.cfg.clip_norm)?;
        if outcome.clipped {
            self.clipped_steps += 1;
        }
        self.last_loss = Some(outcome.loss);
        Ok(())
    }

    /// Forecast of the next value. Before the window is full the last
    /// observation is returned and the flag is `false`.
    pub fn predict(&self) -> Result<(f64, bool)> {
        let last = *self.history.back().ok_or(Error::EmptyHistory)?;
        if !self.is_warm() {
            return Ok((last, false));
        }
        let start = self.history.len() - self.cfg.window;
        let window: Vec<f64> = self.history.iter().skip(start).copied().collect();
        let y = self.params.forward_window(&window)?;
        if y.is_finite() {
            Ok((y, true))
        } else {
            Ok((last, false))
        }
    }
}

/// LSTM-based channel and backlog forecaster.
#[derive(Debug, Clone)]
pub struct LstmPredictor {
    channel: Vec<OnlineLstm>,
    backlog: OnlineLstm,
}

impl LstmPredictor {
    pub fn new<R: Rng + ?Sized>(n_users: usize, cfg: LstmConfig, rng: &mut R) -> Self {
        let channel = (0..n_users).map(|_| OnlineLstm::new(cfg, rng)).collect();
        let backlog = OnlineLstm::new(cfg, rng);
        Self { channel, backlog }
    }

    pub fn channel_models(&self) -> &[OnlineLstm] {
        &self.channel
    }

    pub fn backlog_model(&self) -> &OnlineLstm {
        &self.backlog
    }

    /// Writes every model's parameters under a versioned header.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "aegis-predictor v1")?;
        writeln!(w, "users {}", self.channel.len())?;
        for m in self.channel.iter().chain(std::iter::once(&self.backlog)) {
            m.params.write_dump(w)?;
        }
        Ok(())
    }

    /// Restores parameters saved by [`LstmPredictor::save`] into a predictor
    /// with matching shape. Histories and normalization statistics restart.
    pub fn load_params<R: BufRead>(&mut self, r: &mut R) -> Result<()> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != "aegis-predictor v1" {
            return Err(Error::Dump(format!("bad predictor header {:?}", line.trim_end())));
        }
        line.clear();
        r.read_line(&mut line)?;
        let users: usize = line
            .trim_end()
            .strip_prefix("users ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Dump(format!("bad users line {:?}", line.trim_end())))?;
        if users != self.channel.len() {
            return Err(Error::Dump(format!("dump has {users} users, predictor has {}", self.channel.len())));
        }
        for m in self.channel.iter_mut().chain(std::iter::once(&mut self.backlog)) {
            let p = LstmParams::read_dump(r)?;
            if p.hidden() != m.cfg.hidden {
                return Err(Error::Dump("hidden size mismatch".into()));
            }
            m.params = p;
        }
        Ok(())
    }
}

impl StatePredictor for LstmPredictor {
    fn observe(&mut self, channel_gains: &[f64], backlog: f64) -> Result<()> {
        assert_eq!(channel_gains.len(), self.channel.len(), "one gain per user");
        for (m, &g) in self.channel.iter_mut().zip(channel_gains) {
            m.observe(linear_to_db(g))?;
        }
        self.backlog.observe(backlog)
    }

    fn predict(&self) -> Result<Forecast> {
        let channel = self
            .channel
            .iter()
            .map(|m| m.predict().map(|(db, _)| db_to_linear(db).max(f64::MIN_POSITIVE)))
            .collect::<Result<Vec<_>>>()?;
        let (q, _) = self.backlog.predict()?;
        Ok(Forecast {
            channel,
            backlog: q.max(0.0),
        })
    }
}
