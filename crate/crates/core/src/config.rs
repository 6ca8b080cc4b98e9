//! Experiment configuration, read from TOML.
//!
//! Values are written in human units (MHz, GHz, MB, dB) and converted to SI
//! when the simulation objects are built. Every field has a default, so an
//! empty file is a valid configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::PolicyTag;
use crate::environment::{RadioParams, TaskDistribution};
use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::model::{make_action_grid, ActionGrid, ResourcePools, UserProfile, CYCLES_PER_GIGA, HZ_PER_MHZ};
use crate::predictor::LstmConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Slots per episode.
    pub horizon: usize,
    /// Number of users at each sweep point.
    pub users: Vec<usize>,
    pub episodes: usize,
    pub policies: Vec<PolicyTag>,
    pub out_dir: Option<PathBuf>,
    pub pools: PoolsConfig,
    pub grid: GridConfig,
    pub user_defaults: UserDefaults,
    pub user_override: Vec<UserOverride>,
    pub tasks: TaskDistribution,
    pub activity: ActivityConfig,
    pub channel: ChannelConfig,
    pub backlog: BacklogConfig,
    pub predictor: LstmConfig,
    pub game: GameConfig,
    pub budget: BudgetConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2026,
            horizon: 180,
            users: vec![10, 20, 30, 40],
            episodes: 20,
            policies: PolicyTag::ALL.to_vec(),
            out_dir: None,
            pools: PoolsConfig::default(),
            grid: GridConfig::default(),
            user_defaults: UserDefaults::default(),
            user_override: Vec::new(),
            tasks: TaskDistribution::default(),
            activity: ActivityConfig::default(),
            channel: ChannelConfig::default(),
            backlog: BacklogConfig::default(),
            predictor: LstmConfig::default(),
            game: GameConfig::default(),
            budget: BudgetConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolsConfig {
    pub bandwidth_mhz: f64,
    pub compute_ghz: f64,
    pub slot_s: f64,
    /// Added to the residual compute in the queueing delay (cycles/s).
    pub compute_eps: f64,
    /// Added to the budget in the risk-regularization denominator.
    pub budget_eps: f64,
}

impl Default for PoolsConfig {
    fn default() -> Self {
        Self {
            bandwidth_mhz: 50.0,
            compute_ghz: 155.0,
            slot_s: 1.0,
            compute_eps: 1e-6,
            budget_eps: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub bandwidth_levels: usize,
    pub compute_levels: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            bandwidth_levels: 8,
            compute_levels: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UserDefaults {
    pub weight: f64,
    pub risk_sensitivity: f64,
    pub budget_cap: f64,
    pub recovery_rate: f64,
    /// Bandwidth cost coefficient times the bandwidth pool.
    pub bandwidth_cost_per_pool: f64,
    /// Compute cost coefficient times the compute pool.
    pub compute_cost_per_pool: f64,
    pub risk_weight: f64,
}

impl Default for UserDefaults {
    fn default() -> Self {
        Self {
            weight: 1.0,
            risk_sensitivity: 10.0,
            budget_cap: 1.0,
            recovery_rate: 0.05,
            bandwidth_cost_per_pool: 0.1,
            compute_cost_per_pool: 0.1,
            risk_weight: 0.5,
        }
    }
}

/// Per-user replacement of selected defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserOverride {
    pub id: usize,
    pub weight: Option<f64>,
    pub activity_prob: Option<f64>,
    pub risk_sensitivity: Option<f64>,
    pub budget_cap: Option<f64>,
    pub recovery_rate: Option<f64>,
    pub risk_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActivityConfig {
    /// Vehicle trace (`vehicle_id,date,community_area`); synthesized when absent.
    pub trace: Option<PathBuf>,
    pub region: Option<String>,
    pub days_in_month: u32,
    /// Range of the synthesized per-user activity probabilities.
    pub synth_range: [f64; 2],
}

impl Default for ActivityConfig {
    fn default() -> Self {
        Self {
            trace: None,
            region: None,
            days_in_month: 31,
            synth_range: [0.2, 0.9],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Per-user mean gains are drawn uniformly from this range (dB).
    pub mean_db_range: [f64; 2],
    pub ar_coeff: f64,
    pub innovation_std_db: f64,
    pub tx_power_w: f64,
    pub noise_w: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            mean_db_range: [-100.0, -90.0],
            ar_coeff: 0.9,
            innovation_std_db: 2.0,
            tx_power_w: 0.2,
            noise_w: 1e-13,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacklogConfig {
    pub initial_gcycles: f64,
    /// Background arrivals per slot are uniform on `[0, this · F_tot · τ]`.
    pub arrival_max_fraction: f64,
}

impl Default for BacklogConfig {
    fn default() -> Self {
        Self {
            initial_gcycles: 0.0,
            arrival_max_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetConfig {
    /// When set, rejected tasks do not consume budget. With `false`, a
    /// rejection is charged a full unit of risk, which keeps a continuously
    /// active user at zero budget indefinitely once it is rejected.
    pub exempt_rejected: bool,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self { exempt_rejected: true }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        // relative trace paths are resolved against the config file
        if let (Some(trace), Some(dir)) = (cfg.activity.trace.as_mut(), path.parent()) {
            if trace.is_relative() {
                *trace = dir.join(&*trace);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1 slot".into()));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if self.users.is_empty() || self.users.contains(&0) {
            return Err(Error::Config("users must list positive user counts".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("at least one policy is required".into()));
        }
        self.pools()?;
        self.grid()?;
        self.radio()?;
        self.tasks.validate()?;
        self.predictor.validate()?;
        self.game.validate()?;
        let [lo, hi] = self.activity.synth_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::Config(format!("activity range [{lo}, {hi}] is invalid")));
        }
        let [lo, hi] = self.channel.mean_db_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!("channel mean range [{lo}, {hi}] is invalid")));
        }
        if !(self.channel.ar_coeff.abs() < 1.0) || !(self.channel.innovation_std_db >= 0.0) {
            return Err(Error::Config("channel needs |ar_coeff| < 1 and innovation_std_db >= 0".into()));
        }
        if !(self.backlog.initial_gcycles >= 0.0 && self.backlog.arrival_max_fraction >= 0.0) {
            return Err(Error::Config("backlog settings must be nonnegative".into()));
        }
        let max_users = self.users.iter().copied().max().unwrap_or(0);
        for o in &self.user_override {
            if o.id >= max_users {
                return Err(Error::Config(format!("user_override id {} exceeds the largest user count", o.id)));
            }
        }
        for n in &self.users {
            // profiles validate their own ranges
            for u in self.user_profiles(&vec![0.5; *n])? {
                u.validate()?;
            }
        }
        Ok(())
    }

    pub fn pools(&self) -> Result<ResourcePools> {
        let mut pools = ResourcePools::new(self.pools.bandwidth_mhz * HZ_PER_MHZ, self.pools.compute_ghz * CYCLES_PER_GIGA)?;
        pools.slot_duration = self.pools.slot_s;
        pools.compute_eps = self.pools.compute_eps;
        pools.budget_eps = self.pools.budget_eps;
        pools.validate()?;
        Ok(pools)
    }

    pub fn grid(&self) -> Result<ActionGrid> {
        make_action_grid(&self.pools()?, self.grid.bandwidth_levels, self.grid.compute_levels)
    }

    pub fn radio(&self) -> Result<RadioParams> {
        RadioParams::new(self.channel.tx_power_w, self.channel.noise_w)
    }

    /// User profiles for the given activity probabilities, overrides applied.
    pub fn user_profiles(&self, activity: &[f64]) -> Result<Vec<UserProfile>> {
        let pools = self.pools()?;
        let d = &self.user_defaults;
        let mut users: Vec<UserProfile> = activity
            .iter()
            .enumerate()
            .map(|(id, &p)| UserProfile {
                id,
                weight: d.weight,
                activity_prob: p,
                risk_sensitivity: d.risk_sensitivity,
                budget_cap: d.budget_cap,
                recovery_rate: d.recovery_rate,
                bandwidth_cost: d.bandwidth_cost_per_pool / pools.total_bandwidth,
                compute_cost: d.compute_cost_per_pool / pools.total_compute,
                risk_weight: d.risk_weight,
            })
            .collect();
        for o in &self.user_override {
            let Some(u) = users.get_mut(o.id) else { continue };
            u.weight = o.weight.unwrap_or(u.weight);
            u.activity_prob = o.activity_prob.unwrap_or(u.activity_prob);
            u.risk_sensitivity = o.risk_sensitivity.unwrap_or(u.risk_sensitivity);
            u.budget_cap = o.budget_cap.unwrap_or(u.budget_cap);
            u.recovery_rate = o.recovery_rate.unwrap_or(u.recovery_rate);
            u.risk_weight = o.risk_weight.unwrap_or(u.risk_weight);
        }
        Ok(users)
    }

    /// SHA-256 of the configuration serialized as JSON with sorted keys.
    pub fn canonical_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let bytes = serde_json::to_vec(&value).expect("value serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
