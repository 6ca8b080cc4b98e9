//! Domain types shared by every policy: users, tasks, resource pools,
//! actions on the discrete allocation grid, and the per-slot state.
//!
//! Internal units are bits, Hz, cycles, cycles/s and seconds. Conversion from
//! the MB/MHz/GHz units used in configuration files happens once, through the
//! constants below.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Bits in one megabyte (2^20 bytes).
pub const BITS_PER_MB: f64 = 8.0 * 1_048_576.0;
pub const HZ_PER_MHZ: f64 = 1e6;
/// Cycles (or cycles/s) per giga-cycle (or GHz).
pub const CYCLES_PER_GIGA: f64 = 1e9;

/// Relative slack applied when comparing aggregate allocations to pool
/// totals, so that sums of grid levels that equal the pool exactly are not
/// rejected because of rounding.
pub const POOL_TOLERANCE: f64 = 1e-9;

/// Static per-user parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: usize,
    pub weight: f64,
    pub activity_prob: f64,
    /// κ, in 1/s.
    pub risk_sensitivity: f64,
    pub budget_cap: f64,
    pub recovery_rate: f64,
    /// α, cost per Hz.
    pub bandwidth_cost: f64,
    /// β, cost per cycle/s.
    pub compute_cost: f64,
    /// γ, risk regularization weight.
    pub risk_weight: f64,
}

impl UserProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(invalid("user profile", format!("weight {} must be positive", self.weight)));
        }
        if !(0.0..=1.0).contains(&self.activity_prob) {
            return Err(invalid(
                "user profile",
                format!("activity probability {} outside [0,1]", self.activity_prob),
            ));
        }
        if !(self.risk_sensitivity > 0.0 && self.risk_sensitivity.is_finite()) {
            return Err(invalid(
                "user profile",
                format!("risk sensitivity {} must be positive", self.risk_sensitivity),
            ));
        }
        if !(self.budget_cap > 0.0 && self.budget_cap <= 1.0) {
            return Err(invalid(
                "user profile",
                format!("budget cap {} outside (0,1]", self.budget_cap),
            ));
        }
        for (name, v) in [
            ("recovery rate", self.recovery_rate),
            ("bandwidth cost", self.bandwidth_cost),
            ("compute cost", self.compute_cost),
            ("risk weight", self.risk_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid("user profile", format!("{name} {v} must be nonnegative")));
            }
        }
        Ok(())
    }
}

/// One inference task: input size, workload, relative deadline and weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub data_bits: f64,
    pub workload_cycles: f64,
    pub deadline_s: f64,
    pub weight: f64,
}

impl TaskSpec {
    pub fn new(data_bits: f64, workload_cycles: f64, deadline_s: f64, weight: f64) -> Result<Self> {
        let task = Self {
            data_bits,
            workload_cycles,
            deadline_s,
            weight,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.data_bits) || !ok(self.workload_cycles) || !ok(self.deadline_s) {
            return Err(invalid("task", format!("{self:?} has a non-positive field")));
        }
        if !ok(self.weight) {
            return Err(invalid("task", format!("weight {} must be positive", self.weight)));
        }
        Ok(())
    }
}

/// Shared edge resources and numerical-stability constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourcePools {
    /// Total uplink bandwidth, Hz.
    pub total_bandwidth: f64,
    /// Total edge compute, cycles/s.
    pub total_compute: f64,
    /// Slot length τ, seconds.
    pub slot_duration: f64,
    /// ε_f in the queueing-delay denominator, cycles/s.
    pub compute_eps: f64,
    /// ε in the risk-regularization denominator.
    pub budget_eps: f64,
}

impl ResourcePools {
    pub fn new(total_bandwidth: f64, total_compute: f64) -> Result<Self> {
        let pools = Self {
            total_bandwidth,
            total_compute,
            slot_duration: 1.0,
            compute_eps: 1e-6,
            budget_eps: 1e-6,
        };
        pools.validate()?;
        Ok(pools)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("total bandwidth", self.total_bandwidth),
            ("total compute", self.total_compute),
            ("slot duration", self.slot_duration),
            ("compute epsilon", self.compute_eps),
            ("budget epsilon", self.budget_eps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid("resource pools", format!("{name} {v} must be positive")));
            }
        }
        Ok(())
    }

    pub fn bandwidth_fits(&self, sum_bandwidth: f64) -> bool {
        sum_bandwidth <= self.total_bandwidth * (1.0 + POOL_TOLERANCE)
    }

    pub fn compute_fits(&self, sum_compute: f64) -> bool {
        sum_compute <= self.total_compute * (1.0 + POOL_TOLERANCE)
    }
}

/// Bandwidth/compute allocation of one user. `(0, 0)` is task rejection.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub bandwidth: f64,
    pub compute: f64,
}

impl Action {
    pub const NULL: Action = Action {
        bandwidth: 0.0,
        compute: 0.0,
    };

    /// Builds an action, rejecting mixed allocations where exactly one of the
    /// two resources is zero.
    pub fn new(bandwidth: f64, compute: f64) -> Result<Self> {
        let a = Action { bandwidth, compute };
        if a.is_well_formed() {
            Ok(a)
        } else {
            Err(invalid(
                "action",
                format!("({bandwidth}, {compute}) must be null or strictly positive in both resources"),
            ))
        }
    }

    pub fn is_null(&self) -> bool {
        self.bandwidth == 0.0 && self.compute == 0.0
    }

    pub fn is_well_formed(&self) -> bool {
        self.is_null()
            || (self.bandwidth > 0.0
                && self.compute > 0.0
                && self.bandwidth.is_finite()
                && self.compute.is_finite())
    }
}

/// Discrete candidate bandwidth and compute levels, shared by all users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    bandwidth_levels: Vec<f64>,
    compute_levels: Vec<f64>,
}

impl ActionGrid {
    pub fn new(bandwidth_levels: Vec<f64>, compute_levels: Vec<f64>, pools: &ResourcePools) -> Result<Self> {
        check_levels("bandwidth", &bandwidth_levels, pools.total_bandwidth)?;
        check_levels("compute", &compute_levels, pools.total_compute)?;
        Ok(Self {
            bandwidth_levels,
            compute_levels,
        })
    }

    pub fn bandwidth_levels(&self) -> &[f64] {
        &self.bandwidth_levels
    }

    pub fn compute_levels(&self) -> &[f64] {
        &self.compute_levels
    }

    /// Number of actions available to an active user, null included.
    pub fn action_count(&self) -> usize {
        self.bandwidth_levels.len() * self.compute_levels.len() + 1
    }

    /// Every non-null action in grid-index order (bandwidth-major).
    pub fn positive_actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.bandwidth_levels.iter().flat_map(move |&b| {
            self.compute_levels.iter().map(move |&f| Action {
                bandwidth: b,
                compute: f,
            })
        })
    }

    /// Every action of an active user: the grid in index order, null last.
    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.positive_actions().chain(std::iter::once(Action::NULL))
    }

    pub fn contains(&self, a: &Action) -> bool {
        validate_action(a, self)
    }

    /// Largest bandwidth level not above `limit`.
    pub fn bandwidth_floor(&self, limit: f64) -> Option<f64> {
        floor_level(&self.bandwidth_levels, limit)
    }

    /// Largest compute level not above `limit`.
    pub fn compute_floor(&self, limit: f64) -> Option<f64> {
        floor_level(&self.compute_levels, limit)
    }
}

fn floor_level(levels: &[f64], limit: f64) -> Option<f64> {
    let slack = limit.abs() * POOL_TOLERANCE;
    levels.iter().rev().copied().find(|&l| l <= limit + slack)
}

fn check_levels(name: &str, levels: &[f64], total: f64) -> Result<()> {
    if levels.is_empty() {
        return Err(invalid("action grid", format!("{name} levels are empty")));
    }
    if levels.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(invalid("action grid", format!("{name} levels must be positive")));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("action grid", format!("{name} levels must be strictly increasing")));
    }
    if levels[levels.len() - 1] > total * (1.0 + POOL_TOLERANCE) {
        return Err(invalid("action grid", format!("{name} levels exceed the pool total {total}")));
    }
    Ok(())
}

/// Uniform grid: level `k` is `k/K` of the pool total, for `k = 1..=K`.
pub fn make_action_grid(pools: &ResourcePools, n_bw_levels: usize, n_cpu_levels: usize) -> Result<ActionGrid> {
    if n_bw_levels == 0 || n_cpu_levels == 0 {
        return Err(Error::Config(format!(
            "grid level counts must be at least 1 (got {n_bw_levels} x {n_cpu_levels})"
        )));
    }
    let uniform = |total: f64, k: usize| -> Vec<f64> { (1..=k).map(|j| total * j as f64 / k as f64).collect() };
    ActionGrid::new(
        uniform(pools.total_bandwidth, n_bw_levels),
        uniform(pools.total_compute, n_cpu_levels),
        pools,
    )
}

/// True when `a` is the null action or both components lie on the grid.
pub fn validate_action(a: &Action, grid: &ActionGrid) -> bool {
    if a.is_null() {
        return true;
    }
    a.is_well_formed() && grid.bandwidth_levels.contains(&a.bandwidth) && grid.compute_levels.contains(&a.compute)
}

/// Everything the scheduler sees at the start of a slot.
///
/// `observed_*` hold the latest measurements available when the decision is
/// made (end of the previous slot); `predicted_*` hold the one-step forecasts
/// for the current slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotState {
    pub slot: usize,
    pub active: Vec<bool>,
    pub tasks: Vec<Option<TaskSpec>>,
    /// Linear power gain per user.
    pub observed_channel: Vec<f64>,
    /// Edge backlog, cycles.
    pub observed_backlog: f64,
    pub predicted_channel: Vec<f64>,
    pub predicted_backlog: f64,
    pub budgets: Vec<f64>,
}

impl SlotState {
    pub fn n_users(&self) -> usize {
        self.active.len()
    }

    pub fn active_users(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i)
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Task of an active user. Panics when `i` is inactive.
    pub fn task(&self, i: usize) -> &TaskSpec {
        self.tasks[i].as_ref().expect("active user without a task")
    }

    /// Same state with the forecasts replaced by the latest observations.
    pub fn with_observed_as_predicted(&self) -> SlotState {
        SlotState {
            predicted_channel: self.observed_channel.clone(),
            predicted_backlog: self.observed_backlog,
            ..self.clone()
        }
    }

    pub fn validate(&self, users: &[UserProfile]) -> Result<()> {
        let n = users.len();
        let lens = [
            self.active.len(),
            self.tasks.len(),
            self.observed_channel.len(),
            self.predicted_channel.len(),
            self.budgets.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(invalid("slot state", format!("vector lengths {lens:?} differ from {n} users")));
        }
        if self.slot == 0 {
            return Err(invalid("slot state", "slots are numbered from 1"));
        }
        for i in 0..n {
            match (self.active[i], &self.tasks[i]) {
                (true, Some(t)) => t.validate()?,
                (false, None) => {}
                (true, None) => return Err(invalid("slot state", format!("active user {i} has no task"))),
                (false, Some(_)) => return Err(invalid("slot state", format!("inactive user {i} has a task"))),
            }
            let b = self.budgets[i];
            if !(0.0..=users[i].budget_cap).contains(&b) {
                return Err(invalid(
                    "slot state",
                    format!("budget {b} of user {i} outside [0, {}]", users[i].budget_cap),
                ));
            }
            if !(self.observed_channel[i] > 0.0 && self.predicted_channel[i] > 0.0) {
                return Err(invalid("slot state", format!("channel gain of user {i} must be positive")));
            }
        }
        if !(self.observed_backlog >= 0.0 && self.predicted_backlog >= 0.0) {
            return Err(invalid("slot state", "backlog must be nonnegative"));
        }
        Ok(())
    }
}

/// Per-slot record of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub active: Vec<bool>,
    pub tasks: Vec<Option<TaskSpec>>,
    pub profile: Vec<Action>,
    /// Realized end-to-end delay, `+inf` for rejected or inactive users.
    pub realized_delay: Vec<f64>,
    /// Timeliness indicator Ψ (0 for inactive users).
    pub timely: Vec<u8>,
    /// Prediction-driven risk at the chosen profile (1 for rejected, 0 for inactive).
    pub predicted_risk: Vec<f64>,
    /// Risk re-evaluated on the realized states; informational only.
    pub realized_risk: Vec<f64>,
    pub budgets_before: Vec<f64>,
    pub budgets_after: Vec<f64>,
    /// Potential of the chosen profile.
    pub potential: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Potential after every accepted improvement step (empty for non-iterative policies).
    pub potential_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub policy: String,
    pub seed: u64,
    pub users: Vec<UserProfile>,
    pub slots: Vec<SlotRecord>,
}

impl EpisodeLog {
    /// Budget trajectory per user: `B(1)` followed by the budget after every slot.
    pub fn budget_trajectories(&self) -> Vec<Vec<f64>> {
        let n = self.users.len();
        let mut out: Vec<Vec<f64>> = (0..n).map(|_| Vec::with_capacity(self.slots.len() + 1)).collect();
        if let Some(first) = self.slots.first() {
            for (i, traj) in out.iter_mut().enumerate() {
                traj.push(first.budgets_before[i]);
            }
        }
        for s in &self.slots {
            for (i, traj) in out.iter_mut().enumerate() {
                traj.push(s.budgets_after[i]);
            }
        }
        out
    }
}
