//! The per-slot risk-budgeted scheduling game.
//!
//! Each active user picks a bandwidth/compute pair from the shared grid (or
//! the null action). Joint feasibility couples users through the pool limits
//! and through the queueing term, which depends on the aggregate compute of
//! the whole profile. The potential
//!
//! ```text
//! Φ(a) = Σ_{i active} [ w_i ŝ_i(a) − α_i b_i − β_i f_i − γ_i r̂_i(a) / (B_i + ε) ]
//! ```
//!
//! is shared by every user; a user's utility is its marginal contribution
//! `U_i(a) = Φ(a) − Φ((0,0), a_{−i})`, so every unilateral change in utility
//! equals the change in Φ. Improvement dynamics therefore terminate, and the
//! asynchronous loop in [`SlotGame::run`] returns a feasible profile from
//! which no single user can improve.
//!
//! All sums over users run in index order so that two evaluations of the same
//! profile are bit-identical; potential gains are accumulated term by term so
//! that users whose terms do not change contribute exactly zero.

pub mod audit;

use serde::{Deserialize, Serialize};

use crate::environment::{compute_sinr, RadioParams};
use crate::error::{Error, Result};
use crate::model::{validate_action, Action, ActionGrid, ResourcePools, SlotState, UserProfile};
use crate::risk::{comp_delay, queue_delay, risk_surrogate, tx_delay};

/// Rule picking one user out of the improving set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// Largest potential gain, ties to the lowest user index.
    #[default]
    LargestGain,
    /// First improving user after the one updated last, cyclically.
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameConfig {
    /// ε′: a user improves only if its gain exceeds this.
    pub threshold: f64,
    pub max_iterations: usize,
    pub selection: SelectionRule,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            threshold: 1e-9,
            max_iterations: 200,
            selection: SelectionRule::LargestGain,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(Error::Config("improvement threshold must be finite and >= 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which parts of the budget mechanism are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GameVariant {
    /// Admitted users must satisfy `r̂_i ≤ B_i`.
    pub enforce_budget: bool,
    /// Include the `γ r̂ / (B + ε)` term in Φ.
    pub risk_regularization: bool,
}

impl GameVariant {
    pub const FULL: GameVariant = GameVariant {
        enforce_budget: true,
        risk_regularization: true,
    };
    pub const NO_BUDGET: GameVariant = GameVariant {
        enforce_budget: false,
        risk_regularization: false,
    };
}

/// A joint action with its derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct JointProfile {
    pub actions: Vec<Action>,
    pub sum_bandwidth: f64,
    pub sum_compute: f64,
    /// Predicted risk per user (1 for rejected active users, 0 for inactive).
    pub risk: Vec<f64>,
    /// Timely-service surrogate `1 − r̂` for active users, 0 otherwise.
    pub timely: Vec<f64>,
    pub potential: f64,
}

/// Result of the asynchronous improvement loop.
#[derive(Debug, Clone, PartialEq)]
pub struct GameOutcome {
    pub profile: JointProfile,
    pub iterations: usize,
    pub converged: bool,
    /// Accepted updates `(user, new action, potential gain)` in order.
    pub moves: Vec<(usize, Action, f64)>,
    /// Size of the improving set at every iteration, including the final one.
    pub improving_sizes: Vec<usize>,
    /// Φ of the initial profile followed by Φ after each accepted update.
    pub potential_trace: Vec<f64>,
}

/// One slot's game, evaluated on the state's predicted channel and backlog.
#[derive(Debug, Clone)]
pub struct SlotGame<'a> {
    state: &'a SlotState,
    users: &'a [UserProfile],
    grid: &'a ActionGrid,
    pools: &'a ResourcePools,
    variant: GameVariant,
    sinr: Vec<f64>,
    active: Vec<usize>,
}

impl<'a> SlotGame<'a> {
    pub fn new(
        state: &'a SlotState,
        users: &'a [UserProfile],
        grid: &'a ActionGrid,
        pools: &'a ResourcePools,
        radio: &RadioParams,
        variant: GameVariant,
    ) -> Self {
        assert_eq!(state.n_users(), users.len(), "state and user list disagree");
        let sinr = state.predicted_channel.iter().map(|&g| compute_sinr(g, radio)).collect();
        Self {
            state,
            users,
            grid,
            pools,
            variant,
            sinr,
            active: state.active_users().collect(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn state(&self) -> &SlotState {
        self.state
    }

    pub fn variant(&self) -> GameVariant {
        self.variant
    }

    pub fn null_profile(&self) -> Vec<Action> {
        vec![Action::NULL; self.n_users()]
    }

    pub fn sum_bandwidth(actions: &[Action]) -> f64 {
        actions.iter().map(|a| a.bandwidth).sum()
    }

    pub fn sum_compute(actions: &[Action]) -> f64 {
        actions.iter().map(|a| a.compute).sum()
    }

    fn sum_compute_with(actions: &[Action], i: usize, f: f64) -> f64 {
        actions
            .iter()
            .enumerate()
            .map(|(j, a)| if j == i { f } else { a.compute })
            .sum()
    }

    fn sum_bandwidth_with(actions: &[Action], i: usize, b: f64) -> f64 {
        actions
            .iter()
            .enumerate()
            .map(|(j, a)| if j == i { b } else { a.bandwidth })
            .sum()
    }

    /// Predicted end-to-end delay of active user `i` under `action` when the
    /// profile's aggregate compute is `sum_compute`.
    pub fn predicted_delay(&self, i: usize, action: &Action, sum_compute: f64) -> f64 {
        if action.is_null() {
            return f64::INFINITY;
        }
        let task = self.state.task(i);
        let queue = queue_delay(self.state.predicted_backlog, sum_compute, self.pools).unwrap_or(f64::INFINITY);
        tx_delay(task.data_bits, action.bandwidth, self.sinr[i]) + queue + comp_delay(task.workload_cycles, action.compute)
    }

    /// Predicted risk `r̂_i` of active user `i`.
    pub fn risk(&self, i: usize, action: &Action, sum_compute: f64) -> f64 {
        let margin = self.state.task(i).deadline_s - self.predicted_delay(i, action, sum_compute);
        risk_surrogate(margin, self.users[i].risk_sensitivity)
    }

    fn budget_denominator(&self, i: usize) -> f64 {
        self.state.budgets[i] + self.pools.budget_eps
    }

    fn risk_weight(&self, i: usize) -> f64 {
        if self.variant.risk_regularization {
            self.users[i].risk_weight
        } else {
            0.0
        }
    }

    /// Contribution of active user `i` to Φ.
    pub fn term(&self, i: usize, action: &Action, sum_compute: f64) -> f64 {
        let u = &self.users[i];
        let r = self.risk(i, action, sum_compute);
        let w = self.state.task(i).weight;
        w * (1.0 - r) - u.bandwidth_cost * action.bandwidth - u.compute_cost * action.compute
            - self.risk_weight(i) * r / self.budget_denominator(i)
    }

    /// Φ of a joint action.
    pub fn potential(&self, actions: &[Action]) -> f64 {
        let sf = Self::sum_compute(actions);
        self.active.iter().map(|&i| self.term(i, &actions[i], sf)).sum()
    }

    fn admitted_within_budget(&self, i: usize, action: &Action, sum_compute: f64) -> bool {
        !self.variant.enforce_budget || action.is_null() || self.risk(i, action, sum_compute) <= self.state.budgets[i]
    }

    /// Pool limits, budget constraints of admitted users, null actions for
    /// inactive users, and grid membership.
    pub fn is_feasible(&self, actions: &[Action]) -> bool {
        if actions.len() != self.n_users() {
            return false;
        }
        for (i, a) in actions.iter().enumerate() {
            if !validate_action(a, self.grid) || (!self.state.active[i] && !a.is_null()) {
                return false;
            }
        }
        let sb = Self::sum_bandwidth(actions);
        let sf = Self::sum_compute(actions);
        if !self.pools.bandwidth_fits(sb) || !self.pools.compute_fits(sf) {
            return false;
        }
        self.active.iter().all(|&i| self.admitted_within_budget(i, &actions[i], sf))
    }

    /// Σ over active users other than `i` of the change in their term when
    /// the aggregate compute moves from `sf_old` to `sf_new`.
    fn others_delta(&self, actions: &[Action], i: usize, sf_new: f64, sf_old: f64) -> f64 {
        let mut delta = 0.0;
        for &j in &self.active {
            if j == i || actions[j].is_null() {
                continue;
            }
            delta += self.term(j, &actions[j], sf_new) - self.term(j, &actions[j], sf_old);
        }
        delta
    }

    /// `Φ(new, a_{−i}) − Φ(a)`, accumulated term by term.
    pub fn potential_gain(&self, actions: &[Action], i: usize, new: &Action) -> f64 {
        if !self.state.active[i] {
            return 0.0;
        }
        let sf_old = Self::sum_compute(actions);
        let sf_new = Self::sum_compute_with(actions, i, new.compute);
        (self.term(i, new, sf_new) - self.term(i, &actions[i], sf_old)) + self.others_delta(actions, i, sf_new, sf_old)
    }

    /// `U_i(a) = Φ(a) − Φ((0,0), a_{−i})`, accumulated term by term.
    pub fn marginal_utility(&self, actions: &[Action], i: usize) -> f64 {
        if !self.state.active[i] || actions[i].is_null() {
            return 0.0;
        }
        let sf = Self::sum_compute(actions);
        let sf_null = Self::sum_compute_with(actions, i, 0.0);
        (self.term(i, &actions[i], sf) - self.term(i, &Action::NULL, sf_null)) + self.others_delta(actions, i, sf, sf_null)
    }

    /// Actions of user `i` that keep the joint profile feasible, in grid
    /// order with the null action last.
    pub fn feasible_unilateral_set(&self, actions: &[Action], i: usize) -> Vec<Action> {
        if !self.state.active[i] {
            return vec![Action::NULL];
        }
        let mut trial = actions.to_vec();
        self.grid
            .actions()
            .filter(|a| {
                trial[i] = *a;
                self.is_feasible(&trial)
            })
            .collect()
    }

    /// Best feasible unilateral action of user `i` and its potential gain.
    ///
    /// Candidates are scanned in grid order with the null action last; the
    /// first strict maximizer wins. The current action has gain exactly 0, so
    /// the returned gain is never negative for a feasible profile.
    pub fn best_response(&self, actions: &[Action], i: usize) -> (Action, f64) {
        if !self.state.active[i] {
            return (Action::NULL, 0.0);
        }
        let cur = actions[i];
        let sf_old = Self::sum_compute(actions);
        let own_old = self.term(i, &cur, sf_old);

        // Per compute option (null first, then grid levels): aggregate compute,
        // whether the others stay within budget, and the others' delta.
        let f_options: Vec<f64> = std::iter::once(0.0).chain(self.grid.compute_levels().iter().copied()).collect();
        let per_f: Vec<Option<(f64, f64)>> = f_options
            .iter()
            .map(|&f| {
                let sf_new = Self::sum_compute_with(actions, i, f);
                if !self.pools.compute_fits(sf_new) {
                    return None;
                }
                let others_ok = self
                    .active
                    .iter()
                    .filter(|&&j| j != i)
                    .all(|&j| self.admitted_within_budget(j, &actions[j], sf_new));
                others_ok.then(|| (sf_new, self.others_delta(actions, i, sf_new, sf_old)))
            })
            .collect();
        let b_fits: Vec<bool> = self
            .grid
            .bandwidth_levels()
            .iter()
            .map(|&b| self.pools.bandwidth_fits(Self::sum_bandwidth_with(actions, i, b)))
            .collect();

        let mut best = (Action::NULL, f64::NEG_INFINITY);
        let mut consider = |cand: Action, option: Option<(f64, f64)>| {
            let Some((sf_new, others)) = option else { return };
            if !self.admitted_within_budget(i, &cand, sf_new) {
                return;
            }
            let gain = (self.term(i, &cand, sf_new) - own_old) + others;
            if gain > best.1 {
                best = (cand, gain);
            }
        };
        for (bi, &b) in self.grid.bandwidth_levels().iter().enumerate() {
            if !b_fits[bi] {
                continue;
            }
            for (fi, &f) in self.grid.compute_levels().iter().enumerate() {
                consider(
                    Action {
                        bandwidth: b,
                        compute: f,
                    },
                    per_f[fi + 1],
                );
            }
        }
        // Null always keeps bandwidth feasible; it can only lower Σf.
        consider(Action::NULL, per_f[0]);
        best
    }

    /// Derived quantities of a joint action.
    pub fn assess(&self, actions: &[Action]) -> JointProfile {
        let n = self.n_users();
        let sf = Self::sum_compute(actions);
        let mut risk = vec![0.0; n];
        let mut timely = vec![0.0; n];
        for &i in &self.active {
            risk[i] = self.risk(i, &actions[i], sf);
            timely[i] = 1.0 - risk[i];
        }
        JointProfile {
            actions: actions.to_vec(),
            sum_bandwidth: Self::sum_bandwidth(actions),
            sum_compute: sf,
            risk,
            timely,
            potential: self.potential(actions),
        }
    }

    /// Asynchronous feasible-improvement dynamics from the all-null profile.
    pub fn run(&self, cfg: &GameConfig) -> GameOutcome {
        let mut actions = self.null_profile();
        assert!(self.is_feasible(&actions), "the all-null profile must be feasible");
        let mut trace = vec![self.potential(&actions)];
        let mut moves = Vec::new();
        let mut sizes = Vec::new();
        let mut converged = false;
        let mut last_updated: Option<usize> = None;
        let mut k = 0;

        while k < cfg.max_iterations {
            let responses: Vec<(usize, Action, f64)> = self
                .active
                .iter()
                .map(|&i| {
                    let (a, g) = self.best_response(&actions, i);
                    (i, a, g)
                })
                .filter(|&(_, _, g)| g > cfg.threshold)
                .collect();
            sizes.push(responses.len());
            if responses.is_empty() {
                converged = true;
                break;
            }
            let chosen = match cfg.selection {
                SelectionRule::LargestGain => responses
                    .iter()
                    .fold(None::<&(usize, Action, f64)>, |best, r| match best {
                        Some(b) if b.2 >= r.2 => Some(b),
                        _ => Some(r),
                    })
                    .copied(),
                SelectionRule::RoundRobin => {
                    let after = last_updated.map_or(0, |l| l + 1);
                    responses.iter().find(|r| r.0 >= after).or_else(|| responses.first()).copied()
                }
            }
            .expect("non-empty improving set");
            let (i, a, gain) = chosen;
            actions[i] = a;
            last_updated = Some(i);
            moves.push((i, a, gain));
            trace.push(self.potential(&actions));
            k += 1;
        }

        GameOutcome {
            profile: self.assess(&actions),
            iterations: k,
            converged,
            moves,
            improving_sizes: sizes,
            potential_trace: trace,
        }
    }

    /// True iff the profile is feasible and no user has a feasible unilateral
    /// deviation raising its utility by more than `tolerance`.
    pub fn verify_equilibrium(&self, actions: &[Action], tolerance: f64) -> bool {
        if !self.is_feasible(actions) {
            return false;
        }
        let mut trial = actions.to_vec();
        for &i in &self.active {
            let base = self.marginal_utility(actions, i);
            for a in self.feasible_unilateral_set(actions, i) {
                trial[i] = a;
                if self.marginal_utility(&trial, i) - base > tolerance {
                    return false;
                }
            }
            trial[i] = actions[i];
        }
        true
    }

    /// Size of the joint action space an exhaustive search would visit.
    pub fn joint_space_size(&self) -> u128 {
        (self.grid.action_count() as u128).saturating_pow(self.active.len() as u32)
    }

    /// Exhaustive maximizer of Φ over the feasible joint-action set.
    ///
    /// Profiles are visited in odometer order over active users (lowest user
    /// index most significant, each user's actions in grid order, null last);
    /// the first strict maximizer is returned.
    pub fn brute_force_max_potential(&self, cap: u128) -> Result<(Vec<Action>, f64)> {
        let size = self.joint_space_size();
        if size > cap {
            return Err(Error::SpaceTooLarge { size, cap });
        }
        let options: Vec<Action> = self.grid.actions().collect();
        let m = options.len();
        let mut idx = vec![0usize; self.active.len()];
        let mut actions = self.null_profile();
        let mut best: Option<(Vec<Action>, f64)> = None;
        loop {
            for (slot, &i) in self.active.iter().enumerate() {
                actions[i] = options[idx[slot]];
            }
            if self.is_feasible(&actions) {
                let phi = self.potential(&actions);
                if best.as_ref().is_none_or(|(_, b)| phi > *b) {
                    best = Some((actions.clone(), phi));
                }
            }
            // odometer increment, last active user fastest
            let mut pos = self.active.len();
            loop {
                if pos == 0 {
                    return Ok(best.expect("the all-null profile is feasible"));
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < m {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_action_grid, TaskSpec, BITS_PER_MB, CYCLES_PER_GIGA, HZ_PER_MHZ};

    pub(crate) fn user(id: usize, pools: &ResourcePools) -> UserProfile {
        UserProfile {
            id,
            weight: 1.0,
            activity_prob: 0.5,
            risk_sensitivity: 10.0,
            budget_cap: 1.0,
            recovery_rate: 0.05,
            bandwidth_cost: 0.1 / pools.total_bandwidth,
            compute_cost: 0.1 / pools.total_compute,
            risk_weight: 0.5,
        }
    }

    struct Fixture {
        pools: ResourcePools,
        grid: ActionGrid,
        radio: RadioParams,
        users: Vec<UserProfile>,
        state: SlotState,
    }

    fn fixture(tasks: Vec<Option<TaskSpec>>, backlog: f64, budgets: Vec<f64>, levels: usize) -> Fixture {
        let pools = ResourcePools::new(50.0 * HZ_PER_MHZ, 155.0 * CYCLES_PER_GIGA).unwrap();
        let grid = make_action_grid(&pools, levels, levels).unwrap();
        let radio = RadioParams::new(0.2, 1e-13).unwrap();
        let n = tasks.len();
        let users = (0..n).map(|i| user(i, &pools)).collect();
        let state = SlotState {
            slot: 1,
            active: tasks.iter().map(Option::is_some).collect(),
            tasks,
            observed_channel: vec![1e-10; n],
            observed_backlog: backlog,
            predicted_channel: vec![1e-10; n],
            predicted_backlog: backlog,
            budgets,
        };
        Fixture {
            pools,
            grid,
            radio,
            users,
            state,
        }
    }

    fn task(mb: f64, gcycles: f64, deadline: f64) -> Option<TaskSpec> {
        Some(TaskSpec::new(mb * BITS_PER_MB, gcycles * CYCLES_PER_GIGA, deadline, 1.0).unwrap())
    }

    impl Fixture {
        fn game(&self, variant: GameVariant) -> SlotGame<'_> {
            SlotGame::new(&self.state, &self.users, &self.grid, &self.pools, &self.radio, variant)
        }
    }

    #[test]
    fn null_profile_is_feasible_and_scored() {
        let fx = fixture(vec![task(0.5, 0.5, 0.5), None, task(0.3, 0.2, 0.4)], 0.0, vec![0.5, 1.0, 0.25], 4);
        let g = fx.game(GameVariant::FULL);
        let null = g.null_profile();
        assert!(g.is_feasible(&null));
        let expect = -0.5 / (0.5 + 1e-6) - 0.5 / (0.25 + 1e-6);
        assert!((g.potential(&null) - expect).abs() < 1e-12);
    }

    #[test]
    fn no_active_users() {
        let fx = fixture(vec![None, None], 0.0, vec![1.0, 1.0], 4);
        let g = fx.game(GameVariant::FULL);
        assert_eq!(g.potential(&g.null_profile()), 0.0);
        let out = g.run(&GameConfig::default());
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
        assert!(out.profile.actions.iter().all(Action::is_null));
        assert!(g.verify_equilibrium(&out.profile.actions, 0.0));
        let (bf, phi) = g.brute_force_max_potential(1_000_000).unwrap();
        assert!(bf.iter().all(Action::is_null));
        assert_eq!(phi, 0.0);
    }

    #[test]
    fn pool_boundary() {
        let fx = fixture(vec![task(0.5, 0.5, 0.5), task(0.5, 0.5, 0.5)], 0.0, vec![1.0, 1.0], 4);
        let g = fx.game(GameVariant::FULL);
        let top_b = fx.pools.total_bandwidth;
        let f = fx.grid.compute_levels()[0];
        let b1 = fx.grid.bandwidth_levels()[0];
        let ok = vec![Action::new(top_b - b1, f).unwrap(), Action::new(b1, f).unwrap()];
        assert!(g.is_feasible(&ok));
        let over = vec![Action::new(top_b, f).unwrap(), Action::new(b1, f).unwrap()];
        assert!(!g.is_feasible(&over));
    }

    #[test]
    fn inactive_user_only_null() {
        let fx = fixture(vec![task(0.5, 0.5, 0.5), None], 0.0, vec![1.0, 1.0], 2);
        let g = fx.game(GameVariant::FULL);
        let null = g.null_profile();
        assert_eq!(g.feasible_unilateral_set(&null, 1), vec![Action::NULL]);
        let mut bad = null.clone();
        bad[1] = Action::new(fx.grid.bandwidth_levels()[0], fx.grid.compute_levels()[0]).unwrap();
        assert!(!g.is_feasible(&bad));
    }

    #[test]
    fn saturated_pools_leave_only_null() {
        let fx = fixture(vec![task(0.5, 0.5, 0.8), task(0.5, 0.5, 0.8)], 0.0, vec![1.0, 1.0], 2);
        let g = fx.game(GameVariant::FULL);
        let full = Action::new(fx.pools.total_bandwidth, fx.grid.compute_levels()[0]).unwrap();
        let actions = vec![full, Action::NULL];
        assert!(g.is_feasible(&actions));
        assert_eq!(g.feasible_unilateral_set(&actions, 1), vec![Action::NULL]);
        let (a, gain) = g.best_response(&actions, 1);
        assert!(a.is_null());
        assert_eq!(gain, 0.0);
    }

    #[test]
    fn admission_can_break_another_users_budget() {
        // With a backlog, user 0's compute raises user 1's queueing delay.
        let fx = fixture(vec![task(0.2, 0.2, 0.8), task(0.2, 0.2, 0.45)], 23.25e9, vec![1.0, 0.25], 2);
        let g = fx.game(GameVariant::FULL);
        let small = Action::new(fx.grid.bandwidth_levels()[0], fx.grid.compute_levels()[0]).unwrap();
        let only_1 = vec![Action::NULL, small];
        let both = vec![small, small];
        let r1_alone = g.risk(1, &small, SlotGame::sum_compute(&only_1));
        let r1_both = g.risk(1, &small, SlotGame::sum_compute(&both));
        assert!(r1_alone <= 0.25, "{r1_alone}");
        assert!(r1_both > 0.25, "{r1_both}");
        assert!(g.is_feasible(&only_1));
        assert!(!g.is_feasible(&both));
        assert!(!g.feasible_unilateral_set(&only_1, 0).contains(&small));
        // without the budget constraint the same profile is fine
        assert!(fx.game(GameVariant::NO_BUDGET).is_feasible(&both));
    }

    #[test]
    fn marginal_utility_of_null_is_zero() {
        let fx = fixture(vec![task(0.5, 0.5, 0.5), task(0.3, 0.3, 0.6)], 10e9, vec![1.0, 1.0], 3);
        let g = fx.game(GameVariant::FULL);
        let a = vec![Action::NULL, Action::new(fx.grid.bandwidth_levels()[1], fx.grid.compute_levels()[0]).unwrap()];
        assert_eq!(g.marginal_utility(&a, 0), 0.0);
        let u1 = g.marginal_utility(&a, 1);
        let direct = g.potential(&a) - g.potential(&[Action::NULL, Action::NULL]);
        assert!((u1 - direct).abs() < 1e-12);
    }

    #[test]
    fn best_response_matches_feasible_set_enumeration() {
        let fx = fixture(
            vec![task(0.8, 0.9, 0.3), task(0.2, 0.1, 0.7), task(0.5, 0.5, 0.5)],
            20e9,
            vec![0.9, 0.3, 0.6],
            3,
        );
        let g = fx.game(GameVariant::FULL);
        let mut actions = g.null_profile();
        actions[1] = Action::new(fx.grid.bandwidth_levels()[0], fx.grid.compute_levels()[0]).unwrap();
        assert!(g.is_feasible(&actions));
        for i in 0..3 {
            let (a, gain) = g.best_response(&actions, i);
            let set = g.feasible_unilateral_set(&actions, i);
            assert!(set.contains(&a));
            let best = set
                .iter()
                .map(|c| g.potential_gain(&actions, i, c))
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(gain, best);
            assert_eq!(gain, g.potential_gain(&actions, i, &a));
            assert!(gain >= 0.0);
        }
    }

    #[test]
    fn single_user_reaches_its_best_action_in_one_step() {
        let fx = fixture(vec![None, task(0.6, 0.7, 0.4), None], 5e9, vec![1.0, 1.0, 1.0], 4);
        let g = fx.game(GameVariant::FULL);
        let out = g.run(&GameConfig::default());
        assert!(out.converged);
        assert!(out.iterations <= 1);
        let best = g
            .grid
            .actions()
            .filter(|a| {
                let mut t = g.null_profile();
                t[1] = *a;
                g.is_feasible(&t)
            })
            .map(|a| {
                let mut t = g.null_profile();
                t[1] = a;
                g.potential(&t)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.profile.potential, best);
    }

    #[test]
    fn verify_rejects_mid_trajectory_profile() {
        let fx = fixture(vec![task(0.5, 0.5, 0.5), task(0.4, 0.3, 0.6), task(0.7, 0.2, 0.7)], 0.0, vec![1.0; 3], 3);
        let g = fx.game(GameVariant::FULL);
        let out = g.run(&GameConfig::default());
        assert!(out.converged && out.iterations >= 2);
        assert!(g.verify_equilibrium(&out.profile.actions, 1e-9));
        let mut partial = g.null_profile();
        for &(i, a, _) in &out.moves[..out.moves.len() - 1] {
            partial[i] = a;
        }
        assert!(!g.verify_equilibrium(&partial, 1e-9));
    }

    #[test]
    fn round_robin_also_converges() {
        let fx = fixture(vec![task(0.5, 0.5, 0.5), task(0.4, 0.3, 0.6), task(0.7, 0.2, 0.7)], 8e9, vec![1.0; 3], 4);
        let g = fx.game(GameVariant::FULL);
        let cfg = GameConfig {
            selection: SelectionRule::RoundRobin,
            threshold: 0.0,
            ..GameConfig::default()
        };
        let out = g.run(&cfg);
        assert!(out.converged);
        assert!(g.verify_equilibrium(&out.profile.actions, 1e-9));
    }

    #[test]
    fn brute_force_refuses_large_spaces() {
        let fx = fixture(vec![task(0.5, 0.5, 0.5); 4], 0.0, vec![1.0; 4], 8);
        let g = fx.game(GameVariant::FULL);
        assert!(matches!(g.brute_force_max_potential(1000), Err(Error::SpaceTooLarge { .. })));
    }
}
