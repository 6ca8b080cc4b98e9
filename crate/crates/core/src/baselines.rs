//! Scheduling policies: the game scheduler, its two ablations and the
//! comparison baselines.
//!
//! The priority baselines (SLO-Edge, DeadlineFirst, BCLF) differ only in how
//! they rank active users; all of them then walk the ranking with
//! [`greedy_priority_allocate`]. Baselines see the latest observed states
//! and ignore risk budgets.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::environment::{compute_sinr, RadioParams};
use crate::error::Error;
use crate::game::{GameConfig, GameVariant, SlotGame};
use crate::model::{Action, ActionGrid, ResourcePools, SlotState, UserProfile};
use crate::risk::{comp_delay, queue_delay, tx_delay};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyTag {
    #[serde(rename = "AEGIS")]
    Aegis,
    #[serde(rename = "AEGISNoBudget")]
    AegisNoBudget,
    #[serde(rename = "AEGISNoPred")]
    AegisNoPred,
    #[serde(rename = "SLO-Edge")]
    SloEdge,
    DeadlineFirst,
    #[serde(rename = "BCLF")]
    Bclf,
    EqualShare,
}

impl PolicyTag {
    pub const ALL: [PolicyTag; 7] = [
        PolicyTag::Aegis,
        PolicyTag::AegisNoBudget,
        PolicyTag::AegisNoPred,
        PolicyTag::SloEdge,
        PolicyTag::DeadlineFirst,
        PolicyTag::Bclf,
        PolicyTag::EqualShare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyTag::Aegis => "AEGIS",
            PolicyTag::AegisNoBudget => "AEGISNoBudget",
            PolicyTag::AegisNoPred => "AEGISNoPred",
            PolicyTag::SloEdge => "SLO-Edge",
            PolicyTag::DeadlineFirst => "DeadlineFirst",
            PolicyTag::Bclf => "BCLF",
            PolicyTag::EqualShare => "EqualShare",
        }
    }

    /// The game scheduler and its ablations.
    pub fn is_game(self) -> bool {
        matches!(self, PolicyTag::Aegis | PolicyTag::AegisNoBudget | PolicyTag::AegisNoPred)
    }

    /// Policies whose decisions must respect the risk budgets.
    pub fn enforces_budget(self) -> bool {
        matches!(self, PolicyTag::Aegis | PolicyTag::AegisNoPred)
    }
}

impl fmt::Display for PolicyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyTag {
    type Err = Error;

    /// Case-insensitive; hyphens and underscores are ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .flat_map(char::to_lowercase)
            .collect();
        PolicyTag::ALL
            .into_iter()
            .find(|t| t.name().replace('-', "").to_lowercase() == key)
            .ok_or_else(|| Error::Config(format!("unknown policy '{s}'")))
    }
}

/// Shared inputs of every policy.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    pub users: &'a [UserProfile],
    pub grid: &'a ActionGrid,
    pub pools: &'a ResourcePools,
    pub radio: &'a RadioParams,
    pub game: &'a GameConfig,
}

/// A policy's decision for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub actions: Vec<Action>,
    /// Improvement steps taken (0 for non-iterative policies).
    pub iterations: usize,
    pub converged: bool,
    pub potential_trace: Vec<f64>,
}

impl Decision {
    fn direct(actions: Vec<Action>) -> Self {
        Decision {
            actions,
            iterations: 0,
            converged: true,
            potential_trace: Vec::new(),
        }
    }
}

/// Runs `tag` on `state`. Game policies schedule on the predicted fields
/// (AEGISNoPred substitutes the observed ones); baselines use observed fields.
pub fn decide(tag: PolicyTag, state: &SlotState, ctx: &PolicyContext<'_>) -> Decision {
    match tag {
        PolicyTag::Aegis => run_game(state, ctx, GameVariant::FULL),
        PolicyTag::AegisNoBudget => aegis_no_budget(state, ctx),
        PolicyTag::AegisNoPred => aegis_no_pred(state, ctx),
        PolicyTag::SloEdge => {
            let order = rank_slo_edge(state, ctx);
            Decision::direct(greedy_priority_allocate(&order, state, ctx))
        }
        PolicyTag::DeadlineFirst => Decision::direct(greedy_priority_allocate(&rank_deadline_first(state), state, ctx)),
        PolicyTag::Bclf => Decision::direct(greedy_priority_allocate(&rank_bclf(state), state, ctx)),
        PolicyTag::EqualShare => Decision::direct(equal_share_allocate(state, ctx.grid, ctx.pools)),
    }
}

fn run_game(state: &SlotState, ctx: &PolicyContext<'_>, variant: GameVariant) -> Decision {
    let game = SlotGame::new(state, ctx.users, ctx.grid, ctx.pools, ctx.radio, variant);
    let out = game.run(ctx.game);
    Decision {
        actions: out.profile.actions,
        iterations: out.iterations,
        converged: out.converged,
        potential_trace: out.potential_trace[1..].to_vec(),
    }
}

/// The game without risk regularization and without the budget constraint.
pub fn aegis_no_budget(state: &SlotState, ctx: &PolicyContext<'_>) -> Decision {
    run_game(state, ctx, GameVariant::NO_BUDGET)
}

/// The full game scheduled on the latest observed states instead of forecasts.
pub fn aegis_no_pred(state: &SlotState, ctx: &PolicyContext<'_>) -> Decision {
    run_game(&state.with_observed_as_predicted(), ctx, GameVariant::FULL)
}

fn observed_delay(state: &SlotState, i: usize, a: &Action, sum_compute: f64, ctx: &PolicyContext<'_>) -> f64 {
    let task = state.task(i);
    let sinr = compute_sinr(state.observed_channel[i], ctx.radio);
    let queue = queue_delay(state.observed_backlog, sum_compute, ctx.pools).unwrap_or(f64::INFINITY);
    tx_delay(task.data_bits, a.bandwidth, sinr) + queue + comp_delay(task.workload_cycles, a.compute)
}

fn footprint(a: &Action, pools: &ResourcePools) -> f64 {
    a.bandwidth / pools.total_bandwidth + a.compute / pools.total_compute
}

/// Walks `order`, giving each user the smallest-footprint grid action that
/// meets its deadline on the observed states (queueing computed with the
/// compute already granted plus its own), within what is left of the pools.
/// A user that cannot meet its deadline gets the largest levels still
/// affordable, and a user for whom nothing is affordable gets null.
pub fn greedy_priority_allocate(order: &[usize], state: &SlotState, ctx: &PolicyContext<'_>) -> Vec<Action> {
    let pools = ctx.pools;
    let mut actions = vec![Action::NULL; state.n_users()];
    let mut used_b = 0.0;
    let mut used_f = 0.0;
    for &i in order {
        debug_assert!(state.active[i], "ranked user {i} is inactive");
        let fits = |a: &Action| pools.bandwidth_fits(used_b + a.bandwidth) && pools.compute_fits(used_f + a.compute);
        let meeting = ctx
            .grid
            .positive_actions()
            .filter(|a| fits(a) && observed_delay(state, i, a, used_f + a.compute, ctx) <= state.task(i).deadline_s)
            .fold(None::<Action>, |best, a| match best {
                Some(b) if footprint(&b, pools) <= footprint(&a, pools) => Some(b),
                _ => Some(a),
            });
        let chosen = meeting.or_else(|| {
            let b = ctx.grid.bandwidth_floor(pools.total_bandwidth - used_b)?;
            let f = ctx.grid.compute_floor(pools.total_compute - used_f)?;
            let a = Action {
                bandwidth: b,
                compute: f,
            };
            fits(&a).then_some(a)
        });
        if let Some(a) = chosen {
            used_b += a.bandwidth;
            used_f += a.compute;
            actions[i] = a;
        }
    }
    actions
}

fn stable_order_by<K: PartialOrd>(state: &SlotState, key: impl Fn(usize) -> K) -> Vec<usize> {
    let mut order: Vec<usize> = state.active_users().collect();
    order.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).unwrap_or(Ordering::Equal));
    order
}

/// Deadline margin of user `i` under its best grid action in isolation: the
/// user alone on the platform, with the current observed backlog and channel.
pub fn reference_margin(state: &SlotState, i: usize, ctx: &PolicyContext<'_>) -> f64 {
    let best = ctx
        .grid
        .positive_actions()
        .map(|a| observed_delay(state, i, &a, a.compute, ctx))
        .fold(f64::INFINITY, f64::min);
    state.task(i).deadline_s - best
}

/// Ascending reference margin, ties by index.
pub fn rank_slo_edge(state: &SlotState, ctx: &PolicyContext<'_>) -> Vec<usize> {
    let margins: Vec<f64> = (0..state.n_users())
        .map(|i| if state.active[i] { reference_margin(state, i, ctx) } else { f64::NAN })
        .collect();
    stable_order_by(state, |i| margins[i])
}

/// Ascending deadline, ties by index.
pub fn rank_deadline_first(state: &SlotState) -> Vec<usize> {
    stable_order_by(state, |i| state.task(i).deadline_s)
}

/// Descending observed channel gain, ties by index.
pub fn rank_bclf(state: &SlotState) -> Vec<usize> {
    stable_order_by(state, |i| -state.observed_channel[i])
}

/// Every active user gets the pool totals divided by the number of active
/// users, snapped down to the grid; users below the smallest level get null.
pub fn equal_share_allocate(state: &SlotState, grid: &ActionGrid, pools: &ResourcePools) -> Vec<Action> {
    let n = state.n_active();
    let mut actions = vec![Action::NULL; state.n_users()];
    if n == 0 {
        return actions;
    }
    let share_b = pools.total_bandwidth / n as f64;
    let share_f = pools.total_compute / n as f64;
    if let (Some(b), Some(f)) = (grid.bandwidth_floor(share_b), grid.compute_floor(share_f)) {
        for i in state.active_users() {
            actions[i] = Action {
                bandwidth: b,
                compute: f,
            };
        }
    }
    actions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_action_grid, TaskSpec, BITS_PER_MB, CYCLES_PER_GIGA, HZ_PER_MHZ};

    struct Fx {
        users: Vec<UserProfile>,
        grid: ActionGrid,
        pools: ResourcePools,
        radio: RadioParams,
        game: GameConfig,
    }

    impl Fx {
        fn new(n: usize, levels: usize) -> Self {
            let pools = ResourcePools::new(50.0 * HZ_PER_MHZ, 155.0 * CYCLES_PER_GIGA).unwrap();
            let users = (0..n)
                .map(|id| UserProfile {
                    id,
                    weight: 1.0,
                    activity_prob: 1.0,
                    risk_sensitivity: 10.0,
                    budget_cap: 1.0,
                    recovery_rate: 0.05,
                    bandwidth_cost: 0.1 / pools.total_bandwidth,
                    compute_cost: 0.1 / pools.total_compute,
                    risk_weight: 0.5,
                })
                .collect();
            Fx {
                users,
                grid: make_action_grid(&pools, levels, levels).unwrap(),
                pools,
                radio: RadioParams::new(0.2, 1e-13).unwrap(),
                game: GameConfig::default(),
            }
        }

        fn ctx(&self) -> PolicyContext<'_> {
            PolicyContext {
                users: &self.users,
                grid: &self.grid,
                pools: &self.pools,
                radio: &self.radio,
                game: &self.game,
            }
        }
    }

    fn state(tasks: Vec<Option<TaskSpec>>, channel: Vec<f64>, backlog: f64) -> SlotState {
        let n = tasks.len();
        SlotState {
            slot: 1,
            active: tasks.iter().map(Option::is_some).collect(),
            tasks,
            observed_channel: channel.clone(),
            observed_backlog: backlog,
            predicted_channel: channel,
            predicted_backlog: backlog,
            budgets: vec![1.0; n],
        }
    }

    fn task(mb: f64, gc: f64, d: f64) -> Option<TaskSpec> {
        Some(TaskSpec::new(mb * BITS_PER_MB, gc * CYCLES_PER_GIGA, d, 1.0).unwrap())
    }

    #[test]
    fn tags_round_trip() {
        for t in PolicyTag::ALL {
            assert_eq!(t.name().parse::<PolicyTag>().unwrap(), t);
            assert_eq!(t.to_string().to_uppercase().parse::<PolicyTag>().unwrap(), t);
        }
        assert_eq!("slo_edge".parse::<PolicyTag>().unwrap(), PolicyTag::SloEdge);
        assert!("nope".parse::<PolicyTag>().is_err());
    }

    #[test]
    fn deadline_first_order() {
        let s = state(
            vec![task(0.5, 0.5, 0.8), task(0.5, 0.5, 0.3), None, task(0.5, 0.5, 0.3), task(0.5, 0.5, 0.5)],
            vec![1e-10; 5],
            0.0,
        );
        assert_eq!(rank_deadline_first(&s), vec![1, 3, 4, 0]);
    }

    #[test]
    fn bclf_order() {
        let s = state(
            vec![task(0.5, 0.5, 0.5); 5],
            vec![1e-10, 3e-10, 1e-10, 2e-10, 3e-10],
            0.0,
        );
        assert_eq!(rank_bclf(&s), vec![1, 4, 3, 0, 2]);
    }

    #[test]
    fn slo_edge_puts_tight_margin_first() {
        let fx = Fx::new(2, 4);
        let s = state(vec![task(0.5, 0.5, 0.8), task(0.5, 0.5, 0.4)], vec![1e-10; 2], 0.0);
        assert_eq!(rank_slo_edge(&s, &fx.ctx()), vec![1, 0]);
        let same = state(vec![task(0.5, 0.5, 0.5), task(0.5, 0.5, 0.5)], vec![1e-10; 2], 0.0);
        assert_eq!(rank_slo_edge(&same, &fx.ctx()), vec![0, 1]);
    }

    #[test]
    fn greedy_single_user_gets_minimal_deadline_meeting_action() {
        let fx = Fx::new(1, 4);
        let s = state(vec![task(0.5, 0.5, 0.5)], vec![1e-10], 0.0);
        let a = greedy_priority_allocate(&[0], &s, &fx.ctx());
        // enumeration: every deadline-meeting action, smallest footprint first
        let ctx = fx.ctx();
        let best = fx
            .grid
            .positive_actions()
            .filter(|c| observed_delay(&s, 0, c, c.compute, &ctx) <= 0.5)
            .min_by(|x, y| footprint(x, &fx.pools).partial_cmp(&footprint(y, &fx.pools)).unwrap())
            .unwrap();
        assert_eq!(a[0], best);
        assert_eq!(greedy_priority_allocate(&[], &s, &fx.ctx()), vec![Action::NULL]);
    }

    #[test]
    fn greedy_exhausts_pools() {
        let fx = Fx::new(3, 2);
        // unattainable deadlines: each user grabs the largest affordable levels
        let s = state(vec![task(0.9, 0.95, 0.001); 3], vec![1e-10; 3], 0.0);
        let a = greedy_priority_allocate(&[0, 1, 2], &s, &fx.ctx());
        assert_eq!(a[0], Action::new(fx.pools.total_bandwidth, fx.pools.total_compute).unwrap());
        assert!(a[1].is_null() && a[2].is_null());
    }

    #[test]
    fn equal_share_cases() {
        let fx = Fx::new(4, 8);
        let s = state(vec![task(0.5, 0.5, 0.5); 4], vec![1e-10; 4], 0.0);
        let a = equal_share_allocate(&s, &fx.grid, &fx.pools);
        for x in &a {
            assert!((x.bandwidth - 12.5e6).abs() < 1e-6);
            assert!((x.compute - 38.75e9).abs() < 1e-3);
        }
        let one = state(vec![task(0.5, 0.5, 0.5), None, None, None], vec![1e-10; 4], 0.0);
        let a = equal_share_allocate(&one, &fx.grid, &fx.pools);
        assert_eq!(a[0], Action::new(fx.pools.total_bandwidth, fx.pools.total_compute).unwrap());
        let none = state(vec![None; 4], vec![1e-10; 4], 0.0);
        assert!(equal_share_allocate(&none, &fx.grid, &fx.pools).iter().all(Action::is_null));
        // nine users on an 8-level grid fall below the smallest level
        let nine = state(vec![task(0.5, 0.5, 0.5); 9], vec![1e-10; 9], 0.0);
        assert!(equal_share_allocate(&nine, &fx.grid, &fx.pools).iter().all(Action::is_null));
    }

    #[test]
    fn no_budget_matches_full_game_when_budgets_never_bind() {
        let fx = Fx::new(3, 4);
        let mut users = fx.users.clone();
        for u in &mut users {
            u.risk_weight = 0.0;
        }
        let ctx = PolicyContext {
            users: &users,
            ..fx.ctx()
        };
        let s = state(vec![task(0.3, 0.4, 0.6), task(0.6, 0.3, 0.7), task(0.2, 0.8, 0.5)], vec![1e-10; 3], 0.0);
        // with full budgets and ample margins the budget constraint is slack
        let full = decide(PolicyTag::Aegis, &s, &ctx);
        let free = decide(PolicyTag::AegisNoBudget, &s, &ctx);
        assert_eq!(full.actions, free.actions);
    }

    #[test]
    fn no_pred_uses_observed_states() {
        let fx = Fx::new(2, 4);
        let mut s = state(vec![task(0.8, 0.5, 0.4), task(0.8, 0.5, 0.4)], vec![1e-10; 2], 0.0);
        assert_eq!(decide(PolicyTag::AegisNoPred, &s, &fx.ctx()), decide(PolicyTag::Aegis, &s, &fx.ctx()));
        // forecast: the channel of user 0 drops by 30 dB
        s.predicted_channel[0] = 1e-13;
        let a = decide(PolicyTag::Aegis, &s, &fx.ctx());
        let b = decide(PolicyTag::AegisNoPred, &s, &fx.ctx());
        assert_ne!(a.actions, b.actions);
    }

    #[test]
    fn all_policies_respect_pools_and_inactivity() {
        let fx = Fx::new(6, 8);
        let s = state(
            vec![task(0.9, 0.9, 0.3), None, task(0.2, 0.1, 0.8), task(0.5, 0.5, 0.5), None, task(0.7, 0.3, 0.4)],
            vec![1e-10, 1e-9, 5e-11, 2e-10, 1e-10, 1e-11],
            30e9,
        );
        for tag in PolicyTag::ALL {
            let d = decide(tag, &s, &fx.ctx());
            let sb: f64 = d.actions.iter().map(|a| a.bandwidth).sum();
            let sf: f64 = d.actions.iter().map(|a| a.compute).sum();
            assert!(fx.pools.bandwidth_fits(sb) && fx.pools.compute_fits(sf), "{tag}");
            assert!(d.actions[1].is_null() && d.actions[4].is_null(), "{tag}");
            assert!(d.actions.iter().all(|a| fx.grid.contains(a)), "{tag}");
        }
    }
}
