//! Randomized property checks for the slot game.
//!
//! These back the `oracle-check` command and the acceptance suite: the exact
//! potential identity over random unilateral swaps, and agreement between
//! the improvement loop and the exhaustive maximizer on small instances.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{GameConfig, GameVariant, SlotGame};
use crate::environment::{RadioParams, TaskDistribution};
use crate::model::{make_action_grid, Action, ActionGrid, ResourcePools, SlotState, UserProfile, CYCLES_PER_GIGA, HZ_PER_MHZ};

/// Self-contained game instance with owned inputs.
#[derive(Debug, Clone)]
pub struct Instance {
    pub pools: ResourcePools,
    pub grid: ActionGrid,
    pub radio: RadioParams,
    pub users: Vec<UserProfile>,
    pub state: SlotState,
}

impl Instance {
    pub fn game(&self, variant: GameVariant) -> SlotGame<'_> {
        SlotGame::new(&self.state, &self.users, &self.grid, &self.pools, &self.radio, variant)
    }
}

/// Shape of the random instances.
#[derive(Debug, Clone, Copy)]
pub struct InstanceSpec {
    pub n_users: usize,
    /// Each user is active independently with this probability.
    pub activity: f64,
    pub bandwidth_levels: usize,
    pub compute_levels: usize,
}

/// Draws an instance around the default operating point: 50 MHz / 155 GHz
/// pools, default task ranges, channel gains around −100..−90 dB, a random
/// backlog of up to one slot of compute, and budgets uniform in `[0, 1]`.
pub fn random_instance<R: Rng + ?Sized>(spec: &InstanceSpec, rng: &mut R) -> Instance {
    let pools = ResourcePools::new(50.0 * HZ_PER_MHZ, 155.0 * CYCLES_PER_GIGA).expect("default pools");
    let grid = make_action_grid(&pools, spec.bandwidth_levels, spec.compute_levels).expect("grid sizes are positive");
    let radio = RadioParams::new(0.2, 1e-13).expect("default radio");
    let users: Vec<UserProfile> = (0..spec.n_users)
        .map(|id| UserProfile {
            id,
            weight: 1.0,
            activity_prob: spec.activity,
            risk_sensitivity: 10.0,
            budget_cap: 1.0,
            recovery_rate: 0.05,
            bandwidth_cost: 0.1 / pools.total_bandwidth,
            compute_cost: 0.1 / pools.total_compute,
            risk_weight: 0.5,
        })
        .collect();
    let tasks_dist = TaskDistribution::default();
    let shadow = Normal::new(0.0, 4.0).expect("finite std");
    let mut tasks = Vec::with_capacity(spec.n_users);
    let mut channel = Vec::with_capacity(spec.n_users);
    for _ in 0..spec.n_users {
        let active = rng.random_bool(spec.activity);
        tasks.push(active.then(|| tasks_dist.draw(1.0, rng)));
        let db: f64 = rng.random_range(-100.0..-90.0) + shadow.sample(rng);
        channel.push(10f64.powf(db / 10.0));
    }
    let backlog = if rng.random_bool(0.25) {
        0.0
    } else {
        rng.random_range(0.0..pools.total_compute * pools.slot_duration)
    };
    let budgets = (0..spec.n_users).map(|_| rng.random_range(0.0..=1.0)).collect();
    let state = SlotState {
        slot: 1,
        active: tasks.iter().map(Option::is_some).collect(),
        tasks,
        observed_channel: channel.clone(),
        observed_backlog: backlog,
        predicted_channel: channel,
        predicted_backlog: backlog,
        budgets,
    };
    Instance {
        pools,
        grid,
        radio,
        users,
        state,
    }
}

/// A feasible profile reached by random feasible unilateral moves from the
/// all-null profile.
pub fn random_feasible_profile<R: Rng + ?Sized>(game: &SlotGame<'_>, rounds: usize, rng: &mut R) -> Vec<Action> {
    let mut actions = game.null_profile();
    let mut order = game.active().to_vec();
    for _ in 0..rounds {
        order.shuffle(rng);
        for &i in &order {
            let set = game.feasible_unilateral_set(&actions, i);
            actions[i] = *set.choose(rng).expect("null is always feasible");
        }
    }
    actions
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IdentityReport {
    pub cases: usize,
    /// Largest `|ΔU_i − ΔΦ|` observed.
    pub max_abs_error: f64,
    /// Cases at or above the tolerance.
    pub failures: usize,
    /// Swaps that left the feasible set (must be zero).
    pub infeasible_swaps: usize,
}

/// Checks `U_i(a′) − U_i(a) = Φ(a′) − Φ(a)` on random feasible unilateral swaps.
///
/// Both game variants are exercised. Utilities are evaluated through
/// [`SlotGame::marginal_utility`]; the potential change through
/// [`SlotGame::potential_gain`].
pub fn check_potential_identity(cases: usize, seed: u64, tolerance: f64) -> IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = IdentityReport::default();
    while report.cases < cases {
        let spec = InstanceSpec {
            n_users: rng.random_range(1..=8),
            activity: rng.random_range(0.3..=1.0),
            bandwidth_levels: rng.random_range(2..=8),
            compute_levels: rng.random_range(2..=8),
        };
        let inst = random_instance(&spec, &mut rng);
        let variant = if rng.random_bool(0.5) {
            GameVariant::FULL
        } else {
            GameVariant::NO_BUDGET
        };
        let game = inst.game(variant);
        if game.active().is_empty() {
            continue;
        }
        let actions = random_feasible_profile(&game, 2, &mut rng);
        for _ in 0..4 {
            let i = *game.active().choose(&mut rng).expect("non-empty");
            let set = game.feasible_unilateral_set(&actions, i);
            let new = *set.choose(&mut rng).expect("null is always feasible");
            let mut swapped = actions.clone();
            swapped[i] = new;
            if !game.is_feasible(&swapped) {
                report.infeasible_swaps += 1;
            }
            let du = game.marginal_utility(&swapped, i) - game.marginal_utility(&actions, i);
            let dphi = game.potential_gain(&actions, i, &new);
            let err = (du - dphi).abs();
            report.max_abs_error = report.max_abs_error.max(err);
            if !(err < tolerance) {
                report.failures += 1;
            }
            report.cases += 1;
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OracleReport {
    pub instances: usize,
    /// Exhaustive maximizers that failed the equilibrium check.
    pub maximizer_not_equilibrium: usize,
    /// Improvement-loop outputs that failed the equilibrium check.
    pub terminal_not_equilibrium: usize,
    /// Instances where the improvement loop did not converge.
    pub not_converged: usize,
    /// Instances with terminal Φ ≥ Φ* − 0.05·|Φ*|.
    pub within_five_percent: usize,
    /// Instances where the improvement loop reached Φ* exactly.
    pub exact_matches: usize,
}

impl OracleReport {
    pub fn within_fraction(&self) -> f64 {
        if self.instances == 0 {
            return 1.0;
        }
        self.within_five_percent as f64 / self.instances as f64
    }
}

/// Compares the improvement loop with exhaustive search on instances of at
/// most three users over a 2×2 grid.
pub fn check_oracle_equivalence(instances: usize, seed: u64, cfg: &GameConfig, tolerance: f64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::default();
    for _ in 0..instances {
        let spec = InstanceSpec {
            n_users: 3,
            activity: rng.random_range(0.3..=1.0),
            bandwidth_levels: 2,
            compute_levels: 2,
        };
        let inst = random_instance(&spec, &mut rng);
        let game = inst.game(GameVariant::FULL);
        let (best, phi_star) = game
            .brute_force_max_potential(1_000_000)
            .expect("3 users on a 2x2 grid is tiny");
        if !game.verify_equilibrium(&best, tolerance) {
            report.maximizer_not_equilibrium += 1;
        }
        let out = game.run(cfg);
        if !out.converged {
            report.not_converged += 1;
        }
        if !game.verify_equilibrium(&out.profile.actions, tolerance) {
            report.terminal_not_equilibrium += 1;
        }
        let phi = out.profile.potential;
        if phi >= phi_star - 0.05 * phi_star.abs() {
            report.within_five_percent += 1;
        }
        if phi == phi_star {
            report.exact_matches += 1;
        }
        report.instances += 1;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_profiles_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let spec = InstanceSpec {
                n_users: 5,
                activity: 0.7,
                bandwidth_levels: 4,
                compute_levels: 4,
            };
            let inst = random_instance(&spec, &mut rng);
            let game = inst.game(GameVariant::FULL);
            let a = random_feasible_profile(&game, 2, &mut rng);
            assert!(game.is_feasible(&a));
        }
    }

    #[test]
    fn small_identity_run() {
        let r = check_potential_identity(400, 11, 1e-12);
        assert_eq!(r.cases, 400);
        assert_eq!(r.failures, 0, "max error {}", r.max_abs_error);
        assert_eq!(r.infeasible_swaps, 0);
    }

    #[test]
    fn small_oracle_run() {
        let r = check_oracle_equivalence(40, 5, &GameConfig::default(), 1e-9);
        assert_eq!(r.instances, 40);
        assert_eq!(r.maximizer_not_equilibrium, 0);
        assert_eq!(r.terminal_not_equilibrium, 0);
        assert_eq!(r.not_converged, 0);
    }
}
