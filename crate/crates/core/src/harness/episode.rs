//! One closed-loop episode: forecast, schedule, realize, update budgets.
//!
//! Timing within slot `t`: the scheduler sees the measurements of the end of
//! slot `t − 1` (the observed fields of [`SlotState`]) and the one-step
//! forecasts of slot `t` (the predicted fields). The environment then moves
//! to its slot-`t` channel and backlog, against which delays are realized.
//! Finally the predictor ingests the new measurements and trains.
//!
//! All exogenous randomness (activation, tasks, channels, background load,
//! initialization) comes from separate streams derived from the episode
//! seed, so every policy run with the same seed faces the same world apart
//! from the backlog, which reacts to its own decisions.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{decide, Decision, PolicyContext, PolicyTag};
use crate::config::ExperimentConfig;
use crate::environment::{
    compute_sinr, draw_activation, load_activity_probabilities, synthesize_activity_probabilities, BacklogProcess,
    ChannelProcess,
};
use crate::error::{Error, Result};
use crate::game::{GameVariant, SlotGame};
use crate::model::{Action, EpisodeLog, SlotRecord, SlotState, UserProfile, CYCLES_PER_GIGA};
use crate::predictor::{LstmPredictor, StatePredictor};
use crate::risk::{e2e_delay, risk_surrogate, timely_indicator, update_budget};

const STREAM_INIT: u64 = 0;
const STREAM_ACTIVATION: u64 = 1;
const STREAM_TASKS: u64 = 2;
const STREAM_CHANNEL: u64 = 3;
const STREAM_BACKLOG: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Seed of episode `episode` at sweep point `n_users`; identical for every policy.
pub fn episode_seed(base: u64, n_users: usize, episode: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(((n_users as u64) << 32) | episode as u64);
    rng.next_u64()
}

/// Activity probabilities for `n_users`: from the configured trace, or
/// synthesized from the given stream.
pub fn activity_probabilities(cfg: &ExperimentConfig, n_users: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    match &cfg.activity.trace {
        Some(path) => {
            let file = std::fs::File::open(path)?;
            load_activity_probabilities(file, n_users, cfg.activity.days_in_month, cfg.activity.region.as_deref())
        }
        None => Ok(synthesize_activity_probabilities(n_users, cfg.activity.synth_range, rng)),
    }
}

/// Runs `policy` for `cfg.horizon` slots with `n_users` users.
///
/// Any violated invariant (pool limits, inactive users served, off-grid
/// actions, budget constraint of the budgeted policies, budgets outside
/// `[0, cap]`) aborts with [`Error::InvariantBreach`].
pub fn run_episode(cfg: &ExperimentConfig, policy: PolicyTag, n_users: usize, seed: u64) -> Result<EpisodeLog> {
    run_episode_inspected(cfg, policy, n_users, seed, |_, _, _| Ok(()))
}

/// [`run_episode`] that hands every slot's scheduling state, user profiles
/// and decision to `inspect` before the slot is realized. An error from
/// `inspect` aborts the episode.
pub fn run_episode_inspected(
    cfg: &ExperimentConfig,
    policy: PolicyTag,
    n_users: usize,
    seed: u64,
    mut inspect: impl FnMut(&SlotState, &[UserProfile], &Decision) -> Result<()>,
) -> Result<EpisodeLog> {
    let pools = cfg.pools()?;
    let grid = cfg.grid()?;
    let radio = cfg.radio()?;

    let mut init_rng = stream(seed, STREAM_INIT);
    let mut act_rng = stream(seed, STREAM_ACTIVATION);
    let mut task_rng = stream(seed, STREAM_TASKS);
    let mut chan_rng = stream(seed, STREAM_CHANNEL);
    let mut load_rng = stream(seed, STREAM_BACKLOG);

    let probs = activity_probabilities(cfg, n_users, &mut init_rng)?;
    let users: Vec<UserProfile> = cfg.user_profiles(&probs)?;
    for u in &users {
        u.validate()?;
    }
    let probs: Vec<f64> = users.iter().map(|u| u.activity_prob).collect();

    let [lo, hi] = cfg.channel.mean_db_range;
    let means = (0..n_users)
        .map(|_| if lo == hi { lo } else { rand::Rng::random_range(&mut init_rng, lo..=hi) })
        .collect();
    let mut channel = ChannelProcess::new(means, cfg.channel.ar_coeff, cfg.channel.innovation_std_db)?;
    channel.init_stationary(&mut init_rng);
    let mut backlog = BacklogProcess::new(
        cfg.backlog.initial_gcycles * CYCLES_PER_GIGA,
        cfg.backlog.arrival_max_fraction * pools.total_compute * pools.slot_duration,
    )?;
    let mut predictor = LstmPredictor::new(n_users, cfg.predictor, &mut init_rng);

    // measurements available before the first decision
    let mut gains = channel.gains();
    let mut queue = backlog.backlog();
    predictor.observe(&gains, queue)?;

    let ctx = PolicyContext {
        users: &users,
        grid: &grid,
        pools: &pools,
        radio: &radio,
        game: &cfg.game,
    };
    let mut budgets: Vec<f64> = users.iter().map(|u| u.budget_cap).collect();
    let mut prev_sum_compute = 0.0;
    let mut slots = Vec::with_capacity(cfg.horizon);

    for t in 1..=cfg.horizon {
        let active = draw_activation(&probs, &mut act_rng);
        // tasks are drawn for everyone so the stream stays aligned across policies
        let tasks = users
            .iter()
            .zip(&active)
            .map(|(u, &a)| {
                let task = cfg.tasks.draw(u.weight, &mut task_rng);
                a.then_some(task)
            })
            .collect();
        let forecast = predictor.predict()?;
        let state = SlotState {
            slot: t,
            active,
            tasks,
            observed_channel: gains.clone(),
            observed_backlog: queue,
            predicted_channel: forecast.channel,
            predicted_backlog: forecast.backlog,
            budgets: budgets.clone(),
        };
        state.validate(&users)?;

        let decision = decide(policy, &state, &ctx);
        let breach = |reason: String| Error::InvariantBreach { slot: t, reason };
        let actions = &decision.actions;

        // The state the policy's risk is judged on: AEGISNoPred schedules on
        // observations, every other policy is assessed on the forecasts.
        let eval_state = if policy == PolicyTag::AegisNoPred {
            state.with_observed_as_predicted()
        } else {
            state.clone()
        };
        let full = SlotGame::new(&eval_state, &users, &grid, &pools, &radio, GameVariant::FULL);
        let loose = SlotGame::new(&eval_state, &users, &grid, &pools, &radio, GameVariant::NO_BUDGET);
        if !loose.is_feasible(actions) {
            return Err(breach(format!("{policy} produced a profile outside the pools, grid or activity set")));
        }
        if policy.enforces_budget() && !full.is_feasible(actions) {
            return Err(breach(format!("{policy} admitted a user above its risk budget")));
        }
        let assessed = full.assess(actions);
        inspect(&eval_state, &users, &decision)?;

        // the world moves to slot t
        gains = channel.step(&mut chan_rng);
        let arrival = backlog.draw_arrival(&mut load_rng);
        queue = backlog.step_with_arrival(arrival, prev_sum_compute, &pools);
        let sum_compute = assessed.sum_compute;

        let mut realized_delay = vec![f64::INFINITY; n_users];
        let mut timely = vec![0u8; n_users];
        let mut realized_risk = vec![0.0; n_users];
        let mut budgets_after = vec![0.0; n_users];
        for i in 0..n_users {
            let u = &users[i];
            if state.active[i] {
                let task = state.task(i);
                let d = e2e_delay(task, &actions[i], compute_sinr(gains[i], &radio), queue, sum_compute, &pools)?;
                realized_delay[i] = d.total;
                timely[i] = timely_indicator(d.total, task.deadline_s);
                realized_risk[i] = risk_surrogate(task.deadline_s - d.total, u.risk_sensitivity);
            }
            let consumed = consumed_risk(state.active[i], &actions[i], assessed.risk[i], cfg.budget.exempt_rejected);
            budgets_after[i] = update_budget(budgets[i], consumed.is_some(), consumed.unwrap_or(0.0), u.recovery_rate, u.budget_cap);
            if !(0.0..=u.budget_cap).contains(&budgets_after[i]) {
                return Err(breach(format!("budget of user {i} left [0, {}]", u.budget_cap)));
            }
        }

        slots.push(SlotRecord {
            slot: t,
            active: state.active.clone(),
            tasks: state.tasks.clone(),
            profile: actions.clone(),
            realized_delay,
            timely,
            predicted_risk: assessed.risk,
            realized_risk,
            budgets_before: budgets,
            budgets_after: budgets_after.clone(),
            potential: assessed.potential,
            iterations: decision.iterations,
            converged: decision.converged,
            potential_trace: decision.potential_trace,
        });

        budgets = budgets_after;
        prev_sum_compute = sum_compute;
        predictor.observe(&gains, queue)?;
    }

    Ok(EpisodeLog {
        policy: policy.name().to_string(),
        seed,
        users,
        slots,
    })
}

/// Risk charged to a user's budget this slot, `None` when nothing is charged.
pub fn consumed_risk(active: bool, action: &Action, risk: f64, exempt_rejected: bool) -> Option<f64> {
    if !active || (exempt_rejected && action.is_null()) {
        None
    } else {
        Some(risk)
    }
}
