//! Sweeps over user counts and policies with paired episode seeds.

use rayon::prelude::*;

use super::episode::{episode_seed, run_episode};
use super::metrics::{EpisodeMetrics, MetricsRow};
use crate::baselines::PolicyTag;
use crate::config::ExperimentConfig;
use crate::error::Result;

/// Metrics of every episode of one (policy, user count) point, in episode
/// order. Episodes run in parallel; episode `e` uses the same seed for every
/// policy.
pub fn run_point(cfg: &ExperimentConfig, policy: PolicyTag, n_users: usize) -> Result<Vec<EpisodeMetrics>> {
    (0..cfg.episodes)
        .into_par_iter()
        .map(|e| {
            let log = run_episode(cfg, policy, n_users, episode_seed(cfg.seed, n_users, e))?;
            Ok(EpisodeMetrics::of(&log))
        })
        .collect()
}

/// Runs every configured user count and policy. `on_row` sees each row as
/// soon as it is complete.
pub fn run_sweep(cfg: &ExperimentConfig, mut on_row: impl FnMut(&MetricsRow) -> Result<()>) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.users.len() * cfg.policies.len());
    for &n in &cfg.users {
        for &policy in &cfg.policies {
            let episodes = run_point(cfg, policy, n)?;
            let row = MetricsRow::aggregate(policy.name(), n, &episodes);
            on_row(&row)?;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Per-episode comparison of two policies on paired seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedComparison {
    pub first: Vec<EpisodeMetrics>,
    pub second: Vec<EpisodeMetrics>,
}

impl PairedComparison {
    pub fn run(cfg: &ExperimentConfig, first: PolicyTag, second: PolicyTag, n_users: usize) -> Result<Self> {
        Ok(Self {
            first: run_point(cfg, first, n_users)?,
            second: run_point(cfg, second, n_users)?,
        })
    }

    /// Episodes where `better(first, second)` holds.
    pub fn count(&self, better: impl Fn(&EpisodeMetrics, &EpisodeMetrics) -> bool) -> usize {
        self.first.iter().zip(&self.second).filter(|(a, b)| better(a, b)).count()
    }
}

/// Convergence statistics of the game scheduler over whole episodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceReport {
    pub slots: usize,
    pub converged: usize,
    /// Converged slots whose profile passed the equilibrium check.
    pub equilibria: usize,
    /// Slots whose potential trace was not strictly increasing.
    pub non_monotone: usize,
    pub max_iterations: usize,
    pub mean_iterations: f64,
}

/// Runs `policy` (a game policy) for `cfg.episodes` episodes at `n_users`
/// and checks every slot: convergence before the iteration cap, the
/// equilibrium property of the result (within `tolerance`), and a strictly
/// increasing potential along the improvement path.
pub fn check_convergence(
    cfg: &ExperimentConfig,
    policy: PolicyTag,
    n_users: usize,
    tolerance: f64,
) -> Result<ConvergenceReport> {
    use crate::game::{GameVariant, SlotGame};

    let variant = if policy == PolicyTag::AegisNoBudget {
        GameVariant::NO_BUDGET
    } else {
        GameVariant::FULL
    };
    let grid = cfg.grid()?;
    let pools = cfg.pools()?;
    let radio = cfg.radio()?;
    let reports = (0..cfg.episodes)
        .into_par_iter()
        .map(|e| {
            let mut rep = ConvergenceReport::default();
            let mut total_iterations = 0usize;
            super::episode::run_episode_inspected(cfg, policy, n_users, episode_seed(cfg.seed, n_users, e), |state, users, d| {
                rep.slots += 1;
                total_iterations += d.iterations;
                rep.max_iterations = rep.max_iterations.max(d.iterations);
                if d.potential_trace.windows(2).any(|w| w[1] <= w[0]) {
                    rep.non_monotone += 1;
                }
                if d.converged {
                    rep.converged += 1;
                    let game = SlotGame::new(state, users, &grid, &pools, &radio, variant);
                    if game.verify_equilibrium(&d.actions, tolerance) {
                        rep.equilibria += 1;
                    }
                }
                Ok(())
            })?;
            rep.mean_iterations = total_iterations as f64;
            Ok(rep)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = ConvergenceReport::default();
    let mut total_iterations = 0.0;
    for r in reports {
        out.slots += r.slots;
        out.converged += r.converged;
        out.equilibria += r.equilibria;
        out.non_monotone += r.non_monotone;
        out.max_iterations = out.max_iterations.max(r.max_iterations);
        total_iterations += r.mean_iterations;
    }
    out.mean_iterations = if out.slots == 0 { 0.0 } else { total_iterations / out.slots as f64 };
    Ok(out)
}
