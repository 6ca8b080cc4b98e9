//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use aegis_core::predictor::{LstmConfig, LstmParams, OnlineLstm, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// `x_t = mean + phi (x_{t-1} - mean) + N(0, sigma)`, started from the
/// stationary distribution.
pub fn ar1_series(phi: f64, mean: f64, sigma: f64, len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let noise = Normal::new(0.0, sigma).unwrap();
    let stationary = Normal::new(0.0, sigma / (1.0 - phi * phi).sqrt()).unwrap();
    let mut x = stationary.sample(rng);
    (0..len)
        .map(|_| {
            x = phi * x + noise.sample(rng);
            mean + x
        })
        .collect()
}

/// Trains an online LSTM slot by slot on `train`, then scores one-step
/// forecasts on `held_out` with frozen parameters. Returns the LSTM and the
/// last-observation mean squared errors.
pub fn held_out_mse(cfg: LstmConfig, train: &[f64], held_out: &[f64], rng: &mut impl Rng) -> (f64, f64) {
    let mut model = OnlineLstm::new(cfg, rng);
    for &v in train {
        model.observe(v).unwrap();
    }
    let p = model.params();
    let h = cfg.window;
    let (mut lstm, mut last, mut n) = (0.0, 0.0, 0.0);
    for k in h..held_out.len() {
        let window = &held_out[k - h..k];
        let y = held_out[k];
        let f = p.forward_window(window).unwrap();
        lstm += (f - y) * (f - y);
        last += (window[h - 1] - y) * (window[h - 1] - y);
        n += 1.0;
    }
    (lstm / n, last / n)
}

/// Random parameters (including a non-zero readout) and a random batch.
pub fn gradient_fixture(hidden: usize, window: usize, batch: usize, seed: u64) -> (LstmParams, Vec<Sample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = LstmParams::init(hidden, &mut rng);
    let w_out: Vec<f64> = (0..hidden).map(|_| rng.random_range(-0.5..0.5)).collect();
    p.set_readout(&w_out, rng.random_range(-0.2..0.2));
    p.norm_mean = rng.random_range(-2.0..2.0);
    p.norm_scale = rng.random_range(0.5..2.0);
    let samples = (0..batch)
        .map(|_| Sample {
            window: (0..window).map(|_| rng.random_range(-3.0..3.0)).collect(),
            next: rng.random_range(-3.0..3.0),
        })
        .collect();
    (p, samples)
}

/// Largest relative disagreement between the analytic gradient and central
/// finite differences. Components where both are below `floor` in absolute
/// value are compared absolutely against `floor`.
pub fn max_gradient_error(p: &LstmParams, batch: &[Sample], step: f64, floor: f64) -> f64 {
    let (_, grad) = p.loss_and_gradient(batch).unwrap();
    let base = p.flat();
    let mut q = p.clone();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut v = base.clone();
        v[k] = base[k] + step;
        q.set_flat(&v);
        let up = q.loss(batch).unwrap();
        v[k] = base[k] - step;
        q.set_flat(&v);
        let down = q.loss(batch).unwrap();
        let fd = (up - down) / (2.0 * step);
        let scale = grad[k].abs().max(fd.abs()).max(floor);
        worst = worst.max((grad[k] - fd).abs() / scale);
    }
    worst
}

/// Replays the budget recursion from the log with the arithmetic written
/// out and checks the pool, grid, activity and (optionally) budget
/// constraints of every slot. Returns the first discrepancy.
pub fn audit_log(
    log: &aegis_core::EpisodeLog,
    grid: &aegis_core::ActionGrid,
    pools: &aegis_core::ResourcePools,
    exempt_rejected: bool,
    budgeted: bool,
) -> Result<(), String> {
    let mut budgets: Vec<f64> = log.users.iter().map(|u| u.budget_cap).collect();
    for s in &log.slots {
        let t = s.slot;
        if s.budgets_before != budgets {
            return Err(format!("slot {t}: budgets before do not chain"));
        }
        let sum_b: f64 = s.profile.iter().map(|a| a.bandwidth).sum();
        let sum_f: f64 = s.profile.iter().map(|a| a.compute).sum();
        if !pools.bandwidth_fits(sum_b) || !pools.compute_fits(sum_f) {
            return Err(format!("slot {t}: pools exceeded ({sum_b}, {sum_f})"));
        }
        for (i, u) in log.users.iter().enumerate() {
            let a = &s.profile[i];
            if !grid.contains(a) || (!s.active[i] && !a.is_null()) {
                return Err(format!("slot {t} user {i}: action off grid or inactive user served"));
            }
            if budgeted && !a.is_null() && s.predicted_risk[i] > budgets[i] {
                return Err(format!("slot {t} user {i}: risk {} above budget {}", s.predicted_risk[i], budgets[i]));
            }
            let charged = s.active[i] && !(exempt_rejected && a.is_null());
            let spent = if charged { s.predicted_risk[i] } else { 0.0 };
            let next = (budgets[i] - spent + u.recovery_rate).max(0.0).min(u.budget_cap);
            if s.budgets_after[i] != next || !(0.0..=u.budget_cap).contains(&next) {
                return Err(format!("slot {t} user {i}: budget {} != replayed {next}", s.budgets_after[i]));
            }
        }
        budgets = s.budgets_after.clone();
    }
    Ok(())
}
