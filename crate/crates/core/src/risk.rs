//! Delay, deadline-margin, risk-surrogate, timeliness and budget arithmetic.
//!
//! The same functions serve the realized path (observed channel and backlog)
//! and the predicted path (forecast channel and backlog); callers only swap
//! the state they pass in.

use crate::error::{Error, Result};
use crate::model::{Action, EpisodeLog, ResourcePools, TaskSpec, UserProfile};

/// Uplink transmission delay `L / (b log2(1 + SINR))`.
pub fn tx_delay(data_bits: f64, bandwidth: f64, sinr: f64) -> f64 {
    data_bits / (bandwidth * (1.0 + sinr).log2())
}

/// Queueing delay of a newly admitted task, `Q / (F_tot - Σf + ε_f)`.
///
/// Aggregates that exceed the pool beyond the rounding tolerance are rejected;
/// within the tolerance the residual capacity is clamped at zero.
pub fn queue_delay(backlog: f64, sum_compute: f64, pools: &ResourcePools) -> Result<f64> {
    if !pools.compute_fits(sum_compute) {
        return Err(Error::InfeasibleCompute {
            sum_compute,
            capacity: pools.total_compute,
        });
    }
    if backlog == 0.0 {
        return Ok(0.0);
    }
    let residual = (pools.total_compute - sum_compute).max(0.0);
    Ok(backlog / (residual + pools.compute_eps))
}

/// Execution delay `C / f`.
pub fn comp_delay(workload_cycles: f64, compute: f64) -> f64 {
    workload_cycles / compute
}

/// End-to-end delay split into its three components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayBreakdown {
    pub tx: f64,
    pub queue: f64,
    pub comp: f64,
    pub total: f64,
}

impl DelayBreakdown {
    pub const REJECTED: DelayBreakdown = DelayBreakdown {
        tx: f64::INFINITY,
        queue: f64::INFINITY,
        comp: f64::INFINITY,
        total: f64::INFINITY,
    };
}

/// Delay of `task` under `action` given the link SINR, the edge backlog and
/// the aggregate compute of the whole profile. The null action yields `+inf`.
pub fn e2e_delay(
    task: &TaskSpec,
    action: &Action,
    sinr: f64,
    backlog: f64,
    sum_compute: f64,
    pools: &ResourcePools,
) -> Result<DelayBreakdown> {
    if action.is_null() {
        return Ok(DelayBreakdown::REJECTED);
    }
    let tx = tx_delay(task.data_bits, action.bandwidth, sinr);
    let queue = queue_delay(backlog, sum_compute, pools)?;
    let comp = comp_delay(task.workload_cycles, action.compute);
    Ok(DelayBreakdown {
        tx,
        queue,
        comp,
        total: tx + queue + comp,
    })
}

/// Deadline margin, `-inf` for a rejected task.
pub fn deadline_margin(deadline_s: f64, delay_s: f64) -> f64 {
    deadline_s - delay_s
}

/// Risk surrogate `1 / (1 + exp(κΔ))`, evaluated without overflow.
pub fn risk_surrogate(margin: f64, sensitivity: f64) -> f64 {
    if margin == f64::NEG_INFINITY {
        return 1.0;
    }
    let z = sensitivity * margin;
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Margin, risk and timely-service surrogate of one decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskAssessment {
    pub margin: f64,
    pub risk: f64,
    pub timely: f64,
}

impl RiskAssessment {
    pub fn from_delay(deadline_s: f64, delay_s: f64, sensitivity: f64) -> Self {
        let margin = deadline_margin(deadline_s, delay_s);
        let risk = risk_surrogate(margin, sensitivity);
        RiskAssessment {
            margin,
            risk,
            timely: 1.0 - risk,
        }
    }
}

/// Ψ: 1 iff the delay is finite and within the deadline.
pub fn timely_indicator(delay_s: f64, deadline_s: f64) -> u8 {
    u8::from(delay_s.is_finite() && delay_s <= deadline_s)
}

/// `min{B_max, max{0, B - χ r + ρ}}`.
pub fn update_budget(budget: f64, active: bool, risk: f64, recovery: f64, cap: f64) -> f64 {
    let consumed = if active { risk } else { 0.0 };
    (budget - consumed + recovery).max(0.0).min(cap)
}

/// Weighted count of timely-served active tasks over a finished episode.
pub fn long_term_objective(log: &EpisodeLog, users: &[UserProfile]) -> f64 {
    log.slots
        .iter()
        .map(|s| {
            users
                .iter()
                .enumerate()
                .filter(|(i, _)| s.active[*i])
                .map(|(i, u)| u.weight * f64::from(s.timely[i]))
                .sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BITS_PER_MB, CYCLES_PER_GIGA, HZ_PER_MHZ};

    fn pools() -> ResourcePools {
        ResourcePools::new(50.0 * HZ_PER_MHZ, 155.0 * CYCLES_PER_GIGA).unwrap()
    }

    #[test]
    fn tx_delay_cases() {
        assert_eq!(tx_delay(1e6, 1e6, 1.0), 1.0);
        let d1 = tx_delay(3e6, 2e6, 7.0);
        let d2 = tx_delay(3e6, 4e6, 7.0);
        assert!((d1 - 2.0 * d2).abs() < 1e-15);
        // 4.194304e6 / (1e7 * log2(101)), evaluated with mpmath at 50 digits.
        let d = tx_delay(0.5 * BITS_PER_MB, 10.0 * HZ_PER_MHZ, 100.0);
        assert!((d - 0.062_994_454_454_704_73).abs() < 1e-15, "{d}");
    }

    #[test]
    fn queue_delay_cases() {
        let p = pools();
        assert_eq!(queue_delay(0.0, 10e9, &p).unwrap(), 0.0);
        let full = queue_delay(1e3, p.total_compute, &p).unwrap();
        assert_eq!(full, 1e3 / p.compute_eps);
        assert!(full.is_finite());
        let d = queue_delay(1e10, 55e9, &p).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
        assert!(matches!(
            queue_delay(1.0, p.total_compute * 1.01, &p),
            Err(Error::InfeasibleCompute { .. })
        ));
    }

    #[test]
    fn queue_delay_is_monotone_on_grid() {
        let p = pools();
        let backlogs: Vec<f64> = (0..10).map(|k| k as f64 * 5e9).collect();
        let sums: Vec<f64> = (0..=8).map(|k| p.total_compute * k as f64 / 8.0).collect();
        for &q in &backlogs {
            for w in sums.windows(2) {
                assert!(queue_delay(q, w[0], &p).unwrap() <= queue_delay(q, w[1], &p).unwrap());
            }
        }
        for &s in &sums {
            for w in backlogs.windows(2) {
                assert!(queue_delay(w[0], s, &p).unwrap() <= queue_delay(w[1], s, &p).unwrap());
            }
        }
    }

    #[test]
    fn comp_delay_cases() {
        assert_eq!(comp_delay(7e9, 7e9), 1.0);
        assert!((comp_delay(0.5e9, 10e9) - 0.05).abs() < 1e-15);
        assert_eq!(comp_delay(1e9, 2e9), 2.0 * comp_delay(1e9, 4e9));
    }

    #[test]
    fn e2e_composition() {
        let p = pools();
        let task = TaskSpec::new(0.5 * BITS_PER_MB, 0.5e9, 0.5, 1.0).unwrap();
        let a = Action::new(10.0 * HZ_PER_MHZ, 10e9).unwrap();
        let d = e2e_delay(&task, &a, 100.0, 1e10, 55e9, &p).unwrap();
        assert_eq!(d.total, d.tx + d.queue + d.comp);
        // 0.06299445445470473 + 0.1 + 0.05 from the same high-precision oracle.
        assert!((d.total - 0.212_994_454_454_704_73).abs() < 1e-14, "{}", d.total);
        let null = e2e_delay(&task, &Action::NULL, 100.0, 1e10, 55e9, &p).unwrap();
        assert_eq!(null.total, f64::INFINITY);
    }

    #[test]
    fn sigmoid_cases() {
        assert_eq!(risk_surrogate(0.0, 10.0), 0.5);
        assert_eq!(risk_surrogate(f64::INFINITY, 10.0), 0.0);
        assert_eq!(risk_surrogate(f64::NEG_INFINITY, 10.0), 1.0);
        // 1/(1+e^2) from mpmath.
        assert!((risk_surrogate(0.2, 10.0) - 0.119_202_922_022_117_57).abs() < 1e-15);
        assert_eq!(risk_surrogate(1e6, 10.0), 0.0);
        assert_eq!(risk_surrogate(-1e6, 10.0), 1.0);
    }

    #[test]
    fn sigmoid_symmetry_and_monotonicity() {
        let mut prev = 1.0;
        for k in -200..=200 {
            let m = k as f64 * 0.01;
            let r = risk_surrogate(m, 10.0);
            assert!((r + risk_surrogate(-m, 10.0) - 1.0).abs() < 1e-15);
            if k > -200 {
                assert!(r < prev);
            }
            prev = r;
        }
    }

    #[test]
    fn null_chain() {
        let d = DelayBreakdown::REJECTED.total;
        assert_eq!(timely_indicator(d, 0.5), 0);
        let ra = RiskAssessment::from_delay(0.5, d, 10.0);
        assert_eq!(ra.margin, f64::NEG_INFINITY);
        assert_eq!(ra.risk, 1.0);
        assert_eq!(ra.timely, 0.0);
    }

    #[test]
    fn timeliness_boundary() {
        assert_eq!(timely_indicator(0.28, 0.28), 1);
        assert_eq!(timely_indicator(0.3, 0.28), 0);
        assert_eq!(timely_indicator(f64::INFINITY, 10.0), 0);
    }

    #[test]
    fn budget_cases() {
        assert!((update_budget(0.5, true, 0.3, 0.05, 1.0) - 0.25).abs() < 1e-15);
        assert_eq!(update_budget(1.0, false, 0.9, 0.05, 1.0), 1.0);
        assert_eq!(update_budget(0.01, true, 0.9, 0.05, 1.0), 0.0);
        // inactive users ignore the risk argument
        assert_eq!(update_budget(0.2, false, 1.0, 0.05, 1.0), 0.25);
    }

    #[test]
    fn inactive_recovery_is_min_of_gap_and_k_rho() {
        let (cap, rho) = (0.8, 0.05);
        for start in [0.0, 0.3, 0.7, 0.8] {
            for k in 0..30usize {
                let mut b: f64 = start;
                for _ in 0..k {
                    b = update_budget(b, false, 0.0, rho, cap);
                }
                let expect = start + (cap - start).min(k as f64 * rho);
                assert!((b - expect).abs() < 1e-12, "start={start} k={k}");
            }
        }
    }
}
