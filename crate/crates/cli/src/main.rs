//! `aegis`: run episodes, sweeps, the prediction ablation and the game
//! property checks from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use aegis_core::baselines::PolicyTag;
use aegis_core::config::ExperimentConfig;
use aegis_core::game::audit::{check_oracle_equivalence, check_potential_identity};
use aegis_core::harness::{
    check_convergence, emit_outputs, episode_seed, run_episode, run_sweep, write_episode_csv, EpisodeMetrics,
    MetricsRow, MetricsWriter, PairedComparison, METRIC_NAMES,
};
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aegis", version, about = "Risk-budgeted edge inference scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed (overrides the configuration).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// User counts, comma separated (overrides the configuration).
    #[arg(long, value_delimiter = ',')]
    users: Option<Vec<usize>>,
    /// Episodes per point (overrides the configuration).
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a single episode and write its per-slot trace.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "AEGIS")]
        policy: PolicyTag,
    },
    /// Sweep user counts and policies; write metrics, plot data and a manifest.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Policies, comma separated (overrides the configuration).
        #[arg(long, value_delimiter = ',')]
        policy: Option<Vec<PolicyTag>>,
    },
    /// Compare AEGIS with its prediction-free ablation on paired seeds.
    Ablation {
        #[command(flatten)]
        common: Common,
    },
    /// Check the game's potential identity, convergence and optimality gap.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        /// Random unilateral swaps for the potential identity.
        #[arg(long, default_value_t = 10_000)]
        identity_cases: usize,
        /// Random small instances compared against exhaustive search.
        #[arg(long, default_value_t = 1_000)]
        oracle_instances: usize,
    },
}

fn load(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = Some(o.clone());
    }
    if let Some(u) = &common.users {
        cfg.users = u.clone();
    }
    if let Some(e) = common.episodes {
        cfg.episodes = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn print_row(row: &MetricsRow) {
    let cells: Vec<String> = METRIC_NAMES
        .iter()
        .zip(row.stats)
        .map(|(m, (mean, std))| format!("{m}={mean:.4}±{std:.4}"))
        .collect();
    println!("{:<14} n={:<3} {}", row.policy, row.n_users, cells.join(" "));
}

fn cmd_run(cfg: &ExperimentConfig, policy: PolicyTag) -> anyhow::Result<()> {
    let n = cfg.users[0];
    let seed = episode_seed(cfg.seed, n, 0);
    let log = run_episode(cfg, policy, n, seed)?;
    let dir = out_dir(cfg);
    let path = dir.join(format!("episode_{}_{}users.csv", policy.name(), n));
    write_episode_csv(&log, &path)?;
    let row = MetricsRow::aggregate(policy.name(), n, &[EpisodeMetrics::of(&log)]);
    print_row(&row);
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_sweep(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let dir = out_dir(cfg);
    let mut writer = MetricsWriter::create(&dir)?;
    let rows = run_sweep(cfg, |row| {
        print_row(row);
        writer.write(row)
    })?;
    emit_outputs(&rows, cfg, &dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_ablation(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let n = if cfg.users.len() == 1 { cfg.users[0] } else { 20 };
    let cmp = PairedComparison::run(cfg, PolicyTag::Aegis, PolicyTag::AegisNoPred, n)?;
    let rows = [
        MetricsRow::aggregate(PolicyTag::Aegis.name(), n, &cmp.first),
        MetricsRow::aggregate(PolicyTag::AegisNoPred.name(), n, &cmp.second),
    ];
    for r in &rows {
        print_row(r);
    }
    let e = cfg.episodes;
    println!(
        "episodes where AEGIS is better: TIR {}/{e}, AVR {}/{e}, ASU {}/{e}, CR {}/{e}",
        cmp.count(|a, b| a.tir.value > b.tir.value),
        cmp.count(|a, b| a.avr.value < b.avr.value),
        cmp.count(|a, b| a.asu > b.asu),
        cmp.count(|a, b| a.cr < b.cr),
    );
    emit_outputs(&rows, cfg, &out_dir(cfg))?;
    Ok(())
}

fn cmd_oracle_check(cfg: &ExperimentConfig, identity_cases: usize, oracle_instances: usize) -> anyhow::Result<bool> {
    let mut ok = true;
    let id = check_potential_identity(identity_cases, cfg.seed, 1e-12);
    let pass = id.failures == 0 && id.infeasible_swaps == 0;
    ok &= pass;
    println!(
        "{} potential identity: {} swaps, max |dU - dPhi| = {:.3e}",
        verdict(pass),
        id.cases,
        id.max_abs_error
    );

    let or = check_oracle_equivalence(oracle_instances, cfg.seed, &cfg.game, 1e-9);
    let pass = or.maximizer_not_equilibrium == 0 && or.terminal_not_equilibrium == 0 && or.within_fraction() >= 0.9;
    ok &= pass;
    println!(
        "{} exhaustive oracle: {} instances, within 5% of optimum {:.1}%, exact {}, equilibrium failures {}/{}",
        verdict(pass),
        or.instances,
        100.0 * or.within_fraction(),
        or.exact_matches,
        or.maximizer_not_equilibrium,
        or.terminal_not_equilibrium
    );

    let mut strict = cfg.clone();
    strict.game.threshold = 0.0;
    let n = if cfg.users.len() == 1 { cfg.users[0] } else { 20 };
    let conv = check_convergence(&strict, PolicyTag::Aegis, n, 1e-9)?;
    let pass = conv.converged == conv.slots && conv.equilibria == conv.converged && conv.non_monotone == 0;
    ok &= pass;
    println!(
        "{} convergence: {}/{} slots converged, {} equilibria, mean {:.2} / max {} iterations",
        verdict(pass),
        conv.converged,
        conv.slots,
        conv.equilibria,
        conv.mean_iterations,
        conv.max_iterations
    );
    Ok(ok)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, policy } => load(common).and_then(|cfg| cmd_run(&cfg, *policy)),
        Command::Sweep { common, policy } => load(common).and_then(|mut cfg| {
            if let Some(p) = policy {
                cfg.policies = p.clone();
            }
            cmd_sweep(&cfg)
        }),
        Command::Ablation { common } => load(common).and_then(|cfg| cmd_ablation(&cfg)),
        Command::OracleCheck {
            common,
            identity_cases,
            oracle_instances,
        } => load(common).and_then(|cfg| {
            if cmd_oracle_check(&cfg, *identity_cases, *oracle_instances)? {
                Ok(())
            } else {
                bail!("game property check failed")
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
