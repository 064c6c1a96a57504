use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use vanet_trust::config::resolve_scenario;
use vanet_trust::oracle::oracle_replay;
use vanet_trust::output::write_run_dir;
use vanet_trust::runlog::RunLog;
use vanet_trust::sweep::{sweep, write_aggregate, SweepSpec};
use vanet_trust::{run, ConfigError, Policy, SimError};

#[derive(Parser)]
#[command(name = "vanet-trust", version, about = "Event-based trust simulator for vehicular networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its log and metrics.
    Run {
        /// Scenario file, or `preset:single_event` / `preset:multi_event`.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "safe")]
        policy: Policy,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Per-recipient broadcast loss probability.
        #[arg(long)]
        loss: Option<f64>,
        /// Replay the log through the oracle before exiting.
        #[arg(long)]
        verify: bool,
    },
    /// Run every combination of grid point, policy and seed.
    Sweep {
        #[arg(long)]
        scenario: String,
        #[arg(long, value_delimiter = ',', default_value = "tcemd,safe")]
        policies: Vec<Policy>,
        /// `1..10` (inclusive), `3` or `1,4,9`.
        #[arg(long, default_value = "1..10")]
        seeds: String,
        /// `key=v1,v2,...`; repeat for more axes.
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        loss: Option<f64>,
        #[arg(long)]
        verify: bool,
    },
    /// Replay a run log through the oracle.
    Verify {
        #[arg(long)]
        log: PathBuf,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty seed range {s}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().with_context(|| format!("bad seed `{p}`")))
        .collect()
}

fn parse_axis(s: &str) -> Result<(String, Vec<String>)> {
    let Some((k, v)) = s.split_once('=') else {
        bail!("expected key=v1,v2 in `--set {s}`");
    };
    Ok((k.trim().to_string(), v.split(',').map(|x| x.trim().to_string()).collect()))
}

fn execute(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run { scenario, policy, seed, out, loss, verify } => {
            let mut cfg = resolve_scenario(&scenario)?;
            cfg.policy = policy;
            if let Some(p) = loss {
                cfg.loss_probability = p;
            }
            cfg.validate()?;
            let seed = seed.unwrap_or(cfg.seed);
            let (log, result) = run(&cfg, seed)?;
            write_run_dir(&out, &log, &result)?;
            println!(
                "{} seed {seed}: {} vehicles, {} reports, {} blacklisted -> {}",
                policy.label(),
                result.totals.vehicles,
                result.totals.reports,
                result.totals.blacklisted,
                out.display()
            );
            if verify {
                let rep = oracle_replay(&log);
                if let Some(d) = rep.first() {
                    eprintln!("divergence: {d}");
                    return Ok(ExitCode::from(3));
                }
                println!("oracle: no divergences");
            }
        }
        Command::Sweep { scenario, policies, seeds, set, out, loss, verify } => {
            let mut base = resolve_scenario(&scenario)?;
            if let Some(p) = loss {
                base.loss_probability = p;
                base.validate()?;
            }
            let spec = SweepSpec {
                base,
                policies,
                seeds: parse_seeds(&seeds)?,
                grid: set.iter().map(|s| parse_axis(s)).collect::<Result<_>>()?,
                verify,
            };
            let results = sweep(&spec)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("sweep.csv");
            write_aggregate(std::io::BufWriter::new(std::fs::File::create(&path)?), &results)?;
            println!("{} runs -> {}", results.len(), path.display());
            let bad: Vec<_> = results.iter().filter(|(_, r)| r.divergences.is_some_and(|d| d > 0)).collect();
            if let Some((key, r)) = bad.first() {
                eprintln!(
                    "{} runs diverged; first: {} {} seed {}: {}",
                    bad.len(),
                    key.point.label(),
                    key.policy.label(),
                    key.seed,
                    r.first_divergence.as_deref().unwrap_or("")
                );
                return Ok(ExitCode::from(3));
            }
        }
        Command::Verify { log } => {
            let log = RunLog::read(&log)?;
            let rep = oracle_replay(&log);
            println!(
                "checked {} decisions, {} reports, {} updates",
                rep.decisions.len(),
                rep.reports.len(),
                rep.gt_trajectory.len()
            );
            if !rep.is_clean() {
                for d in &rep.divergences {
                    eprintln!("divergence: {d}");
                }
                return Ok(ExitCode::from(3));
            }
            println!("no divergences");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let invalid = e.downcast_ref::<ConfigError>().is_some()
                || matches!(e.downcast_ref::<SimError>(), Some(SimError::Config(_) | SimError::Sweep(_)));
            ExitCode::from(if invalid { 2 } else { 1 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1..10").unwrap().len(), 10);
        assert_eq!(parse_seeds("4").unwrap(), vec![4]);
        assert_eq!(parse_seeds("1,4,9").unwrap(), vec![1, 4, 9]);
        assert!(parse_seeds("5..1").is_err());
        assert_eq!(parse_axis("d_d=200,300").unwrap().1, vec!["200", "300"]);
    }
}
