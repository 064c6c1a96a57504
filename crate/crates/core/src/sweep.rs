//! Parameter sweeps: grid points × policies × seeds, run in parallel.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::config::{Policy, ScenarioConfig};
use crate::engine::{run, RunResult};
use crate::error::SimError;
use crate::oracle::oracle_replay;
use crate::output::{metrics_row, METRICS_HEADER};

/// One combination of overrides, e.g. `d_d=200`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridPoint(pub Vec<(String, String)>);

impl GridPoint {
    pub fn label(&self) -> String {
        if self.0.is_empty() {
            return "base".into();
        }
        self.0.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
    }

    pub fn apply(&self, base: &ScenarioConfig) -> Result<ScenarioConfig, SimError> {
        let mut cfg = base.clone();
        for (k, v) in &self.0 {
            cfg = cfg.with_override(k, v)?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SweepKey {
    pub point: GridPoint,
    pub policy: Policy,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub policies: Vec<Policy>,
    pub seeds: Vec<u64>,
    /// Parameter name and the values to try; the grid is their product.
    pub grid: Vec<(String, Vec<String>)>,
    /// Replay every run through the oracle.
    pub verify: bool,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub result: RunResult,
    /// Number of oracle divergences, when verification was requested.
    pub divergences: Option<usize>,
    pub first_divergence: Option<String>,
}

pub type SweepResults = BTreeMap<SweepKey, SweepRun>;

impl SweepSpec {
    pub fn points(&self) -> Vec<GridPoint> {
        let mut points = vec![GridPoint(Vec::new())];
        for (key, values) in &self.grid {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut next = p.0.clone();
                        next.push((key.clone(), v.clone()));
                        GridPoint(next)
                    })
                })
                .collect();
        }
        points
    }

    pub fn run_count(&self) -> usize {
        self.points().len() * self.policies.len() * self.seeds.len()
    }

    /// Resolves every grid point up front; any invalid point aborts.
    pub fn resolve(&self) -> Result<Vec<(GridPoint, ScenarioConfig)>, SimError> {
        if self.seeds.is_empty() {
            return Err(SimError::Sweep("seed list is empty".into()));
        }
        if self.policies.is_empty() {
            return Err(SimError::Sweep("policy list is empty".into()));
        }
        if let Some((k, _)) = self.grid.iter().find(|(_, v)| v.is_empty()) {
            return Err(SimError::Sweep(format!("no values given for `{k}`")));
        }
        self.points()
            .into_iter()
            .map(|p| match p.apply(&self.base) {
                Ok(cfg) => Ok((p, cfg)),
                Err(e) => Err(SimError::Sweep(format!("grid point {}: {e}", p.label()))),
            })
            .collect()
    }
}

pub fn sweep(spec: &SweepSpec) -> Result<SweepResults, SimError> {
    let resolved = spec.resolve()?;
    let jobs: Vec<(SweepKey, ScenarioConfig)> = resolved
        .iter()
        .flat_map(|(p, cfg)| {
            spec.policies.iter().flat_map(move |policy| {
                spec.seeds.iter().map(move |seed| {
                    let mut c = cfg.clone();
                    c.policy = *policy;
                    (SweepKey { point: p.clone(), policy: *policy, seed: *seed }, c)
                })
            })
        })
        .collect();
    jobs.into_par_iter()
        .map(|(key, cfg)| {
            let (log, result) = run(&cfg, key.seed)?;
            let (divergences, first_divergence) = if spec.verify {
                let rep = oracle_replay(&log);
                (Some(rep.divergences.len()), rep.first().map(|d| d.to_string()))
            } else {
                (None, None)
            };
            Ok((key, SweepRun { result, divergences, first_divergence }))
        })
        .collect()
}

/// One row per (grid point, policy, seed, period).
pub fn write_aggregate<W: Write>(w: W, results: &SweepResults) -> Result<(), SimError> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["point", "policy", "seed"];
    header.extend(METRICS_HEADER);
    header.extend(["blacklisted_total", "divergences"]);
    csv.write_record(&header)?;
    for (key, run) in results {
        for p in &run.result.periods {
            let mut row = vec![key.point.label(), key.policy.label().to_string(), key.seed.to_string()];
            row.extend(metrics_row(p));
            row.push(run.result.totals.blacklisted.to_string());
            row.push(run.divergences.map(|d| d.to_string()).unwrap_or_default());
            csv.write_record(&row)?;
        }
    }
    csv.flush()?;
    Ok(())
}
