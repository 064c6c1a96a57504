//! Line-delimited JSON run log.
//!
//! The first line is a [`LogHeader`] carrying the resolved configuration,
//! seed and policy. Every following line is one [`Record`], ordered by
//! `(tick, kind, node)`. The log carries enough to recompute every score,
//! trust value and metric without the engine.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{DecisionRecord, Phase};
use crate::channel::{EventMessage, FeedbackReport};
use crate::config::{Policy, ScenarioConfig};
use crate::error::SimError;
use crate::event::EventStatus;
use crate::metrics::MetricsPeriodRecord;
use crate::time::Tick;
use crate::NodeId;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: u32,
    pub policy: Policy,
    pub seed: u64,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Spawn {
        tick: Tick,
        node: NodeId,
        spawn_time: f64,
        lane: u32,
        speed: f64,
        y: f64,
    },
    Status {
        tick: Tick,
        event_id: u32,
        status: EventStatus,
    },
    Position {
        tick: Tick,
        node: NodeId,
        x: f64,
        y: f64,
    },
    Despawn {
        tick: Tick,
        node: NodeId,
    },
    Phase {
        tick: Tick,
        node: NodeId,
        event_id: u32,
        phase: Phase,
    },
    Decision {
        tick: Tick,
        decision: DecisionRecord,
    },
    Broadcast {
        tick: Tick,
        message: EventMessage,
        recipients: Vec<NodeId>,
    },
    Report {
        tick: Tick,
        report: FeedbackReport,
        accepted: bool,
    },
    GtUpdate {
        tick: Tick,
        period: u32,
        t: f64,
        /// Updated subjects with their new trust.
        updated: Vec<(NodeId, f64)>,
        newly_blacklisted: Vec<NodeId>,
        consumed: u64,
    },
    Period {
        tick: Tick,
        metrics: MetricsPeriodRecord,
    },
}

impl Record {
    pub fn tick(&self) -> Tick {
        match self {
            Record::Spawn { tick, .. }
            | Record::Status { tick, .. }
            | Record::Position { tick, .. }
            | Record::Despawn { tick, .. }
            | Record::Phase { tick, .. }
            | Record::Decision { tick, .. }
            | Record::Broadcast { tick, .. }
            | Record::Report { tick, .. }
            | Record::GtUpdate { tick, .. }
            | Record::Period { tick, .. } => *tick,
        }
    }

    pub fn kind_rank(&self) -> u8 {
        match self {
            Record::Spawn { .. } => 0,
            Record::Status { .. } => 1,
            Record::Position { .. } => 2,
            Record::Despawn { .. } => 3,
            Record::Phase { .. } => 4,
            Record::Decision { .. } => 5,
            Record::Broadcast { .. } => 6,
            Record::Report { .. } => 7,
            Record::GtUpdate { .. } => 8,
            Record::Period { .. } => 9,
        }
    }

    /// Vehicle the record is about; event-level records sort first.
    pub fn node(&self) -> Option<NodeId> {
        match self {
            Record::Spawn { node, .. }
            | Record::Position { node, .. }
            | Record::Despawn { node, .. }
            | Record::Phase { node, .. } => Some(*node),
            Record::Decision { decision, .. } => Some(decision.vehicle),
            Record::Broadcast { message, .. } => Some(message.sender),
            Record::Report { report, .. } => Some(report.reporter),
            Record::Status { .. } | Record::GtUpdate { .. } | Record::Period { .. } => None,
        }
    }

    pub fn sort_key(&self) -> (Tick, u8, Option<NodeId>) {
        (self.tick(), self.kind_rank(), self.node())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: LogHeader,
    pub records: Vec<Record>,
}

impl RunLog {
    pub fn new(config: ScenarioConfig, seed: u64) -> Self {
        let header = LogHeader { format: FORMAT_VERSION, policy: config.policy, seed, config };
        Self { header, records: Vec::new() }
    }

    pub fn policy(&self) -> Policy {
        self.header.policy
    }

    pub fn is_ordered(&self) -> bool {
        self.records.windows(2).all(|w| w[0].sort_key() <= w[1].sort_key())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, SimError> {
        let mut lines = r.lines().enumerate();
        let header: LogHeader = match lines.next() {
            Some((_, line)) => serde_json::from_str(&line?)?,
            None => return Err(SimError::Log("empty run log".into())),
        };
        if header.format != FORMAT_VERSION {
            return Err(SimError::Log(format!("unsupported log format {}", header.format)));
        }
        header.config.validate()?;
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| SimError::Log(format!("line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        Ok(Self { header, records })
    }

    pub fn write(&self, path: &Path) -> Result<(), SimError> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn read(path: &Path) -> Result<Self, SimError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }

    pub fn reports(&self) -> impl Iterator<Item = (&FeedbackReport, bool)> {
        self.records.iter().filter_map(|r| match r {
            Record::Report { report, accepted, .. } => Some((report, *accepted)),
            _ => None,
        })
    }

    pub fn decisions(&self) -> impl Iterator<Item = &DecisionRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Decision { decision, .. } => Some(decision),
            _ => None,
        })
    }

    pub fn periods(&self) -> impl Iterator<Item = &MetricsPeriodRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Period { metrics, .. } => Some(metrics),
            _ => None,
        })
    }

    pub fn broadcasts(&self) -> impl Iterator<Item = (Tick, &EventMessage, &[NodeId])> {
        self.records.iter().filter_map(|r| match r {
            Record::Broadcast { tick, message, recipients } => Some((*tick, message, recipients.as_slice())),
            _ => None,
        })
    }

    /// Records that depend only on the seed and the scenario, not on the policy.
    pub fn world_records(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| {
            matches!(r, Record::Spawn { .. } | Record::Position { .. } | Record::Despawn { .. } | Record::Status { .. })
        })
    }
}
