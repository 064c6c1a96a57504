//! Per-period and per-event metrics.
//!
//! Rates are `None` when their denominator is empty so that "no data" stays
//! distinguishable from a perfect score.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agent::DecisionRecord;
use crate::cdu::Label;
use crate::channel::{FeedbackReport, Score};
use crate::config::Policy;
use crate::NodeId;

/// Positive and negative share of a set of reports, revisions included.
pub fn feedback_rates(reports: &[FeedbackReport]) -> (Option<f64>, Option<f64>) {
    if reports.is_empty() {
        return (None, None);
    }
    let n = reports.len() as f64;
    let pos = reports.iter().filter(|r| r.score == Score::Positive).count() as f64;
    let neg = reports.len() as f64 - pos;
    (Some(pos / n), Some(neg / n))
}

/// Share of updated nodes at or below the blacklist threshold, and its complement.
pub fn blacklist_rates(
    ugt: &BTreeSet<NodeId>,
    gt_of: impl Fn(NodeId) -> f64,
    blacklist_threshold: f64,
) -> (Option<f64>, Option<f64>) {
    if ugt.is_empty() {
        return (None, None);
    }
    let low = ugt.iter().filter(|v| gt_of(**v) <= blacklist_threshold).count() as f64;
    let blr = low / ugt.len() as f64;
    (Some(blr), Some(1.0 - blr))
}

pub fn decision_accuracy(decisions: &[DecisionRecord]) -> Option<f64> {
    if decisions.is_empty() {
        return None;
    }
    let ok = decisions.iter().filter(|d| d.correct()).count() as f64;
    Some(ok / decisions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsPeriodRecord {
    pub period_index: u32,
    pub t: f64,
    pub fbr_count: u64,
    pub positive_rate: Option<f64>,
    pub negative_rate: Option<f64>,
    pub ugt_count: u64,
    pub blr: Option<f64>,
    pub n_blr: Option<f64>,
    #[serde(with = "event_pairs")]
    pub per_event_ugt: BTreeMap<u32, u64>,
    /// Accuracy of the decisions taken since the previous period boundary.
    pub decision_accuracy: Option<f64>,
}

impl MetricsPeriodRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        period_index: u32,
        t: f64,
        consumed: &[FeedbackReport],
        ugt: &BTreeSet<NodeId>,
        per_event_ugt: &BTreeMap<u32, BTreeSet<NodeId>>,
        gt_of: impl Fn(NodeId) -> f64,
        blacklist_threshold: f64,
        decisions: &[DecisionRecord],
    ) -> Self {
        let (positive_rate, negative_rate) = feedback_rates(consumed);
        let (blr, n_blr) = blacklist_rates(ugt, gt_of, blacklist_threshold);
        Self {
            period_index,
            t,
            fbr_count: consumed.len() as u64,
            positive_rate,
            negative_rate,
            ugt_count: ugt.len() as u64,
            blr,
            n_blr,
            per_event_ugt: per_event_ugt.iter().map(|(e, s)| (*e, s.len() as u64)).collect(),
            decision_accuracy: decision_accuracy(decisions),
        }
    }

    /// Number of updated nodes that ended the period at or below the threshold.
    pub fn blacklisted_in_period(&self) -> u64 {
        self.blr.map_or(0, |b| (b * self.ugt_count as f64).round() as u64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub untrusted: u64,
    pub suspicious: u64,
    pub honest: u64,
}

impl LabelCounts {
    fn add(&mut self, l: Label) {
        match l {
            Label::Untrusted => self.untrusted += 1,
            Label::Suspicious => self.suspicious += 1,
            Label::Honest => self.honest += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.untrusted + self.suspicious + self.honest
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub method: Policy,
    pub per_event: BTreeMap<u32, LabelCounts>,
}

/// Counts every subject of an event's accepted reports under its final label.
pub fn classify_per_event<'a>(
    method: Policy,
    event_ids: impl IntoIterator<Item = u32>,
    accepted: impl IntoIterator<Item = &'a FeedbackReport>,
    final_label: impl Fn(NodeId) -> Label,
) -> ClassificationSummary {
    let mut subjects: BTreeMap<u32, BTreeSet<NodeId>> = event_ids.into_iter().map(|e| (e, BTreeSet::new())).collect();
    for r in accepted {
        subjects.entry(r.event_id).or_default().insert(r.subject);
    }
    let per_event = subjects
        .into_iter()
        .map(|(e, nodes)| {
            let mut c = LabelCounts::default();
            nodes.into_iter().for_each(|v| c.add(final_label(v)));
            (e, c)
        })
        .collect();
    ClassificationSummary { method, per_event }
}

/// Writes an id-keyed map as `[[id, n], ...]` so it survives the tagged
/// record enum, which cannot parse integer map keys back out of JSON strings.
mod event_pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<u32, u64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u32, u64>, D::Error> {
        Ok(Vec::<(u32, u64)>::deserialize(d)?.into_iter().collect())
    }
}
