//! Central decision unit: report ingestion, periodic global-trust updates,
//! the blacklist and the trust snapshots handed back to vehicles.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel::FeedbackReport;
use crate::config::ScenarioConfig;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Untrusted,
    Suspicious,
    Honest,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Untrusted => "untrusted",
            Label::Suspicious => "suspicious",
            Label::Honest => "honest",
        }
    }
}

/// Three-way trust label: at or below the blacklist threshold is untrusted,
/// up to and including the initial trust is suspicious, above it honest.
pub fn label(gt: f64, blacklist_threshold: f64, initial_trust: f64) -> Label {
    if gt <= blacklist_threshold {
        Label::Untrusted
    } else if gt <= initial_trust {
        Label::Suspicious
    } else {
        Label::Honest
    }
}

/// How a subject's trust moves given the mean of its effective scores.
pub trait UpdateRule: Send + Sync + std::fmt::Debug {
    fn apply(&self, gt: f64, mean_score: f64) -> f64;
}

/// `gt + step * mean`, clamped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdditiveRule {
    pub step: f64,
}

impl UpdateRule for AdditiveRule {
    fn apply(&self, gt: f64, mean_score: f64) -> f64 {
        (gt + self.step * mean_score).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustEntry {
    pub gt: f64,
    pub blacklisted: bool,
    pub label: Label,
    pub registered_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustTable {
    pub blacklist_threshold: f64,
    pub initial_trust: f64,
    entries: BTreeMap<NodeId, TrustEntry>,
}

impl TrustTable {
    pub fn new(blacklist_threshold: f64, initial_trust: f64) -> Self {
        Self { blacklist_threshold, initial_trust, entries: BTreeMap::new() }
    }

    /// Registers `node` at the initial trust; no-op when already known.
    pub fn register(&mut self, node: NodeId, t: f64) {
        let (th, init) = (self.blacklist_threshold, self.initial_trust);
        self.entries.entry(node).or_insert_with(|| TrustEntry {
            gt: init,
            blacklisted: false,
            label: label(init, th, init),
            registered_at: t,
        });
    }

    /// Sets a trust value taken from a run log, applying the same labelling
    /// and blacklisting as an update.
    pub fn restore(&mut self, node: NodeId, gt: f64, t: f64) {
        self.register(node, t);
        let (th, init) = (self.blacklist_threshold, self.initial_trust);
        let e = self.entries.get_mut(&node).expect("registered above");
        e.gt = gt;
        e.label = label(gt, th, init);
        e.blacklisted |= gt <= th;
    }

    pub fn get(&self, node: NodeId) -> Option<&TrustEntry> {
        self.entries.get(&node)
    }

    pub fn gt(&self, node: NodeId) -> f64 {
        self.entries.get(&node).map_or(self.initial_trust, |e| e.gt)
    }

    pub fn is_blacklisted(&self, node: NodeId) -> bool {
        self.entries.get(&node).is_some_and(|e| e.blacklisted)
    }

    pub fn label_of(&self, node: NodeId) -> Label {
        label(self.gt(node), self.blacklist_threshold, self.initial_trust)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &TrustEntry)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn blacklisted(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.iter().filter(|(_, e)| e.blacklisted).map(|(k, _)| *k)
    }
}

/// Read-only view of the trust table as last published.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustSnapshot {
    pub published_at: f64,
    initial_trust: f64,
    entries: BTreeMap<NodeId, (f64, bool)>,
}

impl TrustSnapshot {
    pub fn empty(initial_trust: f64) -> Self {
        Self { published_at: 0.0, initial_trust, entries: BTreeMap::new() }
    }

    pub fn gt(&self, node: NodeId) -> f64 {
        self.entries.get(&node).map_or(self.initial_trust, |e| e.0)
    }

    pub fn is_blacklisted(&self, node: NodeId) -> bool {
        self.entries.get(&node).is_some_and(|e| e.1)
    }
}

/// Reports received since the last update that consumed them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PendingReports {
    reports: Vec<FeedbackReport>,
}

impl PendingReports {
    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn as_slice(&self) -> &[FeedbackReport] {
        &self.reports
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Accepted,
    Rejected,
}

/// Result of one periodic global-trust update.
#[derive(Debug, Clone, PartialEq)]
pub struct GtUpdate {
    pub t: f64,
    /// Subjects whose trust was recomputed.
    pub ugt: BTreeSet<NodeId>,
    pub per_event_ugt: BTreeMap<u32, BTreeSet<NodeId>>,
    /// Every report consumed by this update, in arrival order.
    pub consumed: Vec<FeedbackReport>,
    pub newly_blacklisted: Vec<NodeId>,
}

impl GtUpdate {
    fn empty(t: f64) -> Self {
        Self {
            t,
            ugt: BTreeSet::new(),
            per_event_ugt: BTreeMap::new(),
            consumed: Vec::new(),
            newly_blacklisted: Vec::new(),
        }
    }
}

/// Latest-revision score per (reporter, subject, event); later arrivals win
/// between reports of equal revision.
pub fn effective_scores(reports: &[FeedbackReport]) -> BTreeMap<(NodeId, NodeId, u32), FeedbackReport> {
    let mut out: BTreeMap<(NodeId, NodeId, u32), FeedbackReport> = BTreeMap::new();
    for r in reports {
        let key = (r.reporter, r.subject, r.event_id);
        match out.get(&key) {
            Some(prev) if prev.revision > r.revision => {}
            _ => {
                out.insert(key, *r);
            }
        }
    }
    out
}

#[derive(Debug)]
pub struct Cdu {
    table: TrustTable,
    pending: PendingReports,
    rejected: u64,
    min_reports: usize,
    rule: Box<dyn UpdateRule>,
}

impl Cdu {
    pub fn new(config: &ScenarioConfig) -> Self {
        Self::with_rule(config, Box::new(AdditiveRule { step: config.trust_step }))
    }

    pub fn with_rule(config: &ScenarioConfig, rule: Box<dyn UpdateRule>) -> Self {
        Self {
            table: TrustTable::new(config.blacklist_threshold, config.initial_trust),
            pending: PendingReports::default(),
            rejected: 0,
            min_reports: config.min_reports_for_update as usize,
            rule,
        }
    }

    pub fn table(&self) -> &TrustTable {
        &self.table
    }

    pub fn pending(&self) -> &PendingReports {
        &self.pending
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    pub fn register(&mut self, node: NodeId, t: f64) {
        self.table.register(node, t);
    }

    pub fn ingest(&mut self, report: FeedbackReport) -> IngestOutcome {
        if self.table.is_blacklisted(report.reporter) {
            self.rejected += 1;
            return IngestOutcome::Rejected;
        }
        self.table.register(report.subject, report.created_time);
        self.pending.reports.push(report);
        IngestOutcome::Accepted
    }

    /// Recomputes trust for every subject with an effective score in the
    /// pending window. Does nothing (and keeps the window) when fewer than
    /// `min_reports_for_update` reports are pending.
    pub fn update_global_trust(&mut self, t: f64) -> GtUpdate {
        if self.pending.len() < self.min_reports.max(1) {
            return GtUpdate::empty(t);
        }
        let consumed = std::mem::take(&mut self.pending.reports);
        let mut sums: BTreeMap<NodeId, (i64, i64)> = BTreeMap::new();
        let mut per_event_ugt: BTreeMap<u32, BTreeSet<NodeId>> = BTreeMap::new();
        for ((_, subject, event_id), r) in effective_scores(&consumed) {
            if self.table.is_blacklisted(subject) {
                continue;
            }
            let s = sums.entry(subject).or_default();
            s.0 += r.score.value() as i64;
            s.1 += 1;
            per_event_ugt.entry(event_id).or_default().insert(subject);
        }

        let (th, init) = (self.table.blacklist_threshold, self.table.initial_trust);
        let mut ugt = BTreeSet::new();
        let mut newly_blacklisted = Vec::new();
        for (subject, (sum, n)) in sums {
            let mean = sum as f64 / n as f64;
            self.table.register(subject, t);
            let entry = self.table.entries.get_mut(&subject).expect("registered above");
            entry.gt = self.rule.apply(entry.gt, mean).clamp(0.0, 1.0);
            entry.label = label(entry.gt, th, init);
            if entry.gt <= th {
                entry.blacklisted = true;
                newly_blacklisted.push(subject);
            }
            ugt.insert(subject);
        }
        GtUpdate { t, ugt, per_event_ugt, consumed, newly_blacklisted }
    }

    pub fn publish(&self, t: f64) -> Arc<TrustSnapshot> {
        Arc::new(TrustSnapshot {
            published_at: t,
            initial_trust: self.table.initial_trust,
            entries: self.table.entries.iter().map(|(k, e)| (*k, (e.gt, e.blacklisted))).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Score;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::preset("single_event").unwrap()
    }

    fn report(reporter: u32, subject: u32, score: Score, revision: u8) -> FeedbackReport {
        FeedbackReport {
            reporter: NodeId(reporter),
            subject: NodeId(subject),
            event_id: 1,
            score,
            created_time: 10.0,
            revision,
        }
    }

    #[test]
    fn labels_follow_thresholds() {
        assert_eq!(label(0.2, 0.2, 0.5), Label::Untrusted);
        assert_eq!(label(0.5, 0.2, 0.5), Label::Suspicious);
        assert_eq!(label(0.7, 0.2, 0.5), Label::Honest);
        assert_eq!(label(0.0, 0.2, 0.5), Label::Untrusted);
        assert_eq!(label(0.21, 0.2, 0.5), Label::Suspicious);
    }

    #[test]
    fn ingest_registers_subject_and_rejects_blacklisted_reporters() {
        let mut cdu = Cdu::new(&cfg());
        assert_eq!(cdu.ingest(report(1, 7, Score::Positive, 0)), IngestOutcome::Accepted);
        assert_eq!(cdu.pending().len(), 1);
        assert_eq!(cdu.table().gt(NodeId(7)), 0.5);
        assert!(cdu.table().get(NodeId(7)).is_some());

        for r in [2, 3] {
            cdu.ingest(report(r, 9, Score::Negative, 0));
        }
        cdu.update_global_trust(60.0);
        for r in [2, 3] {
            cdu.ingest(report(r, 9, Score::Negative, 0));
        }
        let up = cdu.update_global_trust(120.0);
        assert_eq!(up.newly_blacklisted, vec![NodeId(9)]);

        let before = cdu.pending().len();
        assert_eq!(cdu.ingest(report(9, 1, Score::Positive, 0)), IngestOutcome::Rejected);
        assert_eq!(cdu.pending().len(), before);
        assert_eq!(cdu.rejected(), 1);
    }

    #[test]
    fn positive_scores_raise_trust() {
        let mut cdu = Cdu::new(&cfg());
        cdu.ingest(report(1, 5, Score::Positive, 0));
        cdu.ingest(report(2, 5, Score::Positive, 0));
        let up = cdu.update_global_trust(60.0);
        assert_eq!(cdu.table().gt(NodeId(5)), 0.65);
        assert_eq!(cdu.table().label_of(NodeId(5)), Label::Honest);
        assert_eq!(up.ugt.len(), 1);
        assert!(cdu.pending().is_empty());
    }

    #[test]
    fn three_negative_periods_blacklist() {
        let mut cdu = Cdu::new(&cfg());
        let mut trail = vec![];
        for period in 1..=3 {
            cdu.ingest(report(1, 5, Score::Negative, 0));
            cdu.update_global_trust(60.0 * period as f64);
            trail.push((cdu.table().gt(NodeId(5)), cdu.table().is_blacklisted(NodeId(5))));
        }
        assert!((trail[0].0 - 0.35).abs() < 1e-12 && !trail[0].1);
        assert!((trail[1].0 - 0.20).abs() < 1e-12);
        // blacklisted by the second update; the third one leaves it untouched
        assert!(trail[1].1);
        assert_eq!(trail[2], trail[1]);
    }

    #[test]
    fn empty_window_changes_nothing() {
        let mut cdu = Cdu::new(&cfg());
        cdu.register(NodeId(1), 0.0);
        let before = cdu.table().clone();
        let up = cdu.update_global_trust(60.0);
        assert!(up.ugt.is_empty());
        assert_eq!(cdu.table(), &before);
    }

    #[test]
    fn superseding_report_replaces_initial() {
        let mut with = Cdu::new(&cfg());
        with.ingest(report(1, 5, Score::Negative, 0));
        with.ingest(report(1, 5, Score::Positive, 1));
        with.update_global_trust(60.0);
        let mut without = Cdu::new(&cfg());
        without.ingest(report(1, 5, Score::Positive, 1));
        without.update_global_trust(60.0);
        assert_eq!(with.table().gt(NodeId(5)), without.table().gt(NodeId(5)));
    }

    #[test]
    fn snapshot_is_a_value() {
        let mut cdu = Cdu::new(&cfg());
        cdu.register(NodeId(3), 0.0);
        let snap = cdu.publish(0.0);
        cdu.ingest(report(1, 3, Score::Negative, 0));
        cdu.update_global_trust(60.0);
        assert_eq!(snap.gt(NodeId(3)), 0.5);
        assert_eq!(cdu.publish(60.0).gt(NodeId(3)), 0.35);
        let a = cdu.publish(60.0);
        let b = cdu.publish(60.0);
        assert_eq!(a, b);
    }
}
