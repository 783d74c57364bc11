use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Partner;
use crate::clock::Timestamp;
use crate::ids::PartnerId;

/// Snapshot of the counters partner selection reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadView {
    /// Outstanding lending per partner.
    #[serde(default)]
    pub loads: BTreeMap<PartnerId, u32>,
    /// Assignments made to each partner in the current period.
    #[serde(default)]
    pub period_assigned: BTreeMap<PartnerId, u32>,
    pub now: Timestamp,
}

impl LoadView {
    pub fn new(now: Timestamp) -> Self {
        LoadView { loads: BTreeMap::new(), period_assigned: BTreeMap::new(), now }
    }

    pub fn load(&self, id: &PartnerId) -> u32 {
        self.loads.get(id).copied().unwrap_or(0)
    }

    pub fn assigned(&self, id: &PartnerId) -> u32 {
        self.period_assigned.get(id).copied().unwrap_or(0)
    }

    /// Feedback after an assignment: one more outstanding loan and one more
    /// assignment this period.
    pub fn record_assignment(&mut self, id: &PartnerId) {
        *self.loads.entry(id.clone()).or_default() += 1;
        *self.period_assigned.entry(id.clone()).or_default() += 1;
    }

    pub fn record_release(&mut self, id: &PartnerId) {
        if let Some(n) = self.loads.get_mut(id) {
            *n = n.saturating_sub(1);
        }
    }
}

/// Picks one candidate: those open at `view.now` (all of them if none is
/// open), then least outstanding load, then fewest period assignments,
/// then smallest id. `None` only for an empty candidate list.
pub fn select_partner(candidates: &[&Partner], view: &LoadView) -> Option<PartnerId> {
    let any_open = candidates.iter().any(|p| p.is_open(view.now));
    candidates
        .iter()
        .filter(|p| !any_open || p.is_open(view.now))
        .min_by(|a, b| {
            (view.load(&a.id), view.assigned(&a.id), &a.id).cmp(&(view.load(&b.id), view.assigned(&b.id), &b.id))
        })
        .map(|p| p.id.clone())
}

/// Full preference order under the same rule; open partners come first, so
/// the head always equals `select_partner`.
pub fn rank_partners(candidates: &[&Partner], view: &LoadView) -> Vec<PartnerId> {
    let mut keyed: Vec<_> = candidates
        .iter()
        .map(|p| ((!p.is_open(view.now), view.load(&p.id), view.assigned(&p.id)), p.id.clone()))
        .collect();
    keyed.sort();
    keyed.dedup_by(|a, b| a.1 == b.1);
    keyed.into_iter().map(|(_, id)| id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::reference_epoch;
    use crate::routing::ServiceHours;

    fn open(id: &str) -> Partner {
        let mut p = Partner::network_node(id);
        p.service_hours = ServiceHours::always();
        p
    }

    #[test]
    fn lexicographic_tie_break() {
        let (b, a) = (open("B"), open("A"));
        let view = LoadView::new(reference_epoch());
        assert_eq!(select_partner(&[&b, &a], &view), Some("A".into()));
    }

    #[test]
    fn minimum_load_wins() {
        let (a, b) = (open("A"), open("B"));
        let mut view = LoadView::new(reference_epoch());
        view.loads.insert("A".into(), 5);
        view.loads.insert("B".into(), 2);
        assert_eq!(select_partner(&[&a, &b], &view), Some("B".into()));
    }

    #[test]
    fn closed_partners_only_when_nobody_is_open() {
        let a = Partner::network_node("A"); // 09-17 UTC, closed at midnight
        let b = open("B");
        let mut view = LoadView::new(reference_epoch());
        view.loads.insert("B".into(), 9);
        assert_eq!(select_partner(&[&a, &b], &view), Some("B".into()));
        assert_eq!(select_partner(&[&a], &view), Some("A".into()));
        assert_eq!(rank_partners(&[&a, &b], &view), vec![PartnerId::from("B"), PartnerId::from("A")]);
        assert_eq!(select_partner(&[], &view), None);
    }
}
