use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::PartnerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Filled,
    Unfilled,
    Expired,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartnerOutcomes {
    pub filled: u64,
    pub unfilled: u64,
    pub expired: u64,
    pub turnaround_hours: Vec<f64>,
}

/// Per-partner outcome counters. Counters only grow.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutcomeLog {
    partners: BTreeMap<PartnerId, PartnerOutcomes>,
}

impl OutcomeLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// `turnaround_hours` is kept as a sample for filled outcomes only.
    pub fn record_outcome(&mut self, partner: &PartnerId, outcome: Outcome, turnaround_hours: Option<f64>) {
        let entry = self.partners.entry(partner.clone()).or_default();
        match outcome {
            Outcome::Filled => {
                entry.filled += 1;
                if let Some(h) = turnaround_hours.filter(|h| h.is_finite() && *h >= 0.0) {
                    entry.turnaround_hours.push(h);
                }
            }
            Outcome::Unfilled => entry.unfilled += 1,
            Outcome::Expired => entry.expired += 1,
        }
    }

    pub fn get(&self, partner: &PartnerId) -> Option<&PartnerOutcomes> {
        self.partners.get(partner)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PartnerId, &PartnerOutcomes)> {
        self.partners.iter()
    }
}
