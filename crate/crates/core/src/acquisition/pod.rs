use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::money::Money;
use crate::request::Flow;

/// Purchase-on-demand rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PodParams {
    pub max_cost: Money,
    pub eligible_groups: BTreeSet<String>,
    pub excluded_genres: BTreeSet<String>,
    pub student_high_demand_allowed: bool,
}

impl Default for PodParams {
    fn default() -> Self {
        PodParams {
            max_cost: Money::from_euros(150),
            eligible_groups: ["staff".to_string()].into(),
            excluded_genres: ["syllabus", "tourist guide", "school book"].map(String::from).into(),
            student_high_demand_allowed: true,
        }
    }
}

/// The facts about one request that decide purchase on demand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PodCandidate {
    pub flow: Flow,
    /// Only obtainable in print through international lending.
    pub print_only: bool,
    pub patron_group: String,
    #[serde(default)]
    pub genre: Option<String>,
    /// High demand, or mandatory / highly recommended reading.
    #[serde(default)]
    pub high_demand: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PodVerdict {
    pub eligible: bool,
    pub reason: String,
}

impl PodVerdict {
    fn no(reason: impl Into<String>) -> Self {
        PodVerdict { eligible: false, reason: reason.into() }
    }
}

pub fn pod_eligibility(candidate: &PodCandidate, price_quote: Money, params: &PodParams) -> PodVerdict {
    if candidate.flow != Flow::Returnable || !candidate.print_only {
        return PodVerdict::no("only print books otherwise borrowed from abroad");
    }
    if price_quote > params.max_cost {
        return PodVerdict::no(format!("quote {price_quote} above the {} cap", params.max_cost));
    }
    if let Some(genre) = candidate.genre.as_deref().filter(|g| params.excluded_genres.contains(*g)) {
        return PodVerdict::no(format!("genre {genre:?} is excluded"));
    }
    if params.eligible_groups.contains(&candidate.patron_group) {
        return PodVerdict { eligible: true, reason: format!("requested by {}", candidate.patron_group) };
    }
    if candidate.patron_group == "student" && candidate.high_demand && params.student_high_demand_allowed {
        return PodVerdict { eligible: true, reason: "student request for high-demand or mandatory reading".into() };
    }
    PodVerdict::no(format!("patron group {:?} not eligible", candidate.patron_group))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn staff_book() -> PodCandidate {
        PodCandidate {
            flow: Flow::Returnable,
            print_only: true,
            patron_group: "staff".into(),
            genre: Some("monograph".into()),
            high_demand: false,
        }
    }

    #[test]
    fn cap_genre_and_groups() {
        let p = PodParams::default();
        assert!(!pod_eligibility(&staff_book(), Money::from_euros(160), &p).eligible);
        assert!(pod_eligibility(&staff_book(), Money::from_euros(80), &p).eligible);
        let guide = PodCandidate { genre: Some("tourist guide".into()), ..staff_book() };
        assert!(!pod_eligibility(&guide, Money::from_euros(20), &p).eligible);
        let student = PodCandidate { patron_group: "student".into(), high_demand: true, ..staff_book() };
        assert!(pod_eligibility(&student, Money::from_euros(40), &p).eligible);
        let casual = PodCandidate { high_demand: false, ..student };
        assert!(!pod_eligibility(&casual, Money::from_euros(40), &p).eligible);
    }
}
