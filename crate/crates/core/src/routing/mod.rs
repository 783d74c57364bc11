//! Lender strings, holdings matching and partner selection.

mod holdings;
mod outcomes;
mod partner;
mod rota;
mod select;

pub use holdings::{match_holdings, Holding, HoldingsIndex};
pub use outcomes::{Outcome, OutcomeLog, PartnerOutcomes};
pub use partner::{LocalTime, Partner, PartnerDirectory, PartnerKind, Pod, ServiceHours};
pub use rota::{build_rota, AssignmentCounts, RotaEntry, RotaInputs, RotaPlan, RotaRequest, RoutingConfig, ALL_LIBRARIES};
pub use select::{rank_partners, select_partner, LoadView};

use crate::ids::PartnerId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RoutingError {
    #[error("invalid partner: {0}")]
    InvalidPartner(String),
    #[error("unknown partner {0}")]
    UnknownPartner(PartnerId),
    #[error("invalid holding: {0}")]
    InvalidHolding(String),
    #[error("no candidate supplier in any tier")]
    NoCandidates,
    #[error("invalid rota: {0}")]
    InvalidRota(String),
}
