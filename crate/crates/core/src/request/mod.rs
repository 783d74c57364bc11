//! The request lifecycle: statuses, the transition table, the event history
//! and the engine that commits changes under role checks and quotas.

mod engine;
mod event;
mod status;
mod transitions;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

pub use engine::{Directory, Engine, EngineConfig, JournalEntry, Panel, PanelRow};
pub use event::{replay_history, Change, Event};
pub use status::{RequestStatus, StatusKind, UnfulfilReason};
pub use transitions::{is_annotation, permits, transition_table_json, transitions_from, Operation, Side, Transition, TRANSITIONS};

use crate::bibliography::BibRef;
use crate::clock::Timestamp;
use crate::compliance::{DeliveryMethod, DeliveryReceipt};
use crate::ids::{LibraryId, PatronId, RequestId, UserId};
use crate::routing::RotaPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    /// Physical loans that go back to the lender.
    Returnable,
    /// Copies the borrower keeps.
    NonReturnable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    LibraryManager,
    BorrowingOperator,
    LendingOperator,
    Patron,
}

/// Roles a user holds at one library.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleGrant {
    pub user: UserId,
    pub library: LibraryId,
    pub roles: BTreeSet<Role>,
}

impl RoleGrant {
    pub fn new(user: impl Into<UserId>, library: impl Into<LibraryId>, roles: impl IntoIterator<Item = Role>) -> Self {
        RoleGrant { user: user.into(), library: library.into(), roles: roles.into_iter().collect() }
    }

    /// A manager can do everything either operator can.
    pub fn allows(&self, role: Role) -> bool {
        self.roles.contains(&role)
            || (self.roles.contains(&Role::LibraryManager)
                && matches!(role, Role::BorrowingOperator | Role::LendingOperator))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProfileMode {
    /// May request but never lends.
    Basic,
    #[default]
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryProfile {
    #[serde(default)]
    pub mode: ProfileMode,
    #[serde(default)]
    pub patron_requests_enabled: bool,
    #[serde(default)]
    pub weekly_patron_quota: Option<u32>,
    #[serde(default)]
    pub quarantine_days: u32,
    /// Max concurrent returnables on loan per patron group.
    #[serde(default)]
    pub loan_caps: BTreeMap<String, u32>,
}

impl Default for LibraryProfile {
    fn default() -> Self {
        LibraryProfile {
            mode: ProfileMode::Full,
            patron_requests_enabled: false,
            weekly_patron_quota: None,
            quarantine_days: 0,
            loan_caps: BTreeMap::new(),
        }
    }
}

impl LibraryProfile {
    pub fn basic() -> Self {
        LibraryProfile { mode: ProfileMode::Basic, ..Self::default() }
    }
}

/// Result of the pre-send checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "advice")]
pub enum RouteAdvice {
    LocalHoldings { location: String },
    OpenAccess { url: Url },
    Proceed,
}

/// Who committed an event: a signed-in user, the node itself, or a peer
/// node acting for its library over the wire.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    System,
    User(UserId),
    Peer(LibraryId),
}

impl Actor {
    pub fn user(id: impl Into<UserId>) -> Self {
        Actor::User(id.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("weekly patron quota exhausted")]
    QuotaExceeded,
    #[error("patron requests are disabled at {0}")]
    PatronRequestsDisabled(LibraryId),
    #[error("invalid citation: {0}")]
    InvalidBib(String),
    #[error("a library cannot request from itself")]
    SelfRequest,
    #[error("{0} has a BASIC profile and cannot lend")]
    PartnerIsBasic(LibraryId),
    #[error("{op:?} not allowed in status {status}")]
    InvalidState { status: RequestStatus, op: Operation },
    #[error("request already claimed by {0}")]
    AlreadyClaimed(LibraryId),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("fulfilment needs a delivery receipt")]
    MissingReceipt,
    #[error("returnable items need a temporary barcode on receipt")]
    BarcodeRequired,
    #[error("quarantine runs until {0}")]
    QuarantineNotElapsed(Timestamp),
    #[error("loan cap of {cap} reached for patron group {group}")]
    LoanCapExceeded { group: String, cap: u32 },
    #[error("unknown request {0}")]
    UnknownRequest(RequestId),
    #[error("unknown library {0}")]
    UnknownLibrary(LibraryId),
    #[error("delivery method {0:?} not in the allowed set")]
    MethodNotAllowed(DeliveryMethod),
    #[error("request has no rota")]
    NoRota,
    #[error("history replay failed: {0}")]
    Replay(String),
}

impl EngineError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::QuotaExceeded => "QuotaExceeded",
            EngineError::PatronRequestsDisabled(_) => "PatronRequestsDisabled",
            EngineError::InvalidBib(_) => "InvalidBib",
            EngineError::SelfRequest => "SelfRequest",
            EngineError::PartnerIsBasic(_) => "PartnerIsBasic",
            EngineError::InvalidState { .. } => "InvalidState",
            EngineError::AlreadyClaimed(_) => "AlreadyClaimed",
            EngineError::Forbidden(_) => "Forbidden",
            EngineError::MissingReceipt => "MissingReceipt",
            EngineError::BarcodeRequired => "BarcodeRequired",
            EngineError::QuarantineNotElapsed(_) => "QuarantineNotElapsed",
            EngineError::LoanCapExceeded { .. } => "LoanCapExceeded",
            EngineError::UnknownRequest(_) => "UnknownRequest",
            EngineError::UnknownLibrary(_) => "UnknownLibrary",
            EngineError::MethodNotAllowed(_) => "MethodNotAllowed",
            EngineError::NoRota => "NoRota",
            EngineError::Replay(_) => "Replay",
        }
    }
}

/// One resource-sharing transaction. All fields except `id` and the
/// creation data are derived by folding `history`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSRequest {
    pub id: RequestId,
    pub bib: BibRef,
    pub requester_library: LibraryId,
    pub patron: Option<PatronId>,
    pub flow: Flow,
    pub status: RequestStatus,
    pub rota: Option<RotaPlan>,
    pub rota_index: usize,
    pub current_lender: Option<LibraryId>,
    /// The library that accepted, kept after the request closes.
    pub supplied_by: Option<LibraryId>,
    pub validity_until: Option<Timestamp>,
    pub temp_barcode: Option<String>,
    pub tags: Vec<String>,
    pub oa_url: Option<Url>,
    pub local_location: Option<String>,
    /// Methods the last supply check allowed; empty when no check ran.
    pub allowed_methods: BTreeSet<DeliveryMethod>,
    pub delivery: Option<DeliveryReceipt>,
    pub patron_group: Option<String>,
    pub quarantine_until: Option<Timestamp>,
    pub sent_at: Option<Timestamp>,
    pub created_at: Timestamp,
    /// Status to restore if the pending cancellation is refused.
    pub cancel_prior: Option<StatusKind>,
    pub history: Vec<Event>,
}

impl RSRequest {
    pub fn kind(&self) -> StatusKind {
        self.status.kind()
    }

    pub fn is_terminal(&self) -> bool {
        self.status.is_terminal()
    }

    /// True when the latest dispatch was a broadcast to every library.
    pub fn was_broadcast(&self) -> bool {
        self.history
            .iter()
            .rev()
            .find_map(|e| match &e.change {
                Change::Broadcast { .. } => Some(true),
                Change::Sent { .. } => Some(false),
                Change::Reiterated { next, .. } => Some(matches!(next, Some(crate::routing::RotaEntry::AllLibraries))),
                _ => None,
            })
            .unwrap_or(false)
    }

    /// Every library this request was sent to or accepted by.
    pub fn lenders_involved(&self) -> BTreeSet<LibraryId> {
        self.history
            .iter()
            .filter_map(|e| match &e.change {
                Change::Sent { lender, .. } | Change::Accepted { lender } => Some(lender.clone()),
                Change::Reiterated { next: Some(crate::routing::RotaEntry::Partner(p)), .. } => Some(p.clone()),
                _ => None,
            })
            .collect()
    }

    /// Time from first dispatch to shipment, in hours.
    pub fn turnaround_hours(&self) -> Option<f64> {
        let shipped = self.history.iter().find(|e| matches!(e.change, Change::Shipped { .. }))?.at;
        let sent = self.sent_at?;
        Some((shipped - sent).num_seconds() as f64 / 3600.0)
    }
}
