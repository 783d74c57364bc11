use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Actor, EngineError, Flow, Operation, RSRequest, RequestStatus, RouteAdvice, StatusKind, UnfulfilReason};
use crate::bibliography::BibRef;
use crate::clock::Timestamp;
use crate::compliance::{DeliveryMethod, DeliveryReceipt};
use crate::ids::{LibraryId, PatronId, RequestId};
use crate::routing::{RotaEntry, RotaPlan};

/// One entry of a request's history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub at: Timestamp,
    pub actor: Actor,
    pub change: Change,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
#[allow(clippy::large_enum_variant)]
pub enum Change {
    Created {
        id: RequestId,
        bib: BibRef,
        requester_library: LibraryId,
        #[serde(default)]
        patron: Option<PatronId>,
        flow: Flow,
    },
    Prechecked { advice: RouteAdvice },
    RotaAssigned { rota: RotaPlan },
    Sent { lender: LibraryId, validity_until: Timestamp },
    Broadcast { validity_until: Timestamp },
    Accepted { lender: LibraryId },
    Unfulfilled { reason: UnfulfilReason },
    /// `next` is `None` once the rota is exhausted.
    Reiterated { rota_index: usize, next: Option<RotaEntry>, validity_until: Timestamp },
    Archived,
    CancelRequested { prior: StatusKind },
    CancelDecided { approved: bool },
    SupplyChecked { methods: BTreeSet<DeliveryMethod> },
    Shipped { receipt: DeliveryReceipt },
    Received { barcode: Option<String> },
    Completed,
    Loaned { patron_group: String },
    ReturnedByPatron { quarantine_until: Option<Timestamp> },
    QuarantineReleased,
    ReturnedToLender,
    Expired,
    Noted { text: String },
    Tagged { tag: String },
}

impl Change {
    pub fn operation(&self) -> Operation {
        match self {
            Change::Created { .. } => Operation::Create,
            Change::Prechecked { .. } => Operation::Precheck,
            Change::RotaAssigned { .. } => Operation::AssignRota,
            Change::Sent { .. } => Operation::Send,
            Change::Broadcast { .. } => Operation::SendAll,
            Change::Accepted { .. } => Operation::Accept,
            Change::Unfulfilled { .. } => Operation::Unfulfil,
            Change::Reiterated { .. } => Operation::Reiterate,
            Change::Archived => Operation::Archive,
            Change::CancelRequested { .. } => Operation::RequestCancel,
            Change::CancelDecided { .. } => Operation::DecideCancel,
            Change::SupplyChecked { .. } => Operation::CheckSupply,
            Change::Shipped { .. } => Operation::Fulfil,
            Change::Received { .. } => Operation::Receive,
            Change::Completed => Operation::Complete,
            Change::Loaned { .. } => Operation::Loan,
            Change::ReturnedByPatron { .. } => Operation::ReturnFromPatron,
            Change::QuarantineReleased => Operation::ReleaseQuarantine,
            Change::ReturnedToLender => Operation::ReturnToLender,
            Change::Expired => Operation::Expire,
            Change::Noted { .. } | Change::Tagged { .. } => Operation::Annotate,
        }
    }
}

impl Event {
    pub fn is_annotation(&self) -> bool {
        super::is_annotation(self.change.operation())
    }
}

impl RSRequest {
    /// Starts a request from its `Created` event.
    pub fn from_created(event: &Event) -> Result<Self, EngineError> {
        let Change::Created { id, bib, requester_library, patron, flow } = &event.change else {
            return Err(EngineError::Replay("first event is not Created".into()));
        };
        Ok(RSRequest {
            id: id.clone(),
            bib: bib.clone(),
            requester_library: requester_library.clone(),
            patron: patron.clone(),
            flow: *flow,
            status: RequestStatus::Draft,
            rota: None,
            rota_index: 0,
            current_lender: None,
            supplied_by: None,
            validity_until: None,
            temp_barcode: None,
            tags: Vec::new(),
            oa_url: None,
            local_location: None,
            allowed_methods: BTreeSet::new(),
            delivery: None,
            patron_group: None,
            quarantine_until: None,
            sent_at: None,
            created_at: event.at,
            cancel_prior: None,
            history: vec![event.clone()],
        })
    }

    /// Folds one event into the request, refusing anything the transition
    /// table does not allow. Used for both live commits and replay.
    pub fn apply(&mut self, event: Event) -> Result<(), EngineError> {
        let from = self.status;
        let op = event.change.operation();
        let invalid = || EngineError::InvalidState { status: from, op };
        if let Some(last) = self.history.last() {
            if event.at < last.at {
                return Err(EngineError::Replay(format!("event at {} precedes {}", event.at, last.at)));
            }
        }
        let next = match &event.change {
            Change::Created { .. } => return Err(invalid()),
            Change::Prechecked { advice } => match advice {
                RouteAdvice::LocalHoldings { .. } => RequestStatus::LocalAvailable,
                RouteAdvice::OpenAccess { .. } => RequestStatus::OaAvailable,
                RouteAdvice::Proceed => from,
            },
            Change::RotaAssigned { .. }
            | Change::SupplyChecked { .. }
            | Change::Noted { .. }
            | Change::Tagged { .. } => from,
            Change::Sent { .. } => RequestStatus::Pending,
            Change::Broadcast { .. } => RequestStatus::Orphaned,
            Change::Accepted { .. } => RequestStatus::Accepted,
            Change::Unfulfilled { reason } => RequestStatus::Unfulfilled(*reason),
            Change::Reiterated { next, .. } => match next {
                Some(RotaEntry::Partner(_)) => RequestStatus::Pending,
                Some(RotaEntry::AllLibraries) => RequestStatus::Orphaned,
                None => RequestStatus::ArchivedUnfulfilled,
            },
            Change::Archived => RequestStatus::ArchivedUnfulfilled,
            Change::CancelRequested { prior } if *prior == from.kind() => RequestStatus::CancelRequested,
            Change::CancelRequested { .. } => return Err(invalid()),
            Change::CancelDecided { approved: true } => RequestStatus::Cancelled,
            Change::CancelDecided { approved: false } => match self.cancel_prior {
                Some(StatusKind::Pending) => RequestStatus::Pending,
                Some(StatusKind::Accepted) => RequestStatus::Accepted,
                _ => return Err(invalid()),
            },
            Change::Shipped { .. } => RequestStatus::Shipped,
            Change::Received { .. } => RequestStatus::Received,
            Change::Completed => RequestStatus::Complete,
            Change::Loaned { .. } => RequestStatus::OnLoan,
            Change::ReturnedByPatron { quarantine_until: Some(_) } => RequestStatus::InQuarantine,
            Change::ReturnedByPatron { quarantine_until: None } => RequestStatus::ReturnedByPatron,
            Change::QuarantineReleased => RequestStatus::ReturnedByPatron,
            Change::ReturnedToLender => RequestStatus::ReturnedToLender,
            Change::Expired => RequestStatus::Expired,
        };
        if !super::permits(from.kind(), op, next.kind()) {
            return Err(invalid());
        }
        // Guards that depend on the request rather than the status alone.
        let guard_ok = match (&event.change, from.kind()) {
            (Change::Completed, StatusKind::Received) => self.flow == Flow::NonReturnable,
            (Change::Loaned { .. }, _) => self.flow == Flow::Returnable,
            (Change::Received { barcode }, _) => self.flow == Flow::NonReturnable || barcode.is_some(),
            _ => true,
        };
        if !guard_ok {
            return Err(invalid());
        }
        match &event.change {
            Change::Prechecked { advice } => match advice {
                RouteAdvice::LocalHoldings { location } => self.local_location = Some(location.clone()),
                RouteAdvice::OpenAccess { url } => self.oa_url = Some(url.clone()),
                RouteAdvice::Proceed => {}
            },
            Change::RotaAssigned { rota } => {
                self.rota = Some(rota.clone());
                self.rota_index = 0;
            }
            Change::Sent { lender, validity_until } => {
                self.current_lender = Some(lender.clone());
                self.validity_until = Some(*validity_until);
                self.sent_at.get_or_insert(event.at);
            }
            Change::Broadcast { validity_until } => {
                self.current_lender = None;
                self.validity_until = Some(*validity_until);
                self.sent_at.get_or_insert(event.at);
            }
            Change::Accepted { lender } => {
                self.current_lender = Some(lender.clone());
                self.supplied_by = Some(lender.clone());
            }
            Change::Unfulfilled { .. } => {
                self.supplied_by = None;
                self.allowed_methods.clear();
            }
            Change::Reiterated { rota_index, next, validity_until } => {
                self.rota_index = *rota_index;
                self.current_lender = match next {
                    Some(RotaEntry::Partner(p)) => Some(p.clone()),
                    _ => None,
                };
                if next.is_some() {
                    self.validity_until = Some(*validity_until);
                }
            }
            Change::CancelRequested { prior } => self.cancel_prior = Some(*prior),
            Change::CancelDecided { .. } => self.cancel_prior = None,
            Change::SupplyChecked { methods } => self.allowed_methods = methods.clone(),
            Change::Shipped { receipt } => self.delivery = Some(receipt.clone()),
            Change::Received { barcode } => {
                if self.flow == Flow::Returnable {
                    self.temp_barcode = barcode.clone();
                }
            }
            Change::Loaned { patron_group } => self.patron_group = Some(patron_group.clone()),
            Change::ReturnedByPatron { quarantine_until } => self.quarantine_until = *quarantine_until,
            Change::QuarantineReleased => self.quarantine_until = None,
            Change::Tagged { tag } => self.tags.push(tag.clone()),
            Change::Created { .. }
            | Change::Archived
            | Change::Completed
            | Change::ReturnedToLender
            | Change::Expired
            | Change::Noted { .. } => {}
        }
        self.status = next;
        if !next.kind().has_lender() {
            self.current_lender = None;
        }
        self.history.push(event);
        Ok(())
    }
}

/// Rebuilds a request from its full history.
pub fn replay_history(history: &[Event]) -> Result<RSRequest, EngineError> {
    let (first, rest) = history.split_first().ok_or_else(|| EngineError::Replay("empty history".into()))?;
    let mut req = RSRequest::from_created(first)?;
    for event in rest {
        req.apply(event.clone())?;
    }
    Ok(req)
}
