use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{
    transitions_from, Actor, Change, EngineError, Event, Flow, LibraryProfile, Operation, ProfileMode, RSRequest,
    Role, RoleGrant, RouteAdvice, StatusKind, UnfulfilReason,
};
use crate::bibliography::{check_open_access, BibRef, OaSource};
use crate::clock::{Clock, Timestamp};
use crate::compliance::{DeliveryReceipt, SupplyDecision};
use crate::ids::{LibraryId, PatronId, RequestId, UserId};
use crate::routing::{match_holdings, HoldingsIndex, RotaEntry, RotaPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// How long a sent or broadcast request stays open at the lender.
    pub validity_days: i64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { validity_days: 14 }
    }
}

/// Libraries known to the engine and the roles users hold there.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Directory {
    pub libraries: BTreeMap<LibraryId, LibraryProfile>,
    pub grants: BTreeMap<UserId, BTreeMap<LibraryId, BTreeSet<Role>>>,
}

impl Directory {
    pub fn grant(&self, user: &UserId, library: &LibraryId) -> Option<RoleGrant> {
        let roles = self.grants.get(user)?.get(library)?;
        Some(RoleGrant { user: user.clone(), library: library.clone(), roles: roles.clone() })
    }

    pub fn allows(&self, user: &UserId, library: &LibraryId, role: Role) -> bool {
        self.grant(user, library).is_some_and(|g| g.allows(role))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Panel {
    BorrowingNew,
    BorrowingPending,
    BorrowingArchive,
    LendingPending,
    LendingOrphaned,
    LendingArchive,
}

/// The short form shown in a panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub id: RequestId,
    pub status: String,
    pub citation: String,
    pub created_at: Timestamp,
    pub requester: LibraryId,
    pub lender: Option<LibraryId>,
}

#[derive(Debug)]
struct Slot {
    req: RSRequest,
    /// Mirrors of requests owned by another node are updated only by ingest.
    owned: bool,
}

/// A committed event, in commit order, for persistence and replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub request: RequestId,
    pub index: usize,
    pub event: Event,
}

/// The request store and the only writer of request state. Mutations on
/// one request are serialized by its own lock.
pub struct Engine {
    clock: Arc<dyn Clock>,
    config: EngineConfig,
    directory: RwLock<Directory>,
    requests: RwLock<BTreeMap<RequestId, Arc<Mutex<Slot>>>>,
    sequences: Mutex<BTreeMap<LibraryId, u64>>,
    patron_lock: Mutex<()>,
    loan_lock: Mutex<()>,
    journal: Mutex<Vec<JournalEntry>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl Engine {
    pub fn new(clock: Arc<dyn Clock>, config: EngineConfig) -> Self {
        Engine {
            clock,
            config,
            directory: RwLock::new(Directory::default()),
            requests: RwLock::new(BTreeMap::new()),
            sequences: Mutex::new(BTreeMap::new()),
            patron_lock: Mutex::new(()),
            loan_lock: Mutex::new(()),
            journal: Mutex::new(Vec::new()),
        }
    }

    pub fn config(&self) -> EngineConfig {
        self.config
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    // ---- directory ----

    pub fn register_library(&self, id: impl Into<LibraryId>, profile: LibraryProfile) {
        self.directory.write().unwrap().libraries.insert(id.into(), profile);
    }

    pub fn profile(&self, id: &LibraryId) -> Option<LibraryProfile> {
        self.directory.read().unwrap().libraries.get(id).cloned()
    }

    pub fn grant(&self, grant: RoleGrant) {
        let mut dir = self.directory.write().unwrap();
        dir.grants.entry(grant.user).or_default().entry(grant.library).or_default().extend(grant.roles);
    }

    /// Drops roles; an empty `roles` set removes the user from the library.
    pub fn revoke(&self, user: &UserId, library: &LibraryId, roles: &BTreeSet<Role>) {
        let mut dir = self.directory.write().unwrap();
        if let Some(libs) = dir.grants.get_mut(user) {
            if roles.is_empty() {
                libs.remove(library);
            } else if let Some(held) = libs.get_mut(library) {
                held.retain(|r| !roles.contains(r));
                if held.is_empty() {
                    libs.remove(library);
                }
            }
            if libs.is_empty() {
                dir.grants.remove(user);
            }
        }
    }

    pub fn directory(&self) -> Directory {
        self.directory.read().unwrap().clone()
    }

    pub fn replace_directory(&self, directory: Directory) {
        *self.directory.write().unwrap() = directory;
    }

    fn authorize(&self, actor: &Actor, library: &LibraryId, role: Role) -> Result<(), EngineError> {
        let ok = match actor {
            Actor::System => true,
            Actor::Peer(peer) => peer == library,
            Actor::User(user) => self.directory.read().unwrap().allows(user, library, role),
        };
        if ok {
            Ok(())
        } else {
            Err(EngineError::Forbidden(format!("{role:?} at {library} required")))
        }
    }

    fn require_full(&self, library: &LibraryId) -> Result<(), EngineError> {
        match self.profile(library) {
            None => Err(EngineError::UnknownLibrary(library.clone())),
            Some(p) if p.mode == ProfileMode::Basic => Err(EngineError::PartnerIsBasic(library.clone())),
            Some(_) => Ok(()),
        }
    }

    // ---- store plumbing ----

    fn slot(&self, id: &RequestId) -> Result<Arc<Mutex<Slot>>, EngineError> {
        self.requests.read().unwrap().get(id).cloned().ok_or_else(|| EngineError::UnknownRequest(id.clone()))
    }

    /// Runs `f` under the request's lock. Mirrors refuse local mutation.
    fn with_owned<T>(&self, id: &RequestId, f: impl FnOnce(&mut Slot) -> Result<T, EngineError>) -> Result<T, EngineError> {
        let slot = self.slot(id)?;
        let mut guard = lock(&slot);
        if !guard.owned {
            return Err(EngineError::Forbidden(format!("{id} is owned by {}", guard.req.requester_library)));
        }
        f(&mut guard)
    }

    fn commit_at(&self, slot: &mut Slot, at: Timestamp, actor: &Actor, change: Change) -> Result<(), EngineError> {
        let at = slot.req.history.last().map_or(at, |last| at.max(last.at));
        let event = Event { at, actor: actor.clone(), change };
        let index = slot.req.history.len();
        slot.req.apply(event.clone())?;
        lock(&self.journal).push(JournalEntry { request: slot.req.id.clone(), index, event });
        Ok(())
    }

    fn commit(&self, slot: &mut Slot, actor: &Actor, change: Change) -> Result<(), EngineError> {
        self.commit_at(slot, self.clock.now(), actor, change)
    }

    /// State is checked before anything else.
    fn expect_op(req: &RSRequest, op: Operation) -> Result<(), EngineError> {
        if transitions_from(req.kind()).any(|t| t.operation == op) {
            Ok(())
        } else {
            Err(EngineError::InvalidState { status: req.status, op })
        }
    }

    fn validity(&self) -> Timestamp {
        self.clock.now() + Duration::days(self.config.validity_days)
    }

    /// Committed events not yet drained, in commit order.
    pub fn drain_journal(&self) -> Vec<JournalEntry> {
        std::mem::take(&mut *lock(&self.journal))
    }

    // ---- reads ----

    pub fn get(&self, id: &RequestId) -> Option<RSRequest> {
        let slot = self.requests.read().unwrap().get(id).cloned()?;
        let req = lock(&slot).req.clone();
        Some(req)
    }

    pub fn is_owned(&self, id: &RequestId) -> bool {
        self.requests.read().unwrap().get(id).is_some_and(|s| lock(s).owned)
    }

    pub fn ids(&self) -> Vec<RequestId> {
        self.requests.read().unwrap().keys().cloned().collect()
    }

    /// Consistent-per-request snapshot of every request.
    pub fn snapshot(&self) -> Vec<RSRequest> {
        let slots: Vec<_> = self.requests.read().unwrap().values().cloned().collect();
        slots.iter().map(|s| lock(s).req.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.requests.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn panel(&self, library: &LibraryId, panel: Panel) -> Vec<PanelRow> {
        let lib_is_full = self.profile(library).is_some_and(|p| p.mode == ProfileMode::Full);
        self.snapshot()
            .into_iter()
            .filter(|r| {
                let mine = &r.requester_library == library;
                let lending_here = r.current_lender.as_ref() == Some(library);
                match panel {
                    Panel::BorrowingNew => mine && r.kind() == StatusKind::Draft,
                    Panel::BorrowingPending => mine && r.kind() != StatusKind::Draft && !r.is_terminal(),
                    Panel::BorrowingArchive => mine && r.is_terminal(),
                    Panel::LendingPending => lending_here && !r.is_terminal(),
                    Panel::LendingOrphaned => lib_is_full && !mine && r.kind() == StatusKind::Orphaned,
                    Panel::LendingArchive => {
                        !lending_here && r.kind() != StatusKind::Orphaned && r.lenders_involved().contains(library)
                    }
                }
            })
            .map(|r| PanelRow {
                status: r.status.to_string(),
                citation: r.bib.short_citation(),
                created_at: r.created_at,
                requester: r.requester_library.clone(),
                lender: r.current_lender.clone().or(r.supplied_by.clone()),
                id: r.id,
            })
            .collect()
    }

    // ---- quotas ----

    /// Requests still allowed for `patron` at `library` in the 7 days up to
    /// `now`. No configured quota means no limit.
    pub fn check_patron_quota(&self, patron: &PatronId, library: &LibraryId, now: Timestamp) -> u32 {
        let Some(quota) = self.profile(library).and_then(|p| p.weekly_patron_quota) else {
            return u32::MAX;
        };
        let since = now - Duration::days(7);
        let used = self
            .snapshot()
            .iter()
            .filter(|r| {
                r.patron.as_ref() == Some(patron)
                    && &r.requester_library == library
                    && r.created_at > since
                    && r.created_at <= now
            })
            .count();
        quota.saturating_sub(u32::try_from(used).unwrap_or(u32::MAX))
    }

    // ---- operations ----

    pub fn create_request(
        &self,
        bib: BibRef,
        requester: &LibraryId,
        patron: Option<PatronId>,
        flow: Flow,
        actor: &Actor,
    ) -> Result<RSRequest, EngineError> {
        let profile = self.profile(requester).ok_or_else(|| EngineError::UnknownLibrary(requester.clone()))?;
        match (actor, &patron) {
            (Actor::User(u), Some(_)) if self.directory.read().unwrap().allows(u, requester, Role::Patron) => {}
            _ => self.authorize(actor, requester, Role::BorrowingOperator)?,
        }
        bib.validate().map_err(|e| EngineError::InvalidBib(e.to_string()))?;

        let _quota_guard = patron.as_ref().map(|_| lock(&self.patron_lock));
        if let Some(p) = &patron {
            if !profile.patron_requests_enabled {
                return Err(EngineError::PatronRequestsDisabled(requester.clone()));
            }
            if self.check_patron_quota(p, requester, self.clock.now()) == 0 {
                return Err(EngineError::QuotaExceeded);
            }
        }

        let id = {
            let mut seq = lock(&self.sequences);
            let n = seq.entry(requester.clone()).or_insert(0);
            *n += 1;
            RequestId::new(format!("{requester}-{:06}", *n))
        };
        let event = Event {
            at: self.clock.now(),
            actor: actor.clone(),
            change: Change::Created { id: id.clone(), bib, requester_library: requester.clone(), patron, flow },
        };
        let req = RSRequest::from_created(&event)?;
        lock(&self.journal).push(JournalEntry { request: id.clone(), index: 0, event });
        self.requests.write().unwrap().insert(id, Arc::new(Mutex::new(Slot { req: req.clone(), owned: true })));
        Ok(req)
    }

    /// Local holdings first, then open access. An unavailable OA source
    /// leaves a warning note and proceeds.
    pub fn precheck(
        &self,
        id: &RequestId,
        holdings: &HoldingsIndex,
        oa: &dyn OaSource,
        actor: &Actor,
    ) -> Result<RouteAdvice, EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::Precheck)?;
            let requester = slot.req.requester_library.clone();
            self.authorize(actor, &requester, Role::BorrowingOperator)?;
            let advice = if match_holdings(&slot.req.bib, holdings).contains(&requester) {
                RouteAdvice::LocalHoldings { location: requester.to_string() }
            } else {
                match check_open_access(&slot.req.bib, oa) {
                    Ok(Some(url)) => RouteAdvice::OpenAccess { url },
                    Ok(None) => RouteAdvice::Proceed,
                    Err(e) => {
                        self.commit(slot, &Actor::System, Change::Noted { text: format!("open access check skipped: {e}") })?;
                        RouteAdvice::Proceed
                    }
                }
            };
            self.commit(slot, actor, Change::Prechecked { advice: advice.clone() })?;
            Ok(advice)
        })
    }

    pub fn assign_rota(&self, id: &RequestId, rota: RotaPlan, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::AssignRota)?;
            self.authorize(actor, &slot.req.requester_library.clone(), Role::BorrowingOperator)?;
            if rota.contains_partner(&slot.req.requester_library) {
                return Err(EngineError::SelfRequest);
            }
            self.commit(slot, actor, Change::RotaAssigned { rota })
        })
    }

    fn check_lender(&self, req: &RSRequest, partner: &LibraryId) -> Result<(), EngineError> {
        if partner == &req.requester_library {
            return Err(EngineError::SelfRequest);
        }
        self.require_full(partner)
    }

    pub fn send_to_partner(&self, id: &RequestId, partner: &LibraryId, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::Send)?;
            self.authorize(actor, &slot.req.requester_library.clone(), Role::BorrowingOperator)?;
            self.check_lender(&slot.req, partner)?;
            let validity_until = self.validity();
            self.commit(slot, actor, Change::Sent { lender: partner.clone(), validity_until })
        })
    }

    pub fn send_to_all(&self, id: &RequestId, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::SendAll)?;
            self.authorize(actor, &slot.req.requester_library.clone(), Role::BorrowingOperator)?;
            let validity_until = self.validity();
            self.commit(slot, actor, Change::Broadcast { validity_until })
        })
    }

    /// Sends to the rota entry at the current index.
    pub fn send_via_rota(&self, id: &RequestId, actor: &Actor) -> Result<(), EngineError> {
        let req = self.get(id).ok_or_else(|| EngineError::UnknownRequest(id.clone()))?;
        let rota = req.rota.as_ref().ok_or(EngineError::NoRota)?;
        match rota.get(req.rota_index) {
            Some(RotaEntry::Partner(p)) => self.send_to_partner(id, p, actor),
            Some(RotaEntry::AllLibraries) => self.send_to_all(id, actor),
            None => Err(EngineError::NoRota),
        }
    }

    /// Pending requests are accepted by their lender; orphaned ones by the
    /// first FULL library to claim them. Later claimants get AlreadyClaimed.
    pub fn accept(&self, id: &RequestId, lender: &LibraryId, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            let req = &slot.req;
            if !req.is_terminal() && req.kind().has_lender() && req.was_broadcast() {
                let winner = req.current_lender.clone().or(req.supplied_by.clone()).unwrap_or_else(|| lender.clone());
                return Err(EngineError::AlreadyClaimed(winner));
            }
            Self::expect_op(req, Operation::Accept)?;
            self.authorize(actor, lender, Role::LendingOperator)?;
            match req.kind() {
                StatusKind::Pending if req.current_lender.as_ref() != Some(lender) => {
                    return Err(EngineError::Forbidden(format!("{lender} is not the current lender")));
                }
                StatusKind::Orphaned => self.check_lender(req, lender)?,
                _ => {}
            }
            self.commit(slot, actor, Change::Accepted { lender: lender.clone() })
        })
    }

    fn current_lender(req: &RSRequest) -> Result<LibraryId, EngineError> {
        req.current_lender.clone().ok_or(EngineError::InvalidState { status: req.status, op: Operation::Unfulfil })
    }

    pub fn unfulfil(&self, id: &RequestId, reason: UnfulfilReason, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::Unfulfil)?;
            let lender = Self::current_lender(&slot.req)?;
            self.authorize(actor, &lender, Role::LendingOperator)?;
            self.commit(slot, actor, Change::Unfulfilled { reason })
        })
    }

    /// Moves to the next usable rota entry, or archives once the rota is
    /// exhausted. Entries that became unusable (BASIC, unknown) are skipped.
    pub fn reiterate(&self, id: &RequestId, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::Reiterate)?;
            self.authorize(actor, &slot.req.requester_library.clone(), Role::BorrowingOperator)?;
            let rota = slot.req.rota.clone().unwrap_or_else(RotaPlan::broadcast);
            let had_rota = slot.req.rota.is_some();
            let mut index = if had_rota { slot.req.rota_index + 1 } else { rota.len() };
            let next = loop {
                match rota.get(index) {
                    None => break None,
                    Some(RotaEntry::Partner(p)) if self.check_lender(&slot.req, p).is_err() => index += 1,
                    Some(entry) => break Some(entry.clone()),
                }
            };
            let validity_until = self.validity();
            self.commit(slot, actor, Change::Reiterated { rota_index: index.min(rota.len()), next, validity_until })
        })
    }

    pub fn archive(&self, id: &RequestId, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::Archive)?;
            self.authorize(actor, &slot.req.requester_library.clone(), Role::BorrowingOperator)?;
            self.commit(slot, actor, Change::Archived)
        })
    }

    pub fn request_cancel(&self, id: &RequestId, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::RequestCancel)?;
            self.authorize(actor, &slot.req.requester_library.clone(), Role::BorrowingOperator)?;
            let prior = slot.req.kind();
            self.commit(slot, actor, Change::CancelRequested { prior })
        })
    }

    /// Approval cancels; refusal restores the status held before the
    /// cancellation was asked for.
    pub fn decide_cancel(&self, id: &RequestId, approve: bool, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::DecideCancel)?;
            let lender = Self::current_lender(&slot.req)?;
            self.authorize(actor, &lender, Role::LendingOperator)?;
            self.commit(slot, actor, Change::CancelDecided { approved: approve })
        })
    }

    /// Records the compliance verdict. A denial unfulfils with the licence
    /// reason code.
    pub fn record_supply_decision(&self, id: &RequestId, decision: &SupplyDecision, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::CheckSupply)?;
            let lender = Self::current_lender(&slot.req)?;
            self.authorize(actor, &lender, Role::LendingOperator)?;
            match decision {
                SupplyDecision::Allow(methods) => self.commit(slot, actor, Change::SupplyChecked { methods: methods.clone() }),
                SupplyDecision::Deny { reason, detail } => {
                    self.commit(slot, actor, Change::Noted { text: format!("supply denied: {detail}") })?;
                    self.commit(slot, actor, Change::Unfulfilled { reason: *reason })
                }
            }
        })
    }

    pub fn fulfil(&self, id: &RequestId, receipt: Option<DeliveryReceipt>, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::Fulfil)?;
            let lender = Self::current_lender(&slot.req)?;
            self.authorize(actor, &lender, Role::LendingOperator)?;
            let receipt = receipt.ok_or(EngineError::MissingReceipt)?;
            if !slot.req.allowed_methods.is_empty() && !slot.req.allowed_methods.contains(&receipt.method) {
                return Err(EngineError::MethodNotAllowed(receipt.method));
            }
            self.commit(slot, actor, Change::Shipped { receipt })
        })
    }

    /// Returnables need a barcode and stop at RECEIVED; copies complete.
    pub fn receive(&self, id: &RequestId, barcode: Option<String>, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::Receive)?;
            self.authorize(actor, &slot.req.requester_library.clone(), Role::BorrowingOperator)?;
            let barcode = barcode.filter(|b| !b.trim().is_empty());
            match slot.req.flow {
                Flow::Returnable if barcode.is_none() => Err(EngineError::BarcodeRequired),
                Flow::Returnable => self.commit(slot, actor, Change::Received { barcode }),
                Flow::NonReturnable => {
                    self.commit(slot, actor, Change::Received { barcode: None })?;
                    self.commit(slot, &Actor::System, Change::Completed)
                }
            }
        })
    }

    pub fn loan_to_patron(&self, id: &RequestId, patron_group: &str, actor: &Actor) -> Result<(), EngineError> {
        let _loans = lock(&self.loan_lock);
        let req = self.get(id).ok_or_else(|| EngineError::UnknownRequest(id.clone()))?;
        Self::expect_op(&req, Operation::Loan)?;
        self.authorize(actor, &req.requester_library, Role::BorrowingOperator)?;
        if req.flow != Flow::Returnable {
            return Err(EngineError::InvalidState { status: req.status, op: Operation::Loan });
        }
        let profile = self.profile(&req.requester_library).unwrap_or_default();
        if let Some(&cap) = profile.loan_caps.get(patron_group) {
            let on_loan = self
                .snapshot()
                .iter()
                .filter(|r| {
                    r.requester_library == req.requester_library
                        && r.kind() == StatusKind::OnLoan
                        && r.patron_group.as_deref() == Some(patron_group)
                })
                .count();
            if on_loan >= cap as usize {
                return Err(EngineError::LoanCapExceeded { group: patron_group.to_string(), cap });
            }
        }
        self.with_owned(id, |slot| {
            self.commit(slot, actor, Change::Loaned { patron_group: patron_group.to_string() })
        })
    }

    pub fn return_from_patron(&self, id: &RequestId, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::ReturnFromPatron)?;
            let requester = slot.req.requester_library.clone();
            self.authorize(actor, &requester, Role::BorrowingOperator)?;
            let days = self.profile(&requester).map_or(0, |p| p.quarantine_days);
            let quarantine_until = (days > 0).then(|| self.clock.now() + Duration::days(i64::from(days)));
            self.commit(slot, actor, Change::ReturnedByPatron { quarantine_until })
        })
    }

    pub fn release_quarantine(&self, id: &RequestId, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::ReleaseQuarantine)?;
            self.authorize(actor, &slot.req.requester_library.clone(), Role::BorrowingOperator)?;
            let until = slot.req.quarantine_until.unwrap_or(slot.req.history.last().map_or(self.now(), |e| e.at));
            if self.clock.now() < until {
                return Err(EngineError::QuarantineNotElapsed(until));
            }
            self.commit(slot, actor, Change::QuarantineReleased)
        })
    }

    pub fn return_to_lender(&self, id: &RequestId, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::ReturnToLender)?;
            self.authorize(actor, &slot.req.requester_library.clone(), Role::BorrowingOperator)?;
            self.commit(slot, actor, Change::ReturnedToLender)
        })
    }

    /// The lender checks the returned item in.
    pub fn complete(&self, id: &RequestId, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            Self::expect_op(&slot.req, Operation::Complete)?;
            if slot.req.kind() == StatusKind::Received {
                // Copies complete on receipt; nothing to check in.
                self.authorize(actor, &slot.req.requester_library.clone(), Role::BorrowingOperator)?;
            } else {
                let lender = Self::current_lender(&slot.req)?;
                self.authorize(actor, &lender, Role::LendingOperator)?;
            }
            self.commit(slot, actor, Change::Completed)
        })
    }

    /// Expires every owned PENDING or ORPHANED request whose validity ended
    /// strictly before `now`.
    pub fn expire_stale(&self, now: Timestamp) -> Vec<RequestId> {
        let slots: Vec<_> = self.requests.read().unwrap().values().cloned().collect();
        let mut expired = Vec::new();
        for slot in slots {
            let mut guard = lock(&slot);
            let stale = guard.owned
                && matches!(guard.req.kind(), StatusKind::Pending | StatusKind::Orphaned)
                && guard.req.validity_until.is_some_and(|v| v < now);
            if stale && self.commit_at(&mut guard, now, &Actor::System, Change::Expired).is_ok() {
                expired.push(guard.req.id.clone());
            }
        }
        expired
    }

    pub fn annotate(&self, id: &RequestId, text: &str, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            if slot.req.is_terminal() {
                return Err(EngineError::InvalidState { status: slot.req.status, op: Operation::Annotate });
            }
            let requester = slot.req.requester_library.clone();
            if self.authorize(actor, &requester, Role::BorrowingOperator).is_err() {
                let lender = slot.req.current_lender.clone().ok_or_else(|| EngineError::Forbidden("not a party".into()))?;
                self.authorize(actor, &lender, Role::LendingOperator)?;
            }
            self.commit(slot, actor, Change::Noted { text: text.to_string() })
        })
    }

    pub fn tag(&self, id: &RequestId, tag: &str, actor: &Actor) -> Result<(), EngineError> {
        self.with_owned(id, |slot| {
            if slot.req.is_terminal() {
                return Err(EngineError::InvalidState { status: slot.req.status, op: Operation::Annotate });
            }
            self.authorize(actor, &slot.req.requester_library.clone(), Role::BorrowingOperator)?;
            self.commit(slot, actor, Change::Tagged { tag: tag.to_string() })
        })
    }

    // ---- replication and recovery ----

    /// Applies event `index` of a request. Already-known indices are a
    /// no-op; a gap is an error. `owned` marks requests this engine writes.
    pub fn ingest(&self, id: &RequestId, index: usize, event: Event, owned: bool) -> Result<bool, EngineError> {
        if index == 0 {
            let mut map = self.requests.write().unwrap();
            if map.contains_key(id) {
                return Ok(false);
            }
            let req = RSRequest::from_created(&event)?;
            if &req.id != id {
                return Err(EngineError::Replay(format!("Created event names {}, expected {id}", req.id)));
            }
            if owned {
                let mut seq = lock(&self.sequences);
                let n = seq.entry(req.requester_library.clone()).or_insert(0);
                if let Some(k) = id.as_str().rsplit('-').next().and_then(|s| s.parse::<u64>().ok()) {
                    *n = (*n).max(k);
                }
            }
            map.insert(id.clone(), Arc::new(Mutex::new(Slot { req, owned })));
            return Ok(true);
        }
        let slot = self.slot(id)?;
        let mut guard = lock(&slot);
        let len = guard.req.history.len();
        if index < len {
            return Ok(false);
        }
        if index > len {
            return Err(EngineError::Replay(format!("{id}: event {index} arrived before event {len}")));
        }
        guard.req.apply(event)?;
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bibliography::{BibRef, FixtureSource, UnavailableSource};
    use crate::clock::{reference_epoch, ManualClock};
    use crate::compliance::DeliveryMethod;
    use crate::request::RequestStatus;

    struct Fixture {
        clock: Arc<ManualClock>,
        engine: Engine,
    }

    fn fixture() -> Fixture {
        let clock = Arc::new(ManualClock::new(reference_epoch()));
        let engine = Engine::new(clock.clone(), EngineConfig::default());
        for lib in ["L1", "L2", "L3", "L4"] {
            engine.register_library(lib, LibraryProfile::default());
        }
        engine.register_library("B1", LibraryProfile::basic());
        engine.grant(RoleGrant::new("bob", "L1", [Role::BorrowingOperator]));
        engine.grant(RoleGrant::new("lena", "L2", [Role::LendingOperator]));
        engine.grant(RoleGrant::new("lou", "L3", [Role::LendingOperator]));
        engine.grant(RoleGrant::new("mia", "L1", [Role::LibraryManager]));
        Fixture { clock, engine }
    }

    fn article() -> BibRef {
        BibRef::article("On X", "J. Y", 2019).with_doi("10.1/x")
    }

    fn book() -> BibRef {
        BibRef::book("B", "9781234567897")
    }

    fn receipt() -> DeliveryReceipt {
        DeliveryReceipt { method: DeliveryMethod::Sed, at: reference_epoch(), package_id: Some("P1".into()), url: None }
    }

    #[test]
    fn article_round_trip() {
        let f = fixture();
        let bob = Actor::user("bob");
        let lena = Actor::user("lena");
        let r = f.engine.create_request(article(), &"L1".into(), None, Flow::NonReturnable, &bob).unwrap();
        assert_eq!(r.id.as_str(), "L1-000001");
        assert_eq!(r.status, RequestStatus::Draft);
        f.engine.send_to_partner(&r.id, &"L2".into(), &bob).unwrap();
        let got = f.engine.get(&r.id).unwrap();
        assert_eq!(got.current_lender, Some("L2".into()));
        assert_eq!(got.validity_until, Some(reference_epoch() + Duration::days(14)));
        f.engine.accept(&r.id, &"L2".into(), &lena).unwrap();
        f.clock.advance(Duration::hours(19));
        f.engine.fulfil(&r.id, Some(receipt()), &lena).unwrap();
        f.engine.receive(&r.id, None, &bob).unwrap();
        let done = f.engine.get(&r.id).unwrap();
        assert_eq!(done.status, RequestStatus::Complete);
        assert_eq!(done.current_lender, None);
        assert_eq!(done.supplied_by, Some("L2".into()));
        assert_eq!(done.turnaround_hours(), Some(19.0));
        assert_eq!(super::super::replay_history(&done.history).unwrap(), done);
    }

    #[test]
    fn permissions_and_state_errors() {
        let f = fixture();
        let bob = Actor::user("bob");
        let r = f.engine.create_request(article(), &"L1".into(), None, Flow::NonReturnable, &bob).unwrap();
        assert_eq!(f.engine.send_to_partner(&r.id, &"L1".into(), &bob), Err(EngineError::SelfRequest));
        assert_eq!(f.engine.send_to_partner(&r.id, &"B1".into(), &bob), Err(EngineError::PartnerIsBasic("B1".into())));
        assert!(matches!(f.engine.request_cancel(&r.id, &bob), Err(EngineError::InvalidState { .. })));
        f.engine.send_to_all(&r.id, &bob).unwrap();
        assert!(matches!(f.engine.accept(&r.id, &"L1".into(), &bob), Err(EngineError::Forbidden(_))));
        f.engine.accept(&r.id, &"L3".into(), &Actor::user("lou")).unwrap();
        assert_eq!(
            f.engine.accept(&r.id, &"L2".into(), &Actor::user("lena")),
            Err(EngineError::AlreadyClaimed("L3".into()))
        );
        assert!(f.engine.panel(&"L4".into(), Panel::LendingOrphaned).is_empty());
        // Manager implies the borrowing role.
        let r2 = f.engine.create_request(article(), &"L1".into(), None, Flow::NonReturnable, &Actor::user("mia")).unwrap();
        assert_eq!(r2.id.as_str(), "L1-000002");
        assert!(matches!(
            f.engine.create_request(article(), &"L1".into(), None, Flow::NonReturnable, &Actor::user("lena")),
            Err(EngineError::Forbidden(_))
        ));
    }

    #[test]
    fn cancel_rejection_restores_prior_status() {
        let f = fixture();
        let (bob, lena) = (Actor::user("bob"), Actor::user("lena"));
        let r = f.engine.create_request(book(), &"L1".into(), None, Flow::Returnable, &bob).unwrap();
        f.engine.send_to_partner(&r.id, &"L2".into(), &bob).unwrap();
        f.engine.accept(&r.id, &"L2".into(), &lena).unwrap();
        f.engine.request_cancel(&r.id, &bob).unwrap();
        f.engine.decide_cancel(&r.id, false, &lena).unwrap();
        assert_eq!(f.engine.get(&r.id).unwrap().status, RequestStatus::Accepted);
        f.engine.request_cancel(&r.id, &bob).unwrap();
        f.engine.decide_cancel(&r.id, true, &lena).unwrap();
        assert_eq!(f.engine.get(&r.id).unwrap().status, RequestStatus::Cancelled);
    }

    #[test]
    fn rota_reiteration_until_exhausted() {
        let f = fixture();
        let (bob, lena, lou) = (Actor::user("bob"), Actor::user("lena"), Actor::user("lou"));
        let r = f.engine.create_request(book(), &"L1".into(), None, Flow::Returnable, &bob).unwrap();
        let rota = RotaPlan::new(vec![RotaEntry::Partner("L2".into()), RotaEntry::Partner("L3".into())]).unwrap();
        f.engine.assign_rota(&r.id, rota, &bob).unwrap();
        f.engine.send_via_rota(&r.id, &bob).unwrap();
        f.engine.unfulfil(&r.id, UnfulfilReason::NotHeld, &lena).unwrap();
        assert_eq!(f.engine.get(&r.id).unwrap().status.to_string(), "UNFULFILLED(2)");
        f.engine.reiterate(&r.id, &bob).unwrap();
        let got = f.engine.get(&r.id).unwrap();
        assert_eq!((got.status, got.current_lender.clone(), got.rota_index), (RequestStatus::Pending, Some("L3".into()), 1));
        f.engine.unfulfil(&r.id, UnfulfilReason::NotOnShelf, &lou).unwrap();
        f.engine.reiterate(&r.id, &bob).unwrap();
        assert_eq!(f.engine.get(&r.id).unwrap().status, RequestStatus::ArchivedUnfulfilled);
    }

    #[test]
    fn returnable_chain_with_quarantine() {
        let f = fixture();
        f.engine.register_library("L1", LibraryProfile { quarantine_days: 5, ..LibraryProfile::default() });
        let (bob, lena) = (Actor::user("bob"), Actor::user("lena"));
        let r = f.engine.create_request(book(), &"L1".into(), None, Flow::Returnable, &bob).unwrap();
        f.engine.send_to_partner(&r.id, &"L2".into(), &bob).unwrap();
        f.engine.accept(&r.id, &"L2".into(), &lena).unwrap();
        f.engine.fulfil(&r.id, Some(receipt()), &lena).unwrap();
        assert_eq!(f.engine.receive(&r.id, None, &bob), Err(EngineError::BarcodeRequired));
        f.engine.receive(&r.id, Some("T-001".into()), &bob).unwrap();
        assert_eq!(f.engine.get(&r.id).unwrap().temp_barcode.as_deref(), Some("T-001"));
        f.engine.loan_to_patron(&r.id, "staff", &bob).unwrap();
        f.engine.return_from_patron(&r.id, &bob).unwrap();
        assert_eq!(f.engine.get(&r.id).unwrap().status, RequestStatus::InQuarantine);
        f.clock.advance(Duration::days(4));
        assert!(matches!(f.engine.release_quarantine(&r.id, &bob), Err(EngineError::QuarantineNotElapsed(_))));
        f.clock.advance(Duration::days(1));
        f.engine.release_quarantine(&r.id, &bob).unwrap();
        f.engine.return_to_lender(&r.id, &bob).unwrap();
        assert!(matches!(f.engine.complete(&r.id, &bob), Err(EngineError::Forbidden(_))));
        f.engine.complete(&r.id, &lena).unwrap();
        let done = f.engine.get(&r.id).unwrap();
        assert_eq!(done.status, RequestStatus::Complete);
        assert_eq!(super::super::replay_history(&done.history).unwrap(), done);
    }

    #[test]
    fn patron_quota_of_three_per_week() {
        let f = fixture();
        f.engine.register_library(
            "L1",
            LibraryProfile { patron_requests_enabled: true, weekly_patron_quota: Some(3), ..LibraryProfile::default() },
        );
        let bob = Actor::user("bob");
        let patron = PatronId::from("p1");
        for _ in 0..3 {
            f.engine.create_request(book(), &"L1".into(), Some(patron.clone()), Flow::Returnable, &bob).unwrap();
            f.clock.advance(Duration::hours(1));
        }
        assert_eq!(f.engine.check_patron_quota(&patron, &"L1".into(), f.clock.now()), 0);
        assert_eq!(
            f.engine.create_request(book(), &"L1".into(), Some(patron.clone()), Flow::Returnable, &bob),
            Err(EngineError::QuotaExceeded)
        );
        // The first request leaves the window exactly seven days later.
        f.clock.advance(Duration::days(7) - Duration::hours(3));
        assert_eq!(f.engine.check_patron_quota(&patron, &"L1".into(), f.clock.now()), 1);
        f.clock.advance(Duration::hours(1));
        assert_eq!(f.engine.check_patron_quota(&patron, &"L1".into(), f.clock.now()), 2);
    }

    #[test]
    fn precheck_outcomes() {
        let f = fixture();
        let bob = Actor::user("bob");
        let oa = FixtureSource::from_json(
            r#"[{"identifier":"doi:10.1/x","kind":"article","title":"On X","container_title":"J. Y","oa_url":"https://oa.example/x"}]"#,
        )
        .unwrap();
        let holdings = HoldingsIndex::new();
        let r = f.engine.create_request(article(), &"L1".into(), None, Flow::NonReturnable, &bob).unwrap();
        let advice = f.engine.precheck(&r.id, &holdings, &oa, &bob).unwrap();
        assert!(matches!(advice, RouteAdvice::OpenAccess { .. }));
        assert_eq!(f.engine.get(&r.id).unwrap().status, RequestStatus::OaAvailable);

        let r = f.engine.create_request(book(), &"L1".into(), None, Flow::Returnable, &bob).unwrap();
        assert_eq!(f.engine.precheck(&r.id, &holdings, &UnavailableSource, &bob).unwrap(), RouteAdvice::Proceed);
        let got = f.engine.get(&r.id).unwrap();
        assert_eq!(got.status, RequestStatus::Draft);
        assert_eq!(got.history.len(), 3, "created, warning note, precheck");
    }

    #[test]
    fn expiry_is_strict() {
        let f = fixture();
        let bob = Actor::user("bob");
        let r = f.engine.create_request(book(), &"L1".into(), None, Flow::Returnable, &bob).unwrap();
        f.engine.send_to_all(&r.id, &bob).unwrap();
        let until = f.engine.get(&r.id).unwrap().validity_until.unwrap();
        assert!(f.engine.expire_stale(until).is_empty());
        assert_eq!(f.engine.expire_stale(until + Duration::seconds(1)), vec![r.id.clone()]);
        assert_eq!(f.engine.get(&r.id).unwrap().status, RequestStatus::Expired);
    }

    #[test]
    fn ingest_is_idempotent() {
        let f = fixture();
        let bob = Actor::user("bob");
        let r = f.engine.create_request(book(), &"L1".into(), None, Flow::Returnable, &bob).unwrap();
        f.engine.send_to_partner(&r.id, &"L2".into(), &bob).unwrap();
        let journal = f.engine.drain_journal();
        assert_eq!(journal.len(), 2);

        let mirror = Engine::new(f.clock.clone(), EngineConfig::default());
        for _ in 0..2 {
            for e in &journal {
                mirror.ingest(&e.request, e.index, e.event.clone(), false).unwrap();
            }
        }
        assert_eq!(mirror.get(&r.id), f.engine.get(&r.id));
        assert!(!mirror.is_owned(&r.id));
        assert!(matches!(mirror.send_to_all(&r.id, &Actor::System), Err(EngineError::Forbidden(_))));
    }
}
