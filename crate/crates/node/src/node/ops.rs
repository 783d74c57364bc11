//! Staff-facing operations. Borrowing operations run against requests this
//! node owns; lending operations run locally on owned requests and are
//! forwarded to the owner for mirrors.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use chrono::Duration;
use serde::{Deserialize, Serialize};
use url::Url;

use interlend_core::acquisition::{eba_select, pod_eligibility, read_usage_csv, PodCandidate};
use interlend_core::bibliography::{dedupe_key, resolve_identifier, parse_openurl, BibKind, BibRef};
use interlend_core::clock::Timestamp;
use interlend_core::compliance::{
    check_supply_allowed, deliver, make_hardcopy, DeliveryMethod, LicenceStore, Manifest, Payload, SourcePage,
    SupplyDecision, SupplyQuery, SyntheticRasterizer,
};
use interlend_core::ids::{LibraryId, PatronId, RequestId};
use interlend_core::ledger::{
    avg_turnaround, fill_rate, settle, CostPolicy, Direction, FillRateMode, Invoice, LedgerTotals, Percent, Period,
    StatsWindow,
};
use interlend_core::money::Money;
use interlend_core::request::{
    transitions_from, Actor, EngineError, Flow, Operation, Panel, PanelRow, RSRequest, Role, RouteAdvice, StatusKind,
    UnfulfilReason,
};
use interlend_core::routing::{build_rota, HoldingsIndex, LoadView, RotaInputs, RotaPlan, RotaRequest};

use super::{lock, Cause, Node, NodeRecord};
use crate::error::NodeError;
use crate::wire::{SupplierAction, SupplyingPayload, WireKind, WireMessage};

/// A new borrowing request. The citation comes from `bib`, an OpenURL
/// query string, or an identifier looked up in the metadata source, in
/// that order of preference.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NewRequest {
    #[serde(default)]
    pub bib: Option<BibRef>,
    #[serde(default)]
    pub openurl: Option<String>,
    #[serde(default)]
    pub identifier: Option<String>,
    /// Requesting library; this node's own library when absent.
    #[serde(default)]
    pub library: Option<LibraryId>,
    #[serde(default)]
    pub patron: Option<PatronId>,
    /// Books default to returnable, everything else to a copy.
    #[serde(default)]
    pub flow: Option<Flow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodInput {
    pub candidate: PodCandidate,
    pub price_quote: Money,
}

/// Send to one partner, or build and follow a rota.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SendOptions {
    #[serde(default)]
    pub partner: Option<LibraryId>,
    #[serde(default)]
    pub pod: Option<PodInput>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupplyOptions {
    #[serde(default)]
    pub excerpt_pages: Option<u32>,
    #[serde(default)]
    pub total_pages: Option<u32>,
    #[serde(default)]
    pub newsstand: bool,
    #[serde(default)]
    pub requested_methods: BTreeSet<DeliveryMethod>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FulfilOptions {
    #[serde(default, flatten)]
    pub supply: SupplyOptions,
    #[serde(default)]
    pub method: Option<DeliveryMethod>,
    /// Pages to scan; the citation's page range when absent.
    #[serde(default)]
    pub source_pages: Option<u32>,
    #[serde(default)]
    pub url: Option<String>,
}

/// Result of a lending operation: applied here, or sent to the owning node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Applied { request: RSRequest },
    Forwarded { message_id: String, request: RSRequest },
}

impl Outcome {
    pub fn request(&self) -> &RSRequest {
        match self {
            Outcome::Applied { request } | Outcome::Forwarded { request, .. } => request,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FulfilOutcome {
    #[serde(flatten)]
    pub outcome: Outcome,
    #[serde(default)]
    pub supply: Option<SupplyDecision>,
    #[serde(default)]
    pub package: Option<Manifest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub library: LibraryId,
    pub mode: FillRateMode,
    pub window: StatsWindow,
    pub fill_rate: Option<Percent>,
    pub avg_turnaround_days: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub period: Period,
    pub policy: CostPolicy,
    pub totals: LedgerTotals,
    pub lent_units: u64,
    pub borrowed_units: u64,
    pub invoices: Vec<Invoice>,
}

fn operation_of(action: &SupplierAction) -> Operation {
    match action {
        SupplierAction::Accept => Operation::Accept,
        SupplierAction::Unfulfil { .. } => Operation::Unfulfil,
        SupplierAction::CancelDecision { .. } => Operation::DecideCancel,
        SupplierAction::SupplyCheck { .. } => Operation::CheckSupply,
        SupplierAction::Ship { .. } => Operation::Fulfil,
        SupplierAction::CheckIn => Operation::Complete,
    }
}

fn default_method(flow: Flow, allowed: &BTreeSet<DeliveryMethod>, has_url: bool) -> DeliveryMethod {
    if flow == Flow::Returnable {
        return DeliveryMethod::Postal;
    }
    if has_url && allowed.contains(&DeliveryMethod::Url) {
        return DeliveryMethod::Url;
    }
    [DeliveryMethod::Sed, DeliveryMethod::ArticleExchange]
        .into_iter()
        .find(|m| allowed.contains(m))
        .unwrap_or(DeliveryMethod::Postal)
}

impl Node {
    pub fn hosts(&self, library: &LibraryId) -> bool {
        self.state().local.contains(library)
    }

    /// Runs engine operations, then logs whatever they committed, even when
    /// they failed part-way.
    fn run<T>(&self, op: impl FnOnce() -> Result<T, EngineError>) -> Result<T, NodeError> {
        let result = op();
        self.commit(Vec::new(), Cause::Local)?;
        Ok(result?)
    }

    // ---- borrowing side ----

    pub fn create_request(&self, input: NewRequest, actor: &Actor) -> Result<RSRequest, NodeError> {
        let bib = match (input.bib, input.openurl, input.identifier) {
            (Some(bib), _, _) => bib,
            (None, Some(q), _) => parse_openurl(&q)?,
            (None, None, Some(id)) => resolve_identifier(&id, &*self.sources)?,
            (None, None, None) => return Err(NodeError::BadRequest("bib, openurl or identifier required".into())),
        };
        let library = input.library.unwrap_or_else(|| self.config.id.clone());
        if !self.hosts(&library) {
            return Err(NodeError::Forbidden(format!("{library} is not hosted here")));
        }
        let flow = input.flow.unwrap_or(if bib.kind == BibKind::Book { Flow::Returnable } else { Flow::NonReturnable });
        let key = dedupe_key(&bib);
        let req = self.run(|| self.engine.create_request(bib, &library, input.patron, flow, actor))?;
        let duplicate = self
            .engine
            .snapshot()
            .into_iter()
            .find(|r| r.id != req.id && r.requester_library == library && !r.is_terminal() && dedupe_key(&r.bib) == key);
        if let Some(other) = duplicate {
            self.run(|| self.engine.tag(&req.id, &format!("possible-duplicate:{}", other.id), &Actor::System))?;
        }
        self.request(&req.id)
    }

    pub fn precheck(&self, id: &RequestId, actor: &Actor) -> Result<RouteAdvice, NodeError> {
        let result = {
            let st = self.state();
            self.engine.precheck(id, &st.holdings, &*self.sources, actor)
        };
        self.commit(Vec::new(), Cause::Local)?;
        Ok(result?)
    }

    /// Outstanding requests per lender and assignments over the last 30
    /// days, from everything this node can see.
    pub fn load_view(&self) -> LoadView {
        let now = self.now();
        let mut view = LoadView::new(now);
        let since = now - Duration::days(30);
        for req in self.engine.snapshot() {
            if let Some(l) = &req.current_lender {
                if !req.is_terminal() {
                    *view.loads.entry(l.clone()).or_default() += 1;
                }
            }
            for e in req.history.iter().filter(|e| e.at >= since) {
                if let interlend_core::request::Change::Sent { lender, .. } = &e.change {
                    *view.period_assigned.entry(lender.clone()).or_default() += 1;
                }
            }
        }
        view
    }

    pub fn plan_rota(&self, req: &RSRequest, pod: Option<&PodInput>) -> Result<RotaPlan, NodeError> {
        let partners = self.partners();
        let load = self.load_view();
        let pod_eligible = pod.is_some_and(|p| pod_eligibility(&p.candidate, p.price_quote, &self.config.pod_params).eligible);
        let st = self.state();
        let inputs = RotaInputs { partners: &partners, holdings: &st.holdings, pod_eligible, load: Some(&load) };
        Ok(build_rota(RotaRequest::from(req), &self.config.routing, &self.config.pods, inputs)?)
    }

    pub fn send(&self, id: &RequestId, opts: SendOptions, actor: &Actor) -> Result<RSRequest, NodeError> {
        if let Some(partner) = &opts.partner {
            self.run(|| self.engine.send_to_partner(id, partner, actor))?;
            return self.request(id);
        }
        let req = self.request(id)?;
        if req.rota.is_none() {
            let plan = self.plan_rota(&req, opts.pod.as_ref())?;
            self.run(|| self.engine.assign_rota(id, plan, actor))?;
        }
        self.run(|| self.engine.send_via_rota(id, actor))?;
        self.request(id)
    }

    pub fn send_all(&self, id: &RequestId, actor: &Actor) -> Result<RSRequest, NodeError> {
        self.run(|| self.engine.send_to_all(id, actor))?;
        self.request(id)
    }

    pub fn reiterate(&self, id: &RequestId, actor: &Actor) -> Result<RSRequest, NodeError> {
        self.run(|| self.engine.reiterate(id, actor))?;
        self.request(id)
    }

    pub fn archive(&self, id: &RequestId, actor: &Actor) -> Result<RSRequest, NodeError> {
        self.run(|| self.engine.archive(id, actor))?;
        self.request(id)
    }

    pub fn request_cancel(&self, id: &RequestId, actor: &Actor) -> Result<RSRequest, NodeError> {
        self.run(|| self.engine.request_cancel(id, actor))?;
        self.request(id)
    }

    pub fn receive(&self, id: &RequestId, barcode: Option<String>, actor: &Actor) -> Result<RSRequest, NodeError> {
        self.run(|| self.engine.receive(id, barcode, actor))?;
        self.request(id)
    }

    pub fn loan(&self, id: &RequestId, patron_group: &str, actor: &Actor) -> Result<RSRequest, NodeError> {
        self.run(|| self.engine.loan_to_patron(id, patron_group, actor))?;
        self.request(id)
    }

    pub fn return_from_patron(&self, id: &RequestId, actor: &Actor) -> Result<RSRequest, NodeError> {
        self.run(|| self.engine.return_from_patron(id, actor))?;
        self.request(id)
    }

    pub fn release_quarantine(&self, id: &RequestId, actor: &Actor) -> Result<RSRequest, NodeError> {
        self.run(|| self.engine.release_quarantine(id, actor))?;
        self.request(id)
    }

    pub fn return_to_lender(&self, id: &RequestId, actor: &Actor) -> Result<RSRequest, NodeError> {
        self.run(|| self.engine.return_to_lender(id, actor))?;
        self.request(id)
    }

    pub fn annotate(&self, id: &RequestId, text: &str, actor: &Actor) -> Result<RSRequest, NodeError> {
        self.run(|| self.engine.annotate(id, text, actor))?;
        self.request(id)
    }

    /// Completes a received copy, or checks a returned loan in at the
    /// lender.
    pub fn complete(&self, id: &RequestId, lender: Option<LibraryId>, actor: &Actor) -> Result<Outcome, NodeError> {
        let req = self.request(id)?;
        if req.kind() == StatusKind::Received && self.engine.is_owned(id) {
            self.run(|| self.engine.complete(id, actor))?;
            return Ok(Outcome::Applied { request: self.request(id)? });
        }
        let lender = lender.or(req.supplied_by.clone());
        self.lender_op(id, lender, SupplierAction::CheckIn, Vec::new(), actor)
    }

    // ---- lending side ----

    pub fn accept(&self, id: &RequestId, lender: Option<LibraryId>, actor: &Actor) -> Result<Outcome, NodeError> {
        self.lender_op(id, lender, SupplierAction::Accept, Vec::new(), actor)
    }

    pub fn unfulfil(&self, id: &RequestId, lender: Option<LibraryId>, reason: UnfulfilReason, actor: &Actor) -> Result<Outcome, NodeError> {
        self.lender_op(id, lender, SupplierAction::Unfulfil { reason }, Vec::new(), actor)
    }

    pub fn decide_cancel(&self, id: &RequestId, lender: Option<LibraryId>, approve: bool, actor: &Actor) -> Result<Outcome, NodeError> {
        self.lender_op(id, lender, SupplierAction::CancelDecision { approve }, Vec::new(), actor)
    }

    /// Runs the licence and copyright gate for the request's borrower.
    pub fn supply_decision(&self, req: &RSRequest, opts: &SupplyOptions) -> Result<SupplyDecision, NodeError> {
        let st = self.state();
        let country = st
            .peers
            .get(&req.requester_library)
            .and_then(|p| p.country.clone())
            .unwrap_or_else(|| self.config.country.clone());
        let mut query = SupplyQuery::new(req.bib.clone(), req.flow, country);
        query.excerpt_pages = opts.excerpt_pages;
        query.total_pages = opts.total_pages;
        query.newsstand = opts.newsstand;
        query.requested_methods = opts.requested_methods.clone();
        Ok(check_supply_allowed(&query, &st.licences, &self.config.copyright_policy())?)
    }

    pub fn check_supply(
        &self,
        id: &RequestId,
        lender: Option<LibraryId>,
        opts: &SupplyOptions,
        actor: &Actor,
    ) -> Result<(Outcome, SupplyDecision), NodeError> {
        let req = self.request(id)?;
        let decision = self.supply_decision(&req, opts)?;
        let outcome = self.lender_op(id, lender, SupplierAction::SupplyCheck { decision: decision.clone() }, Vec::new(), actor)?;
        Ok((outcome, decision))
    }

    /// Ships the item: checks supply if no check is recorded, builds the
    /// scan package for electronic delivery and attaches the receipt.
    pub fn fulfil(&self, id: &RequestId, lender: Option<LibraryId>, opts: FulfilOptions, actor: &Actor) -> Result<FulfilOutcome, NodeError> {
        let req = self.request(id)?;
        let lender = self.resolve_lender(&req, lender, &SupplierAction::CheckIn)?;
        if req.kind() != StatusKind::Accepted {
            return Err(EngineError::InvalidState { status: req.status, op: Operation::Fulfil }.into());
        }
        let (allowed, supply) = if req.allowed_methods.is_empty() {
            let decision = self.supply_decision(&req, &opts.supply)?;
            match &decision {
                SupplyDecision::Allow(methods) => (methods.clone(), Some(decision)),
                SupplyDecision::Deny { .. } => {
                    let outcome = self.lender_op(id, Some(lender), SupplierAction::SupplyCheck { decision: decision.clone() }, Vec::new(), actor)?;
                    return Ok(FulfilOutcome { outcome, supply: Some(decision), package: None });
                }
            }
        } else {
            (req.allowed_methods.clone(), None)
        };
        let url = opts.url.as_deref().map(Url::parse).transpose().map_err(|e| NodeError::BadRequest(format!("url: {e}")))?;
        let method = opts.method.unwrap_or_else(|| default_method(req.flow, &allowed, url.is_some()));
        let now = self.now();
        let package = match method {
            DeliveryMethod::Sed | DeliveryMethod::ArticleExchange if url.is_none() => {
                let pages = opts
                    .source_pages
                    .or(req.bib.pages.map(|p| p.len()))
                    .ok_or_else(|| NodeError::BadRequest("source_pages required for a scan".into()))?;
                let package_id = format!("PKG-{id}-{}", req.history.len());
                Some(make_hardcopy(package_id, &SourcePage::synthetic(pages), &SyntheticRasterizer, &self.config.hardcopy, now)?)
            }
            _ => None,
        };
        let payload = match (&package, &url) {
            (Some(p), _) => Payload::Package(p),
            (None, Some(u)) => Payload::Url(u),
            (None, None) => Payload::Physical,
        };
        let receipt = deliver(&allowed, payload, method, now)?;
        let manifest = package.as_ref().map(|p| p.manifest());
        let extra = package.into_iter().map(|package| NodeRecord::PackageStored { package }).collect();
        let outcome = self.lender_op(id, Some(lender), SupplierAction::Ship { supply: supply.clone(), receipt }, extra, actor)?;
        Ok(FulfilOutcome { outcome, supply, package: manifest })
    }

    /// The hosted library acting as lender: the one named, else the
    /// request's current lender, else this node's own library.
    fn resolve_lender(&self, req: &RSRequest, lender: Option<LibraryId>, action: &SupplierAction) -> Result<LibraryId, NodeError> {
        let lender = lender
            .or_else(|| {
                let current = req.current_lender.clone().or(req.supplied_by.clone());
                current.filter(|l| self.hosts(l) && !matches!(action, SupplierAction::Accept if req.kind() == StatusKind::Orphaned))
            })
            .unwrap_or_else(|| self.config.id.clone());
        if !self.hosts(&lender) {
            return Err(NodeError::Forbidden(format!("{lender} is not hosted here")));
        }
        Ok(lender)
    }

    fn lender_op(
        &self,
        id: &RequestId,
        lender: Option<LibraryId>,
        action: SupplierAction,
        mut extra: Vec<NodeRecord>,
        actor: &Actor,
    ) -> Result<Outcome, NodeError> {
        let req = self.request(id)?;
        let lender = self.resolve_lender(&req, lender, &action)?;
        self.require(actor, &lender, Role::LendingOperator)?;
        if self.engine.is_owned(id) {
            let result = self.apply_supplier_action(id, &lender, &action, actor);
            if result.is_err() {
                extra.clear();
            }
            self.commit(extra, Cause::Local)?;
            result?;
            return Ok(Outcome::Applied { request: self.request(id)? });
        }
        self.check_mirror(&req, &lender, &action)?;
        let owner = req.requester_library.clone();
        if self.remote_node(&owner).is_none() {
            return Err(NodeError::NotFound(format!("no node known for {owner}")));
        }
        let payload = serde_json::to_value(SupplyingPayload { lender, action }).expect("payload serializes");
        let mut log = lock(&self.log);
        let n = self.state().messages_sent + 1;
        let message = WireMessage {
            message_id: self.message_id(n),
            correlation: id.clone(),
            kind: WireKind::SupplyingStatus,
            sender: self.config.id.clone(),
            recipient: owner,
            payload,
            sent_at: self.now(),
        };
        let message_id = message.message_id.clone();
        extra.push(NodeRecord::Outbound { message });
        self.commit_locked(&mut log, extra, Cause::Local)?;
        Ok(Outcome::Forwarded { message_id, request: req })
    }

    /// The owner decides, but obvious refusals are reported without a round
    /// trip.
    fn check_mirror(&self, req: &RSRequest, lender: &LibraryId, action: &SupplierAction) -> Result<(), NodeError> {
        let op = operation_of(action);
        if op == Operation::Accept && !req.is_terminal() && req.kind().has_lender() && req.was_broadcast() {
            let winner = req.current_lender.clone().or(req.supplied_by.clone()).unwrap_or_else(|| lender.clone());
            return Err(EngineError::AlreadyClaimed(winner).into());
        }
        if !transitions_from(req.kind()).any(|t| t.operation == op) {
            return Err(EngineError::InvalidState { status: req.status, op }.into());
        }
        let party = match action {
            SupplierAction::Accept if req.kind() == StatusKind::Orphaned => None,
            SupplierAction::CheckIn => req.supplied_by.as_ref(),
            _ => req.current_lender.as_ref(),
        };
        if party.is_some_and(|p| p != lender) {
            return Err(EngineError::Forbidden(format!("{lender} is not the current lender")).into());
        }
        Ok(())
    }

    // ---- reference data ----

    pub fn ingest_holdings<R: Read>(&self, reader: R, actor: &Actor) -> Result<usize, NodeError> {
        self.require(actor, &self.config.id, Role::LibraryManager)?;
        self.load_holdings(HoldingsIndex::from_csv(reader)?, actor)
    }

    /// Merges holdings into the union catalogue; returns the keys added.
    pub fn load_holdings(&self, holdings: HoldingsIndex, actor: &Actor) -> Result<usize, NodeError> {
        self.require(actor, &self.config.id, Role::LibraryManager)?;
        let n = holdings.len();
        self.commit(vec![NodeRecord::HoldingsMerged { holdings }], Cause::Local)?;
        Ok(n)
    }

    pub fn ingest_licences<R: Read>(&self, reader: R, actor: &Actor) -> Result<usize, NodeError> {
        self.require(actor, &self.config.id, Role::LibraryManager)?;
        self.load_licences(LicenceStore::from_csv(reader)?, actor)
    }

    pub fn load_licences(&self, licences: LicenceStore, actor: &Actor) -> Result<usize, NodeError> {
        self.require(actor, &self.config.id, Role::LibraryManager)?;
        let n = licences.len();
        self.commit(vec![NodeRecord::LicencesMerged { licences }], Cause::Local)?;
        Ok(n)
    }

    pub fn ingest_usage<R: Read>(&self, reader: R, actor: &Actor) -> Result<usize, NodeError> {
        self.require(actor, &self.config.id, Role::LibraryManager)?;
        let rows = read_usage_csv(reader)?;
        let n = rows.len();
        self.commit(vec![NodeRecord::UsageLoaded { rows }], Cause::Local)?;
        Ok(n)
    }

    /// Titles to buy at the end of the evidence-based programme.
    pub fn eba_selection(&self, budget: Money) -> Vec<String> {
        eba_select(&self.state().usage, budget)
    }

    // ---- packages and housekeeping ----

    /// Hands out a scan package and marks it downloaded.
    pub fn download_package(&self, package_id: &str, actor: &Actor) -> Result<Manifest, NodeError> {
        let manifest = {
            let st = self.state();
            let pkg = st.packages.get(package_id).ok_or_else(|| NodeError::NotFound(format!("package {package_id}")))?;
            if pkg.is_expired(self.now()) {
                return Err(NodeError::NotFound(format!("package {package_id} is past retention")));
            }
            pkg.manifest()
        };
        let request = package_id
            .strip_prefix("PKG-")
            .and_then(|rest| rest.rsplit_once('-'))
            .map(|(id, _)| RequestId::new(id));
        if let Some(req) = request.and_then(|id| self.engine.get(&id)) {
            self.require_member(actor, &req.requester_library)?;
        }
        self.commit(vec![NodeRecord::PackageDownloaded { package_id: package_id.to_string() }], Cause::Local)?;
        Ok(manifest)
    }

    /// Expires stale requests and purges packages past retention.
    pub fn housekeeping(&self) -> Result<Vec<RequestId>, NodeError> {
        let now = self.now();
        let expired = self.engine.expire_stale(now);
        let purge = self
            .state()
            .packages
            .iter()
            .any(|p| p.is_expired(now) || (p.delete_after_first_download && p.downloaded));
        let records = if purge { vec![NodeRecord::PackagesPurged { at: now }] } else { Vec::new() };
        self.commit(records, Cause::Local)?;
        Ok(expired)
    }

    // ---- reporting ----

    pub fn panel(&self, library: &LibraryId, panel: Panel) -> Vec<PanelRow> {
        self.engine.panel(library, panel)
    }

    pub fn stats(&self, library: &LibraryId, mode: FillRateMode, start: Timestamp, end: Timestamp) -> StatsReport {
        let requests = self.engine.snapshot();
        let window = StatsWindow::from_requests(library, &requests, start, end);
        StatsReport {
            library: library.clone(),
            mode,
            fill_rate: fill_rate(&window.aggregate, mode, 1).ok(),
            avg_turnaround_days: avg_turnaround(&window.aggregate).ok(),
            window,
        }
    }

    /// Ledger totals and what this node bills each counterparty under its
    /// own cost policy.
    pub fn ledger_report(&self, period: Period) -> LedgerReport {
        self.ledger_report_under(period, self.config.cost_policy)
    }

    pub fn ledger_report_under(&self, period: Period, policy: CostPolicy) -> LedgerReport {
        let st = self.state();
        let invoices = st.ledger.counterparties().iter().map(|cp| settle(&st.ledger, &period, &policy, cp)).collect();
        LedgerReport {
            period,
            policy,
            totals: st.ledger.totals().clone(),
            lent_units: st.ledger.units(Direction::Lent),
            borrowed_units: st.ledger.units(Direction::Borrowed),
            invoices,
        }
    }

    /// Units exchanged with each counterparty, lent and borrowed.
    pub fn exchange_balance(&self) -> BTreeMap<String, (u64, u64)> {
        let st = self.state();
        let mut out: BTreeMap<String, (u64, u64)> = BTreeMap::new();
        for e in st.ledger.entries() {
            let slot = out.entry(e.counterparty.clone()).or_default();
            match e.direction {
                Direction::Lent => slot.0 += u64::from(e.units),
                Direction::Borrowed => slot.1 += u64::from(e.units),
                _ => {}
            }
        }
        out
    }
}
