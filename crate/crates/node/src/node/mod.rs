//! A library node: the engine plus everything around it that has to
//! survive a restart. Every change is written to the event log as a
//! [`NodeRecord`] and applied by one function, both live and on replay, so
//! a node rebuilt from its log matches the node that wrote it.

mod auth;
mod inbound;
mod ops;
mod state;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use interlend_core::bibliography::FixtureSource;
use interlend_core::clock::{Clock, Timestamp};
use interlend_core::ids::{LibraryId, RequestId};
use interlend_core::ledger::{Direction, LedgerEntry};
use interlend_core::money::Money;
use interlend_core::request::{Change, Directory, Engine, EngineConfig, Event, RSRequest, RoleGrant};
use interlend_core::routing::PartnerDirectory;

use crate::config::{NodeConfig, PeerEntry};
use crate::error::NodeError;
use crate::log::{parse_log, EntityRef, EventLog, LogRecord};
use crate::wire::{HistoryPayload, WireKind, WireMessage};

pub use auth::{hash_secret, OperatorAction, TokenGrant};
pub use ops::{FulfilOptions, FulfilOutcome, LedgerReport, NewRequest, Outcome, PodInput, SendOptions, StatsReport, SupplyOptions};
pub use state::{Alert, NodeRecord, NodeState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Live,
    Replay,
}

/// Why owned requests changed; picks the kind of the replication message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cause {
    Local,
    Supplier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRequest {
    pub owned: bool,
    pub history: Vec<Event>,
}

/// Everything a node knows, in canonical order. Its hash is the state
/// digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub seq: u64,
    pub directory: Directory,
    pub requests: BTreeMap<RequestId, StoredRequest>,
    pub state: NodeState,
}

pub(crate) fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

pub struct Node {
    config: NodeConfig,
    clock: Arc<dyn Clock>,
    engine: Engine,
    state: RwLock<NodeState>,
    log: Mutex<EventLog>,
    sources: Arc<FixtureSource>,
}

impl Node {
    /// Opens the node's log (and snapshot, if any) from its data directory,
    /// or starts an in-memory node when none is configured.
    pub fn open(config: NodeConfig, clock: Arc<dyn Clock>) -> Result<Node, NodeError> {
        config.validate()?;
        let sources = match &config.metadata_fixture {
            Some(path) => FixtureSource::load(path)?,
            None => FixtureSource::default(),
        };
        let Some(log_path) = config.log_path() else {
            return Node::assemble(config, clock, EventLog::in_memory(), None, Vec::new(), sources);
        };
        let (log, records) = EventLog::open(&log_path)?;
        let snapshot = match config.snapshot_path() {
            Some(p) if p.exists() => {
                let text = std::fs::read_to_string(&p)?;
                Some(serde_json::from_str::<NodeSnapshot>(&text).map_err(|e| NodeError::CorruptLog(format!("snapshot: {e}")))?)
            }
            _ => None,
        };
        Node::assemble(config, clock, log, snapshot, records, sources)
    }

    /// Rebuilds an in-memory node from raw log bytes.
    pub fn recover(config: NodeConfig, clock: Arc<dyn Clock>, bytes: &[u8]) -> Result<Node, NodeError> {
        config.validate()?;
        let records = parse_log(bytes)?;
        let log = EventLog::resume_in_memory(bytes.to_vec(), records.len());
        Node::assemble(config, clock, log, None, records, FixtureSource::default())
    }

    fn assemble(
        config: NodeConfig,
        clock: Arc<dyn Clock>,
        log: EventLog,
        snapshot: Option<NodeSnapshot>,
        records: Vec<LogRecord>,
        sources: FixtureSource,
    ) -> Result<Node, NodeError> {
        let engine = Engine::new(clock.clone(), EngineConfig { validity_days: config.validity_days });
        let node = Node {
            config,
            clock,
            engine,
            state: RwLock::new(NodeState::default()),
            log: Mutex::new(log),
            sources: Arc::new(sources),
        };
        let mut from_seq = 0;
        if let Some(snap) = snapshot {
            from_seq = snap.seq;
            node.restore(snap)?;
        }
        {
            let mut st = node.state_mut();
            for record in records.into_iter().filter(|r| r.seq > from_seq) {
                node.apply(&mut st, &record.payload, Mode::Replay)?;
                st.seq = record.seq;
            }
        }
        if lock(&node.log).is_empty() {
            node.bootstrap()?;
        }
        Ok(node)
    }

    /// Replaces the citation and open-access fixture.
    pub fn with_sources(mut self, sources: FixtureSource) -> Self {
        self.sources = Arc::new(sources);
        self
    }

    fn restore(&self, snap: NodeSnapshot) -> Result<(), NodeError> {
        self.engine.replace_directory(snap.directory);
        for (id, stored) in snap.requests {
            for (i, event) in stored.history.into_iter().enumerate() {
                self.engine.ingest(&id, i, event, stored.owned)?;
            }
        }
        let mut st = self.state_mut();
        *st = snap.state;
        Ok(())
    }

    fn bootstrap(&self) -> Result<(), NodeError> {
        let cfg = &self.config;
        let own = PeerEntry {
            partner: cfg.own_partner(),
            url: None,
            country: Some(cfg.country.clone()),
            name: Some(cfg.name.clone()),
        };
        let mut records = vec![NodeRecord::LibraryRegistered { peer: own, local: true }];
        for peer in &cfg.peers {
            records.push(NodeRecord::LibraryRegistered { peer: peer.clone(), local: false });
        }
        for op in &cfg.operators {
            records.push(NodeRecord::CredentialSet { user: op.user.clone(), secret_sha256: hash_secret(&op.secret) });
            let library = op.library.clone().unwrap_or_else(|| cfg.id.clone());
            records.push(NodeRecord::RolesGranted { grant: RoleGrant::new(op.user.clone(), library, op.roles.iter().copied()) });
        }
        self.commit(records, Cause::Local)
    }

    // ---- accessors ----

    pub fn id(&self) -> &LibraryId {
        &self.config.id
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn request(&self, id: &RequestId) -> Result<RSRequest, NodeError> {
        self.engine.get(id).ok_or_else(|| NodeError::Engine(interlend_core::request::EngineError::UnknownRequest(id.clone())))
    }

    pub(crate) fn state(&self) -> RwLockReadGuard<'_, NodeState> {
        self.state.read().unwrap_or_else(|p| p.into_inner())
    }

    fn state_mut(&self) -> RwLockWriteGuard<'_, NodeState> {
        self.state.write().unwrap_or_else(|p| p.into_inner())
    }

    /// A copy of the non-request state.
    pub fn state_copy(&self) -> NodeState {
        self.state().clone()
    }

    pub fn partners(&self) -> PartnerDirectory {
        self.state().peers.values().map(|p| p.partner.clone()).collect()
    }

    /// The node that hosts `library`, when it is not this one.
    pub fn remote_node(&self, library: &LibraryId) -> Option<LibraryId> {
        let st = self.state();
        match st.peers.get(library) {
            Some(p) if p.url.is_some() && !st.local.contains(library) => Some(library.clone()),
            _ => None,
        }
    }

    /// Base URL of the node hosting `library`.
    pub fn peer_url(&self, library: &LibraryId) -> Option<String> {
        self.state().peers.get(library).and_then(|p| p.url.clone())
    }

    /// Undelivered outbound messages, oldest first.
    pub fn outbox(&self) -> Vec<WireMessage> {
        self.state().outbox.values().cloned().collect()
    }

    /// Undelivered messages whose ids `skip` rejects.
    pub fn outbox_except(&self, skip: impl Fn(&str) -> bool) -> Vec<WireMessage> {
        self.state().outbox.iter().filter(|(id, _)| !skip(id)).map(|(_, m)| m.clone()).collect()
    }

    pub fn alerts(&self) -> Vec<Alert> {
        self.state().alerts.clone()
    }

    pub fn log_len(&self) -> u64 {
        lock(&self.log).len()
    }

    /// Bytes of an in-memory log.
    pub fn log_bytes(&self) -> Vec<u8> {
        lock(&self.log).bytes().to_vec()
    }

    // ---- snapshot and digest ----

    pub fn snapshot(&self) -> NodeSnapshot {
        let _log = lock(&self.log);
        let st = self.state();
        let requests = self
            .engine
            .snapshot()
            .into_iter()
            .map(|r| {
                let owned = self.engine.is_owned(&r.id);
                (r.id, StoredRequest { owned, history: r.history })
            })
            .collect();
        NodeSnapshot { seq: st.seq, directory: self.engine.directory(), requests, state: st.clone() }
    }

    /// SHA-256 over the canonical JSON of [`Node::snapshot`].
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(&self.snapshot()).expect("snapshot serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Writes a snapshot next to the log; later starts replay only the
    /// records after it.
    pub fn write_snapshot(&self) -> Result<Option<std::path::PathBuf>, NodeError> {
        let Some(path) = self.config.snapshot_path() else { return Ok(None) };
        write_atomic(&path, &serde_json::to_vec(&self.snapshot()).expect("snapshot serializes"))?;
        Ok(Some(path))
    }

    // ---- commit and apply ----

    fn commit(&self, records: Vec<NodeRecord>, cause: Cause) -> Result<(), NodeError> {
        let mut log = lock(&self.log);
        self.commit_locked(&mut log, records, cause)
    }

    /// Logs and applies `records`, then whatever the engine committed since
    /// the last drain, then the replication messages those changes need.
    fn commit_locked(&self, log: &mut EventLog, mut records: Vec<NodeRecord>, cause: Cause) -> Result<(), NodeError> {
        for j in self.engine.drain_journal() {
            records.push(NodeRecord::RequestEvent { request: j.request, index: j.index, owned: true, event: j.event });
        }
        let mut st = self.state_mut();
        let mut dirty = BTreeSet::new();
        for record in records {
            if let NodeRecord::RequestEvent { request, owned: true, .. } = &record {
                dirty.insert(request.clone());
            }
            self.append(log, &mut st, record)?;
        }
        for id in dirty {
            for message in self.replication(&st, &id, cause) {
                self.append(log, &mut st, NodeRecord::Outbound { message })?;
            }
        }
        Ok(())
    }

    fn append(&self, log: &mut EventLog, st: &mut NodeState, record: NodeRecord) -> Result<(), NodeError> {
        let seq = log.append(record.entity(), record.clone())?;
        self.apply(st, &record, Mode::Live)?;
        st.seq = seq;
        Ok(())
    }

    fn apply(&self, st: &mut NodeState, record: &NodeRecord, mode: Mode) -> Result<(), NodeError> {
        match record {
            NodeRecord::LibraryRegistered { peer, local } => {
                self.engine.register_library(peer.id().clone(), peer.partner.profile.clone());
                if *local {
                    st.local.insert(peer.id().clone());
                }
                st.peers.insert(peer.id().clone(), peer.clone());
            }
            NodeRecord::CredentialSet { user, secret_sha256 } => {
                st.credentials.insert(user.clone(), secret_sha256.clone());
            }
            NodeRecord::RolesGranted { grant } => self.engine.grant(grant.clone()),
            NodeRecord::RolesRevoked { user, library, roles } => {
                self.engine.revoke(user, library, roles);
                if roles.is_empty() {
                    if let Some(pending) = st.invitations.get_mut(user) {
                        pending.retain(|g| &g.library != library);
                    }
                }
            }
            NodeRecord::Invited { grant } => st.invitations.entry(grant.user.clone()).or_default().push(grant.clone()),
            NodeRecord::TokenIssued { token_sha256, user, issued_at, expires_at } => {
                st.tokens.retain(|_, t| t.expires_at > *issued_at);
                st.tokens.insert(token_sha256.clone(), TokenGrant { user: user.clone(), expires_at: *expires_at });
                for grant in st.invitations.remove(user).unwrap_or_default() {
                    self.engine.grant(grant);
                }
            }
            NodeRecord::RequestEvent { request, index, owned, event } => {
                if mode == Mode::Replay {
                    self.engine.ingest(request, *index, event.clone(), *owned)?;
                }
                self.after_event(st, request, *index, *owned, event);
            }
            NodeRecord::HoldingsMerged { holdings } => st.holdings.merge(holdings.clone()),
            NodeRecord::LicencesMerged { licences } => st.licences.merge(licences.clone()),
            NodeRecord::UsageLoaded { rows } => st.usage.extend(rows.iter().cloned()),
            NodeRecord::PackageStored { package } => st.packages.insert(package.clone()),
            NodeRecord::PackageDownloaded { package_id } => st.packages.mark_downloaded(package_id)?,
            NodeRecord::PackagesPurged { at } => {
                st.packages.purge_expired(*at);
            }
            NodeRecord::WireHandled { ack } => {
                st.wire_seen.insert(ack.message_id.clone(), ack.clone());
            }
            NodeRecord::Outbound { message } => {
                st.messages_sent += 1;
                if message.kind != WireKind::SupplyingStatus {
                    if let Ok(p) = serde_json::from_value::<HistoryPayload>(message.payload.clone()) {
                        st.replicated
                            .entry(message.correlation.clone())
                            .or_default()
                            .insert(message.recipient.clone(), p.events.len());
                    }
                }
                st.outbox.insert(message.message_id.clone(), message.clone());
            }
            NodeRecord::Delivered { ack } => {
                if let Some(msg) = st.outbox.remove(&ack.message_id) {
                    if !ack.is_accepted() {
                        st.alerts.push(Alert {
                            at: msg.sent_at,
                            library: msg.sender.clone(),
                            request: Some(msg.correlation.clone()),
                            text: format!(
                                "{} refused {:?} message: {}",
                                msg.recipient,
                                msg.kind,
                                ack.detail.clone().or(ack.code.clone()).unwrap_or_default()
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Ledger postings and alerts that follow from a request event.
    fn after_event(&self, st: &mut NodeState, id: &RequestId, index: usize, owned: bool, event: &Event) {
        match &event.change {
            Change::Created { requester_library, .. } if index == 0 && !owned => {
                for library in st.local.clone() {
                    st.alerts.push(Alert {
                        at: event.at,
                        library,
                        request: Some(id.clone()),
                        text: format!("new lending request {id} from {requester_library}"),
                    });
                }
            }
            Change::Sent { lender, .. } if owned && st.local.contains(lender) && st.peers.get(lender).is_some_and(|p| p.url.is_none()) => {
                st.alerts.push(Alert {
                    at: event.at,
                    library: lender.clone(),
                    request: Some(id.clone()),
                    text: format!("request {id} sent to {lender}; forward it by email"),
                });
            }
            Change::Shipped { .. } => {
                let Some(req) = self.engine.get(id) else { return };
                let Some(supplier) = req.supplied_by.clone() else { return };
                let mut post = |direction, counterparty: &LibraryId| {
                    let mut entry = LedgerEntry::new(event.at, direction, counterparty.as_str(), 1, Money::ZERO);
                    entry.request = Some(id.to_string());
                    st.ledger.post(entry).expect("unit entries are valid");
                };
                if st.local.contains(&req.requester_library) {
                    post(Direction::Borrowed, &supplier);
                }
                if st.local.contains(&supplier) {
                    post(Direction::Lent, &req.requester_library);
                }
            }
            _ => {}
        }
    }

    /// History messages for every remote node that should mirror `id`:
    /// those already mirroring it, every lender it involved, and all
    /// networked FULL libraries while it is broadcast.
    fn replication(&self, st: &NodeState, id: &RequestId, cause: Cause) -> Vec<WireMessage> {
        let Some(req) = self.engine.get(id) else { return Vec::new() };
        let sent = st.replicated.get(id).cloned().unwrap_or_default();
        let mut targets: BTreeSet<LibraryId> = sent.keys().cloned().collect();
        targets.extend(req.lenders_involved());
        targets.extend(req.current_lender.clone());
        if req.was_broadcast() {
            targets.extend(st.peers.values().filter(|p| p.partner.can_lend()).map(|p| p.id().clone()));
        }
        let mut out = Vec::new();
        let mut n = st.messages_sent;
        for target in targets {
            let networked = st.peers.get(&target).is_some_and(|p| p.url.is_some());
            if !networked || st.local.contains(&target) {
                continue;
            }
            let already = sent.get(&target).copied().unwrap_or(0);
            if already >= req.history.len() {
                continue;
            }
            let kind = match (already, cause) {
                (0, _) => WireKind::Request,
                (_, Cause::Supplier) => WireKind::RequestConfirmation,
                (_, Cause::Local) => WireKind::RequestingAction,
            };
            n += 1;
            out.push(WireMessage {
                message_id: self.message_id(n),
                correlation: id.clone(),
                kind,
                sender: self.config.id.clone(),
                recipient: target,
                payload: serde_json::to_value(HistoryPayload { events: req.history.clone() }).expect("events serialize"),
                sent_at: req.history.last().map_or(self.now(), |e| e.at),
            });
        }
        out
    }

    fn message_id(&self, n: u64) -> String {
        format!("{}-M{:08}", self.config.id, n)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), NodeError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

impl NodeRecord {
    pub fn entity(&self) -> EntityRef {
        let (kind, id) = match self {
            NodeRecord::LibraryRegistered { peer, .. } => ("library", peer.id().to_string()),
            NodeRecord::CredentialSet { user, .. }
            | NodeRecord::RolesRevoked { user, .. }
            | NodeRecord::TokenIssued { user, .. } => ("user", user.to_string()),
            NodeRecord::RolesGranted { grant } | NodeRecord::Invited { grant } => ("user", grant.user.to_string()),
            NodeRecord::RequestEvent { request, .. } => ("request", request.to_string()),
            NodeRecord::HoldingsMerged { .. } => ("holdings", String::new()),
            NodeRecord::LicencesMerged { .. } => ("licences", String::new()),
            NodeRecord::UsageLoaded { .. } => ("usage", String::new()),
            NodeRecord::PackageStored { package } => ("package", package.package_id.clone()),
            NodeRecord::PackageDownloaded { package_id } => ("package", package_id.clone()),
            NodeRecord::PackagesPurged { .. } => ("package", String::new()),
            NodeRecord::WireHandled { ack } | NodeRecord::Delivered { ack } => ("message", ack.message_id.clone()),
            NodeRecord::Outbound { message } => ("message", message.message_id.clone()),
        };
        EntityRef { kind: kind.into(), id }
    }
}
