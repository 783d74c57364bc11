//! Deterministic discrete-event simulation of several nodes exchanging
//! wire messages in one process. One seeded RNG drives arrivals, staff
//! decisions and network delays; one manual clock is shared by all nodes.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use interlend_core::bibliography::{BibRef, NormalizedKey};
use interlend_core::clock::{reference_epoch, Clock, ManualClock, Timestamp};
use interlend_core::compliance::{DeliveryMethod, LicenceRecord, LicenceStore};
use interlend_core::ids::{LibraryId, RequestId, UserId};
use interlend_core::ledger::{CostPolicy, Direction, FillRateMode, Invoice, Percent, Period, StatsWindow};
use interlend_core::money::Money;
use interlend_core::request::{Actor, Change, Flow, RSRequest, Role, RouteAdvice, StatusKind, UnfulfilReason};
use interlend_core::routing::{match_holdings, HoldingsIndex, Partner, Pod, RoutingConfig, ServiceHours};

use crate::config::{NodeConfig, OperatorSeed, PeerEntry};
use crate::error::NodeError;
use crate::node::{FulfilOptions, NewRequest, Node, SendOptions};
use crate::wire::WireMessage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub horizon_days: i64,
    /// Requests arrive uniformly over this many days.
    pub arrival_days: i64,
    /// Share of requests broadcast to every library instead of routed.
    pub broadcast_share: f64,
    /// Share of titles that are books; the rest are articles.
    pub returnable_share: f64,
    /// Chance that a given library holds a given title.
    pub hold_probability: f64,
    /// Chance a holding lender accepts rather than reporting the item off
    /// the shelf.
    pub accept_probability: f64,
    /// Chance a message is delivered a second time.
    pub duplicate_rate: f64,
    /// Share of journals licensed for domestic supply only.
    pub restricted_share: f64,
    /// Chance per check that a borrower cancels a pending request.
    pub cancel_probability: f64,
    pub cost_policy: CostPolicy,
    pub quarantine_days: u32,
    pub loan_days: i64,
    pub tick_hours: i64,
    pub max_delay_minutes: i64,
    /// Every request at t0, titles held by every library except the
    /// requester, no broadcasts: a fairness check of partner selection.
    pub uniform: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            horizon_days: 90,
            arrival_days: 30,
            broadcast_share: 0.1,
            returnable_share: 0.4,
            hold_probability: 0.6,
            accept_probability: 0.85,
            duplicate_rate: 0.05,
            restricted_share: 0.1,
            cancel_probability: 0.002,
            cost_policy: CostPolicy::Free,
            quarantine_days: 5,
            loan_days: 14,
            tick_hours: 4,
            max_delay_minutes: 30,
            uniform: false,
        }
    }
}

impl Scenario {
    pub fn uniform() -> Self {
        Scenario {
            broadcast_share: 0.0,
            hold_probability: 1.0,
            accept_probability: 1.0,
            duplicate_rate: 0.0,
            restricted_share: 0.0,
            cancel_probability: 0.0,
            uniform: true,
            ..Scenario::default()
        }
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        let shares = [
            ("broadcast_share", self.broadcast_share),
            ("returnable_share", self.returnable_share),
            ("hold_probability", self.hold_probability),
            ("accept_probability", self.accept_probability),
            ("duplicate_rate", self.duplicate_rate),
            ("restricted_share", self.restricted_share),
            ("cancel_probability", self.cancel_probability),
        ];
        if let Some((name, v)) = shares.iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
            return Err(NodeError::ConfigInvalid(format!("{name} = {v} is not a probability")));
        }
        if self.horizon_days < 1 || self.arrival_days < 0 || self.arrival_days > self.horizon_days {
            return Err(NodeError::ConfigInvalid("need 0 <= arrival_days <= horizon_days and horizon_days >= 1".into()));
        }
        if self.tick_hours < 1 || self.max_delay_minutes < 1 || self.loan_days < 0 {
            return Err(NodeError::ConfigInvalid("tick_hours and max_delay_minutes must be positive".into()));
        }
        self.cost_policy.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub policy: CostPolicy,
    pub invoices: Vec<Invoice>,
    pub total: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub id: LibraryId,
    pub stats: StatsWindow,
    pub fill_rate_of_total: Option<Percent>,
    pub fill_rate_of_decided: Option<Percent>,
    pub avg_turnaround_days: Option<f64>,
    pub lent_units: u64,
    pub borrowed_units: u64,
    pub ledger_digest: String,
    pub state_digest: String,
    /// Invoices this node would issue under each policy.
    pub settlements: BTreeMap<String, Settlement>,
    /// How often this node's requests were sent to each lender.
    pub assignments: BTreeMap<LibraryId, u32>,
    pub alerts: usize,
    pub log_records: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageCounts {
    pub sent: u64,
    pub delivered: u64,
    pub duplicates: u64,
    pub rejected: u64,
    pub rejected_by_code: BTreeMap<String, u64>,
    pub undelivered: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageCounts {
    pub created: u64,
    pub wrong_dpi: u64,
    pub wrong_page_count: u64,
    /// Past retention but still stored after the final sweep.
    pub expired_remaining: u64,
    pub purged: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub nodes: usize,
    pub scenario: Scenario,
    pub generated: usize,
    pub terminal: usize,
    pub in_flight: usize,
    pub statuses: BTreeMap<String, usize>,
    pub unfulfil_reasons: BTreeMap<u8, u64>,
    pub per_node: Vec<NodeReport>,
    pub network_lent: u64,
    pub network_borrowed: u64,
    pub balanced: bool,
    pub messages: MessageCounts,
    pub packages: PackageCounts,
    /// Refused staff actions by error code.
    pub refusals: BTreeMap<String, u64>,
    pub finished_at: Timestamp,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Largest minus smallest per-lender assignment count, per borrower.
    pub fn assignment_spread(&self) -> BTreeMap<LibraryId, u32> {
        self.per_node
            .iter()
            .map(|n| {
                let counts: Vec<u32> = self
                    .per_node
                    .iter()
                    .filter(|m| m.id != n.id)
                    .map(|m| n.assignments.get(&m.id).copied().unwrap_or(0))
                    .collect();
                let spread = counts.iter().max().unwrap_or(&0) - counts.iter().min().unwrap_or(&0);
                (n.id.clone(), spread)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
enum SimEvent {
    Arrival { node: usize, title: usize },
    Tick { node: usize },
    Daily,
    Deliver { msg: WireMessage, duplicate: bool },
}

struct Title {
    bib: BibRef,
    flow: Flow,
    pages: u32,
}

struct World {
    rng: ChaCha8Rng,
    clock: Arc<ManualClock>,
    nodes: Vec<Node>,
    ids: Vec<LibraryId>,
    staff: Vec<Actor>,
    titles: Vec<Title>,
    holdings: HoldingsIndex,
    scenario: Scenario,
    queue: BTreeMap<(Timestamp, u64), SimEvent>,
    next_seq: u64,
    scheduled: BTreeSet<String>,
    channel_last: BTreeMap<(LibraryId, LibraryId), Timestamp>,
    /// History length each node last acted on, per request.
    acted: BTreeMap<(usize, RequestId), usize>,
    finished: BTreeSet<(usize, RequestId)>,
    messages: MessageCounts,
    packages: PackageCounts,
    refusals: BTreeMap<String, u64>,
    horizon: Timestamp,
}

fn policies() -> [(&'static str, CostPolicy); 3] {
    let eight = Money::from_euros(8);
    [
        ("FREE", CostPolicy::Free),
        ("THRESHOLD", CostPolicy::FreeWithThreshold { threshold_units: 10, unit_price: eight }),
        ("FIXED", CostPolicy::FixedUnit { unit_price: eight }),
    ]
}

fn node_id(i: usize) -> LibraryId {
    LibraryId::new(format!("N{}", i + 1))
}

fn country(i: usize) -> &'static str {
    if i.is_multiple_of(2) {
        "BE"
    } else {
        "FR"
    }
}

/// Configurations for `n` networked nodes N1..Nn in one reciprocal pod,
/// each with a manager `staff@Ni` whose secret is `sim`.
pub fn network_configs(n: usize, scenario: &Scenario) -> Vec<NodeConfig> {
    let ids: Vec<LibraryId> = (0..n).map(node_id).collect();
    let pod = Pod::new("network", ids.iter().cloned());
    (0..n)
        .map(|i| {
            let mut cfg = NodeConfig::new(ids[i].clone(), format!("Library {}", i + 1));
            cfg.latitude = 40.0 + i as f64;
            cfg.longitude = 2.0 + i as f64;
            cfg.service_hours = ServiceHours::always();
            cfg.profile.quarantine_days = scenario.quarantine_days;
            cfg.cost_policy = scenario.cost_policy;
            cfg.country = country(i).into();
            cfg.routing = RoutingConfig { include_all_libraries: true, ..RoutingConfig::default() };
            cfg.pods = vec![pod.clone()];
            cfg.operators = vec![OperatorSeed {
                user: UserId::new(format!("staff@{}", ids[i])),
                secret: "sim".into(),
                library: None,
                roles: [Role::LibraryManager].into(),
            }];
            cfg.peers = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let mut p = Partner::network_node(ids[j].clone());
                    p.service_hours = ServiceHours::always();
                    p.latitude = 40.0 + j as f64;
                    p.longitude = 2.0 + j as f64;
                    let mut peer = PeerEntry::networked(p, format!("sim://{}", ids[j]));
                    peer.country = Some(country(j).into());
                    peer
                })
                .collect();
            cfg
        })
        .collect()
}

/// Delivers every outbound message between `nodes` until none are left,
/// in message id order. Returns how many were delivered.
pub fn drain_outboxes<N: Borrow<Node>>(nodes: &[N]) -> Result<usize, NodeError> {
    let nodes: Vec<&Node> = nodes.iter().map(Borrow::borrow).collect();
    let mut delivered = 0;
    loop {
        let pending: Vec<WireMessage> = nodes.iter().flat_map(|n| n.outbox()).collect();
        if pending.is_empty() {
            return Ok(delivered);
        }
        for msg in pending {
            let to = nodes.iter().find(|n| n.id() == &msg.recipient);
            let from = nodes.iter().find(|n| n.id() == &msg.sender);
            let (Some(to), Some(from)) = (to, from) else {
                return Err(NodeError::NotFound(format!("no node {} in this network", msg.recipient)));
            };
            let ack = to.handle_wire(&msg)?;
            from.acknowledge(ack)?;
            delivered += 1;
        }
    }
}

/// Runs the simulation. Equal inputs give byte-identical reports.
pub fn run_simulation(seed: u64, nodes: usize, requests: usize, scenario: &Scenario) -> Result<SimReport, NodeError> {
    if nodes < 2 {
        return Err(NodeError::ConfigInvalid("a simulation needs at least two nodes".into()));
    }
    scenario.validate()?;
    let mut world = World::new(seed, nodes, requests, scenario.clone())?;
    world.run()?;
    world.report(seed, requests)
}

impl World {
    fn new(seed: u64, n: usize, requests: usize, scenario: Scenario) -> Result<World, NodeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clock = Arc::new(ManualClock::new(reference_epoch()));
        let ids: Vec<LibraryId> = (0..n).map(node_id).collect();
        let nodes = network_configs(n, &scenario)
            .into_iter()
            .map(|cfg| Node::open(cfg, clock.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let staff = ids.iter().map(|id| Actor::User(UserId::new(format!("staff@{id}")))).collect();

        // Catalogue, holdings and licences.
        let title_count = if scenario.uniform { requests.max(n) } else { (requests / 2).max(10) };
        // One journal per article title, so holdings stay per title.
        let journals = title_count;
        let restricted: BTreeSet<usize> = (0..journals).filter(|_| rng.random_bool(scenario.restricted_share)).collect();
        let mut titles = Vec::with_capacity(title_count);
        let mut holdings = HoldingsIndex::new();
        for t in 0..title_count {
            let title = if rng.random_bool(scenario.returnable_share) {
                let isbn = format!("978{:010}", 100_000 + t);
                Title { bib: BibRef::book(format!("Monograph {t}"), isbn).with_year(2000 + (t % 24) as i32), flow: Flow::Returnable, pages: 0 }
            } else {
                let j = t;
                let start = rng.random_range(1..200);
                let pages = rng.random_range(3..25);
                let bib = BibRef::article(format!("Article {t}"), format!("Journal {j}"), 1990 + (t % 30) as i32)
                    .with_issn(format!("1000-{:04}", j))
                    .with_pages(start, start + pages - 1);
                Title { bib, flow: Flow::NonReturnable, pages }
            };
            let key = interlend_core::bibliography::holdings_keys(&title.bib).into_iter().next().expect("titles have keys");
            for (i, id) in ids.iter().enumerate() {
                let holds = if scenario.uniform { t % n != i } else { rng.random_bool(scenario.hold_probability) };
                if holds {
                    holdings.insert(NormalizedKey::from_raw(key.as_str()), id.clone(), 1900, 2100)?;
                }
            }
            titles.push(title);
        }
        let mut licences = LicenceStore::new();
        for j in restricted.iter().filter(|&&j| titles[j].flow == Flow::NonReturnable) {
            licences.insert(LicenceRecord {
                publisher: "Sim Press".into(),
                container: format!("1000-{:04}", j),
                ill_digital_allowed: true,
                allowed_methods: [DeliveryMethod::Sed, DeliveryMethod::Postal].into(),
                cross_border_allowed: false,
            })?;
        }
        for node in &nodes {
            node.load_holdings(holdings.clone(), &Actor::System)?;
            node.load_licences(licences.clone(), &Actor::System)?;
        }

        let start = reference_epoch();
        let horizon = start + Duration::days(scenario.horizon_days);
        let mut world = World {
            rng,
            clock,
            nodes,
            ids,
            staff,
            titles,
            holdings,
            scenario,
            queue: BTreeMap::new(),
            next_seq: 0,
            scheduled: BTreeSet::new(),
            channel_last: BTreeMap::new(),
            acted: BTreeMap::new(),
            finished: BTreeSet::new(),
            messages: MessageCounts::default(),
            packages: PackageCounts::default(),
            refusals: BTreeMap::new(),
            horizon,
        };

        for r in 0..requests {
            let (at, node, title) = if world.scenario.uniform {
                // Title t is held everywhere except node t % n.
                (start, r % n, r)
            } else {
                let secs = world.rng.random_range(0..(world.scenario.arrival_days.max(1) * 86_400));
                let title = world.rng.random_range(0..title_count);
                // Patrons mostly ask for what their own library lacks.
                let lacking: Vec<usize> = (0..n).filter(|&i| !world.holds(i, &world.titles[title].bib)).collect();
                let node = if lacking.is_empty() { world.rng.random_range(0..n) } else { lacking[world.rng.random_range(0..lacking.len())] };
                (start + Duration::seconds(secs), node, title)
            };
            world.schedule(at, SimEvent::Arrival { node, title });
        }
        let tick = Duration::hours(world.scenario.tick_hours);
        for i in 0..n {
            // Stagger node ticks so they do not all act at the same instant.
            let mut at = start + tick + Duration::minutes(7 * i as i64);
            while at < horizon {
                world.schedule(at, SimEvent::Tick { node: i });
                at += tick;
            }
        }
        let mut day = start + Duration::days(1);
        while day <= horizon {
            world.schedule(day, SimEvent::Daily);
            day += Duration::days(1);
        }
        Ok(world)
    }

    fn schedule(&mut self, at: Timestamp, event: SimEvent) {
        self.next_seq += 1;
        self.queue.insert((at, self.next_seq), event);
    }

    fn run(&mut self) -> Result<(), NodeError> {
        while let Some(((at, _), event)) = self.queue.pop_first() {
            self.clock.set(at);
            match event {
                SimEvent::Arrival { node, title } => self.arrival(node, title)?,
                SimEvent::Tick { node } => self.tick(node)?,
                SimEvent::Daily => {
                    for node in &self.nodes {
                        node.housekeeping()?;
                    }
                }
                SimEvent::Deliver { msg, duplicate } => self.deliver(msg, duplicate)?,
            }
            self.pump_outboxes();
        }
        let end = self.clock.now().max(self.horizon);
        self.clock.set(end);
        for node in &self.nodes {
            node.housekeeping()?;
        }
        Ok(())
    }

    fn refused(&mut self, e: &NodeError) {
        *self.refusals.entry(e.code().to_string()).or_default() += 1;
    }

    /// Turns an operation error into a refusal count; log failures abort.
    fn tolerate<T>(&mut self, r: Result<T, NodeError>) -> Result<Option<T>, NodeError> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(e @ (NodeError::Io(_) | NodeError::CorruptLog(_) | NodeError::ChecksumMismatch { .. })) => Err(e),
            Err(e) => {
                self.refused(&e);
                Ok(None)
            }
        }
    }

    fn arrival(&mut self, i: usize, title: usize) -> Result<(), NodeError> {
        let t = &self.titles[title];
        let input = NewRequest { bib: Some(t.bib.clone()), flow: Some(t.flow), ..NewRequest::default() };
        let actor = self.staff[i].clone();
        let created = self.nodes[i].create_request(input, &actor);
        let Some(req) = self.tolerate(created)? else { return Ok(()) };
        let advice = self.nodes[i].precheck(&req.id, &actor);
        let Some(advice) = self.tolerate(advice)? else { return Ok(()) };
        if advice != RouteAdvice::Proceed {
            return Ok(());
        }
        let broadcast = !self.scenario.uniform && self.rng.random_bool(self.scenario.broadcast_share);
        let sent = if broadcast {
            self.nodes[i].send_all(&req.id, &actor)
        } else {
            self.nodes[i].send(&req.id, SendOptions::default(), &actor)
        };
        self.tolerate(sent)?;
        Ok(())
    }

    fn holds(&self, i: usize, bib: &BibRef) -> bool {
        match_holdings(bib, &self.holdings).contains(&self.ids[i])
    }

    fn tick(&mut self, i: usize) -> Result<(), NodeError> {
        let me = self.ids[i].clone();
        let actor = self.staff[i].clone();
        let now = self.clock.now();
        for id in self.nodes[i].engine().ids() {
            let key = (i, id);
            if self.finished.contains(&key) {
                continue;
            }
            let Some(req) = self.nodes[i].engine().get(&key.1) else { continue };
            if req.is_terminal() {
                self.finished.insert(key);
                continue;
            }
            if self.acted.get(&key) == Some(&req.history.len()) {
                continue;
            }
            let owned = self.nodes[i].engine().is_owned(&req.id);
            let acted = if owned && req.requester_library == me {
                self.borrower_step(i, &req, now, &actor)?
            } else {
                false
            };
            let acted = acted || self.lender_step(i, &me, &req, &actor)?;
            if acted {
                let len = self.nodes[i].engine().get(&req.id).map_or(0, |r| r.history.len());
                // Mirrors change only when the owner answers; wait for that.
                if !owned {
                    self.acted.insert(key, len);
                }
            }
        }
        Ok(())
    }

    fn borrower_step(&mut self, i: usize, req: &RSRequest, now: Timestamp, actor: &Actor) -> Result<bool, NodeError> {
        let node = &self.nodes[i];
        let id = &req.id;
        let r = match req.kind() {
            StatusKind::Unfulfilled => node.reiterate(id, actor),
            StatusKind::Shipped => {
                let barcode = (req.flow == Flow::Returnable).then(|| format!("T-{id}"));
                node.receive(id, barcode, actor)
            }
            StatusKind::Received if req.flow == Flow::Returnable => node.loan(id, "staff", actor),
            StatusKind::OnLoan => {
                let loaned = req.history.iter().rev().find(|e| matches!(e.change, Change::Loaned { .. })).map(|e| e.at);
                if loaned.is_some_and(|at| at + Duration::days(self.scenario.loan_days) <= now) {
                    node.return_from_patron(id, actor)
                } else {
                    return Ok(false);
                }
            }
            StatusKind::InQuarantine if req.quarantine_until.is_some_and(|q| q <= now) => node.release_quarantine(id, actor),
            StatusKind::ReturnedByPatron => node.return_to_lender(id, actor),
            StatusKind::Pending if self.scenario.cancel_probability > 0.0 && self.rng.random_bool(self.scenario.cancel_probability) => {
                node.request_cancel(id, actor)
            }
            _ => return Ok(false),
        };
        Ok(self.tolerate(r)?.is_some())
    }

    fn lender_step(&mut self, i: usize, me: &LibraryId, req: &RSRequest, actor: &Actor) -> Result<bool, NodeError> {
        let current = req.current_lender.as_ref() == Some(me);
        let lender = Some(me.clone());
        let id = req.id.clone();
        let r = match req.kind() {
            StatusKind::Pending if current => {
                let accept = self.holds(i, &req.bib) && self.rng.random_bool(self.scenario.accept_probability);
                if accept {
                    self.nodes[i].accept(&id, lender, actor).map(|_| ())
                } else {
                    let reason = if self.holds(i, &req.bib) { UnfulfilReason::NotOnShelf } else { UnfulfilReason::NotHeld };
                    self.nodes[i].unfulfil(&id, lender, reason, actor).map(|_| ())
                }
            }
            StatusKind::Orphaned if &req.requester_library != me && self.holds(i, &req.bib) => {
                self.nodes[i].accept(&id, lender, actor).map(|_| ())
            }
            StatusKind::Accepted if current => {
                let title = self.titles.iter().find(|t| t.bib == req.bib);
                let pages = title.map_or(0, |t| t.pages);
                let opts = FulfilOptions { source_pages: (pages > 0).then_some(pages), ..FulfilOptions::default() };
                let r = self.nodes[i].fulfil(&id, lender, opts, actor);
                if let Ok(out) = &r {
                    if let Some(m) = &out.package {
                        self.packages.created += 1;
                        if m.dpi != 200 {
                            self.packages.wrong_dpi += 1;
                        }
                        if m.pages.len() as u32 != pages + 1 {
                            self.packages.wrong_page_count += 1;
                        }
                    }
                }
                r.map(|_| ())
            }
            StatusKind::CancelRequested if current => self.nodes[i].decide_cancel(&id, lender, true, actor).map(|_| ()),
            StatusKind::ReturnedToLender if req.supplied_by.as_ref() == Some(me) => {
                self.nodes[i].complete(&id, lender, actor).map(|_| ())
            }
            _ => return Ok(false),
        };
        Ok(self.tolerate(r)?.is_some())
    }

    /// Schedules every message not yet in flight, FIFO per channel.
    fn pump_outboxes(&mut self) {
        let now = self.clock.now();
        let mut fresh = Vec::new();
        for node in &self.nodes {
            fresh.extend(node.outbox_except(|id| self.scheduled.contains(id)));
        }
        for msg in fresh {
            self.scheduled.insert(msg.message_id.clone());
            self.messages.sent += 1;
            let channel = (msg.sender.clone(), msg.recipient.clone());
            let delay = Duration::minutes(self.rng.random_range(1..=self.scenario.max_delay_minutes));
            let earliest = self.channel_last.get(&channel).map_or(now, |t| *t + Duration::seconds(1));
            let at = (now + delay).max(earliest);
            self.channel_last.insert(channel, at);
            let dup = self.rng.random_bool(self.scenario.duplicate_rate);
            self.schedule(at, SimEvent::Deliver { msg: msg.clone(), duplicate: false });
            if dup {
                let later = at + Duration::minutes(self.rng.random_range(1..=self.scenario.max_delay_minutes));
                self.schedule(later, SimEvent::Deliver { msg, duplicate: true });
            }
        }
    }

    fn index_of(&self, id: &LibraryId) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    fn deliver(&mut self, msg: WireMessage, duplicate: bool) -> Result<(), NodeError> {
        let (Some(to), Some(from)) = (self.index_of(&msg.recipient), self.index_of(&msg.sender)) else {
            return Ok(());
        };
        let ack = self.nodes[to].handle_wire(&msg)?;
        if duplicate {
            self.messages.duplicates += 1;
        } else {
            self.messages.delivered += 1;
            if !ack.is_accepted() {
                self.messages.rejected += 1;
                *self.messages.rejected_by_code.entry(ack.code.clone().unwrap_or_default()).or_default() += 1;
            }
        }
        self.nodes[from].acknowledge(ack)
    }

    fn report(self, seed: u64, _requests: usize) -> Result<SimReport, NodeError> {
        let start = reference_epoch();
        let end = self.clock.now() + Duration::days(1);
        let period = Period { start, end };
        let mut statuses = BTreeMap::new();
        let mut reasons = BTreeMap::new();
        let (mut generated, mut terminal) = (0, 0);
        let mut per_node = Vec::new();
        let mut packages = self.packages.clone();
        let mut undelivered = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            let me = &self.ids[i];
            let owned: Vec<RSRequest> =
                node.engine().snapshot().into_iter().filter(|r| node.engine().is_owned(&r.id)).collect();
            let mut assignments: BTreeMap<LibraryId, u32> = BTreeMap::new();
            for r in &owned {
                generated += 1;
                terminal += usize::from(r.is_terminal());
                *statuses.entry(r.kind().name().to_string()).or_default() += 1;
                for e in &r.history {
                    match &e.change {
                        Change::Sent { lender, .. } => *assignments.entry(lender.clone()).or_default() += 1,
                        Change::Unfulfilled { reason } => *reasons.entry(reason.code()).or_default() += 1,
                        _ => {}
                    }
                }
            }
            let of_total = node.stats(me, FillRateMode::OfTotal, start, end);
            let of_decided = node.stats(me, FillRateMode::OfDecided, start, end);
            let state = node.state_copy();
            let settlements = policies()
                .into_iter()
                .map(|(name, policy)| {
                    let report = node.ledger_report_under(period, policy);
                    let total = report.invoices.iter().map(|i| i.amount).sum();
                    (name.to_string(), Settlement { policy, invoices: report.invoices, total })
                })
                .collect();
            let now = self.clock.now();
            packages.expired_remaining += state.packages.iter().filter(|p| p.is_expired(now)).count() as u64;
            packages.purged += state.packages.audit_log().len() as u64;
            undelivered += state.outbox.len() as u64;
            let ledger_json = serde_json::to_string(&state.ledger).expect("ledger serializes");
            per_node.push(NodeReport {
                id: me.clone(),
                fill_rate_of_total: of_total.fill_rate,
                fill_rate_of_decided: of_decided.fill_rate,
                avg_turnaround_days: of_total.avg_turnaround_days,
                stats: of_total.window,
                lent_units: state.ledger.units(Direction::Lent),
                borrowed_units: state.ledger.units(Direction::Borrowed),
                ledger_digest: hex::encode(Sha256::digest(ledger_json.as_bytes())),
                state_digest: node.digest(),
                settlements,
                assignments,
                alerts: state.alerts.len(),
                log_records: node.log_len(),
            });
        }
        let network_lent = per_node.iter().map(|n| n.lent_units).sum();
        let network_borrowed = per_node.iter().map(|n| n.borrowed_units).sum();
        let mut messages = self.messages.clone();
        messages.undelivered = undelivered;
        Ok(SimReport {
            seed,
            nodes: self.nodes.len(),
            scenario: self.scenario.clone(),
            generated,
            terminal,
            in_flight: generated - terminal,
            statuses,
            unfulfil_reasons: reasons,
            per_node,
            network_lent,
            network_borrowed,
            balanced: network_lent == network_borrowed,
            messages,
            packages,
            refusals: self.refusals.clone(),
            finished_at: self.clock.now(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_settles() {
        let report = run_simulation(7, 2, 20, &Scenario::default()).unwrap();
        assert_eq!(report.generated, 20);
        assert!(report.balanced);
        assert_eq!(report.messages.undelivered, 0);
    }

    #[test]
    fn needs_two_nodes() {
        assert!(matches!(run_simulation(1, 1, 5, &Scenario::default()), Err(NodeError::ConfigInvalid(_))));
    }
}
