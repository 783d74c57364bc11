use std::collections::BTreeSet;
use std::sync::{Arc, Barrier};
use std::thread;

use chrono::Duration;
use interlend_core::bibliography::{BibRef, FixtureSource, NormalizedKey, UnavailableSource};
use interlend_core::clock::{reference_epoch, Clock, ManualClock};
use interlend_core::compliance::{DeliveryMethod, DeliveryReceipt, SupplyDecision};
use interlend_core::ids::{LibraryId, PatronId, RequestId};
use interlend_core::request::{
    permits, replay_history, Actor, Change, Engine, EngineConfig, EngineError, Flow, LibraryProfile, Operation,
    RSRequest, Role, RoleGrant, StatusKind, UnfulfilReason,
};
use interlend_core::routing::{HoldingsIndex, RotaEntry, RotaPlan};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LIBS: [&str; 4] = ["L1", "L2", "L3", "L4"];

fn engine(clock: Arc<ManualClock>) -> Engine {
    let engine = Engine::new(clock, EngineConfig::default());
    for lib in LIBS {
        let profile = LibraryProfile {
            patron_requests_enabled: true,
            weekly_patron_quota: Some(3),
            quarantine_days: if lib == "L1" { 5 } else { 0 },
            loan_caps: [("student".to_string(), 2)].into(),
            ..LibraryProfile::default()
        };
        engine.register_library(lib, profile);
        engine.grant(RoleGrant::new(format!("b-{lib}"), lib, [Role::BorrowingOperator]));
        engine.grant(RoleGrant::new(format!("l-{lib}"), lib, [Role::LendingOperator]));
        engine.grant(RoleGrant::new(format!("p-{lib}"), lib, [Role::Patron]));
    }
    engine.register_library("B1", LibraryProfile::basic());
    engine
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

fn random_actor(rng: &mut ChaCha8Rng, req: &RSRequest) -> Actor {
    let lib = match rng.random_range(0..4) {
        0 => req.requester_library.to_string(),
        1 => req.current_lender.as_ref().map_or("L2".to_string(), ToString::to_string),
        _ => pick(rng, &LIBS).to_string(),
    };
    match rng.random_range(0..10) {
        0 => Actor::System,
        1..=4 => Actor::user(format!("b-{lib}")),
        _ => Actor::user(format!("l-{lib}")),
    }
}

fn receipt(rng: &mut ChaCha8Rng, at: interlend_core::clock::Timestamp) -> Option<DeliveryReceipt> {
    (rng.random_range(0..5) > 0).then(|| DeliveryReceipt {
        method: *pick(rng, &DeliveryMethod::ALL),
        at,
        package_id: Some("P".into()),
        url: None,
    })
}

fn random_rota(rng: &mut ChaCha8Rng) -> RotaPlan {
    let mut entries: Vec<RotaEntry> = Vec::new();
    for _ in 0..rng.random_range(1..4) {
        let p = RotaEntry::Partner(LibraryId::from(*pick(rng, &["L2", "L3", "L4", "B1"])));
        if entries.last() != Some(&p) {
            entries.push(p);
        }
    }
    if rng.random_bool(0.3) {
        entries.push(RotaEntry::AllLibraries);
    }
    RotaPlan::new(entries).unwrap()
}

fn check_invariants(req: &RSRequest) {
    assert!(StatusKind::ALL.contains(&req.kind()));
    assert!(matches!(req.history[0].change, Change::Created { .. }));
    assert!(req.history.windows(2).all(|w| w[0].at <= w[1].at), "{} history out of order", req.id);
    assert_eq!(req.current_lender.is_some(), req.kind().has_lender(), "{} lender vs {}", req.id, req.status);
    let received = req.history.iter().any(|e| matches!(e.change, Change::Received { .. }));
    assert_eq!(req.temp_barcode.is_some(), req.flow == Flow::Returnable && received, "{}", req.id);
    assert_eq!(&replay_history(&req.history).unwrap(), req, "replay of {}", req.id);
}

/// One random operation on one random request; returns whether it
/// committed.
fn step(rng: &mut ChaCha8Rng, e: &Engine, clock: &ManualClock, id: &RequestId, holdings: &HoldingsIndex, oa: &FixtureSource) -> bool {
    let req = e.get(id).unwrap();
    let a = random_actor(rng, &req);
    let lib = LibraryId::from(*pick(rng, &["L1", "L2", "L3", "L4", "B1"]));
    let result = match rng.random_range(0..22) {
        0 => e.precheck(id, holdings, oa, &a).map(drop),
        1 => e.precheck(id, holdings, &UnavailableSource, &a).map(drop),
        2 => e.assign_rota(id, random_rota(rng), &a),
        3 => e.send_to_partner(id, &lib, &a),
        4 => e.send_to_all(id, &a),
        5 => e.send_via_rota(id, &a),
        6 => e.accept(id, &lib, &Actor::user(format!("l-{lib}"))),
        7 => e.unfulfil(id, *pick(rng, &UnfulfilReason::ALL), &a),
        8 => e.reiterate(id, &a),
        9 => e.archive(id, &a),
        10 => e.request_cancel(id, &a),
        11 => e.decide_cancel(id, rng.random_bool(0.5), &a),
        12 => {
            let decision = if rng.random_bool(0.7) {
                let methods: BTreeSet<_> = DeliveryMethod::ALL.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
                SupplyDecision::Allow(methods)
            } else {
                SupplyDecision::Deny { reason: UnfulfilReason::LicenceOrCopyright, detail: "licence".into() }
            };
            e.record_supply_decision(id, &decision, &a)
        }
        13 => e.fulfil(id, receipt(rng, clock.now()), &a),
        14 => e.receive(id, rng.random_bool(0.7).then(|| format!("T-{}", rng.random_range(0..999))), &a),
        15 => e.loan_to_patron(id, pick(rng, &["student", "staff"]), &a),
        16 => e.return_from_patron(id, &a),
        17 => e.release_quarantine(id, &a),
        18 => e.return_to_lender(id, &a),
        19 => e.complete(id, &a),
        20 => e.annotate(id, "note", &a),
        _ => e.tag(id, "urgent", &a),
    };
    let after = e.get(id).unwrap();
    match &result {
        Ok(()) => {
            // Every status change followed declared edges.
            let mut status = req.kind();
            for ev in &after.history[req.history.len()..] {
                let next = replay_history(&after.history[..=after.history.iter().position(|x| x == ev).unwrap()])
                    .unwrap()
                    .kind();
                assert!(permits(status, ev.change.operation(), next), "{status} --{:?}--> {next}", ev.change.operation());
                status = next;
            }
        }
        Err(_) => assert_eq!(after, req, "failed operation mutated {id}"),
    }
    if req.is_terminal() {
        assert_eq!(after, req, "terminal request {id} changed");
    }
    result.is_ok()
}

#[test]
fn random_operation_sequences_stay_inside_the_table() {
    let clock = Arc::new(ManualClock::new(reference_epoch()));
    let e = engine(clock.clone());
    let mut holdings = HoldingsIndex::new();
    holdings.insert(NormalizedKey::isbn("9780000000002"), "L1", i32::MIN, i32::MAX).unwrap();
    let oa = FixtureSource::from_json(
        r#"[{"identifier":"doi:10.1/oa","kind":"article","title":"Open","container_title":"J","oa_url":"https://oa.example/1"}]"#,
    )
    .unwrap();
    let bibs = [
        BibRef::book("Held", "9780000000002"),
        BibRef::book("Elsewhere", "9781234567897"),
        BibRef::article("Open", "J", 2020).with_doi("10.1/oa"),
        BibRef::article("Closed", "J", 2020).with_doi("10.1/closed"),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(18626);
    let mut ids: Vec<RequestId> = Vec::new();
    let mut steps = 0u64;
    let mut committed = 0u64;
    let mut statuses_seen = BTreeSet::new();
    while steps < 100_000 {
        if ids.len() < 40 || rng.random_range(0..50) == 0 {
            let lib = LibraryId::from(*pick(&mut rng, &LIBS));
            let flow = if rng.random_bool(0.5) { Flow::Returnable } else { Flow::NonReturnable };
            let bib = pick(&mut rng, &bibs).clone();
            if let Ok(r) = e.create_request(bib, &lib, None, flow, &Actor::user(format!("b-{lib}"))) {
                ids.push(r.id);
            }
        }
        let id = pick(&mut rng, &ids).clone();
        if step(&mut rng, &e, &clock, &id, &holdings, &oa) {
            committed += 1;
        }
        steps += 1;
        if rng.random_range(0..20) == 0 {
            clock.advance(Duration::hours(rng.random_range(1..48)));
        }
        if rng.random_range(0..200) == 0 {
            e.expire_stale(clock.now());
        }
        let now_kind = e.get(&id).unwrap().kind();
        statuses_seen.insert(now_kind);
        // Retire finished requests so live ones keep getting exercised.
        if now_kind.is_terminal() && rng.random_range(0..4) == 0 {
            ids.retain(|i| i != &id);
        }
    }
    for req in e.snapshot() {
        check_invariants(&req);
    }
    assert!(committed > 5_000, "only {committed} of {steps} steps committed");
    assert_eq!(statuses_seen.len(), StatusKind::ALL.len(), "{statuses_seen:?}");
}

#[test]
fn every_table_edge_is_exercised_from_every_state() {
    // Any operation attempted from any state either follows a table edge
    // or fails without touching the request.
    let clock = Arc::new(ManualClock::new(reference_epoch()));
    let e = engine(clock.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let holdings = HoldingsIndex::new();
    let oa = FixtureSource::from_json("[]").unwrap();
    for _ in 0..300 {
        let r = e.create_request(BibRef::book("X", "9781234567897"), &"L1".into(), None, Flow::Returnable, &Actor::user("b-L1")).unwrap();
        for _ in 0..6 {
            step(&mut rng, &e, &clock, &r.id, &holdings, &oa);
        }
        check_invariants(&e.get(&r.id).unwrap());
    }
}

#[test]
fn orphan_claim_has_one_winner() {
    let clock = Arc::new(ManualClock::new(reference_epoch()));
    let e = Arc::new(Engine::new(clock, EngineConfig::default()));
    e.register_library("REQ", LibraryProfile::default());
    e.grant(RoleGrant::new("b", "REQ", [Role::BorrowingOperator]));
    let lenders: Vec<String> = (0..32).map(|i| format!("LEND{i:02}")).collect();
    for l in &lenders {
        e.register_library(l.as_str(), LibraryProfile::default());
        e.grant(RoleGrant::new(format!("op-{l}"), l.as_str(), [Role::LendingOperator]));
    }
    for trial in 0..200 {
        let r = e.create_request(BibRef::book("X", "9781234567897"), &"REQ".into(), None, Flow::Returnable, &Actor::user("b")).unwrap();
        e.send_to_all(&r.id, &Actor::user("b")).unwrap();
        let barrier = Arc::new(Barrier::new(lenders.len()));
        let handles: Vec<_> = lenders
            .iter()
            .map(|l| {
                let (e, barrier, id, l) = (e.clone(), barrier.clone(), r.id.clone(), l.clone());
                thread::spawn(move || {
                    barrier.wait();
                    e.accept(&id, &LibraryId::from(l.as_str()), &Actor::user(format!("op-{l}")))
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        let wins = results.iter().filter(|r| r.is_ok()).count();
        let claimed = results.iter().filter(|r| matches!(r, Err(EngineError::AlreadyClaimed(_)))).count();
        assert_eq!((wins, claimed), (1, 31), "trial {trial}: {results:?}");
        let after = e.get(&r.id).unwrap();
        assert_eq!(after.kind(), StatusKind::Accepted);
        assert_eq!(after.history.iter().filter(|ev| ev.change.operation() == Operation::Accept).count(), 1);
    }
}

#[test]
fn expiry_matches_linear_filter() {
    let clock = Arc::new(ManualClock::new(reference_epoch()));
    let e = engine(clock.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let b = Actor::user("b-L1");
    for _ in 0..50 {
        let r = e.create_request(BibRef::book("X", "9781234567897"), &"L1".into(), None, Flow::Returnable, &b).unwrap();
        match rng.random_range(0..3) {
            0 => e.send_to_partner(&r.id, &"L2".into(), &b).unwrap(),
            1 => e.send_to_all(&r.id, &b).unwrap(),
            _ => {}
        }
        clock.advance(Duration::hours(rng.random_range(0..30)));
    }
    let now = reference_epoch() + Duration::days(rng.random_range(14..30));
    let before = e.snapshot();
    let expected: BTreeSet<RequestId> = before
        .iter()
        .filter(|r| matches!(r.kind(), StatusKind::Pending | StatusKind::Orphaned))
        .filter(|r| r.validity_until.unwrap() < now)
        .map(|r| r.id.clone())
        .collect();
    let got: BTreeSet<RequestId> = e.expire_stale(now).into_iter().collect();
    assert_eq!(got, expected);
    for r in e.snapshot() {
        assert_eq!(r.kind() == StatusKind::Expired, expected.contains(&r.id));
    }
}

#[test]
fn quota_matches_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let clock = Arc::new(ManualClock::new(reference_epoch()));
        let e = engine(clock.clone());
        let patron = PatronId::from("p");
        let mut created = Vec::new();
        for _ in 0..30 {
            clock.advance(Duration::hours(rng.random_range(1..72)));
            let res = e.create_request(BibRef::book("X", "9781234567897"), &"L2".into(), Some(patron.clone()), Flow::Returnable, &Actor::user("p-L2"));
            let now = clock.now();
            let in_window = |t: &interlend_core::clock::Timestamp| *t > now - Duration::days(7) && *t <= now;
            let used_before = created.iter().filter(|t| in_window(t)).count();
            match res {
                Ok(_) => {
                    assert!(used_before < 3);
                    created.push(now);
                }
                Err(err) => {
                    assert_eq!(err, EngineError::QuotaExceeded);
                    assert!(used_before >= 3);
                }
            }
            let used = created.iter().filter(|t| in_window(t)).count() as u32;
            assert_eq!(e.check_patron_quota(&patron, &"L2".into(), now), 3u32.saturating_sub(used));
        }
    }
}

#[test]
fn quarantine_never_releases_early() {
    let clock = Arc::new(ManualClock::new(reference_epoch()));
    let e = engine(clock.clone());
    let b = Actor::user("b-L1");
    let lender = Actor::user("l-L2");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let r = e.create_request(BibRef::book("X", "9781234567897"), &"L1".into(), None, Flow::Returnable, &b).unwrap();
        e.send_to_partner(&r.id, &"L2".into(), &b).unwrap();
        e.accept(&r.id, &"L2".into(), &lender).unwrap();
        let rc = DeliveryReceipt { method: DeliveryMethod::Postal, at: clock.now(), package_id: None, url: None };
        e.fulfil(&r.id, Some(rc), &lender).unwrap();
        e.receive(&r.id, Some("T-1".into()), &b).unwrap();
        e.loan_to_patron(&r.id, "staff", &b).unwrap();
        e.return_from_patron(&r.id, &b).unwrap();
        let returned = clock.now();
        for _ in 0..5 {
            clock.advance(Duration::hours(rng.random_range(1..40)));
            let res = e.release_quarantine(&r.id, &b);
            assert_eq!(res.is_ok(), clock.now() >= returned + Duration::days(5));
            if res.is_ok() {
                break;
            }
        }
    }
}
