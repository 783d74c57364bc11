mod common;

use chrono::Duration;
use proptest::prelude::*;
use serde_json::json;

use common::{article, lib, staff, Net};
use interlend_core::clock::Clock;
use interlend_core::request::{Change, RequestStatus, StatusKind, UnfulfilReason};
use interlend_node::wire::{WireKind, WireMessage};

#[test]
fn duplicate_request_creates_one_pending_entry() {
    let net = Net::new(2);
    let id = net.borrow(0, 1, article(1));
    let msg = net.nodes[0].outbox().remove(0);
    assert_eq!(msg.kind, WireKind::Request);

    let first = net.nodes[1].handle_wire(&msg).unwrap();
    let digest = net.nodes[1].digest();
    let second = net.nodes[1].handle_wire(&msg).unwrap();
    assert_eq!(first, second);
    assert!(first.is_accepted());
    assert_eq!(net.nodes[1].digest(), digest);

    let rows = net.nodes[1].panel(&lib(1), interlend_core::request::Panel::LendingPending);
    assert_eq!(rows.iter().filter(|r| r.id == id).count(), 1);
}

#[test]
fn not_held_reaches_the_borrower_as_reason_two() {
    let net = Net::new(2);
    let id = net.borrow(0, 1, article(2));
    net.drain();
    let out = net.nodes[1].unfulfil(&id, None, UnfulfilReason::NotHeld, &staff(1)).unwrap();
    assert!(matches!(out, interlend_node::node::Outcome::Forwarded { .. }));

    let msg = net.nodes[1].outbox().into_iter().find(|m| m.kind == WireKind::SupplyingStatus).unwrap();
    assert_eq!(msg.payload["action"], "unfulfil");
    assert_eq!(msg.payload["reason"], "NOT_HELD");
    net.drain();

    let req = net.nodes[0].request(&id).unwrap();
    assert_eq!(req.status, RequestStatus::Unfulfilled(UnfulfilReason::NotHeld));
    assert_eq!(UnfulfilReason::NotHeld.code(), 2);
    // The lender's mirror follows once the owner replicates.
    assert_eq!(net.nodes[1].request(&id).unwrap().kind(), StatusKind::Unfulfilled);
}

#[test]
fn garbled_payload_is_a_schema_violation() {
    let net = Net::new(2);
    let id = net.borrow(0, 1, article(3));
    let mut msg = net.nodes[0].outbox().remove(0);
    msg.payload = json!({ "events": "not a list" });
    let ack = net.nodes[1].handle_wire(&msg).unwrap();
    assert_eq!(ack.code.as_deref(), Some("SchemaViolation"));
    assert!(net.nodes[1].engine().get(&id).is_none());
}

#[test]
fn status_for_an_unknown_request_is_unknown_correlation() {
    let net = Net::new(2);
    let msg = WireMessage {
        message_id: "N2-M99999999".into(),
        correlation: "NOPE-1".into(),
        kind: WireKind::SupplyingStatus,
        sender: lib(1),
        recipient: lib(0),
        payload: json!({ "lender": "N2", "action": "accept" }),
        sent_at: net.clock.now(),
    };
    let ack = net.nodes[0].handle_wire(&msg).unwrap();
    assert_eq!(ack.code.as_deref(), Some("UnknownCorrelation"));
}

#[test]
fn a_lender_cannot_speak_for_another() {
    let net = Net::new(3);
    let id = net.borrow(0, 1, article(4));
    net.drain();
    let msg = WireMessage {
        message_id: "N3-M00000001".into(),
        correlation: id.clone(),
        kind: WireKind::SupplyingStatus,
        sender: lib(2),
        recipient: lib(0),
        payload: json!({ "lender": "N2", "action": "accept" }),
        sent_at: net.clock.now(),
    };
    assert_eq!(net.nodes[0].handle_wire(&msg).unwrap().code.as_deref(), Some("SchemaViolation"));
    let forged = WireMessage { payload: json!({ "lender": "N3", "action": "accept" }), message_id: "N3-M00000002".into(), ..msg };
    assert_eq!(net.nodes[0].handle_wire(&forged).unwrap().code.as_deref(), Some("Forbidden"));
    assert_eq!(net.nodes[0].request(&id).unwrap().kind(), StatusKind::Pending);
}

#[test]
fn message_for_another_node_is_refused() {
    let net = Net::new(3);
    net.borrow(0, 1, article(5));
    let msg = net.nodes[0].outbox().remove(0);
    assert_eq!(net.nodes[2].handle_wire(&msg).unwrap().code.as_deref(), Some("SchemaViolation"));
}

#[test]
fn full_article_loan_over_the_wire() {
    let net = Net::new(2);
    let id = net.borrow(0, 1, article(6));
    net.drain();
    net.nodes[1].accept(&id, None, &staff(1)).unwrap();
    net.drain();
    let out = net.nodes[1].fulfil(&id, None, Default::default(), &staff(1)).unwrap();
    let manifest = out.package.expect("electronic delivery builds a package");
    assert_eq!(manifest.dpi, 200);
    assert_eq!(manifest.pages.len(), 11);
    net.drain();
    net.nodes[0].receive(&id, None, &staff(0)).unwrap();
    net.drain();
    let req = net.nodes[0].request(&id).unwrap();
    assert_eq!(req.kind(), StatusKind::Complete);
    assert_eq!(net.nodes[1].request(&id).unwrap().history.len(), req.history.len());
    assert!(req.history.iter().any(|e| matches!(e.change, Change::Shipped { .. })));
    let borrowed = net.nodes[0].ledger_report_under(period(&net), Default::default()).borrowed_units;
    let lent = net.nodes[1].ledger_report_under(period(&net), Default::default()).lent_units;
    assert_eq!((borrowed, lent), (1, 1));
}

fn period(net: &Net) -> interlend_core::ledger::Period {
    let now = net.clock.now();
    interlend_core::ledger::Period { start: now - Duration::days(1), end: now + Duration::days(1) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Delivering every message twice leaves both nodes as delivering once.
    #[test]
    fn delivering_twice_equals_once(actions in prop::collection::vec(0u8..4, 1..6), dup_mask in any::<u64>()) {
        let once = Net::new(2);
        let twice = Net::new(2);
        for (k, action) in actions.iter().enumerate() {
            for net in [&once, &twice] {
                let id = net.borrow(0, 1, article(100 + k as u32));
                deliver(net, false, 0);
                match action {
                    0 => {}
                    1 => { let _ = net.nodes[1].accept(&id, None, &staff(1)); }
                    2 => { let _ = net.nodes[1].unfulfil(&id, None, UnfulfilReason::NotOnShelf, &staff(1)); }
                    _ => { let _ = net.nodes[0].request_cancel(&id, &staff(0)); }
                }
            }
            deliver(&once, false, 0);
            deliver(&twice, true, dup_mask.rotate_left(k as u32));
        }
        prop_assert_eq!(once.nodes[0].digest(), twice.nodes[0].digest());
        prop_assert_eq!(once.nodes[1].digest(), twice.nodes[1].digest());
    }
}

fn deliver(net: &Net, duplicate: bool, mask: u64) {
    let mut bit = 0;
    loop {
        let pending: Vec<WireMessage> = net.nodes.iter().flat_map(|n| n.outbox()).collect();
        if pending.is_empty() {
            return;
        }
        for msg in pending {
            let to = net.nodes.iter().find(|n| n.id() == &msg.recipient).unwrap();
            let from = net.nodes.iter().find(|n| n.id() == &msg.sender).unwrap();
            let ack = to.handle_wire(&msg).unwrap();
            if duplicate && mask >> (bit % 64) & 1 == 1 {
                assert_eq!(to.handle_wire(&msg).unwrap(), ack);
            }
            bit += 1;
            from.acknowledge(ack).unwrap();
        }
    }
}
