//! Walk one returnable loan through the request engine and print its
//! history, then try an operation the transition table does not allow.

use std::sync::Arc;

use chrono::Duration;
use interlend_core::bibliography::BibRef;
use interlend_core::clock::{reference_epoch, ManualClock};
use interlend_core::compliance::{DeliveryMethod, DeliveryReceipt};
use interlend_core::request::{transitions_from, Actor, Engine, EngineConfig, Flow, LibraryProfile, Role, RoleGrant, StatusKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clock = Arc::new(ManualClock::new(reference_epoch()));
    let engine = Engine::new(clock.clone(), EngineConfig::default());
    engine.register_library("LIEGE", LibraryProfile { quarantine_days: 3, ..LibraryProfile::default() });
    engine.register_library("NAMUR", LibraryProfile::default());
    engine.grant(RoleGrant::new("ana", "LIEGE", [Role::BorrowingOperator]));
    engine.grant(RoleGrant::new("bert", "NAMUR", [Role::LendingOperator]));
    let (ana, bert) = (Actor::user("ana"), Actor::user("bert"));

    let req = engine.create_request(
        BibRef::book("Resource Sharing Handbook", "9781234567897"),
        &"LIEGE".into(),
        None,
        Flow::Returnable,
        &ana,
    )?;
    let id = req.id;
    engine.send_to_partner(&id, &"NAMUR".into(), &ana)?;
    clock.advance(Duration::hours(5));
    engine.accept(&id, &"NAMUR".into(), &bert)?;
    let shipped = DeliveryReceipt { method: DeliveryMethod::Postal, at: engine.now(), package_id: None, url: None };
    engine.fulfil(&id, Some(shipped), &bert)?;
    clock.advance(Duration::days(2));
    engine.receive(&id, Some("TMP-0001".into()), &ana)?;
    engine.loan_to_patron(&id, "staff", &ana)?;
    clock.advance(Duration::days(14));
    engine.return_from_patron(&id, &ana)?;

    if let Err(e) = engine.release_quarantine(&id, &ana) {
        println!("too early: {e}");
    }
    clock.advance(Duration::days(3));
    engine.release_quarantine(&id, &ana)?;
    engine.return_to_lender(&id, &ana)?;
    engine.complete(&id, &bert)?;

    let done = engine.get(&id).expect("request exists");
    for ev in &done.history {
        println!("{}  {:?}", ev.at.format("%Y-%m-%d %H:%M"), ev.change.operation());
    }
    println!("final status: {}", done.status);

    println!("\nfrom {}:", StatusKind::Pending);
    for t in transitions_from(StatusKind::Pending) {
        println!("  {:?} -> {} ({})", t.operation, t.next_state, t.guard);
    }
    Ok(())
}
