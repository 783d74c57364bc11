//! A node with an on-disk event log survives a restart, and a damaged log
//! is refused instead of half-loaded.

use std::sync::Arc;

use interlend_core::clock::{reference_epoch, ManualClock};
use interlend_core::ids::UserId;
use interlend_core::bibliography::BibRef;
use interlend_core::request::{Actor, Flow};
use interlend_node::log::prefix;
use interlend_node::node::NewRequest;
use interlend_node::sim::{network_configs, Scenario};
use interlend_node::{Node, NodeError};

fn main() -> Result<(), NodeError> {
    let dir = std::env::temp_dir().join(format!("interlend-recovery-{}", std::process::id()));
    let mut cfg = network_configs(2, &Scenario::default()).remove(0);
    cfg.data_dir = Some(dir.clone());
    let clock = Arc::new(ManualClock::new(reference_epoch()));
    let staff = Actor::User(UserId::new("staff@N1"));

    let node = Node::open(cfg.clone(), clock.clone())?;
    for n in 0..5 {
        let input = NewRequest {
            bib: Some(BibRef::book(format!("Volume {n}"), "9781234567897")),
            flow: Some(Flow::Returnable),
            ..NewRequest::default()
        };
        let req = node.create_request(input, &staff)?;
        node.annotate(&req.id, "waiting for a lender", &staff)?;
    }
    let (records, digest) = (node.log_len(), node.digest());
    println!("before the crash: {records} records, digest {digest}");
    drop(node);
    let bytes = std::fs::read(cfg.log_path().expect("file-backed"))?;

    let reopened = Node::open(cfg.clone(), clock.clone())?;
    println!("after reopening:  {} records, digest {}", reopened.log_len(), reopened.digest());

    let halfway = Node::recover(cfg.clone(), clock.clone(), prefix(&bytes, (records / 2) as usize))?;
    println!("first half only: {} requests", halfway.engine().len());

    let torn = &bytes[..bytes.len() - 5];
    match Node::recover(cfg, clock, torn) {
        Err(e) => println!("torn final record: [{}] {e}", e.code()),
        Ok(_) => println!("torn log was accepted"),
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
