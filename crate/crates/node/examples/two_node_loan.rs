//! Two nodes lend an article to each other in-process: the wire messages are
//! handed over directly instead of over HTTP.

use std::sync::Arc;

use interlend_core::bibliography::BibRef;
use interlend_core::clock::{reference_epoch, ManualClock};
use interlend_core::ids::UserId;
use interlend_core::request::{Actor, UnfulfilReason};
use interlend_node::node::{NewRequest, SendOptions};
use interlend_node::sim::{drain_outboxes, network_configs, Scenario};
use interlend_node::{Node, NodeError};

fn main() -> Result<(), NodeError> {
    let clock = Arc::new(ManualClock::new(reference_epoch()));
    let nodes: Vec<Node> = network_configs(2, &Scenario::default())
        .into_iter()
        .map(|cfg| Node::open(cfg, clock.clone()))
        .collect::<Result<_, _>>()?;
    let (borrower, lender) = (&nodes[0], &nodes[1]);
    let (b_staff, l_staff) = (Actor::User(UserId::new("staff@N1")), Actor::User(UserId::new("staff@N2")));

    let bib = BibRef::article("Shared Print Retention", "Interlending Quarterly", 2019)
        .with_issn("1234-5679")
        .with_pages(41, 48);
    let req = borrower.create_request(NewRequest { bib: Some(bib), ..NewRequest::default() }, &b_staff)?;
    let to_lender = SendOptions { partner: Some(lender.id().clone()), ..SendOptions::default() };
    borrower.send(&req.id, to_lender, &b_staff)?;
    println!("{} sent, {} message(s) delivered", req.id, drain_outboxes(&nodes)?);

    lender.accept(&req.id, None, &l_staff)?;
    drain_outboxes(&nodes)?;
    let shipped = lender.fulfil(&req.id, None, Default::default(), &l_staff)?;
    if let Some(m) = &shipped.package {
        println!("package {}: {} pages at {} dpi", m.package_id, m.pages.len(), m.dpi);
    }
    drain_outboxes(&nodes)?;
    borrower.receive(&req.id, None, &b_staff)?;
    drain_outboxes(&nodes)?;
    for node in &nodes {
        println!("{} sees {}", node.id(), node.request(&req.id)?.status);
    }

    // A second request the lender cannot fill.
    let other = borrower.create_request(
        NewRequest { bib: Some(BibRef::book("Rare Atlas", "9781234567897")), ..NewRequest::default() },
        &b_staff,
    )?;
    borrower.send(&other.id, SendOptions { partner: Some(lender.id().clone()), ..SendOptions::default() }, &b_staff)?;
    drain_outboxes(&nodes)?;
    lender.unfulfil(&other.id, None, UnfulfilReason::NotHeld, &l_staff)?;
    drain_outboxes(&nodes)?;
    println!("{} at the borrower: {}", other.id, borrower.request(&other.id)?.status);
    println!("lending balance at {}: {:?}", lender.id(), lender.exchange_balance());
    Ok(())
}
