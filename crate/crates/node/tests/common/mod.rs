#![allow(dead_code)]

use std::sync::Arc;

use interlend_core::bibliography::BibRef;
use interlend_core::clock::{reference_epoch, ManualClock};
use interlend_core::ids::{LibraryId, RequestId, UserId};
use interlend_core::request::{Actor, Flow};
use interlend_node::node::{NewRequest, SendOptions};
use interlend_node::sim::{network_configs, Scenario};
use interlend_node::Node;

pub struct Net {
    pub clock: Arc<ManualClock>,
    pub nodes: Vec<Node>,
}

impl Net {
    pub fn new(n: usize) -> Net {
        let clock = Arc::new(ManualClock::new(reference_epoch()));
        let nodes = network_configs(n, &Scenario::default())
            .into_iter()
            .map(|cfg| Node::open(cfg, clock.clone()).unwrap())
            .collect();
        Net { clock, nodes }
    }

    pub fn drain(&self) -> usize {
        interlend_node::sim::drain_outboxes(&self.nodes).unwrap()
    }

    /// Creates a request at node `from` and sends it to node `to`.
    pub fn borrow(&self, from: usize, to: usize, bib: BibRef) -> RequestId {
        let input = NewRequest { bib: Some(bib), ..NewRequest::default() };
        let req = self.nodes[from].create_request(input, &staff(from)).unwrap();
        let opts = SendOptions { partner: Some(lib(to)), ..SendOptions::default() };
        self.nodes[from].send(&req.id, opts, &staff(from)).unwrap();
        req.id
    }
}

pub fn lib(i: usize) -> LibraryId {
    LibraryId::new(format!("N{}", i + 1))
}

pub fn staff(i: usize) -> Actor {
    Actor::User(UserId::new(format!("staff@N{}", i + 1)))
}

pub fn article(n: u32) -> BibRef {
    BibRef::article(format!("Article {n}"), "Journal of Tests", 2001).with_issn("1234-5679").with_pages(10, 19)
}

pub fn book(n: u32) -> BibRef {
    BibRef::book(format!("Book {n}"), format!("978{:010}", 3_000_000 + n))
}

pub fn returnable(n: u32) -> NewRequest {
    NewRequest { bib: Some(book(n)), flow: Some(Flow::Returnable), ..NewRequest::default() }
}
