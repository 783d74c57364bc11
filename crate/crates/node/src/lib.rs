//! A resource-sharing node: the request engine behind an event log, an
//! HTTP API for staff, and a JSON wire protocol between nodes.

pub mod config;
pub mod error;
pub mod http;
pub mod log;
pub mod node;
pub mod sim;
pub mod wire;

pub use config::{NodeConfig, OperatorSeed, PeerEntry};
pub use error::NodeError;
pub use node::{Node, NodeRecord, NodeSnapshot, NodeState};
