//! Messages from other nodes, and their answers to ours.

use interlend_core::ids::{LibraryId, RequestId};
use interlend_core::request::{Actor, Change};

use super::{lock, Cause, Node, NodeRecord};
use crate::error::NodeError;
use crate::wire::{HistoryPayload, SupplierAction, SupplyingPayload, WireAck, WireKind, WireMessage};

impl Node {
    /// Handles one inbound message. Refusals come back as rejected acks; a
    /// message id seen before gets the answer it got the first time.
    pub fn handle_wire(&self, msg: &WireMessage) -> Result<WireAck, NodeError> {
        let mut log = lock(&self.log);
        if let Some(ack) = self.state().wire_seen.get(&msg.message_id) {
            return Ok(ack.clone());
        }
        let mut records = Vec::new();
        let outcome = self.process(msg, &mut records);
        let ack = match &outcome {
            Ok(()) => WireAck::accepted(&msg.message_id),
            Err(e) => WireAck::rejected(&msg.message_id, e.code(), e.to_string()),
        };
        if let Err(e) = &outcome {
            tracing::debug!(message = %msg.message_id, code = e.code(), "refused inbound message");
        }
        records.push(NodeRecord::WireHandled { ack: ack.clone() });
        let cause = if msg.kind == WireKind::SupplyingStatus { Cause::Supplier } else { Cause::Local };
        self.commit_locked(&mut log, records, cause)?;
        Ok(ack)
    }

    fn process(&self, msg: &WireMessage, records: &mut Vec<NodeRecord>) -> Result<(), NodeError> {
        if msg.recipient != self.config.id {
            return Err(NodeError::SchemaViolation(format!("addressed to {}, this is {}", msg.recipient, self.config.id)));
        }
        let sender_known = self.state().peers.get(&msg.sender).is_some_and(|p| p.url.is_some());
        if !sender_known {
            return Err(NodeError::Forbidden(format!("{} is not a known peer node", msg.sender)));
        }
        match msg.kind {
            WireKind::SupplyingStatus => {
                let payload: SupplyingPayload = serde_json::from_value(msg.payload.clone())
                    .map_err(|e| NodeError::SchemaViolation(format!("SUPPLYING_STATUS: {e}")))?;
                if payload.lender != msg.sender {
                    return Err(NodeError::SchemaViolation(format!("{} cannot act for {}", msg.sender, payload.lender)));
                }
                if !self.engine.is_owned(&msg.correlation) {
                    return Err(NodeError::UnknownCorrelation(msg.correlation.clone()));
                }
                let lender = payload.lender.clone();
                self.apply_supplier_action(&msg.correlation, &lender, &payload.action, &Actor::Peer(lender.clone()))
            }
            kind => {
                let payload: HistoryPayload = serde_json::from_value(msg.payload.clone())
                    .map_err(|e| NodeError::SchemaViolation(format!("{kind:?}: {e}")))?;
                self.check_history(msg, &payload)?;
                if kind != WireKind::Request && self.engine.get(&msg.correlation).is_none() {
                    return Err(NodeError::UnknownCorrelation(msg.correlation.clone()));
                }
                if self.engine.is_owned(&msg.correlation) {
                    return Err(NodeError::SchemaViolation(format!("{} is owned here", msg.correlation)));
                }
                for (index, event) in payload.events.into_iter().enumerate() {
                    if self.engine.ingest(&msg.correlation, index, event.clone(), false)? {
                        records.push(NodeRecord::RequestEvent { request: msg.correlation.clone(), index, owned: false, event });
                    }
                }
                Ok(())
            }
        }
    }

    fn check_history(&self, msg: &WireMessage, payload: &HistoryPayload) -> Result<(), NodeError> {
        match payload.events.first().map(|e| &e.change) {
            Some(Change::Created { id, requester_library, .. }) => {
                if id != &msg.correlation {
                    return Err(NodeError::SchemaViolation(format!("history is for {id}, not {}", msg.correlation)));
                }
                if requester_library != &msg.sender {
                    return Err(NodeError::SchemaViolation(format!("{} does not own {id}", msg.sender)));
                }
                Ok(())
            }
            _ => Err(NodeError::SchemaViolation("history must start with the creation event".into())),
        }
    }

    /// Applies a lender's action to a request this node owns.
    pub(super) fn apply_supplier_action(
        &self,
        id: &RequestId,
        lender: &LibraryId,
        action: &SupplierAction,
        actor: &Actor,
    ) -> Result<(), NodeError> {
        let e = &self.engine;
        match action {
            SupplierAction::Accept => e.accept(id, lender, actor)?,
            SupplierAction::Unfulfil { reason } => e.unfulfil(id, *reason, actor)?,
            SupplierAction::CancelDecision { approve } => e.decide_cancel(id, *approve, actor)?,
            SupplierAction::SupplyCheck { decision } => e.record_supply_decision(id, decision, actor)?,
            SupplierAction::Ship { supply, receipt } => {
                if let Some(decision) = supply {
                    e.record_supply_decision(id, decision, actor)?;
                    if !decision.is_allowed() {
                        return Ok(());
                    }
                }
                e.fulfil(id, Some(receipt.clone()), actor)?
            }
            SupplierAction::CheckIn => {
                let supplier = e.get(id).and_then(|r| r.supplied_by);
                if supplier.as_ref() != Some(lender) {
                    return Err(NodeError::Forbidden(format!("{lender} did not supply {id}")));
                }
                e.complete(id, actor)?
            }
        }
        Ok(())
    }

    /// Records the recipient's answer to one of our messages.
    pub fn acknowledge(&self, ack: WireAck) -> Result<(), NodeError> {
        if !self.state().outbox.contains_key(&ack.message_id) {
            return Ok(());
        }
        self.commit(vec![NodeRecord::Delivered { ack }], Cause::Local)
    }
}
