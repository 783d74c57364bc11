//! JSON envelope exchanged between nodes.
//!
//! The borrowing node owns each request. It sends the request's history to
//! lenders (`REQUEST` on first contact, `REQUESTING_ACTION` after its own
//! changes, `REQUEST_CONFIRMATION` after applying a lender's action).
//! Lenders act through `SUPPLYING_STATUS`, which the owner applies to its
//! copy before replicating the outcome.

use serde::{Deserialize, Serialize};

use interlend_core::clock::Timestamp;
use interlend_core::compliance::{DeliveryReceipt, SupplyDecision};
use interlend_core::ids::{LibraryId, RequestId};
use interlend_core::request::{Event, UnfulfilReason};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WireKind {
    Request,
    RequestConfirmation,
    SupplyingStatus,
    RequestingAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub message_id: String,
    /// The request the message is about.
    pub correlation: RequestId,
    pub kind: WireKind,
    pub sender: LibraryId,
    pub recipient: LibraryId,
    /// Kind-specific body; checked against the kind on receipt.
    pub payload: serde_json::Value,
    pub sent_at: Timestamp,
}

/// Body of the three owner-to-lender kinds: the request's full history,
/// so a recipient can catch up from any earlier state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPayload {
    pub events: Vec<Event>,
}

/// What a lender did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SupplierAction {
    Accept,
    Unfulfil { reason: UnfulfilReason },
    CancelDecision { approve: bool },
    SupplyCheck { decision: SupplyDecision },
    /// Ships, first recording the supply check when one was made for it.
    Ship {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        supply: Option<SupplyDecision>,
        receipt: DeliveryReceipt,
    },
    /// The lender checks a returned item in.
    CheckIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyingPayload {
    pub lender: LibraryId,
    #[serde(flatten)]
    pub action: SupplierAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckStatus {
    Accepted,
    Rejected,
}

/// The recipient's answer. A duplicate delivery gets the stored answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireAck {
    pub message_id: String,
    pub status: AckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl WireAck {
    pub fn accepted(message_id: &str) -> Self {
        WireAck { message_id: message_id.to_string(), status: AckStatus::Accepted, code: None, detail: None }
    }

    pub fn rejected(message_id: &str, code: &str, detail: impl Into<String>) -> Self {
        WireAck {
            message_id: message_id.to_string(),
            status: AckStatus::Rejected,
            code: Some(code.to_string()),
            detail: Some(detail.into()),
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.status == AckStatus::Accepted
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supplying_payload_shape() {
        let p = SupplyingPayload { lender: "L2".into(), action: SupplierAction::Unfulfil { reason: UnfulfilReason::NotHeld } };
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json, serde_json::json!({"lender": "L2", "action": "unfulfil", "reason": "NOT_HELD"}));
        assert_eq!(serde_json::from_value::<SupplyingPayload>(json).unwrap(), p);
    }
}
