//! The lifecycle as data. Every status change the engine commits, and every
//! event replayed from a log, is checked against this table.

use serde::{Deserialize, Serialize};

use super::StatusKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Create,
    Precheck,
    AssignRota,
    Send,
    SendAll,
    Accept,
    Unfulfil,
    Reiterate,
    Archive,
    RequestCancel,
    DecideCancel,
    CheckSupply,
    Fulfil,
    Receive,
    Loan,
    ReturnFromPatron,
    ReleaseQuarantine,
    ReturnToLender,
    Complete,
    Expire,
    Annotate,
}

/// Who may trigger an operation: the borrowing side, the lending side, or
/// the node itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Side {
    BorrowingOperator,
    LendingOperator,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub state: StatusKind,
    pub operation: Operation,
    pub guard: &'static str,
    pub next_state: StatusKind,
    pub actor: Side,
}

const fn t(state: StatusKind, operation: Operation, guard: &'static str, next_state: StatusKind, actor: Side) -> Transition {
    Transition { state, operation, guard, next_state, actor }
}

use Operation as Op;
use Side::{BorrowingOperator as B, LendingOperator as L, System as S};
use StatusKind as K;

pub const TRANSITIONS: &[Transition] = &[
    t(K::Draft, Op::Precheck, "held locally", K::LocalAvailable, B),
    t(K::Draft, Op::Precheck, "open access copy registered", K::OaAvailable, B),
    t(K::Draft, Op::Precheck, "proceed", K::Draft, B),
    t(K::Draft, Op::AssignRota, "rota built", K::Draft, B),
    t(K::Unfulfilled, Op::AssignRota, "rota built", K::Unfulfilled, B),
    t(K::Draft, Op::Send, "partner is FULL and not the requester", K::Pending, B),
    t(K::Unfulfilled, Op::Send, "partner is FULL and not the requester", K::Pending, B),
    t(K::Draft, Op::SendAll, "", K::Orphaned, B),
    t(K::Unfulfilled, Op::SendAll, "", K::Orphaned, B),
    t(K::Pending, Op::Accept, "lender is the current lender", K::Accepted, L),
    t(K::Orphaned, Op::Accept, "first claim by a FULL library", K::Accepted, L),
    t(K::Pending, Op::Unfulfil, "by the current lender", K::Unfulfilled, L),
    t(K::Accepted, Op::Unfulfil, "by the current lender", K::Unfulfilled, L),
    t(K::Unfulfilled, Op::Reiterate, "next rota entry is a partner", K::Pending, B),
    t(K::Unfulfilled, Op::Reiterate, "next rota entry is ALL_LIBRARIES", K::Orphaned, B),
    t(K::Unfulfilled, Op::Reiterate, "rota exhausted", K::ArchivedUnfulfilled, B),
    t(K::Unfulfilled, Op::Archive, "", K::ArchivedUnfulfilled, B),
    t(K::Pending, Op::RequestCancel, "", K::CancelRequested, B),
    t(K::Accepted, Op::RequestCancel, "", K::CancelRequested, B),
    t(K::CancelRequested, Op::DecideCancel, "approved", K::Cancelled, L),
    t(K::CancelRequested, Op::DecideCancel, "rejected, prior status PENDING", K::Pending, L),
    t(K::CancelRequested, Op::DecideCancel, "rejected, prior status ACCEPTED", K::Accepted, L),
    t(K::Pending, Op::CheckSupply, "supply allowed", K::Pending, L),
    t(K::Accepted, Op::CheckSupply, "supply allowed", K::Accepted, L),
    t(K::Accepted, Op::Fulfil, "delivery receipt attached", K::Shipped, L),
    t(K::Shipped, Op::Receive, "barcode given when returnable", K::Received, B),
    t(K::Received, Op::Complete, "non-returnable", K::Complete, S),
    t(K::Received, Op::Loan, "returnable, under the patron group's loan cap", K::OnLoan, B),
    t(K::OnLoan, Op::ReturnFromPatron, "quarantine_days > 0", K::InQuarantine, B),
    t(K::OnLoan, Op::ReturnFromPatron, "quarantine_days = 0", K::ReturnedByPatron, B),
    t(K::InQuarantine, Op::ReleaseQuarantine, "quarantine elapsed", K::ReturnedByPatron, B),
    t(K::ReturnedByPatron, Op::ReturnToLender, "", K::ReturnedToLender, B),
    t(K::ReturnedToLender, Op::Complete, "lender checked the item in", K::Complete, L),
    t(K::Pending, Op::Expire, "validity passed", K::Expired, S),
    t(K::Orphaned, Op::Expire, "validity passed", K::Expired, S),
];

/// Operations that annotate without changing status; allowed in every
/// non-terminal state.
pub fn is_annotation(op: Operation) -> bool {
    matches!(op, Operation::Annotate)
}

pub fn permits(from: StatusKind, op: Operation, to: StatusKind) -> bool {
    if is_annotation(op) {
        return !from.is_terminal() && from == to;
    }
    TRANSITIONS.iter().any(|t| t.state == from && t.operation == op && t.next_state == to)
}

pub fn transitions_from(from: StatusKind) -> impl Iterator<Item = &'static Transition> {
    TRANSITIONS.iter().filter(move |t| t.state == from)
}

/// The table as machine-readable JSON.
pub fn transition_table_json() -> serde_json::Value {
    serde_json::to_value(TRANSITIONS).expect("transition table serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_edge_leaves_a_terminal_state() {
        for t in TRANSITIONS {
            assert!(!t.state.is_terminal(), "{t:?}");
        }
        for k in StatusKind::ALL.iter().filter(|k| k.is_terminal()) {
            assert!(!permits(*k, Operation::Annotate, *k));
        }
    }

    #[test]
    fn every_status_is_reachable_from_draft() {
        let mut seen = vec![StatusKind::Draft];
        let mut frontier = vec![StatusKind::Draft];
        while let Some(s) = frontier.pop() {
            for t in transitions_from(s) {
                if !seen.contains(&t.next_state) {
                    seen.push(t.next_state);
                    frontier.push(t.next_state);
                }
            }
        }
        for k in StatusKind::ALL {
            assert!(seen.contains(&k), "{k} unreachable");
        }
    }

    #[test]
    fn json_export_shape() {
        let json = transition_table_json();
        let rows = json.as_array().unwrap();
        assert_eq!(rows.len(), TRANSITIONS.len());
        assert_eq!(rows[0]["state"], "DRAFT");
        assert_eq!(rows[0]["operation"], "precheck");
        assert_eq!(rows[0]["next_state"], "LOCAL_AVAILABLE");
        assert!(rows[0]["guard"].is_string());
    }
}
