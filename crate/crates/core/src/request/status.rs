use std::fmt;

use serde::{Deserialize, Serialize};

/// Why a lender could not supply. The integer codes are stable and ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UnfulfilReason {
    NotAvailableForIll,
    NotHeld,
    NotOnShelf,
    WrongReference,
    LicenceOrCopyright,
    OrderLimitExceeded,
}

impl UnfulfilReason {
    pub const ALL: [UnfulfilReason; 6] = [
        UnfulfilReason::NotAvailableForIll,
        UnfulfilReason::NotHeld,
        UnfulfilReason::NotOnShelf,
        UnfulfilReason::WrongReference,
        UnfulfilReason::LicenceOrCopyright,
        UnfulfilReason::OrderLimitExceeded,
    ];

    pub fn code(self) -> u8 {
        match self {
            UnfulfilReason::NotAvailableForIll => 1,
            UnfulfilReason::NotHeld => 2,
            UnfulfilReason::NotOnShelf => 3,
            UnfulfilReason::WrongReference => 4,
            UnfulfilReason::LicenceOrCopyright => 5,
            UnfulfilReason::OrderLimitExceeded => 6,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code).checked_sub(1)?).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            UnfulfilReason::NotAvailableForIll => "not available for ILL",
            UnfulfilReason::NotHeld => "not held",
            UnfulfilReason::NotOnShelf => "not on shelf",
            UnfulfilReason::WrongReference => "wrong reference",
            UnfulfilReason::LicenceOrCopyright => "ILL not permitted by licence or copyright law",
            UnfulfilReason::OrderLimitExceeded => "order exceeding the maximum number of requests",
        }
    }
}

/// Status without payload; the vocabulary of the transition table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StatusKind {
    Draft,
    LocalAvailable,
    OaAvailable,
    Pending,
    Orphaned,
    Accepted,
    Shipped,
    Received,
    OnLoan,
    ReturnedByPatron,
    InQuarantine,
    ReturnedToLender,
    Complete,
    Unfulfilled,
    ArchivedUnfulfilled,
    CancelRequested,
    Cancelled,
    Expired,
}

impl StatusKind {
    pub const ALL: [StatusKind; 18] = [
        StatusKind::Draft,
        StatusKind::LocalAvailable,
        StatusKind::OaAvailable,
        StatusKind::Pending,
        StatusKind::Orphaned,
        StatusKind::Accepted,
        StatusKind::Shipped,
        StatusKind::Received,
        StatusKind::OnLoan,
        StatusKind::ReturnedByPatron,
        StatusKind::InQuarantine,
        StatusKind::ReturnedToLender,
        StatusKind::Complete,
        StatusKind::Unfulfilled,
        StatusKind::ArchivedUnfulfilled,
        StatusKind::CancelRequested,
        StatusKind::Cancelled,
        StatusKind::Expired,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            StatusKind::LocalAvailable
                | StatusKind::OaAvailable
                | StatusKind::Complete
                | StatusKind::ArchivedUnfulfilled
                | StatusKind::Cancelled
                | StatusKind::Expired
        )
    }

    /// Statuses in which the request is attached to a lender.
    pub fn has_lender(self) -> bool {
        matches!(
            self,
            StatusKind::Pending
                | StatusKind::Accepted
                | StatusKind::Shipped
                | StatusKind::Received
                | StatusKind::OnLoan
                | StatusKind::ReturnedByPatron
                | StatusKind::InQuarantine
                | StatusKind::ReturnedToLender
                | StatusKind::CancelRequested
        )
    }

    /// Statuses reached only after the borrower took delivery.
    pub fn is_post_receipt(self) -> bool {
        matches!(
            self,
            StatusKind::Received
                | StatusKind::OnLoan
                | StatusKind::ReturnedByPatron
                | StatusKind::InQuarantine
                | StatusKind::ReturnedToLender
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            StatusKind::Draft => "DRAFT",
            StatusKind::LocalAvailable => "LOCAL_AVAILABLE",
            StatusKind::OaAvailable => "OA_AVAILABLE",
            StatusKind::Pending => "PENDING",
            StatusKind::Orphaned => "ORPHANED",
            StatusKind::Accepted => "ACCEPTED",
            StatusKind::Shipped => "SHIPPED",
            StatusKind::Received => "RECEIVED",
            StatusKind::OnLoan => "ON_LOAN",
            StatusKind::ReturnedByPatron => "RETURNED_BY_PATRON",
            StatusKind::InQuarantine => "IN_QUARANTINE",
            StatusKind::ReturnedToLender => "RETURNED_TO_LENDER",
            StatusKind::Complete => "COMPLETE",
            StatusKind::Unfulfilled => "UNFULFILLED",
            StatusKind::ArchivedUnfulfilled => "ARCHIVED_UNFULFILLED",
            StatusKind::CancelRequested => "CANCEL_REQUESTED",
            StatusKind::Cancelled => "CANCELLED",
            StatusKind::Expired => "EXPIRED",
        }
    }
}

impl fmt::Display for StatusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Lifecycle status of a request. Only `Unfulfilled` carries data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RequestStatus {
    Draft,
    LocalAvailable,
    OaAvailable,
    Pending,
    Orphaned,
    Accepted,
    Shipped,
    Received,
    OnLoan,
    ReturnedByPatron,
    InQuarantine,
    ReturnedToLender,
    Complete,
    Unfulfilled(UnfulfilReason),
    ArchivedUnfulfilled,
    CancelRequested,
    Cancelled,
    Expired,
}

impl RequestStatus {
    pub fn kind(self) -> StatusKind {
        match self {
            RequestStatus::Draft => StatusKind::Draft,
            RequestStatus::LocalAvailable => StatusKind::LocalAvailable,
            RequestStatus::OaAvailable => StatusKind::OaAvailable,
            RequestStatus::Pending => StatusKind::Pending,
            RequestStatus::Orphaned => StatusKind::Orphaned,
            RequestStatus::Accepted => StatusKind::Accepted,
            RequestStatus::Shipped => StatusKind::Shipped,
            RequestStatus::Received => StatusKind::Received,
            RequestStatus::OnLoan => StatusKind::OnLoan,
            RequestStatus::ReturnedByPatron => StatusKind::ReturnedByPatron,
            RequestStatus::InQuarantine => StatusKind::InQuarantine,
            RequestStatus::ReturnedToLender => StatusKind::ReturnedToLender,
            RequestStatus::Complete => StatusKind::Complete,
            RequestStatus::Unfulfilled(_) => StatusKind::Unfulfilled,
            RequestStatus::ArchivedUnfulfilled => StatusKind::ArchivedUnfulfilled,
            RequestStatus::CancelRequested => StatusKind::CancelRequested,
            RequestStatus::Cancelled => StatusKind::Cancelled,
            RequestStatus::Expired => StatusKind::Expired,
        }
    }

    pub fn is_terminal(self) -> bool {
        self.kind().is_terminal()
    }
}

impl fmt::Display for RequestStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RequestStatus::Unfulfilled(r) => write!(f, "UNFULFILLED({})", r.code()),
            other => f.write_str(other.kind().name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_stable_codes() {
        let codes: Vec<u8> = UnfulfilReason::ALL.iter().map(|r| r.code()).collect();
        assert_eq!(codes, vec![1, 2, 3, 4, 5, 6]);
        for r in UnfulfilReason::ALL {
            assert_eq!(UnfulfilReason::from_code(r.code()), Some(r));
        }
        assert_eq!(UnfulfilReason::from_code(0), None);
        assert_eq!(UnfulfilReason::from_code(7), None);
        assert_eq!(UnfulfilReason::LicenceOrCopyright.code(), 5);
    }

    #[test]
    fn six_terminal_statuses() {
        let terminal: Vec<_> = StatusKind::ALL.iter().filter(|s| s.is_terminal()).collect();
        assert_eq!(terminal.len(), 6);
    }

    #[test]
    fn status_serialization() {
        let s = serde_json::to_string(&RequestStatus::Unfulfilled(UnfulfilReason::NotHeld)).unwrap();
        assert_eq!(s, r#"{"UNFULFILLED":"NOT_HELD"}"#);
        assert_eq!(serde_json::to_string(&RequestStatus::OnLoan).unwrap(), r#""ON_LOAN""#);
        assert_eq!(RequestStatus::Unfulfilled(UnfulfilReason::LicenceOrCopyright).to_string(), "UNFULFILLED(5)");
    }
}
