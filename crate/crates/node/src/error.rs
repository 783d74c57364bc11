use thiserror::Error;

use interlend_core::acquisition::AcquisitionError;
use interlend_core::bibliography::BibError;
use interlend_core::compliance::ComplianceError;
use interlend_core::ids::{LibraryId, RequestId, UserId};
use interlend_core::ledger::LedgerError;
use interlend_core::request::EngineError;
use interlend_core::routing::RoutingError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NodeError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Compliance(#[from] ComplianceError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Bibliography(#[from] BibError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("authentication required: {0}")]
    Unauthorized(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("library {0} is already registered")]
    DuplicateId(LibraryId),
    #[error("invalid coordinates: {0}")]
    InvalidCoordinates(String),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("no request {0} known here")]
    UnknownCorrelation(RequestId),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("event log record {line} failed its checksum")]
    ChecksumMismatch { line: usize },
    #[error("event log: {0}")]
    CorruptLog(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("invalid input: {0}")]
    BadRequest(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for NodeError {
    fn from(e: std::io::Error) -> Self {
        NodeError::Io(e.to_string())
    }
}

impl NodeError {
    /// Machine-readable code, unique per variant of every wrapped error.
    pub fn code(&self) -> &'static str {
        match self {
            NodeError::Engine(e) => e.code(),
            NodeError::Routing(e) => match e {
                RoutingError::InvalidPartner(_) => "InvalidPartner",
                RoutingError::UnknownPartner(_) => "UnknownPartner",
                RoutingError::InvalidHolding(_) => "InvalidHolding",
                RoutingError::NoCandidates => "NoCandidates",
                RoutingError::InvalidRota(_) => "InvalidRota",
            },
            NodeError::Compliance(e) => match e {
                ComplianceError::MissingPageCounts => "MissingPageCounts",
                ComplianceError::InvalidLicence(_) => "InvalidLicence",
                ComplianceError::RasterizerFailure(_) => "RasterizerFailure",
                ComplianceError::EmptySource => "EmptySource",
                ComplianceError::MethodNotAllowed(_) => "DeliveryMethodNotAllowed",
                ComplianceError::InvalidPayload(_) => "InvalidPayload",
                ComplianceError::UnknownPackage(_) => "UnknownPackage",
            },
            NodeError::Ledger(e) => match e {
                LedgerError::InvalidEntry(_) => "InvalidEntry",
                LedgerError::InvalidInputs(_) => "InvalidInputs",
                LedgerError::DivisionByZero => "DivisionByZero",
                LedgerError::EmptyWindow => "EmptyWindow",
            },
            NodeError::Bibliography(e) => match e {
                BibError::EmptyCitation => "EmptyCitation",
                BibError::MalformedQuery(_) => "MalformedQuery",
                BibError::InvalidBib(_) => "InvalidCitation",
                BibError::MalformedIdentifier(_) => "MalformedIdentifier",
                BibError::NotFound(_) => "IdentifierNotFound",
                BibError::SourceUnavailable(_) => "SourceUnavailable",
                BibError::Fixture(_) => "Fixture",
            },
            NodeError::Acquisition(e) => match e {
                AcquisitionError::InsufficientDeposit { .. } => "InsufficientDeposit",
                AcquisitionError::InvalidConfig(_) => "InvalidAcquisitionConfig",
                AcquisitionError::Usage(_) => "InvalidUsage",
            },
            NodeError::Unauthorized(_) => "Unauthorized",
            NodeError::Forbidden(_) => "Forbidden",
            NodeError::DuplicateId(_) => "DuplicateId",
            NodeError::InvalidCoordinates(_) => "InvalidCoordinates",
            NodeError::UnknownUser(_) => "UnknownUser",
            NodeError::UnknownCorrelation(_) => "UnknownCorrelation",
            NodeError::SchemaViolation(_) => "SchemaViolation",
            NodeError::ChecksumMismatch { .. } => "ChecksumMismatch",
            NodeError::CorruptLog(_) => "CorruptLog",
            NodeError::ConfigInvalid(_) => "ConfigInvalid",
            NodeError::BadRequest(_) => "BadRequest",
            NodeError::NotFound(_) => "NotFound",
            NodeError::Io(_) => "Io",
        }
    }

    /// HTTP status for the error body.
    pub fn http_status(&self) -> u16 {
        match self {
            NodeError::Engine(e) => match e {
                EngineError::QuotaExceeded => 429,
                EngineError::PatronRequestsDisabled(_) | EngineError::Forbidden(_) => 403,
                EngineError::InvalidBib(_)
                | EngineError::SelfRequest
                | EngineError::PartnerIsBasic(_)
                | EngineError::MissingReceipt
                | EngineError::BarcodeRequired
                | EngineError::MethodNotAllowed(_) => 422,
                EngineError::InvalidState { .. }
                | EngineError::AlreadyClaimed(_)
                | EngineError::QuarantineNotElapsed(_)
                | EngineError::LoanCapExceeded { .. }
                | EngineError::NoRota => 409,
                EngineError::UnknownRequest(_) | EngineError::UnknownLibrary(_) => 404,
                EngineError::Replay(_) => 500,
            },
            NodeError::Routing(RoutingError::UnknownPartner(_)) => 404,
            NodeError::Routing(RoutingError::NoCandidates) => 409,
            NodeError::Routing(_) => 422,
            NodeError::Compliance(ComplianceError::UnknownPackage(_)) => 404,
            NodeError::Compliance(ComplianceError::RasterizerFailure(_)) => 502,
            NodeError::Compliance(_) => 422,
            NodeError::Ledger(_) => 422,
            NodeError::Bibliography(BibError::NotFound(_)) => 404,
            NodeError::Bibliography(BibError::MalformedQuery(_)) => 400,
            NodeError::Bibliography(BibError::SourceUnavailable(_)) => 503,
            NodeError::Bibliography(_) => 422,
            NodeError::Acquisition(AcquisitionError::InsufficientDeposit { .. }) => 409,
            NodeError::Acquisition(_) => 422,
            NodeError::Unauthorized(_) => 401,
            NodeError::Forbidden(_) => 403,
            NodeError::DuplicateId(_) => 409,
            NodeError::InvalidCoordinates(_) => 422,
            NodeError::UnknownUser(_) | NodeError::UnknownCorrelation(_) | NodeError::NotFound(_) => 404,
            NodeError::SchemaViolation(_) | NodeError::BadRequest(_) | NodeError::ConfigInvalid(_) => 400,
            NodeError::ChecksumMismatch { .. } | NodeError::CorruptLog(_) | NodeError::Io(_) => 500,
        }
    }
}
