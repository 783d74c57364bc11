//! Whether a lender may supply, and how: licence and copyright checks,
//! hardcopy packages, delivery receipts and package retention.

mod delivery;
mod hardcopy;
mod licence;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use delivery::{deliver, DeliveryReceipt, Payload};
pub use hardcopy::{
    make_hardcopy, DeliveryPackage, FailingRasterizer, HardcopyOptions, Manifest, ManifestPage, PackageRegistry,
    PageKind, PurgeRecord, RasterPage, Rasterizer, SourcePage, SyntheticRasterizer, DEFAULT_DISCLAIMER, SED_DPI,
};
pub use licence::{check_supply_allowed, CopyrightPolicy, LicenceRecord, LicenceStore, SupplyDecision, SupplyQuery};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeliveryMethod {
    /// Secure electronic delivery of an image package.
    Sed,
    ArticleExchange,
    Url,
    Postal,
}

impl DeliveryMethod {
    pub const ALL: [DeliveryMethod; 4] =
        [DeliveryMethod::Sed, DeliveryMethod::ArticleExchange, DeliveryMethod::Url, DeliveryMethod::Postal];

    pub fn is_digital(self) -> bool {
        self != DeliveryMethod::Postal
    }

    pub fn name(self) -> &'static str {
        match self {
            DeliveryMethod::Sed => "SED",
            DeliveryMethod::ArticleExchange => "ARTICLE_EXCHANGE",
            DeliveryMethod::Url => "URL",
            DeliveryMethod::Postal => "POSTAL",
        }
    }
}

impl fmt::Display for DeliveryMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeliveryMethod {
    type Err = ComplianceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_uppercase().replace([' ', '-'], "_");
        DeliveryMethod::ALL
            .into_iter()
            .find(|m| m.name() == wanted)
            .ok_or_else(|| ComplianceError::InvalidLicence(format!("unknown delivery method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComplianceError {
    #[error("monograph excerpts need both excerpt and total page counts")]
    MissingPageCounts,
    #[error("invalid licence record: {0}")]
    InvalidLicence(String),
    #[error("rasterizer failed: {0}")]
    RasterizerFailure(String),
    #[error("no source pages")]
    EmptySource,
    #[error("delivery method {0} is not allowed for this request")]
    MethodNotAllowed(DeliveryMethod),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("unknown package {0}")]
    UnknownPackage(String),
}
