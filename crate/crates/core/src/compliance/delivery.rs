use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use url::Url;

use super::{ComplianceError, DeliveryMethod, DeliveryPackage};
use crate::clock::Timestamp;

/// Proof of shipment attached to a request on fulfilment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeliveryReceipt {
    pub method: DeliveryMethod,
    pub at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<Url>,
}

#[derive(Debug, Clone, Copy)]
pub enum Payload<'a> {
    Package(&'a DeliveryPackage),
    Url(&'a Url),
    /// The item or photocopy goes by post.
    Physical,
}

/// Checks the method against the request's allowed set and the payload
/// against the method, then issues a receipt.
pub fn deliver(
    allowed: &BTreeSet<DeliveryMethod>,
    payload: Payload<'_>,
    method: DeliveryMethod,
    now: Timestamp,
) -> Result<DeliveryReceipt, ComplianceError> {
    if !allowed.contains(&method) {
        return Err(ComplianceError::MethodNotAllowed(method));
    }
    let (package_id, url) = match (method, payload) {
        (DeliveryMethod::Sed | DeliveryMethod::ArticleExchange, Payload::Package(pkg)) => {
            if pkg.is_expired(now) {
                return Err(ComplianceError::InvalidPayload(format!("package {} is past retention", pkg.package_id)));
            }
            (Some(pkg.package_id.clone()), None)
        }
        (DeliveryMethod::Url | DeliveryMethod::ArticleExchange, Payload::Url(url)) => {
            if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
                return Err(ComplianceError::InvalidPayload(format!("{url} is not a resolvable link")));
            }
            (None, Some(url.clone()))
        }
        (DeliveryMethod::Postal, Payload::Physical) => (None, None),
        (m, _) => return Err(ComplianceError::InvalidPayload(format!("wrong payload for {m}"))),
    };
    Ok(DeliveryReceipt { method, at: now, package_id, url })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::reference_epoch;
    use crate::compliance::{make_hardcopy, HardcopyOptions, SourcePage, SyntheticRasterizer};

    #[test]
    fn receipts() {
        let now = reference_epoch();
        let pkg = make_hardcopy("P1", &SourcePage::synthetic(3), &SyntheticRasterizer, &HardcopyOptions::default(), now).unwrap();
        let sed: BTreeSet<_> = [DeliveryMethod::Sed].into();
        let r = deliver(&sed, Payload::Package(&pkg), DeliveryMethod::Sed, now).unwrap();
        assert_eq!((r.method, r.package_id.as_deref()), (DeliveryMethod::Sed, Some("P1")));
        assert_eq!(
            deliver(&sed, Payload::Physical, DeliveryMethod::Postal, now),
            Err(ComplianceError::MethodNotAllowed(DeliveryMethod::Postal))
        );
        let url_ok: BTreeSet<_> = [DeliveryMethod::Url].into();
        let link = Url::parse("https://archive.example/paper.pdf").unwrap();
        assert_eq!(deliver(&url_ok, Payload::Url(&link), DeliveryMethod::Url, now).unwrap().url, Some(link));
        let bad = Url::parse("mailto:x@example.org").unwrap();
        assert!(matches!(deliver(&url_ok, Payload::Url(&bad), DeliveryMethod::Url, now), Err(ComplianceError::InvalidPayload(_))));
    }
}
