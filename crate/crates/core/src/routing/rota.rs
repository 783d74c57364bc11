use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::select::{rank_partners, LoadView};
use super::{match_holdings, HoldingsIndex, PartnerDirectory, PartnerKind, Pod, RoutingError};
use crate::bibliography::BibRef;
use crate::ids::{LibraryId, PartnerId};
use crate::request::{Flow, RSRequest};

pub const ALL_LIBRARIES: &str = "ALL_LIBRARIES";

/// One step of a lender string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RotaEntry {
    Partner(PartnerId),
    AllLibraries,
}

impl fmt::Display for RotaEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RotaEntry::Partner(p) => f.write_str(p.as_str()),
            RotaEntry::AllLibraries => f.write_str(ALL_LIBRARIES),
        }
    }
}

impl Serialize for RotaEntry {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RotaEntry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == ALL_LIBRARIES { RotaEntry::AllLibraries } else { RotaEntry::Partner(s.into()) })
    }
}

/// Ordered supplier sequence for a request. Never empty, no immediate
/// repeats, and `ALL_LIBRARIES` only as the final entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<RotaEntry>", into = "Vec<RotaEntry>")]
pub struct RotaPlan {
    entries: Vec<RotaEntry>,
}

impl RotaPlan {
    pub fn new(entries: Vec<RotaEntry>) -> Result<Self, RoutingError> {
        if entries.is_empty() {
            return Err(RoutingError::InvalidRota("empty".into()));
        }
        if entries.windows(2).any(|w| w[0] == w[1]) {
            return Err(RoutingError::InvalidRota("immediate duplicate entry".into()));
        }
        let broadcasts = entries.iter().filter(|e| **e == RotaEntry::AllLibraries).count();
        if broadcasts > 1 || (broadcasts == 1 && entries.last() != Some(&RotaEntry::AllLibraries)) {
            return Err(RoutingError::InvalidRota(format!("{ALL_LIBRARIES} must appear at most once, last")));
        }
        Ok(RotaPlan { entries })
    }

    pub fn single(partner: PartnerId) -> Self {
        RotaPlan { entries: vec![RotaEntry::Partner(partner)] }
    }

    pub fn broadcast() -> Self {
        RotaPlan { entries: vec![RotaEntry::AllLibraries] }
    }

    pub fn entries(&self) -> &[RotaEntry] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> Option<&RotaEntry> {
        self.entries.get(index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_partner(&self, id: &PartnerId) -> bool {
        self.entries.iter().any(|e| matches!(e, RotaEntry::Partner(p) if p == id))
    }
}

impl TryFrom<Vec<RotaEntry>> for RotaPlan {
    type Error = RoutingError;
    fn try_from(entries: Vec<RotaEntry>) -> Result<Self, Self::Error> {
        RotaPlan::new(entries)
    }
}

impl From<RotaPlan> for Vec<RotaEntry> {
    fn from(plan: RotaPlan) -> Self {
        plan.entries
    }
}

impl fmt::Display for RotaPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.entries.iter().map(ToString::to_string).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Node-level routing settings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingConfig {
    /// Vendor tried first when purchase-on-demand applies; defaults to the
    /// first registered PURCHASE_VENDOR.
    #[serde(default)]
    pub purchase_vendor: Option<PartnerId>,
    /// Domestic email partners in preference order; defaults to every
    /// registered EMAIL_PARTNER.
    #[serde(default)]
    pub email_partners: Vec<PartnerId>,
    #[serde(default)]
    pub external_broker: Option<PartnerId>,
    #[serde(default)]
    pub include_all_libraries: bool,
}

/// What `build_rota` needs to know about the request.
#[derive(Debug, Clone, Copy)]
pub struct RotaRequest<'a> {
    pub requester: &'a LibraryId,
    pub bib: &'a BibRef,
    pub flow: Flow,
}

impl<'a> From<&'a RSRequest> for RotaRequest<'a> {
    fn from(req: &'a RSRequest) -> Self {
        RotaRequest { requester: &req.requester_library, bib: &req.bib, flow: req.flow }
    }
}

/// Lookup state shared by the tiers.
#[derive(Debug, Clone, Copy)]
pub struct RotaInputs<'a> {
    pub partners: &'a PartnerDirectory,
    pub holdings: &'a HoldingsIndex,
    /// Outcome of the purchase-on-demand eligibility check.
    pub pod_eligible: bool,
    /// When present, pod members are ordered by the partner selection rule
    /// instead of by id.
    pub load: Option<&'a LoadView>,
}

/// Builds the lender string tier by tier: purchase vendor (if POD applies),
/// pod members holding the item, email partners, external broker, and
/// finally the broadcast sentinel. The requester is never included.
pub fn build_rota(
    req: RotaRequest<'_>,
    cfg: &RoutingConfig,
    pods: &[Pod],
    inputs: RotaInputs<'_>,
) -> Result<RotaPlan, RoutingError> {
    let eligible = |id: &PartnerId| {
        id != req.requester
            && inputs
                .partners
                .get(id)
                .is_some_and(|p| p.can_lend() && p.supports(req.flow))
    };
    let first_of_kind = |configured: &Option<PartnerId>, kind: PartnerKind| -> Option<PartnerId> {
        match configured {
            Some(id) => Some(id.clone()),
            None => inputs.partners.of_kind(kind).map(|p| p.id.clone()).find(|id| eligible(id)),
        }
    };

    let mut ordered: Vec<PartnerId> = Vec::new();

    if inputs.pod_eligible {
        if let Some(vendor) = first_of_kind(&cfg.purchase_vendor, PartnerKind::PurchaseVendor) {
            ordered.push(vendor);
        }
    }

    // Reciprocal pods first, then the rest; only pods the requester is in.
    let mut my_pods: Vec<&Pod> = pods.iter().filter(|p| p.members.contains(req.requester)).collect();
    my_pods.sort_by_key(|p| !p.reciprocal);
    let holders = match_holdings(req.bib, inputs.holdings);
    let mut seen_pod_members = BTreeSet::new();
    for pod in my_pods {
        let members: Vec<&PartnerId> = pod
            .members
            .iter()
            .filter(|m| holders.contains(*m) && eligible(m) && seen_pod_members.insert((*m).clone()))
            .collect();
        let tier = match inputs.load {
            Some(view) => {
                let partners: Vec<_> = members.iter().filter_map(|m| inputs.partners.get(m)).collect();
                rank_partners(&partners, view)
            }
            None => members.into_iter().cloned().collect(),
        };
        ordered.extend(tier);
    }

    if cfg.email_partners.is_empty() {
        ordered.extend(inputs.partners.of_kind(PartnerKind::EmailPartner).map(|p| p.id.clone()));
    } else {
        ordered.extend(cfg.email_partners.iter().cloned());
    }

    if let Some(broker) = first_of_kind(&cfg.external_broker, PartnerKind::ExternalBroker) {
        ordered.push(broker);
    }

    let mut seen = BTreeSet::new();
    let mut entries: Vec<RotaEntry> = ordered
        .into_iter()
        .filter(|id| eligible(id) && seen.insert(id.clone()))
        .map(RotaEntry::Partner)
        .collect();
    if cfg.include_all_libraries {
        entries.push(RotaEntry::AllLibraries);
    }
    if entries.is_empty() {
        return Err(RoutingError::NoCandidates);
    }
    RotaPlan::new(entries)
}

/// Per-partner tallies of what was assigned, used as `period_assigned`.
pub type AssignmentCounts = BTreeMap<PartnerId, u32>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bibliography::{BibKind, NormalizedKey};
    use crate::request::ProfileMode;
    use crate::routing::Partner;

    fn directory() -> PartnerDirectory {
        let mut basic = Partner::network_node("L9");
        basic.profile.mode = ProfileMode::Basic;
        [
            Partner::network_node("L1"),
            Partner::network_node("L2"),
            Partner::network_node("L3"),
            basic,
            Partner::of_kind("UA-POD", PartnerKind::PurchaseVendor),
            Partner::of_kind("MAIL-1", PartnerKind::EmailPartner),
            Partner::of_kind("UA-X", PartnerKind::ExternalBroker),
        ]
        .into_iter()
        .collect()
    }

    fn pods() -> Vec<Pod> {
        vec![Pod::new("core", ["L1", "L2", "L3", "L9"].map(PartnerId::from))]
    }

    #[test]
    fn invariants_of_the_plan() {
        assert!(RotaPlan::new(vec![]).is_err());
        let a = RotaEntry::Partner("A".into());
        assert!(RotaPlan::new(vec![a.clone(), a.clone()]).is_err());
        assert!(RotaPlan::new(vec![RotaEntry::AllLibraries, a.clone()]).is_err());
        assert!(RotaPlan::new(vec![a.clone(), RotaEntry::AllLibraries]).is_ok());
        let json = serde_json::to_string(&RotaPlan::new(vec![a, RotaEntry::AllLibraries]).unwrap()).unwrap();
        assert_eq!(json, r#"["A","ALL_LIBRARIES"]"#);
        assert!(serde_json::from_str::<RotaPlan>(r#"["ALL_LIBRARIES","A"]"#).is_err());
    }

    #[test]
    fn pod_eligible_book_goes_to_vendor_first_then_broker() {
        let dir = directory();
        let holdings = HoldingsIndex::new();
        let bib = BibRef::book("Rare monograph", "9781234567897");
        let cfg = RoutingConfig { email_partners: vec![], ..Default::default() };
        let requester = LibraryId::from("L1");
        let plan = build_rota(
            RotaRequest { requester: &requester, bib: &bib, flow: Flow::Returnable },
            &cfg,
            &pods(),
            RotaInputs { partners: &dir, holdings: &holdings, pod_eligible: true, load: None },
        )
        .unwrap();
        assert_eq!(plan.to_string(), "[UA-POD, MAIL-1, UA-X]");
    }

    #[test]
    fn pod_holders_precede_email_partners() {
        let dir = directory();
        let mut holdings = HoldingsIndex::new();
        for p in ["L1", "L3", "L9"] {
            holdings.insert(NormalizedKey::issn("1234-5678"), p, 1980, 2020).unwrap();
        }
        let bib = BibRef::article("On X", "J", 2001).with_issn("1234-5678");
        assert_eq!(bib.kind, BibKind::Article);
        let requester = LibraryId::from("L1");
        let cfg = RoutingConfig { include_all_libraries: true, ..Default::default() };
        let plan = build_rota(
            RotaRequest { requester: &requester, bib: &bib, flow: Flow::NonReturnable },
            &cfg,
            &pods(),
            RotaInputs { partners: &dir, holdings: &holdings, pod_eligible: false, load: None },
        )
        .unwrap();
        // L1 is the requester, L9 is BASIC.
        assert_eq!(plan.to_string(), "[L3, MAIL-1, UA-X, ALL_LIBRARIES]");
    }

    #[test]
    fn nothing_anywhere() {
        let dir: PartnerDirectory = [Partner::network_node("L1")].into_iter().collect();
        let holdings = HoldingsIndex::new();
        let bib = BibRef::book("B", "9781234567897");
        let requester = LibraryId::from("L1");
        let err = build_rota(
            RotaRequest { requester: &requester, bib: &bib, flow: Flow::Returnable },
            &RoutingConfig::default(),
            &[],
            RotaInputs { partners: &dir, holdings: &holdings, pod_eligible: true, load: None },
        );
        assert_eq!(err, Err(RoutingError::NoCandidates));
    }
}
