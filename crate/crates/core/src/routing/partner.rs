use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{Duration, Timelike};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::RoutingError;
use crate::clock::Timestamp;
use crate::ids::PartnerId;
use crate::ledger::CostPolicy;
use crate::request::{Flow, LibraryProfile, ProfileMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PartnerKind {
    NetworkNode,
    EmailPartner,
    PurchaseVendor,
    ExternalBroker,
}

/// Minutes after local midnight, written `HH:MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocalTime(u16);

impl LocalTime {
    pub fn hm(hour: u16, minute: u16) -> Self {
        LocalTime(hour * 60 + minute)
    }

    pub fn minutes(self) -> u16 {
        self.0
    }

    pub fn parse(text: &str) -> Option<Self> {
        let (h, m) = text.trim().split_once(':')?;
        let (h, m): (u16, u16) = (h.parse().ok()?, m.parse().ok()?);
        (h <= 24 && m < 60 && h * 60 + m <= 24 * 60).then_some(LocalTime(h * 60 + m))
    }
}

impl fmt::Display for LocalTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.0 / 60, self.0 % 60)
    }
}

impl Serialize for LocalTime {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LocalTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        LocalTime::parse(&text).ok_or_else(|| serde::de::Error::custom(format!("invalid time {text:?}")))
    }
}

/// Daily opening window in the partner's local time; `open` inclusive,
/// `close` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceHours {
    pub open: LocalTime,
    pub close: LocalTime,
}

impl ServiceHours {
    pub fn new(open: LocalTime, close: LocalTime) -> Self {
        Self { open, close }
    }

    pub fn always() -> Self {
        Self { open: LocalTime(0), close: LocalTime(24 * 60) }
    }

    pub fn office() -> Self {
        Self::new(LocalTime::hm(9, 0), LocalTime::hm(17, 0))
    }

    pub fn contains(&self, local: LocalTime) -> bool {
        self.open <= local && local < self.close
    }
}

impl Default for ServiceHours {
    fn default() -> Self {
        Self::office()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partner {
    pub id: PartnerId,
    pub kind: PartnerKind,
    #[serde(default)]
    pub profile: LibraryProfile,
    #[serde(default)]
    pub utc_offset_minutes: i32,
    #[serde(default)]
    pub service_hours: ServiceHours,
    #[serde(default)]
    pub latitude: f64,
    #[serde(default)]
    pub longitude: f64,
    #[serde(default)]
    pub cost_policy: CostPolicy,
    #[serde(default = "both_flows")]
    pub supported_flows: BTreeSet<Flow>,
}

fn both_flows() -> BTreeSet<Flow> {
    [Flow::Returnable, Flow::NonReturnable].into_iter().collect()
}

impl Partner {
    /// A FULL network library open office hours in UTC, supporting both flows.
    pub fn network_node(id: impl Into<PartnerId>) -> Self {
        Partner {
            id: id.into(),
            kind: PartnerKind::NetworkNode,
            profile: LibraryProfile::default(),
            utc_offset_minutes: 0,
            service_hours: ServiceHours::office(),
            latitude: 0.0,
            longitude: 0.0,
            cost_policy: CostPolicy::Free,
            supported_flows: both_flows(),
        }
    }

    pub fn of_kind(id: impl Into<PartnerId>, kind: PartnerKind) -> Self {
        Partner { kind, ..Partner::network_node(id) }
    }

    pub fn validate(&self) -> Result<(), RoutingError> {
        if !(-90.0..=90.0).contains(&self.latitude) || !(-180.0..=180.0).contains(&self.longitude) {
            return Err(RoutingError::InvalidPartner(format!(
                "{}: coordinates ({}, {}) out of range",
                self.id, self.latitude, self.longitude
            )));
        }
        if self.service_hours.open >= self.service_hours.close {
            return Err(RoutingError::InvalidPartner(format!(
                "{}: service hours {}-{} do not open before closing",
                self.id, self.service_hours.open, self.service_hours.close
            )));
        }
        Ok(())
    }

    pub fn local_time(&self, now: Timestamp) -> LocalTime {
        let local = now + Duration::minutes(i64::from(self.utc_offset_minutes));
        LocalTime::hm(local.hour() as u16, local.minute() as u16)
    }

    pub fn is_open(&self, now: Timestamp) -> bool {
        self.service_hours.contains(self.local_time(now))
    }

    pub fn can_lend(&self) -> bool {
        self.profile.mode == ProfileMode::Full
    }

    pub fn supports(&self, flow: Flow) -> bool {
        self.supported_flows.contains(&flow)
    }
}

/// Every partner known to a node, keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartnerDirectory {
    partners: BTreeMap<PartnerId, Partner>,
}

impl PartnerDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, partner: Partner) -> Result<(), RoutingError> {
        partner.validate()?;
        self.partners.insert(partner.id.clone(), partner);
        Ok(())
    }

    pub fn get(&self, id: &PartnerId) -> Option<&Partner> {
        self.partners.get(id)
    }

    pub fn contains(&self, id: &PartnerId) -> bool {
        self.partners.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Partner> {
        self.partners.values()
    }

    pub fn of_kind(&self, kind: PartnerKind) -> impl Iterator<Item = &Partner> {
        self.partners.values().filter(move |p| p.kind == kind)
    }

    pub fn len(&self) -> usize {
        self.partners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partners.is_empty()
    }
}

impl FromIterator<Partner> for PartnerDirectory {
    fn from_iter<I: IntoIterator<Item = Partner>>(iter: I) -> Self {
        PartnerDirectory { partners: iter.into_iter().map(|p| (p.id.clone(), p)).collect() }
    }
}

/// A reciprocal sub-community whose members preferentially supply each
/// other. A partner may sit in several pods.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pod {
    pub name: String,
    pub members: BTreeSet<PartnerId>,
    #[serde(default = "yes")]
    pub reciprocal: bool,
}

fn yes() -> bool {
    true
}

impl Pod {
    pub fn new(name: impl Into<String>, members: impl IntoIterator<Item = PartnerId>) -> Self {
        Pod { name: name.into(), members: members.into_iter().collect(), reciprocal: true }
    }

    pub fn validate(&self, directory: &PartnerDirectory) -> Result<(), RoutingError> {
        match self.members.iter().find(|m| !directory.contains(m)) {
            Some(m) => Err(RoutingError::UnknownPartner(m.clone())),
            None => Ok(()),
        }
    }
}
