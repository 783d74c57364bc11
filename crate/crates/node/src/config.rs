//! Node configuration, read from a JSON file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use interlend_core::acquisition::PodParams;
use interlend_core::compliance::{CopyrightPolicy, HardcopyOptions};
use interlend_core::ids::{LibraryId, UserId};
use interlend_core::ledger::CostPolicy;
use interlend_core::request::{LibraryProfile, Role};
use interlend_core::routing::{Partner, PartnerKind, Pod, RoutingConfig, ServiceHours};

use crate::error::NodeError;

/// Another library as this node knows it. Libraries with a `url` run their
/// own node and are reached over the wire; the rest (email partners,
/// vendors, brokers) are handled by this node's staff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerEntry {
    #[serde(flatten)]
    pub partner: Partner,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub country: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
}

impl PeerEntry {
    pub fn networked(partner: Partner, url: impl Into<String>) -> Self {
        PeerEntry { partner, url: Some(url.into()), country: None, name: None }
    }

    pub fn id(&self) -> &LibraryId {
        &self.partner.id
    }
}

/// A user seeded at first start, with a shared secret for `/auth/token`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorSeed {
    pub user: UserId,
    pub secret: String,
    #[serde(default)]
    pub library: Option<LibraryId>,
    pub roles: BTreeSet<Role>,
}

fn default_validity() -> i64 {
    14
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_token_ttl() -> i64 {
    12
}

fn default_country() -> String {
    "XX".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub id: LibraryId,
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    #[serde(default)]
    pub utc_offset_minutes: i32,
    #[serde(default)]
    pub service_hours: ServiceHours,
    /// Mode, patron quota, quarantine days and loan caps.
    #[serde(default)]
    pub profile: LibraryProfile,
    #[serde(default)]
    pub cost_policy: CostPolicy,
    #[serde(default)]
    pub routing: RoutingConfig,
    #[serde(default)]
    pub pods: Vec<Pod>,
    /// Purchase-on-demand thresholds.
    #[serde(default)]
    pub pod_params: PodParams,
    #[serde(default = "default_validity")]
    pub validity_days: i64,
    #[serde(default = "default_country")]
    pub country: String,
    #[serde(default)]
    pub copyright: Option<CopyrightPolicy>,
    #[serde(default)]
    pub hardcopy: HardcopyOptions,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default)]
    pub peers: Vec<PeerEntry>,
    #[serde(default)]
    pub operators: Vec<OperatorSeed>,
    #[serde(default = "default_token_ttl")]
    pub token_ttl_hours: i64,
    /// JSON fixture of citations and open-access links.
    #[serde(default)]
    pub metadata_fixture: Option<PathBuf>,
}

pub fn check_coordinates(id: &LibraryId, latitude: f64, longitude: f64) -> Result<(), NodeError> {
    if !(-90.0..=90.0).contains(&latitude) || !(-180.0..=180.0).contains(&longitude) {
        return Err(NodeError::InvalidCoordinates(format!("{id}: ({latitude}, {longitude})")));
    }
    Ok(())
}

impl NodeConfig {
    /// A FULL node with defaults everywhere, for tests and examples.
    pub fn new(id: impl Into<LibraryId>, name: impl Into<String>) -> Self {
        NodeConfig {
            id: id.into(),
            name: name.into(),
            latitude: 0.0,
            longitude: 0.0,
            utc_offset_minutes: 0,
            service_hours: ServiceHours::default(),
            profile: LibraryProfile::default(),
            cost_policy: CostPolicy::Free,
            routing: RoutingConfig::default(),
            pods: Vec::new(),
            pod_params: PodParams::default(),
            validity_days: default_validity(),
            country: default_country(),
            copyright: None,
            hardcopy: HardcopyOptions::default(),
            data_dir: None,
            listen: default_listen(),
            peers: Vec::new(),
            operators: Vec::new(),
            token_ttl_hours: default_token_ttl(),
            metadata_fixture: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, NodeError> {
        let text = std::fs::read_to_string(path).map_err(|e| NodeError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        let cfg: NodeConfig = serde_json::from_str(&text).map_err(|e| NodeError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// This node's own library as a partner entry.
    pub fn own_partner(&self) -> Partner {
        Partner {
            id: self.id.clone(),
            kind: PartnerKind::NetworkNode,
            profile: self.profile.clone(),
            utc_offset_minutes: self.utc_offset_minutes,
            service_hours: self.service_hours,
            latitude: self.latitude,
            longitude: self.longitude,
            cost_policy: self.cost_policy,
            supported_flows: Partner::network_node(self.id.clone()).supported_flows,
        }
    }

    pub fn copyright_policy(&self) -> CopyrightPolicy {
        self.copyright.clone().unwrap_or_else(|| CopyrightPolicy::new(self.country.clone()))
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        if self.id.as_str().trim().is_empty() {
            return Err(NodeError::ConfigInvalid("empty node id".into()));
        }
        check_coordinates(&self.id, self.latitude, self.longitude)?;
        if self.validity_days < 1 {
            return Err(NodeError::ConfigInvalid("validity_days must be at least 1".into()));
        }
        if self.token_ttl_hours < 1 {
            return Err(NodeError::ConfigInvalid("token_ttl_hours must be at least 1".into()));
        }
        self.cost_policy.validate()?;
        self.own_partner().validate()?;
        let mut seen = BTreeSet::from([self.id.clone()]);
        for peer in &self.peers {
            if !seen.insert(peer.id().clone()) {
                return Err(NodeError::DuplicateId(peer.id().clone()));
            }
            check_coordinates(peer.id(), peer.partner.latitude, peer.partner.longitude)?;
            peer.partner.validate()?;
        }
        let directory = self.peers.iter().map(|p| p.partner.clone()).chain([self.own_partner()]).collect();
        for pod in &self.pods {
            pod.validate(&directory)?;
        }
        for op in &self.operators {
            if op.secret.is_empty() {
                return Err(NodeError::ConfigInvalid(format!("operator {} has an empty secret", op.user)));
            }
        }
        Ok(())
    }

    pub fn log_path(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join("events.log"))
    }

    pub fn snapshot_path(&self) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join("snapshot.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_coordinates_and_duplicates() {
        let mut cfg = NodeConfig::new("L1", "One");
        cfg.latitude = 91.0;
        assert!(matches!(cfg.validate(), Err(NodeError::InvalidCoordinates(_))));
        cfg.latitude = 45.0;
        cfg.peers.push(PeerEntry::networked(Partner::network_node("L1"), "http://x"));
        assert_eq!(cfg.validate(), Err(NodeError::DuplicateId("L1".into())));
    }

    #[test]
    fn minimal_json() {
        let cfg: NodeConfig =
            serde_json::from_str(r#"{"id":"L1","name":"One","latitude":45.1,"longitude":7.6}"#).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.validity_days, 14);
    }
}
