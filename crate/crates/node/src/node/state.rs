use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use interlend_core::acquisition::EbaUsageRow;
use interlend_core::clock::Timestamp;
use interlend_core::compliance::{DeliveryPackage, LicenceStore, PackageRegistry};
use interlend_core::ids::{LibraryId, RequestId, UserId};
use interlend_core::ledger::Ledger;
use interlend_core::request::{Event, Role, RoleGrant};
use interlend_core::routing::HoldingsIndex;

use super::auth::TokenGrant;
use crate::config::PeerEntry;
use crate::wire::{WireAck, WireMessage};

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum NodeRecord {
    LibraryRegistered { peer: PeerEntry, local: bool },
    CredentialSet { user: UserId, secret_sha256: String },
    RolesGranted { grant: RoleGrant },
    /// An empty role set removes the user from the library.
    RolesRevoked { user: UserId, library: LibraryId, roles: BTreeSet<Role> },
    /// Granted when the user first signs in.
    Invited { grant: RoleGrant },
    TokenIssued { token_sha256: String, user: UserId, issued_at: Timestamp, expires_at: Timestamp },
    RequestEvent { request: RequestId, index: usize, owned: bool, event: Event },
    HoldingsMerged { holdings: HoldingsIndex },
    LicencesMerged { licences: LicenceStore },
    UsageLoaded { rows: Vec<EbaUsageRow> },
    PackageStored { package: DeliveryPackage },
    PackageDownloaded { package_id: String },
    PackagesPurged { at: Timestamp },
    /// An inbound message and the answer given to it.
    WireHandled { ack: WireAck },
    Outbound { message: WireMessage },
    /// The recipient answered an outbound message.
    Delivered { ack: WireAck },
}

/// A notice for library staff: new lending requests, partners to contact
/// by email, messages a peer refused.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub at: Timestamp,
    pub library: LibraryId,
    #[serde(default)]
    pub request: Option<RequestId>,
    pub text: String,
}

/// Node state outside the request engine. Rebuilt from the log alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    /// Sequence number of the last applied record.
    pub seq: u64,
    pub peers: BTreeMap<LibraryId, PeerEntry>,
    /// Libraries this node hosts.
    pub local: BTreeSet<LibraryId>,
    pub credentials: BTreeMap<UserId, String>,
    pub invitations: BTreeMap<UserId, Vec<RoleGrant>>,
    pub tokens: BTreeMap<String, TokenGrant>,
    pub holdings: HoldingsIndex,
    pub licences: LicenceStore,
    pub usage: Vec<EbaUsageRow>,
    pub packages: PackageRegistry,
    pub ledger: Ledger,
    pub wire_seen: BTreeMap<String, WireAck>,
    pub outbox: BTreeMap<String, WireMessage>,
    /// History length last sent to each node, per request.
    pub replicated: BTreeMap<RequestId, BTreeMap<LibraryId, usize>>,
    pub messages_sent: u64,
    pub alerts: Vec<Alert>,
}
