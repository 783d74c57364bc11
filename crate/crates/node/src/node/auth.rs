//! Shared-secret sign-in, bearer tokens and operator management.

use std::collections::BTreeSet;

use chrono::Duration;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use interlend_core::clock::Timestamp;
use interlend_core::ids::{LibraryId, UserId};
use interlend_core::request::{Actor, Role, RoleGrant};

use super::{Cause, Node, NodeRecord};
use crate::config::{check_coordinates, PeerEntry};
use crate::error::NodeError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGrant {
    pub user: UserId,
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorAction {
    /// Creates the user if needed; roles apply from the first sign-in.
    Invite,
    Add,
    Remove,
    /// Removes every role the user holds at the library.
    Delete,
}

pub fn hash_secret(secret: &str) -> String {
    hex::encode(Sha256::digest(secret.as_bytes()))
}

fn random_hex(bytes: usize) -> String {
    let mut buf = vec![0u8; bytes];
    rand::rng().fill_bytes(&mut buf);
    hex::encode(buf)
}

impl Node {
    /// Exchanges a user's secret for a bearer token.
    pub fn issue_token(&self, user: &UserId, secret: &str) -> Result<(String, Timestamp), NodeError> {
        let known = self.state().credentials.get(user).cloned();
        if known.as_deref() != Some(hash_secret(secret).as_str()) {
            return Err(NodeError::Unauthorized("unknown user or wrong secret".into()));
        }
        let token = random_hex(32);
        let issued_at = self.now();
        let expires_at = issued_at + Duration::hours(self.config.token_ttl_hours);
        self.commit(
            vec![NodeRecord::TokenIssued { token_sha256: hash_secret(&token), user: user.clone(), issued_at, expires_at }],
            Cause::Local,
        )?;
        Ok((token, expires_at))
    }

    /// The user a bearer token belongs to.
    pub fn authenticate(&self, token: Option<&str>) -> Result<UserId, NodeError> {
        let token = token.ok_or_else(|| NodeError::Unauthorized("missing bearer token".into()))?;
        let st = self.state();
        match st.tokens.get(&hash_secret(token)) {
            Some(g) if g.expires_at > self.now() => Ok(g.user.clone()),
            Some(_) => Err(NodeError::Unauthorized("token expired".into())),
            None => Err(NodeError::Unauthorized("unknown token".into())),
        }
    }

    fn require_role(&self, actor: &Actor, library: &LibraryId, role: Role) -> Result<(), NodeError> {
        let ok = match actor {
            Actor::System => true,
            Actor::User(u) => self.engine.directory().allows(u, library, role),
            Actor::Peer(p) => p == library,
        };
        if ok {
            Ok(())
        } else {
            Err(NodeError::Forbidden(format!("{role:?} at {library} required")))
        }
    }

    /// Any role at `library`, for read access.
    pub fn require_member(&self, actor: &Actor, library: &LibraryId) -> Result<(), NodeError> {
        match actor {
            Actor::User(u) if self.engine.directory().grant(u, library).is_none_or(|g| g.roles.is_empty()) => {
                Err(NodeError::Forbidden(format!("no role at {library}")))
            }
            _ => Ok(()),
        }
    }

    pub fn require(&self, actor: &Actor, library: &LibraryId, role: Role) -> Result<(), NodeError> {
        self.require_role(actor, library, role)
    }

    /// Invites, adds, removes or deletes an operator at `library`. Returns
    /// the generated secret when an invitation created a new user.
    pub fn manage_operators(
        &self,
        actor: &Actor,
        library: &LibraryId,
        action: OperatorAction,
        target: &UserId,
        roles: BTreeSet<Role>,
    ) -> Result<Option<String>, NodeError> {
        self.require_role(actor, library, Role::LibraryManager)?;
        if !self.state().local.contains(library) {
            return Err(NodeError::Forbidden(format!("{library} is not hosted here")));
        }
        let holds = self.engine.directory().grant(target, library).is_some_and(|g| !g.roles.is_empty());
        let known = self.state().credentials.contains_key(target);
        let mut records = Vec::new();
        let mut secret = None;
        match action {
            OperatorAction::Invite => {
                if roles.is_empty() {
                    return Err(NodeError::BadRequest("an invitation needs at least one role".into()));
                }
                if !known {
                    let s = random_hex(16);
                    records.push(NodeRecord::CredentialSet { user: target.clone(), secret_sha256: hash_secret(&s) });
                    secret = Some(s);
                }
                records.push(NodeRecord::Invited { grant: RoleGrant::new(target.clone(), library.clone(), roles) });
            }
            OperatorAction::Add => {
                if !known {
                    return Err(NodeError::UnknownUser(target.clone()));
                }
                if roles.is_empty() {
                    return Err(NodeError::BadRequest("no roles given".into()));
                }
                records.push(NodeRecord::RolesGranted { grant: RoleGrant::new(target.clone(), library.clone(), roles) });
            }
            OperatorAction::Remove => {
                if !holds {
                    return Err(NodeError::UnknownUser(target.clone()));
                }
                if roles.is_empty() {
                    return Err(NodeError::BadRequest("no roles given".into()));
                }
                records.push(NodeRecord::RolesRevoked { user: target.clone(), library: library.clone(), roles });
            }
            OperatorAction::Delete => {
                let invited = self.state().invitations.get(target).is_some_and(|v| v.iter().any(|g| &g.library == library));
                if !holds && !invited {
                    return Err(NodeError::UnknownUser(target.clone()));
                }
                records.push(NodeRecord::RolesRevoked { user: target.clone(), library: library.clone(), roles: BTreeSet::new() });
            }
        }
        self.commit(records, Cause::Local)?;
        Ok(secret)
    }

    /// Adds a library to this node's directory. `local` libraries are hosted
    /// here; the rest are peers or partners.
    pub fn register_library(&self, actor: &Actor, peer: PeerEntry, local: bool) -> Result<(), NodeError> {
        self.require_role(actor, &self.config.id, Role::LibraryManager)?;
        check_coordinates(peer.id(), peer.partner.latitude, peer.partner.longitude)?;
        peer.partner.validate()?;
        if peer.id().as_str().trim().is_empty() {
            return Err(NodeError::BadRequest("empty library id".into()));
        }
        if self.state().peers.contains_key(peer.id()) {
            return Err(NodeError::DuplicateId(peer.id().clone()));
        }
        self.commit(vec![NodeRecord::LibraryRegistered { peer, local }], Cause::Local)
    }
}
