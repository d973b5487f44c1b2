//! Private data collections.
//!
//! Plaintext for a collection lives only on the peers of its member
//! organizations; the shared ledger carries a salted digest. The salt is
//! drawn by the writing client so low-entropy sensor readings cannot be
//! confirmed by guessing, and every peer sealing the same write derives
//! the same digest, which keeps endorsements comparable across orgs.

use crate::codec::{Canonical, Dec, DecodeError, Enc, Hash32};
use crate::identity::ValidatedIdentity;
use crate::ledger::Version;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const SALT_LEN: usize = 16;

/// Membership and dissemination rules for one named collection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionConfig {
    pub name: String,
    pub member_orgs: Vec<String>,
    /// Minimum number of member peers that must acknowledge the plaintext
    /// before the proposal may proceed to ordering.
    pub required_peer_count: usize,
}

impl CollectionConfig {
    pub fn new(name: &str, member_orgs: &[&str], required_peer_count: usize) -> CollectionConfig {
        CollectionConfig {
            name: name.to_string(),
            member_orgs: member_orgs.iter().map(|s| s.to_string()).collect(),
            required_peer_count,
        }
    }
}

/// True iff the organization is a member of the collection.
pub fn collection_access(config: &CollectionConfig, org_id: &str) -> bool {
    config.member_orgs.iter().any(|m| m == org_id)
}

/// A sealed private write: the digest goes into the read-write set, the
/// plaintext and salt travel side-band to member peers only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivateWrite {
    pub collection: String,
    pub key: String,
    pub plaintext: Vec<u8>,
    pub salt: [u8; SALT_LEN],
    pub value_digest: Hash32,
}

/// Digest binding key, plaintext, and salt.
pub fn private_digest(key: &str, plaintext: &[u8], salt: &[u8; SALT_LEN]) -> Hash32 {
    let mut e = Enc::new();
    e.str(key).bytes(plaintext).bytes(salt);
    Hash32::of(&e.finish())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PrivateDataError {
    #[error("collection {0} is not defined")]
    UnknownCollection(String),
    #[error("identity of org {org} may not read collection {collection}")]
    PermissionDenied { collection: String, org: String },
    #[error("no private entry for key {0}")]
    NotFound(String),
    #[error("local plaintext does not match the committed digest for key {0}")]
    DigestMismatch(String),
    #[error("only {acks} of {required} required member peers acknowledged the private payload")]
    InsufficientDissemination { acks: usize, required: usize },
}

/// Seal plaintext for a collection with a fresh salt.
pub fn seal_private_write(
    collections: &[CollectionConfig],
    collection: &str,
    key: &str,
    plaintext: Vec<u8>,
    rng: &mut impl RngCore,
) -> Result<PrivateWrite, PrivateDataError> {
    if !collections.iter().any(|c| c.name == collection) {
        return Err(PrivateDataError::UnknownCollection(collection.to_string()));
    }
    let mut salt = [0u8; SALT_LEN];
    rng.fill_bytes(&mut salt);
    let value_digest = private_digest(key, &plaintext, &salt);
    Ok(PrivateWrite {
        collection: collection.to_string(),
        key: key.to_string(),
        plaintext,
        salt,
        value_digest,
    })
}

/// Recompute and compare the digest of a sealed write.
pub fn verify_private(pw: &PrivateWrite) -> bool {
    private_digest(&pw.key, &pw.plaintext, &pw.salt) == pw.value_digest
}

/// One peer's plaintext store for the collections its org belongs to.
#[derive(Debug, Clone, Default)]
pub struct PrivateStore {
    entries: BTreeMap<(String, String), PrivateEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivateEntry {
    pub plaintext: Vec<u8>,
    pub salt: [u8; SALT_LEN],
    pub version: Version,
}

impl Canonical for PrivateEntry {
    fn encode(&self, e: &mut Enc) {
        e.bytes(&self.plaintext).bytes(&self.salt);
        self.version.encode(e);
    }

    fn decode(d: &mut Dec) -> Result<PrivateEntry, DecodeError> {
        let plaintext = d.bytes()?;
        let salt_vec = d.bytes()?;
        let at = 0;
        let salt: [u8; SALT_LEN] = salt_vec.try_into().map_err(|_| DecodeError { at })?;
        Ok(PrivateEntry {
            plaintext,
            salt,
            version: Version::decode(d)?,
        })
    }
}

impl PrivateStore {
    pub fn put(&mut self, collection: &str, key: &str, entry: PrivateEntry) {
        self.entries
            .insert((collection.to_string(), key.to_string()), entry);
    }

    pub fn get(&self, collection: &str, key: &str) -> Option<&PrivateEntry> {
        self.entries
            .get(&(collection.to_string(), key.to_string()))
    }

    pub fn remove(&mut self, collection: &str, key: &str) {
        self.entries
            .remove(&(collection.to_string(), key.to_string()));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, String), &PrivateEntry)> {
        self.entries.iter()
    }

    /// Deterministic digest over the full store contents, used for
    /// cross-peer convergence checks.
    pub fn store_hash(&self) -> Hash32 {
        let mut e = Enc::new();
        e.u32(self.entries.len() as u32);
        for ((collection, key), entry) in &self.entries {
            e.str(collection).str(key);
            entry.encode(&mut e);
        }
        Hash32::of(&e.finish())
    }

    /// Access-checked read: membership, presence, then digest match against
    /// the committed on-ledger digest.
    pub fn get_checked(
        &self,
        config: &CollectionConfig,
        key: &str,
        requester: &ValidatedIdentity,
        committed_digest: Option<Hash32>,
    ) -> Result<&PrivateEntry, PrivateDataError> {
        if !collection_access(config, &requester.org_id) {
            return Err(PrivateDataError::PermissionDenied {
                collection: config.name.clone(),
                org: requester.org_id.clone(),
            });
        }
        let entry = self
            .get(&config.name, key)
            .ok_or_else(|| PrivateDataError::NotFound(key.to_string()))?;
        let Some(ledger_digest) = committed_digest else {
            return Err(PrivateDataError::NotFound(key.to_string()));
        };
        if private_digest(key, &entry.plaintext, &entry.salt) != ledger_digest {
            return Err(PrivateDataError::DigestMismatch(key.to_string()));
        }
        Ok(entry)
    }
}
