//! Transaction envelopes: the unit that flows endorse -> order -> validate.

use crate::codec::{Canonical, Dec, DecodeError, Enc, Hash32};
use crate::identity::Certificate;
use crate::ledger::ReadWriteSet;
use std::collections::BTreeMap;

pub const NONCE_LEN: usize = 16;

/// Side-band payload carrying private plaintext (or digest hints) to
/// endorsing peers. Never part of the proposal hash, the envelope, or the
/// ledger.
pub type TransientMap = BTreeMap<String, Vec<u8>>;

/// A client's invocation request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proposal {
    pub tx_id: String,
    pub chaincode: String,
    pub function: String,
    pub args: Vec<String>,
    pub creator: Certificate,
    pub nonce: [u8; NONCE_LEN],
    pub timestamp: u64,
}

/// Chaincode name reserved for network configuration transactions.
pub const CONFIG_CHAINCODE: &str = "_config";

pub fn derive_tx_id(creator: &Certificate, nonce: &[u8; NONCE_LEN]) -> String {
    let mut e = Enc::new();
    e.bytes(&creator.to_bytes()).bytes(nonce);
    Hash32::of(&e.finish()).to_hex()
}

impl Proposal {
    pub fn new(
        creator: Certificate,
        nonce: [u8; NONCE_LEN],
        chaincode: &str,
        function: &str,
        args: Vec<String>,
        timestamp: u64,
    ) -> Proposal {
        let tx_id = derive_tx_id(&creator, &nonce);
        Proposal {
            tx_id,
            chaincode: chaincode.to_string(),
            function: function.to_string(),
            args,
            creator,
            nonce,
            timestamp,
        }
    }

    pub fn proposal_hash(&self) -> Hash32 {
        self.canonical_hash()
    }

    pub fn is_config(&self) -> bool {
        self.chaincode == CONFIG_CHAINCODE
    }
}

impl Canonical for Proposal {
    fn encode(&self, e: &mut Enc) {
        e.str(&self.tx_id).str(&self.chaincode).str(&self.function);
        e.list(&self.args, |e, a| {
            e.str(a);
        });
        e.bytes(&self.creator.to_bytes());
        e.bytes(&self.nonce);
        e.u64(self.timestamp);
    }

    fn decode(d: &mut Dec) -> Result<Proposal, DecodeError> {
        let tx_id = d.str()?;
        let chaincode = d.str()?;
        let function = d.str()?;
        let args = d.list(|d| d.str())?;
        let creator_bytes = d.bytes()?;
        let creator = Certificate::from_bytes(&creator_bytes)?;
        let nonce_vec = d.bytes()?;
        let nonce: [u8; NONCE_LEN] = nonce_vec.try_into().map_err(|_| DecodeError { at: 0 })?;
        let timestamp = d.u64()?;
        Ok(Proposal {
            tx_id,
            chaincode,
            function,
            args,
            creator,
            nonce,
            timestamp,
        })
    }
}

/// A peer's signed attestation over a proposal and the read-write set its
/// simulation produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endorsement {
    pub proposal_hash: Hash32,
    pub rwset_hash: Hash32,
    pub endorser: Certificate,
    pub signature: Vec<u8>,
}

pub fn endorsement_payload(proposal_hash: &Hash32, rwset_hash: &Hash32) -> Vec<u8> {
    let mut e = Enc::new();
    e.hash(proposal_hash).hash(rwset_hash);
    e.finish()
}

impl Canonical for Endorsement {
    fn encode(&self, e: &mut Enc) {
        e.hash(&self.proposal_hash).hash(&self.rwset_hash);
        e.bytes(&self.endorser.to_bytes());
        e.bytes(&self.signature);
    }

    fn decode(d: &mut Dec) -> Result<Endorsement, DecodeError> {
        let proposal_hash = d.hash()?;
        let rwset_hash = d.hash()?;
        let endorser = Certificate::from_bytes(&d.bytes()?)?;
        let signature = d.bytes()?;
        Ok(Endorsement {
            proposal_hash,
            rwset_hash,
            endorser,
            signature,
        })
    }
}

/// The ordered unit: proposal, its read-write set, the endorsements that
/// bind them, and the creator's signature over both hashes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub proposal: Proposal,
    pub rwset: ReadWriteSet,
    pub endorsements: Vec<Endorsement>,
    pub creator_signature: Vec<u8>,
}

impl Envelope {
    pub fn tx_id(&self) -> &str {
        &self.proposal.tx_id
    }

    /// The bytes the creator signs: proposal hash plus read-write set hash.
    pub fn signing_payload(&self) -> Vec<u8> {
        endorsement_payload(&self.proposal.proposal_hash(), &self.rwset.canonical_hash())
    }
}

impl Canonical for Envelope {
    fn encode(&self, e: &mut Enc) {
        self.proposal.encode(e);
        self.rwset.encode(e);
        e.list(&self.endorsements, |e, en| en.encode(e));
        e.bytes(&self.creator_signature);
    }

    fn decode(d: &mut Dec) -> Result<Envelope, DecodeError> {
        Ok(Envelope {
            proposal: Proposal::decode(d)?,
            rwset: ReadWriteSet::decode(d)?,
            endorsements: d.list(Endorsement::decode)?,
            creator_signature: d.bytes()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::{CertificateAuthority, Role};

    #[test]
    fn tx_id_is_deterministic_in_creator_and_nonce() {
        let mut ca = CertificateAuthority::init("fishfarm.org", 1);
        let id = ca.issue("client.fishfarm.org", Role::Client);
        let nonce = [7u8; NONCE_LEN];
        let a = derive_tx_id(&id.certificate, &nonce);
        let b = derive_tx_id(&id.certificate, &nonce);
        assert_eq!(a, b);
        let c = derive_tx_id(&id.certificate, &[8u8; NONCE_LEN]);
        assert_ne!(a, c);
    }

    #[test]
    fn envelope_codec_round_trip() {
        let mut ca = CertificateAuthority::init("fishfarm.org", 1);
        let id = ca.issue("client.fishfarm.org", Role::Client);
        let proposal = Proposal::new(
            id.certificate.clone(),
            [1u8; NONCE_LEN],
            "fishfarm",
            "CreateRecord",
            vec!["r1".into(), "{}".into()],
            42,
        );
        let env = Envelope {
            proposal,
            rwset: ReadWriteSet::default(),
            endorsements: vec![],
            creator_signature: vec![9; 64],
        };
        let bytes = env.to_bytes();
        assert_eq!(Envelope::from_bytes(&bytes).unwrap(), env);
    }
}
