//! Endorsement policies: parsing, evaluation, and network-policy updates.
//!
//! A policy is an expression tree whose leaves name an (org, role) pair and
//! whose interior nodes require n of their children to be satisfied. The
//! concrete syntax accepted by [`parse_policy`]:
//!
//! ```text
//! Sig('fishfarm.org.peer')
//! And(e1, ..., ek)        == OutOf(k, e1, ..., ek)
//! Or(e1, ..., ek)         == OutOf(1, e1, ..., ek)
//! Majority(e1, ..., ek)   == OutOf(k/2 + 1, e1, ..., ek)
//! OutOf(n, e1, ..., ek)
//! ```

use crate::identity::{Role, ValidatedIdentity};
use crate::privatedata::CollectionConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

pub const MAX_POLICY_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndorsementPolicy {
    /// Satisfied when some endorser has this org and role.
    Signature { org_id: String, role: Role },
    /// Satisfied when at least `n` children are satisfied.
    NOutOf {
        n: usize,
        children: Vec<EndorsementPolicy>,
    },
}

impl EndorsementPolicy {
    pub fn sig(org_id: &str, role: Role) -> EndorsementPolicy {
        EndorsementPolicy::Signature {
            org_id: org_id.to_string(),
            role,
        }
    }

    pub fn all_of(children: Vec<EndorsementPolicy>) -> EndorsementPolicy {
        EndorsementPolicy::NOutOf {
            n: children.len(),
            children,
        }
    }

    fn depth(&self) -> usize {
        match self {
            EndorsementPolicy::Signature { .. } => 1,
            EndorsementPolicy::NOutOf { children, .. } => {
                1 + children.iter().map(|c| c.depth()).max().unwrap_or(0)
            }
        }
    }
}

impl fmt::Display for EndorsementPolicy {
    /// Canonical printed form; `parse_policy(p.to_string())` round-trips.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EndorsementPolicy::Signature { org_id, role } => {
                write!(f, "Sig('{}.{}')", org_id, role.as_str())
            }
            EndorsementPolicy::NOutOf { n, children } => {
                write!(f, "OutOf({n}")?;
                for c in children {
                    write!(f, ", {c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("OutOf arity {n} out of range for {children} children")]
    Arity { n: usize, children: usize },
    #[error("policy tree deeper than {MAX_POLICY_DEPTH}")]
    TooDeep,
    #[error("not enough approvals to satisfy the channel policy")]
    InsufficientApprovals,
    #[error("proposed policy version {proposed} does not follow current {current}")]
    VersionMismatch { proposed: u64, current: u64 },
}

/// Channel-level and chaincode-level policies plus the collection set,
/// replaced atomically by an approved update.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkPolicy {
    pub channel_policy: EndorsementPolicy,
    pub chaincode_policy: EndorsementPolicy,
    pub collections: Vec<CollectionConfig>,
    pub version: u64,
}

impl NetworkPolicy {
    pub fn collection(&self, name: &str) -> Option<&CollectionConfig> {
        self.collections.iter().find(|c| c.name == name)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, PolicyError> {
        Err(PolicyError::Syntax {
            position: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(|c: char| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, token: char) -> Result<(), PolicyError> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token) {
            self.pos += token.len_utf8();
            Ok(())
        } else {
            self.err(format!("expected '{token}'"))
        }
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.src[self.pos..].starts_with(|c: char| c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        self.src[start..self.pos].to_string()
    }

    fn number(&mut self) -> Result<usize, PolicyError> {
        self.skip_ws();
        let start = self.pos;
        while self.src[self.pos..].starts_with(|c: char| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected a number");
        }
        self.src[start..self.pos]
            .parse()
            .or_else(|_| self.err("number too large"))
    }

    fn quoted(&mut self) -> Result<String, PolicyError> {
        self.eat('\'')?;
        let start = self.pos;
        match self.src[self.pos..].find('\'') {
            Some(rel) => {
                self.pos += rel + 1;
                Ok(self.src[start..self.pos - 1].to_string())
            }
            None => self.err("unterminated quote"),
        }
    }

    fn expr(&mut self) -> Result<EndorsementPolicy, PolicyError> {
        let name = self.ident();
        match name.as_str() {
            "Sig" => {
                self.eat('(')?;
                let spec = self.quoted()?;
                self.eat(')')?;
                // The role is the suffix after the last dot; the org id may
                // itself contain dots ("fishfarm.org.peer").
                let Some(dot) = spec.rfind('.') else {
                    return self.err("Sig expects 'org.role'");
                };
                let (org_id, role_str) = (&spec[..dot], &spec[dot + 1..]);
                let Some(role) = Role::parse(role_str) else {
                    return self.err(format!("unknown role '{role_str}'"));
                };
                if org_id.is_empty() {
                    return self.err("empty org id");
                }
                Ok(EndorsementPolicy::sig(org_id, role))
            }
            "And" | "Or" | "Majority" => {
                let children = self.child_list()?;
                if children.is_empty() {
                    return self.err(format!("{name} needs at least one child"));
                }
                let n = match name.as_str() {
                    "And" => children.len(),
                    "Or" => 1,
                    _ => children.len() / 2 + 1,
                };
                Ok(EndorsementPolicy::NOutOf { n, children })
            }
            "OutOf" => {
                self.eat('(')?;
                let n = self.number()?;
                let mut children = Vec::new();
                loop {
                    self.skip_ws();
                    if self.src[self.pos..].starts_with(')') {
                        self.pos += 1;
                        break;
                    }
                    self.eat(',')?;
                    children.push(self.expr()?);
                }
                if n < 1 || n > children.len() {
                    return Err(PolicyError::Arity {
                        n,
                        children: children.len(),
                    });
                }
                Ok(EndorsementPolicy::NOutOf { n, children })
            }
            "" => self.err("expected a policy expression"),
            other => self.err(format!("unknown operator '{other}'")),
        }
    }

    fn child_list(&mut self) -> Result<Vec<EndorsementPolicy>, PolicyError> {
        self.eat('(')?;
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            if self.src[self.pos..].starts_with(')') {
                self.pos += 1;
                return Ok(children);
            }
            if !children.is_empty() {
                self.eat(',')?;
            }
            children.push(self.expr()?);
        }
    }
}

pub fn parse_policy(text: &str) -> Result<EndorsementPolicy, PolicyError> {
    let mut p = Parser { src: text, pos: 0 };
    let policy = p.expr()?;
    p.skip_ws();
    if p.pos != text.len() {
        return p.err("trailing input");
    }
    if policy.depth() > MAX_POLICY_DEPTH {
        return Err(PolicyError::TooDeep);
    }
    Ok(policy)
}

/// Evaluate a policy against a set of validated endorsers. Duplicate
/// endorsements from the same identity count once; one identity may satisfy
/// any number of leaves naming its org and role.
pub fn evaluate_policy(policy: &EndorsementPolicy, endorsers: &[ValidatedIdentity]) -> bool {
    let unique: BTreeSet<&ValidatedIdentity> = endorsers.iter().collect();
    eval(policy, &unique)
}

fn eval(policy: &EndorsementPolicy, endorsers: &BTreeSet<&ValidatedIdentity>) -> bool {
    match policy {
        EndorsementPolicy::Signature { org_id, role } => endorsers
            .iter()
            .any(|e| &e.org_id == org_id && &e.role == role),
        EndorsementPolicy::NOutOf { n, children } => {
            let mut satisfied = 0;
            for (i, c) in children.iter().enumerate() {
                if eval(c, endorsers) {
                    satisfied += 1;
                    if satisfied >= *n {
                        return true;
                    }
                }
                // Not enough children left to reach n.
                if satisfied + (children.len() - i - 1) < *n {
                    return false;
                }
            }
            false
        }
    }
}

/// Apply a network-policy update if the approvals satisfy the current
/// channel policy and the version advances by exactly one.
pub fn update_policy(
    current: &NetworkPolicy,
    proposed: NetworkPolicy,
    approvals: &[ValidatedIdentity],
) -> Result<NetworkPolicy, PolicyError> {
    if proposed.version != current.version + 1 {
        return Err(PolicyError::VersionMismatch {
            proposed: proposed.version,
            current: current.version,
        });
    }
    if !evaluate_policy(&current.channel_policy, approvals) {
        return Err(PolicyError::InsufficientApprovals);
    }
    Ok(proposed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vid(org: &str, role: Role) -> ValidatedIdentity {
        ValidatedIdentity {
            subject: format!("x.{org}"),
            org_id: org.to_string(),
            role,
        }
    }

    #[test]
    fn parses_all_of_both_orgs() {
        let p = parse_policy("And(Sig('fishfarm.org.peer'), Sig('sensorsprovider.org.peer'))")
            .unwrap();
        match &p {
            EndorsementPolicy::NOutOf { n, children } => {
                assert_eq!(*n, 2);
                assert_eq!(children.len(), 2);
            }
            _ => panic!("expected NOutOf"),
        }
    }

    #[test]
    fn parses_majority() {
        let p = parse_policy("Majority(Sig('a.peer'), Sig('b.peer'), Sig('c.peer'))").unwrap();
        match &p {
            EndorsementPolicy::NOutOf { n, children } => {
                assert_eq!(*n, 2);
                assert_eq!(children.len(), 3);
            }
            _ => panic!("expected NOutOf"),
        }
    }

    #[test]
    fn out_of_arity_checked() {
        assert!(matches!(
            parse_policy("OutOf(3, Sig('a.peer'))"),
            Err(PolicyError::Arity { n: 3, children: 1 })
        ));
        assert!(matches!(
            parse_policy("OutOf(0, Sig('a.peer'))"),
            Err(PolicyError::Arity { n: 0, children: 1 })
        ));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_policy("And(Sig('a.peer'), Nope('b'))") {
            Err(PolicyError::Syntax { position, .. }) => assert!(position > 0),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn majority_of_two_needs_both() {
        let p = parse_policy("Majority(Sig('a.peer'), Sig('b.peer'))").unwrap();
        assert!(!evaluate_policy(&p, &[vid("a", Role::Peer)]));
        assert!(evaluate_policy(
            &p,
            &[vid("a", Role::Peer), vid("b", Role::Peer)]
        ));
    }

    #[test]
    fn and_of_two() {
        let p = parse_policy("And(Sig('a.peer'), Sig('b.peer'))").unwrap();
        assert!(evaluate_policy(
            &p,
            &[vid("a", Role::Peer), vid("b", Role::Peer)]
        ));
        assert!(!evaluate_policy(&p, &[vid("a", Role::Peer)]));
    }

    #[test]
    fn duplicate_endorsements_count_once() {
        // Two identical endorsements from one identity must not satisfy a
        // policy that genuinely needs two distinct orgs.
        let p = parse_policy("And(Sig('a.peer'), Sig('b.peer'))").unwrap();
        let a = vid("a", Role::Peer);
        assert!(!evaluate_policy(&p, &[a.clone(), a]));
    }

    #[test]
    fn update_policy_version_and_approvals() {
        let channel = parse_policy("And(Sig('a.admin'), Sig('b.admin'))").unwrap();
        let current = NetworkPolicy {
            channel_policy: channel.clone(),
            chaincode_policy: channel.clone(),
            collections: vec![],
            version: 1,
        };
        let mut proposed = current.clone();
        proposed.version = 2;

        let both = [vid("a", Role::Admin), vid("b", Role::Admin)];
        let one = [vid("a", Role::Admin)];

        assert_eq!(
            update_policy(&current, proposed.clone(), &both).unwrap().version,
            2
        );
        assert_eq!(
            update_policy(&current, proposed.clone(), &one),
            Err(PolicyError::InsufficientApprovals)
        );
        let mut same_version = proposed.clone();
        same_version.version = 1;
        assert_eq!(
            update_policy(&current, same_version, &both),
            Err(PolicyError::VersionMismatch {
                proposed: 1,
                current: 1
            })
        );
    }

    // Independent oracle: explicit subset enumeration at every NOutOf node.
    fn oracle_eval(p: &EndorsementPolicy, endorsers: &BTreeSet<&ValidatedIdentity>) -> bool {
        match p {
            EndorsementPolicy::Signature { org_id, role } => endorsers
                .iter()
                .any(|e| &e.org_id == org_id && &e.role == role),
            EndorsementPolicy::NOutOf { n, children } => {
                let k = children.len();
                (0u32..(1 << k)).any(|mask| {
                    let picked: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
                    picked.len() == *n && picked.iter().all(|&i| oracle_eval(&children[i], endorsers))
                })
            }
        }
    }

    fn arb_policy(depth: usize) -> BoxedStrategy<EndorsementPolicy> {
        let orgs = ["orgA", "orgB", "orgC", "orgD"];
        let leaf = (0..orgs.len(), prop_oneof![Just(Role::Peer), Just(Role::Admin)])
            .prop_map(move |(i, role)| EndorsementPolicy::sig(orgs[i], role));
        if depth == 0 {
            return leaf.boxed();
        }
        let inner = arb_policy(depth - 1);
        prop_oneof![
            leaf,
            (1usize..=3, prop::collection::vec(inner, 1..=3)).prop_map(|(n, children)| {
                let n = n.min(children.len());
                EndorsementPolicy::NOutOf { n, children }
            })
        ]
        .boxed()
    }

    proptest! {
        #[test]
        fn matches_subset_enumeration_oracle(policy in arb_policy(3)) {
            let orgs = ["orgA", "orgB", "orgC", "orgD"];
            // All 16 endorser subsets over 4 orgs (all peers).
            for mask in 0u32..16 {
                let endorsers: Vec<ValidatedIdentity> = (0..4)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| vid(orgs[i], Role::Peer))
                    .collect();
                let refs: BTreeSet<&ValidatedIdentity> = endorsers.iter().collect();
                prop_assert_eq!(evaluate_policy(&policy, &endorsers), oracle_eval(&policy, &refs));
            }
        }

        #[test]
        fn monotone_in_endorsers(policy in arb_policy(3), mask in 0u32..16, extra in 0usize..4) {
            let orgs = ["orgA", "orgB", "orgC", "orgD"];
            let endorsers: Vec<ValidatedIdentity> = (0..4)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| vid(orgs[i], Role::Peer))
                .collect();
            let before = evaluate_policy(&policy, &endorsers);
            let mut more = endorsers.clone();
            more.push(vid(orgs[extra], Role::Peer));
            let after = evaluate_policy(&policy, &more);
            prop_assert!(!(before && !after), "adding an endorser flipped true -> false");
        }

        #[test]
        fn print_parse_round_trip(policy in arb_policy(3)) {
            let printed = policy.to_string();
            let back = parse_policy(&printed).unwrap();
            prop_assert_eq!(back, policy);
        }
    }
}
