//! XACML-subset policy store and decision point.
//!
//! The cloud uses it as a pre-filter: a ciphertext is only transformed for
//! policies that permit its key, so a transform never runs just to return ⊥.

mod store;
mod xml;

use std::fmt;

use crate::abe::{AccessPolicy, CompareOp};

pub use store::{EvalResult, KeyRef, PolicyStore};
pub use xml::{emit_policy, emit_request, parse_policy, parse_request};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyError {
    /// Malformed or out-of-subset document. `line`/`col` are 1-based.
    Parse {
        line: u32,
        col: u32,
        reason: String,
    },
    DuplicatePolicy(String),
    UnknownPolicy(String),
    BadKey(String),
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyError::Parse { line, col, reason } => write!(f, "{line}:{col}: {reason}"),
            PolicyError::DuplicatePolicy(id) => write!(f, "duplicate policy id {id:?}"),
            PolicyError::UnknownPolicy(id) => write!(f, "unknown policy id {id:?}"),
            PolicyError::BadKey(k) => write!(f, "subject attribute k={k:?} is not a u64"),
        }
    }
}

impl std::error::Error for PolicyError {}

/// A policy on one stream: `Permit` iff the condition holds on `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct XacmlPolicy {
    pub id: String,
    pub stream: String,
    /// Kind and parameters; the rule condition is derived from it.
    pub policy: AccessPolicy,
}

impl XacmlPolicy {
    pub fn new(id: impl Into<String>, stream: impl Into<String>, policy: AccessPolicy) -> Self {
        XacmlPolicy { id: id.into(), stream: stream.into(), policy }
    }

    /// `(op, θ)` of the rule: `k ≥ α` for window policies.
    pub fn condition(&self) -> (CompareOp, u64) {
        self.policy.condition()
    }

    /// Single-policy decision.
    pub fn decide(&self, stream: &str, k: u64) -> Decision {
        if stream != self.stream {
            Decision::NotApplicable
        } else if self.policy.admits(k) {
            Decision::Permit
        } else {
            Decision::Deny
        }
    }
}

/// Per-tuple request built by the owner: subject attribute `k`, resource
/// = stream id. `k` is kept as text as it appears in the document.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct XacmlRequest {
    pub stream: String,
    pub k: String,
}

impl XacmlRequest {
    pub fn new(stream: impl Into<String>, k: u64) -> Self {
        XacmlRequest { stream: stream.into(), k: k.to_string() }
    }

    pub fn key(&self) -> Result<u64, PolicyError> {
        self.k.parse().map_err(|_| PolicyError::BadKey(self.k.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Permit,
    Deny,
    NotApplicable,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Permit => "Permit",
            Decision::Deny => "Deny",
            Decision::NotApplicable => "NotApplicable",
        })
    }
}
