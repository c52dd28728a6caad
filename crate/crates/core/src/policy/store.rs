use std::collections::{BTreeMap, HashMap};

use super::{Decision, PolicyError, XacmlPolicy, XacmlRequest};

/// Handle to a transform key held by the cloud's key registry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyRef(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalResult {
    pub policy_id: String,
    pub decision: Decision,
    /// Granted users, ascending; empty unless `decision` is `Permit`.
    pub users: Vec<String>,
}

/// A policy together with its grant table, so evaluation touches one entry
/// per policy.
#[derive(Debug, Clone)]
struct Entry {
    policy: XacmlPolicy,
    grants: BTreeMap<String, KeyRef>,
}

/// Policies bucketed by stream, each carrying its grants.
///
/// Not internally synchronised: the cloud wraps it in a reader/writer lock,
/// and `evaluate` takes `&self`.
#[derive(Debug, Default, Clone)]
pub struct PolicyStore {
    streams: HashMap<String, BTreeMap<String, Entry>>,
    stream_of: HashMap<String, String>,
}

impl PolicyStore {
    pub fn new() -> Self {
        PolicyStore::default()
    }

    pub fn register_policy(&mut self, p: XacmlPolicy) -> Result<(), PolicyError> {
        if self.stream_of.contains_key(&p.id) {
            return Err(PolicyError::DuplicatePolicy(p.id));
        }
        self.stream_of.insert(p.id.clone(), p.stream.clone());
        let entry = Entry { policy: p, grants: BTreeMap::new() };
        self.streams.entry(entry.policy.stream.clone()).or_default().insert(entry.policy.id.clone(), entry);
        Ok(())
    }

    fn entry(&self, id: &str) -> Option<&Entry> {
        let stream = self.stream_of.get(id)?;
        self.streams.get(stream)?.get(id)
    }

    /// Re-granting the same user replaces the key reference.
    pub fn register_grant(&mut self, policy_id: &str, user: &str, key: KeyRef) -> Result<(), PolicyError> {
        let unknown = || PolicyError::UnknownPolicy(policy_id.to_string());
        let stream = self.stream_of.get(policy_id).ok_or_else(unknown)?;
        let entry = self.streams.get_mut(stream).and_then(|b| b.get_mut(policy_id)).ok_or_else(unknown)?;
        entry.grants.insert(user.to_string(), key);
        Ok(())
    }

    pub fn policy(&self, id: &str) -> Option<&XacmlPolicy> {
        self.entry(id).map(|e| &e.policy)
    }

    pub fn policies(&self) -> impl Iterator<Item = &XacmlPolicy> {
        self.streams.values().flat_map(|b| b.values().map(|e| &e.policy))
    }

    pub fn len(&self) -> usize {
        self.stream_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stream_of.is_empty()
    }

    pub fn grants(&self, policy_id: &str) -> Option<&BTreeMap<String, KeyRef>> {
        self.entry(policy_id).map(|e| &e.grants)
    }

    /// Verdicts for every policy on the request's stream, by ascending id.
    /// Policies on other streams are not applicable and are omitted.
    pub fn evaluate(&self, req: &XacmlRequest) -> Result<Vec<EvalResult>, PolicyError> {
        let k = req.key()?;
        let Some(bucket) = self.streams.get(&req.stream) else {
            return Ok(Vec::new());
        };
        Ok(bucket
            .values()
            .map(|e| {
                let decision = e.policy.decide(&req.stream, k);
                let users = match decision {
                    Decision::Permit => e.grants.keys().cloned().collect(),
                    _ => Vec::new(),
                };
                EvalResult { policy_id: e.policy.id.clone(), decision, users }
            })
            .collect())
    }
}
