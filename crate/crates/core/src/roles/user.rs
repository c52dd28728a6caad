use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use parking_lot::Mutex;

use super::RoleError;
use crate::abe::{
    decrypt_trigger, decrypt_window, AbeError, AccessPolicy, BodySource, DlogTable, TransformedCiphertext, UserKey,
    DEFAULT_TABLE_CAP,
};
use crate::group::GroupContext;
use crate::wire::Message;

/// Largest plaintext a client must recognise: `v_max` for a trigger
/// policy, `β·v_max` for a window sum.
pub fn required_table_size(policy: &AccessPolicy, v_max: u64) -> Result<u64, AbeError> {
    match *policy {
        AccessPolicy::Trigger { .. } => Ok(v_max),
        AccessPolicy::Window { beta, .. } => {
            (beta as u64).checked_mul(v_max).ok_or(AbeError::TableTooLarge { max: u64::MAX, cap: DEFAULT_TABLE_CAP })
        }
    }
}

/// Discrete-log tables shared between clients, keyed by size.
#[derive(Clone)]
pub struct TableCache {
    ctx: GroupContext,
    cap: u64,
    tables: Arc<Mutex<HashMap<u64, Arc<DlogTable>>>>,
}

impl TableCache {
    pub fn new(ctx: &GroupContext) -> Self {
        Self::with_cap(ctx, DEFAULT_TABLE_CAP)
    }

    pub fn with_cap(ctx: &GroupContext, cap: u64) -> Self {
        TableCache { ctx: ctx.clone(), cap, tables: Arc::default() }
    }

    pub fn get(&self, max: u64) -> Result<Arc<DlogTable>, AbeError> {
        let mut tables = self.tables.lock();
        if let Some(t) = tables.get(&max) {
            return Ok(t.clone());
        }
        let t = Arc::new(DlogTable::build_with_cap(&self.ctx, max, self.cap)?);
        tables.insert(max, t.clone());
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UserEvent {
    /// A trigger delivery: the tuple's value.
    Value { k: u64, v: u64 },
    /// A window delivery: the average is `sum / count`.
    Average { index: u64, sum: u64, count: u32 },
    /// The delivery did not decrypt under this key; `at` is the tuple key
    /// or window index.
    AuthorizationFailure { at: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserOutput {
    pub user_id: String,
    pub policy_id: String,
    pub event: UserEvent,
}

/// Decrypts deliveries for one `(user, policy)`.
///
/// Decryption is stateless: the same delivery always yields the same event.
pub struct UserClient {
    ctx: GroupContext,
    user_id: String,
    policy_id: String,
    policy: AccessPolicy,
    key: UserKey,
    table: Arc<DlogTable>,
}

impl UserClient {
    /// Builds the client and its table up front, so no delivery waits on
    /// table construction.
    pub fn new(
        ctx: &GroupContext,
        user_id: &str,
        policy_id: &str,
        policy: AccessPolicy,
        key: UserKey,
        v_max: u64,
        tables: &TableCache,
    ) -> Result<Self, RoleError> {
        match (policy, key.window()) {
            (AccessPolicy::Trigger { .. }, None) => {}
            (AccessPolicy::Window { alpha, beta }, Some(w)) if w.alpha == alpha && w.beta == beta => {}
            _ => return Err(AbeError::MalformedKey("user key does not match the policy").into()),
        }
        let table = tables.get(required_table_size(&policy, v_max)?)?;
        Ok(UserClient {
            ctx: ctx.clone(),
            user_id: user_id.to_string(),
            policy_id: policy_id.to_string(),
            policy,
            key,
            table,
        })
    }

    pub fn from_key_material(ctx: &GroupContext, m: &Message, tables: &TableCache) -> Result<Self, RoleError> {
        match m {
            Message::KeyMaterial { policy_id, user_id, policy, user_key, v_max } => {
                Self::new(ctx, user_id, policy_id, *policy, *user_key, *v_max, tables)
            }
            other => Err(RoleError::UnexpectedMessage(other.name())),
        }
    }

    pub fn policy_id(&self) -> &str {
        &self.policy_id
    }

    pub fn policy(&self) -> &AccessPolicy {
        &self.policy
    }

    pub fn table_len(&self) -> usize {
        self.table.len()
    }

    pub fn subscribe_message(&self) -> Message {
        Message::Subscribe { user_id: self.user_id.clone(), policy_id: self.policy_id.clone() }
    }

    pub fn receive(&self, m: &Message) -> Result<UserEvent, RoleError> {
        match (m, &self.policy) {
            (Message::TriggerDelivery { policy_id, k, body, proof_part }, AccessPolicy::Trigger { .. })
                if *policy_id == self.policy_id =>
            {
                let t =
                    TransformedCiphertext { k: *k, body: *body, proof_part: *proof_part, source: BodySource::Trigger };
                match decrypt_trigger(&self.key, &t, &self.table) {
                    Ok(v) => Ok(UserEvent::Value { k: *k, v }),
                    Err(AbeError::TableMiss) => Ok(UserEvent::AuthorizationFailure { at: *k }),
                    Err(e) => Err(e.into()),
                }
            }
            (Message::WindowDelivery { policy_id, index, e1, e2 }, AccessPolicy::Window { .. })
                if *policy_id == self.policy_id =>
            {
                match decrypt_window(&self.ctx, &self.key, *index, *e1, *e2, &self.table) {
                    Ok(a) => Ok(UserEvent::Average { index: a.index, sum: a.sum, count: a.count }),
                    Err(AbeError::TableMiss) => Ok(UserEvent::AuthorizationFailure { at: *index }),
                    Err(e) => Err(e.into()),
                }
            }
            (other, _) => Err(RoleError::UnexpectedMessage(other.name())),
        }
    }
}

/// All of one user's clients, routed by policy id.
pub struct UserAgent {
    ctx: GroupContext,
    user_id: String,
    tables: TableCache,
    clients: BTreeMap<String, UserClient>,
}

impl UserAgent {
    pub fn new(ctx: &GroupContext, user_id: &str, tables: TableCache) -> Self {
        UserAgent { ctx: ctx.clone(), user_id: user_id.to_string(), tables, clients: BTreeMap::new() }
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn clients(&self) -> impl Iterator<Item = &UserClient> {
        self.clients.values()
    }

    pub fn subscribe_messages(&self) -> Vec<Message> {
        self.clients.values().map(UserClient::subscribe_message).collect()
    }

    /// Installs key material, or decrypts a delivery into an output.
    pub fn receive(&mut self, m: &Message) -> Result<Option<UserOutput>, RoleError> {
        let policy_id = match m {
            Message::KeyMaterial { user_id, policy_id, .. } => {
                if *user_id != self.user_id {
                    return Err(RoleError::Inconsistent("key material addressed to another user"));
                }
                let client = UserClient::from_key_material(&self.ctx, m, &self.tables)?;
                self.clients.insert(policy_id.clone(), client);
                return Ok(None);
            }
            Message::TriggerDelivery { policy_id, .. } | Message::WindowDelivery { policy_id, .. } => policy_id,
            Message::Error { code, text } => return Err(RoleError::Remote { code: *code, text: text.clone() }),
            other => return Err(RoleError::UnexpectedMessage(other.name())),
        };
        let client = self.clients.get(policy_id).ok_or_else(|| RoleError::UnknownPolicy(policy_id.clone()))?;
        let event = client.receive(m)?;
        Ok(Some(UserOutput { user_id: self.user_id.clone(), policy_id: policy_id.clone(), event }))
    }
}
