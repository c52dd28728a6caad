use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};

use super::RoleError;
use crate::abe::codec::Tagged;
use crate::abe::{
    encrypt, generate_window_secrets, master_keygen, user_keygen, AccessPolicy, MasterKey, PublicKey, WindowSecretSet,
    WindowSecrets,
};
use crate::codec::{from_base64, to_base64, CodecError, Reader, Writer};
use crate::group::GroupContext;
use crate::policy::{emit_policy, emit_request, XacmlPolicy};
use crate::wire::Message;

pub const TAG_OWNER_KEYS: u8 = 0x09;

/// Everything an owner must keep to resume a stream: the master key and
/// the per-β blind factors. Never leaves the owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnerKeys {
    pub stream: String,
    pub v_max: u64,
    pub master: MasterKey,
    pub public: PublicKey,
    pub windows: WindowSecretSet,
}

impl OwnerKeys {
    pub fn generate<R: RngCore + CryptoRng>(
        ctx: &GroupContext,
        stream: &str,
        window_sizes: &[u32],
        v_max: u64,
        rng: &mut R,
    ) -> Result<Self, RoleError> {
        if stream.is_empty() {
            return Err(RoleError::Config("stream id must not be empty".into()));
        }
        let (master, public) = master_keygen(ctx, rng);
        let windows = generate_window_secrets(window_sizes, rng)?;
        Ok(OwnerKeys { stream: stream.to_string(), v_max, master, public, windows })
    }

    pub fn window_sizes(&self) -> Vec<u32> {
        self.windows.keys().copied().collect()
    }

    pub fn to_bytes(&self, ctx: &GroupContext) -> Vec<u8> {
        let mut w = Writer::with_header(TAG_OWNER_KEYS, ctx);
        w.str(&self.stream).u64(self.v_max);
        w.bytes(&self.master.to_bytes(ctx)).bytes(&self.public.to_bytes(ctx));
        w.u32(self.windows.len() as u32);
        for ws in self.windows.values() {
            w.bytes(&ws.to_bytes(ctx));
        }
        w.finish()
    }

    pub fn from_bytes(ctx: &GroupContext, bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        r.header(TAG_OWNER_KEYS, ctx)?;
        let stream = r.string()?;
        let v_max = r.u64()?;
        let master = MasterKey::from_bytes(ctx, r.bytes()?)?;
        let public = PublicKey::from_bytes(ctx, r.bytes()?)?;
        let n = r.count(4)?;
        let mut windows = BTreeMap::new();
        for _ in 0..n {
            let ws = WindowSecrets::from_bytes(ctx, r.bytes()?)?;
            if windows.insert(ws.beta(), ws).is_some() {
                return Err(CodecError::Invalid("duplicate window size"));
            }
        }
        r.finish()?;
        Ok(OwnerKeys { stream, v_max, master, public, windows })
    }

    pub fn to_text(&self, ctx: &GroupContext) -> String {
        to_base64(&self.to_bytes(ctx))
    }

    pub fn from_text(ctx: &GroupContext, text: &str) -> Result<Self, CodecError> {
        Self::from_bytes(ctx, &from_base64(text)?)
    }
}

/// Result of agreeing on a policy with one user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Negotiation {
    /// `UploadPolicy` the first time the policy id is used, then `Grant`.
    pub to_cloud: Vec<Message>,
    /// `KeyMaterial`; goes to the user over a channel the cloud never sees.
    pub to_user: Message,
}

/// One data owner publishing one stream.
pub struct OwnerSession<R> {
    ctx: GroupContext,
    keys: OwnerKeys,
    rng: R,
    /// Policies this session has uploaded, by id.
    policies: BTreeMap<String, AccessPolicy>,
    grants: BTreeMap<(String, String), AccessPolicy>,
}

impl<R: RngCore + CryptoRng> OwnerSession<R> {
    /// Generates fresh keys. Blind factors exist for every size in
    /// `window_sizes` before anything is granted or published.
    pub fn new(
        ctx: &GroupContext,
        stream: &str,
        window_sizes: &[u32],
        v_max: u64,
        mut rng: R,
    ) -> Result<Self, RoleError> {
        let keys = OwnerKeys::generate(ctx, stream, window_sizes, v_max, &mut rng)?;
        Ok(Self::from_keys(ctx, keys, rng))
    }

    pub fn from_keys(ctx: &GroupContext, keys: OwnerKeys, rng: R) -> Self {
        OwnerSession { ctx: ctx.clone(), keys, rng, policies: BTreeMap::new(), grants: BTreeMap::new() }
    }

    pub fn keys(&self) -> &OwnerKeys {
        &self.keys
    }

    pub fn stream(&self) -> &str {
        &self.keys.stream
    }

    pub fn v_max(&self) -> u64 {
        self.keys.v_max
    }

    pub fn register_message(&self) -> Message {
        Message::RegisterStream {
            stream: self.keys.stream.clone(),
            public_key: self.keys.public.clone(),
            window_sizes: self.keys.window_sizes(),
        }
    }

    /// Issues keys for `user_id` under `policy`. Each call draws a fresh
    /// `z_u`, so two users of one policy share nothing.
    pub fn negotiate(
        &mut self,
        policy_id: &str,
        user_id: &str,
        policy: AccessPolicy,
    ) -> Result<Negotiation, RoleError> {
        policy.validate()?;
        if let AccessPolicy::Window { beta, .. } = policy {
            if !self.keys.windows.contains_key(&beta) {
                return Err(RoleError::UnsupportedWindow(beta));
            }
        }
        let mut to_cloud = Vec::new();
        match self.policies.get(policy_id) {
            Some(p) if *p != policy => return Err(RoleError::PolicyConflict(policy_id.to_string())),
            Some(_) => {}
            None => {
                let xml = emit_policy(&XacmlPolicy::new(policy_id, &self.keys.stream, policy));
                to_cloud.push(Message::UploadPolicy { xml });
                self.policies.insert(policy_id.to_string(), policy);
            }
        }
        let (tk, uk) = user_keygen(&self.ctx, &self.keys.master, &self.keys.windows, policy, &mut self.rng)?;
        to_cloud.push(Message::Grant { policy_id: policy_id.into(), user_id: user_id.into(), transform_key: tk });
        self.grants.insert((policy_id.to_string(), user_id.to_string()), policy);
        let to_user = Message::KeyMaterial {
            policy_id: policy_id.into(),
            user_id: user_id.into(),
            policy,
            user_key: uk,
            v_max: self.keys.v_max,
        };
        Ok(Negotiation { to_cloud, to_user })
    }

    /// `(policy id, user id)` pairs granted by this session.
    pub fn grants(&self) -> impl Iterator<Item = (&str, &str, &AccessPolicy)> + '_ {
        self.grants.iter().map(|((p, u), a)| (p.as_str(), u.as_str(), a))
    }

    /// Encrypts one tuple and attaches its per-tuple request.
    pub fn publish(&mut self, k: u64, v: u64) -> Result<Message, RoleError> {
        let record = encrypt(&self.ctx, &self.keys.public, &self.keys.windows, self.keys.v_max, k, v, &mut self.rng)?;
        Ok(Message::Ciphertext {
            stream: self.keys.stream.clone(),
            record,
            request_xml: emit_request(&self.keys.stream, k),
        })
    }
}
