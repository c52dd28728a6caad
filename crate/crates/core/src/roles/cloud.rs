use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Mutex, RwLock};

use super::accumulator::{FlushedWindow, WindowAccumulator};
use super::RoleError;
use crate::abe::codec::Tagged;
use crate::abe::{transform, AccessPolicy, CiphertextRecord, PublicKey, TransformKey, TransformedCiphertext};
use crate::group::GroupContext;
use crate::policy::{emit_policy, parse_policy, parse_request, Decision, KeyRef, PolicyStore};
use crate::wire::Message;

/// A message the cloud pushes to one user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub user_id: String,
    pub message: Message,
}

/// Outcome of one inbound message.
#[derive(Debug, Default)]
pub struct Handled {
    pub deliveries: Vec<Delivery>,
    /// Per-policy failures that did not stop the rest of the message, such
    /// as a window key arriving more than one window ahead.
    pub rejected: Vec<RoleError>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CloudStats {
    pub ciphertexts: u64,
    pub transforms: u64,
    pub pairings: u64,
    /// Transforms that returned ⊥ after a Permit: the pre-filter and the
    /// access tree disagree. Always 0 unless something is broken.
    pub inconsistencies: u64,
    pub denied: u64,
    pub trigger_deliveries: u64,
    pub window_deliveries: u64,
    pub rejected: u64,
    pub dropped_windows: u64,
}

#[derive(Debug, Default)]
struct Counters {
    ciphertexts: AtomicU64,
    transforms: AtomicU64,
    pairings: AtomicU64,
    inconsistencies: AtomicU64,
    denied: AtomicU64,
    trigger_deliveries: AtomicU64,
    window_deliveries: AtomicU64,
    rejected: AtomicU64,
    dropped_windows: AtomicU64,
}

fn bump(c: &AtomicU64, n: u64) {
    c.fetch_add(n, Ordering::Relaxed);
}

/// Everything the cloud holds, flattened for inspection. Text entries are
/// documents and identifiers; binary entries are serialized keys and
/// buffered ciphertexts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CloudStateDump {
    pub text: Vec<(String, String)>,
    pub binary: Vec<(String, Vec<u8>)>,
}

impl CloudStateDump {
    pub fn total_bytes(&self) -> usize {
        self.text.iter().map(|(_, t)| t.len()).sum::<usize>() + self.binary.iter().map(|(_, b)| b.len()).sum::<usize>()
    }
}

#[derive(Debug, Clone)]
struct StreamEntry {
    public_key: PublicKey,
    window_sizes: Vec<u32>,
}

type AccKey = (String, String);

/// The honest-but-curious relay: policy store, transform-key registry,
/// window accumulators and subscriber lists.
///
/// By construction it never holds `z_u`, `σ`, the master key or any
/// plaintext: none of the messages it accepts carry them.
pub struct CloudService {
    ctx: GroupContext,
    streams: RwLock<BTreeMap<String, StreamEntry>>,
    store: RwLock<PolicyStore>,
    keys: RwLock<BTreeMap<(String, String), Arc<TransformKey>>>,
    subscribers: RwLock<BTreeMap<String, BTreeSet<String>>>,
    accumulators: Mutex<BTreeMap<AccKey, Arc<Mutex<WindowAccumulator>>>>,
    stall_timeout: Option<Duration>,
    counters: Counters,
}

impl CloudService {
    pub fn new(ctx: &GroupContext) -> Self {
        CloudService {
            ctx: ctx.clone(),
            streams: RwLock::default(),
            store: RwLock::default(),
            keys: RwLock::default(),
            subscribers: RwLock::default(),
            accumulators: Mutex::default(),
            stall_timeout: None,
            counters: Counters::default(),
        }
    }

    /// Drops a window once its oldest buffered entry is this old. Off by
    /// default: a gap then stalls its policy's windows forever.
    pub fn with_stall_timeout(mut self, timeout: Option<Duration>) -> Self {
        self.stall_timeout = timeout;
        self
    }

    pub fn context(&self) -> &GroupContext {
        &self.ctx
    }

    pub fn stats(&self) -> CloudStats {
        let c = &self.counters;
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        CloudStats {
            ciphertexts: get(&c.ciphertexts),
            transforms: get(&c.transforms),
            pairings: get(&c.pairings),
            inconsistencies: get(&c.inconsistencies),
            denied: get(&c.denied),
            trigger_deliveries: get(&c.trigger_deliveries),
            window_deliveries: get(&c.window_deliveries),
            rejected: get(&c.rejected),
            dropped_windows: get(&c.dropped_windows),
        }
    }

    pub fn grant_count(&self) -> usize {
        self.keys.read().len()
    }

    pub fn subscription_count(&self) -> usize {
        self.subscribers.read().values().map(BTreeSet::len).sum()
    }

    pub fn stream_count(&self) -> usize {
        self.streams.read().len()
    }

    /// Processes one inbound message. Errors refer to the message as a
    /// whole; partial failures are listed in [`Handled::rejected`].
    pub fn handle(&self, m: Message) -> Result<Handled, RoleError> {
        match m {
            Message::RegisterStream { stream, public_key, window_sizes } => {
                self.register_stream(stream, public_key, window_sizes)?;
                Ok(Handled::default())
            }
            Message::UploadPolicy { xml } => {
                self.upload_policy(&xml)?;
                Ok(Handled::default())
            }
            Message::Grant { policy_id, user_id, transform_key } => {
                self.grant(policy_id, user_id, transform_key)?;
                Ok(Handled::default())
            }
            Message::Subscribe { user_id, policy_id } => {
                self.subscribe(user_id, policy_id)?;
                Ok(Handled::default())
            }
            Message::Ciphertext { stream, record, request_xml } => self.ingest(&stream, &record, &request_xml),
            other => Err(RoleError::UnexpectedMessage(other.name())),
        }
    }

    fn register_stream(&self, stream: String, public_key: PublicKey, window_sizes: Vec<u32>) -> Result<(), RoleError> {
        let mut streams = self.streams.write();
        if let Some(existing) = streams.get(&stream) {
            if existing.public_key == public_key && existing.window_sizes == window_sizes {
                return Ok(());
            }
            return Err(RoleError::StreamConflict(stream));
        }
        if window_sizes.contains(&0) || window_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RoleError::Inconsistent("window sizes must be positive and ascending"));
        }
        log::info!("stream {stream:?} registered with window sizes {window_sizes:?}");
        streams.insert(stream, StreamEntry { public_key, window_sizes });
        Ok(())
    }

    /// Re-uploading an identical policy is a no-op.
    fn upload_policy(&self, xml: &str) -> Result<(), RoleError> {
        let p = parse_policy(xml)?;
        let streams = self.streams.read();
        let entry = streams.get(&p.stream).ok_or_else(|| RoleError::UnknownStream(p.stream.clone()))?;
        if let AccessPolicy::Window { beta, .. } = p.policy {
            if !entry.window_sizes.contains(&beta) {
                return Err(RoleError::UnsupportedWindow(beta));
            }
        }
        let mut store = self.store.write();
        match store.policy(&p.id) {
            Some(existing) if *existing == p => return Ok(()),
            Some(_) => return Err(RoleError::PolicyConflict(p.id)),
            None => {}
        }
        if let AccessPolicy::Window { alpha, beta } = p.policy {
            self.accumulators
                .lock()
                .insert((p.stream.clone(), p.id.clone()), Arc::new(Mutex::new(WindowAccumulator::new(alpha, beta))));
        }
        log::info!("policy {:?} on {:?}: {}", p.id, p.stream, p.policy);
        store.register_policy(p)?;
        Ok(())
    }

    fn grant(&self, policy_id: String, user_id: String, tk: TransformKey) -> Result<(), RoleError> {
        let mut store = self.store.write();
        let p = store.policy(&policy_id).ok_or_else(|| RoleError::UnknownPolicy(policy_id.clone()))?;
        if *tk.policy() != p.policy {
            return Err(RoleError::Inconsistent("transform key was issued for a different policy"));
        }
        let tree = p.policy.tree()?;
        if tree.to_expr() != tk.tree().to_expr() {
            return Err(RoleError::Inconsistent("transform key tree does not encode its policy"));
        }
        store.register_grant(&policy_id, &user_id, KeyRef(format!("{policy_id}/{user_id}")))?;
        self.keys.write().insert((policy_id, user_id), Arc::new(tk));
        Ok(())
    }

    fn subscribe(&self, user_id: String, policy_id: String) -> Result<(), RoleError> {
        if !self.keys.read().contains_key(&(policy_id.clone(), user_id.clone())) {
            return Err(RoleError::NotGranted { user: user_id, policy: policy_id });
        }
        self.subscribers.write().entry(policy_id).or_default().insert(user_id);
        Ok(())
    }

    fn ingest(&self, stream: &str, record: &CiphertextRecord, request_xml: &str) -> Result<Handled, RoleError> {
        {
            let streams = self.streams.read();
            let entry = streams.get(stream).ok_or_else(|| RoleError::UnknownStream(stream.to_string()))?;
            if !record.window_sizes().eq(entry.window_sizes.iter().copied()) {
                return Err(RoleError::Inconsistent("ciphertext window sizes differ from the stream's"));
            }
        }
        let req = parse_request(request_xml)?;
        if req.stream != stream || req.key()? != record.k {
            return Err(RoleError::Inconsistent("request does not describe this ciphertext"));
        }
        bump(&self.counters.ciphertexts, 1);
        let verdicts = self.store.read().evaluate(&req)?;
        let mut out = Handled::default();
        for v in verdicts {
            match v.decision {
                Decision::Permit => {}
                Decision::Deny => {
                    bump(&self.counters.denied, 1);
                    continue;
                }
                Decision::NotApplicable => continue,
            }
            let policy = match self.store.read().policy(&v.policy_id) {
                Some(p) => p.policy,
                None => continue,
            };
            let users: Vec<String> = {
                let subs = self.subscribers.read();
                let subscribed = subs.get(&v.policy_id);
                v.users.into_iter().filter(|u| subscribed.is_some_and(|s| s.contains(u))).collect()
            };
            let transformed = self.transform_for(&v.policy_id, &users, record)?;
            match policy {
                AccessPolicy::Trigger { .. } => {
                    for (user_id, tc) in transformed {
                        bump(&self.counters.trigger_deliveries, 1);
                        out.deliveries.push(Delivery {
                            user_id,
                            message: Message::TriggerDelivery {
                                policy_id: v.policy_id.clone(),
                                k: tc.k,
                                body: tc.body,
                                proof_part: tc.proof_part,
                            },
                        });
                    }
                }
                AccessPolicy::Window { .. } => {
                    if let Err(e) = self.accumulate(stream, &v.policy_id, record.k, transformed, &mut out.deliveries) {
                        log::warn!("policy {:?}, key {}: {e}", v.policy_id, record.k);
                        bump(&self.counters.rejected, 1);
                        out.rejected.push(e);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Runs one transform per user, outside any accumulator lock.
    fn transform_for(
        &self,
        policy_id: &str,
        users: &[String],
        record: &CiphertextRecord,
    ) -> Result<Vec<(String, TransformedCiphertext)>, RoleError> {
        let mut out = Vec::with_capacity(users.len());
        for user in users {
            let Some(tk) = self.keys.read().get(&(policy_id.to_string(), user.clone())).cloned() else {
                continue;
            };
            let outcome = transform(&self.ctx, &tk, record)?;
            bump(&self.counters.transforms, 1);
            bump(&self.counters.pairings, outcome.pairings as u64);
            match outcome.transformed {
                Some(tc) => out.push((user.clone(), tc)),
                None => {
                    bump(&self.counters.inconsistencies, 1);
                    log::error!("transform returned ⊥ for key {} under permitted policy {policy_id:?}", record.k);
                }
            }
        }
        Ok(out)
    }

    /// Inserts and flushes under the accumulator's lock, so the deliveries
    /// of a window are fixed by the insertion that completes it.
    fn accumulate(
        &self,
        stream: &str,
        policy_id: &str,
        k: u64,
        transformed: Vec<(String, TransformedCiphertext)>,
        deliveries: &mut Vec<Delivery>,
    ) -> Result<(), RoleError> {
        let acc = self.accumulators.lock().get(&(stream.to_string(), policy_id.to_string())).cloned();
        let Some(acc) = acc else { return Ok(()) };
        let mut acc = acc.lock();
        let now = Instant::now();
        let mut flushed: Vec<FlushedWindow> = Vec::new();
        if let Some(timeout) = self.stall_timeout {
            let (dropped, done) = acc.expire_stalled(now, timeout)?;
            if !dropped.is_empty() {
                log::warn!("policy {policy_id:?}: dropped stalled windows {dropped:?}");
                bump(&self.counters.dropped_windows, dropped.len() as u64);
            }
            flushed.extend(done);
        }
        let result = acc.insert(k, transformed, now);
        if let Ok(done) = &result {
            flushed.extend(done.iter().cloned());
        }
        for w in flushed {
            for (user_id, sum) in w.sums {
                bump(&self.counters.window_deliveries, 1);
                deliveries.push(Delivery {
                    user_id,
                    message: Message::WindowDelivery {
                        policy_id: policy_id.to_string(),
                        index: sum.index,
                        e1: sum.e1,
                        e2: sum.e2,
                    },
                });
            }
        }
        result.map(|_| ()).map_err(Into::into)
    }

    /// Flattened copy of every piece of state, in a deterministic order.
    pub fn state_dump(&self) -> CloudStateDump {
        let ctx = &self.ctx;
        let mut d = CloudStateDump::default();
        for (id, s) in self.streams.read().iter() {
            d.binary.push((format!("stream/{id}/public_key"), s.public_key.to_bytes(ctx)));
            let sizes: Vec<String> = s.window_sizes.iter().map(u32::to_string).collect();
            d.text.push((format!("stream/{id}/window_sizes"), sizes.join(",")));
        }
        let store = self.store.read();
        let mut policies: Vec<_> = store.policies().collect();
        policies.sort_by(|a, b| a.id.cmp(&b.id));
        for p in policies {
            d.text.push((format!("policy/{}", p.id), emit_policy(p)));
            for (user, key_ref) in store.grants(&p.id).into_iter().flatten() {
                d.text.push((format!("grant/{}/{user}", p.id), key_ref.0.clone()));
            }
        }
        for ((policy, user), tk) in self.keys.read().iter() {
            d.binary.push((format!("transform_key/{policy}/{user}"), tk.to_bytes(ctx)));
        }
        for (policy, users) in self.subscribers.read().iter() {
            let users: Vec<&str> = users.iter().map(String::as_str).collect();
            d.text.push((format!("subscribers/{policy}"), users.join(",")));
        }
        for ((stream, policy), acc) in self.accumulators.lock().iter() {
            let acc = acc.lock();
            d.text.push((format!("window/{stream}/{policy}/next"), acc.next_index().to_string()));
            for (k, user, tc) in acc.buffered() {
                d.binary.push((format!("window/{stream}/{policy}/{k}/{user}"), tc.to_bytes(ctx)));
            }
        }
        d
    }
}
