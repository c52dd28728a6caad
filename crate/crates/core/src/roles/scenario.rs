//! Declarative scenarios and the runner used by tests, the CLI and the
//! acceptance suite.
//!
//! ```toml
//! seed = "demo"                 # group context and all randomness
//! v_max = 1000
//! transport = "memory"          # or "tcp"
//! listen = "127.0.0.1:0"        # tcp only
//! stall_timeout_ms = 5000       # optional; off when absent
//!
//! [[streams]]
//! id = "temperature"
//! window_sizes = [5]
//! tuples = 100                  # keys start_key .. start_key + tuples
//! start_key = 0
//! skip_keys = [42]              # never published
//! generator = { kind = "uniform" }   # or constant { value }, sentinel { values }
//!
//! [[policies]]
//! id = "avg5"
//! stream = "temperature"
//! policy = "window:9,5"         # or eq:θ, ge:θ, gt:θ, le:θ, lt:θ
//!
//! [[users]]
//! id = "alice"
//! policies = ["avg5"]
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{
    CloudServer, CloudService, CloudStateDump, CloudStats, OwnerSession, RoleError, TableCache, UserAgent, UserEvent,
    UserOutput,
};
use crate::abe::AccessPolicy;
use crate::group::{Backend, GroupContext};
use crate::wire::{decode, encode, tcp, Message, WireError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    #[default]
    Memory,
    Tcp,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Generator {
    /// Uniform on `[0, v_max]`.
    Uniform,
    Constant {
        value: u64,
    },
    /// Cycles through `values`; used to look for plaintext leaks.
    Sentinel {
        values: Vec<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    pub id: String,
    #[serde(default)]
    pub window_sizes: Vec<u32>,
    pub tuples: u64,
    #[serde(default)]
    pub start_key: u64,
    #[serde(default)]
    pub skip_keys: BTreeSet<u64>,
    pub generator: Generator,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub id: String,
    pub stream: String,
    pub policy: String,
}

impl PolicyConfig {
    pub fn access_policy(&self) -> Result<AccessPolicy, RoleError> {
        self.policy.parse().map_err(|e| RoleError::Config(format!("policy {:?}: {e}", self.id)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub id: String,
    pub policies: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: String,
    #[serde(default = "default_backend")]
    pub backend: String,
    pub v_max: u64,
    #[serde(default)]
    pub transport: Transport,
    #[serde(default = "default_listen")]
    pub listen: String,
    pub stall_timeout_ms: Option<u64>,
    pub streams: Vec<StreamConfig>,
    #[serde(default)]
    pub policies: Vec<PolicyConfig>,
    #[serde(default)]
    pub users: Vec<UserConfig>,
}

fn default_backend() -> String {
    Backend::Transparent.as_str().to_string()
}

fn default_listen() -> String {
    "127.0.0.1:0".to_string()
}

fn derive_rng(label: &str, seed: &str, id: &str) -> ChaCha20Rng {
    let digest = Sha256::new()
        .chain_update(b"streamac/")
        .chain_update(label.as_bytes())
        .chain_update([0])
        .chain_update(seed.as_bytes())
        .chain_update([0])
        .chain_update(id.as_bytes())
        .finalize();
    ChaCha20Rng::from_seed(digest.into())
}

impl StreamConfig {
    /// The `(k, v)` tuples this stream publishes, in order.
    pub fn tuples(&self, seed: &str, v_max: u64) -> Vec<(u64, u64)> {
        let mut rng = derive_rng("generator", seed, &self.id);
        let end = self.start_key.saturating_add(self.tuples);
        (self.start_key..end)
            .filter(|k| !self.skip_keys.contains(k))
            .enumerate()
            .map(|(n, k)| {
                let v = match &self.generator {
                    Generator::Uniform => rng.random_range(0..=v_max),
                    Generator::Constant { value } => *value,
                    Generator::Sentinel { values } => values[n % values.len()],
                };
                (k, v)
            })
            .collect()
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, RoleError> {
        let s: Scenario = toml::from_str(text).map_err(|e| RoleError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn context(&self) -> Result<GroupContext, RoleError> {
        let backend: Backend = self.backend.parse().map_err(|e| RoleError::Config(format!("{e}")))?;
        GroupContext::setup(backend, self.seed.as_bytes()).map_err(|e| RoleError::Config(e.to_string()))
    }

    pub fn stall_timeout(&self) -> Option<Duration> {
        self.stall_timeout_ms.map(Duration::from_millis)
    }

    pub fn validate(&self) -> Result<(), RoleError> {
        let bad = |msg: String| Err(RoleError::Config(msg));
        if self.seed.is_empty() {
            return bad("seed must not be empty".into());
        }
        let mut streams = BTreeMap::new();
        for s in &self.streams {
            if s.id.is_empty() || streams.insert(s.id.as_str(), s).is_some() {
                return bad(format!("stream id {:?} is empty or repeated", s.id));
            }
            match &s.generator {
                Generator::Constant { value } if *value > self.v_max => {
                    return bad(format!("stream {:?}: constant {value} exceeds v_max", s.id));
                }
                Generator::Sentinel { values } if values.is_empty() || values.iter().any(|v| *v > self.v_max) => {
                    return bad(format!("stream {:?}: sentinel values must be non-empty and <= v_max", s.id));
                }
                _ => {}
            }
            if s.window_sizes.contains(&0) {
                return bad(format!("stream {:?}: window size 0", s.id));
            }
        }
        let mut policies = BTreeMap::new();
        for p in &self.policies {
            let stream = streams
                .get(p.stream.as_str())
                .ok_or_else(|| RoleError::Config(format!("policy {:?}: unknown stream {:?}", p.id, p.stream)))?;
            if let AccessPolicy::Window { beta, .. } = p.access_policy()? {
                if !stream.window_sizes.contains(&beta) {
                    return bad(format!("policy {:?}: stream {:?} has no window size {beta}", p.id, p.stream));
                }
            }
            if policies.insert(p.id.as_str(), p).is_some() {
                return bad(format!("policy id {:?} repeated", p.id));
            }
        }
        let mut users = BTreeSet::new();
        for u in &self.users {
            if !users.insert(u.id.as_str()) {
                return bad(format!("user id {:?} repeated", u.id));
            }
            for p in &u.policies {
                if !policies.contains_key(p.as_str()) {
                    return bad(format!("user {:?}: unknown policy {p:?}", u.id));
                }
            }
        }
        Ok(())
    }

    fn policy(&self, id: &str) -> &PolicyConfig {
        self.policies.iter().find(|p| p.id == id).expect("validated")
    }

    /// `(user, policy)` pairs in configuration order.
    pub fn subscriptions(&self) -> impl Iterator<Item = (&str, &PolicyConfig)> + '_ {
        self.users.iter().flat_map(move |u| u.policies.iter().map(move |p| (u.id.as_str(), self.policy(p))))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    Owner(String),
    Cloud,
    User(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub from: Party,
    pub to: Party,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub frames: Vec<FrameRecord>,
    pub outputs: Vec<UserOutput>,
    /// Texts of `Error` messages the cloud sent back to owners.
    pub errors: Vec<String>,
    pub cloud_state: CloudStateDump,
    pub stats: CloudStats,
}

impl Transcript {
    /// Events per `(user, policy)`, each list in delivery order.
    pub fn outputs_by_subscription(&self) -> BTreeMap<(String, String), Vec<UserEvent>> {
        group_outputs(&self.outputs)
    }

    pub fn frames_from(&self, from: &Party) -> impl Iterator<Item = &FrameRecord> + '_ {
        let from = from.clone();
        self.frames.iter().filter(move |f| f.from == from)
    }

    /// SHA-256 over every frame and output, for comparing runs.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for f in &self.frames {
            h.update(format!("{:?}>{:?}:", f.from, f.to).as_bytes());
            h.update((f.bytes.len() as u64).to_be_bytes());
            h.update(&f.bytes);
        }
        for o in &self.outputs {
            h.update(format!("{o:?}").as_bytes());
        }
        h.finalize().into()
    }
}

pub fn group_outputs(outputs: &[UserOutput]) -> BTreeMap<(String, String), Vec<UserEvent>> {
    let mut map: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for o in outputs {
        map.entry((o.user_id.clone(), o.policy_id.clone())).or_default().push(o.event);
    }
    map
}

/// What each subscription should see, computed on plaintexts alone.
///
/// Windows are emitted in order up to the first one with a missing key;
/// that window stalls and nothing after it completes (no stall timeout).
pub fn plaintext_oracle(s: &Scenario) -> BTreeMap<(String, String), Vec<UserEvent>> {
    let tuples: BTreeMap<&str, Vec<(u64, u64)>> =
        s.streams.iter().map(|st| (st.id.as_str(), st.tuples(&s.seed, s.v_max))).collect();
    let mut out = BTreeMap::new();
    for (user, p) in s.subscriptions() {
        let data = &tuples[p.stream.as_str()];
        let events: Vec<UserEvent> = match p.access_policy().expect("validated") {
            policy @ AccessPolicy::Trigger { .. } => {
                data.iter().filter(|(k, _)| policy.admits(*k)).map(|&(k, v)| UserEvent::Value { k, v }).collect()
            }
            AccessPolicy::Window { alpha, beta } => {
                let values: BTreeMap<u64, u64> = data.iter().copied().collect();
                let mut events = Vec::new();
                for index in 0u64.. {
                    let start = alpha + index * beta as u64;
                    let window: Option<Vec<u64>> =
                        (start..start + beta as u64).map(|k| values.get(&k).copied()).collect();
                    match window {
                        Some(w) => events.push(UserEvent::Average { index, sum: w.iter().sum(), count: beta }),
                        None => break,
                    }
                }
                events
            }
        };
        if !events.is_empty() {
            out.insert((user.to_string(), p.id.clone()), events);
        }
    }
    out
}

fn frame_bytes(ctx: &GroupContext, m: &Message) -> Vec<u8> {
    let payload = encode(ctx, m);
    let mut frame = (payload.len() as u32).to_be_bytes().to_vec();
    frame.extend_from_slice(&payload);
    frame
}

/// Records a frame and decodes it again, as the receiving side would.
fn relay(
    ctx: &GroupContext,
    frames: &mut Vec<FrameRecord>,
    from: Party,
    to: Party,
    m: &Message,
) -> Result<Message, RoleError> {
    let bytes = frame_bytes(ctx, m);
    let decoded = decode(ctx, &bytes[4..])?;
    frames.push(FrameRecord { from, to, bytes });
    Ok(decoded)
}

struct Setup {
    ctx: GroupContext,
    owners: BTreeMap<String, OwnerSession<ChaCha20Rng>>,
    agents: BTreeMap<String, UserAgent>,
}

fn new_setup(s: &Scenario) -> Result<Setup, RoleError> {
    s.validate()?;
    let ctx = s.context()?;
    let mut owners = BTreeMap::new();
    for st in &s.streams {
        let rng = derive_rng("owner", &s.seed, &st.id);
        owners.insert(st.id.clone(), OwnerSession::new(&ctx, &st.id, &st.window_sizes, s.v_max, rng)?);
    }
    let tables = TableCache::new(&ctx);
    let agents = s.users.iter().map(|u| (u.id.clone(), UserAgent::new(&ctx, &u.id, tables.clone()))).collect();
    Ok(Setup { ctx, owners, agents })
}

/// Runs owners, cloud and users end to end and records everything the
/// parties send.
pub fn run_simulation(s: &Scenario) -> Result<Transcript, RoleError> {
    match s.transport {
        Transport::Memory => run_memory(s),
        Transport::Tcp => run_tcp(s),
    }
}

/// Tuples of all streams, interleaved round-robin.
fn interleaved(s: &Scenario) -> Vec<(String, u64, u64)> {
    let per_stream: Vec<(String, Vec<(u64, u64)>)> =
        s.streams.iter().map(|st| (st.id.clone(), st.tuples(&s.seed, s.v_max))).collect();
    let longest = per_stream.iter().map(|(_, t)| t.len()).max().unwrap_or(0);
    let mut out = Vec::new();
    for i in 0..longest {
        for (id, t) in &per_stream {
            if let Some(&(k, v)) = t.get(i) {
                out.push((id.clone(), k, v));
            }
        }
    }
    out
}

fn run_memory(s: &Scenario) -> Result<Transcript, RoleError> {
    let Setup { ctx, mut owners, mut agents } = new_setup(s)?;
    let cloud = CloudService::new(&ctx).with_stall_timeout(s.stall_timeout());
    let mut frames = Vec::new();
    let mut outputs = Vec::new();
    let mut errors = Vec::new();

    let mut to_cloud = |frames: &mut Vec<FrameRecord>, from: &str, m: &Message| -> Result<_, RoleError> {
        let m = relay(&ctx, frames, Party::Owner(from.to_string()), Party::Cloud, m)?;
        let h = cloud.handle(m)?;
        for e in &h.rejected {
            let err = Message::Error { code: e.code(), text: e.to_string() };
            relay(&ctx, frames, Party::Cloud, Party::Owner(from.to_string()), &err)?;
            errors.push(e.to_string());
        }
        Ok(h.deliveries)
    };

    for (id, owner) in &owners {
        to_cloud(&mut frames, id, &owner.register_message())?;
    }
    for (user, p) in s.subscriptions() {
        let owner = owners.get_mut(&p.stream).expect("validated");
        let n = owner.negotiate(&p.id, user, p.access_policy()?)?;
        for m in &n.to_cloud {
            to_cloud(&mut frames, &p.stream, m)?;
        }
        let km = relay(&ctx, &mut frames, Party::Owner(p.stream.clone()), Party::User(user.into()), &n.to_user)?;
        agents.get_mut(user).expect("validated").receive(&km)?;
    }
    for (user, agent) in &agents {
        for m in agent.subscribe_messages() {
            let m = relay(&ctx, &mut frames, Party::User(user.clone()), Party::Cloud, &m)?;
            cloud.handle(m)?;
        }
    }
    for (stream, k, v) in interleaved(s) {
        let m = owners.get_mut(&stream).expect("validated").publish(k, v)?;
        for d in to_cloud(&mut frames, &stream, &m)? {
            let m = relay(&ctx, &mut frames, Party::Cloud, Party::User(d.user_id.clone()), &d.message)?;
            let agent =
                agents.get_mut(&d.user_id).ok_or_else(|| RoleError::Config(format!("no user {:?}", d.user_id)))?;
            outputs.extend(agent.receive(&m)?);
        }
    }
    Ok(Transcript { frames, outputs, errors, cloud_state: cloud.state_dump(), stats: cloud.stats() })
}

fn wait_until(what: &str, mut done: impl FnMut() -> bool) -> Result<(), RoleError> {
    let deadline = Instant::now() + Duration::from_secs(30);
    while !done() {
        if Instant::now() > deadline {
            return Err(RoleError::Config(format!("timed out waiting for {what}")));
        }
        thread::sleep(Duration::from_millis(1));
    }
    Ok(())
}

fn run_tcp(s: &Scenario) -> Result<Transcript, RoleError> {
    let Setup { ctx, owners, mut agents } = new_setup(s)?;
    let cloud = Arc::new(CloudService::new(&ctx).with_stall_timeout(s.stall_timeout()));
    let frames: Arc<Mutex<Vec<FrameRecord>>> = Arc::default();
    let sink_frames = frames.clone();
    let sink = Arc::new(move |to: Party, bytes: &[u8]| {
        sink_frames.lock().push(FrameRecord { from: Party::Cloud, to, bytes: bytes.to_vec() });
    });
    let server = CloudServer::spawn(TcpListener::bind(&s.listen)?, cloud.clone(), Some(sink))?;
    let addr = server.local_addr();
    let record = |from: Party, to: Party, bytes: Vec<u8>| frames.lock().push(FrameRecord { from, to, bytes });

    let mut conns = BTreeMap::new();
    let mut owners = owners;
    for (id, owner) in &owners {
        let (r, mut w) = tcp::connect(addr, &ctx)?;
        record(Party::Owner(id.clone()), Party::Cloud, w.send(&owner.register_message())?);
        conns.insert(id.clone(), (r, w));
    }
    let mut expected_grants = BTreeSet::new();
    for (user, p) in s.subscriptions() {
        let owner = owners.get_mut(&p.stream).expect("validated");
        let n = owner.negotiate(&p.id, user, p.access_policy()?)?;
        let (_, w) = conns.get_mut(&p.stream).expect("connected");
        for m in &n.to_cloud {
            record(Party::Owner(p.stream.clone()), Party::Cloud, w.send(m)?);
        }
        // Key material travels owner to user directly.
        let km = relay(&ctx, &mut frames.lock(), Party::Owner(p.stream.clone()), Party::User(user.into()), &n.to_user)?;
        agents.get_mut(user).expect("validated").receive(&km)?;
        expected_grants.insert((p.id.clone(), user.to_string()));
    }
    wait_until("grants", || cloud.grant_count() >= expected_grants.len())?;

    let mut user_threads = Vec::new();
    let mut expected_subs = 0;
    for (id, mut agent) in agents {
        let subs = agent.subscribe_messages();
        if subs.is_empty() {
            continue;
        }
        expected_subs += subs.len();
        let (mut r, mut w) = tcp::connect(addr, &ctx)?;
        for m in &subs {
            record(Party::User(id.clone()), Party::Cloud, w.send(m)?);
        }
        user_threads.push(thread::spawn(move || -> Result<Vec<UserOutput>, RoleError> {
            let mut outputs = Vec::new();
            loop {
                match r.recv() {
                    Ok(m) => outputs.extend(agent.receive(&m)?),
                    Err(WireError::Closed) => break,
                    Err(e) => return Err(e.into()),
                }
            }
            tcp::finish(&w)?;
            Ok(outputs)
        }));
    }
    wait_until("subscriptions", || cloud.subscription_count() >= expected_subs)?;

    let mut per_stream: BTreeMap<String, Vec<(u64, u64)>> = BTreeMap::new();
    for (stream, k, v) in interleaved(s) {
        per_stream.entry(stream).or_default().push((k, v));
    }
    let mut owner_threads = Vec::new();
    for (id, (mut r, mut w)) in conns {
        let mut owner = owners.remove(&id).expect("one session per stream");
        let tuples = per_stream.remove(&id).unwrap_or_default();
        let frames = frames.clone();
        owner_threads.push(thread::spawn(move || -> Result<Vec<String>, RoleError> {
            for (k, v) in tuples {
                let bytes = w.send(&owner.publish(k, v)?)?;
                frames.lock().push(FrameRecord { from: Party::Owner(id.clone()), to: Party::Cloud, bytes });
            }
            tcp::finish(&w)?;
            let mut errors = Vec::new();
            loop {
                match r.recv() {
                    Ok(Message::Error { text, .. }) => errors.push(text),
                    Ok(other) => return Err(RoleError::UnexpectedMessage(other.name())),
                    Err(WireError::Closed) => return Ok(errors),
                    Err(e) => return Err(e.into()),
                }
            }
        }));
    }
    let mut errors = Vec::new();
    for t in owner_threads {
        errors.extend(t.join().expect("owner thread panicked")?);
    }
    server.shutdown();
    let mut outputs = Vec::new();
    for t in user_threads {
        outputs.extend(t.join().expect("user thread panicked")?);
    }
    let frames = std::mem::take(&mut *frames.lock());
    Ok(Transcript { frames, outputs, errors, cloud_state: cloud.state_dump(), stats: cloud.stats() })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
        seed = "small"
        v_max = 1000

        [[streams]]
        id = "s"
        window_sizes = [5]
        tuples = 40
        generator = { kind = "uniform" }

        [[policies]]
        id = "avg"
        stream = "s"
        policy = "window:9,5"

        [[policies]]
        id = "hot"
        stream = "s"
        policy = "ge:30"

        [[users]]
        id = "alice"
        policies = ["avg", "hot"]
    "#;

    #[test]
    fn memory_run_matches_oracle_and_is_deterministic() {
        let s = Scenario::from_toml(SMALL).unwrap();
        let t = run_simulation(&s).unwrap();
        assert_eq!(t.outputs_by_subscription(), plaintext_oracle(&s));
        assert_eq!(run_simulation(&s).unwrap(), t);
        assert_eq!(t.stats.inconsistencies, 0);
    }

    #[test]
    fn gap_stalls_remaining_windows() {
        let text = SMALL.replace("tuples = 40", "tuples = 40\nskip_keys = [20]");
        let s = Scenario::from_toml(&text).unwrap();
        let t = run_simulation(&s).unwrap();
        let got = t.outputs_by_subscription();
        assert_eq!(got, plaintext_oracle(&s));
        // Windows 0 and 1 cover 9..19; 19..24 is missing key 20.
        assert_eq!(got[&("alice".to_string(), "avg".to_string())].len(), 2);
        assert!(!t.errors.is_empty(), "keys two windows ahead are reported");
    }

    #[test]
    fn config_errors() {
        for (from, to) in [
            ("policy = \"window:9,5\"", "policy = \"window:9,6\""),
            ("policies = [\"avg\", \"hot\"]", "policies = [\"nope\"]"),
            ("stream = \"s\"\n        policy = \"ge:30\"", "stream = \"x\"\n        policy = \"ge:30\""),
            ("kind = \"uniform\"", "kind = \"constant\", value = 1001"),
            ("v_max = 1000", "v_max = 1000\nextra = 1"),
        ] {
            let text = SMALL.replace(from, to);
            assert_ne!(text, SMALL, "{from}");
            assert!(matches!(Scenario::from_toml(&text), Err(RoleError::Config(_))), "{to}");
        }
    }

    #[test]
    fn tcp_run_matches_oracle() {
        let text = SMALL.replace("v_max = 1000", "v_max = 1000\ntransport = \"tcp\"");
        let s = Scenario::from_toml(&text).unwrap();
        let t = run_simulation(&s).unwrap();
        assert_eq!(t.outputs_by_subscription(), plaintext_oracle(&s));
        assert!(t.frames_from(&Party::Cloud).count() > 0);
    }
}
