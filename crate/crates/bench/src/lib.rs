//! Fixtures shared by the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use streamac_core::abe::{
    encrypt, generate_window_secrets, master_keygen, transform, user_keygen, CiphertextRecord, DlogTable, PublicKey,
    WindowSecretSet,
};
use streamac_core::policy::{KeyRef, PolicyStore, XacmlPolicy};
use streamac_core::{AccessPolicy, CompareOp, GroupContext, TransformKey, TransformedCiphertext, UserKey};

pub const V_MAX: u64 = 1000;

pub fn rng(label: &str) -> ChaCha20Rng {
    let mut seed = [0u8; 32];
    for (i, b) in label.bytes().take(32).enumerate() {
        seed[i] = b;
    }
    ChaCha20Rng::from_seed(seed)
}

/// One stream and one user key for `policy`.
pub struct Fixture {
    pub ctx: GroupContext,
    pub public: PublicKey,
    pub windows: WindowSecretSet,
    pub transform_key: TransformKey,
    pub user_key: UserKey,
    pub rng: ChaCha20Rng,
}

impl Fixture {
    pub fn new(policy: AccessPolicy) -> Self {
        let ctx = GroupContext::transparent("bench").expect("transparent backend");
        let mut rng = rng("fixture");
        let (master, public) = master_keygen(&ctx, &mut rng);
        let sizes: Vec<u32> = policy.window().map(|(_, b)| vec![b]).unwrap_or_default();
        let windows = generate_window_secrets(&sizes, &mut rng).expect("valid sizes");
        let (transform_key, user_key) = user_keygen(&ctx, &master, &windows, policy, &mut rng).expect("valid policy");
        Fixture { ctx, public, windows, transform_key, user_key, rng }
    }

    pub fn encrypt(&mut self, k: u64) -> CiphertextRecord {
        let v = self.rng.random_range(0..=V_MAX);
        encrypt(&self.ctx, &self.public, &self.windows, V_MAX, k, v, &mut self.rng).expect("v within range")
    }

    /// Transformed ciphertext for an admitted key.
    pub fn transformed(&mut self, k: u64) -> TransformedCiphertext {
        let rec = self.encrypt(k);
        transform(&self.ctx, &self.transform_key, &rec).expect("same context").transformed.expect("admitted key")
    }

    pub fn table(&self, max: u64) -> DlogTable {
        DlogTable::build(&self.ctx, max).expect("table within cap")
    }
}

/// `n` policies on one stream, each with one grant.
pub fn policy_store(n: usize) -> PolicyStore {
    let mut rng = rng("policies");
    let mut store = PolicyStore::new();
    for i in 0..n {
        let policy = if rng.random_bool(0.5) {
            AccessPolicy::Window { alpha: rng.random_range(0..10_000), beta: rng.random_range(1..=12) }
        } else {
            AccessPolicy::Trigger { theta: rng.random_range(1..10_000), op: CompareOp::ALL[rng.random_range(0..5)] }
        };
        let id = format!("p{i:06}");
        store.register_policy(XacmlPolicy::new(&id, "s", policy)).expect("fresh id");
        store.register_grant(&id, &format!("u{i}"), KeyRef(format!("tk{i}"))).expect("registered");
    }
    store
}
