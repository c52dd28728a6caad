use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::attribute::{Attribute, UNIVERSE_SIZE};
use super::sharing::share_secret;
use super::tree::{build_access_tree, AccessTree, CompareOp};
use super::AbeError;
use crate::group::{ElemG, ElemGT, GroupContext, Scalar};

/// What a user is allowed to see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessPolicy {
    /// Individual values whose key satisfies `k op theta`.
    Trigger { theta: u64, op: CompareOp },
    /// Averages of consecutive non-overlapping windows of `beta` tuples,
    /// the first one starting at key `alpha`.
    Window { alpha: u64, beta: u32 },
}

impl AccessPolicy {
    /// The key condition enforced by the access tree.
    pub fn condition(&self) -> (CompareOp, u64) {
        match *self {
            AccessPolicy::Trigger { theta, op } => (op, theta),
            AccessPolicy::Window { alpha, .. } => (CompareOp::Ge, alpha),
        }
    }

    pub fn admits(&self, k: u64) -> bool {
        let (op, theta) = self.condition();
        op.holds(k, theta)
    }

    pub fn tree(&self) -> Result<AccessTree, AbeError> {
        let (op, theta) = self.condition();
        build_access_tree(theta, op)
    }

    pub fn window(&self) -> Option<(u64, u32)> {
        match *self {
            AccessPolicy::Window { alpha, beta } => Some((alpha, beta)),
            AccessPolicy::Trigger { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), AbeError> {
        if let AccessPolicy::Window { beta: 0, .. } = self {
            return Err(AbeError::InvalidWindowSize(0));
        }
        self.tree().map(|_| ())
    }
}

impl fmt::Display for AccessPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccessPolicy::Trigger { theta, op } => write!(f, "{op}:{theta}"),
            AccessPolicy::Window { alpha, beta } => write!(f, "window:{alpha},{beta}"),
        }
    }
}

/// Parses `eq:42`, `ge:10`, ..., or `window:9,5`.
impl FromStr for AccessPolicy {
    type Err = AbeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AbeError::InvalidPolicy(s.to_string());
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let policy = if kind == "window" {
            let (a, b) = args.split_once(',').ok_or_else(bad)?;
            AccessPolicy::Window {
                alpha: a.trim().parse().map_err(|_| bad())?,
                beta: b.trim().parse().map_err(|_| bad())?,
            }
        } else {
            AccessPolicy::Trigger { op: kind.parse()?, theta: args.trim().parse().map_err(|_| bad())? }
        };
        policy.validate()?;
        Ok(policy)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterKey {
    pub(crate) y: Scalar,
    pub(crate) t: Vec<Scalar>,
}

impl MasterKey {
    pub fn y(&self) -> Scalar {
        self.y
    }

    pub fn t(&self, a: Attribute) -> Scalar {
        self.t[a.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub(crate) y_gt: ElemGT,
    pub(crate) t: Vec<ElemG>,
}

impl PublicKey {
    /// `e(g,g)^y`.
    pub fn y_gt(&self) -> ElemGT {
        self.y_gt
    }

    /// `g^{t_i}`.
    pub fn t(&self, a: Attribute) -> ElemG {
        self.t[a.index()]
    }
}

pub fn master_keygen<R: Rng + ?Sized>(ctx: &GroupContext, rng: &mut R) -> (MasterKey, PublicKey) {
    let y = Scalar::random_nonzero(rng);
    let t: Vec<Scalar> = (0..UNIVERSE_SIZE).map(|_| Scalar::random_nonzero(rng)).collect();
    let public = PublicKey { y_gt: ctx.gt_pow(y), t: t.iter().map(|&ti| ctx.g_pow(ti)).collect() };
    (MasterKey { y, t }, public)
}

/// Per-stream blind factors `R[0..beta]` for one window size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSecrets {
    pub(crate) beta: u32,
    pub(crate) r: Vec<Scalar>,
}

pub type WindowSecretSet = BTreeMap<u32, WindowSecrets>;

fn ceil_div(a: u128, b: u128) -> u128 {
    a.div_ceil(b)
}

impl WindowSecrets {
    pub fn generate<R: Rng + ?Sized>(beta: u32, rng: &mut R) -> Result<Self, AbeError> {
        if beta == 0 {
            return Err(AbeError::InvalidWindowSize(beta));
        }
        Ok(WindowSecrets { beta, r: (0..beta).map(|_| Scalar::random(rng)).collect() })
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    pub fn values(&self) -> &[Scalar] {
        &self.r
    }

    fn blind_wide(&self, k: u128) -> Scalar {
        let beta = self.beta as u128;
        Scalar::pow2_u128(ceil_div(k, beta)) * self.r[(k % beta) as usize]
    }

    /// Blind added to the window body of key `k`: `2^{⌈k/β⌉}·R[k mod β]`.
    pub fn blind(&self, k: u64) -> Scalar {
        self.blind_wide(k as u128)
    }

    /// `σ(α,β) = Σ_{j<β} 2^{⌈(α+j)/β⌉}·R[(α+j) mod β]`.
    pub fn sigma(&self, alpha: u64) -> Scalar {
        (0..self.beta as u128).map(|j| self.blind_wide(alpha as u128 + j)).sum()
    }
}

pub fn generate_window_secrets<R: Rng + ?Sized>(sizes: &[u32], rng: &mut R) -> Result<WindowSecretSet, AbeError> {
    let mut set = WindowSecretSet::new();
    for &beta in sizes {
        if let std::collections::btree_map::Entry::Vacant(slot) = set.entry(beta) {
            slot.insert(WindowSecrets::generate(beta, rng)?);
        }
    }
    Ok(set)
}

/// Cloud half of a user's key: `D_x = g^{q_x(0)/(z_u·t_i)}` per leaf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformKey {
    pub(crate) policy: AccessPolicy,
    pub(crate) tree: AccessTree,
    pub(crate) d: Vec<ElemG>,
}

impl TransformKey {
    pub fn new(policy: AccessPolicy, tree: AccessTree, d: Vec<ElemG>) -> Result<Self, AbeError> {
        if d.len() != tree.leaf_count() {
            return Err(AbeError::MalformedKey("leaf values do not match tree leaves"));
        }
        Ok(TransformKey { policy, tree, d })
    }

    pub fn policy(&self) -> &AccessPolicy {
        &self.policy
    }

    pub fn tree(&self) -> &AccessTree {
        &self.tree
    }

    /// Leaf values in leaf pre-order.
    pub fn leaf_values(&self) -> &[ElemG] {
        &self.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowUnblind {
    pub alpha: u64,
    pub beta: u32,
    pub sigma: Scalar,
}

/// User half of a key: `z_u`, plus `σ(α,β)` for window policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserKey {
    pub(crate) z: Scalar,
    pub(crate) window: Option<WindowUnblind>,
}

impl UserKey {
    pub fn new(z: Scalar, window: Option<WindowUnblind>) -> Result<Self, AbeError> {
        if z.is_zero() {
            return Err(AbeError::MalformedKey("z_u must be non-zero"));
        }
        Ok(UserKey { z, window })
    }

    pub fn z(&self) -> Scalar {
        self.z
    }

    pub fn window(&self) -> Option<&WindowUnblind> {
        self.window.as_ref()
    }

    /// Key for the same windows viewed as starting `c` windows later:
    /// `α' = α + c·β`, `σ' = 2^c·σ`.
    pub fn shifted(&self, c: u64) -> Option<UserKey> {
        let w = self.window?;
        let alpha = w.alpha.checked_add(c.checked_mul(w.beta as u64)?)?;
        Some(UserKey {
            z: self.z,
            window: Some(WindowUnblind { alpha, beta: w.beta, sigma: Scalar::pow2_u128(c as u128) * w.sigma }),
        })
    }
}

pub fn user_keygen<R: Rng + ?Sized>(
    ctx: &GroupContext,
    master: &MasterKey,
    windows: &WindowSecretSet,
    policy: AccessPolicy,
    rng: &mut R,
) -> Result<(TransformKey, UserKey), AbeError> {
    policy.validate()?;
    let unblind_secrets = match policy {
        AccessPolicy::Window { alpha, beta } => {
            let ws = windows.get(&beta).ok_or(AbeError::UnknownWindowSize(beta))?;
            Some((alpha, ws))
        }
        AccessPolicy::Trigger { .. } => None,
    };
    let tree = policy.tree()?;
    let z = Scalar::random_nonzero(rng);
    let shares = share_secret(&tree, master.y, rng);
    let d = tree
        .leaves()
        .map(|(node, attr)| {
            let denom = (z * master.t(attr)).inverse().expect("z_u and t_i are non-zero");
            ctx.g_pow(shares.get(node) * denom)
        })
        .collect();
    let window = unblind_secrets.map(|(alpha, ws)| WindowUnblind { alpha, beta: ws.beta, sigma: ws.sigma(alpha) });
    Ok((TransformKey { policy, tree, d }, UserKey { z, window }))
}
