//! Owner-side encryption and cloud-side transformation / aggregation.

use std::collections::BTreeMap;

use rand::Rng;

use super::attribute::{encode_attributes, Attribute, AttributeSet};
use super::keys::{AccessPolicy, PublicKey, TransformKey, WindowSecretSet};
use super::sharing::recombine;
use super::AbeError;
use crate::group::{ElemG, ElemGT, GroupContext, Scalar};

/// Ciphertext for one tuple as stored at the cloud.
///
/// All bodies share the same encryption randomness `s_k`; each supported
/// window size adds exactly one target-group element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CiphertextRecord {
    pub k: u64,
    pub attributes: AttributeSet,
    /// `E'_i = g^{t_i·s_k}` for every `i` in `attributes`.
    pub eprime: BTreeMap<Attribute, ElemG>,
    /// `e(g,g)^v · e(g,g)^{y·s_k}`.
    pub trigger_body: ElemGT,
    /// `e(g,g)^{v + blind_β(k)} · e(g,g)^{y·s_k}` per window size `β`.
    pub window_bodies: BTreeMap<u32, ElemGT>,
}

impl CiphertextRecord {
    pub fn window_sizes(&self) -> impl Iterator<Item = u32> + '_ {
        self.window_bodies.keys().copied()
    }

    pub fn body_for(&self, policy: &AccessPolicy) -> Result<(ElemGT, BodySource), AbeError> {
        match policy {
            AccessPolicy::Trigger { .. } => Ok((self.trigger_body, BodySource::Trigger)),
            AccessPolicy::Window { beta, .. } => self
                .window_bodies
                .get(beta)
                .map(|b| (*b, BodySource::Window(*beta)))
                .ok_or(AbeError::MissingWindowBody(*beta)),
        }
    }
}

/// Encrypts `(k, v)` once for trigger policies and once per window size.
pub fn encrypt<R: Rng + ?Sized>(
    ctx: &GroupContext,
    pk: &PublicKey,
    windows: &WindowSecretSet,
    v_max: u64,
    k: u64,
    v: u64,
    rng: &mut R,
) -> Result<CiphertextRecord, AbeError> {
    if v > v_max {
        return Err(AbeError::ValueOutOfRange { v, v_max });
    }
    let attributes = encode_attributes(k);
    let s = Scalar::random_nonzero(rng);
    let eprime = attributes.iter().map(|a| (a, pk.t(a).pow(s))).collect();
    let mask = pk.y_gt().pow(s);
    let v = Scalar::new(v);
    let trigger_body = ctx.gt_pow(v) * mask;
    let window_bodies = windows.iter().map(|(&beta, ws)| (beta, ctx.gt_pow(v + ws.blind(k)) * mask)).collect();
    Ok(CiphertextRecord { k, attributes, eprime, trigger_body, window_bodies })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BodySource {
    Trigger,
    Window(u32),
}

/// `C_k = (E(k,v), Transform(root_k))`, decryptable with `z_u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformedCiphertext {
    pub k: u64,
    pub body: ElemGT,
    /// `e(g,g)^{y·s_k/z_u}`.
    pub proof_part: ElemGT,
    pub source: BodySource,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformOutcome {
    /// `None` is the ⊥ outcome: the key's tree rejects the attributes.
    pub transformed: Option<TransformedCiphertext>,
    pub pairings: u32,
}

/// Proxy transformation of an ABE ciphertext with a user's transform key.
pub fn transform(ctx: &GroupContext, tk: &TransformKey, c: &CiphertextRecord) -> Result<TransformOutcome, AbeError> {
    let foreign_key = tk.d.iter().any(|d| !ctx.owns_g(d));
    if foreign_key || !ctx.owns_gt(&c.trigger_body) {
        return Err(AbeError::ContextMismatch);
    }
    let (body, source) = c.body_for(&tk.policy)?;
    let mut pairings = 0u32;
    let mut failure = None;
    let root = recombine(&tk.tree, |ordinal, _node, attr| {
        if !c.attributes.contains(attr) {
            return None;
        }
        let e = c.eprime.get(&attr)?;
        pairings += 1;
        match ctx.pair(&tk.d[ordinal], e) {
            Ok(v) => Some(v),
            Err(err) => {
                failure = Some(err);
                None
            }
        }
    });
    if let Some(err) = failure {
        return Err(err.into());
    }
    Ok(TransformOutcome {
        transformed: root.map(|proof_part| TransformedCiphertext { k: c.k, body, proof_part, source }),
        pairings,
    })
}

/// Encrypted window aggregate sent to a window-policy user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSum {
    /// `i = (k_start - α) / β`, counted from 0.
    pub index: u64,
    pub e1: ElemGT,
    pub e2: ElemGT,
}

/// Multiplies the `β` transformed ciphertexts of one aligned window.
pub fn compute_sum(window: &[TransformedCiphertext], alpha: u64, beta: u32) -> Result<WindowSum, AbeError> {
    if beta == 0 || window.len() != beta as usize {
        return Err(AbeError::WrongWindowLength { expected: beta, got: window.len() });
    }
    let start = window[0].k;
    if start < alpha || (start - alpha) % beta as u64 != 0 {
        return Err(AbeError::MisalignedWindow { start, alpha, beta });
    }
    for (j, c) in window.iter().enumerate() {
        if c.k.checked_sub(start) != Some(j as u64) {
            return Err(AbeError::NonConsecutiveWindow);
        }
        if c.source != BodySource::Window(beta) {
            return Err(AbeError::MixedBodies);
        }
    }
    let mut e1 = window[0].body;
    let mut e2 = window[0].proof_part;
    for c in &window[1..] {
        e1 = e1 * c.body;
        e2 = e2 * c.proof_part;
    }
    Ok(WindowSum { index: (start - alpha) / beta as u64, e1, e2 })
}
