//! User-side decryption: strip the transform mask, then a table lookup.

use std::collections::HashMap;

use super::cipher::{BodySource, TransformedCiphertext};
use super::keys::UserKey;
use super::AbeError;
use crate::group::{ElemGT, GroupContext, Scalar};

/// Largest table [`DlogTable::build`] accepts unless told otherwise.
pub const DEFAULT_TABLE_CAP: u64 = 10_000_000;

/// Precomputed `g_T^m -> m` for `m` in `[0, M]`.
#[derive(Debug, Clone)]
pub struct DlogTable {
    max: u64,
    entries: HashMap<ElemGT, u64>,
}

impl DlogTable {
    pub fn build(ctx: &GroupContext, max: u64) -> Result<Self, AbeError> {
        Self::build_with_cap(ctx, max, DEFAULT_TABLE_CAP)
    }

    pub fn build_with_cap(ctx: &GroupContext, max: u64, cap: u64) -> Result<Self, AbeError> {
        if max > cap {
            return Err(AbeError::TableTooLarge { max, cap });
        }
        let mut entries = HashMap::with_capacity(max as usize + 1);
        let g = ctx.gt();
        let mut cur = ctx.identity_gt();
        for m in 0..=max {
            entries.insert(cur, m);
            cur = cur * g;
        }
        Ok(DlogTable { max, entries })
    }

    /// Largest logarithm covered.
    pub fn max(&self) -> u64 {
        self.max
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, e: &ElemGT) -> Option<u64> {
        self.entries.get(e).copied()
    }
}

/// `E(k,v) / Transform(root)^{z_u}`.
fn unmask(uk: &UserKey, body: ElemGT, proof_part: ElemGT) -> ElemGT {
    body / proof_part.pow(uk.z())
}

/// Recovers `v` from a trigger delivery.
pub fn decrypt_trigger(uk: &UserKey, t: &TransformedCiphertext, table: &DlogTable) -> Result<u64, AbeError> {
    if uk.window().is_some() || t.source != BodySource::Trigger {
        return Err(AbeError::WrongKeyKind);
    }
    table.lookup(&unmask(uk, t.body, t.proof_part)).ok_or(AbeError::TableMiss)
}

/// Exact window average `sum / count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowAverage {
    pub index: u64,
    pub sum: u64,
    pub count: u32,
}

impl WindowAverage {
    pub fn as_f64(&self) -> f64 {
        self.sum as f64 / self.count as f64
    }
}

/// Recovers the sum of window `index` from `(E1, E2)`.
///
/// A miss means the aggregate was not built for this key's `(α, β)`: the
/// residual blind pushes the exponent outside the table.
pub fn decrypt_window(
    ctx: &GroupContext,
    uk: &UserKey,
    index: u64,
    e1: ElemGT,
    e2: ElemGT,
    table: &DlogTable,
) -> Result<WindowAverage, AbeError> {
    let w = uk.window().ok_or(AbeError::WrongKeyKind)?;
    let blind = Scalar::pow2_u128(index as u128) * w.sigma;
    let plain = unmask(uk, e1, e2) / ctx.gt_pow(blind);
    let sum = table.lookup(&plain).ok_or(AbeError::TableMiss)?;
    Ok(WindowAverage { index, sum, count: w.beta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abe::cipher::{compute_sum, encrypt, transform};
    use crate::abe::keys::{generate_window_secrets, master_keygen, user_keygen, AccessPolicy};
    use crate::abe::tree::CompareOp;
    use rand::Rng;

    #[test]
    fn table_boundaries() {
        let ctx = GroupContext::transparent("dlog").unwrap();
        let t0 = DlogTable::build(&ctx, 0).unwrap();
        assert_eq!(t0.len(), 1);
        assert_eq!(t0.lookup(&ctx.identity_gt()), Some(0));
        let t = DlogTable::build(&ctx, 5000).unwrap();
        assert_eq!(t.lookup(&ctx.gt_pow(Scalar::new(5000))), Some(5000));
        assert_eq!(t.lookup(&ctx.gt_pow(Scalar::new(5001))), None);
        assert_eq!(DlogTable::build_with_cap(&ctx, 11, 10).unwrap_err(), AbeError::TableTooLarge { max: 11, cap: 10 });
        assert!(DlogTable::build(&ctx, DEFAULT_TABLE_CAP + 1).is_err());
    }

    #[test]
    fn trigger_round_trip_random() {
        let ctx = GroupContext::transparent("trigger-rt").unwrap();
        let mut rng = ctx.rng();
        let (mk, pk) = master_keygen(&ctx, &mut rng);
        let ws = generate_window_secrets(&[5], &mut rng).unwrap();
        let policy = AccessPolicy::Trigger { theta: 0, op: CompareOp::Ge };
        let (tk, uk) = user_keygen(&ctx, &mk, &ws, policy, &mut rng).unwrap();
        let table = DlogTable::build(&ctx, 1000).unwrap();
        for _ in 0..200 {
            let k: u64 = rng.random();
            let v = rng.random_range(0..=1000);
            let c = encrypt(&ctx, &pk, &ws, 1000, k, v, &mut rng).unwrap();
            let t = transform(&ctx, &tk, &c).unwrap().transformed.unwrap();
            assert_eq!(decrypt_trigger(&uk, &t, &table), Ok(v));
        }
    }

    #[test]
    fn wrong_z_misses() {
        let ctx = GroupContext::transparent("wrong-z").unwrap();
        let mut rng = ctx.rng();
        let (mk, pk) = master_keygen(&ctx, &mut rng);
        let ws = Default::default();
        let policy = AccessPolicy::Trigger { theta: 42, op: CompareOp::Eq };
        let (tk, uk) = user_keygen(&ctx, &mk, &ws, policy, &mut rng).unwrap();
        let (_, other) = user_keygen(&ctx, &mk, &ws, policy, &mut rng).unwrap();
        assert_ne!(uk.z(), other.z());
        let c = encrypt(&ctx, &pk, &ws, 1000, 42, 17, &mut rng).unwrap();
        let out = transform(&ctx, &tk, &c).unwrap();
        assert_eq!(out.pairings, 64);
        let t = out.transformed.unwrap();
        let table = DlogTable::build(&ctx, 1000).unwrap();
        assert_eq!(decrypt_trigger(&uk, &t, &table), Ok(17));
        assert_eq!(decrypt_trigger(&other, &t, &table), Err(AbeError::TableMiss));
    }

    #[test]
    fn large_key_ge_uses_one_pairing() {
        let ctx = GroupContext::transparent("ge-large").unwrap();
        let mut rng = ctx.rng();
        let (mk, pk) = master_keygen(&ctx, &mut rng);
        let ws = Default::default();
        let policy = AccessPolicy::Trigger { theta: 1000, op: CompareOp::Ge };
        let (tk, _) = user_keygen(&ctx, &mk, &ws, policy, &mut rng).unwrap();
        for k in [1u64 << 32, (1 << 40) + 7, u64::MAX] {
            let c = encrypt(&ctx, &pk, &ws, 10, k, 1, &mut rng).unwrap();
            let out = transform(&ctx, &tk, &c).unwrap();
            assert!(out.transformed.is_some());
            assert_eq!(out.pairings, 1, "k={k}");
        }
    }

    #[test]
    fn window_pair_of_values() {
        let ctx = GroupContext::transparent("window-pair").unwrap();
        let mut rng = ctx.rng();
        let (mk, pk) = master_keygen(&ctx, &mut rng);
        let ws = generate_window_secrets(&[2], &mut rng).unwrap();
        let policy = AccessPolicy::Window { alpha: 4, beta: 2 };
        let (tk, uk) = user_keygen(&ctx, &mk, &ws, policy, &mut rng).unwrap();
        let table = DlogTable::build(&ctx, 2 * 1000).unwrap();
        // Window i = 1 covers k = 6, 7.
        let ts: Vec<_> = [(6u64, 5u64), (7, 7)]
            .iter()
            .map(|&(k, v)| {
                let c = encrypt(&ctx, &pk, &ws, 1000, k, v, &mut rng).unwrap();
                transform(&ctx, &tk, &c).unwrap().transformed.unwrap()
            })
            .collect();
        let sum = compute_sum(&ts, 4, 2).unwrap();
        assert_eq!(sum.index, 1);
        let avg = decrypt_window(&ctx, &uk, sum.index, sum.e1, sum.e2, &table).unwrap();
        assert_eq!((avg.sum, avg.count), (12, 2));
        assert_eq!(avg.as_f64(), 6.0);
        // Wrong window index leaves a blind residue.
        assert_eq!(decrypt_window(&ctx, &uk, 0, sum.e1, sum.e2, &table), Err(AbeError::TableMiss));
        // Trigger decryption refuses a window key.
        assert_eq!(decrypt_trigger(&uk, &ts[0], &table), Err(AbeError::WrongKeyKind));
    }

    #[test]
    fn window_below_alpha_is_bottom() {
        let ctx = GroupContext::transparent("window-deny").unwrap();
        let mut rng = ctx.rng();
        let (mk, pk) = master_keygen(&ctx, &mut rng);
        let ws = generate_window_secrets(&[5], &mut rng).unwrap();
        let policy = AccessPolicy::Window { alpha: 9, beta: 5 };
        let (tk, _) = user_keygen(&ctx, &mk, &ws, policy, &mut rng).unwrap();
        let c = encrypt(&ctx, &pk, &ws, 1000, 3, 1, &mut rng).unwrap();
        assert_eq!(transform(&ctx, &tk, &c).unwrap().transformed, None);
    }

    #[test]
    fn shifted_key_decrypts_later_windows() {
        let ctx = GroupContext::transparent("coarsen").unwrap();
        let mut rng = ctx.rng();
        let (mk, pk) = master_keygen(&ctx, &mut rng);
        let ws = generate_window_secrets(&[3], &mut rng).unwrap();
        let policy = AccessPolicy::Window { alpha: 2, beta: 3 };
        let (tk, uk) = user_keygen(&ctx, &mk, &ws, policy, &mut rng).unwrap();
        let table = DlogTable::build(&ctx, 300).unwrap();
        for c in 1..=3u64 {
            let start = 2 + 3 * c;
            let ts: Vec<_> = (start..start + 3)
                .map(|k| transform(&ctx, &tk, &encrypt(&ctx, &pk, &ws, 100, k, k, &mut rng).unwrap()))
                .map(|o| o.unwrap().transformed.unwrap())
                .collect();
            let shifted = uk.shifted(c).unwrap();
            let sum = compute_sum(&ts, shifted.window().unwrap().alpha, 3).unwrap();
            assert_eq!(sum.index, 0);
            let avg = decrypt_window(&ctx, &shifted, 0, sum.e1, sum.e2, &table).unwrap();
            assert_eq!(avg.sum, 3 * start + 3);
        }
    }
}
