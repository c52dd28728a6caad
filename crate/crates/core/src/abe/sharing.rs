//! Secret sharing down an access tree and Lagrange recombination.

use rand::Rng;

use super::attribute::{Attribute, AttributeSet};
use super::tree::{AccessTree, TreeNode};
use crate::group::{batch_invert, ElemGT, Scalar};

/// `q_x(0)` for every node, indexed by node id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeShares(Vec<Scalar>);

impl NodeShares {
    pub fn get(&self, node: usize) -> Scalar {
        self.0[node]
    }

    pub fn as_slice(&self) -> &[Scalar] {
        &self.0
    }
}

/// Splits `secret` top-down: each gate with threshold `d` draws a random
/// polynomial of degree `d - 1` whose constant term is the gate's own share,
/// and child `j` (1-based) receives its evaluation at `j`.
pub fn share_secret<R: Rng + ?Sized>(tree: &AccessTree, secret: Scalar, rng: &mut R) -> NodeShares {
    let mut shares = vec![Scalar::ZERO; tree.nodes().len()];
    shares[tree.root()] = secret;
    // Pre-order ids guarantee a parent is visited before its children.
    for (id, node) in tree.nodes().iter().enumerate() {
        if let TreeNode::Gate { threshold, children } = node {
            let mut coeffs = Vec::with_capacity(*threshold);
            coeffs.push(shares[id]);
            coeffs.extend((1..*threshold).map(|_| Scalar::random(rng)));
            for (pos, &child) in children.iter().enumerate() {
                shares[child] = eval_poly(&coeffs, Scalar::new(pos as u64 + 1));
            }
        }
    }
    NodeShares(shares)
}

fn eval_poly(coeffs: &[Scalar], x: Scalar) -> Scalar {
    coeffs.iter().rev().fold(Scalar::ZERO, |acc, &c| acc * x + c)
}

/// `Δ_{i,S}(0)` for every `i` in `S`, in the order given.
pub fn lagrange_at_zero(indices: &[u64]) -> Vec<Scalar> {
    let xs: Vec<Scalar> = indices.iter().map(|&i| Scalar::new(i)).collect();
    let mut nums = Vec::with_capacity(xs.len());
    let mut dens = Vec::with_capacity(xs.len());
    for (a, &xi) in xs.iter().enumerate() {
        let mut num = Scalar::ONE;
        let mut den = Scalar::ONE;
        for (b, &xj) in xs.iter().enumerate() {
            if a != b {
                num *= -xj;
                den *= xi - xj;
            }
        }
        nums.push(num);
        dens.push(den);
    }
    let inv = batch_invert(&dens).expect("interpolation indices must be distinct");
    nums.into_iter().zip(inv).map(|(n, d)| n * d).collect()
}

/// Values that can be recombined "in the exponent".
pub trait Interpolate: Copy {
    /// Given `(value_i, Δ_i)` pairs, returns the interpolated constant term.
    fn interpolate(terms: &[(Self, Scalar)]) -> Self;
}

impl Interpolate for Scalar {
    fn interpolate(terms: &[(Self, Scalar)]) -> Self {
        terms.iter().map(|(v, c)| *v * *c).sum()
    }
}

impl Interpolate for ElemGT {
    fn interpolate(terms: &[(Self, Scalar)]) -> Self {
        let mut it = terms.iter();
        let (v0, c0) = it.next().expect("at least one term");
        it.fold(v0.pow(*c0), |acc, (v, c)| acc * v.pow(*c))
    }
}

/// Walks the tree bottom-up, lazily: children are visited left to right and
/// a gate stops as soon as it has `d` successes or can no longer reach `d`.
/// Only the first `d` successful children (lowest indices) are combined.
///
/// `leaf` receives `(leaf ordinal, node id, attribute)` and returns `None`
/// for an unsatisfied leaf.
pub fn recombine<V, F>(tree: &AccessTree, mut leaf: F) -> Option<V>
where
    V: Interpolate,
    F: FnMut(usize, usize, Attribute) -> Option<V>,
{
    recombine_at(tree, tree.root(), &mut leaf)
}

fn recombine_at<V, F>(tree: &AccessTree, id: usize, leaf: &mut F) -> Option<V>
where
    V: Interpolate,
    F: FnMut(usize, usize, Attribute) -> Option<V>,
{
    match tree.node(id) {
        TreeNode::Leaf { attribute, leaf: ordinal } => leaf(*ordinal, id, *attribute),
        TreeNode::Gate { threshold, children } => {
            let mut got: Vec<(u64, V)> = Vec::with_capacity(*threshold);
            let mut failed = 0;
            for (pos, &child) in children.iter().enumerate() {
                match recombine_at(tree, child, leaf) {
                    Some(v) => {
                        got.push((pos as u64 + 1, v));
                        if got.len() == *threshold {
                            break;
                        }
                    }
                    None => {
                        failed += 1;
                        if failed > children.len() - threshold {
                            return None;
                        }
                    }
                }
            }
            if got.len() < *threshold {
                return None;
            }
            let idx: Vec<u64> = got.iter().map(|(i, _)| *i).collect();
            let coeffs = lagrange_at_zero(&idx);
            let terms: Vec<(V, Scalar)> = got.into_iter().map(|(_, v)| v).zip(coeffs).collect();
            Some(V::interpolate(&terms))
        }
    }
}

/// Reconstructs the root secret from leaf shares whose attribute is present.
/// Returns `None` when `attrs` does not satisfy the tree.
pub fn reconstruct_secret(tree: &AccessTree, shares: &NodeShares, attrs: &AttributeSet) -> Option<Scalar> {
    recombine(tree, |_, node, a| attrs.contains(a).then(|| shares.get(node)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abe::attribute::KeyWidth;
    use crate::abe::tree::{build_access_tree_with, AccessTree, CompareOp, Expr};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(42)
    }

    #[test]
    fn single_leaf_gets_secret() {
        let tree = AccessTree::from_expr(&Expr::leaf(Attribute::bit(0, true))).unwrap();
        let y = Scalar::new(12345);
        let shares = share_secret(&tree, y, &mut rng());
        assert_eq!(shares.get(0), y);
    }

    #[test]
    fn and_gate_interpolates_by_hand() {
        let tree = AccessTree::from_expr(&Expr::and(vec![
            Expr::leaf(Attribute::bit(0, true)),
            Expr::leaf(Attribute::bit(1, true)),
        ]))
        .unwrap();
        let y = Scalar::new(777);
        let shares = share_secret(&tree, y, &mut rng());
        let (q1, q2) = (shares.get(1), shares.get(2));
        // Δ_{1,{1,2}}(0) = 2, Δ_{2,{1,2}}(0) = -1.
        assert_eq!(Scalar::new(2) * q1 - q2, y);
        assert_eq!(lagrange_at_zero(&[1, 2]), vec![Scalar::new(2), -Scalar::ONE]);
    }

    #[test]
    fn lagrange_reconstructs_random_polynomials() {
        let mut r = rng();
        for degree in 0..6usize {
            let coeffs: Vec<Scalar> = (0..=degree).map(|_| Scalar::random(&mut r)).collect();
            let idx: Vec<u64> = (1..=degree as u64 + 1).map(|i| i * 3).collect();
            let lag = lagrange_at_zero(&idx);
            let got: Scalar = idx.iter().zip(&lag).map(|(&i, &c)| eval_poly(&coeffs, Scalar::new(i)) * c).sum();
            assert_eq!(got, coeffs[0]);
        }
    }

    #[test]
    fn exhaustive_narrow_ge_trees_reconstruct_only_when_satisfied() {
        let mut r = rng();
        let width = KeyWidth::W8;
        for theta in [0u64, 1, 11, 20, 100, 128, 200, 255] {
            let tree = build_access_tree_with(width, theta, CompareOp::Ge).unwrap();
            let y = Scalar::random(&mut r);
            let shares = share_secret(&tree, y, &mut r);
            for k in 0..256u64 {
                let got = reconstruct_secret(&tree, &shares, &width.encode(k));
                if k >= theta {
                    assert_eq!(got, Some(y), "theta={theta} k={k}");
                } else {
                    assert_eq!(got, None, "theta={theta} k={k}");
                }
            }
        }
    }

    #[test]
    fn recombination_in_exponent_matches_scalar() {
        let ctx = crate::group::GroupContext::transparent("sharing").unwrap();
        let mut r = rng();
        let tree = crate::abe::tree::build_access_tree(1000, CompareOp::Le).unwrap();
        let y = Scalar::random(&mut r);
        let shares = share_secret(&tree, y, &mut r);
        let attrs = crate::abe::attribute::encode_attributes(321);
        let elem: Option<ElemGT> =
            recombine(&tree, |_, node, a| attrs.contains(a).then(|| ctx.gt_pow(shares.get(node))));
        assert_eq!(elem.unwrap().exponent(), y);
    }
}
