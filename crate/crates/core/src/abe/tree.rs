//! Threshold-gate access trees over bag-of-bits attributes.

use std::fmt;
use std::str::FromStr;

use super::attribute::{encode_attributes, Attribute, AttributeSet, KeyWidth};
use super::AbeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CompareOp {
    Eq,
    Ge,
    Gt,
    Le,
    Lt,
}

impl CompareOp {
    pub const ALL: [CompareOp; 5] = [CompareOp::Eq, CompareOp::Ge, CompareOp::Gt, CompareOp::Le, CompareOp::Lt];

    pub fn holds(self, k: u64, theta: u64) -> bool {
        match self {
            CompareOp::Eq => k == theta,
            CompareOp::Ge => k >= theta,
            CompareOp::Gt => k > theta,
            CompareOp::Le => k <= theta,
            CompareOp::Lt => k < theta,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CompareOp::Eq => "eq",
            CompareOp::Ge => "ge",
            CompareOp::Gt => "gt",
            CompareOp::Le => "le",
            CompareOp::Lt => "lt",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            CompareOp::Eq => 0,
            CompareOp::Ge => 1,
            CompareOp::Gt => 2,
            CompareOp::Le => 3,
            CompareOp::Lt => 4,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        CompareOp::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for CompareOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CompareOp {
    type Err = AbeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CompareOp::ALL.into_iter().find(|op| op.as_str() == s).ok_or_else(|| AbeError::UnknownOperator(s.to_string()))
    }
}

/// Recursive description of a tree, used for construction and structural
/// comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Leaf(Attribute),
    Gate { threshold: usize, children: Vec<Expr> },
}

impl Expr {
    pub fn leaf(a: Attribute) -> Self {
        Expr::Leaf(a)
    }

    pub fn and(children: Vec<Expr>) -> Self {
        Expr::Gate { threshold: children.len(), children }
    }

    pub fn or(children: Vec<Expr>) -> Self {
        Expr::Gate { threshold: 1, children }
    }

    fn and_or_single(mut children: Vec<Expr>) -> Self {
        if children.len() == 1 {
            children.pop().unwrap()
        } else {
            Expr::and(children)
        }
    }

    fn or_or_single(mut children: Vec<Expr>) -> Self {
        if children.len() == 1 {
            children.pop().unwrap()
        } else {
            Expr::or(children)
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Expr::Leaf(_) => 1,
            Expr::Gate { children, .. } => children.iter().map(Expr::leaf_count).sum(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Leaf(a) => write!(f, "{a}"),
            Expr::Gate { threshold, children } => {
                let sep = if *threshold == children.len() {
                    " AND ".to_string()
                } else if *threshold == 1 {
                    " OR ".to_string()
                } else {
                    format!(" {threshold}of{} ", children.len())
                };
                f.write_str("(")?;
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(&sep)?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeNode {
    /// `leaf` is the ordinal of this leaf among all leaves in pre-order.
    Leaf { attribute: Attribute, leaf: usize },
    /// Children are node ids; the child at position `j` has index `j + 1`.
    Gate { threshold: usize, children: Vec<usize> },
}

/// Flattened access tree. Node 0 is the root and ids follow pre-order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessTree {
    nodes: Vec<TreeNode>,
    leaf_count: usize,
}

impl AccessTree {
    pub fn from_expr(expr: &Expr) -> Result<Self, AbeError> {
        let mut tree = AccessTree { nodes: Vec::new(), leaf_count: 0 };
        tree.push(expr)?;
        Ok(tree)
    }

    fn push(&mut self, expr: &Expr) -> Result<usize, AbeError> {
        let id = self.nodes.len();
        match expr {
            Expr::Leaf(a) => {
                self.nodes.push(TreeNode::Leaf { attribute: *a, leaf: self.leaf_count });
                self.leaf_count += 1;
            }
            Expr::Gate { threshold, children } => {
                if children.is_empty() || *threshold == 0 || *threshold > children.len() {
                    return Err(AbeError::MalformedTree("gate threshold must be in 1..=children"));
                }
                self.nodes.push(TreeNode::Gate { threshold: *threshold, children: Vec::new() });
                let mut ids = Vec::with_capacity(children.len());
                for c in children {
                    ids.push(self.push(c)?);
                }
                if let TreeNode::Gate { children, .. } = &mut self.nodes[id] {
                    *children = ids;
                }
            }
        }
        Ok(id)
    }

    pub fn to_expr(&self) -> Expr {
        self.expr_at(0)
    }

    fn expr_at(&self, id: usize) -> Expr {
        match &self.nodes[id] {
            TreeNode::Leaf { attribute, .. } => Expr::Leaf(*attribute),
            TreeNode::Gate { threshold, children } => {
                Expr::Gate { threshold: *threshold, children: children.iter().map(|&c| self.expr_at(c)).collect() }
            }
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// `(node id, attribute)` for every leaf in pre-order.
    pub fn leaves(&self) -> impl Iterator<Item = (usize, Attribute)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(id, n)| match n {
            TreeNode::Leaf { attribute, .. } => Some((id, *attribute)),
            TreeNode::Gate { .. } => None,
        })
    }

    /// Standard threshold-gate satisfaction.
    pub fn accepts(&self, attrs: &AttributeSet) -> bool {
        self.accepts_at(0, attrs)
    }

    fn accepts_at(&self, id: usize, attrs: &AttributeSet) -> bool {
        match &self.nodes[id] {
            TreeNode::Leaf { attribute, .. } => attrs.contains(*attribute),
            TreeNode::Gate { threshold, children } => {
                let mut ok = 0;
                let mut failed = 0;
                for &c in children {
                    if self.accepts_at(c, attrs) {
                        ok += 1;
                        if ok == *threshold {
                            return true;
                        }
                    } else {
                        failed += 1;
                        if failed > children.len() - threshold {
                            return false;
                        }
                    }
                }
                false
            }
        }
    }

    pub fn accepts_key(&self, k: u64) -> bool {
        self.accepts(&encode_attributes(k))
    }
}

fn bit_len(x: u64) -> u8 {
    (64 - x.leading_zeros()) as u8
}

fn low_mask(i: u8) -> u64 {
    if i >= 63 {
        u64::MAX
    } else {
        (1u64 << (i + 1)) - 1
    }
}

fn tautology() -> Expr {
    Expr::or(vec![Expr::leaf(Attribute::bit(0, false)), Expr::leaf(Attribute::bit(0, true))])
}

/// `k[0..=i] >= theta[0..=i]`; `None` means the comparison always holds.
fn ge_suffix(theta: u64, i: u8) -> Option<Expr> {
    if theta & low_mask(i) == 0 {
        return None;
    }
    let here = Expr::leaf(Attribute::bit(i, true));
    let rest = if i == 0 { None } else { ge_suffix(theta, i - 1) };
    if (theta >> i) & 1 == 1 {
        Some(match rest {
            None => here,
            Some(r) => Expr::and(vec![here, r]),
        })
    } else {
        // Lower bits are non-zero here, so `rest` is a real constraint.
        Some(Expr::or(vec![here, rest.expect("non-zero suffix")]))
    }
}

/// `k[0..=i] <= theta[0..=i]`; mirror of [`ge_suffix`] on polarity-0 bits.
fn le_suffix(theta: u64, i: u8) -> Option<Expr> {
    let mask = low_mask(i);
    if theta & mask == mask {
        return None;
    }
    let here = Expr::leaf(Attribute::bit(i, false));
    let rest = if i == 0 { None } else { le_suffix(theta, i - 1) };
    if (theta >> i) & 1 == 0 {
        Some(match rest {
            None => here,
            Some(r) => Expr::and(vec![here, r]),
        })
    } else {
        Some(Expr::or(vec![here, rest.expect("suffix not all ones")]))
    }
}

fn ge_expr(width: KeyWidth, theta: u64) -> Expr {
    if theta == 0 {
        return tautology();
    }
    let w = bit_len(theta);
    let markers: Vec<u8> = width.markers().filter(|&m| m >= w).collect();
    let gap_end = markers.first().copied().unwrap_or(width.bits());
    let mut children: Vec<Expr> = markers.iter().map(|&m| Expr::leaf(Attribute::Ge2Exp(m))).collect();
    children.extend((w..gap_end).map(|j| Expr::leaf(Attribute::bit(j, true))));
    children.push(ge_suffix(theta, w - 1).expect("theta is non-zero"));
    Expr::or_or_single(children)
}

fn le_expr(width: KeyWidth, theta: u64) -> Expr {
    if theta == width.max_key() {
        return tautology();
    }
    let w = bit_len(theta);
    let mut children: Vec<Expr> = (w..width.bits()).rev().map(|j| Expr::leaf(Attribute::bit(j, false))).collect();
    if w > 0 {
        if let Some(s) = le_suffix(theta, w - 1) {
            children.push(s);
        }
    }
    Expr::and_or_single(children)
}

fn eq_expr(width: KeyWidth, theta: u64) -> Expr {
    Expr::and((0..width.bits()).map(|i| Expr::leaf(Attribute::bit(i, (theta >> i) & 1 == 1))).collect())
}

/// Comparison tree `k op theta` for a given key width.
pub fn comparison_expr(width: KeyWidth, theta: u64, op: CompareOp) -> Result<Expr, AbeError> {
    let max = width.max_key();
    if theta > max {
        return Err(AbeError::ThresholdOutOfRange { theta, op });
    }
    Ok(match op {
        CompareOp::Eq => eq_expr(width, theta),
        CompareOp::Ge => ge_expr(width, theta),
        CompareOp::Le => le_expr(width, theta),
        CompareOp::Gt => {
            if theta == max {
                return Err(AbeError::ThresholdOutOfRange { theta, op });
            }
            ge_expr(width, theta + 1)
        }
        CompareOp::Lt => {
            if theta == 0 {
                return Err(AbeError::ThresholdOutOfRange { theta, op });
            }
            le_expr(width, theta - 1)
        }
    })
}

pub fn build_access_tree_with(width: KeyWidth, theta: u64, op: CompareOp) -> Result<AccessTree, AbeError> {
    AccessTree::from_expr(&comparison_expr(width, theta, op)?)
}

/// Access tree over 64-bit keys accepting exactly the keys with `k op theta`.
pub fn build_access_tree(theta: u64, op: CompareOp) -> Result<AccessTree, AbeError> {
    build_access_tree_with(KeyWidth::W64, theta, op)
}
