//! Key-policy ABE over bag-of-bits keys, with proxy transformation and
//! blinded additive window aggregation.
//!
//! Messages live in the target group: a value `v` is carried as
//! `e(g,g)^v`, so every body and every transformed ciphertext is a `GT`
//! element and decryption ends with a bounded discrete-log lookup.

mod attribute;
mod cipher;
pub mod codec;
mod decrypt;
mod keys;
mod sharing;
mod tree;

use thiserror::Error;

use crate::group::GroupError;

pub use attribute::{encode_attributes, Attribute, AttributeSet, KeyWidth, GE2EXP_MARKERS, UNIVERSE_SIZE};
pub use cipher::{
    compute_sum, encrypt, transform, BodySource, CiphertextRecord, TransformOutcome, TransformedCiphertext, WindowSum,
};
pub use decrypt::{decrypt_trigger, decrypt_window, DlogTable, WindowAverage, DEFAULT_TABLE_CAP};
pub use keys::{
    generate_window_secrets, master_keygen, user_keygen, AccessPolicy, MasterKey, PublicKey, TransformKey, UserKey,
    WindowSecretSet, WindowSecrets, WindowUnblind,
};
pub use sharing::{lagrange_at_zero, recombine, reconstruct_secret, share_secret, Interpolate, NodeShares};
pub use tree::{build_access_tree, build_access_tree_with, comparison_expr, AccessTree, CompareOp, Expr, TreeNode};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AbeError {
    #[error("unknown comparison operator {0:?}")]
    UnknownOperator(String),
    #[error("malformed access tree: {0}")]
    MalformedTree(&'static str),
    #[error("threshold {theta} out of range for operator {op}")]
    ThresholdOutOfRange { theta: u64, op: CompareOp },
    #[error("invalid policy {0:?}")]
    InvalidPolicy(String),
    #[error("invalid window size {0}")]
    InvalidWindowSize(u32),
    #[error("no window secrets for window size {0}")]
    UnknownWindowSize(u32),
    #[error("malformed key: {0}")]
    MalformedKey(&'static str),
    #[error("value {v} exceeds the message bound {v_max}")]
    ValueOutOfRange { v: u64, v_max: u64 },
    #[error("key and ciphertext belong to different group contexts")]
    ContextMismatch,
    #[error("ciphertext carries no body for window size {0}")]
    MissingWindowBody(u32),
    #[error("window needs {expected} ciphertexts, got {got}")]
    WrongWindowLength { expected: u32, got: usize },
    #[error("window keys are not consecutive")]
    NonConsecutiveWindow,
    #[error("window starting at {start} is not aligned to alpha={alpha}, beta={beta}")]
    MisalignedWindow { start: u64, alpha: u64, beta: u32 },
    #[error("window mixes bodies of different kinds")]
    MixedBodies,
    #[error("key kind does not match the ciphertext")]
    WrongKeyKind,
    #[error("discrete-log table miss")]
    TableMiss,
    #[error("table bound {max} exceeds cap {cap}")]
    TableTooLarge { max: u64, cap: u64 },
    #[error(transparent)]
    Group(#[from] GroupError),
}
