//! Outsourced access control for encrypted key-value streams.
//!
//! A data owner encrypts `(k, v)` tuples under key-policy ABE. An untrusted
//! cloud pre-filters them with an XACML-subset policy engine, proxy-transforms
//! the ones a user may see, and aggregates blinded window sums. Users finish
//! decryption with a table lookup.

pub mod abe;
pub mod codec;
pub mod group;
pub mod policy;
pub mod roles;
pub mod wire;

pub use abe::{AbeError, AccessPolicy, CiphertextRecord, CompareOp, TransformKey, TransformedCiphertext, UserKey};
pub use group::{Backend, ElemG, ElemGT, GroupContext, GroupError, Scalar};
