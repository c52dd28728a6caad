//! Symmetric bilinear group arithmetic.
//!
//! Only the *transparent* backend is compiled in: every element is stored as
//! its discrete logarithm relative to the group generator, and the pairing
//! multiplies exponents modulo the group order. This gives a faithful model
//! of the algebra (all protocol equations hold exactly) while making every
//! intermediate value inspectable, which is what the test-suite relies on.
//! It offers **no security whatsoever**.
//!
//! The `External` backend id is reserved for a production pairing library;
//! asking for it in this build yields [`GroupError::BackendUnavailable`].

mod scalar;

use std::fmt;
use std::ops::{Div, Mul};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use scalar::{batch_invert, Scalar, MODULUS};

/// Serialized width of every transparent-backend element.
pub const TRANSPARENT_ELEMENT_LEN: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("unknown backend id {0:?}")]
    UnknownBackend(String),
    #[error("backend unavailable: {0} support is not compiled into this build")]
    BackendUnavailable(Backend),
    #[error("transparent backend requires a non-empty seed")]
    EmptySeed,
    #[error("elements belong to different group contexts")]
    ContextMismatch,
    #[error("malformed element encoding: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    Transparent,
    External,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Transparent => "transparent",
            Backend::External => "external",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transparent" => Ok(Backend::Transparent),
            "external" => Ok(Backend::External),
            other => Err(GroupError::UnknownBackend(other.to_string())),
        }
    }
}

/// Tag binding elements to the context that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContextId(u64);

/// Source-group element.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ElemG {
    ctx: ContextId,
    exp: Scalar,
}

/// Target-group element.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ElemGT {
    ctx: ContextId,
    exp: Scalar,
}

macro_rules! element_impl {
    ($ty:ident, $name:literal) => {
        impl $ty {
            pub fn context_id(&self) -> ContextId {
                self.ctx
            }

            /// Discrete logarithm of the element. Only meaningful on the
            /// transparent backend, where it is the stored representation.
            pub fn exponent(&self) -> Scalar {
                self.exp
            }

            pub fn pow(&self, s: Scalar) -> Self {
                $ty { ctx: self.ctx, exp: self.exp * s }
            }

            pub fn inverse(&self) -> Self {
                $ty { ctx: self.ctx, exp: -self.exp }
            }

            pub fn is_identity(&self) -> bool {
                self.exp.is_zero()
            }

            pub fn encode_into(&self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.exp.to_be_bytes());
            }

            pub fn to_bytes(&self) -> Vec<u8> {
                self.exp.to_be_bytes().to_vec()
            }
        }

        impl Mul for $ty {
            type Output = $ty;
            fn mul(self, rhs: $ty) -> $ty {
                assert_eq!(self.ctx, rhs.ctx, "elements from different group contexts");
                $ty { ctx: self.ctx, exp: self.exp + rhs.exp }
            }
        }

        // Division in a multiplicatively written group is multiplication by
        // the inverse.
        #[allow(clippy::suspicious_arithmetic_impl)]
        impl Div for $ty {
            type Output = $ty;
            fn div(self, rhs: $ty) -> $ty {
                self * rhs.inverse()
            }
        }

        impl fmt::Debug for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($name, "(g^{})"), self.exp.value())
            }
        }
    };
}

element_impl!(ElemG, "ElemG");
element_impl!(ElemGT, "ElemGT");

/// Immutable description of the agreed group plus the seed for deterministic
/// randomness. Cheap to clone and safe to share across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupContext {
    backend: Backend,
    id: ContextId,
    seed: Vec<u8>,
}

impl GroupContext {
    pub fn setup(backend: Backend, seed: &[u8]) -> Result<Self, GroupError> {
        match backend {
            Backend::External => Err(GroupError::BackendUnavailable(backend)),
            Backend::Transparent => {
                if seed.is_empty() {
                    return Err(GroupError::EmptySeed);
                }
                let digest = Sha256::new()
                    .chain_update(b"streamac/group/transparent")
                    .chain_update(MODULUS.to_be_bytes())
                    .chain_update(seed)
                    .finalize();
                let mut id = [0u8; 8];
                id.copy_from_slice(&digest[..8]);
                Ok(GroupContext { backend, id: ContextId(u64::from_be_bytes(id)), seed: seed.to_vec() })
            }
        }
    }

    /// Convenience constructor for the transparent backend.
    pub fn transparent(seed: &str) -> Result<Self, GroupError> {
        Self::setup(Backend::Transparent, seed.as_bytes())
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn id(&self) -> ContextId {
        self.id
    }

    pub fn order(&self) -> u64 {
        MODULUS
    }

    pub fn element_len(&self) -> usize {
        TRANSPARENT_ELEMENT_LEN
    }

    /// Deterministic RNG derived from the setup seed.
    pub fn rng(&self) -> ChaCha20Rng {
        let digest = Sha256::new().chain_update(b"streamac/group/rng").chain_update(&self.seed).finalize();
        ChaCha20Rng::from_seed(digest.into())
    }

    pub fn random_scalar<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Scalar {
        Scalar::random(rng)
    }

    pub fn g(&self) -> ElemG {
        self.g_pow(Scalar::ONE)
    }

    pub fn identity_g(&self) -> ElemG {
        self.g_pow(Scalar::ZERO)
    }

    pub fn g_pow(&self, s: Scalar) -> ElemG {
        ElemG { ctx: self.id, exp: s }
    }

    /// `e(g, g)`.
    pub fn gt(&self) -> ElemGT {
        self.gt_pow(Scalar::ONE)
    }

    pub fn identity_gt(&self) -> ElemGT {
        self.gt_pow(Scalar::ZERO)
    }

    pub fn gt_pow(&self, s: Scalar) -> ElemGT {
        ElemGT { ctx: self.id, exp: s }
    }

    pub fn pair(&self, a: &ElemG, b: &ElemG) -> Result<ElemGT, GroupError> {
        if a.ctx != self.id || b.ctx != self.id {
            return Err(GroupError::ContextMismatch);
        }
        Ok(ElemGT { ctx: self.id, exp: a.exp * b.exp })
    }

    pub fn owns_g(&self, e: &ElemG) -> bool {
        e.ctx == self.id
    }

    pub fn owns_gt(&self, e: &ElemGT) -> bool {
        e.ctx == self.id
    }

    fn decode_exp(&self, bytes: &[u8]) -> Result<Scalar, GroupError> {
        let arr: [u8; TRANSPARENT_ELEMENT_LEN] =
            bytes.try_into().map_err(|_| GroupError::Malformed("wrong element length"))?;
        Scalar::from_be_bytes(arr).ok_or(GroupError::Malformed("exponent not reduced"))
    }

    pub fn decode_g(&self, bytes: &[u8]) -> Result<ElemG, GroupError> {
        Ok(self.g_pow(self.decode_exp(bytes)?))
    }

    pub fn decode_gt(&self, bytes: &[u8]) -> Result<ElemGT, GroupError> {
        Ok(self.gt_pow(self.decode_exp(bytes)?))
    }
}
