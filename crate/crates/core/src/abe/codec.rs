//! Canonical tagged encodings of keys and ciphertexts.
//!
//! Every object starts with `[type][version][element width]`. The text form
//! is standard base64 of the binary form.

use std::collections::BTreeMap;

use super::attribute::{Attribute, AttributeSet, UNIVERSE_SIZE};
use super::cipher::{BodySource, CiphertextRecord, TransformedCiphertext};
use super::keys::{AccessPolicy, MasterKey, PublicKey, TransformKey, UserKey, WindowSecrets, WindowUnblind};
use super::tree::{AccessTree, CompareOp, Expr};
use crate::codec::{from_base64, to_base64, CodecError, Reader, Writer};
use crate::group::GroupContext;

pub const TAG_PUBLIC_KEY: u8 = 0x01;
pub const TAG_MASTER_KEY: u8 = 0x02;
pub const TAG_WINDOW_SECRETS: u8 = 0x03;
pub const TAG_TRANSFORM_KEY: u8 = 0x04;
pub const TAG_USER_KEY: u8 = 0x05;
pub const TAG_CIPHERTEXT: u8 = 0x06;
pub const TAG_TRANSFORMED: u8 = 0x07;

/// Deepest gate nesting accepted when decoding a tree. Generated trees stay
/// below 70.
pub const MAX_TREE_DEPTH: usize = 128;

/// Objects with a self-contained tagged encoding.
pub trait Tagged: Sized {
    const TAG: u8;

    fn write_body(&self, w: &mut Writer);

    fn read_body(r: &mut Reader<'_>, ctx: &GroupContext) -> Result<Self, CodecError>;

    fn to_bytes(&self, ctx: &GroupContext) -> Vec<u8> {
        let mut w = Writer::with_header(Self::TAG, ctx);
        self.write_body(&mut w);
        w.finish()
    }

    fn from_bytes(ctx: &GroupContext, bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        r.header(Self::TAG, ctx)?;
        let v = Self::read_body(&mut r, ctx)?;
        r.finish()?;
        Ok(v)
    }

    fn to_text(&self, ctx: &GroupContext) -> String {
        to_base64(&self.to_bytes(ctx))
    }

    fn from_text(ctx: &GroupContext, text: &str) -> Result<Self, CodecError> {
        Self::from_bytes(ctx, &from_base64(text)?)
    }
}

pub fn write_policy(w: &mut Writer, p: &AccessPolicy) {
    match *p {
        AccessPolicy::Trigger { theta, op } => {
            w.u8(0).u8(op.code()).u64(theta);
        }
        AccessPolicy::Window { alpha, beta } => {
            w.u8(1).u64(alpha).u32(beta);
        }
    }
}

pub fn read_policy(r: &mut Reader<'_>) -> Result<AccessPolicy, CodecError> {
    let p = match r.u8()? {
        0 => {
            let op = CompareOp::from_code(r.u8()?).ok_or(CodecError::Invalid("comparison operator"))?;
            AccessPolicy::Trigger { op, theta: r.u64()? }
        }
        1 => AccessPolicy::Window { alpha: r.u64()?, beta: r.u32()? },
        t => return Err(CodecError::UnknownTag(t)),
    };
    p.validate().map_err(|_| CodecError::Invalid("policy parameters"))?;
    Ok(p)
}

fn write_expr(w: &mut Writer, e: &Expr) {
    match e {
        Expr::Leaf(a) => {
            w.u8(0).u8(a.index() as u8);
        }
        Expr::Gate { threshold, children } => {
            w.u8(1).u16(*threshold as u16).u16(children.len() as u16);
            for c in children {
                write_expr(w, c);
            }
        }
    }
}

fn read_expr(r: &mut Reader<'_>, depth: usize) -> Result<Expr, CodecError> {
    if depth > MAX_TREE_DEPTH {
        return Err(CodecError::TooDeep(MAX_TREE_DEPTH));
    }
    match r.u8()? {
        0 => Attribute::from_index(r.u8()? as usize).map(Expr::Leaf).ok_or(CodecError::Invalid("attribute index")),
        1 => {
            let threshold = r.u16()? as usize;
            let n = r.u16()? as usize;
            // Each child needs at least two bytes.
            if n * 2 > r.remaining() {
                return Err(CodecError::Truncated);
            }
            let children = (0..n).map(|_| read_expr(r, depth + 1)).collect::<Result<_, _>>()?;
            Ok(Expr::Gate { threshold, children })
        }
        t => Err(CodecError::UnknownTag(t)),
    }
}

pub fn write_tree(w: &mut Writer, t: &AccessTree) {
    write_expr(w, &t.to_expr());
}

pub fn read_tree(r: &mut Reader<'_>) -> Result<AccessTree, CodecError> {
    AccessTree::from_expr(&read_expr(r, 0)?).map_err(|_| CodecError::Invalid("gate threshold"))
}

impl Tagged for PublicKey {
    const TAG: u8 = TAG_PUBLIC_KEY;

    fn write_body(&self, w: &mut Writer) {
        w.elem_gt(&self.y_gt).u16(self.t.len() as u16);
        for t in &self.t {
            w.elem_g(t);
        }
    }

    fn read_body(r: &mut Reader<'_>, ctx: &GroupContext) -> Result<Self, CodecError> {
        let y_gt = r.elem_gt(ctx)?;
        if r.u16()? as usize != UNIVERSE_SIZE {
            return Err(CodecError::Invalid("public key size"));
        }
        let t = (0..UNIVERSE_SIZE).map(|_| r.elem_g(ctx)).collect::<Result<_, _>>()?;
        Ok(PublicKey { y_gt, t })
    }
}

impl Tagged for MasterKey {
    const TAG: u8 = TAG_MASTER_KEY;

    fn write_body(&self, w: &mut Writer) {
        w.scalar(self.y).u16(self.t.len() as u16);
        for &t in &self.t {
            w.scalar(t);
        }
    }

    fn read_body(r: &mut Reader<'_>, _ctx: &GroupContext) -> Result<Self, CodecError> {
        let y = r.scalar()?;
        if r.u16()? as usize != UNIVERSE_SIZE {
            return Err(CodecError::Invalid("master key size"));
        }
        let t: Vec<_> = (0..UNIVERSE_SIZE).map(|_| r.scalar()).collect::<Result<_, _>>()?;
        if y.is_zero() || t.iter().any(|s| s.is_zero()) {
            return Err(CodecError::Invalid("zero master secret"));
        }
        Ok(MasterKey { y, t })
    }
}

impl Tagged for WindowSecrets {
    const TAG: u8 = TAG_WINDOW_SECRETS;

    fn write_body(&self, w: &mut Writer) {
        w.u32(self.beta);
        for &r in &self.r {
            w.scalar(r);
        }
    }

    fn read_body(r: &mut Reader<'_>, _ctx: &GroupContext) -> Result<Self, CodecError> {
        let beta = r.u32()?;
        if beta == 0 || (beta as usize).saturating_mul(8) > r.remaining() {
            return Err(CodecError::Invalid("window size"));
        }
        let values = (0..beta).map(|_| r.scalar()).collect::<Result<_, _>>()?;
        Ok(WindowSecrets { beta, r: values })
    }
}

impl Tagged for TransformKey {
    const TAG: u8 = TAG_TRANSFORM_KEY;

    fn write_body(&self, w: &mut Writer) {
        write_policy(w, &self.policy);
        write_tree(w, &self.tree);
        w.u32(self.d.len() as u32);
        for d in &self.d {
            w.elem_g(d);
        }
    }

    fn read_body(r: &mut Reader<'_>, ctx: &GroupContext) -> Result<Self, CodecError> {
        let policy = read_policy(r)?;
        let tree = read_tree(r)?;
        let n = r.count(ctx.element_len())?;
        let d = (0..n).map(|_| r.elem_g(ctx)).collect::<Result<_, _>>()?;
        TransformKey::new(policy, tree, d).map_err(|_| CodecError::Invalid("leaf value count"))
    }
}

impl Tagged for UserKey {
    const TAG: u8 = TAG_USER_KEY;

    fn write_body(&self, w: &mut Writer) {
        w.scalar(self.z);
        match &self.window {
            None => {
                w.u8(0);
            }
            Some(u) => {
                w.u8(1).u64(u.alpha).u32(u.beta).scalar(u.sigma);
            }
        }
    }

    fn read_body(r: &mut Reader<'_>, _ctx: &GroupContext) -> Result<Self, CodecError> {
        let z = r.scalar()?;
        let window = match r.u8()? {
            0 => None,
            1 => Some(WindowUnblind { alpha: r.u64()?, beta: r.u32()?, sigma: r.scalar()? }),
            t => return Err(CodecError::UnknownTag(t)),
        };
        if window.is_some_and(|w| w.beta == 0) {
            return Err(CodecError::Invalid("window size"));
        }
        UserKey::new(z, window).map_err(|_| CodecError::Invalid("z_u must be non-zero"))
    }
}

fn write_source(w: &mut Writer, s: BodySource) {
    match s {
        BodySource::Trigger => w.u8(0),
        BodySource::Window(beta) => w.u8(1).u32(beta),
    };
}

fn read_source(r: &mut Reader<'_>) -> Result<BodySource, CodecError> {
    match r.u8()? {
        0 => Ok(BodySource::Trigger),
        1 => Ok(BodySource::Window(r.u32()?)),
        t => Err(CodecError::UnknownTag(t)),
    }
}

impl Tagged for TransformedCiphertext {
    const TAG: u8 = TAG_TRANSFORMED;

    fn write_body(&self, w: &mut Writer) {
        w.u64(self.k);
        write_source(w, self.source);
        w.elem_gt(&self.body).elem_gt(&self.proof_part);
    }

    fn read_body(r: &mut Reader<'_>, ctx: &GroupContext) -> Result<Self, CodecError> {
        Ok(TransformedCiphertext {
            k: r.u64()?,
            source: read_source(r)?,
            body: r.elem_gt(ctx)?,
            proof_part: r.elem_gt(ctx)?,
        })
    }
}

/// Storage layout of a ciphertext record:
///
/// ```text
/// [0x06][version][width] k:u64 B_k:bitmap(17) E'_i... trigger count:u16 body_β...
/// ```
///
/// `E'_i` follow the bitmap order and window bodies follow ascending `β`.
/// Window sizes are not stored: they are a property of the stream, so each
/// extra window size costs exactly one target-group element. Decoding
/// therefore needs the stream's sizes.
impl CiphertextRecord {
    pub fn to_bytes(&self, ctx: &GroupContext) -> Vec<u8> {
        let mut w = Writer::with_header(TAG_CIPHERTEXT, ctx);
        w.u64(self.k).raw(&self.attributes.to_bytes());
        for e in self.eprime.values() {
            w.elem_g(e);
        }
        w.elem_gt(&self.trigger_body).u16(self.window_bodies.len() as u16);
        for b in self.window_bodies.values() {
            w.elem_gt(b);
        }
        w.finish()
    }

    pub fn from_bytes(ctx: &GroupContext, bytes: &[u8], window_sizes: &[u32]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        r.header(TAG_CIPHERTEXT, ctx)?;
        let k = r.u64()?;
        let bitmap: [u8; AttributeSet::ENCODED_LEN] = r.take(AttributeSet::ENCODED_LEN)?.try_into().expect("sized");
        let attributes = AttributeSet::from_bytes(&bitmap).ok_or(CodecError::Invalid("attribute bitmap"))?;
        let eprime =
            attributes.iter().map(|a| Ok((a, r.elem_g(ctx)?))).collect::<Result<BTreeMap<_, _>, CodecError>>()?;
        let trigger_body = r.elem_gt(ctx)?;
        let mut sizes = window_sizes.to_vec();
        sizes.sort_unstable();
        sizes.dedup();
        if r.u16()? as usize != sizes.len() {
            return Err(CodecError::Invalid("window body count"));
        }
        let window_bodies = sizes
            .into_iter()
            .map(|beta| Ok((beta, r.elem_gt(ctx)?)))
            .collect::<Result<BTreeMap<_, _>, CodecError>>()?;
        r.finish()?;
        Ok(CiphertextRecord { k, attributes, eprime, trigger_body, window_bodies })
    }
}
