//! Messages exchanged by owner, cloud and user, and their framing.
//!
//! # Wire format
//!
//! ```text
//! frame   := len:u32be payload[len]              len <= max frame (default 1 MiB)
//! payload := version:u8(0x01) tag:u8 field*
//! ```
//!
//! Fields are laid out in the fixed order listed for each variant:
//!
//! | tag  | variant         | fields                                                        |
//! |------|-----------------|---------------------------------------------------------------|
//! | 0x10 | RegisterStream  | stream:str, public_key:obj, sizes:u32 n × u32                 |
//! | 0x11 | UploadPolicy    | xml:str                                                       |
//! | 0x12 | Grant           | policy:str, user:str, transform_key:obj                       |
//! | 0x13 | KeyMaterial     | policy:str, user:str, access:policy, user_key:obj, v_max:u64  |
//! | 0x14 | Ciphertext      | stream:str, sizes:u32 n × u32, record:obj, request_xml:str    |
//! | 0x15 | Subscribe       | user:str, policy:str                                          |
//! | 0x16 | TriggerDelivery | policy:str, k:u64, body:GT, proof_part:GT                     |
//! | 0x17 | WindowDelivery  | policy:str, index:u64, e1:GT, e2:GT                           |
//! | 0x7f | Error           | code:u16, text:str                                            |
//!
//! `str` and `obj` are `u32be` length-prefixed; `obj` holds a tagged key or
//! ciphertext encoding. `GT` is a raw element at the group's fixed width.
//! `policy` is `0x00 op:u8 θ:u64` or `0x01 α:u64 β:u32`.
//! Ciphertext messages repeat the stream's window sizes because the record
//! encoding itself does not carry them.

mod frame;
mod pipe;
pub mod tcp;

use thiserror::Error;

use crate::abe::codec::{read_policy, write_policy, Tagged};
use crate::abe::{AccessPolicy, CiphertextRecord, PublicKey, TransformKey, UserKey};
use crate::codec::{CodecError, Reader, Writer, FORMAT_VERSION};
use crate::group::{ElemGT, GroupContext};

pub use frame::{read_frame, read_payload, write_frame, FrameReader, FrameWriter, DEFAULT_MAX_FRAME};
pub use pipe::{duplex, pipe, DuplexEnd, PipeReader, PipeWriter};

pub const TAG_REGISTER_STREAM: u8 = 0x10;
pub const TAG_UPLOAD_POLICY: u8 = 0x11;
pub const TAG_GRANT: u8 = 0x12;
pub const TAG_KEY_MATERIAL: u8 = 0x13;
pub const TAG_CIPHERTEXT: u8 = 0x14;
pub const TAG_SUBSCRIBE: u8 = 0x15;
pub const TAG_TRIGGER_DELIVERY: u8 = 0x16;
pub const TAG_WINDOW_DELIVERY: u8 = 0x17;
pub const TAG_ERROR: u8 = 0x7f;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("frame of {len} bytes exceeds the {max}-byte limit")]
    Oversize { len: usize, max: usize },
    #[error("peer closed the connection mid-frame")]
    Truncated,
    #[error("connection closed")]
    Closed,
    #[error("payload: {0}")]
    Codec(#[from] CodecError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    RegisterStream {
        stream: String,
        public_key: PublicKey,
        window_sizes: Vec<u32>,
    },
    UploadPolicy {
        xml: String,
    },
    /// Owner to cloud: the transform key for `(policy, user)`.
    Grant {
        policy_id: String,
        user_id: String,
        transform_key: TransformKey,
    },
    /// Owner to user: the user half of the key agreed during negotiation.
    KeyMaterial {
        policy_id: String,
        user_id: String,
        policy: AccessPolicy,
        user_key: UserKey,
        v_max: u64,
    },
    Ciphertext {
        stream: String,
        record: CiphertextRecord,
        request_xml: String,
    },
    Subscribe {
        user_id: String,
        policy_id: String,
    },
    TriggerDelivery {
        policy_id: String,
        k: u64,
        body: ElemGT,
        proof_part: ElemGT,
    },
    WindowDelivery {
        policy_id: String,
        index: u64,
        e1: ElemGT,
        e2: ElemGT,
    },
    Error {
        code: u16,
        text: String,
    },
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::RegisterStream { .. } => TAG_REGISTER_STREAM,
            Message::UploadPolicy { .. } => TAG_UPLOAD_POLICY,
            Message::Grant { .. } => TAG_GRANT,
            Message::KeyMaterial { .. } => TAG_KEY_MATERIAL,
            Message::Ciphertext { .. } => TAG_CIPHERTEXT,
            Message::Subscribe { .. } => TAG_SUBSCRIBE,
            Message::TriggerDelivery { .. } => TAG_TRIGGER_DELIVERY,
            Message::WindowDelivery { .. } => TAG_WINDOW_DELIVERY,
            Message::Error { .. } => TAG_ERROR,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::RegisterStream { .. } => "RegisterStream",
            Message::UploadPolicy { .. } => "UploadPolicy",
            Message::Grant { .. } => "Grant",
            Message::KeyMaterial { .. } => "KeyMaterial",
            Message::Ciphertext { .. } => "Ciphertext",
            Message::Subscribe { .. } => "Subscribe",
            Message::TriggerDelivery { .. } => "TriggerDelivery",
            Message::WindowDelivery { .. } => "WindowDelivery",
            Message::Error { .. } => "Error",
        }
    }
}

fn write_sizes(w: &mut Writer, sizes: &[u32]) {
    w.u32(sizes.len() as u32);
    for &s in sizes {
        w.u32(s);
    }
}

fn read_sizes(r: &mut Reader<'_>) -> Result<Vec<u32>, CodecError> {
    let n = r.count(4)?;
    (0..n).map(|_| r.u32()).collect()
}

/// Canonical payload encoding (without the frame length).
pub fn encode(ctx: &GroupContext, m: &Message) -> Vec<u8> {
    let mut w = Writer::new();
    w.u8(FORMAT_VERSION).u8(m.tag());
    match m {
        Message::RegisterStream { stream, public_key, window_sizes } => {
            w.str(stream).bytes(&public_key.to_bytes(ctx));
            write_sizes(&mut w, window_sizes);
        }
        Message::UploadPolicy { xml } => {
            w.str(xml);
        }
        Message::Grant { policy_id, user_id, transform_key } => {
            w.str(policy_id).str(user_id).bytes(&transform_key.to_bytes(ctx));
        }
        Message::KeyMaterial { policy_id, user_id, policy, user_key, v_max } => {
            w.str(policy_id).str(user_id);
            write_policy(&mut w, policy);
            w.bytes(&user_key.to_bytes(ctx)).u64(*v_max);
        }
        Message::Ciphertext { stream, record, request_xml } => {
            w.str(stream);
            write_sizes(&mut w, &record.window_sizes().collect::<Vec<_>>());
            w.bytes(&record.to_bytes(ctx)).str(request_xml);
        }
        Message::Subscribe { user_id, policy_id } => {
            w.str(user_id).str(policy_id);
        }
        Message::TriggerDelivery { policy_id, k, body, proof_part } => {
            w.str(policy_id).u64(*k).elem_gt(body).elem_gt(proof_part);
        }
        Message::WindowDelivery { policy_id, index, e1, e2 } => {
            w.str(policy_id).u64(*index).elem_gt(e1).elem_gt(e2);
        }
        Message::Error { code, text } => {
            w.u16(*code).str(text);
        }
    }
    w.finish()
}

pub fn decode(ctx: &GroupContext, payload: &[u8]) -> Result<Message, CodecError> {
    let mut r = Reader::new(payload);
    let version = r.u8()?;
    if version != FORMAT_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let m = match r.u8()? {
        TAG_REGISTER_STREAM => Message::RegisterStream {
            stream: r.string()?,
            public_key: PublicKey::from_bytes(ctx, r.bytes()?)?,
            window_sizes: read_sizes(&mut r)?,
        },
        TAG_UPLOAD_POLICY => Message::UploadPolicy { xml: r.string()? },
        TAG_GRANT => Message::Grant {
            policy_id: r.string()?,
            user_id: r.string()?,
            transform_key: TransformKey::from_bytes(ctx, r.bytes()?)?,
        },
        TAG_KEY_MATERIAL => Message::KeyMaterial {
            policy_id: r.string()?,
            user_id: r.string()?,
            policy: read_policy(&mut r)?,
            user_key: UserKey::from_bytes(ctx, r.bytes()?)?,
            v_max: r.u64()?,
        },
        TAG_CIPHERTEXT => {
            let stream = r.string()?;
            let sizes = read_sizes(&mut r)?;
            let record = CiphertextRecord::from_bytes(ctx, r.bytes()?, &sizes)?;
            if !record.window_sizes().eq(sizes.iter().copied()) {
                return Err(CodecError::Invalid("window sizes not ascending"));
            }
            Message::Ciphertext { stream, record, request_xml: r.string()? }
        }
        TAG_SUBSCRIBE => Message::Subscribe { user_id: r.string()?, policy_id: r.string()? },
        TAG_TRIGGER_DELIVERY => Message::TriggerDelivery {
            policy_id: r.string()?,
            k: r.u64()?,
            body: r.elem_gt(ctx)?,
            proof_part: r.elem_gt(ctx)?,
        },
        TAG_WINDOW_DELIVERY => Message::WindowDelivery {
            policy_id: r.string()?,
            index: r.u64()?,
            e1: r.elem_gt(ctx)?,
            e2: r.elem_gt(ctx)?,
        },
        TAG_ERROR => Message::Error { code: r.u16()?, text: r.string()? },
        t => return Err(CodecError::UnknownTag(t)),
    };
    r.finish()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_window_delivery_round_trips() {
        let ctx = GroupContext::transparent("wire").unwrap();
        let m =
            Message::WindowDelivery { policy_id: "p".into(), index: 0, e1: ctx.identity_gt(), e2: ctx.identity_gt() };
        let bytes = encode(&ctx, &m);
        assert_eq!(&bytes[..2], &[FORMAT_VERSION, TAG_WINDOW_DELIVERY]);
        assert_eq!(decode(&ctx, &bytes).unwrap(), m);
    }

    #[test]
    fn unknown_tag_and_version_rejected() {
        let ctx = GroupContext::transparent("wire").unwrap();
        assert_eq!(decode(&ctx, &[FORMAT_VERSION, 0x42]).unwrap_err(), CodecError::UnknownTag(0x42));
        assert_eq!(decode(&ctx, &[0x02, TAG_ERROR]).unwrap_err(), CodecError::UnsupportedVersion(2));
        assert_eq!(decode(&ctx, &[]).unwrap_err(), CodecError::Truncated);
    }

    #[test]
    fn unsorted_ciphertext_sizes_rejected() {
        let ctx = GroupContext::transparent("wire").unwrap();
        let mut rng = ctx.rng();
        let (_, pk) = crate::abe::master_keygen(&ctx, &mut rng);
        let ws = crate::abe::generate_window_secrets(&[2, 5], &mut rng).unwrap();
        let record = crate::abe::encrypt(&ctx, &pk, &ws, 10, 1, 1, &mut rng).unwrap();
        let m = Message::Ciphertext { stream: "s".into(), record, request_xml: String::new() };
        let mut bytes = encode(&ctx, &m);
        // sizes sit right after the 1-byte stream name: swap 2 and 5.
        let at = 2 + 4 + 1 + 4;
        bytes[at + 3] = 5;
        bytes[at + 7] = 2;
        assert_eq!(decode(&ctx, &bytes).unwrap_err(), CodecError::Invalid("window sizes not ascending"));
    }
}
