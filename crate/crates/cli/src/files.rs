//! On-disk formats used by the role subcommands. All are TOML; binary
//! payloads are base64 of the canonical encodings.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use streamac_core::codec::{from_base64, to_base64};
use streamac_core::roles::OwnerKeys;
use streamac_core::wire::{decode, encode, Message};
use streamac_core::GroupContext;

pub const DEFAULT_GROUP: &str = "streamac";

/// Group parameters every party of a deployment must agree on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupParams {
    pub backend: String,
    pub group: String,
}

impl GroupParams {
    pub fn context(&self) -> Result<GroupContext> {
        let backend = self.backend.parse()?;
        Ok(GroupContext::setup(backend, self.group.as_bytes())?)
    }
}

/// Owner secrets. Keep private.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerFile {
    #[serde(flatten)]
    pub params: GroupParams,
    pub stream: String,
    pub owner_keys: String,
}

impl OwnerFile {
    pub fn new(params: GroupParams, ctx: &GroupContext, keys: &OwnerKeys) -> Self {
        OwnerFile { params, stream: keys.stream.clone(), owner_keys: keys.to_text(ctx) }
    }

    pub fn keys(&self, ctx: &GroupContext) -> Result<OwnerKeys> {
        let keys = OwnerKeys::from_text(ctx, &self.owner_keys).context("owner_keys")?;
        if keys.stream != self.stream {
            bail!("owner file names stream {:?} but its keys are for {:?}", self.stream, keys.stream);
        }
        Ok(keys)
    }
}

/// Messages for the cloud: `UploadPolicy` and `Grant`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantFile {
    #[serde(flatten)]
    pub params: GroupParams,
    pub messages: Vec<String>,
}

/// One user's key material for one policy. Keep private.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserFile {
    #[serde(flatten)]
    pub params: GroupParams,
    pub key_material: String,
}

/// `cloud run` settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudConfig {
    pub listen: String,
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default = "default_group")]
    pub group: String,
    pub stall_timeout_ms: Option<u64>,
}

fn default_backend() -> String {
    "transparent".into()
}

fn default_group() -> String {
    DEFAULT_GROUP.into()
}

pub fn message_to_text(ctx: &GroupContext, m: &Message) -> String {
    to_base64(&encode(ctx, m))
}

pub fn message_from_text(ctx: &GroupContext, text: &str) -> Result<Message> {
    Ok(decode(ctx, &from_base64(text)?)?)
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
