//! Channel identity and its 32-bit wire encoding.
//!
//! A channel is the directed stream between one operator instance and
//! another: `(source_rank, source_op) -> (target_rank, target_op)`. Each of
//! the four coordinates fits in 8 bits, so the whole channel identity packs
//! into a single `u32` tag that is attached to every message and matched on
//! the receiving side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identity of a point-to-point channel between two operator instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelTag {
    pub source_rank: u8,
    pub source_op: u8,
    pub target_rank: u8,
    pub target_op: u8,
}

/// A coordinate did not fit into the 8-bit tag field.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("channel tag field {field} = {value} exceeds 255")]
pub struct TagFieldError {
    pub field: &'static str,
    pub value: usize,
}

impl ChannelTag {
    pub fn new(source_rank: u8, source_op: u8, target_rank: u8, target_op: u8) -> Self {
        ChannelTag {
            source_rank,
            source_op,
            target_rank,
            target_op,
        }
    }

    /// Checked construction from untyped coordinates; rejects anything
    /// that does not fit the 8-bit fields.
    pub fn try_new(
        source_rank: usize,
        source_op: usize,
        target_rank: usize,
        target_op: usize,
    ) -> Result<Self, TagFieldError> {
        let check = |field: &'static str, value: usize| -> Result<u8, TagFieldError> {
            u8::try_from(value).map_err(|_| TagFieldError { field, value })
        };
        Ok(ChannelTag {
            source_rank: check("source_rank", source_rank)?,
            source_op: check("source_op", source_op)?,
            target_rank: check("target_rank", target_rank)?,
            target_op: check("target_op", target_op)?,
        })
    }

    /// Packs the channel identity into the 32-bit message tag:
    /// `source_rank << 24 | source_op << 16 | target_rank << 8 | target_op`.
    pub fn encode(&self) -> u32 {
        (u32::from(self.source_rank) << 24)
            | (u32::from(self.source_op) << 16)
            | (u32::from(self.target_rank) << 8)
            | u32::from(self.target_op)
    }

    /// Inverse of [`encode`](Self::encode); total over all 32-bit values.
    pub fn decode(tag: u32) -> Self {
        ChannelTag {
            source_rank: (tag >> 24) as u8,
            source_op: (tag >> 16) as u8,
            target_rank: (tag >> 8) as u8,
            target_op: tag as u8,
        }
    }
}

impl std::fmt::Display for ChannelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "r{}.op{}->r{}.op{}",
            self.source_rank, self.source_op, self.target_rank, self.target_op
        )
    }
}

/// Convenience free function mirroring [`ChannelTag::encode`].
pub fn encode_tag(tag: ChannelTag) -> u32 {
    tag.encode()
}

/// Convenience free function mirroring [`ChannelTag::decode`].
pub fn decode_tag(raw: u32) -> ChannelTag {
    ChannelTag::decode(raw)
}
