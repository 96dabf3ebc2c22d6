//! Blocking, tag-matched point-to-point message delivery between ranks.
//!
//! Two interchangeable backends implement the same contract:
//!
//! * [`InProcessFabric`] — ranks are threads in one process sharing a set of
//!   bounded per-tag queues; the default for desk-scale runs and tests.
//! * [`SocketTransport`] — one process per rank, length-prefixed frames over
//!   TCP, one stream per ordered rank pair.
//!
//! The contract, for any backend:
//!
//! * `send` blocks until the message is enqueued for delivery and never
//!   silently drops.
//! * Delivery is FIFO per tag.
//! * Exactly one receiver may claim a tag, enforced at registration; a
//!   registered receiver blocks until a message with exactly that tag
//!   arrives.
//! * Closing the transport wakes blocked receivers with a clean
//!   [`TransportError::Closed`] instead of wedging them.

mod inproc;
mod router;
pub(crate) mod socket;

pub use inproc::{InProcessFabric, InProcessHandle};
pub use router::TagReceiver;
pub use socket::{bind_local_world, SocketBinding, SocketTransport};

use crate::message::Message;
use crate::tag::ChannelTag;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Largest rank count the 8-bit tag field can address.
pub const MAX_WORLD_SIZE: usize = 256;

/// Default bound on every per-tag delivery queue, in messages. Bounded
/// queues block producers when full, which is what makes back-pressure
/// observable end to end.
pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport is closed")]
    Closed,
    #[error("timed out waiting for a message on tag {0}")]
    Timeout(ChannelTag),
    #[error("receiver already registered for tag {0}")]
    ReceiverTaken(ChannelTag),
    #[error("destination rank {dest} out of range for world size {world_size}")]
    BadDestination { dest: usize, world_size: usize },
    #[error("tag {tag} targets rank {tag_rank} but send was addressed to {dest}")]
    TagMismatch {
        tag: ChannelTag,
        tag_rank: u8,
        dest: usize,
    },
    #[error("world size {0} exceeds the {MAX_WORLD_SIZE} rank limit of the tag layout")]
    WorldTooLarge(usize),
    #[error("frame codec failure: {0}")]
    Codec(#[from] crate::message::CodecError),
    #[error("peer {rank} unreachable: {source}")]
    Unreachable {
        rank: usize,
        source: std::io::Error,
    },
    #[error("handshake with peer failed: {0}")]
    Handshake(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Network location of one rank (socket backend only).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankAddress {
    pub rank: usize,
    pub endpoint: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    InProcess,
    Socket,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportConfig {
    pub world_size: usize,
    pub backend: BackendKind,
    /// One address per rank; required by the socket backend.
    pub addresses: Vec<RankAddress>,
    pub connect_timeout_ms: u64,
    pub send_queue_capacity: usize,
}

impl TransportConfig {
    pub fn in_process(world_size: usize) -> Self {
        TransportConfig {
            world_size,
            backend: BackendKind::InProcess,
            addresses: Vec::new(),
            connect_timeout_ms: 5_000,
            send_queue_capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }

    pub fn socket(addresses: Vec<RankAddress>) -> Self {
        TransportConfig {
            world_size: addresses.len(),
            backend: BackendKind::Socket,
            addresses,
            connect_timeout_ms: 5_000,
            send_queue_capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if self.world_size == 0 || self.world_size > MAX_WORLD_SIZE {
            return Err(TransportError::WorldTooLarge(self.world_size));
        }
        Ok(())
    }
}

/// One rank's view of the message fabric.
pub trait Transport: Send + Sync {
    fn rank(&self) -> usize;

    fn world_size(&self) -> usize;

    /// Blocks until `msg` is enqueued for delivery to `dest`. Delivery to
    /// the matching receiver is guaranteed, in FIFO order per tag.
    fn send(&self, dest: usize, tag: ChannelTag, msg: Message) -> Result<(), TransportError>;

    /// Claims the single receiver slot for `tag`. Fails if the tag already
    /// has a receiver.
    fn register_receiver(&self, tag: ChannelTag) -> Result<TagReceiver, TransportError>;

    /// Shuts the fabric down: wakes every blocked receiver with
    /// [`TransportError::Closed`] and fails subsequent sends.
    fn close(&self);

    /// Messages handed to the wire or local queues by this rank.
    fn sends_issued(&self) -> u64;
}

pub type SharedTransport = Arc<dyn Transport>;

pub(crate) fn check_destination(
    dest: usize,
    world_size: usize,
    tag: ChannelTag,
) -> Result<(), TransportError> {
    if dest >= world_size {
        return Err(TransportError::BadDestination { dest, world_size });
    }
    if usize::from(tag.target_rank) != dest {
        return Err(TransportError::TagMismatch {
            tag,
            tag_rank: tag.target_rank,
            dest,
        });
    }
    Ok(())
}
