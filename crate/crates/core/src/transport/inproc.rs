//! Ranks-as-threads backend: every rank shares one in-process queue fabric.

use super::router::{TagReceiver, TagRouter};
use super::{check_destination, Transport, TransportError, MAX_WORLD_SIZE};
use crate::message::Message;
use crate::tag::ChannelTag;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// The shared queue fabric for a whole in-process deployment. Hand one
/// [`InProcessHandle`] to each rank via [`handle_for`](Self::handle_for).
pub struct InProcessFabric {
    world_size: usize,
    router: Arc<TagRouter>,
}

impl InProcessFabric {
    pub fn new(world_size: usize, queue_capacity: usize) -> Result<Arc<Self>, TransportError> {
        if world_size == 0 || world_size > MAX_WORLD_SIZE {
            return Err(TransportError::WorldTooLarge(world_size));
        }
        Ok(Arc::new(InProcessFabric {
            world_size,
            router: Arc::new(TagRouter::new(queue_capacity)),
        }))
    }

    pub fn handle_for(self: &Arc<Self>, rank: usize) -> Arc<InProcessHandle> {
        assert!(rank < self.world_size, "rank out of range");
        Arc::new(InProcessHandle {
            rank,
            fabric: self.clone(),
            sends: AtomicU64::new(0),
        })
    }

    pub fn close(&self) {
        self.router.close();
    }
}

/// One rank's endpoint on the in-process fabric.
pub struct InProcessHandle {
    rank: usize,
    fabric: Arc<InProcessFabric>,
    sends: AtomicU64,
}

impl Transport for InProcessHandle {
    fn rank(&self) -> usize {
        self.rank
    }

    fn world_size(&self) -> usize {
        self.fabric.world_size
    }

    fn send(&self, dest: usize, tag: ChannelTag, msg: Message) -> Result<(), TransportError> {
        check_destination(dest, self.fabric.world_size, tag)?;
        self.fabric.router.push(tag, msg)?;
        self.sends.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn register_receiver(&self, tag: ChannelTag) -> Result<TagReceiver, TransportError> {
        self.fabric.router.register(tag)
    }

    fn close(&self) {
        self.fabric.close();
    }

    fn sends_issued(&self) -> u64 {
        self.sends.load(Ordering::Relaxed)
    }
}
