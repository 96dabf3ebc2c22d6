//! Per-tag bounded delivery queues shared by both backends.

use super::TransportError;
use crate::message::Message;
use crate::tag::ChannelTag;
use crossbeam_channel::{bounded, Receiver, Sender};
use parking_lot::RwLock;
use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};

struct TagSlot {
    tx: Option<Sender<Message>>,
    rx: Option<Receiver<Message>>,
}

/// Routes messages into one bounded FIFO queue per 32-bit tag and hands the
/// single consumer side out at registration time.
pub(crate) struct TagRouter {
    capacity: usize,
    closed: AtomicBool,
    slots: RwLock<HashMap<u32, TagSlot>>,
}

impl TagRouter {
    pub(crate) fn new(capacity: usize) -> Self {
        TagRouter {
            capacity: capacity.max(1),
            closed: AtomicBool::new(false),
            slots: RwLock::new(HashMap::new()),
        }
    }

    fn sender_for(&self, raw: u32) -> Result<Sender<Message>, TransportError> {
        if self.closed.load(Ordering::Acquire) {
            return Err(TransportError::Closed);
        }
        if let Some(slot) = self.slots.read().get(&raw) {
            if let Some(tx) = &slot.tx {
                return Ok(tx.clone());
            }
            return Err(TransportError::Closed);
        }
        let mut slots = self.slots.write();
        if self.closed.load(Ordering::Acquire) {
            return Err(TransportError::Closed);
        }
        let slot = slots.entry(raw).or_insert_with(|| {
            let (tx, rx) = bounded(self.capacity);
            TagSlot {
                tx: Some(tx),
                rx: Some(rx),
            }
        });
        slot.tx.clone().ok_or(TransportError::Closed)
    }

    /// Blocks while the tag queue is full.
    pub(crate) fn push(&self, tag: ChannelTag, msg: Message) -> Result<(), TransportError> {
        let tx = self.sender_for(tag.encode())?;
        tx.send(msg).map_err(|_| TransportError::Closed)
    }

    pub(crate) fn register(&self, tag: ChannelTag) -> Result<TagReceiver, TransportError> {
        if self.closed.load(Ordering::Acquire) {
            return Err(TransportError::Closed);
        }
        let raw = tag.encode();
        let mut slots = self.slots.write();
        let slot = slots.entry(raw).or_insert_with(|| {
            let (tx, rx) = bounded(self.capacity);
            TagSlot {
                tx: Some(tx),
                rx: Some(rx),
            }
        });
        match slot.rx.take() {
            Some(rx) => Ok(TagReceiver { tag, rx }),
            None => Err(TransportError::ReceiverTaken(tag)),
        }
    }

    /// Drops every producer handle so blocked receivers wake with a clean
    /// disconnect once their queues drain.
    pub(crate) fn close(&self) {
        self.closed.store(true, Ordering::Release);
        let mut slots = self.slots.write();
        for slot in slots.values_mut() {
            slot.tx = None;
        }
    }
}

/// The exclusive consumer side of one tag's delivery queue.
pub struct TagReceiver {
    tag: ChannelTag,
    rx: Receiver<Message>,
}

impl TagReceiver {
    pub fn tag(&self) -> ChannelTag {
        self.tag
    }

    /// Blocks until a message with this receiver's tag arrives.
    pub fn recv(&self) -> Result<Message, TransportError> {
        self.rx.recv().map_err(|_| TransportError::Closed)
    }

    /// Like [`recv`](Self::recv) but gives up after `timeout`.
    pub fn recv_timeout(
        &self,
        timeout: std::time::Duration,
    ) -> Result<Message, TransportError> {
        use crossbeam_channel::RecvTimeoutError;
        self.rx.recv_timeout(timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => TransportError::Timeout(self.tag),
            RecvTimeoutError::Disconnected => TransportError::Closed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(n: u8) -> ChannelTag {
        ChannelTag::new(0, 0, 0, n)
    }

    #[test]
    fn queued_message_returns_immediately() {
        let router = TagRouter::new(8);
        router.push(tag(1), Message::terminate(tag(1))).unwrap();
        let rx = router.register(tag(1)).unwrap();
        assert_eq!(rx.recv().unwrap().tag, tag(1));
    }

    #[test]
    fn second_registration_rejected() {
        let router = TagRouter::new(8);
        let _rx = router.register(tag(2)).unwrap();
        assert!(matches!(
            router.register(tag(2)),
            Err(TransportError::ReceiverTaken(_))
        ));
    }

    #[test]
    fn close_wakes_blocked_receiver() {
        let router = std::sync::Arc::new(TagRouter::new(8));
        let rx = router.register(tag(3)).unwrap();
        let r2 = router.clone();
        let waker = std::thread::spawn(move || {
            std::thread::sleep(std::time::Duration::from_millis(30));
            r2.close();
        });
        assert!(matches!(rx.recv(), Err(TransportError::Closed)));
        waker.join().unwrap();
    }
}
