//! Messages and the bit-exact wire frame.
//!
//! A message is a tagged batch of events (the unit of channel
//! communication) or one of two in-band control signals: a window marker,
//! declaring that the sending channel carries no further events for a given
//! window, and a terminate signal ending the stream.
//!
//! Wire frame layout (all integers little-endian):
//!
//! ```text
//! bytes 0..4   tag            u32  (encoded channel tag)
//! byte  4      kind           u8   (0 = DATA, 1 = WINDOW_MARKER, 2 = TERMINATE)
//! bytes 5..13  window_id      u64  (0 unless WINDOW_MARKER)
//! bytes 13..17 event_count    u32
//! ```
//!
//! followed by `event_count` event blocks:
//!
//! ```text
//! key u64 | value u64 | event_time u64 | payload_len u32 | payload bytes
//! ```

use crate::event::Event;
use crate::tag::ChannelTag;
use thiserror::Error;

/// Fixed frame header size: tag + kind + window_id + event_count.
pub const FRAME_HEADER_LEN: usize = 4 + 1 + 8 + 4;
/// Fixed per-event block size before the payload.
pub const EVENT_HEADER_LEN: usize = 8 + 8 + 8 + 4;
/// Frames larger than this are rejected on both send and receive.
pub const MAX_FRAME_LEN: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageKind {
    Data = 0,
    WindowMarker = 1,
    Terminate = 2,
}

impl MessageKind {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(MessageKind::Data),
            1 => Some(MessageKind::WindowMarker),
            2 => Some(MessageKind::Terminate),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub tag: ChannelTag,
    pub kind: MessageKind,
    /// Meaningful only for `WindowMarker`; zero otherwise.
    pub window_id: u64,
    /// Meaningful only for `Data`; empty otherwise.
    pub events: Vec<Event>,
}

impl Message {
    pub fn data(tag: ChannelTag, events: Vec<Event>) -> Self {
        Message {
            tag,
            kind: MessageKind::Data,
            window_id: 0,
            events,
        }
    }

    pub fn window_marker(tag: ChannelTag, window_id: u64) -> Self {
        Message {
            tag,
            kind: MessageKind::WindowMarker,
            window_id,
            events: Vec::new(),
        }
    }

    pub fn terminate(tag: ChannelTag) -> Self {
        Message {
            tag,
            kind: MessageKind::Terminate,
            window_id: 0,
            events: Vec::new(),
        }
    }

    pub fn wire_len(&self) -> usize {
        FRAME_HEADER_LEN + self.events.iter().map(Event::wire_len).sum::<usize>()
    }
}

/// A frame failed to decode; `offset` is the byte position of the problem.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("truncated frame at byte {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("unknown message kind {kind} at byte {offset}")]
    UnknownKind { offset: usize, kind: u8 },
    #[error("trailing garbage: {extra} bytes past the frame at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("frame length {len} exceeds the {max} byte limit")]
    Oversized { len: usize, max: usize },
}

pub fn serialize_message(msg: &Message) -> Result<Vec<u8>, CodecError> {
    let len = msg.wire_len();
    if len > MAX_FRAME_LEN {
        return Err(CodecError::Oversized {
            len,
            max: MAX_FRAME_LEN,
        });
    }
    let mut buf = Vec::with_capacity(len);
    buf.extend_from_slice(&msg.tag.encode().to_le_bytes());
    buf.push(msg.kind as u8);
    let window_id = if msg.kind == MessageKind::WindowMarker {
        msg.window_id
    } else {
        0
    };
    buf.extend_from_slice(&window_id.to_le_bytes());
    buf.extend_from_slice(&(msg.events.len() as u32).to_le_bytes());
    for event in &msg.events {
        buf.extend_from_slice(&event.key.to_le_bytes());
        buf.extend_from_slice(&event.value.to_le_bytes());
        buf.extend_from_slice(&event.event_time.to_le_bytes());
        buf.extend_from_slice(&(event.payload.len() as u32).to_le_bytes());
        buf.extend_from_slice(&event.payload);
    }
    debug_assert_eq!(buf.len(), len);
    Ok(buf)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.pos + n > self.buf.len() {
            return Err(CodecError::Truncated {
                offset: self.buf.len(),
                needed: self.pos + n - self.buf.len(),
            });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
}

pub fn deserialize_message(buf: &[u8]) -> Result<Message, CodecError> {
    if buf.len() > MAX_FRAME_LEN {
        return Err(CodecError::Oversized {
            len: buf.len(),
            max: MAX_FRAME_LEN,
        });
    }
    let mut cur = Cursor { buf, pos: 0 };
    let tag = ChannelTag::decode(cur.u32()?);
    let kind_offset = cur.pos;
    let kind_byte = cur.u8()?;
    let kind = MessageKind::from_byte(kind_byte).ok_or(CodecError::UnknownKind {
        offset: kind_offset,
        kind: kind_byte,
    })?;
    let window_id = cur.u64()?;
    let event_count = cur.u32()? as usize;
    let mut events = Vec::with_capacity(event_count.min(1 << 20));
    for _ in 0..event_count {
        let key = cur.u64()?;
        let value = cur.u64()?;
        let event_time = cur.u64()?;
        let payload_len = cur.u32()? as usize;
        let payload = cur.take(payload_len)?.to_vec();
        events.push(Event {
            key,
            value,
            event_time,
            payload,
        });
    }
    if cur.pos != buf.len() {
        return Err(CodecError::TrailingBytes {
            offset: cur.pos,
            extra: buf.len() - cur.pos,
        });
    }
    Ok(Message {
        tag,
        kind,
        window_id,
        events,
    })
}
