//! A master-less, asynchronous, distributed dataflow stream-processing
//! engine. Peer workers ("ranks") route messages directly to one another
//! over tagged channels, execute DAG-structured operator pipelines with
//! windowed semantics, and are measured by a built-in benchmark harness
//! with event-time latency and sustainable-throughput search.
//!
//! The crate is organized along the moving parts:
//!
//! * [`tag`], [`event`], [`message`] — domain types and the bit-exact wire
//!   format.
//! * [`transport`] — blocking, tag-matched point-to-point delivery with
//!   in-process and socket backends.
//! * [`runtime`] — topology, per-vertex channel wiring, the thread triad
//!   per channel, pipelining, and lifecycle.
//! * [`ops_stateless`] / [`ops_stateful`] — the operator library.
//! * [`bench`] — workloads, generator, sink, metrics, and the
//!   sustainable-throughput search.

pub mod bench;
pub mod clock;
pub mod event;
pub mod message;
pub mod metrics;
pub mod ops_stateful;
pub mod ops_stateless;
pub mod runtime;
pub mod tag;
pub mod transport;

pub use event::{window_id, Event, WindowSpec};
pub use message::{deserialize_message, serialize_message, Message, MessageKind};
pub use tag::{decode_tag, encode_tag, ChannelTag};
