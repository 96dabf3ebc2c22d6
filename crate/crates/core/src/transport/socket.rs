//! Ranks-as-processes backend: length-prefixed frames over TCP.
//!
//! One stream per ordered rank pair. The connecting side opens with a
//! two-byte handshake (protocol version `0x01`, then its own rank); after
//! that every frame on the stream is a 4-byte little-endian length followed
//! by one wire frame. A demultiplexer thread per incoming stream routes
//! frames into the same per-tag queues the in-process backend uses, which
//! keeps the one-receiver-per-tag contract identical across backends.
//! Sends to the local rank never touch a socket.

use super::router::{TagReceiver, TagRouter};
use super::{check_destination, Transport, TransportConfig, TransportError};
use crate::message::{deserialize_message, serialize_message, Message, MAX_FRAME_LEN};
use crate::tag::ChannelTag;
use parking_lot::Mutex;
use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

const PROTOCOL_VERSION: u8 = 0x01;

/// A listener bound ahead of the connect phase so deployments can use
/// ephemeral ports: bind every rank first, exchange the addresses, then
/// [`establish`](Self::establish).
pub struct SocketBinding {
    listener: TcpListener,
}

impl SocketBinding {
    pub fn bind(endpoint: &str) -> Result<Self, TransportError> {
        let listener = TcpListener::bind(endpoint)?;
        Ok(SocketBinding { listener })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, TransportError> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts one stream from every peer and connects one stream to every
    /// peer, retrying connects until `connect_timeout_ms` so ranks may come
    /// up in any order.
    pub fn establish(
        self,
        rank: usize,
        config: &TransportConfig,
    ) -> Result<Arc<SocketTransport>, TransportError> {
        config.validate()?;
        let world_size = config.world_size;
        if config.addresses.len() != world_size {
            return Err(TransportError::Handshake(format!(
                "expected {} peer addresses, found {}",
                world_size,
                config.addresses.len()
            )));
        }

        let router = Arc::new(TagRouter::new(config.send_queue_capacity));
        let closed = Arc::new(AtomicBool::new(false));
        let incoming: Arc<Mutex<Vec<TcpStream>>> = Arc::new(Mutex::new(Vec::new()));
        let mut threads = Vec::new();

        // Accept ws-1 peers; each accepted stream gets its own demux thread.
        let expected_peers = world_size - 1;
        let accept_router = router.clone();
        let accept_closed = closed.clone();
        let accept_incoming = incoming.clone();
        let listener = self.listener;
        listener.set_nonblocking(true)?;
        let demux_threads: Arc<Mutex<Vec<thread::JoinHandle<()>>>> =
            Arc::new(Mutex::new(Vec::new()));
        let accept_demux = demux_threads.clone();
        let acceptor = thread::Builder::new()
            .name(format!("sock.r{rank}.accept"))
            .spawn(move || {
                let mut accepted = 0;
                while accepted < expected_peers && !accept_closed.load(Ordering::Acquire) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            stream.set_nonblocking(false).ok();
                            match read_handshake(&stream) {
                                Ok(peer_rank) => {
                                    let reader = match stream.try_clone() {
                                        Ok(r) => r,
                                        Err(err) => {
                                            log::warn!("clone of peer stream failed: {err}");
                                            continue;
                                        }
                                    };
                                    accept_incoming.lock().push(stream);
                                    let router = accept_router.clone();
                                    let handle = thread::Builder::new()
                                        .name(format!("sock.r{rank}.demux-from-r{peer_rank}"))
                                        .spawn(move || demux_loop(reader, router))
                                        .expect("spawn demux thread");
                                    accept_demux.lock().push(handle);
                                    accepted += 1;
                                }
                                Err(err) => log::warn!("rejected connection: {err}"),
                            }
                        }
                        Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            thread::sleep(Duration::from_millis(5));
                        }
                        Err(err) => {
                            log::warn!("accept failed: {err}");
                            break;
                        }
                    }
                }
            })
            .expect("spawn accept thread");
        threads.push(acceptor);

        // Connect out to every peer, retrying while they come up. On
        // failure the acceptor must be stopped, or it would poll forever.
        let deadline = Instant::now() + Duration::from_millis(config.connect_timeout_ms);
        let connect_all = || -> Result<Vec<Option<Mutex<TcpStream>>>, TransportError> {
            let mut peers = Vec::with_capacity(world_size);
            for addr in &config.addresses {
                if addr.rank == rank {
                    peers.push(None);
                    continue;
                }
                let mut stream = connect_with_retry(&addr.endpoint, addr.rank, deadline)?;
                stream.write_all(&[PROTOCOL_VERSION, rank as u8])?;
                peers.push(Some(Mutex::new(stream)));
            }
            Ok(peers)
        };
        let peers = match connect_all() {
            Ok(peers) => peers,
            Err(err) => {
                closed.store(true, Ordering::Release);
                for stream in incoming.lock().iter() {
                    stream.shutdown(Shutdown::Both).ok();
                }
                for handle in threads {
                    handle.join().ok();
                }
                for handle in demux_threads.lock().drain(..) {
                    handle.join().ok();
                }
                return Err(err);
            }
        };

        Ok(Arc::new(SocketTransport {
            rank,
            world_size,
            router,
            peers,
            closed,
            incoming,
            threads: Mutex::new(threads),
            demux_threads,
            sends: AtomicU64::new(0),
        }))
    }
}

fn connect_with_retry(
    endpoint: &str,
    peer: usize,
    deadline: Instant,
) -> Result<TcpStream, TransportError> {
    loop {
        match TcpStream::connect(endpoint) {
            Ok(stream) => {
                stream.set_nodelay(true).ok();
                return Ok(stream);
            }
            Err(err) => {
                if Instant::now() >= deadline {
                    return Err(TransportError::Unreachable { rank: peer, source: err });
                }
                thread::sleep(Duration::from_millis(25));
            }
        }
    }
}

fn read_handshake(mut stream: &TcpStream) -> Result<u8, TransportError> {
    let mut buf = [0u8; 2];
    stream.read_exact(&mut buf)?;
    if buf[0] != PROTOCOL_VERSION {
        return Err(TransportError::Handshake(format!(
            "unsupported protocol version {:#04x}",
            buf[0]
        )));
    }
    Ok(buf[1])
}

fn demux_loop(mut stream: TcpStream, router: Arc<TagRouter>) {
    loop {
        let mut len_buf = [0u8; 4];
        if stream.read_exact(&mut len_buf).is_err() {
            break;
        }
        let len = u32::from_le_bytes(len_buf) as usize;
        if len > MAX_FRAME_LEN {
            log::error!("dropping connection: frame of {len} bytes exceeds limit");
            break;
        }
        let mut frame = vec![0u8; len];
        if stream.read_exact(&mut frame).is_err() {
            break;
        }
        match deserialize_message(&frame) {
            Ok(msg) => {
                let tag = msg.tag;
                if router.push(tag, msg).is_err() {
                    break;
                }
            }
            Err(err) => {
                log::error!("dropping connection: undecodable frame: {err}");
                break;
            }
        }
    }
}

pub struct SocketTransport {
    rank: usize,
    world_size: usize,
    router: Arc<TagRouter>,
    peers: Vec<Option<Mutex<TcpStream>>>,
    closed: Arc<AtomicBool>,
    incoming: Arc<Mutex<Vec<TcpStream>>>,
    threads: Mutex<Vec<thread::JoinHandle<()>>>,
    demux_threads: Arc<Mutex<Vec<thread::JoinHandle<()>>>>,
    sends: AtomicU64,
}

impl Transport for SocketTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn world_size(&self) -> usize {
        self.world_size
    }

    fn send(&self, dest: usize, tag: ChannelTag, msg: Message) -> Result<(), TransportError> {
        check_destination(dest, self.world_size, tag)?;
        if self.closed.load(Ordering::Acquire) {
            return Err(TransportError::Closed);
        }
        if dest == self.rank {
            self.router.push(tag, msg)?;
            self.sends.fetch_add(1, Ordering::Relaxed);
            return Ok(());
        }
        let frame = serialize_message(&msg)?;
        let peer = self.peers[dest]
            .as_ref()
            .expect("non-self destination has a stream");
        let mut stream = peer.lock();
        stream.write_all(&(frame.len() as u32).to_le_bytes())?;
        stream.write_all(&frame)?;
        self.sends.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn register_receiver(&self, tag: ChannelTag) -> Result<TagReceiver, TransportError> {
        self.router.register(tag)
    }

    fn close(&self) {
        if self.closed.swap(true, Ordering::AcqRel) {
            return;
        }
        for peer in self.peers.iter().flatten() {
            peer.lock().shutdown(Shutdown::Both).ok();
        }
        for stream in self.incoming.lock().iter() {
            stream.shutdown(Shutdown::Both).ok();
        }
        self.router.close();
        for handle in self.threads.lock().drain(..) {
            handle.join().ok();
        }
        for handle in self.demux_threads.lock().drain(..) {
            handle.join().ok();
        }
    }

    fn sends_issued(&self) -> u64 {
        self.sends.load(Ordering::Relaxed)
    }
}

impl Drop for SocketTransport {
    fn drop(&mut self) {
        self.close();
    }
}

/// Binds `world_size` ephemeral localhost listeners and returns the
/// bindings together with a socket transport config pointing at them.
/// Intended for tests and single-host deployments.
pub fn bind_local_world(
    world_size: usize,
    queue_capacity: usize,
) -> Result<(Vec<SocketBinding>, TransportConfig), TransportError> {
    let mut bindings = Vec::with_capacity(world_size);
    let mut addresses = Vec::with_capacity(world_size);
    for rank in 0..world_size {
        let binding = SocketBinding::bind("127.0.0.1:0")?;
        addresses.push(super::RankAddress {
            rank,
            endpoint: binding.local_addr()?.to_string(),
        });
        bindings.push(binding);
    }
    let mut config = TransportConfig::socket(addresses);
    config.send_queue_capacity = queue_capacity;
    Ok((bindings, config))
}
