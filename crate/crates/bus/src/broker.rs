//! In-memory, at-most-once topic router.
//!
//! Each connection has one outbound queue, so frames reach a subscriber in
//! the order the broker routed them. A message is queued once per matching
//! connection however many of its patterns match.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use tokio::io::AsyncWriteExt;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tracing::{debug, warn};

use crate::frame::{read_frame, Frame, Op};
use crate::topic::{Pattern, Topic};
use crate::BusError;

type Outbound = mpsc::UnboundedSender<Arc<Vec<u8>>>;

struct Connection {
    patterns: Vec<Pattern>,
    tx: Outbound,
}

#[derive(Default)]
struct Routes {
    conns: RwLock<HashMap<u64, Connection>>,
    next_id: AtomicU64,
}

impl Routes {
    fn route(&self, topic: &str, frame: Arc<Vec<u8>>) -> usize {
        let conns = self.conns.read().expect("routing table poisoned");
        let mut delivered = 0;
        for conn in conns.values() {
            if conn.patterns.iter().any(|p| p.matches(topic)) && conn.tx.send(frame.clone()).is_ok() {
                delivered += 1;
            }
        }
        delivered
    }
}

/// Running broker. Dropping the handle leaves the broker running; call
/// [`BrokerHandle::shutdown`] to stop it.
pub struct BrokerHandle {
    addr: SocketAddr,
    shutdown: watch::Sender<bool>,
    task: JoinHandle<()>,
}

impl BrokerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and closes every connection.
    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        let _ = self.task.await;
    }
}

/// Binds `addr` and starts routing.
pub async fn broker_serve(addr: &str) -> Result<BrokerHandle, BusError> {
    let listener = TcpListener::bind(addr).await.map_err(|e| BusError::Bind(addr.to_owned(), e))?;
    let local = listener.local_addr()?;
    let (shutdown_tx, shutdown_rx) = watch::channel(false);
    let routes = Arc::new(Routes::default());
    let task = tokio::spawn(accept_loop(listener, routes, shutdown_rx));
    debug!(%local, "broker listening");
    Ok(BrokerHandle { addr: local, shutdown: shutdown_tx, task })
}

async fn accept_loop(listener: TcpListener, routes: Arc<Routes>, mut shutdown: watch::Receiver<bool>) {
    let mut conns = tokio::task::JoinSet::new();
    loop {
        tokio::select! {
            _ = shutdown.changed() => break,
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    let _ = stream.set_nodelay(true);
                    conns.spawn(serve_connection(stream, peer, routes.clone(), shutdown.clone()));
                }
                Err(e) => warn!(error = %e, "accept failed"),
            },
            Some(_) = conns.join_next(), if !conns.is_empty() => {}
        }
    }
    conns.shutdown().await;
}

async fn serve_connection(stream: TcpStream, peer: SocketAddr, routes: Arc<Routes>, mut shutdown: watch::Receiver<bool>) {
    let id = routes.next_id.fetch_add(1, Ordering::Relaxed);
    let (tx, mut rx) = mpsc::unbounded_channel::<Arc<Vec<u8>>>();
    routes.conns.write().expect("routing table poisoned").insert(id, Connection { patterns: Vec::new(), tx: tx.clone() });
    let (mut reader, mut writer) = stream.into_split();

    let writer_task = tokio::spawn(async move {
        while let Some(bytes) = rx.recv().await {
            if writer.write_all(&bytes).await.is_err() {
                break;
            }
        }
        let _ = writer.shutdown().await;
    });

    loop {
        let frame = tokio::select! {
            _ = shutdown.changed() => break,
            f = read_frame(&mut reader) => f,
        };
        match frame {
            Ok(Some(frame)) => {
                if let Err(e) = handle_frame(&routes, id, &tx, frame) {
                    warn!(%peer, error = %e, "closing connection after bad frame");
                    break;
                }
            }
            Ok(None) => break,
            Err(e) => {
                warn!(%peer, error = %e, "closing connection");
                break;
            }
        }
    }
    routes.conns.write().expect("routing table poisoned").remove(&id);
    drop(tx);
    writer_task.abort();
    debug!(%peer, "connection closed");
}

fn handle_frame(routes: &Routes, id: u64, tx: &Outbound, frame: Frame) -> Result<(), BusError> {
    match frame.op {
        Op::Sub => {
            let pattern = Pattern::parse(&frame.topic)?;
            let mut conns = routes.conns.write().expect("routing table poisoned");
            if let Some(conn) = conns.get_mut(&id) {
                if !conn.patterns.contains(&pattern) {
                    conn.patterns.push(pattern);
                }
            }
        }
        Op::Unsub => {
            let mut conns = routes.conns.write().expect("routing table poisoned");
            if let Some(conn) = conns.get_mut(&id) {
                conn.patterns.retain(|p| p.as_str() != frame.topic);
            }
        }
        Op::Pub => {
            Topic::parse(&frame.topic)?;
            let topic = frame.topic.clone();
            let out = Frame { op: Op::Msg, ..frame }.encode()?;
            routes.route(&topic, Arc::new(out));
        }
        Op::Ping => {
            let _ = tx.send(Arc::new(Frame::control(Op::Pong, "").encode()?));
        }
        Op::Msg | Op::Pong => {
            return Err(BusError::Protocol(format!("clients may not send {:?}", frame.op)));
        }
    }
    Ok(())
}
