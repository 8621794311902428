//! Bus client.
//!
//! One TCP connection per client, owned by a background task that
//! reconnects after a 1 s backoff and re-sends every live subscription.
//! Incoming messages are fanned out locally to each [`Subscription`] whose
//! pattern matches. Publishing only enqueues the frame.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex, Weak};
use std::time::Duration;

use serde::Serialize;
use serde_json::{Map, Value};
use tokio::io::AsyncWriteExt;
use tokio::net::TcpStream;
use tokio::sync::{mpsc, oneshot};
use tracing::{debug, warn};

use crate::frame::{read_frame, Frame, Op};
use crate::topic::{Pattern, Topic};
use crate::{BusError, Message};

pub const RECONNECT_BACKOFF: Duration = Duration::from_secs(1);

struct LocalSub {
    pattern: Pattern,
    tx: mpsc::UnboundedSender<Message>,
}

#[derive(Default)]
struct Shared {
    subs: Mutex<HashMap<u64, LocalSub>>,
    /// Broker-side subscriptions with the number of local subscribers.
    patterns: Mutex<HashMap<String, usize>>,
    pings: Mutex<VecDeque<oneshot::Sender<()>>>,
    next_sub: std::sync::atomic::AtomicU64,
}

impl Shared {
    fn dispatch(&self, msg: Message) {
        let subs = self.subs.lock().expect("subscriptions poisoned");
        for sub in subs.values() {
            if sub.pattern.matches(&msg.topic) {
                let _ = sub.tx.send(msg.clone());
            }
        }
    }
}

struct Inner {
    out: mpsc::UnboundedSender<Vec<u8>>,
    shared: Arc<Shared>,
}

/// Cheap to clone; all clones share one connection.
#[derive(Clone)]
pub struct BusClient {
    inner: Arc<Inner>,
}

impl BusClient {
    /// Connects to a broker; fails if it is unreachable right now.
    pub async fn connect(addr: &str) -> Result<BusClient, BusError> {
        let stream = TcpStream::connect(addr).await.map_err(|e| BusError::Connect(addr.to_owned(), e))?;
        let _ = stream.set_nodelay(true);
        let (out_tx, out_rx) = mpsc::unbounded_channel();
        let shared = Arc::new(Shared::default());
        tokio::spawn(connection_manager(addr.to_owned(), stream, out_rx, shared.clone()));
        Ok(BusClient { inner: Arc::new(Inner { out: out_tx, shared }) })
    }

    fn send_frame(&self, frame: &Frame) -> Result<(), BusError> {
        let bytes = frame.encode()?;
        self.inner.out.send(bytes).map_err(|_| BusError::Closed)
    }

    /// Fire-and-forget publish of a JSON object body.
    pub fn publish(&self, topic: &str, body: Map<String, Value>) -> Result<(), BusError> {
        self.publish_at(topic, crate::now(), body)
    }

    /// Publish with an explicit envelope timestamp.
    pub fn publish_at(&self, topic: &str, ts: f64, body: Map<String, Value>) -> Result<(), BusError> {
        Topic::parse(topic)?;
        self.send_frame(&Frame::new(Op::Pub, topic, ts, body))
    }

    /// Serializes `body`, which must become a JSON object.
    pub fn publish_json<T: Serialize>(&self, topic: &str, ts: f64, body: &T) -> Result<(), BusError> {
        match serde_json::to_value(body).map_err(|e| BusError::Protocol(e.to_string()))? {
            Value::Object(map) => self.publish_at(topic, ts, map),
            _ => Err(BusError::Protocol("message body must be a JSON object".into())),
        }
    }

    /// Subscribes and waits until the broker has registered the pattern.
    pub async fn subscribe(&self, pattern: &str) -> Result<Subscription, BusError> {
        let pattern = Pattern::parse(pattern)?;
        let (tx, rx) = mpsc::unbounded_channel();
        let shared = &self.inner.shared;
        let id = shared.next_sub.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        shared.subs.lock().expect("subscriptions poisoned").insert(id, LocalSub { pattern: pattern.clone(), tx });
        let first = {
            let mut patterns = shared.patterns.lock().expect("patterns poisoned");
            let count = patterns.entry(pattern.as_str().to_owned()).or_insert(0);
            *count += 1;
            *count == 1
        };
        if first {
            self.send_frame(&Frame::control(Op::Sub, pattern.as_str()))?;
        }
        self.sync().await?;
        Ok(Subscription { id, pattern, rx, client: Arc::downgrade(&self.inner) })
    }

    /// Round trip through the broker: returns once every frame sent before
    /// it has been processed and every message routed to this client before
    /// it has been dispatched locally.
    pub async fn sync(&self) -> Result<(), BusError> {
        let (tx, rx) = oneshot::channel();
        self.inner.shared.pings.lock().expect("pings poisoned").push_back(tx);
        self.send_frame(&Frame::control(Op::Ping, ""))?;
        tokio::time::timeout(Duration::from_secs(10), rx)
            .await
            .map_err(|_| BusError::Timeout)?
            .map_err(|_| BusError::Closed)
    }
}

/// Stream of messages matching one pattern, in arrival order.
pub struct Subscription {
    id: u64,
    pattern: Pattern,
    rx: mpsc::UnboundedReceiver<Message>,
    client: Weak<Inner>,
}

impl Subscription {
    /// Next message; `None` once the client is gone.
    pub async fn recv(&mut self) -> Option<Message> {
        self.rx.recv().await
    }

    pub fn try_recv(&mut self) -> Option<Message> {
        self.rx.try_recv().ok()
    }

    pub fn pattern(&self) -> &str {
        self.pattern.as_str()
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        let Some(inner) = self.client.upgrade() else { return };
        inner.shared.subs.lock().expect("subscriptions poisoned").remove(&self.id);
        let last = {
            let mut patterns = inner.shared.patterns.lock().expect("patterns poisoned");
            match patterns.get_mut(self.pattern.as_str()) {
                Some(n) if *n > 1 => {
                    *n -= 1;
                    false
                }
                Some(_) => {
                    patterns.remove(self.pattern.as_str());
                    true
                }
                None => false,
            }
        };
        if last {
            if let Ok(bytes) = Frame::control(Op::Unsub, self.pattern.as_str()).encode() {
                let _ = inner.out.send(bytes);
            }
        }
    }
}

async fn connection_manager(
    addr: String,
    mut stream: TcpStream,
    mut out_rx: mpsc::UnboundedReceiver<Vec<u8>>,
    shared: Arc<Shared>,
) {
    loop {
        let (mut reader, mut writer) = stream.into_split();
        let (done_tx, mut done_rx) = oneshot::channel::<()>();
        let reader_shared = shared.clone();
        let reader_task = tokio::spawn(async move {
            loop {
                match read_frame(&mut reader).await {
                    Ok(Some(frame)) => match frame.op {
                        Op::Msg => reader_shared.dispatch(Message { topic: frame.topic, ts: frame.ts, body: frame.body }),
                        Op::Pong => {
                            if let Some(tx) = reader_shared.pings.lock().expect("pings poisoned").pop_front() {
                                let _ = tx.send(());
                            }
                        }
                        other => warn!(?other, "unexpected frame from broker"),
                    },
                    Ok(None) => break,
                    Err(e) => {
                        warn!(error = %e, "bus read failed");
                        break;
                    }
                }
            }
            let _ = done_tx.send(());
        });

        let mut broken = false;
        loop {
            tokio::select! {
                biased;
                _ = &mut done_rx => { broken = true; break; }
                out = out_rx.recv() => match out {
                    Some(bytes) => {
                        if writer.write_all(&bytes).await.is_err() {
                            broken = true;
                            break;
                        }
                    }
                    None => break,
                },
            }
        }
        reader_task.abort();
        if !broken {
            let _ = writer.shutdown().await;
            return;
        }
        // pending round trips cannot complete on a new connection
        shared.pings.lock().expect("pings poisoned").clear();
        stream = loop {
            tokio::time::sleep(RECONNECT_BACKOFF).await;
            if out_rx.is_closed() {
                return;
            }
            match TcpStream::connect(&addr).await {
                Ok(s) => break s,
                Err(e) => debug!(error = %e, "reconnect failed"),
            }
        };
        let _ = stream.set_nodelay(true);
        let patterns: Vec<String> = shared.patterns.lock().expect("patterns poisoned").keys().cloned().collect();
        for p in patterns {
            if let Ok(bytes) = Frame::control(Op::Sub, p).encode() {
                if stream.write_all(&bytes).await.is_err() {
                    break;
                }
            }
        }
        debug!(%addr, "reconnected");
    }
}
