//! In-process typed message bus with named topics and services.
//!
//! Every hop serializes the value with [`Wire`](crate::wire::Wire) and
//! deserializes it on the receiving side, and every delivery crosses a thread
//! boundary, so bus overhead is real and measurable.
//!
//! * Topics: each subscriber owns a bounded queue. When a queue is full the
//!   oldest message is dropped. Messages from one publisher on one topic keep
//!   their publish order.
//! * Services: one provider per name. Each service has a dedicated worker
//!   thread, so requests to one service run one at a time while different
//!   services run concurrently.
//! * Shutdown closes every queue and service; blocked receivers wake up with
//!   [`RecvError::Closed`].

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::marker::PhantomData;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::wire::{self, Reader, Wire, WireError};

pub const DEFAULT_QUEUE_CAPACITY: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BusError {
    #[error("node name {0:?} already registered")]
    DuplicateNode(String),
    #[error("service {0:?} already has a provider")]
    DuplicateService(String),
    #[error("service {0:?} not found")]
    ServiceNotFound(String),
    #[error("{kind} {name:?} carries {expected}, not {found}")]
    TypeMismatch { kind: &'static str, name: String, expected: &'static str, found: &'static str },
    #[error("call to {0:?} timed out")]
    Timeout(String),
    #[error("service {0:?} failed while handling the request")]
    ServiceFailed(String),
    #[error("queue capacity must be at least 1")]
    ZeroCapacity,
    #[error("bus is shut down")]
    Closed,
    #[error("payload decode failed: {0}")]
    Decode(#[from] WireError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecvError {
    #[error("receive timed out")]
    Timeout,
    #[error("bus closed")]
    Closed,
    #[error("payload decode failed: {0}")]
    Decode(WireError),
}

/// Envelope carried on a topic. The payload is the serialized value.
#[derive(Debug, Clone)]
pub struct Message {
    pub topic: String,
    pub publisher: String,
    pub seq: u64,
    pub stamp: f64,
    pub payload: Vec<u8>,
}

/// A delivered, deserialized message.
#[derive(Debug, Clone)]
pub struct Received<T> {
    pub publisher: String,
    pub seq: u64,
    pub stamp: f64,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceEndpoint {
    pub name: String,
    pub provider: String,
    pub request_type: &'static str,
    pub response_type: &'static str,
}

struct QueueState {
    items: VecDeque<Message>,
    closed: bool,
    dropped: u64,
}

struct Queue {
    capacity: usize,
    state: Mutex<QueueState>,
    ready: Condvar,
}

impl Queue {
    fn push(&self, msg: Message) {
        let mut st = lock(&self.state);
        if st.closed {
            return;
        }
        if st.items.len() == self.capacity {
            st.items.pop_front();
            st.dropped += 1;
        }
        st.items.push_back(msg);
        drop(st);
        self.ready.notify_one();
    }

    fn close(&self) {
        lock(&self.state).closed = true;
        self.ready.notify_all();
    }

    fn pop(&self, deadline: Option<Instant>) -> Result<Message, RecvError> {
        let mut st = lock(&self.state);
        loop {
            if st.closed {
                return Err(RecvError::Closed);
            }
            if let Some(m) = st.items.pop_front() {
                return Ok(m);
            }
            match deadline {
                None => st = self.ready.wait(st).unwrap_or_else(|e| e.into_inner()),
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Err(RecvError::Timeout);
                    }
                    st = self.ready.wait_timeout(st, d - now).unwrap_or_else(|e| e.into_inner()).0;
                }
            }
        }
    }
}

struct Topic {
    type_tag: &'static str,
    subscribers: Vec<Arc<Queue>>,
}

struct ServiceCall {
    payload: Vec<u8>,
    reply: mpsc::SyncSender<Vec<u8>>,
}

struct ServiceSlot {
    endpoint: ServiceEndpoint,
    tx: mpsc::Sender<ServiceCall>,
}

#[derive(Default)]
struct Inner {
    nodes: Mutex<HashSet<String>>,
    topics: Mutex<HashMap<String, Topic>>,
    services: Mutex<HashMap<String, ServiceSlot>>,
    workers: Mutex<Vec<JoinHandle<()>>>,
    closed: AtomicBool,
    next_private_id: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Handle to a bus instance. Cheap to clone and share across threads.
#[derive(Clone, Default)]
pub struct Bus {
    inner: Arc<Inner>,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_node(&self, name: &str) -> Result<NodeHandle, BusError> {
        if self.is_closed() {
            return Err(BusError::Closed);
        }
        if !lock(&self.inner.nodes).insert(name.to_string()) {
            return Err(BusError::DuplicateNode(name.to_string()));
        }
        Ok(NodeHandle {
            name: name.to_string(),
            bus: self.clone(),
            seqs: Mutex::new(HashMap::new()),
            subscriptions: Mutex::new(BTreeSet::new()),
            services: Mutex::new(BTreeSet::new()),
        })
    }

    pub fn is_closed(&self) -> bool {
        self.inner.closed.load(Ordering::Acquire)
    }

    pub fn node_names(&self) -> Vec<String> {
        let mut v: Vec<_> = lock(&self.inner.nodes).iter().cloned().collect();
        v.sort();
        v
    }

    pub fn services(&self) -> Vec<ServiceEndpoint> {
        let mut v: Vec<_> = lock(&self.inner.services).values().map(|s| s.endpoint.clone()).collect();
        v.sort_by(|a, b| a.name.cmp(&b.name));
        v
    }

    /// Closes every queue and service and joins the bus worker threads.
    /// Idempotent.
    pub fn shutdown(&self) {
        if self.inner.closed.swap(true, Ordering::AcqRel) {
            return;
        }
        for topic in lock(&self.inner.topics).values() {
            for q in &topic.subscribers {
                q.close();
            }
        }
        // dropping the senders ends the service worker loops
        lock(&self.inner.services).clear();
        let workers: Vec<_> = lock(&self.inner.workers).drain(..).collect();
        let me = thread::current().id();
        for w in workers {
            if w.thread().id() != me {
                let _ = w.join();
            }
        }
    }

    fn private_id(&self) -> u64 {
        self.inner.next_private_id.fetch_add(1, Ordering::Relaxed)
    }

    fn check_topic_type(topics: &mut HashMap<String, Topic>, topic: &str, tag: &'static str) -> Result<(), BusError> {
        let entry = topics.entry(topic.to_string()).or_insert_with(|| Topic { type_tag: tag, subscribers: Vec::new() });
        if entry.type_tag != tag {
            return Err(BusError::TypeMismatch {
                kind: "topic",
                name: topic.to_string(),
                expected: entry.type_tag,
                found: tag,
            });
        }
        Ok(())
    }

    fn spawn_worker(&self, name: String, f: impl FnOnce() + Send + 'static) {
        let handle = thread::Builder::new().name(name).spawn(f).expect("spawn bus worker");
        lock(&self.inner.workers).push(handle);
    }
}

impl Drop for Inner {
    fn drop(&mut self) {
        for topic in self.topics.get_mut().unwrap_or_else(|e| e.into_inner()).values() {
            for q in &topic.subscribers {
                q.close();
            }
        }
    }
}

/// A named participant on the bus.
pub struct NodeHandle {
    name: String,
    bus: Bus,
    seqs: Mutex<HashMap<String, u64>>,
    subscriptions: Mutex<BTreeSet<String>>,
    services: Mutex<BTreeSet<String>>,
}

impl NodeHandle {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn subscriptions(&self) -> BTreeSet<String> {
        lock(&self.subscriptions).clone()
    }

    pub fn advertised_services(&self) -> BTreeSet<String> {
        lock(&self.services).clone()
    }

    pub fn publish<T: Wire>(&self, topic: &str, value: &T) -> Result<(), BusError> {
        self.publish_at(topic, value, 0.0)
    }

    /// Serializes `value` and enqueues it for every current subscriber of
    /// `topic`. Publishing to a topic nobody listens to is a no-op.
    pub fn publish_at<T: Wire>(&self, topic: &str, value: &T, stamp: f64) -> Result<(), BusError> {
        if self.bus.is_closed() {
            return Err(BusError::Closed);
        }
        let payload = wire::to_bytes(value);
        let seq = {
            let mut seqs = lock(&self.seqs);
            let s = seqs.entry(topic.to_string()).or_insert(0);
            *s += 1;
            *s
        };
        let subscribers = {
            let mut topics = lock(&self.bus.inner.topics);
            Bus::check_topic_type(&mut topics, topic, T::TYPE_TAG)?;
            topics[topic].subscribers.clone()
        };
        let Some((last, rest)) = subscribers.split_last() else {
            return Ok(());
        };
        for q in rest {
            q.push(Message {
                topic: topic.to_string(),
                publisher: self.name.clone(),
                seq,
                stamp,
                payload: payload.clone(),
            });
        }
        last.push(Message { topic: topic.to_string(), publisher: self.name.clone(), seq, stamp, payload });
        Ok(())
    }

    pub fn subscribe<T: Wire>(&self, topic: &str, queue_capacity: usize) -> Result<Subscriber<T>, BusError> {
        if queue_capacity == 0 {
            return Err(BusError::ZeroCapacity);
        }
        if self.bus.is_closed() {
            return Err(BusError::Closed);
        }
        let queue = Arc::new(Queue {
            capacity: queue_capacity,
            state: Mutex::new(QueueState { items: VecDeque::new(), closed: false, dropped: 0 }),
            ready: Condvar::new(),
        });
        {
            let mut topics = lock(&self.bus.inner.topics);
            Bus::check_topic_type(&mut topics, topic, T::TYPE_TAG)?;
            topics.get_mut(topic).expect("just inserted").subscribers.push(queue.clone());
        }
        lock(&self.subscriptions).insert(topic.to_string());
        Ok(Subscriber { topic: topic.to_string(), queue, bus: self.bus.clone(), _ty: PhantomData })
    }

    /// Runs `callback` on a bus-owned thread for every message on `topic`
    /// until the bus shuts down.
    pub fn subscribe_callback<T, F>(&self, topic: &str, queue_capacity: usize, mut callback: F) -> Result<(), BusError>
    where
        T: Wire + Send + 'static,
        F: FnMut(Received<T>) + Send + 'static,
    {
        let sub = self.subscribe::<T>(topic, queue_capacity)?;
        self.bus.spawn_worker(format!("{}:{}", self.name, topic), move || loop {
            match sub.recv() {
                Ok(m) => callback(m),
                Err(RecvError::Decode(_)) => continue,
                Err(_) => break,
            }
        });
        Ok(())
    }

    /// Registers `handler` as the provider of `service`. Requests are handled
    /// one at a time on a dedicated bus worker thread.
    pub fn serve<Req, Resp, F>(&self, service: &str, mut handler: F) -> Result<(), BusError>
    where
        Req: Wire + 'static,
        Resp: Wire + 'static,
        F: FnMut(Req) -> Resp + Send + 'static,
    {
        if self.bus.is_closed() {
            return Err(BusError::Closed);
        }
        let (tx, rx) = mpsc::channel::<ServiceCall>();
        {
            let mut services = lock(&self.bus.inner.services);
            if services.contains_key(service) {
                return Err(BusError::DuplicateService(service.to_string()));
            }
            let endpoint = ServiceEndpoint {
                name: service.to_string(),
                provider: self.name.clone(),
                request_type: Req::TYPE_TAG,
                response_type: Resp::TYPE_TAG,
            };
            services.insert(service.to_string(), ServiceSlot { endpoint, tx });
        }
        lock(&self.services).insert(service.to_string());
        self.bus.spawn_worker(format!("{}:{}", self.name, service), move || {
            while let Ok(call) = rx.recv() {
                let Ok(req) = wire::from_bytes::<Req>(&call.payload) else {
                    // dropping the reply sender reports a failure to the caller
                    continue;
                };
                let resp = handler(req);
                let _ = call.reply.send(wire::to_bytes(&resp));
            }
        });
        Ok(())
    }

    /// Synchronous request/response. `timeout` is in seconds.
    pub fn call<Req: Wire, Resp: Wire>(&self, service: &str, request: &Req, timeout: f64) -> Result<Resp, BusError> {
        if self.bus.is_closed() {
            return Err(BusError::Closed);
        }
        let tx = {
            let services = lock(&self.bus.inner.services);
            let slot = services.get(service).ok_or_else(|| BusError::ServiceNotFound(service.to_string()))?;
            if slot.endpoint.request_type != Req::TYPE_TAG {
                return Err(BusError::TypeMismatch {
                    kind: "service request",
                    name: service.to_string(),
                    expected: slot.endpoint.request_type,
                    found: Req::TYPE_TAG,
                });
            }
            if slot.endpoint.response_type != Resp::TYPE_TAG {
                return Err(BusError::TypeMismatch {
                    kind: "service response",
                    name: service.to_string(),
                    expected: slot.endpoint.response_type,
                    found: Resp::TYPE_TAG,
                });
            }
            slot.tx.clone()
        };
        let (reply_tx, reply_rx) = mpsc::sync_channel(1);
        tx.send(ServiceCall { payload: wire::to_bytes(request), reply: reply_tx }).map_err(|_| BusError::Closed)?;
        let timeout = Duration::from_secs_f64(timeout.max(0.0));
        match reply_rx.recv_timeout(timeout) {
            Ok(bytes) => Ok(wire::from_bytes(&bytes)?),
            Err(mpsc::RecvTimeoutError::Timeout) => Err(BusError::Timeout(service.to_string())),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                if self.bus.is_closed() {
                    Err(BusError::Closed)
                } else {
                    Err(BusError::ServiceFailed(service.to_string()))
                }
            }
        }
    }
}

impl Drop for NodeHandle {
    fn drop(&mut self) {
        lock(&self.bus.inner.nodes).remove(&self.name);
    }
}

/// Receiving end of a topic subscription.
pub struct Subscriber<T> {
    topic: String,
    queue: Arc<Queue>,
    bus: Bus,
    _ty: PhantomData<fn() -> T>,
}

impl<T: Wire> Subscriber<T> {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn recv(&self) -> Result<Received<T>, RecvError> {
        self.decode(self.queue.pop(None)?)
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Result<Received<T>, RecvError> {
        self.decode(self.queue.pop(Some(Instant::now() + timeout))?)
    }

    pub fn try_recv(&self) -> Result<Received<T>, RecvError> {
        self.decode(self.queue.pop(Some(Instant::now()))?)
    }

    /// Messages discarded because the queue was full.
    pub fn dropped(&self) -> u64 {
        lock(&self.queue.state).dropped
    }

    pub fn pending(&self) -> usize {
        lock(&self.queue.state).items.len()
    }

    fn decode(&self, m: Message) -> Result<Received<T>, RecvError> {
        let mut r = Reader::new(&m.payload);
        let value = T::decode(&mut r).map_err(RecvError::Decode)?;
        if r.remaining() != 0 {
            return Err(RecvError::Decode(WireError::Trailing(r.remaining())));
        }
        Ok(Received { publisher: m.publisher, seq: m.seq, stamp: m.stamp, value })
    }
}

impl<T> Drop for Subscriber<T> {
    fn drop(&mut self) {
        if let Some(topic) = lock(&self.bus.inner.topics).get_mut(&self.topic) {
            topic.subscribers.retain(|q| !Arc::ptr_eq(q, &self.queue));
        }
    }
}

/// Opaque byte payload with a memcpy encoding; used for benchmarking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blob(pub Vec<u8>);

impl Wire for Blob {
    const TYPE_TAG: &'static str = "Blob";
    fn encode(&self, out: &mut Vec<u8>) {
        (self.0.len() as u64).encode(out);
        out.extend_from_slice(&self.0);
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let len = u64::decode(r)? as usize;
        Ok(Blob(r.take(len, "blob")?.to_vec()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopStats {
    pub payload_size: usize,
    pub iterations: usize,
    /// Mean one-way latency in seconds.
    pub mean: f64,
    pub std_dev: f64,
}

/// Measures one-way publish→receive latency between two threads.
///
/// A bus-owned echo worker bounces each message back; one hop is half the
/// round trip. Requires at least 100 iterations.
pub fn measure_hop_overhead(bus: &Bus, payload_size: usize, iterations: usize) -> Result<HopStats, BusError> {
    assert!(iterations >= 100, "need at least 100 iterations");
    let id = bus.private_id();
    let ping_topic = format!("/bench/{id}/ping");
    let pong_topic = format!("/bench/{id}/pong");
    let pinger = bus.create_node(&format!("bench_ping_{id}"))?;
    let ponger = bus.create_node(&format!("bench_pong_{id}"))?;
    let pongs = pinger.subscribe::<Blob>(&pong_topic, 4)?;
    let pings = ponger.subscribe::<Blob>(&ping_topic, 4)?;
    let stop = Arc::new(AtomicBool::new(false));
    let echo = {
        let stop = stop.clone();
        let pong_topic = pong_topic.clone();
        thread::spawn(move || {
            while !stop.load(Ordering::Acquire) {
                match pings.recv_timeout(Duration::from_millis(50)) {
                    Ok(m) => {
                        let _ = ponger.publish(&pong_topic, &m.value);
                    }
                    Err(RecvError::Timeout) => {}
                    Err(_) => break,
                }
            }
        })
    };
    let payload = Blob(vec![0xA5; payload_size]);
    let mut samples = Vec::with_capacity(iterations);
    let mut outcome = Ok(());
    for _ in 0..iterations {
        let t0 = Instant::now();
        if let Err(e) = pinger.publish(&ping_topic, &payload) {
            outcome = Err(e);
            break;
        }
        match pongs.recv_timeout(Duration::from_secs(10)) {
            Ok(_) => samples.push(t0.elapsed().as_secs_f64() / 2.0),
            Err(RecvError::Timeout) => outcome = Err(BusError::Timeout(pong_topic.clone())),
            Err(RecvError::Closed) => outcome = Err(BusError::Closed),
            Err(RecvError::Decode(e)) => outcome = Err(BusError::Decode(e)),
        }
        if outcome.is_err() {
            break;
        }
    }
    stop.store(true, Ordering::Release);
    let _ = echo.join();
    outcome?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(HopStats { payload_size, iterations, mean, std_dev: var.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VelocityCommand;
    use std::sync::atomic::AtomicUsize;

    #[test]
    fn node_names_unique() {
        let bus = Bus::new();
        let a = bus.create_node("env_node").unwrap();
        assert_eq!(a.name(), "env_node");
        assert_eq!(bus.create_node("env_node").err(), Some(BusError::DuplicateNode("env_node".into())));
        let p = bus.create_node("planner").unwrap();
        assert!(p.subscriptions().is_empty());
        drop(a);
        assert!(bus.create_node("env_node").is_ok());
    }

    #[test]
    fn publish_delivers_bit_identical_value() {
        let bus = Bus::new();
        let a = bus.create_node("agent_node").unwrap();
        let e = bus.create_node("env_node").unwrap();
        let sub = e.subscribe::<VelocityCommand>("cmd_vel", 16).unwrap();
        let cmd = VelocityCommand::planar(0.25, 0.0);
        a.publish("cmd_vel", &cmd).unwrap();
        let got = sub.recv_timeout(Duration::from_secs(1)).unwrap();
        assert!(got.value.bit_eq(&cmd));
        assert_eq!(got.publisher, "agent_node");
        assert_eq!(got.seq, 1);
    }

    #[test]
    fn fifo_per_publisher() {
        let bus = Bus::new();
        let a = bus.create_node("a").unwrap();
        let b = bus.create_node("b").unwrap();
        let sub = b.subscribe::<u64>("t", 64).unwrap();
        for i in 0..50u64 {
            a.publish("t", &i).unwrap();
        }
        let seen: Vec<u64> = (0..50).map(|_| sub.recv().unwrap().value).collect();
        assert_eq!(seen, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn unsubscribed_publish_is_noop() {
        let bus = Bus::new();
        let a = bus.create_node("a").unwrap();
        a.publish("/nobody", &1u64).unwrap();
    }

    #[test]
    fn drop_oldest_on_overflow() {
        // enumerated queue states for capacity 1: [] -> [m1] -> [m2] (m1 dropped)
        let bus = Bus::new();
        let a = bus.create_node("a").unwrap();
        let sub = a.subscribe::<u64>("t", 1).unwrap();
        a.publish("t", &1u64).unwrap();
        a.publish("t", &2u64).unwrap();
        assert_eq!(sub.pending(), 1);
        assert_eq!(sub.dropped(), 1);
        assert_eq!(sub.recv().unwrap().value, 2);
        assert!(matches!(sub.try_recv(), Err(RecvError::Timeout)));
    }

    #[test]
    fn timeout_on_silent_topic() {
        let bus = Bus::new();
        let a = bus.create_node("a").unwrap();
        let sub = a.subscribe::<u64>("quiet", 4).unwrap();
        assert!(matches!(sub.recv_timeout(Duration::from_millis(20)), Err(RecvError::Timeout)));
        assert_eq!(a.subscribe::<u64>("quiet", 0).err(), Some(BusError::ZeroCapacity));
    }

    #[test]
    fn no_cross_talk() {
        let bus = Bus::new();
        let a = bus.create_node("a").unwrap();
        let sa = a.subscribe::<u64>("A", 4).unwrap();
        let sb = a.subscribe::<u64>("B", 4).unwrap();
        a.publish("A", &7u64).unwrap();
        assert_eq!(sa.recv().unwrap().value, 7);
        assert!(matches!(sb.try_recv(), Err(RecvError::Timeout)));
    }

    #[test]
    fn topic_type_checked() {
        let bus = Bus::new();
        let a = bus.create_node("a").unwrap();
        let _s = a.subscribe::<u64>("t", 4).unwrap();
        assert!(matches!(a.publish("t", &1.0f64), Err(BusError::TypeMismatch { .. })));
    }

    #[test]
    fn echo_service_and_errors() {
        let bus = Bus::new();
        let srv = bus.create_node("srv").unwrap();
        let cli = bus.create_node("cli").unwrap();
        srv.serve("/echo", |s: String| s).unwrap();
        let got: String = cli.call("/echo", &"reset".to_string(), 1.0).unwrap();
        assert_eq!(got, "reset");
        assert_eq!(srv.serve("/echo", |s: String| s).err(), Some(BusError::DuplicateService("/echo".into())));
        assert_eq!(
            cli.call::<String, String>("/missing", &"x".into(), 1.0).err(),
            Some(BusError::ServiceNotFound("/missing".into()))
        );
        assert!(matches!(cli.call::<u64, String>("/echo", &1, 1.0), Err(BusError::TypeMismatch { .. })));
        assert_eq!(bus.services()[0].provider, "srv");
    }

    #[test]
    fn slow_handler_times_out() {
        let bus = Bus::new();
        let srv = bus.create_node("srv").unwrap();
        srv.serve("/slow", |x: u64| {
            thread::sleep(Duration::from_millis(200));
            x
        })
        .unwrap();
        assert_eq!(srv.call::<u64, u64>("/slow", &1, 0.0).err(), Some(BusError::Timeout("/slow".into())));
        bus.shutdown();
    }

    #[test]
    fn concurrent_calls_are_serialized() {
        let bus = Bus::new();
        let srv = bus.create_node("srv").unwrap();
        let in_handler = Arc::new(AtomicBool::new(false));
        let overlap = Arc::new(AtomicBool::new(false));
        let mut counter = 0u64;
        {
            let in_handler = in_handler.clone();
            let overlap = overlap.clone();
            srv.serve("/inc", move |_: u64| {
                if in_handler.swap(true, Ordering::SeqCst) {
                    overlap.store(true, Ordering::SeqCst);
                }
                counter += 1;
                thread::yield_now();
                in_handler.store(false, Ordering::SeqCst);
                counter
            })
            .unwrap();
        }
        let done = Arc::new(AtomicUsize::new(0));
        let threads: Vec<_> = (0..100)
            .map(|i| {
                let node = bus.create_node(&format!("c{i}")).unwrap();
                let done = done.clone();
                thread::spawn(move || {
                    let _: u64 = node.call("/inc", &0u64, 10.0).unwrap();
                    done.fetch_add(1, Ordering::SeqCst);
                })
            })
            .collect();
        for t in threads {
            t.join().unwrap();
        }
        let last: u64 = srv.call("/inc", &0u64, 10.0).unwrap();
        assert_eq!(last, 101);
        assert_eq!(done.load(Ordering::SeqCst), 100);
        assert!(!overlap.load(Ordering::SeqCst));
    }

    #[test]
    fn shutdown_wakes_blocked_receivers() {
        let bus = Bus::new();
        let a = bus.create_node("a").unwrap();
        let subs: Vec<_> = (0..4).map(|i| a.subscribe::<u64>(&format!("t{i}"), 4).unwrap()).collect();
        let handles: Vec<_> = subs.into_iter().map(|s| thread::spawn(move || s.recv().map(|m| m.value))).collect();
        thread::sleep(Duration::from_millis(50));
        let t0 = Instant::now();
        bus.shutdown();
        for h in handles {
            assert_eq!(h.join().unwrap().unwrap_err(), RecvError::Closed);
        }
        assert!(t0.elapsed() < Duration::from_secs(1));
        assert_eq!(a.publish("t0", &1u64).err(), Some(BusError::Closed));
    }

    #[test]
    fn callback_subscription_runs_on_worker() {
        let bus = Bus::new();
        let a = bus.create_node("a").unwrap();
        let (tx, rx) = mpsc::channel();
        a.subscribe_callback::<u64, _>("t", 4, move |m| {
            let _ = tx.send((m.value, thread::current().name().map(str::to_string)));
        })
        .unwrap();
        a.publish("t", &5u64).unwrap();
        let (v, name) = rx.recv_timeout(Duration::from_secs(1)).unwrap();
        assert_eq!(v, 5);
        assert_eq!(name.as_deref(), Some("a:t"));
        bus.shutdown();
    }

    #[test]
    fn hop_overhead_positive() {
        let bus = Bus::new();
        let s = measure_hop_overhead(&bus, 64, 1000).unwrap();
        assert!(s.mean > 0.0 && s.mean.is_finite());
        assert!(s.std_dev.is_finite());
        bus.shutdown();
    }
}
