//! Deterministic discrete-event engine over an idealized broadcast medium.
//!
//! Events are totally ordered by `(fire_time, sequence)`. A broadcast is one
//! counted message and one delivery event per current disk neighbor, all at
//! the same instant; the neighbor set is taken at transmission time. Mobility advances on its own
//! periodic tick, interleaved with protocol events on the same queue.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::idset::IdSet;
use crate::metrics::MessageCounters;
use crate::mobility::{MobilityConfig, MobilityState};
use crate::synopsis::OdiSynopsis;
use crate::world::{NodeId, Point, World};
use crate::Result;

/// Simulated time in nanoseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(s: f64) -> Self {
        SimTime((s * 1e9).round().max(0.0) as u64)
    }

    pub fn from_millis(ms: f64) -> Self {
        Self::from_secs(ms * 1e-3)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 * 1e-9
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, o: SimTime) -> SimTime {
        SimTime(self.0 + o.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.as_secs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    AggRequestFlood,
    Push,
    TokenAnnounce,
    TokenRequest,
    TokenTransfer,
    ResultFlood,
    TreeRequest,
    TreeData,
    TreeAck,
}

impl MessageKind {
    pub const ALL: [MessageKind; 9] = [
        Self::AggRequestFlood,
        Self::Push,
        Self::TokenAnnounce,
        Self::TokenRequest,
        Self::TokenTransfer,
        Self::ResultFlood,
        Self::TreeRequest,
        Self::TreeData,
        Self::TreeAck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AggRequestFlood => "AGG_REQUEST_FLOOD",
            Self::Push => "PUSH",
            Self::TokenAnnounce => "TOKEN_ANNOUNCE",
            Self::TokenRequest => "TOKEN_REQUEST",
            Self::TokenTransfer => "TOKEN_TRANSFER",
            Self::ResultFlood => "RESULT_FLOOD",
            Self::TreeRequest => "TREE_REQUEST",
            Self::TreeData => "TREE_DATA",
            Self::TreeAck => "TREE_ACK",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies one protocol instance: the flat protocol uses
/// [`Instance::GLOBAL`]; the hierarchy keys instances by level and cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Instance {
    pub level: u32,
    pub cell: u32,
}

impl Instance {
    pub const GLOBAL: Instance = Instance { level: u32::MAX, cell: 0 };
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    AggRequest { instance: Instance },
    /// `origin` is the sender's position when it pushed.
    Push { synopsis: OdiSynopsis, origin: Point },
    Announce { instance: Instance, round: u64 },
    Request { instance: Instance, round: u64, visits: u32 },
    Transfer { instance: Instance, round: u64, synopsis: OdiSynopsis },
    Result { instance: Instance, synopsis: OdiSynopsis },
    TreeRequest { epoch: u32 },
    /// `covered` is instrumentation only: the exact ids folded into
    /// `synopsis`.
    TreeData { epoch: u32, synopsis: OdiSynopsis, covered: IdSet },
    TreeAck { epoch: u32 },
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Self::AggRequest { .. } => MessageKind::AggRequestFlood,
            Self::Push { .. } => MessageKind::Push,
            Self::Announce { .. } => MessageKind::TokenAnnounce,
            Self::Request { .. } => MessageKind::TokenRequest,
            Self::Transfer { .. } => MessageKind::TokenTransfer,
            Self::Result { .. } => MessageKind::ResultFlood,
            Self::TreeRequest { .. } => MessageKind::TreeRequest,
            Self::TreeData { .. } => MessageKind::TreeData,
            Self::TreeAck { .. } => MessageKind::TreeAck,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub sender: NodeId,
    pub tx_time: SimTime,
    pub payload: Payload,
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediumConfig {
    /// Mean per-hop latency of data-bearing messages, seconds.
    pub hop_latency: f64,
    /// Mean latency of short control frames (token requests), seconds.
    pub control_latency: f64,
    /// Latency is uniform in `mean * (1 +/- jitter)`.
    pub jitter: f64,
    pub loss_probability: f64,
}

impl Default for MediumConfig {
    fn default() -> Self {
        Self { hop_latency: 8e-3, control_latency: 0.05e-3, jitter: 0.2, loss_probability: 0.0 }
    }
}

impl MediumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_latency > 0.0 && self.control_latency > 0.0) {
            return Err(crate::Error::Config("latency must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(crate::Error::Config("loss_probability must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(crate::Error::Config("jitter must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn mean_latency(&self, kind: MessageKind) -> f64 {
        match kind {
            MessageKind::TokenRequest => self.control_latency,
            _ => self.hop_latency,
        }
    }

    /// Upper end of the latency distribution for `kind`.
    pub fn max_latency(&self, kind: MessageKind) -> f64 {
        self.mean_latency(kind) * (1.0 + self.jitter)
    }
}

struct Scheduled<E> {
    time: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Priority queue with a deterministic `(time, insertion order)` total order.
pub struct EventQueue<E> {
    heap: BinaryHeap<Scheduled<E>>,
    next_seq: u64,
    now: SimTime,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self { heap: BinaryHeap::new(), next_seq: 0, now: SimTime::ZERO }
    }
}

/// How a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stop {
    /// The predicate became true.
    Done,
    /// The horizon passed first; stats are partial.
    Horizon,
    /// Nothing left to process and the protocol is not finished.
    Stalled,
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedules `event` at absolute time `at` (clamped to now).
    pub fn schedule(&mut self, at: SimTime, event: E) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled { time: at.max(self.now), seq, event });
    }

    pub fn pop(&mut self) -> Option<(SimTime, E)> {
        let s = self.heap.pop()?;
        self.now = s.time;
        Some((s.time, s.event))
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|s| s.time)
    }

    /// Processes events in order until `done` holds. An empty queue or an
    /// event past `horizon` advances the clock to `horizon` and reports
    /// [`Stop::Horizon`].
    pub fn run_until(
        &mut self,
        horizon: SimTime,
        mut done: impl FnMut() -> bool,
        mut handle: impl FnMut(&mut Self, SimTime, E),
    ) -> (Stop, SimTime) {
        loop {
            if done() {
                return (Stop::Done, self.now);
            }
            match self.peek_time() {
                Some(t) if t <= horizon => {
                    let (t, e) = self.pop().expect("peeked");
                    handle(self, t, e);
                }
                _ => {
                    self.now = self.now.max(horizon);
                    return (Stop::Horizon, self.now);
                }
            }
        }
    }
}

enum NetEvent<T> {
    MobilityTick,
    Deliver { to: NodeId, msg: Arc<Message> },
    Timer { node: NodeId, timer: T },
}

/// A protocol state machine driven by the engine.
pub trait Protocol {
    type Timer;

    fn start(&mut self, net: &mut Network<Self::Timer>);
    fn on_message(&mut self, net: &mut Network<Self::Timer>, to: NodeId, msg: &Message);
    fn on_timer(&mut self, net: &mut Network<Self::Timer>, node: NodeId, timer: Self::Timer);
    /// Called when no message or timer is pending. Scheduling nothing and
    /// not being done stalls the run.
    fn on_idle(&mut self, _net: &mut Network<Self::Timer>) {}
    fn is_done(&self) -> bool;
}

/// One transmission or delivery, as written to the event log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub time: SimTime,
    pub delivery: bool,
    pub kind: MessageKind,
    pub sender: NodeId,
    /// `None` for a broadcast transmission.
    pub receiver: Option<NodeId>,
}

impl LogRecord {
    /// `time,event,kind,sender,receiver`, with `*` for a broadcast.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let receiver = self.receiver.map_or_else(|| "*".to_string(), |r| r.to_string());
        let _ = write!(
            s,
            "{},{},{},{},{}",
            self.time,
            if self.delivery { "rx" } else { "tx" },
            self.kind,
            self.sender,
            receiver
        );
        s
    }
}

/// Engine state shared with a running protocol: world, medium, clock and
/// counters. Everything is owned, so a whole network can move to a worker
/// thread.
pub struct Network<T> {
    world: World,
    mobility: MobilityState,
    medium: MediumConfig,
    rng: ChaCha8Rng,
    queue: EventQueue<NetEvent<T>>,
    pending: usize,
    tick: SimTime,
    counters: MessageCounters,
    log: Option<Vec<LogRecord>>,
}

impl<T> Network<T> {
    /// `seed` drives mobility, latency jitter, loss and protocol randomness.
    pub fn new(mut world: World, mobility: MobilityConfig, medium: MediumConfig, seed: u64) -> Result<Self> {
        medium.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tick = SimTime::from_secs(mobility.tick);
        let moving = !mobility.is_static();
        let mobility = MobilityState::init(mobility, &mut world, &mut rng)?;
        let mut queue = EventQueue::new();
        if moving {
            queue.schedule(tick, NetEvent::MobilityTick);
        }
        Ok(Self { world, mobility, medium, rng, queue, pending: 0, tick, counters: MessageCounters::default(), log: None })
    }

    pub fn enable_log(&mut self) {
        self.log = Some(Vec::new());
    }

    pub fn log(&self) -> Option<&[LogRecord]> {
        self.log.as_deref()
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn medium(&self) -> &MediumConfig {
        &self.medium
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn counters(&self) -> &MessageCounters {
        &self.counters
    }

    /// Protocol events (deliveries and timers) still queued.
    pub fn pending(&self) -> usize {
        self.pending
    }

    fn count(&mut self, kind: MessageKind, sender: NodeId, receiver: Option<NodeId>) {
        self.counters.add(kind, 1);
        if let Some(log) = &mut self.log {
            log.push(LogRecord { time: self.queue.now(), delivery: false, kind, sender, receiver });
        }
    }

    fn latency(&mut self, kind: MessageKind) -> SimTime {
        let mean = self.medium.mean_latency(kind);
        let j = self.medium.jitter;
        let f = if j > 0.0 { self.rng.random_range(1.0 - j..1.0 + j) } else { 1.0 };
        SimTime::from_secs(mean * f)
    }

    fn lost(&mut self) -> bool {
        self.medium.loss_probability > 0.0 && self.rng.random::<f64>() < self.medium.loss_probability
    }

    /// Local broadcast to every current neighbor. Returns the number of
    /// deliveries scheduled.
    pub fn broadcast(&mut self, sender: NodeId, payload: Payload) -> usize {
        self.broadcast_filtered(sender, payload, |_, _| true)
    }

    /// Broadcast whose deliveries are only scheduled at receivers accepted by
    /// `interested`; the others would ignore the message. Counting and loss
    /// draws are the same as for [`Network::broadcast`].
    pub fn broadcast_filtered(
        &mut self,
        sender: NodeId,
        payload: Payload,
        mut interested: impl FnMut(&World, NodeId) -> bool,
    ) -> usize {
        let kind = payload.kind();
        self.count(kind, sender, None);
        let msg = Arc::new(Message { sender, tx_time: self.now(), payload });
        let mut receivers = Vec::new();
        self.world.for_each_neighbor(sender, |n| receivers.push(n));
        // One frame: every receiver hears it at the same instant.
        let at = self.now() + self.latency(kind);
        let mut scheduled = 0;
        for to in receivers {
            if self.lost() || !interested(&self.world, to) {
                continue;
            }
            self.queue.schedule(at, NetEvent::Deliver { to, msg: Arc::clone(&msg) });
            self.pending += 1;
            scheduled += 1;
        }
        scheduled
    }

    /// Addressed transmission: delivered only if `to` is a neighbor at
    /// transmission time and the frame is not lost. Counts one message
    /// either way.
    pub fn unicast(&mut self, sender: NodeId, to: NodeId, payload: Payload) -> bool {
        let kind = payload.kind();
        self.count(kind, sender, Some(to));
        if sender == to || !self.world.in_range(sender, to) || self.lost() {
            return false;
        }
        let at = self.now() + self.latency(kind);
        let msg = Arc::new(Message { sender, tx_time: self.now(), payload });
        self.queue.schedule(at, NetEvent::Deliver { to, msg });
        self.pending += 1;
        true
    }

    pub fn set_timer(&mut self, node: NodeId, delay: SimTime, timer: T) {
        let at = self.now() + delay;
        self.queue.schedule(at, NetEvent::Timer { node, timer });
        self.pending += 1;
    }

    /// Runs `protocol` until it reports done, stalls, or `horizon` passes.
    pub fn run<P: Protocol<Timer = T>>(&mut self, protocol: &mut P, horizon: SimTime) -> (Stop, SimTime) {
        protocol.start(self);
        loop {
            if protocol.is_done() {
                return (Stop::Done, self.now());
            }
            if self.pending == 0 {
                protocol.on_idle(self);
                if protocol.is_done() {
                    return (Stop::Done, self.now());
                }
                if self.pending == 0 {
                    return (Stop::Stalled, self.now());
                }
            }
            match self.queue.peek_time() {
                Some(t) if t <= horizon => {}
                _ => return (Stop::Horizon, horizon),
            }
            let (_, event) = self.queue.pop().expect("peeked");
            match event {
                NetEvent::MobilityTick => {
                    let dt = self.tick.as_secs();
                    self.mobility.step(&mut self.world, dt, &mut self.rng);
                    let next = self.now() + self.tick;
                    self.queue.schedule(next, NetEvent::MobilityTick);
                }
                NetEvent::Deliver { to, msg } => {
                    self.pending -= 1;
                    if let Some(log) = &mut self.log {
                        log.push(LogRecord {
                            time: self.queue.now(),
                            delivery: true,
                            kind: msg.kind(),
                            sender: msg.sender,
                            receiver: Some(to),
                        });
                    }
                    protocol.on_message(self, to, &msg);
                }
                NetEvent::Timer { node, timer } => {
                    self.pending -= 1;
                    protocol.on_timer(self, node, timer);
                }
            }
        }
    }
}
