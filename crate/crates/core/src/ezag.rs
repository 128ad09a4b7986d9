//! Push-assisted self-repelling token walk.
//!
//! A run has four phases:
//!
//! 1. The initiator floods an aggregate request; every node rebroadcasts it
//!    once.
//! 2. On first hearing the request each node pushes its own state to its
//!    neighbors (one broadcast), so every node ends up holding the aggregate
//!    of its radio neighborhood.
//! 3. Once the network is quiet the initiator starts a token. The holder
//!    announces; hearers answer after a delay that grows with how often they
//!    have held the token, and drop their answer if they overhear a request
//!    from a node visited no more often than themselves. The holder hands the
//!    token to the least visited requester. Each new holder folds its pushed
//!    aggregate into the token.
//! 4. When the walk stops the holder floods the result.
//!
//! The walk stops either when the token has aggregated every node (oracle
//! mode, used to measure exploration overhead) or after exactly N transfers.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::idset::IdSet;
use crate::metrics::{ProtocolName, TrialStats};
use crate::mobility::MobilityConfig;
use crate::netsim::{Instance, MediumConfig, MessageKind, Message, Network, Payload, Protocol, SimTime, Stop};
use crate::synopsis::{self, AggregateKind, OdiSynopsis};
use crate::world::{NodeId, World};
use crate::{Error, Result};

/// How the holder picks among requesters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Fewest advertised visits, ties uniformly at random.
    LeastVisited,
    /// Uniformly at random, ignoring visit counts.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EzagOptions {
    pub push_enabled: bool,
    /// Stop after exactly N transfers instead of at full coverage.
    pub terminate_after_n_steps: bool,
    pub selection: Selection,
    /// Drop a pending request on overhearing one from a node visited no
    /// more often.
    pub suppression: bool,
    /// Seconds; request timers never exceed this.
    pub request_window: f64,
    /// Seconds of uniform spread in the request timer.
    pub request_jitter: f64,
    /// Seconds of request delay per prior visit.
    pub request_slope: f64,
    /// Seconds before the holder re-announces after a failed round.
    pub transfer_timeout: f64,
    pub max_announce_attempts: u32,
    pub aggregate: AggregateKind,
    pub sketch_registers: u16,
    pub sketch_seed: u64,
    pub initiator: NodeId,
    /// Simulated seconds before a run is abandoned as incomplete.
    pub horizon: f64,
    /// Keep a per-transfer record for invariant checks.
    pub record_transfers: bool,
}

impl Default for EzagOptions {
    fn default() -> Self {
        Self {
            push_enabled: true,
            terminate_after_n_steps: false,
            selection: Selection::LeastVisited,
            suppression: true,
            request_window: 9e-3,
            request_jitter: 3e-3,
            request_slope: 3e-3,
            transfer_timeout: 50e-3,
            max_announce_attempts: 5,
            aggregate: AggregateKind::Max,
            sketch_registers: synopsis::DEFAULT_REGISTERS,
            sketch_seed: 0x5eed,
            initiator: NodeId(0),
            horizon: 3600.0,
            record_transfers: false,
        }
    }
}

impl EzagOptions {
    /// The self-repelling walk alone.
    pub fn srrw() -> Self {
        Self { push_enabled: false, ..Self::default() }
    }

    /// A simple random walk: every hearer requests at a uniform time in the
    /// window, nobody suppresses, and the holder picks uniformly.
    pub fn plain_rw() -> Self {
        Self {
            push_enabled: false,
            selection: Selection::Uniform,
            suppression: false,
            request_jitter: 9e-3,
            request_slope: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.request_window > 0.0) {
            return Err(Error::Config("request_window must be > 0".into()));
        }
        if !(self.request_slope >= 0.0 && self.request_jitter >= 0.0) {
            return Err(Error::Config("request_slope and request_jitter must be >= 0".into()));
        }
        if !(self.transfer_timeout > 0.0) || self.max_announce_attempts == 0 {
            return Err(Error::Config("transfer_timeout and max_announce_attempts must be positive".into()));
        }
        Ok(())
    }

    pub fn protocol_name(&self) -> ProtocolName {
        match (self.push_enabled, self.selection) {
            (true, _) => ProtocolName::Ezag,
            (false, Selection::LeastVisited) => ProtocolName::Srrw,
            (false, Selection::Uniform) => ProtocolName::PlainRw,
        }
    }

    fn request_delay(&self, visits: u32, rng: &mut impl Rng) -> f64 {
        let spread = if self.request_jitter > 0.0 { rng.random::<f64>() * self.request_jitter } else { 0.0 };
        (spread + self.request_slope * f64::from(visits)).min(self.request_window)
    }
}

/// Walk state: the aggregate so far plus the exact set of contributors,
/// which is instrumentation and never transmitted.
#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub synopsis: OdiSynopsis,
    pub transfer_count: u64,
    pub covered: IdSet,
    pub holder: NodeId,
}

/// One hand-over, for checking the selection rule after the fact.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransferRecord {
    pub round: u64,
    pub from: NodeId,
    pub to: NodeId,
    /// Recipient's visit count before the transfer.
    pub recipient_visits: u32,
    /// Smallest visit count among that round's requesters.
    pub min_requester_visits: u32,
    pub requests: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EzagTimer {
    FireRequest { round: u64 },
    Decide { round: u64 },
    Reannounce,
}

#[derive(Clone, Debug)]
struct NodeState {
    visits: u32,
    heard_request: bool,
    push_synopsis: OdiSynopsis,
    /// Senders whose push reached this node.
    pushed_by: Vec<NodeId>,
    pending_round: Option<u64>,
    result: Option<OdiSynopsis>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Flooding,
    Walking,
    Disseminating,
    Done,
}

/// The flat protocol as an engine-driven state machine.
pub struct EzagProtocol {
    opts: EzagOptions,
    n: usize,
    nodes: Vec<NodeState>,
    token: Token,
    phase: Phase,
    round: u64,
    decided: bool,
    attempts: u32,
    requests: Vec<(NodeId, u32)>,
    decision_delay: SimTime,
    curve: Vec<(u64, u32)>,
    transfer_log: Vec<TransferRecord>,
    aggregation_time: f64,
    completion_time: f64,
    isolated: bool,
}

impl EzagProtocol {
    pub fn new(n: usize, opts: EzagOptions, medium: &MediumConfig) -> Result<Self> {
        opts.validate()?;
        if opts.initiator.index() >= n {
            return Err(Error::UnknownNode(opts.initiator));
        }
        let own = |i: usize| synopsis::singleton(opts.aggregate, opts.sketch_registers, opts.sketch_seed, i as u32);
        let nodes = (0..n)
            .map(|i| NodeState {
                visits: 0,
                heard_request: false,
                push_synopsis: own(i),
                pushed_by: Vec::new(),
                pending_round: None,
                result: None,
            })
            .collect();
        let decision_delay = SimTime::from_secs(
            medium.max_latency(MessageKind::TokenAnnounce) + opts.request_window + medium.max_latency(MessageKind::TokenRequest),
        );
        Ok(Self {
            token: Token {
                synopsis: OdiSynopsis::empty(opts.aggregate, opts.sketch_registers, opts.sketch_seed),
                transfer_count: 0,
                covered: IdSet::with_capacity(n),
                holder: opts.initiator,
            },
            opts,
            n,
            nodes,
            phase: Phase::Flooding,
            round: 0,
            decided: false,
            attempts: 0,
            requests: Vec::new(),
            decision_delay,
            curve: Vec::new(),
            transfer_log: Vec::new(),
            aggregation_time: 0.0,
            completion_time: 0.0,
            isolated: false,
        })
    }

    pub fn token(&self) -> &Token {
        &self.token
    }

    pub fn transfer_log(&self) -> &[TransferRecord] {
        &self.transfer_log
    }

    /// Per-node visit counts.
    pub fn visits(&self) -> impl Iterator<Item = u32> + '_ {
        self.nodes.iter().map(|s| s.visits)
    }

    /// Ids folded into each node's pushed aggregate, itself included.
    pub fn push_coverage(&self, id: NodeId) -> Vec<NodeId> {
        let mut v = self.nodes[id.index()].pushed_by.clone();
        v.push(id);
        v.sort_unstable();
        v
    }

    pub fn push_synopsis(&self, id: NodeId) -> &OdiSynopsis {
        &self.nodes[id.index()].push_synopsis
    }

    pub fn results(&self) -> impl Iterator<Item = Option<&OdiSynopsis>> + '_ {
        self.nodes.iter().map(|s| s.result.as_ref())
    }

    fn heard_request(&mut self, net: &mut Network<EzagTimer>, id: NodeId) {
        let s = &mut self.nodes[id.index()];
        if s.heard_request {
            return;
        }
        s.heard_request = true;
        net.broadcast(id, Payload::AggRequest { instance: Instance::GLOBAL });
        if self.opts.push_enabled {
            let own = synopsis::singleton(self.opts.aggregate, self.opts.sketch_registers, self.opts.sketch_seed, id.0);
            let origin = net.world().position(id);
            net.broadcast(id, Payload::Push { synopsis: own, origin });
        }
    }

    fn visit(&mut self, id: NodeId) {
        let s = &mut self.nodes[id.index()];
        s.visits += 1;
        self.token.synopsis.merge_in_place(&s.push_synopsis).expect("uniform synopsis kind");
        self.token.covered.insert(id);
        for &p in &s.pushed_by {
            self.token.covered.insert(p);
        }
        self.curve.push((self.token.transfer_count, self.token.covered.len() as u32));
    }

    fn walk_finished(&self) -> bool {
        if self.opts.terminate_after_n_steps {
            self.token.transfer_count >= self.n as u64
        } else {
            self.token.covered.len() == self.n
        }
    }

    fn announce(&mut self, net: &mut Network<EzagTimer>) {
        self.round += 1;
        self.decided = false;
        self.requests.clear();
        let holder = self.token.holder;
        net.broadcast(holder, Payload::Announce { instance: Instance::GLOBAL, round: self.round });
        net.set_timer(holder, self.decision_delay, EzagTimer::Decide { round: self.round });
    }

    fn finish_walk(&mut self, net: &mut Network<EzagTimer>) {
        self.aggregation_time = net.now().as_secs();
        self.phase = Phase::Disseminating;
        let holder = self.token.holder;
        self.nodes[holder.index()].result = Some(self.token.synopsis.clone());
        net.broadcast(holder, Payload::Result { instance: Instance::GLOBAL, synopsis: self.token.synopsis.clone() });
    }

    fn decide(&mut self, net: &mut Network<EzagTimer>) {
        self.decided = true;
        let holder = self.token.holder;
        if self.requests.is_empty() {
            self.attempts += 1;
            if self.attempts >= self.opts.max_announce_attempts {
                self.isolated = true;
                self.finish_walk(net);
            } else {
                net.set_timer(holder, SimTime::from_secs(self.opts.transfer_timeout), EzagTimer::Reannounce);
            }
            return;
        }
        self.attempts = 0;
        let min_visits = self.requests.iter().map(|&(_, v)| v).min().expect("non-empty");
        let (to, visits) = match self.opts.selection {
            Selection::LeastVisited => {
                let best: Vec<(NodeId, u32)> = self.requests.iter().copied().filter(|&(_, v)| v == min_visits).collect();
                *best.choose(net.rng()).expect("non-empty")
            }
            Selection::Uniform => *self.requests.choose(net.rng()).expect("non-empty"),
        };
        if self.opts.record_transfers {
            self.transfer_log.push(TransferRecord {
                round: self.round,
                from: holder,
                to,
                recipient_visits: self.nodes[to.index()].visits,
                min_requester_visits: min_visits,
                requests: self.requests.len() as u32,
            });
            debug_assert_eq!(visits, self.nodes[to.index()].visits);
        }
        let payload = Payload::Transfer { instance: Instance::GLOBAL, round: self.round, synopsis: self.token.synopsis.clone() };
        if !net.unicast(holder, to, payload) {
            if self.opts.record_transfers {
                self.transfer_log.pop();
            }
            net.set_timer(holder, SimTime::from_secs(self.opts.transfer_timeout), EzagTimer::Reannounce);
        }
    }

    fn into_stats(self, seed: u64, mobility: &MobilityConfig, stop: Stop) -> EzagOutcome {
        let mut stats = TrialStats::new(seed, self.opts.protocol_name(), self.n, mobility.model, mobility.mean_speed);
        stats.transfers = self.token.transfer_count;
        stats.coverage_curve = self.curve;
        stats.set_histogram_from_counts(self.nodes.iter().map(|s| s.visits));
        stats.aggregation_time = self.aggregation_time;
        stats.completion_time = self.completion_time;
        stats.complete = stop == Stop::Done && !self.isolated;
        stats.full_coverage = self.token.covered.len() == self.n;
        stats.isolated = self.isolated;
        EzagOutcome {
            stats,
            token: self.token,
            results: self.nodes.into_iter().map(|s| s.result).collect(),
            transfer_log: self.transfer_log,
            stop,
        }
    }
}

impl Protocol for EzagProtocol {
    type Timer = EzagTimer;

    fn start(&mut self, net: &mut Network<EzagTimer>) {
        self.heard_request(net, self.opts.initiator);
    }

    fn on_message(&mut self, net: &mut Network<EzagTimer>, to: NodeId, msg: &Message) {
        match &msg.payload {
            Payload::AggRequest { .. } => self.heard_request(net, to),
            Payload::Push { synopsis, .. } => {
                let s = &mut self.nodes[to.index()];
                s.push_synopsis.merge_in_place(synopsis).expect("uniform synopsis kind");
                s.pushed_by.push(msg.sender);
            }
            Payload::Announce { round, .. } => {
                if self.phase != Phase::Walking || *round != self.round || to == self.token.holder {
                    return;
                }
                let visits = self.nodes[to.index()].visits;
                let delay = self.opts.request_delay(visits, net.rng());
                self.nodes[to.index()].pending_round = Some(*round);
                net.set_timer(to, SimTime::from_secs(delay), EzagTimer::FireRequest { round: *round });
            }
            Payload::Request { round, visits, .. } => {
                if *round != self.round {
                    return;
                }
                if to == self.token.holder {
                    if self.phase == Phase::Walking && !self.decided {
                        self.requests.push((msg.sender, *visits));
                    }
                } else if self.opts.suppression {
                    let s = &mut self.nodes[to.index()];
                    if s.pending_round == Some(*round) && *visits <= s.visits {
                        s.pending_round = None;
                    }
                }
            }
            Payload::Transfer { round, .. } => {
                if *round != self.round || self.phase != Phase::Walking {
                    return;
                }
                self.token.holder = to;
                self.token.transfer_count += 1;
                self.visit(to);
                if self.walk_finished() {
                    self.finish_walk(net);
                } else {
                    self.announce(net);
                }
            }
            Payload::Result { synopsis, .. } => {
                let s = &mut self.nodes[to.index()];
                if s.result.is_none() {
                    s.result = Some(synopsis.clone());
                    net.broadcast(to, Payload::Result { instance: Instance::GLOBAL, synopsis: synopsis.clone() });
                }
            }
            Payload::TreeRequest { .. } | Payload::TreeData { .. } | Payload::TreeAck { .. } => {}
        }
    }

    fn on_timer(&mut self, net: &mut Network<EzagTimer>, node: NodeId, timer: EzagTimer) {
        match timer {
            EzagTimer::FireRequest { round } => {
                let s = &mut self.nodes[node.index()];
                if s.pending_round != Some(round) || round != self.round || self.phase != Phase::Walking {
                    return;
                }
                s.pending_round = None;
                let visits = s.visits;
                let holder = self.token.holder;
                let suppression = self.opts.suppression;
                let nodes = &self.nodes;
                net.broadcast_filtered(node, Payload::Request { instance: Instance::GLOBAL, round, visits }, |_, r| {
                    r == holder || suppression && nodes[r.index()].pending_round == Some(round)
                });
            }
            EzagTimer::Decide { round } => {
                if round == self.round && self.phase == Phase::Walking && node == self.token.holder {
                    self.decide(net);
                }
            }
            EzagTimer::Reannounce => {
                if self.phase == Phase::Walking && node == self.token.holder {
                    self.announce(net);
                }
            }
        }
    }

    fn on_idle(&mut self, net: &mut Network<EzagTimer>) {
        match self.phase {
            Phase::Flooding => {
                self.phase = Phase::Walking;
                let start = self.opts.initiator;
                self.token.holder = start;
                self.visit(start);
                if self.walk_finished() {
                    self.finish_walk(net);
                    if net.pending() == 0 {
                        self.on_idle(net);
                    }
                } else {
                    self.announce(net);
                }
            }
            Phase::Disseminating => {
                self.completion_time = net.now().as_secs();
                self.phase = Phase::Done;
            }
            Phase::Walking | Phase::Done => {}
        }
    }

    fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }
}

/// Result of a standalone flood.
#[derive(Clone, Debug)]
pub struct FloodReport {
    pub messages: u64,
    pub reached: IdSet,
    /// What each node stored, for floods that carry a synopsis.
    pub stored: Vec<Option<OdiSynopsis>>,
}

/// Every node rebroadcasts the first copy it hears.
struct Flood {
    origin: NodeId,
    payload: Payload,
    reached: IdSet,
    stored: Vec<Option<OdiSynopsis>>,
    done: bool,
}

impl Flood {
    fn keep(&mut self, id: NodeId, p: &Payload) {
        if let Payload::Result { synopsis, .. } = p {
            self.stored[id.index()] = Some(synopsis.clone());
        }
    }
}

impl Protocol for Flood {
    type Timer = ();

    fn start(&mut self, net: &mut Network<()>) {
        self.reached.insert(self.origin);
        let p = self.payload.clone();
        self.keep(self.origin, &p);
        net.broadcast(self.origin, p);
    }

    fn on_message(&mut self, net: &mut Network<()>, to: NodeId, msg: &Message) {
        if self.reached.insert(to) {
            self.keep(to, &msg.payload);
            net.broadcast(to, msg.payload.clone());
        }
    }

    fn on_timer(&mut self, _net: &mut Network<()>, _node: NodeId, _timer: ()) {}

    fn on_idle(&mut self, _net: &mut Network<()>) {
        self.done = true;
    }

    fn is_done(&self) -> bool {
        self.done
    }
}

fn run_flood(world: World, origin: NodeId, payload: Payload, seed: u64) -> Result<FloodReport> {
    let n = world.len();
    world.node(origin)?;
    let mut net: Network<()> = Network::new(world, MobilityConfig::stationary(), MediumConfig::default(), seed)?;
    let mut f = Flood { origin, payload, reached: IdSet::with_capacity(n), stored: vec![None; n], done: false };
    net.run(&mut f, SimTime(u64::MAX));
    Ok(FloodReport { messages: net.counters().total(), reached: f.reached, stored: f.stored })
}

/// The aggregate-request flood on its own, over a frozen world. A partial
/// flood in a disconnected world is reported, not an error.
pub fn flood_request(world: World, initiator: NodeId, seed: u64) -> Result<FloodReport> {
    run_flood(world, initiator, Payload::AggRequest { instance: Instance::GLOBAL }, seed)
}

/// The result flood on its own: every reached node stores `synopsis`.
pub fn disseminate_result(world: World, holder: NodeId, synopsis: &OdiSynopsis, seed: u64) -> Result<FloodReport> {
    run_flood(world, holder, Payload::Result { instance: Instance::GLOBAL, synopsis: synopsis.clone() }, seed)
}

/// Result of a standalone push phase.
#[derive(Clone, Debug)]
pub struct PushReport {
    pub messages: u64,
    pub synopses: Vec<OdiSynopsis>,
    /// Ids folded into each node's synopsis, itself included, sorted.
    pub coverage: Vec<Vec<NodeId>>,
}

/// One push broadcast per node over a frozen world.
pub fn push_phase(world: World, opts: &EzagOptions, seed: u64) -> Result<PushReport> {
    struct Push {
        synopses: Vec<OdiSynopsis>,
        coverage: Vec<Vec<NodeId>>,
        done: bool,
    }
    impl Protocol for Push {
        type Timer = ();
        fn start(&mut self, net: &mut Network<()>) {
            for i in 0..self.synopses.len() {
                let id = NodeId::from_index(i);
                let origin = net.world().position(id);
                net.broadcast(id, Payload::Push { synopsis: self.synopses[i].clone(), origin });
            }
        }
        fn on_message(&mut self, _net: &mut Network<()>, to: NodeId, msg: &Message) {
            if let Payload::Push { synopsis, .. } = &msg.payload {
                self.synopses[to.index()].merge_in_place(synopsis).expect("uniform synopsis kind");
                self.coverage[to.index()].push(msg.sender);
            }
        }
        fn on_timer(&mut self, _net: &mut Network<()>, _node: NodeId, _timer: ()) {}
        fn on_idle(&mut self, _net: &mut Network<()>) {
            self.done = true;
        }
        fn is_done(&self) -> bool {
            self.done
        }
    }
    let n = world.len();
    let mut p = Push {
        synopses: (0..n).map(|i| synopsis::singleton(opts.aggregate, opts.sketch_registers, opts.sketch_seed, i as u32)).collect(),
        coverage: (0..n).map(|i| vec![NodeId::from_index(i)]).collect(),
        done: false,
    };
    let mut net: Network<()> = Network::new(world, MobilityConfig::stationary(), MediumConfig::default(), seed)?;
    net.run(&mut p, SimTime(u64::MAX));
    for c in &mut p.coverage {
        c.sort_unstable();
    }
    Ok(PushReport { messages: net.counters().total(), synopses: p.synopses, coverage: p.coverage })
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct EzagOutcome {
    pub stats: TrialStats,
    pub token: Token,
    /// Disseminated aggregate at each node, if the result flood reached it.
    pub results: Vec<Option<OdiSynopsis>>,
    pub transfer_log: Vec<TransferRecord>,
    pub stop: Stop,
}

/// Runs one aggregation on `world`. `seed` drives mobility, the medium and
/// protocol choices; the world's own seed only fixes placement.
pub fn run_ezag(world: World, mobility: &MobilityConfig, medium: &MediumConfig, opts: &EzagOptions, seed: u64) -> Result<EzagOutcome> {
    let mut net = Network::new(world, mobility.clone(), medium.clone(), seed)?;
    run_ezag_on(&mut net, mobility, opts, seed)
}

/// As [`run_ezag`] on a prepared network (for example one with the event
/// log enabled).
pub fn run_ezag_on(net: &mut Network<EzagTimer>, mobility: &MobilityConfig, opts: &EzagOptions, seed: u64) -> Result<EzagOutcome> {
    let mut proto = EzagProtocol::new(net.world().len(), opts.clone(), net.medium())?;
    let (stop, _) = net.run(&mut proto, SimTime::from_secs(opts.horizon));
    let mut out = proto.into_stats(seed, mobility, stop);
    out.stats.messages = *net.counters();
    Ok(out)
}
