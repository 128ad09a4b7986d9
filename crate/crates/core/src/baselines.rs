//! Comparison protocols: the walk without push (self-repelling or plain),
//! and tree aggregation with periodic refresh.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ezag::{run_ezag, EzagOptions, EzagOutcome};
use crate::idset::IdSet;
use crate::metrics::{ProtocolName, TrialStats};
use crate::mobility::MobilityConfig;
use crate::netsim::{MediumConfig, Message, Network, Payload, Protocol, SimTime, Stop};
use crate::synopsis::{self, AggregateKind, OdiSynopsis};
use crate::world::{NodeId, World};
use crate::Result;

/// Uniform random walk to full coverage.
pub fn run_plain_rw(world: World, mobility: &MobilityConfig, medium: &MediumConfig, seed: u64) -> Result<EzagOutcome> {
    run_ezag(world, mobility, medium, &EzagOptions::plain_rw(), seed)
}

/// Self-repelling walk without the push phase, to full coverage.
pub fn run_srrw(world: World, mobility: &MobilityConfig, medium: &MediumConfig, seed: u64) -> Result<EzagOutcome> {
    run_ezag(world, mobility, medium, &EzagOptions::srrw(), seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeOptions {
    /// Seconds between request floods.
    pub refresh_period: f64,
    /// Data is sent at a uniform time within this many seconds.
    pub send_window: f64,
    pub retransmit_timeout: f64,
    pub aggregate: AggregateKind,
    pub sketch_registers: u16,
    pub sketch_seed: u64,
    pub root: NodeId,
    pub horizon: f64,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self {
            refresh_period: 2.0,
            send_window: 25e-3,
            retransmit_timeout: 100e-3,
            aggregate: AggregateKind::Max,
            sketch_registers: synopsis::DEFAULT_REGISTERS,
            sketch_seed: 0x5eed,
            root: NodeId(0),
            horizon: 3600.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreeTimer {
    Refresh,
    Send,
    Retransmit { seq: u64 },
}

/// Data handed to the parent and not yet acknowledged.
#[derive(Clone, Debug)]
struct InFlight {
    seq: u64,
    epoch: u32,
    synopsis: OdiSynopsis,
    covered: IdSet,
    attempts: u32,
}

#[derive(Clone, Debug)]
struct TreeNode {
    parent: Option<NodeId>,
    epoch: u32,
    /// Everything received (or owned) and not yet sent, merged.
    queue: Option<(OdiSynopsis, IdSet)>,
    in_flight: Option<InFlight>,
    send_scheduled: bool,
}

/// Per-node tree state after a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeState {
    pub parent: Option<NodeId>,
    pub epoch: u32,
}

pub struct TreeProtocol {
    opts: TreeOptions,
    n: usize,
    nodes: Vec<TreeNode>,
    root_synopsis: OdiSynopsis,
    root_covered: IdSet,
    epoch: u32,
    next_seq: u64,
    stale_acks: u64,
    max_attempts: u32,
    done_at: Option<SimTime>,
    /// Parent pointers captured when the first request flood drained.
    first_tree: Option<Vec<TreeState>>,
}

impl TreeProtocol {
    pub fn new(n: usize, opts: TreeOptions) -> Result<Self> {
        if opts.root.index() >= n {
            return Err(crate::Error::UnknownNode(opts.root));
        }
        if !(opts.refresh_period > 0.0 && opts.send_window >= 0.0 && opts.retransmit_timeout > 0.0) {
            return Err(crate::Error::Config("tree timers must be positive".into()));
        }
        let nodes = (0..n)
            .map(|i| {
                let own = synopsis::singleton(opts.aggregate, opts.sketch_registers, opts.sketch_seed, i as u32);
                let mut ids = IdSet::with_capacity(n);
                ids.insert(NodeId::from_index(i));
                TreeNode { parent: None, epoch: 0, queue: Some((own, ids)), in_flight: None, send_scheduled: false }
            })
            .collect();
        let mut root_covered = IdSet::with_capacity(n);
        root_covered.insert(opts.root);
        Ok(Self {
            root_synopsis: synopsis::singleton(opts.aggregate, opts.sketch_registers, opts.sketch_seed, opts.root.0),
            root_covered,
            opts,
            n,
            nodes,
            epoch: 0,
            next_seq: 0,
            stale_acks: 0,
            max_attempts: 0,
            done_at: None,
            first_tree: None,
        })
    }

    pub fn states(&self) -> Vec<TreeState> {
        self.nodes.iter().map(|s| TreeState { parent: s.parent, epoch: s.epoch }).collect()
    }

    fn refresh(&mut self, net: &mut Network<TreeTimer>) {
        self.epoch += 1;
        let root = self.opts.root;
        self.nodes[root.index()].epoch = self.epoch;
        net.broadcast(root, Payload::TreeRequest { epoch: self.epoch });
        net.set_timer(root, SimTime::from_secs(self.opts.refresh_period), TreeTimer::Refresh);
    }

    fn schedule_send(&mut self, net: &mut Network<TreeTimer>, id: NodeId) {
        let s = &mut self.nodes[id.index()];
        if s.send_scheduled || s.in_flight.is_some() || s.queue.is_none() || s.parent.is_none() {
            return;
        }
        s.send_scheduled = true;
        let delay = net.rng().random::<f64>() * self.opts.send_window;
        net.set_timer(id, SimTime::from_secs(delay), TreeTimer::Send);
    }

    fn transmit(&mut self, net: &mut Network<TreeTimer>, id: NodeId) {
        let s = &mut self.nodes[id.index()];
        let Some(parent) = s.parent else { return };
        let Some(f) = &mut s.in_flight else { return };
        f.epoch = s.epoch;
        f.attempts += 1;
        self.max_attempts = self.max_attempts.max(f.attempts);
        let payload = Payload::TreeData { epoch: f.epoch, synopsis: f.synopsis.clone(), covered: f.covered.clone() };
        let seq = f.seq;
        net.unicast(id, parent, payload);
        net.set_timer(id, SimTime::from_secs(self.opts.retransmit_timeout), TreeTimer::Retransmit { seq });
    }

    fn absorb(&mut self, id: NodeId, syn: &OdiSynopsis, covered: &IdSet) {
        if id == self.opts.root {
            self.root_synopsis.merge_in_place(syn).expect("uniform synopsis kind");
            self.root_covered.union_with(covered);
            return;
        }
        let s = &mut self.nodes[id.index()];
        match &mut s.queue {
            Some((q, c)) => {
                q.merge_in_place(syn).expect("uniform synopsis kind");
                c.union_with(covered);
            }
            None => s.queue = Some((syn.clone(), covered.clone())),
        }
    }

    fn check_done(&mut self, net: &Network<TreeTimer>) {
        if self.done_at.is_none() && self.root_covered.len() == self.n {
            self.done_at = Some(net.now());
        }
    }
}

impl Protocol for TreeProtocol {
    type Timer = TreeTimer;

    fn start(&mut self, net: &mut Network<TreeTimer>) {
        let root = self.opts.root;
        self.nodes[root.index()].queue = None;
        self.refresh(net);
        self.check_done(net);
    }

    fn on_message(&mut self, net: &mut Network<TreeTimer>, to: NodeId, msg: &Message) {
        match &msg.payload {
            Payload::TreeRequest { epoch } => {
                let s = &mut self.nodes[to.index()];
                if *epoch <= s.epoch {
                    return;
                }
                s.epoch = *epoch;
                s.parent = Some(msg.sender);
                net.broadcast(to, Payload::TreeRequest { epoch: *epoch });
                self.schedule_send(net, to);
            }
            Payload::TreeData { epoch, synopsis, covered } => {
                if *epoch < self.nodes[to.index()].epoch {
                    return;
                }
                net.unicast(to, msg.sender, Payload::TreeAck { epoch: *epoch });
                self.absorb(to, synopsis, covered);
                self.check_done(net);
                self.schedule_send(net, to);
            }
            Payload::TreeAck { epoch } => {
                let s = &mut self.nodes[to.index()];
                if s.in_flight.as_ref().is_some_and(|f| f.epoch == *epoch) {
                    s.in_flight = None;
                    self.schedule_send(net, to);
                }
            }
            _ => {}
        }
    }

    fn on_timer(&mut self, net: &mut Network<TreeTimer>, node: NodeId, timer: TreeTimer) {
        match timer {
            TreeTimer::Refresh => {
                if self.done_at.is_none() {
                    self.refresh(net);
                }
            }
            TreeTimer::Send => {
                let s = &mut self.nodes[node.index()];
                s.send_scheduled = false;
                if s.in_flight.is_some() || s.parent.is_none() {
                    return;
                }
                let Some((synopsis, covered)) = s.queue.take() else { return };
                let seq = self.next_seq;
                self.next_seq += 1;
                s.in_flight = Some(InFlight { seq, epoch: s.epoch, synopsis, covered, attempts: 0 });
                self.transmit(net, node);
            }
            TreeTimer::Retransmit { seq } => {
                let s = &mut self.nodes[node.index()];
                if s.in_flight.as_ref().is_some_and(|f| f.seq == seq) {
                    // Fold anything queued meanwhile into the retry.
                    if let (Some(f), Some((q, c))) = (&mut s.in_flight, s.queue.take()) {
                        f.synopsis.merge_in_place(&q).expect("uniform synopsis kind");
                        f.covered.union_with(&c);
                    }
                    self.transmit(net, node);
                }
            }
        }
    }

    fn on_idle(&mut self, _net: &mut Network<TreeTimer>) {}

    fn is_done(&self) -> bool {
        self.done_at.is_some()
    }
}

/// Result of one tree run.
#[derive(Clone, Debug)]
pub struct TreeOutcome {
    pub stats: TrialStats,
    pub root_synopsis: OdiSynopsis,
    pub states: Vec<TreeState>,
    /// Tree after the first request flood, when the run lasted that long.
    pub first_tree: Option<Vec<TreeState>>,
    /// Acks sent for an epoch older than the receiver's. Stale data is
    /// dropped unacknowledged, so this stays zero.
    pub stale_acks: u64,
    /// Largest number of transmissions of one in-flight item.
    pub max_attempts: u32,
    pub stop: Stop,
}

struct FirstTree<'a>(&'a mut TreeProtocol);

impl Protocol for FirstTree<'_> {
    type Timer = TreeTimer;
    fn start(&mut self, net: &mut Network<TreeTimer>) {
        self.0.start(net);
    }
    fn on_message(&mut self, net: &mut Network<TreeTimer>, to: NodeId, msg: &Message) {
        self.0.on_message(net, to, msg);
    }
    fn on_timer(&mut self, net: &mut Network<TreeTimer>, node: NodeId, timer: TreeTimer) {
        if self.0.first_tree.is_none() && timer == TreeTimer::Refresh {
            self.0.first_tree = Some(self.0.states());
        }
        self.0.on_timer(net, node, timer);
    }
    fn on_idle(&mut self, net: &mut Network<TreeTimer>) {
        self.0.on_idle(net);
    }
    fn is_done(&self) -> bool {
        self.0.is_done()
    }
}

/// Tree aggregation until the root has heard from every node.
pub fn run_tree(world: World, mobility: &MobilityConfig, medium: &MediumConfig, opts: &TreeOptions, seed: u64) -> Result<TreeOutcome> {
    let n = world.len();
    let mut net: Network<TreeTimer> = Network::new(world, mobility.clone(), medium.clone(), seed)?;
    let mut proto = TreeProtocol::new(n, opts.clone())?;
    let (stop, end) = net.run(&mut FirstTree(&mut proto), SimTime::from_secs(opts.horizon));
    if proto.first_tree.is_none() {
        proto.first_tree = Some(proto.states());
    }
    let mut stats = TrialStats::new(seed, ProtocolName::Tree, n, mobility.model, mobility.mean_speed);
    stats.messages = *net.counters();
    stats.coverage_curve = vec![(0, proto.root_covered.len() as u32)];
    stats.set_histogram_from_counts(std::iter::repeat_n(0, n));
    let t = proto.done_at.unwrap_or(end).as_secs();
    stats.aggregation_time = t;
    stats.completion_time = t;
    stats.complete = stop == Stop::Done;
    stats.full_coverage = proto.root_covered.len() == n;
    Ok(TreeOutcome {
        stats,
        states: proto.states(),
        root_synopsis: proto.root_synopsis,
        first_tree: proto.first_tree,
        stale_acks: proto.stale_acks,
        max_attempts: proto.max_attempts,
        stop,
    })
}

/// Checks that parent pointers of nodes in `epoch` lead to `root` without
/// cycles. Nodes not in `epoch` are ignored.
pub fn is_forest_rooted_at(states: &[TreeState], root: NodeId, epoch: u32) -> bool {
    for (i, s) in states.iter().enumerate() {
        if s.epoch != epoch || NodeId::from_index(i) == root {
            continue;
        }
        let mut cur = NodeId::from_index(i);
        let mut steps = 0;
        while cur != root {
            match states[cur.index()].parent {
                Some(p) if states[p.index()].epoch >= epoch => cur = p,
                _ => return false,
            }
            steps += 1;
            if steps > states.len() {
                return false;
            }
        }
    }
    true
}
