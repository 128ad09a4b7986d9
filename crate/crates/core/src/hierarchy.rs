//! Hierarchical aggregation over a quadtree of cells.
//!
//! Level 0 tiles the region into `2^P x 2^P` cells holding about `delta`
//! nodes each; every level up merges 2x2 cells, and level `P` is the whole
//! region. Each cell at each level runs its own walk instance: a flood, a
//! token confined to nodes inside the cell, and a result flood confined the
//! same way. One push at the start serves every level: a receiver files an
//! incoming push under each level at which the sender shares its cell.
//!
//! A level-`j` instance walks `delta * 4^j` transfers, the expected
//! population of its cell.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ezag::{EzagOptions, Selection, Token};
use crate::idset::IdSet;
use crate::metrics::{median, MessageCounters};
use crate::mobility::MobilityConfig;
use crate::netsim::{Instance, MediumConfig, Message, MessageKind, Network, Payload, Protocol, SimTime, Stop};
use crate::synopsis::{self, OdiSynopsis};
use crate::world::{CellGrid, CellId, NodeId, World};
use crate::{Error, Result};

pub const DEFAULT_DELTA: u32 = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    /// Expected level-0 cell population.
    pub delta: u32,
    /// Number of levels, `P + 1`.
    pub levels: u32,
    /// Instances at level `j` start uniformly within `refresh_periods[j]`.
    pub refresh_periods: Vec<f64>,
    /// Timer constants and aggregate kind for every instance.
    pub walk: EzagOptions,
}

impl HierarchyConfig {
    /// `P = floor(log4(n / delta))`, at least 0.
    pub fn for_network(n: usize, delta: u32) -> Result<Self> {
        if delta == 0 {
            return Err(Error::Config("delta must be >= 1".into()));
        }
        let top = top_level(n as u64, u64::from(delta));
        let levels = top + 1;
        let refresh_periods = (0..levels).map(|j| f64::from(delta) * 4f64.powi(j as i32) * 0.05).collect();
        Ok(Self { delta, levels, refresh_periods, walk: EzagOptions { push_enabled: true, ..EzagOptions::default() } })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.levels == 0 || self.delta == 0 {
            return Err(Error::Config("levels and delta must be >= 1".into()));
        }
        if self.refresh_periods.len() != self.levels as usize || self.refresh_periods.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Config("need one positive refresh period per level".into()));
        }
        let cap = f64::from(self.delta) * 4f64.powi(self.levels as i32 - 1);
        let n = n as f64;
        if cap > 4.0 * n || cap * 4.0 < n {
            return Err(Error::Config(format!("delta * 4^P = {cap} is not within a factor 4 of N = {n}")));
        }
        self.walk.validate()
    }

    /// Transfers walked by one instance at `level`.
    pub fn budget(&self, level: u32) -> u64 {
        u64::from(self.delta) << (2 * level)
    }
}

fn top_level(n: u64, delta: u64) -> u32 {
    let mut p = 0;
    while delta << (2 * (p + 1)) <= n {
        p += 1;
    }
    p
}

/// `N (P + 1)` with `P = floor(log4(n / delta))`.
pub fn predicted_hier_messages(n: u64, delta: u64) -> Result<u64> {
    if delta == 0 || delta > n {
        return Err(Error::Range(format!("need 1 <= delta <= n, got delta={delta}, n={n}")));
    }
    Ok(n * u64::from(top_level(n, delta) + 1))
}

/// `n ln(n)^exponent`, the message model of multi-resolution gossip.
pub fn gossip_projection(n: u64, exponent: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Range(format!("need n >= 2, got {n}")));
    }
    Ok(n as f64 * (n as f64).ln().powf(exponent))
}

/// Ratio of the gossip model to `n ln n`: `ln(n)^(exponent - 1)`.
pub fn gossip_advantage(n: u64, exponent: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Range(format!("need n >= 2, got {n}")));
    }
    Ok((n as f64).ln().powf(exponent - 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HierTimer {
    Start { idx: u32 },
    FireRequest { idx: u32, round: u64 },
    Decide { idx: u32, round: u64 },
    Reannounce { idx: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Waiting,
    Flooding,
    Walking,
    Disseminating,
    Done,
}

/// One cell's walk instance.
struct CellRun {
    level: u32,
    cell: CellId,
    phase: Phase,
    /// Deliveries and timers of this instance still queued.
    pending: usize,
    start: SimTime,
    finish: SimTime,
    members: IdSet,
    token: Token,
    round: u64,
    decided: bool,
    attempts: u32,
    requests: Vec<(NodeId, u32)>,
    heard: IdSet,
    got_result: IdSet,
    pending_round: HashMap<NodeId, u64>,
    visits: HashMap<NodeId, u32>,
    isolated: bool,
}

impl CellRun {
    fn instance(&self) -> Instance {
        Instance { level: self.level, cell: self.cell.0 }
    }
}

/// Per-instance results.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceStats {
    pub level: u32,
    pub cell: CellId,
    /// Nodes inside the cell when the instance started.
    pub members: u32,
    pub transfers: u64,
    pub covered: u32,
    /// Every node present at start was aggregated.
    pub covered_members: bool,
    pub start_time: f64,
    /// Seconds from instance start until its result flood drained.
    pub completion_time: f64,
    pub isolated: bool,
    pub synopsis: OdiSynopsis,
}

/// Per-level roll-up.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelStats {
    pub level: u32,
    pub cells: u32,
    pub nonempty_cells: u32,
    pub messages: MessageCounters,
    pub mean_transfers: f64,
    pub median_transfers: f64,
    pub median_completion_time: f64,
}

#[derive(Clone, Debug)]
pub struct HierOutcome {
    pub instances: Vec<InstanceStats>,
    pub levels: Vec<LevelStats>,
    pub push_messages: u64,
    pub total_messages: MessageCounters,
    /// `results[node][level]`: the cell the node was in when the result
    /// reached it, and the aggregate.
    pub results: Vec<Vec<Option<(CellId, OdiSynopsis)>>>,
    /// Transfers whose recipient was outside the token's cell on arrival.
    pub confinement_violations: u64,
    pub stop: Stop,
}

impl HierOutcome {
    pub fn level_transfers(&self, level: u32) -> Vec<f64> {
        self.instances.iter().filter(|i| i.level == level && i.members > 0).map(|i| i.transfers as f64).collect()
    }

    pub fn level_completion_times(&self, level: u32) -> Vec<f64> {
        self.instances.iter().filter(|i| i.level == level && i.members > 0).map(|i| i.completion_time).collect()
    }
}

pub struct HierProtocol {
    cfg: HierarchyConfig,
    grid: CellGrid,
    n: usize,
    offsets: Vec<u32>,
    runs: Vec<CellRun>,
    push_synopsis: Vec<Vec<OdiSynopsis>>,
    pushed_by: Vec<Vec<Vec<NodeId>>>,
    results: Vec<Vec<Option<(CellId, OdiSynopsis)>>>,
    level_messages: Vec<MessageCounters>,
    push_done: bool,
    open_runs: usize,
    violations: u64,
}

impl HierProtocol {
    pub fn new(world: &World, cfg: HierarchyConfig) -> Result<Self> {
        let n = world.len();
        cfg.validate(n)?;
        let top = cfg.levels - 1;
        let grid = CellGrid::tiled(world.area_side(), top);
        let w = &cfg.walk;
        let empty = OdiSynopsis::empty(w.aggregate, w.sketch_registers, w.sketch_seed);
        let mut offsets = Vec::new();
        let mut runs = Vec::new();
        for level in 0..cfg.levels {
            offsets.push(runs.len() as u32);
            for c in 0..grid.cell_count(level) {
                runs.push(CellRun {
                    level,
                    cell: CellId(c),
                    phase: Phase::Waiting,
                    pending: 0,
                    start: SimTime::ZERO,
                    finish: SimTime::ZERO,
                    members: IdSet::with_capacity(n),
                    token: Token { synopsis: empty.clone(), transfer_count: 0, covered: IdSet::with_capacity(n), holder: NodeId(0) },
                    round: 0,
                    decided: false,
                    attempts: 0,
                    requests: Vec::new(),
                    heard: IdSet::with_capacity(n),
                    got_result: IdSet::with_capacity(n),
                    pending_round: HashMap::new(),
                    visits: HashMap::new(),
                    isolated: false,
                });
            }
        }
        let own: Vec<OdiSynopsis> = (0..n).map(|i| synopsis::singleton(w.aggregate, w.sketch_registers, w.sketch_seed, i as u32)).collect();
        let levels = cfg.levels as usize;
        Ok(Self {
            push_synopsis: own.iter().map(|s| vec![s.clone(); levels]).collect(),
            pushed_by: vec![vec![Vec::new(); levels]; n],
            results: vec![vec![None; levels]; n],
            level_messages: vec![MessageCounters::default(); levels],
            open_runs: runs.len(),
            runs,
            offsets,
            grid,
            cfg,
            n,
            push_done: false,
            violations: 0,
        })
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    fn idx(&self, inst: Instance) -> usize {
        (self.offsets[inst.level as usize] + inst.cell) as usize
    }

    fn cell_of(&self, world: &World, id: NodeId, level: u32) -> CellId {
        self.grid.cell_of(world.position(id), level).expect("level within grid")
    }

    /// Confined broadcast: only receivers currently inside the instance's
    /// cell get a delivery.
    fn cell_broadcast(&mut self, net: &mut Network<HierTimer>, idx: usize, from: NodeId, payload: Payload) {
        let (level, cell) = (self.runs[idx].level, self.runs[idx].cell);
        self.level_messages[level as usize].add(payload.kind(), 1);
        let grid = &self.grid;
        let run = &self.runs[idx];
        let suppress = self.cfg.walk.suppression;
        let k = match &payload {
            Payload::Request { round, .. } => {
                let round = *round;
                net.broadcast_filtered(from, payload, |w, r| {
                    grid.cell_of(w.position(r), level) == Ok(cell)
                        && (r == run.token.holder || suppress && run.pending_round.get(&r) == Some(&round))
                })
            }
            _ => net.broadcast_filtered(from, payload, |w, r| grid.cell_of(w.position(r), level) == Ok(cell)),
        };
        self.runs[idx].pending += k;
    }

    fn timer(&mut self, net: &mut Network<HierTimer>, idx: usize, node: NodeId, delay: f64, t: HierTimer) {
        net.set_timer(node, SimTime::from_secs(delay), t);
        self.runs[idx].pending += 1;
    }

    fn start_instance(&mut self, net: &mut Network<HierTimer>, idx: usize) {
        let (level, cell) = (self.runs[idx].level, self.runs[idx].cell);
        let members: IdSet = (0..self.n).map(NodeId::from_index).filter(|&id| self.cell_of(net.world(), id, level) == cell).collect();
        let run = &mut self.runs[idx];
        run.start = net.now();
        let Some(initiator) = members.iter().next() else {
            run.phase = Phase::Done;
            run.finish = net.now();
            run.members = members;
            self.open_runs -= 1;
            return;
        };
        run.members = members;
        run.phase = Phase::Flooding;
        run.token.holder = initiator;
        self.hear_request(net, idx, initiator);
    }

    fn hear_request(&mut self, net: &mut Network<HierTimer>, idx: usize, id: NodeId) {
        if !self.runs[idx].heard.insert(id) {
            return;
        }
        let instance = self.runs[idx].instance();
        self.cell_broadcast(net, idx, id, Payload::AggRequest { instance });
    }

    fn visit(&mut self, idx: usize, id: NodeId) {
        let level = self.runs[idx].level as usize;
        let run = &mut self.runs[idx];
        *run.visits.entry(id).or_default() += 1;
        run.token.synopsis.merge_in_place(&self.push_synopsis[id.index()][level]).expect("uniform synopsis kind");
        run.token.covered.insert(id);
        for &p in &self.pushed_by[id.index()][level] {
            run.token.covered.insert(p);
        }
    }

    fn announce(&mut self, net: &mut Network<HierTimer>, idx: usize) {
        let run = &mut self.runs[idx];
        run.round += 1;
        run.decided = false;
        run.requests.clear();
        let (holder, round, instance) = (run.token.holder, run.round, run.instance());
        self.cell_broadcast(net, idx, holder, Payload::Announce { instance, round });
        let w = &self.cfg.walk;
        let m = net.medium();
        let delay = m.max_latency(MessageKind::TokenAnnounce) + w.request_window + m.max_latency(MessageKind::TokenRequest);
        self.timer(net, idx, holder, delay, HierTimer::Decide { idx: idx as u32, round });
    }

    fn finish_walk(&mut self, net: &mut Network<HierTimer>, idx: usize) {
        let run = &mut self.runs[idx];
        run.phase = Phase::Disseminating;
        let holder = run.token.holder;
        let (level, cell, instance) = (run.level, run.cell, run.instance());
        let syn = run.token.synopsis.clone();
        run.got_result.insert(holder);
        self.results[holder.index()][level as usize] = Some((cell, syn.clone()));
        self.cell_broadcast(net, idx, holder, Payload::Result { instance, synopsis: syn });
    }

    fn decide(&mut self, net: &mut Network<HierTimer>, idx: usize) {
        let (level, cell) = (self.runs[idx].level, self.runs[idx].cell);
        // Requesters that have left the cell are no longer eligible.
        let grid = &self.grid;
        self.runs[idx].requests.retain(|&(r, _)| grid.cell_of(net.world().position(r), level) == Ok(cell));
        let run = &mut self.runs[idx];
        run.decided = true;
        let holder = run.token.holder;
        if run.requests.is_empty() {
            run.attempts += 1;
            if run.attempts >= self.cfg.walk.max_announce_attempts {
                run.isolated = true;
                self.finish_walk(net, idx);
            } else {
                let t = self.cfg.walk.transfer_timeout;
                self.timer(net, idx, holder, t, HierTimer::Reannounce { idx: idx as u32 });
            }
            return;
        }
        run.attempts = 0;
        let min = run.requests.iter().map(|&(_, v)| v).min().expect("non-empty");
        let to = match self.cfg.walk.selection {
            Selection::LeastVisited => {
                let best: Vec<NodeId> = run.requests.iter().filter(|&&(_, v)| v == min).map(|&(r, _)| r).collect();
                *best.choose(net.rng()).expect("non-empty")
            }
            Selection::Uniform => run.requests.choose(net.rng()).expect("non-empty").0,
        };
        let payload = Payload::Transfer { instance: run.instance(), round: run.round, synopsis: run.token.synopsis.clone() };
        self.level_messages[level as usize].add(MessageKind::TokenTransfer, 1);
        if net.unicast(holder, to, payload) {
            self.runs[idx].pending += 1;
        } else {
            let t = self.cfg.walk.transfer_timeout;
            self.timer(net, idx, holder, t, HierTimer::Reannounce { idx: idx as u32 });
        }
    }

    /// Advances an instance whose queued events have all drained.
    fn settle(&mut self, net: &mut Network<HierTimer>, idx: usize) {
        if self.runs[idx].pending > 0 {
            return;
        }
        match self.runs[idx].phase {
            Phase::Flooding => {
                self.runs[idx].phase = Phase::Walking;
                let holder = self.runs[idx].token.holder;
                self.visit(idx, holder);
                if self.runs[idx].token.transfer_count >= self.cfg.budget(self.runs[idx].level) {
                    self.finish_walk(net, idx);
                } else {
                    self.announce(net, idx);
                }
            }
            Phase::Disseminating => {
                let run = &mut self.runs[idx];
                run.phase = Phase::Done;
                run.finish = net.now();
                self.open_runs -= 1;
            }
            _ => {}
        }
    }

    fn on_instance_message(&mut self, net: &mut Network<HierTimer>, idx: usize, to: NodeId, msg: &Message) {
        let (level, cell) = (self.runs[idx].level, self.runs[idx].cell);
        let inside = self.cell_of(net.world(), to, level) == cell;
        match &msg.payload {
            Payload::AggRequest { .. } => {
                if inside {
                    self.hear_request(net, idx, to);
                }
            }
            Payload::Announce { round, .. } => {
                let run = &self.runs[idx];
                if !inside || run.phase != Phase::Walking || *round != run.round || to == run.token.holder {
                    return;
                }
                let visits = run.visits.get(&to).copied().unwrap_or(0);
                let delay = request_delay(&self.cfg.walk, visits, net.rng());
                self.runs[idx].pending_round.insert(to, *round);
                self.timer(net, idx, to, delay, HierTimer::FireRequest { idx: idx as u32, round: *round });
            }
            Payload::Request { round, visits, .. } => {
                let run = &mut self.runs[idx];
                if *round != run.round {
                    return;
                }
                if to == run.token.holder {
                    if run.phase == Phase::Walking && !run.decided {
                        run.requests.push((msg.sender, *visits));
                    }
                } else if self.cfg.walk.suppression
                    && run.pending_round.get(&to) == Some(round)
                    && *visits <= run.visits.get(&to).copied().unwrap_or(0)
                {
                    run.pending_round.remove(&to);
                }
            }
            Payload::Transfer { round, .. } => {
                let run = &mut self.runs[idx];
                if *round != run.round || run.phase != Phase::Walking {
                    return;
                }
                if !inside {
                    self.violations += 1;
                }
                run.token.holder = to;
                run.token.transfer_count += 1;
                self.visit(idx, to);
                if self.runs[idx].token.transfer_count >= self.cfg.budget(level) {
                    self.finish_walk(net, idx);
                } else {
                    self.announce(net, idx);
                }
            }
            Payload::Result { synopsis, instance } => {
                if inside && self.runs[idx].got_result.insert(to) {
                    self.results[to.index()][level as usize] = Some((cell, synopsis.clone()));
                    let payload = Payload::Result { instance: *instance, synopsis: synopsis.clone() };
                    self.cell_broadcast(net, idx, to, payload);
                }
            }
            _ => {}
        }
    }

    fn into_outcome(self, net: &Network<HierTimer>, stop: Stop) -> HierOutcome {
        let instances: Vec<InstanceStats> = self
            .runs
            .iter()
            .map(|r| InstanceStats {
                level: r.level,
                cell: r.cell,
                members: r.members.len() as u32,
                transfers: r.token.transfer_count,
                covered: r.token.covered.len() as u32,
                covered_members: r.members.is_subset(&r.token.covered),
                start_time: r.start.as_secs(),
                completion_time: if r.phase == Phase::Done { (r.finish.as_secs() - r.start.as_secs()).max(0.0) } else { f64::NAN },
                isolated: r.isolated,
                synopsis: r.token.synopsis.clone(),
            })
            .collect();
        let levels = (0..self.cfg.levels)
            .map(|level| {
                let of_level: Vec<&InstanceStats> = instances.iter().filter(|i| i.level == level).collect();
                let busy: Vec<&&InstanceStats> = of_level.iter().filter(|i| i.members > 0).collect();
                let transfers: Vec<f64> = busy.iter().map(|i| i.transfers as f64).collect();
                let times: Vec<f64> = busy.iter().map(|i| i.completion_time).collect();
                LevelStats {
                    level,
                    cells: of_level.len() as u32,
                    nonempty_cells: busy.len() as u32,
                    messages: self.level_messages[level as usize],
                    mean_transfers: if transfers.is_empty() { 0.0 } else { transfers.iter().sum::<f64>() / transfers.len() as f64 },
                    median_transfers: median(&transfers),
                    median_completion_time: median(&times),
                }
            })
            .collect();
        HierOutcome {
            instances,
            levels,
            push_messages: net.counters().get(MessageKind::Push),
            total_messages: *net.counters(),
            results: self.results,
            confinement_violations: self.violations,
            stop,
        }
    }
}

fn request_delay(w: &EzagOptions, visits: u32, rng: &mut impl Rng) -> f64 {
    let spread = if w.request_jitter > 0.0 { rng.random::<f64>() * w.request_jitter } else { 0.0 };
    (spread + w.request_slope * f64::from(visits)).min(w.request_window)
}

fn instance_of(p: &Payload) -> Option<Instance> {
    match p {
        Payload::AggRequest { instance }
        | Payload::Announce { instance, .. }
        | Payload::Request { instance, .. }
        | Payload::Transfer { instance, .. }
        | Payload::Result { instance, .. } => Some(*instance),
        _ => None,
    }
}

impl Protocol for HierProtocol {
    type Timer = HierTimer;

    fn start(&mut self, net: &mut Network<HierTimer>) {
        for i in 0..self.n {
            let id = NodeId::from_index(i);
            let w = &self.cfg.walk;
            let own = synopsis::singleton(w.aggregate, w.sketch_registers, w.sketch_seed, id.0);
            let origin = net.world().position(id);
            net.broadcast(id, Payload::Push { synopsis: own, origin });
        }
    }

    fn on_message(&mut self, net: &mut Network<HierTimer>, to: NodeId, msg: &Message) {
        if let Payload::Push { synopsis, origin } = &msg.payload {
            let here = net.world().position(to);
            for level in 0..self.cfg.levels {
                if self.grid.cell_of(*origin, level) == self.grid.cell_of(here, level) {
                    let l = level as usize;
                    self.push_synopsis[to.index()][l].merge_in_place(synopsis).expect("uniform synopsis kind");
                    self.pushed_by[to.index()][l].push(msg.sender);
                }
            }
            return;
        }
        let Some(inst) = instance_of(&msg.payload) else { return };
        let idx = self.idx(inst);
        self.runs[idx].pending -= 1;
        self.on_instance_message(net, idx, to, msg);
        self.settle(net, idx);
    }

    fn on_timer(&mut self, net: &mut Network<HierTimer>, node: NodeId, timer: HierTimer) {
        let idx = match timer {
            HierTimer::Start { idx } | HierTimer::FireRequest { idx, .. } | HierTimer::Decide { idx, .. } | HierTimer::Reannounce { idx } => {
                idx as usize
            }
        };
        if !matches!(timer, HierTimer::Start { .. }) {
            self.runs[idx].pending -= 1;
        }
        match timer {
            HierTimer::Start { .. } => self.start_instance(net, idx),
            HierTimer::FireRequest { round, .. } => {
                let run = &mut self.runs[idx];
                if run.pending_round.get(&node) == Some(&round) && round == run.round && run.phase == Phase::Walking {
                    run.pending_round.remove(&node);
                    let visits = run.visits.get(&node).copied().unwrap_or(0);
                    let instance = run.instance();
                    self.cell_broadcast(net, idx, node, Payload::Request { instance, round, visits });
                }
            }
            HierTimer::Decide { round, .. } => {
                let run = &self.runs[idx];
                if round == run.round && run.phase == Phase::Walking && node == run.token.holder {
                    self.decide(net, idx);
                }
            }
            HierTimer::Reannounce { .. } => {
                let run = &self.runs[idx];
                if run.phase == Phase::Walking && node == run.token.holder {
                    self.announce(net, idx);
                }
            }
        }
        self.settle(net, idx);
    }

    fn on_idle(&mut self, net: &mut Network<HierTimer>) {
        if self.push_done {
            return;
        }
        self.push_done = true;
        for idx in 0..self.runs.len() {
            let period = self.cfg.refresh_periods[self.runs[idx].level as usize];
            let delay = net.rng().random::<f64>() * period;
            net.set_timer(NodeId(0), SimTime::from_secs(delay), HierTimer::Start { idx: idx as u32 });
        }
    }

    fn is_done(&self) -> bool {
        self.push_done && self.open_runs == 0
    }
}

/// Runs every cell instance at every level once.
pub fn run_hier(world: World, mobility: &MobilityConfig, medium: &MediumConfig, cfg: &HierarchyConfig, seed: u64) -> Result<HierOutcome> {
    let mut proto = HierProtocol::new(&world, cfg.clone())?;
    let mut net: Network<HierTimer> = Network::new(world, mobility.clone(), medium.clone(), seed)?;
    let (stop, _) = net.run(&mut proto, SimTime::from_secs(cfg.walk.horizon));
    Ok(proto.into_outcome(&net, stop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::WorldConfig;

    #[test]
    fn predicted_messages_examples() {
        assert_eq!(predicted_hier_messages(16, 16).unwrap(), 16);
        assert_eq!(predicted_hier_messages(1024, 16).unwrap(), 4096);
        assert_eq!(predicted_hier_messages(63, 16).unwrap(), 63);
        assert_eq!(predicted_hier_messages(64, 16).unwrap(), 128);
        assert!(predicted_hier_messages(8, 16).is_err());
        for p in 0..6u32 {
            let n = 16u64 << (2 * p);
            let closed = n as f64 * f64::from(p) + n as f64;
            assert_eq!(predicted_hier_messages(n, 16).unwrap() as f64 / closed, 1.0);
        }
    }

    #[test]
    fn gossip_examples() {
        assert_eq!(gossip_projection(2, 5.4).unwrap(), 2.0 * 2f64.ln().powf(5.4));
        assert_eq!(gossip_projection(100, 1.0).unwrap(), 100.0 * 100f64.ln());
        assert!((gossip_advantage(4000, 5.4).unwrap() / 4000f64.ln().powf(4.4) - 1.0).abs() < 1e-12);
        assert!(gossip_projection(1, 2.0).is_err());
    }

    #[test]
    fn config_levels() {
        assert_eq!(HierarchyConfig::for_network(1024, 16).unwrap().levels, 4);
        assert_eq!(HierarchyConfig::for_network(10, 16).unwrap().levels, 1);
        assert_eq!(HierarchyConfig::for_network(256, 16).unwrap().budget(2), 256);
        let mut c = HierarchyConfig::for_network(1024, 16).unwrap();
        assert!(c.validate(1024).is_ok());
        c.levels = 6;
        assert!(c.validate(1024).is_err());
    }

    #[test]
    fn single_cell_is_one_instance() {
        let cfg = WorldConfig::geo_dense(12, 0.0017, 2.0, 3);
        let world = World::build(cfg).unwrap();
        let h = HierarchyConfig::for_network(12, 16).unwrap();
        let out = run_hier(world, &MobilityConfig::stationary(), &MediumConfig::default(), &h, 1).unwrap();
        assert_eq!(out.instances.len(), 1);
        assert_eq!(out.stop, Stop::Done);
        assert_eq!(out.instances[0].transfers, 16);
        assert!(out.instances[0].covered_members);
        for r in &out.results {
            assert_eq!(r[0].as_ref().map(|(_, s)| s.clone()), Some(OdiSynopsis::Max(Some(11))));
        }
    }
}
