//! Batch execution of a spec. Every run is independent; results come back
//! in spec order whatever the worker count.

use ezag_core::baselines::{run_tree, TreeOptions};
use ezag_core::ezag::{run_ezag, EzagOptions};
use ezag_core::hierarchy::{gossip_advantage, gossip_projection, predicted_hier_messages, run_hier, HierarchyConfig};
use ezag_core::metrics::{exploration_overhead, median, BatchSummary, ProtocolName, TrialStats};
use ezag_core::mobility::{LinkChangeMeter, MobilityConfig, MobilityModel, MobilityState};
use ezag_core::netsim::{MediumConfig, MessageKind};
use ezag_core::{World, WorldConfig};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::spec::{ExperimentKind, ExperimentSpec, Mode};

/// Placements tried before a trial gives up on finding a connected world.
pub const MAX_RESAMPLES: u32 = 100;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Include the `full_n` sizes.
    pub full: bool,
    /// Overrides the spec's trial count.
    pub trials: Option<u32>,
}

/// One aggregation run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub experiment: String,
    pub protocol: ProtocolName,
    pub n_nodes: usize,
    pub model: MobilityModel,
    pub speed: f64,
    pub trial: u32,
    pub seed: u64,
    pub world_seed: u64,
    pub resamples: u32,
    pub transfers: u64,
    pub covered: u32,
    pub complete: bool,
    pub full_coverage: bool,
    pub isolated: bool,
    pub overhead_50: Option<f64>,
    pub overhead_75: Option<f64>,
    pub overhead_85: Option<f64>,
    pub overhead_100: Option<f64>,
    pub messages_total: u64,
    pub agg_request_flood: u64,
    pub push: u64,
    pub token_announce: u64,
    pub token_request: u64,
    pub token_transfer: u64,
    pub result_flood: u64,
    pub tree_request: u64,
    pub tree_data: u64,
    pub tree_ack: u64,
    pub requests_per_transfer: Option<f64>,
    pub max_visits: u32,
    pub visit_variance: f64,
    pub aggregation_time: f64,
    pub completion_time: f64,
}

/// One configuration of an aggregation experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub protocol: ProtocolName,
    pub n_nodes: usize,
    pub model: MobilityModel,
    pub speed: f64,
    pub trials: usize,
    pub complete_fraction: f64,
    pub full_coverage_fraction: f64,
    pub median_overhead_50: Option<f64>,
    pub median_overhead_75: Option<f64>,
    pub median_overhead_85: Option<f64>,
    pub median_overhead_100: Option<f64>,
    pub q1_overhead_100: Option<f64>,
    pub q3_overhead_100: Option<f64>,
    /// Trials whose full-coverage overhead exists and is below 1.
    pub overhead_100_below_1_fraction: f64,
    pub median_messages: f64,
    pub median_messages_per_node: f64,
    pub mean_requests_per_transfer: Option<f64>,
    pub median_max_visits: f64,
    pub median_visit_variance: f64,
    pub median_aggregation_time: f64,
    pub median_completion_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkRow {
    pub experiment: String,
    pub n_nodes: usize,
    pub model: MobilityModel,
    pub speed: f64,
    pub trial: u32,
    pub seed: u64,
    pub changes_per_node_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkSummaryRow {
    pub experiment: String,
    pub n_nodes: usize,
    pub model: MobilityModel,
    pub speed: f64,
    pub trials: usize,
    pub mean_changes_per_node_s: f64,
    pub median_changes_per_node_s: f64,
}

/// One level of one hierarchical run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HierRow {
    pub experiment: String,
    pub n_nodes: usize,
    pub model: MobilityModel,
    pub speed: f64,
    pub trial: u32,
    pub seed: u64,
    pub world_seed: u64,
    pub resamples: u32,
    pub level: u32,
    pub levels: u32,
    pub cells: u32,
    pub nonempty_cells: u32,
    pub mean_transfers: f64,
    pub median_transfers: f64,
    pub median_completion_time: f64,
    pub level_messages: u64,
    pub push_messages: u64,
    pub total_messages: u64,
    pub predicted_messages: u64,
    pub confinement_violations: u64,
    pub uncovered_instances: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HierSummaryRow {
    pub experiment: String,
    pub n_nodes: usize,
    pub model: MobilityModel,
    pub speed: f64,
    pub level: u32,
    pub trials: usize,
    pub median_transfers: f64,
    pub median_completion_time: f64,
    pub median_level_messages: f64,
    pub median_total_messages: f64,
    pub predicted_messages: u64,
    /// Median of `total_messages / predicted_messages`.
    pub median_fitted_c: f64,
    pub confinement_violations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionRow {
    pub experiment: String,
    pub n_nodes: usize,
    pub exponent: f64,
    pub gossip_messages: f64,
    pub hier_predicted_messages: Option<u64>,
    pub advantage: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Trials {
    Aggregation(Vec<TrialRow>),
    LinkChange(Vec<LinkRow>),
    Hierarchy(Vec<HierRow>),
    Projection(Vec<ProjectionRow>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Summary {
    Aggregation(Vec<SummaryRow>),
    LinkChange(Vec<LinkSummaryRow>),
    Hierarchy(Vec<HierSummaryRow>),
    Projection(Vec<ProjectionRow>),
}

#[derive(Clone, Debug)]
pub struct Report {
    /// The spec as run, after overrides.
    pub spec: ExperimentSpec,
    pub sizes: Vec<usize>,
    pub trials: Trials,
    pub summary: Summary,
}

impl Report {
    pub fn trials_csv(&self) -> Result<String> {
        match &self.trials {
            Trials::Aggregation(r) => to_csv(r),
            Trials::LinkChange(r) => to_csv(r),
            Trials::Hierarchy(r) => to_csv(r),
            Trials::Projection(r) => to_csv(r),
        }
    }

    pub fn summary_csv(&self) -> Result<String> {
        match &self.summary {
            Summary::Aggregation(r) => to_csv(r),
            Summary::LinkChange(r) => to_csv(r),
            Summary::Hierarchy(r) => to_csv(r),
            Summary::Projection(r) => to_csv(r),
        }
    }

    pub fn aggregation_rows(&self) -> &[TrialRow] {
        match &self.trials {
            Trials::Aggregation(r) => r,
            _ => &[],
        }
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Spec(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn mobility_for(model: MobilityModel, speed: f64) -> MobilityConfig {
    if speed == 0.0 || model == MobilityModel::Static {
        MobilityConfig::stationary()
    } else {
        MobilityConfig::nominal(model, speed)
    }
}

/// Placement seed for attempt `k` of a trial; attempt 0 is the trial seed.
pub fn world_seed(seed: u64, attempt: u32) -> u64 {
    seed ^ u64::from(attempt).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// A connected deployment for `seed`: disconnected placements are redrawn.
pub fn deploy(spec: &ExperimentSpec, n: usize, seed: u64) -> Result<(World, u64, u32)> {
    for attempt in 0..MAX_RESAMPLES {
        let ws = world_seed(seed, attempt);
        let w = World::build(WorldConfig::geo_dense(n, spec.density, spec.geo_dense_c, ws))?;
        if w.is_connected() {
            return Ok((w, ws, attempt));
        }
    }
    Err(HarnessError::Invalid(format!("no connected placement for n = {n} after {MAX_RESAMPLES} draws")))
}

#[derive(Clone, Copy)]
struct Job {
    protocol: ProtocolName,
    n: usize,
    model: MobilityModel,
    speed: f64,
    trial: u32,
}

fn jobs(spec: &ExperimentSpec, sizes: &[usize], protocols: &[ProtocolName]) -> Vec<Job> {
    let mut out = Vec::new();
    for &protocol in protocols {
        for &n in sizes {
            for &model in &spec.models {
                for &speed in &spec.speeds {
                    out.extend((0..spec.trials).map(|trial| Job { protocol, n, model, speed, trial }));
                }
            }
        }
    }
    out
}

/// Validates and runs `spec`.
pub fn run_spec(spec: &ExperimentSpec, opts: &RunOptions) -> Result<Report> {
    let mut spec = spec.clone();
    if let Some(t) = opts.trials {
        spec.trials = t;
    }
    spec.validate()?;
    let sizes = spec.sizes(opts.full);
    let (trials, summary) = match spec.experiment {
        ExperimentKind::Aggregation => {
            let rows = par_collect(jobs(&spec, &sizes, &spec.protocols), |j| aggregation_trial(&spec, j))?;
            let summary = summarize_aggregation(&spec, &rows);
            (Trials::Aggregation(rows), Summary::Aggregation(summary))
        }
        ExperimentKind::LinkChange => {
            let rows = par_collect(jobs(&spec, &sizes, &[ProtocolName::Ezag]), |j| link_trial(&spec, j))?;
            let summary = summarize_links(&spec, &rows);
            (Trials::LinkChange(rows), Summary::LinkChange(summary))
        }
        ExperimentKind::Hierarchy => {
            let nested = par_collect(jobs(&spec, &sizes, &[ProtocolName::Ezag]), |j| hier_trial(&spec, j))?;
            let rows: Vec<HierRow> = nested.into_iter().flatten().collect();
            let summary = summarize_hier(&spec, &rows);
            (Trials::Hierarchy(rows), Summary::Hierarchy(summary))
        }
        ExperimentKind::Projection => {
            let rows = projection_rows(&spec, &sizes)?;
            (Trials::Projection(rows.clone()), Summary::Projection(rows))
        }
    };
    Ok(Report { spec, sizes, trials, summary })
}

fn par_collect<T: Send>(jobs: Vec<Job>, f: impl Fn(Job) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    jobs.into_par_iter().map(f).collect()
}

fn aggregation_trial(spec: &ExperimentSpec, j: Job) -> Result<TrialRow> {
    let seed = spec.seed(j.trial);
    let (world, ws, resamples) = deploy(spec, j.n, seed)?;
    let mobility = mobility_for(j.model, j.speed);
    let medium = MediumConfig::default();
    let mut stats = match j.protocol {
        ProtocolName::Tree => {
            let opts = TreeOptions { aggregate: spec.aggregate, horizon: spec.horizon, ..TreeOptions::default() };
            run_tree(world, &mobility, &medium, &opts, seed)?.stats
        }
        p => {
            let base = match p {
                ProtocolName::Srrw => EzagOptions::srrw(),
                ProtocolName::PlainRw => EzagOptions::plain_rw(),
                _ => EzagOptions::default(),
            };
            let opts = EzagOptions {
                terminate_after_n_steps: spec.mode == Mode::TerminateAfterN,
                aggregate: spec.aggregate,
                horizon: spec.horizon,
                ..base
            };
            run_ezag(world, &mobility, &medium, &opts, seed)?.stats
        }
    };
    stats.model = j.model;
    stats.speed = j.speed;
    Ok(trial_row(spec, j.trial, ws, resamples, &stats))
}

fn trial_row(spec: &ExperimentSpec, trial: u32, world_seed: u64, resamples: u32, s: &TrialStats) -> TrialRow {
    let m = |k| s.messages.get(k);
    TrialRow {
        experiment: spec.name.clone(),
        protocol: s.protocol,
        n_nodes: s.n_nodes,
        model: s.model,
        speed: s.speed,
        trial,
        seed: s.seed,
        world_seed,
        resamples,
        transfers: s.transfers,
        covered: s.covered(),
        complete: s.complete,
        full_coverage: s.full_coverage,
        isolated: s.isolated,
        overhead_50: exploration_overhead(s, 0.5),
        overhead_75: exploration_overhead(s, 0.75),
        overhead_85: exploration_overhead(s, 0.85),
        overhead_100: exploration_overhead(s, 1.0),
        messages_total: s.messages.total(),
        agg_request_flood: m(MessageKind::AggRequestFlood),
        push: m(MessageKind::Push),
        token_announce: m(MessageKind::TokenAnnounce),
        token_request: m(MessageKind::TokenRequest),
        token_transfer: m(MessageKind::TokenTransfer),
        result_flood: m(MessageKind::ResultFlood),
        tree_request: m(MessageKind::TreeRequest),
        tree_data: m(MessageKind::TreeData),
        tree_ack: m(MessageKind::TreeAck),
        requests_per_transfer: s.requests_per_transfer(),
        max_visits: s.max_visits(),
        visit_variance: s.visit_variance(),
        aggregation_time: s.aggregation_time,
        completion_time: s.completion_time,
    }
}

fn opt_median(v: &[f64]) -> Option<f64> {
    BatchSummary::from_samples(v).map(|s| s.median)
}

fn summarize_aggregation(spec: &ExperimentSpec, rows: &[TrialRow]) -> Vec<SummaryRow> {
    rows.chunks(spec.trials as usize)
        .map(|cell| {
            let first = &cell[0];
            let k = cell.len() as f64;
            let pick = |f: fn(&TrialRow) -> Option<f64>| cell.iter().filter_map(f).collect::<Vec<_>>();
            let all = |f: fn(&TrialRow) -> f64| cell.iter().map(f).collect::<Vec<_>>();
            let o100 = BatchSummary::from_samples(&pick(|r| r.overhead_100));
            let rpt = pick(|r| r.requests_per_transfer);
            SummaryRow {
                experiment: spec.name.clone(),
                protocol: first.protocol,
                n_nodes: first.n_nodes,
                model: first.model,
                speed: first.speed,
                trials: cell.len(),
                complete_fraction: cell.iter().filter(|r| r.complete).count() as f64 / k,
                full_coverage_fraction: cell.iter().filter(|r| r.full_coverage).count() as f64 / k,
                median_overhead_50: opt_median(&pick(|r| r.overhead_50)),
                median_overhead_75: opt_median(&pick(|r| r.overhead_75)),
                median_overhead_85: opt_median(&pick(|r| r.overhead_85)),
                median_overhead_100: o100.map(|s| s.median),
                q1_overhead_100: o100.map(|s| s.q1),
                q3_overhead_100: o100.map(|s| s.q3),
                overhead_100_below_1_fraction: cell.iter().filter(|r| r.overhead_100.is_some_and(|o| o < 1.0)).count() as f64 / k,
                median_messages: median(&all(|r| r.messages_total as f64)),
                median_messages_per_node: median(&all(|r| r.messages_total as f64 / r.n_nodes as f64)),
                mean_requests_per_transfer: (!rpt.is_empty()).then(|| rpt.iter().sum::<f64>() / rpt.len() as f64),
                median_max_visits: median(&all(|r| f64::from(r.max_visits))),
                median_visit_variance: median(&all(|r| r.visit_variance)),
                median_aggregation_time: median(&all(|r| r.aggregation_time)),
                median_completion_time: median(&all(|r| r.completion_time)),
            }
        })
        .collect()
}

fn link_trial(spec: &ExperimentSpec, j: Job) -> Result<LinkRow> {
    let seed = spec.seed(j.trial);
    let mut world = World::build(WorldConfig::geo_dense(j.n, spec.density, spec.geo_dense_c, seed))?;
    let cfg = mobility_for(j.model, j.speed);
    let tick = cfg.tick;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = MobilityState::init(cfg, &mut world, &mut rng)?;
    let mut meter = LinkChangeMeter::new(LinkChangeMeter::snapshot(&world));
    let steps = (spec.measure_seconds / tick).round().max(1.0) as usize;
    for _ in 0..steps {
        state.step(&mut world, tick, &mut rng);
        meter.observe(LinkChangeMeter::snapshot(&world));
    }
    Ok(LinkRow {
        experiment: spec.name.clone(),
        n_nodes: j.n,
        model: j.model,
        speed: j.speed,
        trial: j.trial,
        seed,
        changes_per_node_s: meter.rate(tick),
    })
}

fn summarize_links(spec: &ExperimentSpec, rows: &[LinkRow]) -> Vec<LinkSummaryRow> {
    rows.chunks(spec.trials as usize)
        .map(|cell| {
            let rates: Vec<f64> = cell.iter().map(|r| r.changes_per_node_s).collect();
            LinkSummaryRow {
                experiment: spec.name.clone(),
                n_nodes: cell[0].n_nodes,
                model: cell[0].model,
                speed: cell[0].speed,
                trials: cell.len(),
                mean_changes_per_node_s: rates.iter().sum::<f64>() / rates.len() as f64,
                median_changes_per_node_s: median(&rates),
            }
        })
        .collect()
}

fn hier_trial(spec: &ExperimentSpec, j: Job) -> Result<Vec<HierRow>> {
    let seed = spec.seed(j.trial);
    let (world, ws, resamples) = deploy(spec, j.n, seed)?;
    let mut cfg = HierarchyConfig::for_network(j.n, spec.delta)?;
    cfg.walk.aggregate = spec.aggregate;
    cfg.walk.horizon = spec.horizon;
    let out = run_hier(world, &mobility_for(j.model, j.speed), &MediumConfig::default(), &cfg, seed)?;
    let predicted = predicted_hier_messages(j.n as u64, u64::from(spec.delta))?;
    Ok(out
        .levels
        .iter()
        .map(|l| HierRow {
            experiment: spec.name.clone(),
            n_nodes: j.n,
            model: j.model,
            speed: j.speed,
            trial: j.trial,
            seed,
            world_seed: ws,
            resamples,
            level: l.level,
            levels: cfg.levels,
            cells: l.cells,
            nonempty_cells: l.nonempty_cells,
            mean_transfers: l.mean_transfers,
            median_transfers: l.median_transfers,
            median_completion_time: l.median_completion_time,
            level_messages: l.messages.total(),
            push_messages: out.push_messages,
            total_messages: out.total_messages.total(),
            predicted_messages: predicted,
            confinement_violations: out.confinement_violations,
            uncovered_instances: out.instances.iter().filter(|i| i.level == l.level && i.members > 0 && !i.covered_members).count()
                as u32,
        })
        .collect())
}

fn summarize_hier(spec: &ExperimentSpec, rows: &[HierRow]) -> Vec<HierSummaryRow> {
    let mut keys: Vec<(usize, MobilityModel, u64, u32)> = Vec::new();
    for r in rows {
        let k = (r.n_nodes, r.model, r.speed.to_bits(), r.level);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(n, model, speed, level)| {
            let cell: Vec<&HierRow> =
                rows.iter().filter(|r| (r.n_nodes, r.model, r.speed.to_bits(), r.level) == (n, model, speed, level)).collect();
            let col = |f: fn(&HierRow) -> f64| cell.iter().map(|r| f(r)).collect::<Vec<_>>();
            HierSummaryRow {
                experiment: spec.name.clone(),
                n_nodes: n,
                model,
                speed: f64::from_bits(speed),
                level,
                trials: cell.len(),
                median_transfers: median(&col(|r| r.median_transfers)),
                median_completion_time: median(&col(|r| r.median_completion_time)),
                median_level_messages: median(&col(|r| r.level_messages as f64)),
                median_total_messages: median(&col(|r| r.total_messages as f64)),
                predicted_messages: cell[0].predicted_messages,
                median_fitted_c: median(&col(|r| r.total_messages as f64 / r.predicted_messages as f64)),
                confinement_violations: cell.iter().map(|r| r.confinement_violations).sum(),
            }
        })
        .collect()
}

fn projection_rows(spec: &ExperimentSpec, sizes: &[usize]) -> Result<Vec<ProjectionRow>> {
    let mut rows = Vec::new();
    for &n in sizes {
        for &e in &spec.exponents {
            rows.push(ProjectionRow {
                experiment: spec.name.clone(),
                n_nodes: n,
                exponent: e,
                gossip_messages: gossip_projection(n as u64, e)?,
                hier_predicted_messages: predicted_hier_messages(n as u64, u64::from(spec.delta)).ok(),
                advantage: gossip_advantage(n as u64, e)?,
            });
        }
    }
    Ok(rows)
}
