//! Built-in experiment specs, one per reproduced figure or table.

use ezag_core::metrics::ProtocolName::{self, Ezag, PlainRw, Srrw, Tree};
use ezag_core::mobility::MobilityModel::{self, GaussMarkov, RandomDirection, RandomWaypoint};

use crate::spec::{ExperimentKind, ExperimentSpec, Mode};

struct Entry {
    name: &'static str,
    about: &'static str,
    build: fn() -> ExperimentSpec,
}

const ENTRIES: &[Entry] = &[
    Entry { name: "fig2a", about: "SRRW exploration overhead vs coverage", build: fig2a },
    Entry { name: "fig2b", about: "SRRW and EZ-AG overhead at full coverage vs N", build: fig2b },
    Entry { name: "fig3a", about: "EZ-AG overhead under three mobility models", build: fig3a },
    Entry { name: "fig4", about: "EZ-AG and SRRW overhead vs node speed", build: fig4 },
    Entry { name: "fig4_visits", about: "plain RW vs SRRW visit distributions, static", build: fig4_visits },
    Entry { name: "fig5", about: "EZ-AG messages by kind and requests per transfer vs N", build: fig5 },
    Entry { name: "fig6", about: "tree vs EZ-AG messages, static", build: fig6 },
    Entry { name: "fig7", about: "tree vs EZ-AG messages at 15 m/s", build: fig7 },
    Entry { name: "table1", about: "link changes per node per second over N x speed", build: table1 },
    Entry { name: "hier", about: "hierarchical EZ-AG per-level cost, delta 16", build: hier },
    Entry { name: "projection", about: "analytic hierarchy vs spatial gossip message counts", build: projection },
    Entry { name: "term", about: "EZ-AG stopping after exactly N transfers", build: term },
];

pub fn names() -> impl Iterator<Item = (&'static str, &'static str)> {
    ENTRIES.iter().map(|e| (e.name, e.about))
}

pub fn get(name: &str) -> Option<ExperimentSpec> {
    ENTRIES.iter().find(|e| e.name == name).map(|e| (e.build)())
}

fn walk(name: &str, protocols: &[ProtocolName], n: &[usize], speeds: &[f64], trials: u32, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        protocols: protocols.to_vec(),
        n: n.to_vec(),
        speeds: speeds.to_vec(),
        trials,
        base_seed: seed,
        ..ExperimentSpec::new(name, ExperimentKind::Aggregation)
    }
}

fn fig2a() -> ExperimentSpec {
    walk("fig2a", &[Srrw], &[100, 200, 400, 500, 800, 1000], &[9.0], 50, 2_000)
}

fn fig2b() -> ExperimentSpec {
    ExperimentSpec { full_n: vec![2000, 4000], ..walk("fig2b", &[Srrw, Ezag], &[100, 200, 400, 800, 1000], &[9.0], 50, 2_100) }
}

fn fig3a() -> ExperimentSpec {
    const MODELS: [MobilityModel; 3] = [RandomDirection, RandomWaypoint, GaussMarkov];
    ExperimentSpec { models: MODELS.to_vec(), ..walk("fig3a", &[Ezag], &[100, 500, 1000], &[9.0], 50, 3_000) }
}

fn fig4() -> ExperimentSpec {
    walk("fig4", &[Srrw, Ezag], &[500], &[0.0, 3.0, 9.0, 15.0, 21.0], 30, 4_000)
}

fn fig4_visits() -> ExperimentSpec {
    ExperimentSpec { horizon: 20_000.0, ..walk("fig4_visits", &[PlainRw, Srrw], &[500], &[0.0], 20, 4_100) }
}

fn fig5() -> ExperimentSpec {
    ExperimentSpec { full_n: vec![2000, 4000], ..walk("fig5", &[Ezag], &[100, 200, 400, 800, 1000], &[9.0], 20, 5_000) }
}

fn fig6() -> ExperimentSpec {
    walk("fig6", &[Tree, Ezag], &[100, 200, 400, 800], &[0.0], 20, 6_000)
}

fn fig7() -> ExperimentSpec {
    walk("fig7", &[Tree, Ezag], &[100, 200, 400, 800], &[15.0], 20, 7_000)
}

fn table1() -> ExperimentSpec {
    ExperimentSpec {
        n: vec![100, 500, 1000],
        full_n: vec![2000, 4000],
        speeds: vec![3.0, 9.0, 15.0, 21.0],
        trials: 3,
        base_seed: 8_000,
        ..ExperimentSpec::new("table1", ExperimentKind::LinkChange)
    }
}

fn hier() -> ExperimentSpec {
    ExperimentSpec {
        n: vec![256, 1024],
        full_n: vec![4096],
        speeds: vec![0.0],
        trials: 20,
        base_seed: 9_000,
        ..ExperimentSpec::new("hier", ExperimentKind::Hierarchy)
    }
}

fn projection() -> ExperimentSpec {
    ExperimentSpec {
        n: vec![100, 200, 400, 800, 1000, 2000, 4000],
        trials: 1,
        exponents: vec![1.0, 5.4],
        ..ExperimentSpec::new("projection", ExperimentKind::Projection)
    }
}

fn term() -> ExperimentSpec {
    ExperimentSpec { mode: Mode::TerminateAfterN, ..walk("term", &[Ezag], &[500], &[9.0], 50, 10_000) }
}
