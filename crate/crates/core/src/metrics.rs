//! Per-run instrumentation and batch statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mobility::MobilityModel;
use crate::netsim::MessageKind;

/// Transmissions by message kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageCounters([u64; 9]);

impl MessageCounters {
    pub fn add(&mut self, kind: MessageKind, n: u64) {
        self.0[kind.index()] += n;
    }

    pub fn get(&self, kind: MessageKind) -> u64 {
        self.0[kind.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (MessageKind, u64)> + '_ {
        MessageKind::ALL.into_iter().map(|k| (k, self.get(k)))
    }

    pub fn merge(&mut self, other: &MessageCounters) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    Ezag,
    Srrw,
    PlainRw,
    Tree,
}

impl ProtocolName {
    pub const ALL: [ProtocolName; 4] = [Self::Ezag, Self::Srrw, Self::PlainRw, Self::Tree];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ezag => "ezag",
            Self::Srrw => "srrw",
            Self::PlainRw => "plain_rw",
            Self::Tree => "tree",
        }
    }
}

impl std::str::FromStr for ProtocolName {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| crate::Error::Config(format!("unknown protocol '{s}'")))
    }
}

/// Counters and curves for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub seed: u64,
    pub protocol: ProtocolName,
    pub n_nodes: usize,
    pub model: MobilityModel,
    pub speed: f64,
    pub transfers: u64,
    pub messages: MessageCounters,
    /// `(transfers, |covered|)` after the initial holder and after every
    /// transfer.
    pub coverage_curve: Vec<(u64, u32)>,
    /// visit count -> number of nodes with that count.
    pub visit_histogram: BTreeMap<u32, u32>,
    /// Seconds until the aggregate was complete at the token (or root).
    pub aggregation_time: f64,
    /// Seconds until the result had been disseminated.
    pub completion_time: f64,
    /// The run reached its stop condition within the horizon.
    pub complete: bool,
    /// Every node's contribution reached the aggregate.
    pub full_coverage: bool,
    /// The token holder found no requester after the retry budget.
    pub isolated: bool,
}

impl TrialStats {
    pub fn new(seed: u64, protocol: ProtocolName, n_nodes: usize, model: MobilityModel, speed: f64) -> Self {
        Self {
            seed,
            protocol,
            n_nodes,
            model,
            speed,
            transfers: 0,
            messages: MessageCounters::default(),
            coverage_curve: Vec::new(),
            visit_histogram: BTreeMap::new(),
            aggregation_time: 0.0,
            completion_time: 0.0,
            complete: false,
            full_coverage: false,
            isolated: false,
        }
    }

    pub fn covered(&self) -> u32 {
        self.coverage_curve.last().map_or(0, |&(_, c)| c)
    }

    pub fn requests_per_transfer(&self) -> Option<f64> {
        (self.transfers > 0).then(|| self.messages.get(MessageKind::TokenRequest) as f64 / self.transfers as f64)
    }

    pub fn max_visits(&self) -> u32 {
        self.visit_histogram.keys().next_back().copied().unwrap_or(0)
    }

    pub fn visit_variance(&self) -> f64 {
        visit_variance(&self.visit_histogram)
    }

    pub fn set_histogram_from_counts(&mut self, visits: impl IntoIterator<Item = u32>) {
        self.visit_histogram.clear();
        for v in visits {
            *self.visit_histogram.entry(v).or_default() += 1;
        }
    }
}

/// Transfers divided by |covered| at the first curve point whose coverage
/// reaches `fraction * N`. `None` when the curve never gets there.
pub fn exploration_overhead(stats: &TrialStats, fraction: f64) -> Option<f64> {
    let target = (fraction * stats.n_nodes as f64 - 1e-9).ceil().max(1.0) as u32;
    stats
        .coverage_curve
        .iter()
        .find(|&&(_, c)| c >= target)
        .map(|&(t, c)| t as f64 / f64::from(c))
}

/// Population variance of per-node visit counts.
pub fn visit_variance(histogram: &BTreeMap<u32, u32>) -> f64 {
    let n: f64 = histogram.values().map(|&c| f64::from(c)).sum();
    if n == 0.0 {
        return 0.0;
    }
    let mean = histogram.iter().map(|(&v, &c)| f64::from(v) * f64::from(c)).sum::<f64>() / n;
    histogram.iter().map(|(&v, &c)| f64::from(c) * (f64::from(v) - mean).powi(2)).sum::<f64>() / n
}

/// Order statistics of one metric over a batch of trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl BatchSummary {
    /// `None` for an empty sample. Quantiles interpolate linearly between
    /// order statistics.
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            count: v.len(),
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(samples: &[f64]) -> f64 {
    BatchSummary::from_samples(samples).map_or(f64::NAN, |s| s.median)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_with_curve(n: usize, curve: Vec<(u64, u32)>) -> TrialStats {
        let mut s = TrialStats::new(0, ProtocolName::Srrw, n, MobilityModel::Static, 0.0);
        s.coverage_curve = curve;
        s
    }

    #[test]
    fn every_transfer_new_gives_unit_overhead() {
        // The first holder is covered at zero transfers, so transfer k covers k+1.
        let curve = (0..10u64).map(|t| (t + 1, t as u32 + 1)).collect();
        let s = stats_with_curve(10, curve);
        for f in [0.1, 0.5, 0.85, 1.0] {
            assert_eq!(exploration_overhead(&s, f), Some(1.0));
        }
    }

    #[test]
    fn overhead_uses_first_crossing() {
        let s = stats_with_curve(4, vec![(0, 1), (1, 2), (3, 2), (5, 3), (9, 4)]);
        assert_eq!(exploration_overhead(&s, 0.5), Some(0.5));
        assert_eq!(exploration_overhead(&s, 0.75), Some(5.0 / 3.0));
        assert_eq!(exploration_overhead(&s, 1.0), Some(9.0 / 4.0));
        let partial = stats_with_curve(4, vec![(0, 1), (2, 3)]);
        assert_eq!(exploration_overhead(&partial, 1.0), None);
    }

    #[test]
    fn full_coverage_overhead_times_n_is_transfers() {
        let s = stats_with_curve(7, vec![(0, 3), (4, 5), (6, 7)]);
        assert_eq!(exploration_overhead(&s, 1.0).unwrap() * 7.0, 6.0);
    }

    #[test]
    fn variance_examples() {
        let all_once = BTreeMap::from([(1, 10)]);
        assert_eq!(visit_variance(&all_once), 0.0);
        let split = BTreeMap::from([(1, 5), (3, 5)]);
        assert!((visit_variance(&split) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn summary_quartiles_are_ordered_and_order_free() {
        let a = [5.0, 1.0, 4.0, 2.0, 3.0];
        let b = [3.0, 2.0, 5.0, 4.0, 1.0];
        let s = BatchSummary::from_samples(&a).unwrap();
        assert_eq!(s, BatchSummary::from_samples(&b).unwrap());
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert!(BatchSummary::from_samples(&[]).is_none());
    }

    #[test]
    fn counters_total_is_sum_of_kinds() {
        let mut c = MessageCounters::default();
        c.add(MessageKind::Push, 3);
        c.add(MessageKind::TreeAck, 4);
        assert_eq!(c.total(), c.iter().map(|(_, v)| v).sum::<u64>());
        assert_eq!(c.total(), 7);
    }
}
