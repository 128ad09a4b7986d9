//! Experiment specs: flat `key = value` files, lists comma-separated.
//!
//! ```text
//! name = fig2b
//! experiment = aggregation
//! protocols = srrw, ezag
//! n = 100, 200, 400, 800, 1000
//! full_n = 2000, 4000
//! models = random_direction
//! speeds = 9
//! trials = 50
//! base_seed = 1000
//! ```
//!
//! Keys may also sit under an `[experiment]` section. Unknown keys are
//! rejected.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ezag_core::metrics::ProtocolName;
use ezag_core::mobility::MobilityModel;
use ezag_core::synopsis::AggregateKind;
use ezag_core::world::{DEFAULT_DENSITY, DEFAULT_GEO_DENSE_C};
use ini::Ini;
use serde::Serialize;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Token walks and the tree baseline; one trial row per run.
    Aggregation,
    /// Neighbor churn under mobility, no protocol.
    LinkChange,
    /// Per-cell instances at every level.
    Hierarchy,
    /// Closed-form message models only.
    Projection,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Aggregation => "aggregation",
            Self::LinkChange => "link_change",
            Self::Hierarchy => "hierarchy",
            Self::Projection => "projection",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        [Self::Aggregation, Self::LinkChange, Self::Hierarchy, Self::Projection]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| HarnessError::Spec(format!("unknown experiment '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Walk until every node is aggregated (coverage known to the simulator).
    Oracle,
    /// Walk exactly N transfers.
    TerminateAfterN,
}

impl FromStr for Mode {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "terminate_after_n" => Ok(Self::TerminateAfterN),
            _ => Err(HarnessError::Spec(format!("unknown mode '{s}'"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Oracle => "oracle",
            Self::TerminateAfterN => "terminate_after_n",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub experiment: ExperimentKind,
    pub protocols: Vec<ProtocolName>,
    pub n: Vec<usize>,
    /// Sizes added only for full-scale runs.
    pub full_n: Vec<usize>,
    pub models: Vec<MobilityModel>,
    /// Nominal speeds, m/s. Zero means a stationary network.
    pub speeds: Vec<f64>,
    pub trials: u32,
    /// Trial `i` uses seed `base_seed + i`.
    pub base_seed: u64,
    pub mode: Mode,
    pub output: Option<PathBuf>,
    pub density: f64,
    pub geo_dense_c: f64,
    pub aggregate: AggregateKind,
    /// Simulated seconds before a run is abandoned.
    pub horizon: f64,
    /// Hierarchy: expected level-0 cell population.
    pub delta: u32,
    /// Link-change: seconds observed.
    pub measure_seconds: f64,
    /// Projection: gossip exponents.
    pub exponents: Vec<f64>,
}

impl ExperimentSpec {
    pub fn new(name: &str, experiment: ExperimentKind) -> Self {
        Self {
            name: name.to_string(),
            experiment,
            protocols: vec![ProtocolName::Ezag],
            n: Vec::new(),
            full_n: Vec::new(),
            models: vec![MobilityModel::RandomDirection],
            speeds: vec![9.0],
            trials: 50,
            base_seed: 1000,
            mode: Mode::Oracle,
            output: None,
            density: DEFAULT_DENSITY,
            geo_dense_c: DEFAULT_GEO_DENSE_C,
            aggregate: AggregateKind::Max,
            horizon: 3600.0,
            delta: 16,
            measure_seconds: 20.0,
            exponents: vec![5.4],
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| HarnessError::Spec(e.to_string()))?;
        let mut pairs = Vec::new();
        for (section, props) in ini.iter() {
            if let Some(s) = section {
                if s != "experiment" {
                    return Err(HarnessError::Spec(format!("unknown section [{s}]")));
                }
            }
            pairs.extend(props.iter().map(|(k, v)| (k.trim().to_string(), v.trim().to_string())));
        }
        let kind = pairs
            .iter()
            .find(|(k, _)| k == "experiment")
            .map(|(_, v)| v.parse())
            .transpose()?
            .unwrap_or(ExperimentKind::Aggregation);
        let mut spec = Self::new("", kind);
        let mut named = false;
        for (key, value) in &pairs {
            spec.set(key, value)?;
            named |= key == "name";
        }
        if !named {
            return Err(HarnessError::Spec("missing key 'name'".into()));
        }
        Ok(spec)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| HarnessError::Spec(format!("{key}: {what} '{value}'"));
        match key {
            "name" => self.name = value.to_string(),
            "experiment" => {}
            "protocols" => self.protocols = list(value).map_err(|_| bad("bad protocol list"))?,
            "n" => self.n = list(value).map_err(|_| bad("bad size list"))?,
            "full_n" => self.full_n = list(value).map_err(|_| bad("bad size list"))?,
            "models" => self.models = list(value).map_err(|_| bad("bad model list"))?,
            "speeds" => self.speeds = list(value).map_err(|_| bad("bad speed list"))?,
            "trials" => self.trials = value.parse().map_err(|_| bad("not a count"))?,
            "base_seed" => self.base_seed = value.parse().map_err(|_| bad("not a seed"))?,
            "mode" => self.mode = value.parse()?,
            "output" => self.output = Some(PathBuf::from(value)),
            "density" => self.density = value.parse().map_err(|_| bad("not a number"))?,
            "geo_dense_c" => self.geo_dense_c = value.parse().map_err(|_| bad("not a number"))?,
            "aggregate" => self.aggregate = value.parse().map_err(|_| bad("unknown aggregate"))?,
            "horizon" => self.horizon = value.parse().map_err(|_| bad("not a number"))?,
            "delta" => self.delta = value.parse().map_err(|_| bad("not a count"))?,
            "measure_seconds" => self.measure_seconds = value.parse().map_err(|_| bad("not a number"))?,
            "exponents" => self.exponents = list(value).map_err(|_| bad("bad exponent list"))?,
            _ => return Err(HarnessError::Spec(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Checks every invariant; the message names the first violated one.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(HarnessError::Invalid(m));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return fail(format!("name must be non-empty [A-Za-z0-9_-], got '{}'", self.name));
        }
        if self.trials < 1 {
            return fail("trials must be >= 1".into());
        }
        if self.n.is_empty() {
            return fail("n list must be non-empty".into());
        }
        if self.n.iter().chain(&self.full_n).any(|&n| n < 1) {
            return fail("every n must be >= 1".into());
        }
        if !(self.density > 0.0 && self.density.is_finite() && self.geo_dense_c > 0.0 && self.geo_dense_c.is_finite()) {
            return fail("density and geo_dense_c must be positive".into());
        }
        match self.experiment {
            ExperimentKind::Aggregation | ExperimentKind::LinkChange | ExperimentKind::Hierarchy => {
                if self.models.is_empty() || self.speeds.is_empty() {
                    return fail("models and speeds must be non-empty".into());
                }
                if self.speeds.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                    return fail("speeds must be finite and >= 0".into());
                }
                if !(self.horizon > 0.0) {
                    return fail("horizon must be > 0".into());
                }
            }
            ExperimentKind::Projection => {}
        }
        match self.experiment {
            ExperimentKind::Aggregation if self.protocols.is_empty() => fail("protocols must be non-empty".into()),
            ExperimentKind::LinkChange if !(self.measure_seconds > 0.0) => fail("measure_seconds must be > 0".into()),
            ExperimentKind::Hierarchy => {
                if self.delta < 1 {
                    return fail("delta must be >= 1".into());
                }
                match self.n.iter().chain(&self.full_n).find(|&&n| n < self.delta as usize) {
                    Some(n) => fail(format!("n = {n} is below delta = {}", self.delta)),
                    None => Ok(()),
                }
            }
            ExperimentKind::Projection => {
                if self.exponents.is_empty() {
                    return fail("exponents must be non-empty".into());
                }
                match self.n.iter().chain(&self.full_n).find(|&&n| n < 2) {
                    Some(_) => fail("projection needs n >= 2".into()),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Network sizes for this run.
    pub fn sizes(&self, full: bool) -> Vec<usize> {
        let mut n = self.n.clone();
        if full {
            n.extend(self.full_n.iter().filter(|x| !self.n.contains(x)));
        }
        n
    }

    /// Seed of trial `i`.
    pub fn seed(&self, trial: u32) -> u64 {
        self.base_seed.wrapping_add(u64::from(trial))
    }

    /// Renders the spec back to the file format.
    pub fn to_text(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
        }
        let mut out = vec![
            format!("name = {}", self.name),
            format!("experiment = {}", self.experiment.as_str()),
            format!("protocols = {}", self.protocols.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(", ")),
            format!("n = {}", join(&self.n)),
        ];
        if !self.full_n.is_empty() {
            out.push(format!("full_n = {}", join(&self.full_n)));
        }
        out.extend([
            format!("models = {}", join(&self.models)),
            format!("speeds = {}", join(&self.speeds)),
            format!("trials = {}", self.trials),
            format!("base_seed = {}", self.base_seed),
            format!("mode = {}", self.mode),
            format!("density = {}", self.density),
            format!("geo_dense_c = {}", self.geo_dense_c),
            format!("aggregate = {}", self.aggregate.as_str()),
            format!("horizon = {}", self.horizon),
            format!("delta = {}", self.delta),
            format!("measure_seconds = {}", self.measure_seconds),
            format!("exponents = {}", join(&self.exponents)),
        ]);
        if let Some(p) = &self.output {
            out.push(format!("output = {}", p.display()));
        }
        out.join("\n") + "\n"
    }
}

fn list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, T::Err> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}
