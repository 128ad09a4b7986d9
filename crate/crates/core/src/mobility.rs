//! Node mobility: static, random direction with reflection, random waypoint
//! with pause, and Gauss-Markov.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{NodeId, Point, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityModel {
    Static,
    RandomDirection,
    RandomWaypoint,
    GaussMarkov,
}

impl MobilityModel {
    pub const ALL: [MobilityModel; 4] =
        [Self::Static, Self::RandomDirection, Self::RandomWaypoint, Self::GaussMarkov];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Static => "static",
            Self::RandomDirection => "random_direction",
            Self::RandomWaypoint => "random_waypoint",
            Self::GaussMarkov => "gauss_markov",
        }
    }
}

impl fmt::Display for MobilityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MobilityModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mobility model '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobilityConfig {
    pub model: MobilityModel,
    /// m/s
    pub v_low: f64,
    /// m/s
    pub v_high: f64,
    /// Seconds between direction re-draws (random direction).
    pub direction_interval: f64,
    /// Seconds spent at each waypoint.
    pub pause_time: f64,
    pub gm_alpha: f64,
    /// Seconds between Gauss-Markov updates.
    pub gm_update: f64,
    /// Asymptotic Gauss-Markov speed, m/s.
    pub mean_speed: f64,
    /// Stationary std of the Gauss-Markov speed as a fraction of the mean.
    pub gm_speed_std_frac: f64,
    /// Std of the Gauss-Markov direction innovation, radians.
    pub gm_direction_std: f64,
    /// Seconds between position updates.
    pub tick: f64,
}

impl MobilityConfig {
    pub fn stationary() -> Self {
        Self::nominal(MobilityModel::Static, 0.0)
    }

    /// Parameters for a sweep point: speeds drawn in a +/-30% band around
    /// `speed`.
    pub fn nominal(model: MobilityModel, speed: f64) -> Self {
        Self {
            model,
            v_low: 0.7 * speed,
            v_high: 1.3 * speed,
            direction_interval: 10.0,
            pause_time: 2.0,
            gm_alpha: 0.75,
            gm_update: 1.0,
            mean_speed: speed,
            gm_speed_std_frac: 0.2,
            gm_direction_std: std::f64::consts::FRAC_PI_4,
            tick: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.v_low && self.v_low <= self.v_high) {
            return Err(Error::Config(format!("need 0 <= v_low <= v_high, got {} and {}", self.v_low, self.v_high)));
        }
        if self.pause_time < 0.0 {
            return Err(Error::Config("pause_time must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.gm_alpha) {
            return Err(Error::Config(format!("gm_alpha must be in [0, 1], got {}", self.gm_alpha)));
        }
        if !(self.tick > 0.0 && self.direction_interval > 0.0 && self.gm_update > 0.0) {
            return Err(Error::Config("tick and update intervals must be positive".into()));
        }
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        match self.model {
            MobilityModel::Static => true,
            MobilityModel::GaussMarkov => self.mean_speed == 0.0,
            MobilityModel::RandomDirection | MobilityModel::RandomWaypoint => self.v_high == 0.0,
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Motion {
    speed: f64,
    heading: f64,
    /// Seconds until the next re-draw (direction) or GM update.
    until_update: f64,
    waypoint: Point,
    pause_left: f64,
    gm_mean_heading: f64,
}

/// Per-node model state.
#[derive(Clone, Debug)]
pub struct MobilityState {
    config: MobilityConfig,
    motion: Vec<Motion>,
    elapsed: f64,
}

impl MobilityState {
    /// Draws initial velocities. Re-draw clocks are staggered per node so
    /// nodes do not turn in lockstep.
    pub fn init(config: MobilityConfig, world: &mut World, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let side = world.area_side();
        let mut motion = Vec::with_capacity(world.len());
        for node in world.nodes_mut() {
            let mut m = Motion::default();
            match config.model {
                MobilityModel::Static => {}
                MobilityModel::RandomDirection => {
                    m.heading = rng.random::<f64>() * TAU;
                    m.speed = uniform(rng, config.v_low, config.v_high);
                    m.until_update = rng.random::<f64>() * config.direction_interval;
                }
                MobilityModel::RandomWaypoint => {
                    m.waypoint = Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
                    m.speed = uniform(rng, config.v_low, config.v_high);
                    m.heading = heading_to(node.position, m.waypoint);
                }
                MobilityModel::GaussMarkov => {
                    m.gm_mean_heading = rng.random::<f64>() * TAU;
                    m.heading = m.gm_mean_heading;
                    m.speed = config.mean_speed;
                    m.until_update = rng.random::<f64>() * config.gm_update;
                }
            }
            node.velocity = velocity(m.heading, m.speed);
            motion.push(m);
        }
        Ok(Self { config, motion, elapsed: 0.0 })
    }

    pub fn config(&self) -> &MobilityConfig {
        &self.config
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    /// Advances every node by `dt` seconds and refreshes the world's
    /// neighbor index.
    pub fn step(&mut self, world: &mut World, dt: f64, rng: &mut impl Rng) {
        debug_assert!(dt > 0.0);
        self.elapsed += dt;
        if self.config.model == MobilityModel::Static {
            return;
        }
        let side = world.area_side();
        let cfg = &self.config;
        for (node, m) in world.nodes_mut().iter_mut().zip(&mut self.motion) {
            match cfg.model {
                MobilityModel::Static => {}
                MobilityModel::RandomDirection => {
                    m.until_update -= dt;
                    if m.until_update <= 0.0 {
                        m.heading = rng.random::<f64>() * TAU;
                        m.speed = uniform(rng, cfg.v_low, cfg.v_high);
                        node.velocity = velocity(m.heading, m.speed);
                        m.until_update += cfg.direction_interval;
                    }
                    advance_reflecting(&mut node.position, &mut node.velocity, dt, side);
                }
                MobilityModel::RandomWaypoint => {
                    waypoint_step(&mut node.position, &mut node.velocity, m, cfg, dt, side, rng);
                }
                MobilityModel::GaussMarkov => {
                    m.until_update -= dt;
                    if m.until_update <= 0.0 {
                        gauss_markov_update(m, cfg, rng);
                        node.velocity = velocity(m.heading, m.speed);
                        m.until_update += cfg.gm_update;
                    }
                    let before = node.velocity;
                    advance_reflecting(&mut node.position, &mut node.velocity, dt, side);
                    if before != node.velocity {
                        // Keep the process memory consistent with the bounce.
                        m.heading = node.velocity.y.atan2(node.velocity.x);
                        m.gm_mean_heading = m.heading;
                    }
                }
            }
        }
        world.refresh_index();
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn velocity(heading: f64, speed: f64) -> Point {
    Point::new(heading.cos() * speed, heading.sin() * speed)
}

fn heading_to(from: Point, to: Point) -> f64 {
    (to.y - from.y).atan2(to.x - from.x)
}

/// Moves by `v * dt`, mirroring position and velocity at the walls.
pub fn advance_reflecting(pos: &mut Point, vel: &mut Point, dt: f64, side: f64) {
    let (x, vx) = reflect_axis(pos.x + vel.x * dt, vel.x, side);
    let (y, vy) = reflect_axis(pos.y + vel.y * dt, vel.y, side);
    *pos = Point::new(x, y);
    *vel = Point::new(vx, vy);
}

fn reflect_axis(mut x: f64, mut v: f64, side: f64) -> (f64, f64) {
    // A step longer than the side would need several bounces.
    for _ in 0..8 {
        if x < 0.0 {
            x = -x;
            v = -v;
        } else if x > side {
            x = 2.0 * side - x;
            v = -v;
        } else {
            break;
        }
    }
    (x.clamp(0.0, side), v)
}

#[allow(clippy::too_many_arguments)]
fn waypoint_step(
    pos: &mut Point,
    vel: &mut Point,
    m: &mut Motion,
    cfg: &MobilityConfig,
    dt: f64,
    side: f64,
    rng: &mut impl Rng,
) {
    let mut left = dt;
    while left > 0.0 {
        if m.pause_left > 0.0 {
            let p = m.pause_left.min(left);
            m.pause_left -= p;
            left -= p;
            if m.pause_left <= 0.0 {
                m.waypoint = Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
                m.speed = uniform(rng, cfg.v_low, cfg.v_high);
                m.heading = heading_to(*pos, m.waypoint);
                *vel = velocity(m.heading, m.speed);
            }
            continue;
        }
        if m.speed <= 0.0 {
            break;
        }
        let dist = (m.waypoint - *pos).norm();
        let reach = dist / m.speed;
        if reach <= left {
            *pos = m.waypoint;
            left -= reach;
            m.pause_left = cfg.pause_time.max(f64::MIN_POSITIVE);
            *vel = Point::default();
        } else {
            *pos = *pos + *vel * left;
            pos.x = pos.x.clamp(0.0, side);
            pos.y = pos.y.clamp(0.0, side);
            left = 0.0;
        }
    }
}

/// One step of the Gauss-Markov recurrence for speed and heading.
fn gauss_markov_update(m: &mut Motion, cfg: &MobilityConfig, rng: &mut impl Rng) {
    let a = cfg.gm_alpha;
    let noise = (1.0 - a * a).sqrt();
    let sigma_s = cfg.gm_speed_std_frac * cfg.mean_speed;
    let ds = if sigma_s > 0.0 { Normal::new(0.0, sigma_s).unwrap().sample(rng) } else { 0.0 };
    let dd = if cfg.gm_direction_std > 0.0 {
        Normal::new(0.0, cfg.gm_direction_std).unwrap().sample(rng)
    } else {
        0.0
    };
    m.speed = (a * m.speed + (1.0 - a) * cfg.mean_speed + noise * ds).max(0.0);
    m.heading = a * m.heading + (1.0 - a) * m.gm_mean_heading + noise * dd;
}

/// Average link changes per node per second over a trace of neighbor-set
/// snapshots taken every `dt` seconds.
///
/// Each snapshot lists, per node, its sorted neighbor ids. For every pair of
/// consecutive snapshots the per-node symmetric difference is summed; the
/// total is divided by node count, elapsed time and 2.
pub fn link_change_rate(snapshots: &[Vec<Vec<NodeId>>], dt: f64) -> Result<f64> {
    if snapshots.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 snapshots, got {}", snapshots.len())));
    }
    let n = snapshots[0].len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut meter = LinkChangeMeter::new(snapshots[0].clone());
    for snap in &snapshots[1..] {
        meter.observe(snap.clone());
    }
    Ok(meter.rate(dt))
}

/// Streaming form of [`link_change_rate`].
#[derive(Clone, Debug)]
pub struct LinkChangeMeter {
    previous: Vec<Vec<NodeId>>,
    changes: u64,
    intervals: u64,
}

impl LinkChangeMeter {
    pub fn new(first: Vec<Vec<NodeId>>) -> Self {
        Self { previous: first, changes: 0, intervals: 0 }
    }

    pub fn snapshot(world: &World) -> Vec<Vec<NodeId>> {
        (0..world.len())
            .map(|i| world.neighbors(NodeId::from_index(i)).expect("node exists"))
            .collect()
    }

    pub fn observe(&mut self, next: Vec<Vec<NodeId>>) {
        for (a, b) in self.previous.iter().zip(&next) {
            self.changes += symmetric_difference_len(a, b) as u64;
        }
        self.intervals += 1;
        self.previous = next;
    }

    pub fn rate(&self, dt: f64) -> f64 {
        let n = self.previous.len();
        if n == 0 || self.intervals == 0 {
            return 0.0;
        }
        self.changes as f64 / (n as f64 * self.intervals as f64 * dt) / 2.0
    }
}

fn symmetric_difference_len(a: &[NodeId], b: &[NodeId]) -> usize {
    let (mut i, mut j, mut d) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                d += 1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                d += 1;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    d + (a.len() - i) + (b.len() - j)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::world::WorldConfig;

    #[test]
    fn reflection_mirrors_position_and_velocity() {
        let mut p = Point::new(0.5, 5.0);
        let mut v = Point::new(-1.0, 0.0);
        advance_reflecting(&mut p, &mut v, 1.0, 10.0);
        assert!((p.x - 0.5).abs() < 1e-12 && (p.y - 5.0).abs() < 1e-12, "{p:?}");
        assert_eq!(v, Point::new(1.0, 0.0));
    }

    #[test]
    fn static_model_keeps_positions() {
        let mut w = World::build(WorldConfig::geo_dense(50, 0.002, 2.0, 5)).unwrap();
        let before: Vec<Point> = w.nodes().iter().map(|n| n.position).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = MobilityState::init(MobilityConfig::stationary(), &mut w, &mut rng).unwrap();
        for _ in 0..10 {
            s.step(&mut w, 0.37, &mut rng);
        }
        let after: Vec<Point> = w.nodes().iter().map(|n| n.position).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn invalid_speeds_rejected() {
        let mut c = MobilityConfig::nominal(MobilityModel::RandomDirection, 3.0);
        c.v_low = 5.0;
        assert!(c.validate().is_err());
        let mut c = MobilityConfig::nominal(MobilityModel::GaussMarkov, 3.0);
        c.gm_alpha = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn model_names_round_trip() {
        for m in MobilityModel::ALL {
            assert_eq!(m.as_str().parse::<MobilityModel>().unwrap(), m);
        }
        assert!("levy".parse::<MobilityModel>().is_err());
    }

    #[test]
    fn gauss_markov_alpha_one_keeps_velocity() {
        let cfg = MobilityConfig { gm_alpha: 1.0, ..MobilityConfig::nominal(MobilityModel::GaussMarkov, 5.0) };
        let mut m = Motion { speed: 4.0, heading: 1.0, gm_mean_heading: 0.3, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            gauss_markov_update(&mut m, &cfg, &mut rng);
        }
        assert_eq!((m.speed, m.heading), (4.0, 1.0));
    }

    #[test]
    fn gauss_markov_alpha_zero_is_memoryless() {
        let cfg = MobilityConfig { gm_alpha: 0.0, ..MobilityConfig::nominal(MobilityModel::GaussMarkov, 5.0) };
        let mut m = Motion { speed: 5.0, heading: 0.0, gm_mean_heading: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut vx = Vec::with_capacity(10_000);
        for _ in 0..10_000 {
            gauss_markov_update(&mut m, &cfg, &mut rng);
            vx.push(m.speed * m.heading.cos());
        }
        let r = lag1_correlation(&vx);
        assert!(r.abs() < 0.1, "lag-1 correlation {r}");

        // With memory the same statistic is clearly positive.
        let cfg = MobilityConfig { gm_alpha: 0.75, ..cfg };
        let mut vx = Vec::with_capacity(10_000);
        for _ in 0..10_000 {
            gauss_markov_update(&mut m, &cfg, &mut rng);
            vx.push(m.speed * m.heading.cos());
        }
        assert!(lag1_correlation(&vx) > 0.3);
    }

    fn lag1_correlation(x: &[f64]) -> f64 {
        let n = x.len() - 1;
        let (a, b) = (&x[..n], &x[1..]);
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let cov: f64 = a.iter().zip(b).map(|(p, q)| (p - ma) * (q - mb)).sum();
        let va: f64 = a.iter().map(|p| (p - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|q| (q - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn positions_stay_in_bounds() {
        for model in MobilityModel::ALL {
            let mut w = World::build(WorldConfig::geo_dense(60, 0.002, 2.0, 8)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let mut s = MobilityState::init(MobilityConfig::nominal(model, 21.0), &mut w, &mut rng).unwrap();
            let side = w.area_side();
            for _ in 0..2000 {
                s.step(&mut w, 0.1, &mut rng);
                for n in w.nodes() {
                    assert!((0.0..=side).contains(&n.position.x) && (0.0..=side).contains(&n.position.y), "{model}");
                }
            }
        }
    }

    #[test]
    fn waypoint_pauses_at_destination() {
        let mut w = World::build(WorldConfig::geo_dense(1, 0.002, 2.0, 8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = MobilityState::init(MobilityConfig::nominal(MobilityModel::RandomWaypoint, 10.0), &mut w, &mut rng)
            .unwrap();
        let mut stopped_ticks = 0;
        let mut prev = w.position(NodeId(0));
        for _ in 0..3000 {
            s.step(&mut w, 0.1, &mut rng);
            let p = w.position(NodeId(0));
            if p == prev {
                stopped_ticks += 1;
            }
            prev = p;
        }
        assert!(stopped_ticks >= 19, "never paused");
    }

    #[test]
    fn link_change_rate_of_static_trace_is_zero() {
        let w = World::build(WorldConfig::geo_dense(40, 0.002, 2.0, 8)).unwrap();
        let snap = LinkChangeMeter::snapshot(&w);
        assert_eq!(link_change_rate(&[snap.clone(), snap.clone(), snap], 0.1).unwrap(), 0.0);
    }

    #[test]
    fn link_change_rate_needs_two_snapshots() {
        assert!(matches!(link_change_rate(&[vec![]], 0.1), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn link_change_counts_each_endpoint() {
        // One link appears between two of three nodes over one second.
        let a = vec![vec![], vec![], vec![]];
        let b = vec![vec![NodeId(1)], vec![NodeId(0)], vec![]];
        let r = link_change_rate(&[a, b], 1.0).unwrap();
        assert!((r - 2.0 / 3.0 / 2.0).abs() < 1e-12);
    }
}
