//! Deterministic discrete-event simulation of structure-free data aggregation
//! in mobile ad-hoc networks.
//!
//! The crate models a geo-dense random geometric graph of mobile nodes, an
//! idealized broadcast medium, and a family of aggregation protocols that run
//! on top of it:
//!
//! * [`ezag`]: request flood, one-step push phase, a self-repelling token walk
//!   with visit-count prioritized request timers, and a result flood.
//! * [`baselines`]: the plain random walk, the self-repelling walk without
//!   push, and a periodically refreshed spanning-tree protocol.
//! * [`hierarchy`]: one cell-confined instance per grid cell at every level,
//!   producing multi-resolution aggregates.
//!
//! Everything is seeded; identical configurations replay bit-identically.

pub mod baselines;
pub mod error;
pub mod ezag;
pub mod hierarchy;
pub mod idset;
pub mod metrics;
pub mod mobility;
pub mod netsim;
pub mod oracles;
pub mod synopsis;
pub mod world;

pub use error::{Error, Result};
pub use world::{NodeId, Point, World, WorldConfig};
