use thiserror::Error;

use crate::world::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("level {level} out of range (highest level is {max})")]
    LevelOutOfRange { level: u32, max: u32 },
    #[error("contribution does not match synopsis kind {0}")]
    KindMismatch(&'static str),
    #[error("incompatible synopses: {0}")]
    Incompatible(String),
    #[error("malformed synopsis encoding: {0}")]
    Decode(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("value out of range: {0}")]
    Range(String),
}
