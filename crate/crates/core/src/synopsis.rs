//! Order- and duplicate-insensitive aggregates.
//!
//! Every synopsis forms a join-semilattice under [`OdiSynopsis::merge`]:
//! merging is idempotent, commutative and associative, so a contribution
//! that reaches the token along several paths is counted once.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};

/// Default register count of the counting sketch.
pub const DEFAULT_REGISTERS: u16 = 64;
/// Flajolet-Martin bias correction.
const PHI: f64 = 0.773_51;

const TAG_MAX: u8 = 1;
const TAG_MIN: u8 = 2;
const TAG_COUNT: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateKind {
    Max,
    Min,
    Count,
}

impl AggregateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Max => "max",
            Self::Min => "min",
            Self::Count => "count",
        }
    }
}

impl FromStr for AggregateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "min" => Ok(Self::Min),
            "count" => Ok(Self::Count),
            _ => Err(Error::Config(format!("unknown aggregate '{s}'"))),
        }
    }
}

/// What a node adds to a synopsis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Contribution {
    /// A scalar reading, for MAX and MIN.
    Value(i64),
    /// An item identity, for COUNT.
    Item(u64),
}

/// Probabilistic counting with stochastic averaging: each item sets one bit
/// in one of `m` bitmaps, at the position of the lowest set bit of its hash.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FmSketch {
    seed: u64,
    bitmaps: Vec<u64>,
}

impl FmSketch {
    pub fn new(m: u16, seed: u64) -> Self {
        Self { seed, bitmaps: vec![0; m as usize] }
    }

    pub fn registers(&self) -> u16 {
        self.bitmaps.len() as u16
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bitmaps(&self) -> &[u64] {
        &self.bitmaps
    }

    pub fn is_empty(&self) -> bool {
        self.bitmaps.iter().all(|&b| b == 0)
    }

    pub fn insert(&mut self, item: u64) {
        let m = self.bitmaps.len() as u64;
        let h = xxh3_64_with_seed(&item.to_le_bytes(), self.seed);
        let register = (h % m) as usize;
        let rest = h / m;
        // `rest` keeps at least 58 bits, so the rank never overflows the bitmap.
        let rank = rest.trailing_zeros().min(63);
        self.bitmaps[register] |= 1 << rank;
    }

    fn check_compatible(&self, other: &FmSketch) -> Result<()> {
        if self.seed != other.seed || self.bitmaps.len() != other.bitmaps.len() {
            return Err(Error::Incompatible(format!(
                "sketch (m={}, seed={}) vs (m={}, seed={})",
                self.bitmaps.len(),
                self.seed,
                other.bitmaps.len(),
                other.seed
            )));
        }
        Ok(())
    }

    pub fn merge(&self, other: &FmSketch) -> Result<FmSketch> {
        self.check_compatible(other)?;
        let bitmaps = self.bitmaps.iter().zip(&other.bitmaps).map(|(a, b)| a | b).collect();
        Ok(FmSketch { seed: self.seed, bitmaps })
    }

    pub fn merge_in_place(&mut self, other: &FmSketch) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.bitmaps.iter_mut().zip(&other.bitmaps) {
            *a |= b;
        }
        Ok(())
    }

    /// `m / phi * 2^(mean index of the lowest zero bit)`; zero when empty.
    pub fn estimate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let m = self.bitmaps.len() as f64;
        let total: u32 = self.bitmaps.iter().map(|b| b.trailing_ones()).sum();
        m / PHI * 2f64.powf(f64::from(total) / m)
    }
}

impl fmt::Debug for FmSketch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FmSketch")
            .field("m", &self.bitmaps.len())
            .field("seed", &self.seed)
            .field("estimate", &self.estimate())
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OdiSynopsis {
    Max(Option<i64>),
    Min(Option<i64>),
    Count(FmSketch),
}

impl OdiSynopsis {
    /// The bottom element of the given kind.
    pub fn empty(kind: AggregateKind, registers: u16, seed: u64) -> Self {
        match kind {
            AggregateKind::Max => Self::Max(None),
            AggregateKind::Min => Self::Min(None),
            AggregateKind::Count => Self::Count(FmSketch::new(registers, seed)),
        }
    }

    pub fn kind(&self) -> AggregateKind {
        match self {
            Self::Max(_) => AggregateKind::Max,
            Self::Min(_) => AggregateKind::Min,
            Self::Count(_) => AggregateKind::Count,
        }
    }

    pub fn insert(&mut self, c: Contribution) -> Result<()> {
        match (self, c) {
            (Self::Max(v), Contribution::Value(x)) => *v = Some(v.map_or(x, |cur| cur.max(x))),
            (Self::Min(v), Contribution::Value(x)) => *v = Some(v.map_or(x, |cur| cur.min(x))),
            (Self::Count(s), Contribution::Item(id)) => s.insert(id),
            (s, _) => return Err(Error::KindMismatch(s.kind().as_str())),
        }
        Ok(())
    }

    /// Semilattice join.
    pub fn merge(&self, other: &OdiSynopsis) -> Result<OdiSynopsis> {
        let mut out = self.clone();
        out.merge_in_place(other)?;
        Ok(out)
    }

    pub fn merge_in_place(&mut self, other: &OdiSynopsis) -> Result<()> {
        match (self, other) {
            (Self::Max(a), Self::Max(b)) => *a = (*a).max(*b),
            (Self::Min(a), Self::Min(b)) => {
                *a = match (*a, *b) {
                    (Some(x), Some(y)) => Some(x.min(y)),
                    (x, None) => x,
                    (None, y) => y,
                }
            }
            (Self::Count(a), Self::Count(b)) => a.merge_in_place(b)?,
            (a, b) => {
                return Err(Error::Incompatible(format!("{} vs {}", a.kind().as_str(), b.kind().as_str())));
            }
        }
        Ok(())
    }

    /// MAX/MIN value, or the sketch's estimate for COUNT.
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Max(v) | Self::Min(v) => v.map(|x| x as f64),
            Self::Count(s) => Some(s.estimate()),
        }
    }

    /// Kind byte, then for MAX/MIN a presence byte and a big-endian i64;
    /// for COUNT the register count (u16), the hash seed (u64) and the
    /// bitmaps, all big-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Self::Max(v) | Self::Min(v) => {
                out.push(if matches!(self, Self::Max(_)) { TAG_MAX } else { TAG_MIN });
                out.push(u8::from(v.is_some()));
                out.extend_from_slice(&v.unwrap_or(0).to_be_bytes());
            }
            Self::Count(s) => {
                out.push(TAG_COUNT);
                out.extend_from_slice(&s.registers().to_be_bytes());
                out.extend_from_slice(&s.seed.to_be_bytes());
                for b in &s.bitmaps {
                    out.extend_from_slice(&b.to_be_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (&tag, rest) = bytes.split_first().ok_or_else(|| Error::Decode("empty input".into()))?;
        match tag {
            TAG_MAX | TAG_MIN => {
                if rest.len() != 9 {
                    return Err(Error::Decode(format!("scalar payload of {} bytes", rest.len())));
                }
                let value = match rest[0] {
                    0 => None,
                    1 => Some(i64::from_be_bytes(rest[1..9].try_into().unwrap())),
                    b => return Err(Error::Decode(format!("presence byte {b}"))),
                };
                Ok(if tag == TAG_MAX { Self::Max(value) } else { Self::Min(value) })
            }
            TAG_COUNT => {
                if rest.len() < 10 {
                    return Err(Error::Decode("truncated sketch header".into()));
                }
                let m = u16::from_be_bytes([rest[0], rest[1]]) as usize;
                let seed = u64::from_be_bytes(rest[2..10].try_into().unwrap());
                let body = &rest[10..];
                if body.len() != m * 8 {
                    return Err(Error::Decode(format!("{} register bytes for m={m}", body.len())));
                }
                let bitmaps = body.chunks_exact(8).map(|c| u64::from_be_bytes(c.try_into().unwrap())).collect();
                Ok(Self::Count(FmSketch { seed, bitmaps }))
            }
            t => Err(Error::Decode(format!("unknown kind byte {t}"))),
        }
    }
}

/// The contribution a node makes in experiments: its own id.
pub fn node_contribution(kind: AggregateKind, id: u32) -> Contribution {
    match kind {
        AggregateKind::Max | AggregateKind::Min => Contribution::Value(i64::from(id)),
        AggregateKind::Count => Contribution::Item(u64::from(id)),
    }
}

/// Synopsis holding a single node's contribution.
pub fn singleton(kind: AggregateKind, registers: u16, seed: u64, id: u32) -> OdiSynopsis {
    let mut s = OdiSynopsis::empty(kind, registers, seed);
    s.insert(node_contribution(kind, id)).expect("contribution matches kind");
    s
}
