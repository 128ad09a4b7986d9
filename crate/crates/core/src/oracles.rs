//! Exact reference computations used to check the simulator. None of these
//! share code with the walk or the network engine.

use std::collections::HashSet;
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest graph accepted by [`markov_cover_expectation`].
pub const MAX_ORACLE_NODES: usize = 8;

/// Expected draws to see each of `b` equiprobable coupons at least once:
/// `b * H_b`.
pub fn coupon_expected_draws(b: u64) -> Result<f64> {
    if b == 0 {
        return Err(Error::Range("need at least one category".into()));
    }
    let harmonic: f64 = (1..=b).map(|k| 1.0 / k as f64).sum();
    Ok(b as f64 * harmonic)
}

/// Exact expected cover time of the simple random walk started at `start`,
/// by dynamic programming over `(position, visited set)`.
///
/// For a fixed visited set the unknowns couple through moves inside the
/// set, so each set is one small linear system; sets are solved from the
/// full set downwards.
pub fn markov_cover_expectation(adjacency: &[Vec<usize>], start: usize) -> Result<f64> {
    let n = adjacency.len();
    if n == 0 || n > MAX_ORACLE_NODES {
        return Err(Error::Range(format!("oracle graphs have 1..={MAX_ORACLE_NODES} nodes, got {n}")));
    }
    if start >= n {
        return Err(Error::Range(format!("start {start} outside graph")));
    }
    for (v, adj) in adjacency.iter().enumerate() {
        for &u in adj {
            if u >= n || u == v || !adjacency[u].contains(&v) {
                return Err(Error::Range(format!("adjacency must be simple and symmetric (edge {v}-{u})")));
            }
        }
    }
    if !connected(adjacency) {
        return Err(Error::Disconnected);
    }
    let full = (1usize << n) - 1;
    // expected[set][v]: remaining steps from v having visited `set`.
    let mut expected = vec![vec![0.0f64; n]; 1 << n];
    for set in (1..full).rev() {
        let members: Vec<usize> = (0..n).filter(|v| set & (1 << v) != 0).collect();
        let k = members.len();
        let pos = |v: usize| members.iter().position(|&m| m == v);
        let mut a = DMatrix::<f64>::identity(k, k);
        let mut b = DVector::<f64>::from_element(k, 1.0);
        for (row, &v) in members.iter().enumerate() {
            let p = 1.0 / adjacency[v].len() as f64;
            for &u in &adjacency[v] {
                match pos(u) {
                    Some(col) => a[(row, col)] -= p,
                    None => b[row] += p * expected[set | (1 << u)][u],
                }
            }
        }
        let x = a.lu().solve(&b).ok_or_else(|| Error::Range("singular cover-time system".into()))?;
        for (row, &v) in members.iter().enumerate() {
            expected[set][v] = x[row];
        }
    }
    Ok(expected[1 << start][start])
}

fn connected(adjacency: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adjacency.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &u in &adjacency[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Exact number of distinct items.
pub fn exact_distinct<T: Hash + Eq>(stream: impl IntoIterator<Item = T>) -> usize {
    stream.into_iter().collect::<HashSet<_>>().len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupon_values() {
        assert_eq!(coupon_expected_draws(1).unwrap(), 1.0);
        assert!((coupon_expected_draws(3).unwrap() - 5.5).abs() < 1e-12);
        assert!(coupon_expected_draws(0).is_err());
    }

    #[test]
    fn cover_time_small_graphs() {
        assert_eq!(markov_cover_expectation(&[vec![]], 0).unwrap(), 0.0);
        assert!((markov_cover_expectation(&[vec![1], vec![0]], 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cover_time_matches_closed_forms() {
        // Cycle C_n: n(n-1)/2. Complete K_n: (n-1) H_{n-1}.
        let cycle = vec![vec![1, 3], vec![0, 2], vec![1, 3], vec![2, 0]];
        assert!((markov_cover_expectation(&cycle, 0).unwrap() - 6.0).abs() < 1e-9);
        let clique: Vec<Vec<usize>> = (0..4).map(|v| (0..4).filter(|&u| u != v).collect()).collect();
        assert!((markov_cover_expectation(&clique, 2).unwrap() - 5.5).abs() < 1e-9);
        let c5: Vec<Vec<usize>> = (0..5).map(|v| vec![(v + 4) % 5, (v + 1) % 5]).collect();
        assert!((markov_cover_expectation(&c5, 0).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn cover_time_rejects_bad_graphs() {
        assert_eq!(markov_cover_expectation(&[vec![], vec![]], 0), Err(Error::Disconnected));
        assert!(markov_cover_expectation(&[vec![1], vec![]], 0).is_err());
        let big: Vec<Vec<usize>> = (0..9).map(|v| (0..9).filter(|&u| u != v).collect()).collect();
        assert!(markov_cover_expectation(&big, 0).is_err());
    }

    #[test]
    fn distinct_counts() {
        assert_eq!(exact_distinct(Vec::<u64>::new()), 0);
        let stream = (0..3).flat_map(|_| 1..=100u64);
        assert_eq!(exact_distinct(stream), 100);
    }
}
