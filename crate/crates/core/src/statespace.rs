//! The constrained state space.
//!
//! A state is the flattened vector
//! `[n_1..n_N, m1 per road, m2 per road]` of length `N(2N-1)`, with roads in
//! [`NetworkParams::road_index`] order. Feasible states satisfy
//! `0 <= n_i <= K`, `0 <= m <= NC`, and the component sum equals `NC`.
//!
//! States are ordered lexicographically over the flattened vector. Ranking
//! uses a suffix-count table (number of ways to complete positions `p..` with
//! a given sum), so rank and unrank need no hash map.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NetworkParams;

pub const DEFAULT_STATE_CAP: usize = 5_000_000;

/// One point of the state space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkState {
    /// Bikes parked at each station.
    pub n: Vec<u32>,
    /// First-trip bikes on each road.
    pub m1: Vec<u32>,
    /// Redirected bikes on each road.
    pub m2: Vec<u32>,
}

impl NetworkState {
    /// Splits a flattened component vector for a network of `stations` stations.
    pub fn from_components(stations: usize, comps: &[u32]) -> Self {
        let roads = stations * (stations - 1);
        assert_eq!(comps.len(), stations + 2 * roads, "component vector has wrong length");
        NetworkState {
            n: comps[..stations].to_vec(),
            m1: comps[stations..stations + roads].to_vec(),
            m2: comps[stations + roads..].to_vec(),
        }
    }

    pub fn components(&self) -> Vec<u32> {
        let mut v = Vec::with_capacity(self.n.len() + self.m1.len() + self.m2.len());
        v.extend_from_slice(&self.n);
        v.extend_from_slice(&self.m1);
        v.extend_from_slice(&self.m2);
        v
    }

    pub fn total(&self) -> u64 {
        self.n.iter().chain(&self.m1).chain(&self.m2).map(|&x| x as u64).sum()
    }

    /// The starting state: `C` bikes at every station, empty roads.
    pub fn initial(params: &NetworkParams) -> Self {
        let roads = params.num_roads();
        NetworkState { n: vec![params.bikes_per_station; params.stations], m1: vec![0; roads], m2: vec![0; roads] }
    }
}

/// Shape of a state space, enough to tell whether two spaces coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceKey {
    pub stations: usize,
    pub capacity: u32,
    pub total: u32,
}

impl SpaceKey {
    pub fn of(params: &NetworkParams) -> Self {
        SpaceKey { stations: params.stations, capacity: params.capacity, total: params.total_bikes() }
    }

    pub fn dim(&self) -> usize {
        self.stations * (2 * self.stations - 1)
    }

    pub fn num_roads(&self) -> usize {
        self.stations * (self.stations - 1)
    }

    fn cap(&self, pos: usize) -> u32 {
        if pos < self.stations {
            self.capacity
        } else {
            self.total
        }
    }
}

/// Enumerated, bijectively indexed state space.
#[derive(Debug, Clone)]
pub struct StateSpace {
    key: SpaceKey,
    dim: usize,
    /// `ways[p * (total + 1) + s]`: completions of positions `p..dim` summing to `s`.
    ways: Vec<u128>,
    data: Vec<u32>,
    len: usize,
}

/// Number of integer vectors with the given per-position caps summing to `total`,
/// as a suffix table. Saturates instead of overflowing.
fn suffix_counts(key: &SpaceKey) -> Vec<u128> {
    let dim = key.dim();
    let width = key.total as usize + 1;
    let mut ways = vec![0u128; (dim + 1) * width];
    ways[dim * width] = 1;
    for p in (0..dim).rev() {
        let cap = key.cap(p) as usize;
        for s in 0..width {
            let mut acc: u128 = 0;
            for v in 0..=cap.min(s) {
                acc = acc.saturating_add(ways[(p + 1) * width + s - v]);
            }
            ways[p * width + s] = acc;
        }
    }
    ways
}

impl StateSpace {
    /// Enumerates all feasible states with the default cap.
    pub fn enumerate(params: &NetworkParams) -> Result<Self> {
        Self::enumerate_with_cap(params, DEFAULT_STATE_CAP)
    }

    /// Enumerates all feasible states, failing if there are more than `cap`.
    pub fn enumerate_with_cap(params: &NetworkParams, cap: usize) -> Result<Self> {
        let key = SpaceKey::of(params);
        let count = Self::count(params);
        if count > cap as u128 {
            return Err(Error::ResourceLimit { count, cap });
        }
        let dim = key.dim();
        let ways = suffix_counts(&key);
        let len = count as usize;
        let mut data = Vec::with_capacity(len * dim);
        let mut cur = vec![0u32; dim];
        let width = key.total as usize + 1;
        fill(&key, &ways, width, 0, key.total, &mut cur, &mut data);
        debug_assert_eq!(data.len(), len * dim);
        Ok(StateSpace { key, dim, ways, data, len })
    }

    /// Number of feasible states, computed without enumerating.
    pub fn count(params: &NetworkParams) -> u128 {
        let key = SpaceKey::of(params);
        suffix_counts(&key)[key.total as usize]
    }

    /// Size of the unconstrained box `(K+1)^N (NC+1)^(2N(N-1))`, if it fits
    /// in a `u128`.
    pub fn box_size(params: &NetworkParams) -> Option<u128> {
        let key = SpaceKey::of(params);
        let a = (key.capacity as u128 + 1).checked_pow(key.stations as u32)?;
        let b = (key.total as u128 + 1).checked_pow(2 * key.num_roads() as u32)?;
        a.checked_mul(b)
    }

    /// `log10` of the box size, always available.
    pub fn box_size_log10(params: &NetworkParams) -> f64 {
        let key = SpaceKey::of(params);
        key.stations as f64 * (key.capacity as f64 + 1.0).log10()
            + 2.0 * key.num_roads() as f64 * (key.total as f64 + 1.0).log10()
    }

    pub fn key(&self) -> SpaceKey {
        self.key
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Length of each component vector, `N(2N-1)`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stations(&self) -> usize {
        self.key.stations
    }

    pub fn num_roads(&self) -> usize {
        self.key.num_roads()
    }

    pub fn total(&self) -> u32 {
        self.key.total
    }

    pub fn capacity(&self) -> u32 {
        self.key.capacity
    }

    /// Flattened components of the state with the given rank.
    pub fn components(&self, rank: usize) -> &[u32] {
        &self.data[rank * self.dim..(rank + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn unrank(&self, rank: usize) -> Result<NetworkState> {
        if rank >= self.len {
            return Err(Error::OutOfRange { rank, len: self.len });
        }
        Ok(NetworkState::from_components(self.key.stations, self.components(rank)))
    }

    pub fn rank(&self, state: &NetworkState) -> Result<usize> {
        self.rank_components(&state.components())
    }

    /// Rank of a flattened component vector.
    pub fn rank_components(&self, comps: &[u32]) -> Result<usize> {
        if comps.len() != self.dim {
            return Err(Error::NotAMember(format!("expected {} components, got {}", self.dim, comps.len())));
        }
        let total: u64 = comps.iter().map(|&x| x as u64).sum();
        if total != self.key.total as u64 {
            return Err(Error::NotAMember(format!("component sum {total} differs from NC = {}", self.key.total)));
        }
        let width = self.key.total as usize + 1;
        let mut rank: u128 = 0;
        let mut rem = self.key.total as usize;
        for (p, &x) in comps.iter().enumerate() {
            if x > self.key.cap(p) {
                return Err(Error::NotAMember(format!("component {p} = {x} exceeds its bound {}", self.key.cap(p))));
            }
            let next = &self.ways[(p + 1) * width..(p + 2) * width];
            for v in 0..x as usize {
                rank += next[rem - v];
            }
            rem -= x as usize;
        }
        Ok(rank as usize)
    }

    /// Rank of the starting state (`C` bikes per station).
    pub fn initial_rank(&self, params: &NetworkParams) -> Result<usize> {
        self.rank(&NetworkState::initial(params))
    }

    /// Writes one state per line, components space-separated.
    pub fn dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for comps in self.iter() {
            let line = comps.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

fn fill(key: &SpaceKey, ways: &[u128], width: usize, pos: usize, rem: u32, cur: &mut [u32], out: &mut Vec<u32>) {
    if pos == cur.len() {
        out.extend_from_slice(cur);
        return;
    }
    let hi = key.cap(pos).min(rem);
    for v in 0..=hi {
        if ways[(pos + 1) * width + (rem - v) as usize] == 0 {
            continue;
        }
        cur[pos] = v;
        fill(key, ways, width, pos + 1, rem - v, cur, out);
    }
    cur[pos] = 0;
}
