//! Model parameters and their validation.
//!
//! Matrices are dense `N x N` with ignored (zero) diagonals. A rate on a pair
//! whose routing probability is zero may be left at zero; it never enters a
//! computation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on routing-probability row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// All constants of the bike-sharing network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Number of stations `N`.
    #[serde(rename = "N")]
    pub stations: usize,
    /// Initial bikes per station `C`.
    #[serde(rename = "C")]
    pub bikes_per_station: u32,
    /// Parking capacity per station `K`.
    #[serde(rename = "K")]
    pub capacity: u32,
    /// Outside-customer arrival rate per station.
    pub lambda: Vec<f64>,
    /// First-trip routing probabilities.
    pub p_first: Vec<Vec<f64>>,
    /// First-trip riding rates.
    pub mu: Vec<Vec<f64>>,
    /// Redirect routing probabilities, used when the target station is full.
    pub alpha: Vec<Vec<f64>>,
    /// Redirect riding rates.
    pub xi: Vec<Vec<f64>>,
}

/// Whether a full station can ever occur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `NC >= K`: some station can fill up, redirects happen.
    FullReachable,
    /// `NC < K`: no station is ever full; the network is a plain closed
    /// product-form network.
    NoFull,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::FullReachable => f.write_str("full-reachable"),
            Regime::NoFull => f.write_str("no-full"),
        }
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    /// Zero-based `(row, col)` or `(row,)` location, when the problem has one.
    pub index: Vec<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub regime: Regime,
    pub total_bikes: u64,
    pub capacity: u32,
    /// The standing assumption `NC >= K` (some station can become full).
    pub full_reachable: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Converts a failed report into an error listing every violation.
    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            let msg = self
                .violations
                .iter()
                .map(|v| format!("{}{:?}: {}", v.field, v.index, v.message))
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidParams(msg))
        }
    }
}

impl NetworkParams {
    /// Builds a parameter set with uniform routing to every other station
    /// and constant rates. Handy for symmetric test instances.
    pub fn uniform(stations: usize, bikes_per_station: u32, capacity: u32, lambda: Vec<f64>) -> Self {
        let off = if stations > 1 { 1.0 / (stations - 1) as f64 } else { 0.0 };
        let routing: Vec<Vec<f64>> =
            (0..stations).map(|i| (0..stations).map(|j| if i == j { 0.0 } else { off }).collect()).collect();
        let rates: Vec<Vec<f64>> =
            (0..stations).map(|i| (0..stations).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
        NetworkParams {
            stations,
            bikes_per_station,
            capacity,
            lambda,
            p_first: routing.clone(),
            mu: rates.clone(),
            alpha: routing,
            xi: rates,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(ConfigFile::from_toml_str(s)?.model)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Ok(ConfigFile::from_path(path)?.model)
    }

    /// Total number of bikes `NC`.
    pub fn total_bikes(&self) -> u32 {
        self.stations as u32 * self.bikes_per_station
    }

    pub fn regime(&self) -> Regime {
        if self.total_bikes() >= self.capacity {
            Regime::FullReachable
        } else {
            Regime::NoFull
        }
    }

    pub fn num_roads(&self) -> usize {
        self.stations * self.stations.saturating_sub(1)
    }

    /// Index of road `from -> to` in the flattened road order (row-major
    /// over ordered pairs, diagonal skipped).
    pub fn road_index(&self, from: usize, to: usize) -> usize {
        debug_assert!(from != to);
        from * (self.stations - 1) + if to < from { to } else { to - 1 }
    }

    /// Inverse of [`road_index`](Self::road_index).
    pub fn road_endpoints(&self, road: usize) -> (usize, usize) {
        let from = road / (self.stations - 1);
        let r = road % (self.stations - 1);
        let to = if r < from { r } else { r + 1 };
        (from, to)
    }

    /// Checks every invariant and reports all problems found.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let mut push = |field: &str, index: Vec<usize>, message: String| {
            violations.push(Violation { field: field.to_string(), index, message });
        };
        let n = self.stations;
        if n < 2 {
            push("N", vec![], format!("need at least 2 stations, got {n}"));
        }
        if self.bikes_per_station < 1 {
            push("C", vec![], "C must be at least 1".into());
        }
        if self.capacity < 1 {
            push("K", vec![], "K must be at least 1".into());
        }
        if self.bikes_per_station > self.capacity {
            push("C", vec![], format!("C = {} exceeds the capacity K = {}", self.bikes_per_station, self.capacity));
        }
        if self.lambda.len() != n {
            push("lambda", vec![], format!("expected {n} entries, got {}", self.lambda.len()));
        }
        for (i, &l) in self.lambda.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                push("lambda", vec![i], format!("arrival rate must be positive, got {l}"));
            }
        }

        let matrices = [("p_first", &self.p_first), ("mu", &self.mu), ("alpha", &self.alpha), ("xi", &self.xi)];
        let mut shapes_ok = true;
        for (name, m) in matrices {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                push(name, vec![], format!("expected a {n}x{n} matrix"));
                shapes_ok = false;
                continue;
            }
            for (i, row) in m.iter().enumerate() {
                if row[i] != 0.0 {
                    push(name, vec![i, i], format!("diagonal entry must be zero, got {}", row[i]));
                }
                for (j, &v) in row.iter().enumerate() {
                    if !v.is_finite() || v < 0.0 {
                        push(name, vec![i, j], format!("entry must be finite and nonnegative, got {v}"));
                    }
                }
            }
        }

        if shapes_ok {
            for (name, probs, rate_name, rates) in
                [("p_first", &self.p_first, "mu", &self.mu), ("alpha", &self.alpha, "xi", &self.xi)]
            {
                for i in 0..n {
                    let sum: f64 = (0..n).filter(|&j| j != i).map(|j| probs[i][j]).sum();
                    if (sum - 1.0).abs() > ROW_SUM_TOL {
                        push(name, vec![i], format!("row {i} sums to {sum}, expected 1"));
                    }
                    for j in (0..n).filter(|&j| j != i) {
                        if probs[i][j] > 0.0 && !(rates[i][j] > 0.0) {
                            push(
                                rate_name,
                                vec![i, j],
                                format!("rate must be positive where {name} is positive, got {}", rates[i][j]),
                            );
                        }
                    }
                }
            }
        }

        let total_bikes = self.stations as u64 * self.bikes_per_station as u64;
        let full_reachable = total_bikes >= self.capacity as u64;
        ValidationReport {
            violations,
            regime: if full_reachable { Regime::FullReachable } else { Regime::NoFull },
            total_bikes,
            capacity: self.capacity,
            full_reachable,
        }
    }

    /// Validates and returns an error if anything is wrong.
    pub fn checked(&self) -> Result<()> {
        self.validate().into_result().map(|_| ())
    }
}

/// Optional solver tuning carried by a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_states: usize,
    pub dense_limit: usize,
    pub max_iterations: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            max_states: crate::statespace::DEFAULT_STATE_CAP,
            dense_limit: crate::linalg::DEFAULT_DENSE_LIMIT,
            max_iterations: crate::linalg::DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// Optional simulation defaults carried by a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub horizon: f64,
    pub warmup: f64,
    pub replications: usize,
    pub seed: u64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection { horizon: 1e5, warmup: 1e3, replications: 20, seed: 1 }
    }
}

/// The on-disk config: model fields at top level plus optional sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub model: NetworkParams,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

const TOP_LEVEL_KEYS: [&str; 10] = ["N", "C", "K", "lambda", "p_first", "mu", "alpha", "xi", "solver", "simulation"];

impl ConfigFile {
    /// Parses a config, rejecting unknown top-level keys (`flatten` would
    /// otherwise ignore them).
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(key) = table.keys().find(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
