//! Product-form stationary distributions and the normalization constant.
//!
//! Two conventions are evaluated. `Literal` follows the displayed
//! product form term by term:
//!
//! ```text
//! prod_i (e_i/lambda_i)^{n_i}
//!   * prod_{k != l} m_{kl}! * H1(m1_{kl}) * H2(m2_{kl}),
//! H1(m) = (1/m!) (e1_{kl} / (m mu_{kl}))^m,   H2 likewise with xi,
//! ```
//!
//! where `m_{kl} = m1_{kl} + m2_{kl}`. `Standard` is the classical
//! closed-network form with single-server stations and infinite-server
//! roads: `prod_i (e_i/lambda_i)^{n_i} * prod (e1/mu)^{m1}/m1! (e2/xi)^{m2}/m2!`.
//!
//! Weights are accumulated in log space and exponentiated after
//! subtracting the maximum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::compensated_sum;
use crate::model::{NetworkParams, Regime};
use crate::statespace::{NetworkState, SpaceKey, StateSpace};
use crate::traffic::VisitRatios;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    Literal,
    Standard,
}

impl std::str::FromStr for Convention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Convention::Literal),
            "standard" => Ok(Convention::Standard),
            other => Err(Error::Config(format!("unknown convention {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionSource {
    ProductFormLiteral,
    ProductFormStandard,
    Ctmc,
    Simulation,
}

impl std::fmt::Display for DistributionSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistributionSource::ProductFormLiteral => "product-form-literal",
            DistributionSource::ProductFormStandard => "product-form-standard",
            DistributionSource::Ctmc => "ctmc",
            DistributionSource::Simulation => "simulation",
        })
    }
}

impl From<Convention> for DistributionSource {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Literal => DistributionSource::ProductFormLiteral,
            Convention::Standard => DistributionSource::ProductFormStandard,
        }
    }
}

/// Probability per state of a whole state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub source: DistributionSource,
    pub key: SpaceKey,
    pub probs: Vec<f64>,
}

impl StationaryDistribution {
    pub fn total(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Point mass on one state.
    pub fn point_mass(space: &StateSpace, rank: usize, source: DistributionSource) -> Self {
        let mut probs = vec![0.0; space.len()];
        probs[rank] = 1.0;
        StationaryDistribution { source, key: space.key(), probs }
    }
}

/// `G` kept in log form as well, since it overflows for large populations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConstant {
    pub log_g: f64,
}

impl NormalizationConstant {
    pub fn value(&self) -> f64 {
        self.log_g.exp()
    }
}

/// `ln k!` for `k = 0..=max`.
fn ln_factorials(max: usize) -> Vec<f64> {
    let mut t = vec![0.0; max + 1];
    for k in 1..=max {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
}

/// Per-node log ratios, precomputed once per evaluation.
struct LogTerms {
    stations: usize,
    roads: usize,
    station: Vec<f64>,
    road1: Vec<f64>,
    road2: Vec<f64>,
    ln_fact: Vec<f64>,
    conv: Convention,
}

fn ln_ratio(e: f64, rate: f64) -> f64 {
    if e == 0.0 {
        f64::NEG_INFINITY
    } else {
        (e / rate).ln()
    }
}

impl LogTerms {
    fn new(params: &NetworkParams, ratios: &VisitRatios, conv: Convention) -> Self {
        let roads = params.num_roads();
        let station = (0..params.stations).map(|i| ln_ratio(ratios.e_station[i], params.lambda[i])).collect();
        let mut road1 = Vec::with_capacity(roads);
        let mut road2 = Vec::with_capacity(roads);
        for r in 0..roads {
            let (k, l) = params.road_endpoints(r);
            road1.push(ln_ratio(ratios.e_road1[r], params.mu[k][l]));
            road2.push(ln_ratio(ratios.e_road2[r], params.xi[k][l]));
        }
        LogTerms {
            stations: params.stations,
            roads,
            station,
            road1,
            road2,
            ln_fact: ln_factorials(params.total_bikes() as usize),
            conv,
        }
    }

    fn power(ln_x: f64, count: u32) -> f64 {
        if count == 0 {
            0.0
        } else {
            count as f64 * ln_x
        }
    }

    fn road_class(&self, ln_x: f64, m: u32) -> f64 {
        if m == 0 {
            return 0.0;
        }
        match self.conv {
            // (1/m!) (e / (m rate))^m
            Convention::Literal => -self.ln_fact[m as usize] + m as f64 * (ln_x - (m as f64).ln()),
            // (1/m!) (e / rate)^m
            Convention::Standard => -self.ln_fact[m as usize] + m as f64 * ln_x,
        }
    }

    fn log_weight(&self, comps: &[u32]) -> f64 {
        let (n, m1, m2) = (
            &comps[..self.stations],
            &comps[self.stations..self.stations + self.roads],
            &comps[self.stations + self.roads..],
        );
        let mut acc = 0.0;
        for (i, &ni) in n.iter().enumerate() {
            acc += Self::power(self.station[i], ni);
        }
        for r in 0..self.roads {
            if self.conv == Convention::Literal {
                acc += self.ln_fact[(m1[r] + m2[r]) as usize];
            }
            acc += self.road_class(self.road1[r], m1[r]);
            acc += self.road_class(self.road2[r], m2[r]);
        }
        if acc.is_nan() {
            f64::NEG_INFINITY
        } else {
            acc
        }
    }
}

/// Unnormalized weight of one state.
pub fn weight(state: &NetworkState, ratios: &VisitRatios, params: &NetworkParams, conv: Convention) -> f64 {
    LogTerms::new(params, ratios, conv).log_weight(&state.components()).exp()
}

/// `ln` of the unnormalized weight of every state, in rank order.
pub fn log_weights(space: &StateSpace, ratios: &VisitRatios, params: &NetworkParams, conv: Convention) -> Vec<f64> {
    let terms = LogTerms::new(params, ratios, conv);
    space.iter().map(|c| terms.log_weight(c)).collect()
}

/// Sums weights over the whole space: returns `G` and the normalized
/// distribution.
pub fn normalize_direct(
    space: &StateSpace,
    ratios: &VisitRatios,
    params: &NetworkParams,
    conv: Convention,
) -> Result<(NormalizationConstant, StationaryDistribution)> {
    let logs = log_weights(space, ratios, params, conv);
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Degenerate("every state has zero weight".into()));
    }
    let scaled: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let sum = compensated_sum(scaled.iter().copied());
    let probs = scaled.iter().map(|w| w / sum).collect();
    Ok((
        NormalizationConstant { log_g: max + sum.ln() },
        StationaryDistribution { source: conv.into(), key: space.key(), probs },
    ))
}

/// Population-indexed convolution of per-node factor sequences:
/// returns `sum over compositions of prod_j factors[j][n_j]` at `population`.
/// Sequences shorter than `population + 1` are treated as zero beyond their end.
pub fn convolution_g(factors: &[Vec<f64>], population: usize) -> f64 {
    let mut g = vec![0.0; population + 1];
    g[0] = 1.0;
    for f in factors {
        let mut next = vec![0.0; population + 1];
        for (total, slot) in next.iter_mut().enumerate() {
            let terms = (0..=total.min(f.len().saturating_sub(1))).map(|k| f[k] * g[total - k]);
            *slot = compensated_sum(terms);
        }
        g = next;
    }
    g[population]
}

/// Normalization constant by node-by-node convolution, standard convention.
/// Stations contribute `x^n` (`n <= K`), roads `x^m / m!`.
///
/// Only valid in the no-full regime, where no redirect depends on the
/// joint state.
pub fn normalize_convolution(params: &NetworkParams, ratios: &VisitRatios) -> Result<NormalizationConstant> {
    if params.regime() != Regime::NoFull {
        return Err(Error::Regime);
    }
    let pop = params.total_bikes() as usize;
    let mut factors = Vec::new();
    for i in 0..params.stations {
        let x = ratios.e_station[i] / params.lambda[i];
        let cap = (params.capacity as usize).min(pop);
        factors.push((0..=cap).map(|n| x.powi(n as i32)).collect::<Vec<_>>());
    }
    for r in 0..params.num_roads() {
        let (k, l) = params.road_endpoints(r);
        for (e, rate) in [(ratios.e_road1[r], params.mu[k][l]), (ratios.e_road2[r], params.xi[k][l])] {
            let x = if e == 0.0 { 0.0 } else { e / rate };
            let mut seq = Vec::with_capacity(pop + 1);
            let mut term = 1.0;
            for m in 0..=pop {
                if m > 0 {
                    term *= x / m as f64;
                }
                seq.push(term);
            }
            factors.push(seq);
        }
    }
    let g = convolution_g(&factors, pop);
    if !(g > 0.0) {
        return Err(Error::Degenerate(format!("convolution gave G = {g}")));
    }
    Ok(NormalizationConstant { log_g: g.ln() })
}

/// Builds the evaluator used by [`crate::traffic::fixed_point_beta`]:
/// the product-form probability that each station is full.
pub fn full_probability_evaluator<'a>(
    space: &'a StateSpace,
    params: &'a NetworkParams,
    conv: Convention,
) -> impl FnMut(&VisitRatios) -> Result<Vec<f64>> + 'a {
    move |ratios| {
        let (_, dist) = normalize_direct(space, ratios, params, conv)?;
        let k = params.capacity;
        let mut full = vec![0.0; params.stations];
        for (comps, &p) in space.iter().zip(&dist.probs) {
            for (i, f) in full.iter_mut().enumerate() {
                if comps[i] == k {
                    *f += p;
                }
            }
        }
        Ok(full)
    }
}
