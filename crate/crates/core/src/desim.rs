//! Discrete-event simulation of the bike network.
//!
//! Outside customers arrive at each station as a Poisson stream. A customer
//! who finds the station empty leaves (counted as lost); otherwise they rent
//! a bike and ride to a station chosen by `p_first`. Each riding bike holds
//! its own exponential timer. On arrival at a full station the rider is
//! redirected along `alpha` as a class-2 trip.
//!
//! Estimates are time averages over `[warmup, horizon]`, one per
//! replication, combined into a mean with a normal-approximation 95%
//! confidence interval. Replication `r` uses seed `base_seed + r`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::model::NetworkParams;
use crate::productform::{DistributionSource, StationaryDistribution};
use crate::routing::Layout;
use crate::statespace::StateSpace;

const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimTarget {
    /// Probability of every state.
    StateProbabilities,
    /// Empty, full and problematic probability per station.
    Problematic,
    /// Mean occupancy per station and mean bikes on roads.
    MeanQueues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub warmup: f64,
    pub replications: usize,
    pub base_seed: u64,
    pub targets: Vec<SimTarget>,
    /// Record this many events of the first replication.
    #[serde(default)]
    pub trace_events: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 1e5,
            warmup: 1e3,
            replications: 20,
            base_seed: 1,
            targets: vec![SimTarget::StateProbabilities, SimTarget::Problematic, SimTarget::MeanQueues],
            trace_events: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub target: String,
    pub mean: f64,
    /// Standard deviation of the replication means over `sqrt(R)`.
    pub std_error: f64,
    pub ci_half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub time: f64,
    pub event: String,
    pub state: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub estimates: Vec<SimEstimate>,
    /// One estimate per state, in rank order (empty unless requested).
    pub state_estimates: Vec<SimEstimate>,
    /// Mean of the per-replication occupancy distributions.
    pub distribution: StationaryDistribution,
    pub lost_customers: SimEstimate,
    pub events_per_replication: Vec<u64>,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Arrival(usize),
    Completion { road: usize, class: u8 },
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Replication {
    occupancy: Vec<f64>,
    lost: u64,
    events: u64,
    trace: Vec<TraceEntry>,
}

fn check_config(cfg: &SimConfig) -> Result<()> {
    if !(cfg.horizon.is_finite() && cfg.warmup >= 0.0 && cfg.warmup < cfg.horizon) {
        return Err(Error::Config(format!(
            "measurement window is empty: warmup {} must be below horizon {}",
            cfg.warmup, cfg.horizon
        )));
    }
    if cfg.replications == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    Ok(())
}

fn exp_sample<R: Rng>(rng: &mut R, rate: f64) -> Option<f64> {
    if rate > 0.0 {
        Some(Exp::new(rate).expect("positive rate").sample(rng))
    } else {
        None
    }
}

fn weighted(row: &[f64], skip: usize) -> Option<WeightedIndex<f64>> {
    let w: Vec<f64> = row.iter().enumerate().map(|(j, &v)| if j == skip { 0.0 } else { v }).collect();
    WeightedIndex::new(w).ok()
}

fn run_replication(params: &NetworkParams, space: &StateSpace, cfg: &SimConfig, rep: usize) -> Result<Replication> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.base_seed.wrapping_add(rep as u64));
    let n = params.stations;
    let lay = Layout::of(params);
    let total = params.total_bikes() as u64;
    let k_cap = params.capacity;
    let first_pick: Vec<_> = (0..n).map(|i| weighted(&params.p_first[i], i)).collect();
    let redirect_pick: Vec<_> = (0..n).map(|i| weighted(&params.alpha[i], i)).collect();

    let mut comps = vec![0u32; space.dim()];
    comps[..n].fill(params.bikes_per_station);
    let mut rank = space.rank_components(&comps)?;
    let mut occupancy = vec![0.0; space.len()];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |heap: &mut BinaryHeap<Scheduled>, time: f64, kind: EventKind| {
        heap.push(Scheduled { time, seq, kind });
        seq += 1;
    };
    for i in 0..n {
        if let Some(dt) = exp_sample(&mut rng, params.lambda[i]) {
            push(&mut heap, dt, EventKind::Arrival(i));
        }
    }

    let mut now = 0.0f64;
    let mut lost = 0u64;
    let mut events = 0u64;
    let mut trace = Vec::new();
    let want_trace = if rep == 0 { cfg.trace_events } else { 0 };

    loop {
        let next = heap.peek().map_or(f64::INFINITY, |s| s.time);
        let until = next.min(cfg.horizon);
        let lo = now.max(cfg.warmup);
        if until > lo {
            occupancy[rank] += until - lo;
        }
        if next > cfg.horizon {
            break;
        }
        let ev = heap.pop().expect("peeked");
        now = ev.time;
        events += 1;
        let label = match ev.kind {
            EventKind::Arrival(i) => {
                if let Some(dt) = exp_sample(&mut rng, params.lambda[i]) {
                    push(&mut heap, now + dt, EventKind::Arrival(i));
                }
                match (&first_pick[i], comps[i]) {
                    (Some(pick), ni) if ni >= 1 => {
                        let l = pick.sample(&mut rng);
                        let road = params.road_index(i, l);
                        comps[i] -= 1;
                        comps[lay.m1(road)] += 1;
                        if let Some(dt) = exp_sample(&mut rng, params.mu[i][l]) {
                            push(&mut heap, now + dt, EventKind::Completion { road, class: 1 });
                        }
                        "rental"
                    }
                    _ => {
                        lost += 1;
                        "lost"
                    }
                }
            }
            EventKind::Completion { road, class } => {
                let slot = if class == 1 { lay.m1(road) } else { lay.m2(road) };
                comps[slot] -= 1;
                let (_, i) = params.road_endpoints(road);
                if comps[i] < k_cap {
                    comps[i] += 1;
                    "return"
                } else {
                    let pick = redirect_pick[i]
                        .as_ref()
                        .ok_or_else(|| Error::InvalidParams(format!("station {i} has no redirect routing")))?;
                    let l = pick.sample(&mut rng);
                    let next_road = params.road_index(i, l);
                    comps[lay.m2(next_road)] += 1;
                    if let Some(dt) = exp_sample(&mut rng, params.xi[i][l]) {
                        push(&mut heap, now + dt, EventKind::Completion { road: next_road, class: 2 });
                    }
                    "redirect"
                }
            }
        };
        let sum: u64 = comps.iter().map(|&x| x as u64).sum();
        if sum != total {
            return Err(Error::Conservation { found: sum, expected: total });
        }
        rank = space.rank_components(&comps)?;
        if trace.len() < want_trace {
            trace.push(TraceEntry { time: now, event: label.to_string(), state: comps.clone() });
        }
    }

    let window = cfg.horizon - cfg.warmup;
    occupancy.iter_mut().for_each(|x| *x /= window);
    Ok(Replication { occupancy, lost, events, trace })
}

fn summarize(target: String, samples: &[f64]) -> SimEstimate {
    let r = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / r;
    let std_error = if samples.len() > 1 {
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
        (var / r).sqrt()
    } else {
        0.0
    };
    SimEstimate { target, mean, std_error, ci_half_width: Z_95 * std_error }
}

/// Runs all replications and combines their estimates.
pub fn simulate(params: &NetworkParams, space: &StateSpace, cfg: &SimConfig) -> Result<SimOutput> {
    check_config(cfg)?;
    let reps: Vec<Replication> =
        (0..cfg.replications).into_par_iter().map(|r| run_replication(params, space, cfg, r)).collect::<Result<_>>()?;

    let dists: Vec<StationaryDistribution> = reps
        .iter()
        .map(|r| StationaryDistribution {
            source: DistributionSource::Simulation,
            key: space.key(),
            probs: r.occupancy.clone(),
        })
        .collect();

    let mut estimates = Vec::new();
    if cfg.targets.contains(&SimTarget::Problematic) {
        for i in 0..params.stations {
            let per: Vec<metrics::Problematic> =
                dists.iter().map(|d| metrics::problematic(d, space, i)).collect::<Result<_>>()?;
            let s = i + 1;
            estimates.push(summarize(format!("empty_{s}"), &per.iter().map(|p| p.empty).collect::<Vec<_>>()));
            estimates.push(summarize(format!("full_{s}"), &per.iter().map(|p| p.full).collect::<Vec<_>>()));
            estimates
                .push(summarize(format!("problematic_{s}"), &per.iter().map(|p| p.problematic).collect::<Vec<_>>()));
        }
    }
    if cfg.targets.contains(&SimTarget::MeanQueues) {
        let per: Vec<metrics::MeanQueues> =
            dists.iter().map(|d| metrics::mean_queues(d, space)).collect::<Result<_>>()?;
        for i in 0..params.stations {
            estimates.push(summarize(format!("Q_{}", i + 1), &per.iter().map(|q| q.stations[i]).collect::<Vec<_>>()));
        }
        estimates.push(summarize("Q_0".into(), &per.iter().map(|q| q.q0_direct).collect::<Vec<_>>()));
    }

    let state_estimates = if cfg.targets.contains(&SimTarget::StateProbabilities) {
        (0..space.len())
            .map(|s| summarize(format!("state_{s}"), &reps.iter().map(|r| r.occupancy[s]).collect::<Vec<_>>()))
            .collect()
    } else {
        Vec::new()
    };

    let r = reps.len() as f64;
    let probs = (0..space.len()).map(|s| reps.iter().map(|x| x.occupancy[s]).sum::<f64>() / r).collect();
    let lost = summarize("lost_customers".into(), &reps.iter().map(|x| x.lost as f64).collect::<Vec<_>>());

    Ok(SimOutput {
        estimates,
        state_estimates,
        distribution: StationaryDistribution { source: DistributionSource::Simulation, key: space.key(), probs },
        lost_customers: lost,
        events_per_replication: reps.iter().map(|x| x.events).collect(),
        trace: reps.into_iter().next().map(|x| x.trace).unwrap_or_default(),
    })
}
