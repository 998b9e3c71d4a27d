//! Performance measures computed from a stationary distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::compensated_sum;
use crate::productform::{DistributionSource, StationaryDistribution};
use crate::statespace::StateSpace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Problematic {
    pub empty: f64,
    pub full: f64,
    /// `empty + full`.
    pub problematic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanQueues {
    /// Mean bikes parked per station.
    pub stations: Vec<f64>,
    /// Mean bikes on roads, summed over road components.
    pub q0_direct: f64,
    /// `NC - sum of station means`.
    pub q0_complement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationReport {
    /// One-based station number.
    pub station: usize,
    pub empty: f64,
    pub full: f64,
    pub problematic: f64,
    pub mean_occupancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub source: DistributionSource,
    pub stations: Vec<StationReport>,
    pub q0_direct: f64,
    pub q0_complement: f64,
    /// Average of the per-station problematic probabilities (an extension:
    /// the per-station measure is the primary one).
    pub mean_problematic: f64,
}

fn check_space(dist: &StationaryDistribution, space: &StateSpace) -> Result<()> {
    if dist.key != space.key() || dist.probs.len() != space.len() {
        return Err(Error::MismatchedSpace(format!(
            "distribution over {:?} ({} states), space {:?} ({} states)",
            dist.key,
            dist.probs.len(),
            space.key(),
            space.len()
        )));
    }
    Ok(())
}

/// Probability that station `station` (zero-based) is empty, full, or either.
pub fn problematic(dist: &StationaryDistribution, space: &StateSpace, station: usize) -> Result<Problematic> {
    check_space(dist, space)?;
    if station >= space.stations() {
        return Err(Error::StationIndex { index: station, stations: space.stations() });
    }
    let k = space.capacity();
    let pick = |target: u32| {
        compensated_sum(space.iter().zip(&dist.probs).filter(|(c, _)| c[station] == target).map(|(_, &p)| p))
    };
    let empty = pick(0);
    let full = pick(k);
    Ok(Problematic { empty, full, problematic: empty + full })
}

/// Marginal distribution of the occupancy of one station, `P{n_i = j}` for
/// `j = 0..=K`.
pub fn station_marginal(dist: &StationaryDistribution, space: &StateSpace, station: usize) -> Result<Vec<f64>> {
    check_space(dist, space)?;
    if station >= space.stations() {
        return Err(Error::StationIndex { index: station, stations: space.stations() });
    }
    let mut m = vec![0.0; space.capacity() as usize + 1];
    for (c, &p) in space.iter().zip(&dist.probs) {
        m[c[station] as usize] += p;
    }
    Ok(m)
}

pub fn mean_queues(dist: &StationaryDistribution, space: &StateSpace) -> Result<MeanQueues> {
    check_space(dist, space)?;
    let n = space.stations();
    let stations: Vec<f64> =
        (0..n).map(|i| compensated_sum(space.iter().zip(&dist.probs).map(|(c, &p)| c[i] as f64 * p))).collect();
    let q0_direct =
        compensated_sum(space.iter().zip(&dist.probs).map(|(c, &p)| c[n..].iter().map(|&x| x as f64).sum::<f64>() * p));
    let q0_complement = space.total() as f64 - compensated_sum(stations.iter().copied());
    Ok(MeanQueues { stations, q0_direct, q0_complement })
}

pub fn report(dist: &StationaryDistribution, space: &StateSpace) -> Result<PerformanceReport> {
    let q = mean_queues(dist, space)?;
    let mut stations = Vec::with_capacity(space.stations());
    for i in 0..space.stations() {
        let p = problematic(dist, space, i)?;
        stations.push(StationReport {
            station: i + 1,
            empty: p.empty,
            full: p.full,
            problematic: p.problematic,
            mean_occupancy: q.stations[i],
        });
    }
    let mean_problematic = stations.iter().map(|s| s.problematic).sum::<f64>() / stations.len() as f64;
    Ok(PerformanceReport {
        source: dist.source,
        stations,
        q0_direct: q.q0_direct,
        q0_complement: q.q0_complement,
        mean_problematic,
    })
}

/// Half the L1 distance.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * compensated_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs()))
}

pub fn max_pointwise(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: usize,
    pub b: usize,
    pub source_a: DistributionSource,
    pub source_b: DistributionSource,
    pub total_variation: f64,
    pub max_pointwise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonBlock {
    pub pairs: Vec<PairComparison>,
}

/// Pairwise distances between distributions over the same space.
pub fn compare(dists: &[&StationaryDistribution]) -> Result<ComparisonBlock> {
    if let Some(first) = dists.first() {
        for d in &dists[1..] {
            if d.key != first.key || d.probs.len() != first.probs.len() {
                return Err(Error::MismatchedSpace(format!("{:?} vs {:?}", first.key, d.key)));
            }
        }
    }
    let mut pairs = Vec::new();
    for a in 0..dists.len() {
        for b in a + 1..dists.len() {
            pairs.push(PairComparison {
                a,
                b,
                source_a: dists[a].source,
                source_b: dists[b].source,
                total_variation: total_variation(&dists[a].probs, &dists[b].probs),
                max_pointwise: max_pointwise(&dists[a].probs, &dists[b].probs),
            });
        }
    }
    Ok(ComparisonBlock { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NetworkParams;
    use crate::statespace::NetworkState;

    fn setup() -> (NetworkParams, StateSpace) {
        let p = NetworkParams::uniform(2, 1, 3, vec![1.0, 1.0]);
        let s = StateSpace::enumerate(&p).unwrap();
        (p, s)
    }

    #[test]
    fn point_mass_on_empty_station() {
        let (_, space) = setup();
        let r = space.rank(&NetworkState { n: vec![0, 2], m1: vec![0, 0], m2: vec![0, 0] }).unwrap();
        let d = StationaryDistribution::point_mass(&space, r, DistributionSource::Ctmc);
        let p = problematic(&d, &space, 0).unwrap();
        assert_eq!((p.empty, p.full, p.problematic), (1.0, 0.0, 1.0));
        assert!(matches!(problematic(&d, &space, 2), Err(Error::StationIndex { .. })));
    }

    #[test]
    fn point_mass_on_initial_state() {
        let (p, space) = setup();
        let r = space.initial_rank(&p).unwrap();
        let d = StationaryDistribution::point_mass(&space, r, DistributionSource::Ctmc);
        let q = mean_queues(&d, &space).unwrap();
        assert_eq!(q.stations, vec![1.0, 1.0]);
        assert_eq!(q.q0_direct, 0.0);
        assert_eq!(q.q0_complement, 0.0);
    }

    #[test]
    fn identical_distributions_have_zero_distance() {
        let (_, space) = setup();
        let d = StationaryDistribution::point_mass(&space, 3, DistributionSource::Ctmc);
        let block = compare(&[&d, &d]).unwrap();
        assert_eq!(block.pairs.len(), 1);
        assert_eq!(block.pairs[0].total_variation, 0.0);
    }

    #[test]
    fn mismatched_spaces_are_rejected() {
        let (_, space) = setup();
        let other = StateSpace::enumerate(&NetworkParams::uniform(2, 2, 2, vec![1.0, 1.0])).unwrap();
        let a = StationaryDistribution::point_mass(&space, 0, DistributionSource::Ctmc);
        let b = StationaryDistribution::point_mass(&other, 0, DistributionSource::Ctmc);
        assert!(matches!(compare(&[&a, &b]), Err(Error::MismatchedSpace(_))));
        assert!(matches!(mean_queues(&b, &space), Err(Error::MismatchedSpace(_))));
    }
}
