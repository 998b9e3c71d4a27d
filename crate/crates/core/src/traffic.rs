//! Traffic equations.
//!
//! Two solves live here. The state-level one finds the positive left fixed
//! vector of the jump chain (one scalar per reachable state, first entry 1).
//! The node-level one finds occupancy-independent visit ratios for stations
//! and both road classes, given per-station probabilities `beta[i]` that an
//! arriving bike finds station `i` full and is redirected.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SolverOptions, StationarySolution};
use crate::model::NetworkParams;
use crate::sparse::{RowBuilder, SparseTransitionMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLevelSolution {
    /// Left fixed vector of the jump chain, first entry 1.
    pub values: Vec<f64>,
    /// `max |x - x P|`.
    pub residual: f64,
}

/// `jump - I`, a generator with the same stationary vector as `jump`.
fn jump_to_generator(jump: &SparseTransitionMatrix) -> SparseTransitionMatrix {
    let mut b = RowBuilder::new(jump.dim());
    for r in 0..jump.dim() {
        for (c, v) in jump.row(r) {
            b.add(c, v);
        }
        b.add(r, -1.0);
        b.finish_row();
    }
    b.build()
}

fn scale_first_to_one(v: &mut [f64]) -> Result<()> {
    let first = v[0];
    if !(first > 0.0) {
        return Err(Error::Singular("first component of the fixed vector is not positive".into()));
    }
    v.iter_mut().for_each(|x| *x /= first);
    Ok(())
}

/// Unique positive solution of `x = x P`, `x[0] = 1`, for a stochastic
/// matrix `P` that is irreducible (pass it restricted to its reachable class).
pub fn solve_state_level(jump: &SparseTransitionMatrix, opts: &SolverOptions) -> Result<StateLevelSolution> {
    let q = jump_to_generator(jump);
    let sol = linalg::stationary(&q, opts)?;
    let sol = tighten(&q, sol, opts)?;
    finish_state_level(jump, sol.pi, opts)
}

/// Same fixed point, reached by Gauss-Seidel sweeps from `start`.
pub fn solve_state_level_from(
    jump: &SparseTransitionMatrix,
    start: Vec<f64>,
    opts: &SolverOptions,
) -> Result<StateLevelSolution> {
    let q = jump_to_generator(jump);
    let sol = linalg::gauss_seidel_from(&q, start, opts)?;
    let sol = tighten(&q, sol, opts)?;
    finish_state_level(jump, sol.pi, opts)
}

/// The tolerance applies after scaling by `1/x[0]`, so an iterative
/// solution may need a few more sweeps at a tighter tolerance.
fn tighten(
    q: &SparseTransitionMatrix,
    mut sol: StationarySolution,
    opts: &SolverOptions,
) -> Result<StationarySolution> {
    for _ in 0..4 {
        if sol.residual <= opts.tolerance * sol.pi[0] || !(sol.pi[0] > 0.0) {
            break;
        }
        let tight = SolverOptions { tolerance: opts.tolerance * sol.pi[0], ..*opts };
        sol = linalg::gauss_seidel_from(q, sol.pi, &tight)?;
    }
    Ok(sol)
}

fn finish_state_level(
    jump: &SparseTransitionMatrix,
    mut values: Vec<f64>,
    opts: &SolverOptions,
) -> Result<StateLevelSolution> {
    scale_first_to_one(&mut values)?;
    let xp = jump.left_mul(&values);
    let residual = values.iter().zip(&xp).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if !(residual <= opts.tolerance) {
        return Err(Error::NonConvergence { iterations: 0, residual });
    }
    if let Some(i) = values.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Reducible(format!("fixed vector vanishes at index {i}")));
    }
    Ok(StateLevelSolution { values, residual })
}

/// Occupancy-independent relative arrival rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitRatios {
    pub e_station: Vec<f64>,
    /// Class-1 ratio per road, in road-index order.
    pub e_road1: Vec<f64>,
    /// Class-2 ratio per road.
    pub e_road2: Vec<f64>,
    /// Redirect probability used for each station.
    pub beta: Vec<f64>,
}

impl VisitRatios {
    pub fn scaled(&self, factor: f64) -> VisitRatios {
        let s = |v: &[f64]| v.iter().map(|x| x * factor).collect::<Vec<_>>();
        VisitRatios {
            e_station: s(&self.e_station),
            e_road1: s(&self.e_road1),
            e_road2: s(&self.e_road2),
            beta: self.beta.clone(),
        }
    }
}

/// Node order: stations, class-1 roads, class-2 roads.
fn node_routing(params: &NetworkParams, beta: &[f64]) -> DMatrix<f64> {
    let n = params.stations;
    let roads = params.num_roads();
    let size = n + 2 * roads;
    let mut p = DMatrix::<f64>::zeros(size, size);
    for i in 0..n {
        for l in (0..n).filter(|&l| l != i) {
            p[(i, n + params.road_index(i, l))] += params.p_first[i][l];
        }
    }
    for road in 0..roads {
        let (_, i) = params.road_endpoints(road);
        for class_off in [n, n + roads] {
            let from = class_off + road;
            p[(from, i)] += 1.0 - beta[i];
            for l in (0..n).filter(|&l| l != i) {
                p[(from, n + roads + params.road_index(i, l))] += beta[i] * params.alpha[i][l];
            }
        }
    }
    p
}

/// Closed communicating classes of the positive-entry graph of `p`.
fn closed_classes(p: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let size = p.nrows();
    let mut reach = vec![vec![false; size]; size];
    for (s, row) in reach.iter_mut().enumerate() {
        let mut stack = vec![s];
        row[s] = true;
        while let Some(x) = stack.pop() {
            for y in 0..size {
                if p[(x, y)] > 0.0 && !row[y] {
                    row[y] = true;
                    stack.push(y);
                }
            }
        }
    }
    let mut assigned = vec![false; size];
    let mut classes = Vec::new();
    for s in 0..size {
        if assigned[s] {
            continue;
        }
        let class: Vec<usize> = (0..size).filter(|&t| reach[s][t] && reach[t][s]).collect();
        class.iter().for_each(|&t| assigned[t] = true);
        let closed = class.iter().all(|&x| (0..size).all(|y| !reach[x][y] || class.contains(&y)));
        if closed {
            classes.push(class);
        }
    }
    classes
}

/// Solves `e = e P_node` where stations route to class-1 roads by
/// `p_first`, and a bike finishing road `k -> i` (either class) enters
/// station `i` with probability `1 - beta[i]` or is redirected to class-2
/// road `i -> l` with probability `beta[i] * alpha[i][l]`.
///
/// Nodes outside the single recurrent class get ratio 0. The result is
/// scaled so station 0 has ratio 1, or so the largest ratio is 1 when
/// station 0 is transient.
pub fn solve_node_level(params: &NetworkParams, beta: &[f64]) -> Result<VisitRatios> {
    let n = params.stations;
    let roads = params.num_roads();
    if beta.len() != n {
        return Err(Error::InvalidParams(format!("expected {n} beta values, got {}", beta.len())));
    }
    if let Some(b) = beta.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return Err(Error::InvalidParams(format!("beta must lie in [0, 1], got {b}")));
    }
    let p = node_routing(params, beta);
    let classes = closed_classes(&p);
    if classes.len() != 1 {
        return Err(Error::Singular(format!("node routing has {} closed classes, need exactly one", classes.len())));
    }
    let class = &classes[0];
    if !class.iter().any(|&x| x < n) {
        return Err(Error::Singular("no station is recurrent in the node routing".into()));
    }

    // e (I - P) = 0 on the class, with the first class member pinned to 1
    let m = class.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (r, &x) in class.iter().enumerate() {
        for (c, &y) in class.iter().enumerate() {
            let id = if r == c { 1.0 } else { 0.0 };
            // transpose so unknowns are a column vector
            a[(c, r)] = id - p[(x, y)];
        }
    }
    for c in 0..m {
        a[(0, c)] = if c == 0 { 1.0 } else { 0.0 };
    }
    let mut b = DVector::<f64>::zeros(m);
    b[0] = 1.0;
    let sol = a.lu().solve(&b).ok_or_else(|| Error::Singular("node traffic equations".into()))?;

    let mut e = vec![0.0; n + 2 * roads];
    for (k, &x) in class.iter().enumerate() {
        e[x] = sol[k].max(0.0);
    }
    let norm = if e[0] > 0.0 { e[0] } else { e.iter().cloned().fold(0.0, f64::max) };
    e.iter_mut().for_each(|x| *x /= norm);
    Ok(VisitRatios {
        e_station: e[..n].to_vec(),
        e_road1: e[n..n + roads].to_vec(),
        e_road2: e[n + roads..].to_vec(),
        beta: beta.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { damping: 0.5, tolerance: 1e-8, max_iterations: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOutcome {
    pub ratios: VisitRatios,
    pub iterations: usize,
    pub converged: bool,
    /// Max change of `beta` in the last iteration.
    pub last_change: f64,
}

/// Self-consistent redirect probabilities: repeatedly sets
/// `beta <- beta + damping * (P{n_i = K} - beta)`, where the full-station
/// probabilities come from `full_probabilities` evaluated at the current
/// visit ratios. Starts from `beta = 0`. Non-convergence is reported in the
/// outcome, not as an error.
pub fn fixed_point_beta<F>(
    params: &NetworkParams,
    mut full_probabilities: F,
    opts: &FixedPointOptions,
) -> Result<FixedPointOutcome>
where
    F: FnMut(&VisitRatios) -> Result<Vec<f64>>,
{
    let n = params.stations;
    let mut beta = vec![0.0; n];
    let mut ratios = solve_node_level(params, &beta)?;
    let mut last_change = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let full = full_probabilities(&ratios)?;
        let next: Vec<f64> =
            beta.iter().zip(&full).map(|(b, f)| (b + opts.damping * (f - b)).clamp(0.0, 1.0)).collect();
        last_change = beta.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        beta = next;
        ratios = solve_node_level(params, &beta)?;
        if last_change <= opts.tolerance {
            return Ok(FixedPointOutcome { ratios, iterations: it, converged: true, last_change });
        }
    }
    Ok(FixedPointOutcome { ratios, iterations: opts.max_iterations, converged: false, last_change })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1() -> NetworkParams {
        NetworkParams::uniform(2, 1, 3, vec![1.0, 1.0])
    }

    #[test]
    fn two_state_cycle_fixed_vector() {
        let p = SparseTransitionMatrix::from_triplets(2, vec![(0, 1, 1.0), (1, 0, 1.0)]);
        let sol = solve_state_level(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.values, vec![1.0, 1.0]);
    }

    #[test]
    fn no_bypass_cycle_has_unit_ratios() {
        let r = solve_node_level(&t1(), &[0.0, 0.0]).unwrap();
        assert_eq!(r.e_station, vec![1.0, 1.0]);
        assert_eq!(r.e_road1, vec![1.0, 1.0]);
        assert_eq!(r.e_road2, vec![0.0, 0.0]);
    }

    #[test]
    fn full_bypass_is_rejected() {
        assert!(matches!(solve_node_level(&t1(), &[1.0, 1.0]), Err(Error::Singular(_))));
        assert!(matches!(solve_node_level(&t1(), &[1.5, 0.0]), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn bypass_scales_class_two_roads() {
        let p = NetworkParams::uniform(2, 2, 2, vec![1.0, 1.0]);
        let r = solve_node_level(&p, &[0.2, 0.2]).unwrap();
        for (a, b) in r.e_road2.iter().zip(&r.e_road1) {
            assert!((a - 0.25 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn transient_reference_station_normalizes_by_max() {
        // station 0 always redirects: it is never entered
        let p = NetworkParams::uniform(3, 1, 2, vec![1.0; 3]);
        let r = solve_node_level(&p, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.e_station[0], 0.0);
        let max = r.e_station.iter().chain(&r.e_road1).chain(&r.e_road2).cloned().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fixed_point_stays_at_zero_without_full_states() {
        let out = fixed_point_beta(&t1(), |_| Ok(vec![0.0, 0.0]), &FixedPointOptions::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.ratios.beta, vec![0.0, 0.0]);
    }

    #[test]
    fn fixed_point_non_convergence_is_reported() {
        let opts = FixedPointOptions { max_iterations: 3, ..Default::default() };
        let out = fixed_point_beta(&t1(), |_| Ok(vec![0.5, 0.5]), &opts).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
        assert!((out.ratios.beta[0] - 0.4375).abs() < 1e-15);
    }
}
