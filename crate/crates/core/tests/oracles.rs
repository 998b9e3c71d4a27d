//! Independent oracles for derived quantities.

use std::path::Path;

use bikenet::desim::{self, SimConfig};
use bikenet::error::Error;
use bikenet::linalg::SolverOptions;
use bikenet::productform::{self, Convention};
use bikenet::routing::{self, ReachableClass};
use bikenet::sparse::SparseTransitionMatrix;
use bikenet::traffic::{self, FixedPointOptions};
use bikenet::{ctmc, metrics, NetworkParams, StateSpace};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn load(name: &str) -> (NetworkParams, StateSpace) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    let p = NetworkParams::from_path(path).unwrap();
    let s = StateSpace::enumerate(&p).unwrap();
    (p, s)
}

fn reachable_jump(p: &NetworkParams, s: &StateSpace) -> SparseTransitionMatrix {
    let class = ReachableClass::from_initial(s, p).unwrap();
    routing::jump_chain(s, p).unwrap().restrict(&class.states)
}

/// Fixed vector of a stochastic matrix by power iteration on the lazy
/// chain `(I + P) / 2`, scaled so the first entry is 1.
fn power_iteration(p: &SparseTransitionMatrix) -> Vec<f64> {
    let n = p.dim();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..200_000 {
        let xp = p.left_mul(&x);
        let next: Vec<f64> = x.iter().zip(&xp).map(|(a, b)| 0.5 * (a + b)).collect();
        let diff = next.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        x = next;
        if diff < 1e-16 {
            break;
        }
    }
    let first = x[0];
    x.iter().map(|v| v / first).collect()
}

#[test]
fn state_level_matches_power_iteration() {
    for name in ["t1.toml", "t2.toml"] {
        let (p, s) = load(name);
        let jump = reachable_jump(&p, &s);
        let sol = traffic::solve_state_level(&jump, &SolverOptions::default()).unwrap();
        let oracle = power_iteration(&jump);
        let err = metrics::max_pointwise(&sol.values, &oracle);
        assert!(err <= 1e-8, "{name}: {err:e}");
        assert!(sol.values.iter().all(|&v| v > 0.0));
        assert!(sol.residual <= 1e-10);
    }
}

#[test]
fn state_level_solution_does_not_depend_on_start() {
    let (p, s) = load("t2.toml");
    let jump = reachable_jump(&p, &s);
    let opts = SolverOptions::default();
    let a = traffic::solve_state_level(&jump, &opts).unwrap();
    let start: Vec<f64> = (0..jump.dim()).map(|i| 1.0 + (i % 7) as f64).collect();
    let b = traffic::solve_state_level_from(&jump, start, &opts).unwrap();
    assert!(metrics::max_pointwise(&a.values, &b.values) <= 1e-8);
}

/// Solves the node-level traffic equations with a dense system built
/// directly from the routing description.
fn dense_visit_ratios(p: &NetworkParams, beta: &[f64]) -> Vec<f64> {
    let n = p.stations;
    let roads: Vec<(usize, usize)> =
        (0..n).flat_map(|k| (0..n).filter(move |&l| l != k).map(move |l| (k, l))).collect();
    let r = roads.len();
    let size = n + 2 * r;
    let road1 = |k: usize, l: usize| n + roads.iter().position(|&x| x == (k, l)).unwrap();
    let road2 = |k: usize, l: usize| road1(k, l) + r;
    let mut routing = DMatrix::<f64>::zeros(size, size);
    for i in 0..n {
        for l in (0..n).filter(|&l| l != i) {
            routing[(i, road1(i, l))] = p.p_first[i][l];
        }
    }
    for &(k, l) in &roads {
        for from in [road1(k, l), road2(k, l)] {
            routing[(from, l)] += 1.0 - beta[l];
            for j in (0..n).filter(|&j| j != l) {
                routing[(from, road2(l, j))] += beta[l] * p.alpha[l][j];
            }
        }
    }
    // e (R - I) = 0 with e_0 = 1: transpose, replace the first row.
    let mut a = (routing - DMatrix::<f64>::identity(size, size)).transpose();
    let mut b = DVector::<f64>::zeros(size);
    a.row_mut(0).fill(0.0);
    a[(0, 0)] = 1.0;
    b[0] = 1.0;
    a.lu().solve(&b).unwrap().iter().copied().collect()
}

#[test]
fn node_level_matches_dense_solve() {
    for (name, beta) in [("t1.toml", vec![0.0, 0.0]), ("t2.toml", vec![0.2, 0.2]), ("t3.toml", vec![0.1, 0.3, 0.0])] {
        let (p, _) = load(name);
        let v = traffic::solve_node_level(&p, &beta).unwrap();
        let mut got = v.e_station.clone();
        got.extend(&v.e_road1);
        got.extend(&v.e_road2);
        let want = dense_visit_ratios(&p, &beta);
        assert!(metrics::max_pointwise(&got, &want) <= 1e-12, "{name}: {got:?} vs {want:?}");
    }
    let (p, _) = load("t2.toml");
    let v = traffic::solve_node_level(&p, &[0.2, 0.2]).unwrap();
    for r in 0..p.num_roads() {
        assert!((v.e_road2[r] - 0.25 * v.e_road1[r]).abs() < 1e-12);
    }
}

#[test]
fn fixed_point_is_symmetric_on_symmetric_network() {
    let p = NetworkParams::uniform(2, 2, 2, vec![1.0, 1.0]);
    let s = StateSpace::enumerate(&p).unwrap();
    let eval = productform::full_probability_evaluator(&s, &p, Convention::Standard);
    let out = traffic::fixed_point_beta(&p, eval, &FixedPointOptions::default()).unwrap();
    assert!(out.converged);
    assert!((out.ratios.beta[0] - out.ratios.beta[1]).abs() < 1e-12);
    assert!(out.ratios.beta[0] > 0.0 && out.ratios.beta[0] < 1.0);
}

#[test]
fn fixed_point_on_asymmetric_network_converges() {
    let (p, s) = load("t2.toml");
    let eval = productform::full_probability_evaluator(&s, &p, Convention::Standard);
    let out = traffic::fixed_point_beta(&p, eval, &FixedPointOptions::default()).unwrap();
    assert!(out.converged, "{out:?}");
    assert!(out.last_change <= 1e-8);
    let pi = ctmc::solve(&s, &p, &SolverOptions::default()).unwrap();
    for i in 0..2 {
        let full = metrics::problematic(&pi, &s, i).unwrap().full;
        assert!((0.0..1.0).contains(&full));
    }
}

#[test]
fn convolution_two_term_sum() {
    // One station and one road sharing a single bike.
    let (e_road, mu) = (0.7, 2.0);
    let g = productform::convolution_g(&[vec![1.0, 1.0], vec![1.0, e_road / mu]], 1);
    assert!((g - (1.0 + e_road / mu)).abs() < 1e-15);
}

#[test]
fn convolution_is_rejected_when_stations_can_fill() {
    let (p, _) = load("t2.toml");
    let v = traffic::solve_node_level(&p, &[0.0, 0.0]).unwrap();
    assert!(matches!(productform::normalize_convolution(&p, &v), Err(Error::Regime)));
}

#[test]
fn literal_and_standard_differ_on_full_regime() {
    let (p, s) = load("t2.toml");
    let v = traffic::solve_node_level(&p, &[0.3, 0.3]).unwrap();
    let (_, a) = productform::normalize_direct(&s, &v, &p, Convention::Standard).unwrap();
    let (_, b) = productform::normalize_direct(&s, &v, &p, Convention::Literal).unwrap();
    let tv = metrics::total_variation(&a.probs, &b.probs);
    // Reversed summation order as an independent check.
    let tv_rev = 0.5 * a.probs.iter().rev().zip(b.probs.iter().rev()).map(|(x, y)| (x - y).abs()).sum::<f64>();
    assert!(tv > 0.0);
    assert!((tv - tv_rev).abs() < 1e-14);
}

#[test]
fn t1_simulation_agrees_with_ctmc() {
    let (p, s) = load("t1.toml");
    let pi = ctmc::solve(&s, &p, &SolverOptions::default()).unwrap();
    let class = ReachableClass::from_initial(&s, &p).unwrap();
    let out = desim::simulate(&p, &s, &SimConfig::default()).unwrap();
    let hits = class
        .states
        .iter()
        .filter(|&&r| (out.state_estimates[r].mean - pi.probs[r]).abs() <= 3.0 * out.state_estimates[r].std_error)
        .count();
    assert!(hits as f64 >= 0.95 * class.len() as f64, "{hits}/{}", class.len());
    // Unreachable states are never visited.
    for r in (0..s.len()).filter(|&r| !class.contains(r)) {
        assert_eq!(out.distribution.probs[r], 0.0);
    }
}

#[test]
fn simulation_is_reproducible() {
    let (p, s) = load("t2.toml");
    let cfg = SimConfig { horizon: 500.0, warmup: 10.0, replications: 3, base_seed: 42, ..SimConfig::default() };
    let a = desim::simulate(&p, &s, &cfg).unwrap();
    let b = desim::simulate(&p, &s, &cfg).unwrap();
    assert_eq!(a, b);
    let c = desim::simulate(&p, &s, &SimConfig { base_seed: 43, ..cfg }).unwrap();
    assert_ne!(a.distribution.probs, c.distribution.probs);
}

fn small_params() -> impl Strategy<Value = NetworkParams> {
    (2usize..=3, 1u32..=2, 0u32..=2, prop::collection::vec(0.2f64..5.0, 3))
        .prop_map(|(n, c, extra, lambda)| NetworkParams::uniform(n, c, c + extra, lambda[..n].to_vec()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rank_unrank_is_a_bijection(p in small_params()) {
        let s = StateSpace::enumerate(&p).unwrap();
        prop_assert_eq!(s.len() as u128, StateSpace::count(&p));
        for r in 0..s.len() {
            let st = s.unrank(r).unwrap();
            prop_assert_eq!(st.total(), p.total_bikes() as u64);
            prop_assert_eq!(s.rank(&st).unwrap(), r);
        }
    }

    #[test]
    fn product_form_is_normalized_and_scale_free(p in small_params(), scale in 0.01f64..100.0, b in 0.0f64..0.9) {
        let s = StateSpace::enumerate(&p).unwrap();
        let v = traffic::solve_node_level(&p, &vec![b; p.stations]).unwrap();
        for conv in [Convention::Standard, Convention::Literal] {
            let (_, d) = productform::normalize_direct(&s, &v, &p, conv).unwrap();
            prop_assert!((d.total() - 1.0).abs() <= 1e-12);
            let (_, d2) = productform::normalize_direct(&s, &v.scaled(scale), &p, conv).unwrap();
            prop_assert!(metrics::max_pointwise(&d.probs, &d2.probs) <= 1e-12);
            let q = metrics::mean_queues(&d, &s).unwrap();
            prop_assert!((q.q0_direct - q.q0_complement).abs() <= 1e-12);
        }
    }

    #[test]
    fn ctmc_rows_balance(p in small_params()) {
        let s = StateSpace::enumerate(&p).unwrap();
        let g = ctmc::build_generator(&s, &p).unwrap();
        for r in g.matrix().row_sums() {
            prop_assert!(r.abs() <= 1e-12);
        }
    }
}
