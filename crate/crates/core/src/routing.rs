//! State-level transition structure.
//!
//! Every transition out of a state is one of three events:
//! a rental (station `i` to road `i -> l`, class 1), a return (road `k -> i`
//! to station `i`, when `n_i < K`), or a redirect (road `k -> i` to road
//! `i -> l`, class 2, when `n_i = K`). [`events`] lists them with both their
//! routing-probability weight and their rate. The literal routing matrix
//! sums probability weights; the jump chain normalizes rates by the total
//! exit rate.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NetworkParams;
use crate::sparse::{RowBuilder, SparseTransitionMatrix};
use crate::statespace::StateSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Rental,
    Return,
    Redirect,
}

/// A queue in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Node {
    Station(usize),
    Road { from: usize, to: usize, class: u8 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEvent {
    pub kind: EventKind,
    pub source: Node,
    pub destination: Node,
    /// Routing probability of this branch: `p_{i,l}`, `1`, or `alpha_{i,l}`.
    pub probability: f64,
    /// Rate of this branch in the CTMC.
    pub rate: f64,
    /// Component vector after the event.
    pub target: Vec<u32>,
}

/// Offsets into the flattened component vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub stations: usize,
    pub roads: usize,
}

impl Layout {
    pub fn of(params: &NetworkParams) -> Self {
        Layout { stations: params.stations, roads: params.num_roads() }
    }
    pub fn m1(&self, road: usize) -> usize {
        self.stations + road
    }
    pub fn m2(&self, road: usize) -> usize {
        self.stations + self.roads + road
    }
}

/// All enabled transitions out of the state `comps`.
pub fn events(params: &NetworkParams, comps: &[u32]) -> Vec<TransitionEvent> {
    let mut out = Vec::new();
    for_each_event(params, comps, |ev| out.push(ev));
    out
}

pub(crate) fn for_each_event<F: FnMut(TransitionEvent)>(params: &NetworkParams, comps: &[u32], mut f: F) {
    let n = params.stations;
    let lay = Layout::of(params);
    let k_cap = params.capacity;

    for i in 0..n {
        if comps[i] == 0 {
            continue;
        }
        for l in (0..n).filter(|&l| l != i) {
            let p = params.p_first[i][l];
            if p <= 0.0 {
                continue;
            }
            let road = params.road_index(i, l);
            let mut target = comps.to_vec();
            target[i] -= 1;
            target[lay.m1(road)] += 1;
            f(TransitionEvent {
                kind: EventKind::Rental,
                source: Node::Station(i),
                destination: Node::Road { from: i, to: l, class: 1 },
                probability: p,
                rate: params.lambda[i] * p,
                target,
            });
        }
    }

    for road in 0..lay.roads {
        let (k, i) = params.road_endpoints(road);
        for class in [1u8, 2] {
            let slot = if class == 1 { lay.m1(road) } else { lay.m2(road) };
            let count = comps[slot];
            if count == 0 {
                continue;
            }
            let per_bike = if class == 1 { params.mu[k][i] } else { params.xi[k][i] };
            let base = count as f64 * per_bike;
            let source = Node::Road { from: k, to: i, class };
            if comps[i] < k_cap {
                let mut target = comps.to_vec();
                target[slot] -= 1;
                target[i] += 1;
                f(TransitionEvent {
                    kind: EventKind::Return,
                    source,
                    destination: Node::Station(i),
                    probability: 1.0,
                    rate: base,
                    target,
                });
            } else {
                for l in (0..n).filter(|&l| l != i) {
                    let a = params.alpha[i][l];
                    if a <= 0.0 {
                        continue;
                    }
                    let next = params.road_index(i, l);
                    let mut target = comps.to_vec();
                    target[slot] -= 1;
                    target[lay.m2(next)] += 1;
                    f(TransitionEvent {
                        kind: EventKind::Redirect,
                        source,
                        destination: Node::Road { from: i, to: l, class: 2 },
                        probability: a,
                        rate: base * a,
                        target,
                    });
                }
            }
        }
    }
}

/// Total exit rate of a state:
/// `sum_i lambda_i 1{n_i >= 1} + sum m1 mu + sum m2 xi`.
pub fn exit_rate(params: &NetworkParams, comps: &[u32]) -> f64 {
    let mut total = 0.0;
    for_each_event(params, comps, |ev| total += ev.rate);
    total
}

/// Routing matrix with the three-case entries as written: each enabled
/// branch contributes its probability weight. Rows are not stochastic when
/// more than one node is busy.
pub fn literal_routing_entries(space: &StateSpace, params: &NetworkParams) -> Result<SparseTransitionMatrix> {
    let mut b = RowBuilder::new(space.len());
    for comps in space.iter() {
        let mut err = None;
        for_each_event(params, comps, |ev| match space.rank_components(&ev.target) {
            Ok(c) => b.add(c, ev.probability),
            Err(e) => err = Some(e),
        });
        if let Some(e) = err {
            return Err(e);
        }
        b.finish_row();
    }
    Ok(b.build())
}

/// Rate-normalized jump chain: `P(s -> s') = rate(s -> s') / exit_rate(s)`.
pub fn jump_chain(space: &StateSpace, params: &NetworkParams) -> Result<SparseTransitionMatrix> {
    let mut b = RowBuilder::new(space.len());
    let mut row: Vec<(usize, f64)> = Vec::new();
    for (rank, comps) in space.iter().enumerate() {
        row.clear();
        let mut err = None;
        for_each_event(params, comps, |ev| match space.rank_components(&ev.target) {
            Ok(c) => row.push((c, ev.rate)),
            Err(e) => err = Some(e),
        });
        if let Some(e) = err {
            return Err(e);
        }
        let total: f64 = row.iter().map(|&(_, r)| r).sum();
        if !(total > 0.0) {
            return Err(Error::AbsorbingState { rank });
        }
        for &(c, r) in &row {
            b.add(c, r / total);
        }
        b.finish_row();
    }
    Ok(b.build())
}

/// States reachable from the starting state, as a communicating class.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachableClass {
    /// Global ranks, ascending.
    pub states: Vec<usize>,
    /// Global rank -> local index, `usize::MAX` when unreachable.
    local: Vec<usize>,
    /// Local index of the starting state.
    pub initial: usize,
}

impl ReachableClass {
    /// Breadth-first search from the starting state over enabled events,
    /// then a reverse search to confirm every reached state leads back.
    pub fn from_initial(space: &StateSpace, params: &NetworkParams) -> Result<Self> {
        let start = space.initial_rank(params)?;
        let mut seen = vec![false; space.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut edges: Vec<(usize, usize)> = Vec::new();
        while let Some(r) = queue.pop_front() {
            let mut err = None;
            for_each_event(params, space.components(r), |ev| match space.rank_components(&ev.target) {
                Ok(c) => {
                    edges.push((r, c));
                    if !seen[c] {
                        seen[c] = true;
                        queue.push_back(c);
                    }
                }
                Err(e) => err = Some(e),
            });
            if let Some(e) = err {
                return Err(e);
            }
        }
        let states: Vec<usize> = (0..space.len()).filter(|&r| seen[r]).collect();
        let mut local = vec![usize::MAX; space.len()];
        for (i, &g) in states.iter().enumerate() {
            local[g] = i;
        }

        // reverse reachability to the start
        let mut rev: Vec<Vec<usize>> = vec![Vec::new(); states.len()];
        for &(a, b) in &edges {
            rev[local[b]].push(local[a]);
        }
        let mut back = vec![false; states.len()];
        let mut stack = vec![local[start]];
        back[local[start]] = true;
        while let Some(x) = stack.pop() {
            for &y in &rev[x] {
                if !back[y] {
                    back[y] = true;
                    stack.push(y);
                }
            }
        }
        if let Some(bad) = back.iter().position(|&b| !b) {
            return Err(Error::Reducible(format!(
                "state {} is reachable from the start but cannot return",
                states[bad]
            )));
        }
        Ok(ReachableClass { initial: local[start], states, local })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn contains(&self, rank: usize) -> bool {
        self.local.get(rank).is_some_and(|&l| l != usize::MAX)
    }

    pub fn local_index(&self, rank: usize) -> Option<usize> {
        self.local.get(rank).copied().filter(|&l| l != usize::MAX)
    }

    /// Scatters a vector over the class into a vector over the whole space.
    pub fn embed(&self, values: &[f64], space_len: usize) -> Vec<f64> {
        let mut out = vec![0.0; space_len];
        for (&g, &v) in self.states.iter().zip(values) {
            out[g] = v;
        }
        out
    }

    /// Gathers a whole-space vector onto the class.
    pub fn gather(&self, values: &[f64]) -> Vec<f64> {
        self.states.iter().map(|&g| values[g]).collect()
    }
}

/// Closed-form count of zero entries of the routing matrix over the
/// unconstrained box, `B^2 - NK(N-1) - 2N^2(N-1)CK - 2N^3(N-1)^2 C^2` with
/// `B` the box size. Diagnostic only; `None` on overflow.
pub fn closed_form_zero_bound(params: &NetworkParams) -> Option<i128> {
    let b = StateSpace::box_size(params)? as i128;
    let n = params.stations as i128;
    let k = params.capacity as i128;
    let c = params.bikes_per_station as i128;
    let sq = b.checked_mul(b)?;
    Some(sq - n * k * (n - 1) - 2 * n * n * (n - 1) * c * k - 2 * n * n * n * (n - 1) * (n - 1) * c * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::NetworkState;

    fn t1() -> NetworkParams {
        NetworkParams::uniform(2, 1, 3, vec![1.0, 1.0])
    }
    fn t2() -> NetworkParams {
        NetworkParams::uniform(2, 2, 2, vec![1.0, 2.0])
    }
    fn state(n: [u32; 2], m1: [u32; 2], m2: [u32; 2]) -> NetworkState {
        NetworkState { n: n.to_vec(), m1: m1.to_vec(), m2: m2.to_vec() }
    }

    #[test]
    fn t1_single_rental_from_loaded_station() {
        let p = t1();
        let space = StateSpace::enumerate(&p).unwrap();
        let s = space.rank(&state([2, 0], [0, 0], [0, 0])).unwrap();
        let to = space.rank(&state([1, 0], [1, 0], [0, 0])).unwrap();
        let lit = literal_routing_entries(&space, &p).unwrap();
        assert_eq!(lit.row(s).collect::<Vec<_>>(), vec![(to, 1.0)]);
        let jump = jump_chain(&space, &p).unwrap();
        assert_eq!(jump.row(s).collect::<Vec<_>>(), vec![(to, 1.0)]);
    }

    #[test]
    fn t1_two_equal_exits() {
        let p = t1();
        let space = StateSpace::enumerate(&p).unwrap();
        let s = space.rank(&state([1, 0], [1, 0], [0, 0])).unwrap();
        let rent = space.rank(&state([0, 0], [2, 0], [0, 0])).unwrap();
        let ret = space.rank(&state([1, 1], [0, 0], [0, 0])).unwrap();
        let jump = jump_chain(&space, &p).unwrap();
        assert_eq!(jump.get(s, rent), 0.5);
        assert_eq!(jump.get(s, ret), 0.5);
        assert_eq!(jump.row(s).count(), 2);
    }

    #[test]
    fn t2_forced_redirect() {
        let p = t2();
        let space = StateSpace::enumerate(&p).unwrap();
        let s = space.rank(&state([1, 2], [1, 0], [0, 0])).unwrap();
        let redirected = space.rank(&state([1, 2], [0, 0], [0, 1])).unwrap();
        let lit = literal_routing_entries(&space, &p).unwrap();
        assert_eq!(lit.get(s, redirected), 1.0);
        let evs = events(&p, space.components(s));
        assert!(evs.iter().any(|e| e.kind == EventKind::Redirect
            && e.source == Node::Road { from: 0, to: 1, class: 1 }
            && e.destination == Node::Road { from: 1, to: 0, class: 2 }));
    }

    #[test]
    fn literal_row_sums_count_busy_nodes() {
        let p = t2();
        let space = StateSpace::enumerate(&p).unwrap();
        let lit = literal_routing_entries(&space, &p).unwrap();
        let lay = Layout::of(&p);
        for (r, comps) in space.iter().enumerate() {
            // one unit per busy station and per nonempty (road, class)
            let busy_stations = comps[..2].iter().filter(|&&x| x >= 1).count();
            let busy_roads =
                (0..lay.roads).flat_map(|rd| [comps[lay.m1(rd)], comps[lay.m2(rd)]]).filter(|&x| x >= 1).count();
            let expected = (busy_stations + busy_roads) as f64;
            assert!((lit.row_sum(r) - expected).abs() < 1e-12, "state {comps:?}");
        }
    }

    #[test]
    fn jump_rows_are_stochastic() {
        for p in [t1(), t2()] {
            let space = StateSpace::enumerate(&p).unwrap();
            let jump = jump_chain(&space, &p).unwrap();
            for s in jump.row_sums() {
                assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn literal_and_jump_share_sparsity() {
        let p = t2();
        let space = StateSpace::enumerate(&p).unwrap();
        let lit = literal_routing_entries(&space, &p).unwrap();
        let jump = jump_chain(&space, &p).unwrap();
        for r in 0..space.len() {
            let a: Vec<usize> = lit.row(r).map(|(c, _)| c).collect();
            let b: Vec<usize> = jump.row(r).map(|(c, _)| c).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn no_full_regime_excludes_redirected_bikes() {
        let p = t1();
        let space = StateSpace::enumerate(&p).unwrap();
        let class = ReachableClass::from_initial(&space, &p).unwrap();
        // m2 == 0 on every reachable state: compositions of 2 into 4 parts
        assert_eq!(class.len(), 10);
        for &g in &class.states {
            assert_eq!(&space.components(g)[4..], &[0, 0]);
        }
    }

    #[test]
    fn t2_reachable_class_contains_redirects() {
        let p = t2();
        let space = StateSpace::enumerate(&p).unwrap();
        let class = ReachableClass::from_initial(&space, &p).unwrap();
        assert!(class.states.iter().any(|&g| space.components(g)[4..].iter().any(|&x| x > 0)));
        assert!(class.contains(space.initial_rank(&p).unwrap()));
    }

    #[test]
    fn closed_form_zero_bound_for_t1() {
        // 1296^2 - 2*3*1 - 2*4*1*1*3 - 2*8*1*1*1
        assert_eq!(closed_form_zero_bound(&t1()), Some(1296 * 1296 - 6 - 24 - 16));
    }
}
