//! Exact CTMC generator and stationary solve.

use crate::error::{Error, Result};
use crate::linalg::{self, SolverOptions};
use crate::model::NetworkParams;
use crate::productform::{DistributionSource, StationaryDistribution};
use crate::routing::{for_each_event, ReachableClass};
use crate::sparse::{RowBuilder, SparseTransitionMatrix};
use crate::statespace::StateSpace;

/// CTMC generator: off-diagonals are transition rates, each diagonal is
/// minus its row's exit rate.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix(pub SparseTransitionMatrix);

impl GeneratorMatrix {
    pub fn matrix(&self) -> &SparseTransitionMatrix {
        &self.0
    }

    pub fn exit_rate(&self, r: usize) -> f64 {
        -self.0.get(r, r)
    }

    /// Off-diagonals divided by the exit rate.
    pub fn jump_chain(&self) -> Result<SparseTransitionMatrix> {
        let q = &self.0;
        let mut b = RowBuilder::new(q.dim());
        for r in 0..q.dim() {
            let out = self.exit_rate(r);
            if !(out > 0.0) {
                return Err(Error::AbsorbingState { rank: r });
            }
            for (c, v) in q.row(r) {
                if c != r {
                    b.add(c, v / out);
                }
            }
            b.finish_row();
        }
        Ok(b.build())
    }

    pub fn restrict(&self, class: &ReachableClass) -> GeneratorMatrix {
        GeneratorMatrix(self.0.restrict(&class.states))
    }
}

/// Builds the generator over the whole state space.
pub fn build_generator(space: &StateSpace, params: &NetworkParams) -> Result<GeneratorMatrix> {
    let mut b = RowBuilder::new(space.len());
    for (rank, comps) in space.iter().enumerate() {
        let mut out = 0.0;
        let mut err = None;
        for_each_event(params, comps, |ev| match space.rank_components(&ev.target) {
            Ok(c) => {
                out += ev.rate;
                b.add(c, ev.rate);
            }
            Err(e) => err = Some(e),
        });
        if let Some(e) = err {
            return Err(e);
        }
        b.add(rank, -out);
        b.finish_row();
    }
    Ok(GeneratorMatrix(b.build()))
}

/// Stationary distribution on the class reachable from the starting state,
/// embedded into the whole space (zero elsewhere).
pub fn stationary(
    gen: &GeneratorMatrix,
    space: &StateSpace,
    params: &NetworkParams,
    opts: &SolverOptions,
) -> Result<StationaryDistribution> {
    let class = ReachableClass::from_initial(space, params)?;
    let sub = gen.restrict(&class);
    let sol = linalg::stationary(sub.matrix(), opts)?;
    Ok(StationaryDistribution {
        source: DistributionSource::Ctmc,
        key: space.key(),
        probs: class.embed(&sol.pi, space.len()),
    })
}

/// Builds the generator and solves it.
pub fn solve(space: &StateSpace, params: &NetworkParams, opts: &SolverOptions) -> Result<StationaryDistribution> {
    let gen = build_generator(space, params)?;
    stationary(&gen, space, params, opts)
}
