//! Witness-based certification with the d=4 SIC states: the success
//! probability witness, its maximum over restricted outcome sets, and the
//! guessing probability compatible with an observed witness value.

use itertools::Itertools;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{identity, projector, CMatrix};
use crate::povm::{sic_states_d4, OperatorPovm, Povm};
use crate::sdp::builder::sum_matlin;
use crate::sdp::{solve, Lin, MatLin, SdpBuilder, Sense, SolveOptions};

pub const SIC_OUTCOMES: usize = 16;

/// Witness value of the ideal SIC measurement.
pub const IDEAL_WITNESS: f64 = 0.25;

fn sic_projectors() -> Vec<CMatrix> {
    sic_states_d4().states.iter().map(projector).collect()
}

/// `1/16 sum_x <psi_x|E_x|psi_x>` over the SIC states.
pub fn sic_witness_operators(povm: &OperatorPovm) -> Result<f64> {
    if povm.dim != 4 || povm.matrices.len() != SIC_OUTCOMES {
        return Err(Error::InvalidInput(format!(
            "witness needs 16 outcomes in dimension 4, got {} in dimension {}",
            povm.matrices.len(),
            povm.dim
        )));
    }
    let states = sic_states_d4();
    let total: f64 = states
        .states
        .iter()
        .zip(povm.matrices.iter())
        .map(|(psi, e)| psi.dotc(&(e * psi)).re)
        .sum();
    Ok(total / SIC_OUTCOMES as f64)
}

pub fn sic_witness(povm: &Povm) -> Result<f64> {
    sic_witness_operators(&povm.to_operator_povm())
}

/// Witness of the rank-1 POVM whose outcomes have probabilities `p[x]` on
/// the states `psi_x`, e.g. from simulation.
pub fn witness_from_probabilities(p: &[Vec<f64>]) -> Result<f64> {
    if p.len() != SIC_OUTCOMES || p.iter().any(|row| row.len() != SIC_OUTCOMES) {
        return Err(Error::InvalidInput(
            "witness needs a 16 x 16 table of probabilities".into(),
        ));
    }
    Ok((0..SIC_OUTCOMES).map(|x| p[x][x]).sum::<f64>() / SIC_OUTCOMES as f64)
}

/// Largest witness value of a measurement whose outcomes outside `subset`
/// never fire.
pub fn max_psuc_subset(subset: &[usize], opts: &SolveOptions) -> Result<f64> {
    if subset.is_empty() || subset.iter().any(|&x| x >= SIC_OUTCOMES) {
        return Err(Error::InvalidInput(format!("bad outcome subset {subset:?}")));
    }
    let rho = sic_projectors();
    let mut b = SdpBuilder::new();
    let blocks: Vec<_> = subset.iter().map(|_| b.add_block(4)).collect();
    let all: Vec<MatLin> = blocks.iter().map(|blk| blk.all()).collect();
    b.eq_hermitian(&sum_matlin(4, 4, all.iter()), &identity(4));
    let mut obj = Lin::zero();
    for (blk, &x) in blocks.iter().zip(subset.iter()) {
        obj.add_assign(&blk.trace_with(&rho[x]));
    }
    b.objective(Sense::Maximize, &(obj * (1.0 / SIC_OUTCOMES as f64)));
    solve(&b.build(), opts)?.value()
}

/// Largest witness value reachable with at most `n` outcomes.
///
/// The SIC set is covariant under the displacements, which act transitively
/// on the outcomes, so every subset has a translate containing outcome 0
/// and only those are solved.
pub fn max_psuc_n_outcomes(n: usize, opts: &SolveOptions) -> Result<f64> {
    if !(1..=SIC_OUTCOMES).contains(&n) {
        return Err(Error::InvalidInput(format!(
            "outcome count must lie in 1..=16, got {n}"
        )));
    }
    if n == SIC_OUTCOMES {
        return Ok(IDEAL_WITNESS);
    }
    if n == 1 {
        // E = I: every state is named correctly with probability 1/16
        return Ok(1.0 / SIC_OUTCOMES as f64);
    }
    let subsets: Vec<Vec<usize>> = (1..SIC_OUTCOMES)
        .combinations(n - 1)
        .map(|rest| std::iter::once(0).chain(rest).collect())
        .collect();
    let values = subsets
        .par_iter()
        .map(|s| max_psuc_subset(s, opts))
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinEntropy {
    pub witness: f64,
    pub p_guess: f64,
    pub h_min: f64,
}

/// Guessing probability of an adversary who picks the outcome `l` in
/// advance, subject to the observed witness, for the input state `I/4`.
///
/// Variables `M[l][b]`: one sub-measurement per guess `l`, each summing to
/// a multiple of the identity, the multiples summing to one.
pub fn min_entropy(witness: f64, opts: &SolveOptions) -> Result<MinEntropy> {
    if !(0.0..=IDEAL_WITNESS + 1e-12).contains(&witness) {
        return Err(Error::InvalidInput(format!(
            "witness must lie in [0, 0.25], got {witness}"
        )));
    }
    let n = SIC_OUTCOMES;
    let rho = sic_projectors();
    let mixed = identity(4) * crate::linalg::c64(0.25, 0.0);
    let mut b = SdpBuilder::new();
    let m: Vec<Vec<_>> = (0..n)
        .map(|_| (0..n).map(|_| b.add_block(4)).collect())
        .collect();
    let mut wit = Lin::zero();
    let mut norm = Lin::zero();
    let mut obj = Lin::zero();
    for (l, row) in m.iter().enumerate() {
        let all: Vec<MatLin> = row.iter().map(|blk| blk.all()).collect();
        let s = sum_matlin(4, 4, all.iter());
        b.proportional_to_identity(&s);
        norm.add_assign(&s.trace());
        for (x, blk) in row.iter().enumerate() {
            wit.add_assign(&blk.trace_with(&rho[x]));
        }
        obj.add_assign(&row[l].trace_with(&mixed));
    }
    b.ge(&(wit * (1.0 / n as f64)), witness);
    b.eq(&(norm * 0.25), 1.0);
    b.objective(Sense::Maximize, &obj);
    let p_guess = solve(&b.build(), opts)?.value()?.min(1.0);
    Ok(MinEntropy {
        witness,
        p_guess,
        h_min: -p_guess.log2(),
    })
}
