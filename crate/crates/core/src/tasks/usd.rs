//! Unambiguous and minimum-error discrimination of four pure states with
//! equal priors.

use crate::error::{Error, Result};
use crate::linalg::{c64, hermitian_eigen_unchecked, identity, projector, CMatrix, Ket};
use crate::povm::{gram_det, Element, OperatorPovm, Povm, StateSet};
use crate::sdp::builder::sum_matlin;
use crate::sdp::{solve, Lin, MatLin, SdpBuilder, Sense, SolveOptions};

/// Below this Gram determinant the states count as linearly dependent.
pub const MIN_GRAM_DET: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct UsdResult {
    /// Weights `a_j` of the conclusive elements `a_j |Phi_j><Phi_j|`.
    pub coefficients: Vec<f64>,
    /// Discrimination kets: `Phi_j` is orthogonal to every `Psi_k`, `k != j`.
    pub kets: Vec<Ket>,
    pub p_incn: f64,
    /// `I - sum_j a_j |Phi_j><Phi_j|`.
    pub inconclusive: CMatrix,
    /// Rank-1 form: the conclusive elements followed by the eigen-pieces of
    /// the inconclusive element.
    pub povm: Povm,
    /// Outcome of every element of `povm`; outcome `n` is "inconclusive".
    pub grouping: Vec<usize>,
}

impl UsdResult {
    /// The five-outcome POVM, conclusive outcomes first.
    pub fn outcome_povm(&self) -> OperatorPovm {
        let mut matrices: Vec<CMatrix> = self
            .kets
            .iter()
            .zip(self.coefficients.iter())
            .map(|(k, &a)| projector(k) * c64(a, 0.0))
            .collect();
        matrices.push(self.inconclusive.clone());
        OperatorPovm {
            dim: self.inconclusive.nrows(),
            matrices,
        }
    }
}

fn check_independent(states: &StateSet) -> Result<()> {
    if states.len() != states.dim {
        return Err(Error::InvalidInput(format!(
            "expected {} states in dimension {}, got {}",
            states.dim,
            states.dim,
            states.len()
        )));
    }
    states.check_normalized()?;
    let det = gram_det(states)?;
    if det <= MIN_GRAM_DET {
        return Err(Error::InvalidInput(format!(
            "states are linearly dependent (Gram determinant {det:e}); unambiguous discrimination is impossible"
        )));
    }
    Ok(())
}

/// Unit ket orthogonal to every state but `j`, phase fixed so the first
/// entry above 1e-12 in modulus is real and positive.
pub fn discrimination_ket(states: &StateSet, j: usize) -> Ket {
    let d = states.dim;
    let others: Vec<&Ket> = states
        .states
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != j)
        .map(|(_, s)| s)
        .collect();
    // rows are <Psi_k|; the null vector is the eigenvector of M^dagger M
    // with the smallest eigenvalue
    let m = CMatrix::from_fn(others.len(), d, |r, c| others[r][c].conj());
    let eig = hermitian_eigen_unchecked(&(m.adjoint() * &m));
    let mut v: Ket = eig.vectors.column(0).into_owned();
    v /= c64(v.norm(), 0.0);
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-12).copied() {
        v *= z.conj() / c64(z.norm(), 0.0);
    }
    v
}

/// Optimal unambiguous discrimination of linearly independent states.
pub fn usd_optimize(states: &StateSet) -> Result<UsdResult> {
    check_independent(states)?;
    let d = states.dim;
    let n = states.len();
    let kets: Vec<Ket> = (0..n).map(|j| discrimination_ket(states, j)).collect();
    let overlaps: Vec<f64> = kets
        .iter()
        .zip(states.states.iter())
        .map(|(phi, psi)| psi.dotc(phi).norm_sqr())
        .collect();
    let projectors: Vec<CMatrix> = kets.iter().map(projector).collect();

    let mut b = SdpBuilder::new();
    let rest = b.add_block(d);
    let weights: Vec<_> = (0..n).map(|_| b.add_real_block(1)).collect();
    let mut total = rest.all();
    for (w, p) in weights.iter().zip(projectors.iter()) {
        let mut term = MatLin::zeros(d, d);
        for r in 0..d {
            for c in 0..d {
                term.entries[r * d + c] = w.entry(0, 0).scale(p[(r, c)]);
            }
        }
        total.add_assign(&term);
    }
    b.eq_hermitian(&total, &identity(d));
    let mut obj = Lin::zero();
    for (w, &o) in weights.iter().zip(overlaps.iter()) {
        obj.add_assign(&(w.entry(0, 0) * (o / n as f64)));
    }
    b.objective(Sense::Maximize, &obj);
    let sol = solve(&b.build(), &SolveOptions::default())?;
    sol.value()?;

    let mut coefficients: Vec<f64> = (0..n).map(|j| sol.blocks[1 + j][(0, 0)].re.max(0.0)).collect();
    let conclusive = |a: &[f64]| -> CMatrix {
        let mut s = CMatrix::zeros(d, d);
        for (p, &w) in projectors.iter().zip(a.iter()) {
            s += p * c64(w, 0.0);
        }
        s
    };
    // interior-point iterates sit slightly inside; pull back onto I - sum >= 0
    let top = hermitian_eigen_unchecked(&conclusive(&coefficients)).max();
    if top > 1.0 {
        for a in &mut coefficients {
            *a /= top;
        }
    }
    let inconclusive = identity(d) - conclusive(&coefficients);
    let success: f64 = coefficients
        .iter()
        .zip(overlaps.iter())
        .map(|(a, o)| a * o)
        .sum::<f64>()
        / n as f64;

    let mut elements: Vec<Element> = kets
        .iter()
        .zip(coefficients.iter())
        .map(|(k, &a)| Element {
            weight: a,
            ket: k.clone(),
        })
        .collect();
    let mut grouping: Vec<usize> = (0..n).collect();
    let eig = hermitian_eigen_unchecked(&inconclusive);
    let scale = eig.max().abs().max(1.0);
    for (k, &v) in eig.values.iter().enumerate() {
        if v > 1e-12 * scale {
            elements.push(Element {
                weight: v,
                ket: eig.vectors.column(k).into_owned(),
            });
            grouping.push(n);
        }
    }

    Ok(UsdResult {
        coefficients,
        kets,
        p_incn: 1.0 - success,
        inconclusive,
        povm: Povm { dim: d, elements },
        grouping,
    })
}

#[derive(Debug, Clone)]
pub struct MesdResult {
    pub p_err: f64,
    pub povm: OperatorPovm,
}

/// Minimum-error discrimination with equal priors.
pub fn mesd_min_error(states: &StateSet) -> Result<MesdResult> {
    states.check_normalized()?;
    let d = states.dim;
    let n = states.len();
    if n == 0 {
        return Err(Error::InvalidInput("no states given".into()));
    }
    let mut b = SdpBuilder::new();
    let blocks: Vec<_> = (0..n).map(|_| b.add_block(d)).collect();
    let parts: Vec<MatLin> = blocks.iter().map(|x| x.all()).collect();
    let total = sum_matlin(d, d, &parts);
    b.eq_hermitian(&total, &identity(d));
    let mut obj = Lin::zero();
    for (blk, psi) in blocks.iter().zip(states.states.iter()) {
        obj.add_assign(&(blk.trace_with(&projector(psi)) * (1.0 / n as f64)));
    }
    b.objective(Sense::Maximize, &obj);
    let sol = solve(&b.build(), &SolveOptions::default())?;
    let value = sol.value()?;
    Ok(MesdResult {
        p_err: 1.0 - value,
        povm: OperatorPovm {
            dim: d,
            matrices: sol.blocks.clone(),
        },
    })
}

/// Probability of a wrong conclusive answer, worst case over the inputs.
pub fn usd_error_probability(res: &UsdResult, states: &StateSet) -> f64 {
    let n = res.kets.len();
    let mut worst: f64 = 0.0;
    for (k, psi) in states.states.iter().enumerate() {
        for j in (0..n).filter(|&j| j != k) {
            let p = res.coefficients[j] * res.kets[j].dotc(psi).norm_sqr();
            worst = worst.max(p);
        }
    }
    worst
}
