//! Small dense semidefinite programming.
//!
//! A problem has a list of Hermitian PSD blocks `X_1, ..., X_B`, a linear
//! objective and scalar affine constraints. Every linear functional is
//! stored as a set of Hermitian coefficient matrices `A_b` and evaluates to
//! `<A, X> = sum_b Re Tr(A_b X_b)`. [`builder`] turns matrix-valued
//! constraints into these scalar functionals; [`solve`] runs a primal-dual
//! interior point method on them.

pub mod builder;
mod cholesky;
mod solver;

pub use builder::{Block, Lin, MatLin, SdpBuilder};
pub use cholesky::{cholesky_in_place, cholesky_solve};
pub use solver::{solve, IterateRecord, SolveOptions};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    /// `<A, X> >= rhs`
    Ge,
    /// `<A, X> <= rhs`
    Le,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub dim: usize,
    /// `false` restricts the block to real symmetric matrices.
    pub hermitian: bool,
}

/// One entry `A_b[row, col]` of a coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coeff {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: C64,
}

/// Linear functional `sum_b Re Tr(A_b X_b)` with both triangles of every
/// Hermitian `A_b` stored explicitly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineForm {
    pub entries: Vec<Coeff>,
}

impl AffineForm {
    /// Merge duplicate entries and drop exact zeros.
    pub fn canonical(&self) -> AffineForm {
        let mut acc: BTreeMap<(usize, usize, usize), C64> = BTreeMap::new();
        for e in &self.entries {
            *acc.entry((e.block, e.row, e.col)).or_insert(c64(0.0, 0.0)) += e.value;
        }
        AffineForm {
            entries: acc
                .into_iter()
                .filter(|(_, v)| v.re != 0.0 || v.im != 0.0)
                .map(|((block, row, col), value)| Coeff {
                    block,
                    row,
                    col,
                    value,
                })
                .collect(),
        }
    }

    pub fn evaluate(&self, x: &[CMatrix]) -> f64 {
        self.entries
            .iter()
            .map(|e| (e.value * x[e.block][(e.col, e.row)]).re)
            .sum()
    }

    /// Dense coefficient matrix of one block.
    pub fn block_matrix(&self, block: usize, dim: usize) -> CMatrix {
        let mut m = CMatrix::zeros(dim, dim);
        for e in self.entries.iter().filter(|e| e.block == block) {
            m[(e.row, e.col)] += e.value;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub form: AffineForm,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub blocks: Vec<BlockSpec>,
    pub sense: Sense,
    pub objective: AffineForm,
    pub objective_constant: f64,
    pub constraints: Vec<LinearConstraint>,
}

impl SdpProblem {
    pub fn n_equalities(&self) -> usize {
        self.constraints
            .iter()
            .filter(|c| c.relation == Relation::Eq)
            .count()
    }

    pub fn n_inequalities(&self) -> usize {
        self.constraints.len() - self.n_equalities()
    }

    /// Index ranges and Hermiticity of every coefficient matrix.
    pub fn validate(&self) -> Result<()> {
        let check = |form: &AffineForm, what: &str| -> Result<()> {
            let canon = form.canonical();
            let mut map: BTreeMap<(usize, usize, usize), C64> = BTreeMap::new();
            for e in &canon.entries {
                let spec = self.blocks.get(e.block).ok_or_else(|| {
                    Error::InvalidInput(format!("{what}: block {} does not exist", e.block))
                })?;
                if e.row >= spec.dim || e.col >= spec.dim {
                    return Err(Error::InvalidInput(format!(
                        "{what}: entry ({}, {}) outside block {} of dim {}",
                        e.row, e.col, e.block, spec.dim
                    )));
                }
                if !e.value.re.is_finite() || !e.value.im.is_finite() {
                    return Err(Error::InvalidInput(format!("{what}: non-finite coefficient")));
                }
                if !spec.hermitian && e.value.im != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "{what}: complex coefficient on real block {}",
                        e.block
                    )));
                }
                map.insert((e.block, e.row, e.col), e.value);
            }
            for (&(b, r, c), v) in &map {
                let w = map.get(&(b, c, r)).copied().unwrap_or(c64(0.0, 0.0));
                if (v - w.conj()).norm() > 1e-12 * v.norm().max(1.0) {
                    return Err(Error::Contract(format!(
                        "{what}: coefficient matrix of block {b} is not Hermitian at ({r}, {c})"
                    )));
                }
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for (k, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(Error::InvalidInput(format!("constraint {k}: non-finite rhs")));
            }
            check(&c.form, &format!("constraint {k}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// Iteration limit reached before the tolerances.
    MaxIterations,
    /// Steps collapsed before the tolerances were met.
    Stalled,
    /// Dual (or primal) iterates diverged: the problem looks infeasible.
    Infeasible,
    NumericalError,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Primal blocks, in problem order (slack variables excluded).
    pub blocks: Vec<CMatrix>,
    /// Dual multipliers, one per constraint.
    pub y: Vec<f64>,
    /// Objective at the primal iterate, in the problem's sense, constant included.
    pub primal_objective: f64,
    /// Dual objective, in the problem's sense, constant included.
    pub dual_objective: f64,
    /// Complementarity `<X, S>`.
    pub gap: f64,
    /// `max_k |<A_k, X> - b_k|` including inequality slacks.
    pub primal_residual: f64,
    /// Largest entry of `A^*(y) - S - C`.
    pub dual_residual: f64,
    pub iterations: usize,
    pub history: Vec<IterateRecord>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    /// Objective value or an error when the solve did not converge.
    pub fn value(&self) -> Result<f64> {
        match self.status {
            SdpStatus::Optimal => Ok(self.primal_objective),
            SdpStatus::Infeasible => Err(Error::Infeasible(
                "semidefinite program appears infeasible".into(),
            )),
            s => Err(Error::Numerical(format!(
                "semidefinite program did not converge ({s:?}, gap {:.3e}, residual {:.3e})",
                self.gap, self.primal_residual
            ))),
        }
    }
}
