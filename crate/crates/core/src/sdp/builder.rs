//! Assembly of SDPs from matrix-valued affine expressions.
//!
//! Expressions are complex-valued: a [`Lin`] is `z(X) = sum w X_b[r, c] + k`
//! and a [`MatLin`] is a matrix of them. Constraints and objectives take
//! real parts, `Re z(X)`, which become coefficient matrices by
//!
//! ```text
//! Re(w X[r, c])  ->  A[c, r] += w / 2,  A[r, c] += conj(w) / 2
//! ```
//!
//! and `Im z = Re(-i z)`. Matrix equalities are scalarized in a fixed
//! order. For a Hermitian-valued expression `E = T` ([`SdpBuilder::eq_hermitian`])
//! the scalars are, row-major over the upper triangle,
//! `Re E[r, r]` for `r = c` and the pair `Re E[r, c]`, `Im E[r, c]` for
//! `r < c`. A general expression ([`SdpBuilder::eq_general`]) uses
//! `Re E[r, c]`, `Im E[r, c]` for every entry, row-major.
//! [`SdpBuilder::proportional_to_identity`] emits the Hermitian off-diagonal
//! pairs followed by `Re E[p, p] - Re E[0, 0]` for `p = 1..n`.

use std::ops::{Add, Mul, Neg, Sub};

use super::{AffineForm, BlockSpec, Coeff, LinearConstraint, Relation, SdpProblem, Sense};
use crate::linalg::{c64, CMatrix, C64};

/// Handle to a PSD block variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub id: usize,
    pub dim: usize,
}

impl Block {
    pub fn entry(&self, r: usize, c: usize) -> Lin {
        Lin::var(self.id, r, c)
    }

    pub fn all(&self) -> MatLin {
        self.sub(0, 0, self.dim, self.dim)
    }

    /// Sub-block of `rows x cols` starting at `(r0, c0)`.
    pub fn sub(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> MatLin {
        assert!(r0 + rows <= self.dim && c0 + cols <= self.dim, "sub-block out of range");
        let mut entries = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                entries.push(Lin::var(self.id, r0 + r, c0 + c));
            }
        }
        MatLin { rows, cols, entries }
    }

    /// `Re Tr(H X)` over the whole block.
    pub fn trace_with(&self, h: &CMatrix) -> Lin {
        self.all().trace_with(h)
    }
}

/// Complex affine functional `sum w X_b[r, c] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lin {
    pub terms: Vec<(usize, usize, usize, C64)>,
    pub constant: C64,
}

impl Lin {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(v: C64) -> Self {
        Self {
            terms: Vec::new(),
            constant: v,
        }
    }

    pub fn real(v: f64) -> Self {
        Self::constant(c64(v, 0.0))
    }

    pub fn var(block: usize, r: usize, c: usize) -> Self {
        Self {
            terms: vec![(block, r, c, c64(1.0, 0.0))],
            constant: c64(0.0, 0.0),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            terms: self.terms.iter().map(|&(b, r, c, w)| (b, r, c, w * s)).collect(),
            constant: self.constant * s,
        }
    }

    pub fn add_assign(&mut self, other: &Lin) {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
    }

    pub fn conj(&self) -> Self {
        // only meaningful for entries of Hermitian blocks: conj(X[r,c]) = X[c,r]
        Self {
            terms: self
                .terms
                .iter()
                .map(|&(b, r, c, w)| (b, c, r, w.conj()))
                .collect(),
            constant: self.constant.conj(),
        }
    }

    /// `Im z` written as `Re(-i z)`.
    pub fn im_part(&self) -> Self {
        self.scale(c64(0.0, -1.0))
    }

    /// `Re z` as a coefficient form plus its constant.
    fn real_form(&self, blocks: &[BlockSpec]) -> (AffineForm, f64) {
        let mut entries = Vec::with_capacity(2 * self.terms.len());
        for &(b, r, c, w) in &self.terms {
            let w = if blocks[b].hermitian { w } else { c64(w.re, 0.0) };
            entries.push(Coeff {
                block: b,
                row: c,
                col: r,
                value: w * 0.5,
            });
            entries.push(Coeff {
                block: b,
                row: r,
                col: c,
                value: w.conj() * 0.5,
            });
        }
        (AffineForm { entries }.canonical(), self.constant.re)
    }
}

impl Add for Lin {
    type Output = Lin;
    fn add(mut self, rhs: Lin) -> Lin {
        self.add_assign(&rhs);
        self
    }
}

impl Sub for Lin {
    type Output = Lin;
    fn sub(mut self, rhs: Lin) -> Lin {
        self.add_assign(&rhs.scale(c64(-1.0, 0.0)));
        self
    }
}

impl Neg for Lin {
    type Output = Lin;
    fn neg(self) -> Lin {
        self.scale(c64(-1.0, 0.0))
    }
}

impl Mul<f64> for Lin {
    type Output = Lin;
    fn mul(self, s: f64) -> Lin {
        self.scale(c64(s, 0.0))
    }
}

/// Matrix of [`Lin`] entries, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatLin {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Lin>,
}

impl MatLin {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Lin::zero(); rows * cols],
        }
    }

    pub fn constant(m: &CMatrix) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out.entries[r * m.ncols() + c] = Lin::constant(m[(r, c)]);
            }
        }
        out
    }

    pub fn at(&self, r: usize, c: usize) -> &Lin {
        &self.entries[r * self.cols + c]
    }

    /// `L * self * R`.
    pub fn sandwich(&self, l: &CMatrix, r: &CMatrix) -> MatLin {
        assert_eq!(l.ncols(), self.rows);
        assert_eq!(r.nrows(), self.cols);
        let (nr, nc) = (l.nrows(), r.ncols());
        let mut out = MatLin::zeros(nr, nc);
        for p in 0..nr {
            for q in 0..nc {
                let mut acc = Lin::zero();
                for a in 0..self.rows {
                    let lp = l[(p, a)];
                    if lp == c64(0.0, 0.0) {
                        continue;
                    }
                    for b in 0..self.cols {
                        let w = lp * r[(b, q)];
                        if w == c64(0.0, 0.0) {
                            continue;
                        }
                        acc.add_assign(&self.at(a, b).scale(w));
                    }
                }
                out.entries[p * nc + q] = acc;
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> MatLin {
        MatLin {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e.scale(s)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MatLin) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.entries.iter_mut().zip(other.entries.iter()) {
            a.add_assign(b);
        }
    }

    pub fn trace(&self) -> Lin {
        let mut acc = Lin::zero();
        for k in 0..self.rows.min(self.cols) {
            acc.add_assign(self.at(k, k));
        }
        acc
    }

    /// `Tr(H * self)`.
    pub fn trace_with(&self, h: &CMatrix) -> Lin {
        assert_eq!((h.nrows(), h.ncols()), (self.cols, self.rows));
        let mut acc = Lin::zero();
        for p in 0..self.cols {
            for q in 0..self.rows {
                let w = h[(p, q)];
                if w != c64(0.0, 0.0) {
                    acc.add_assign(&self.at(q, p).scale(w));
                }
            }
        }
        acc
    }
}

impl Add for MatLin {
    type Output = MatLin;
    fn add(mut self, rhs: MatLin) -> MatLin {
        self.add_assign(&rhs);
        self
    }
}

impl Sub for MatLin {
    type Output = MatLin;
    fn sub(mut self, rhs: MatLin) -> MatLin {
        self.add_assign(&rhs.scale(c64(-1.0, 0.0)));
        self
    }
}

/// Sum of matrix expressions of equal shape.
pub fn sum_matlin<'a, I: IntoIterator<Item = &'a MatLin>>(rows: usize, cols: usize, items: I) -> MatLin {
    let mut acc = MatLin::zeros(rows, cols);
    for m in items {
        acc.add_assign(m);
    }
    acc
}

#[derive(Debug, Clone)]
pub struct SdpBuilder {
    blocks: Vec<BlockSpec>,
    constraints: Vec<LinearConstraint>,
    objective: AffineForm,
    objective_constant: f64,
    sense: Sense,
}

impl Default for SdpBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl SdpBuilder {
    pub fn new() -> Self {
        Self {
            blocks: Vec::new(),
            constraints: Vec::new(),
            objective: AffineForm::default(),
            objective_constant: 0.0,
            sense: Sense::Maximize,
        }
    }

    pub fn add_block(&mut self, dim: usize) -> Block {
        self.add_block_with(dim, true)
    }

    pub fn add_real_block(&mut self, dim: usize) -> Block {
        self.add_block_with(dim, false)
    }

    fn add_block_with(&mut self, dim: usize, hermitian: bool) -> Block {
        self.blocks.push(BlockSpec { dim, hermitian });
        Block {
            id: self.blocks.len() - 1,
            dim,
        }
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn push(&mut self, lin: &Lin, relation: Relation, rhs: f64) {
        let (form, constant) = lin.real_form(&self.blocks);
        self.constraints.push(LinearConstraint {
            form,
            relation,
            rhs: rhs - constant,
        });
    }

    /// `Re lin = rhs`.
    pub fn eq(&mut self, lin: &Lin, rhs: f64) {
        self.push(lin, Relation::Eq, rhs);
    }

    /// `Re lin >= rhs`.
    pub fn ge(&mut self, lin: &Lin, rhs: f64) {
        self.push(lin, Relation::Ge, rhs);
    }

    /// `Re lin <= rhs`.
    pub fn le(&mut self, lin: &Lin, rhs: f64) {
        self.push(lin, Relation::Le, rhs);
    }

    /// `E = T` for Hermitian-valued `E` and Hermitian `T`.
    pub fn eq_hermitian(&mut self, e: &MatLin, target: &CMatrix) {
        assert_eq!(e.rows, e.cols);
        let n = e.rows;
        for r in 0..n {
            for c in r..n {
                let t = target[(r, c)];
                if r == c {
                    self.eq(e.at(r, c), t.re);
                } else {
                    self.eq(e.at(r, c), t.re);
                    self.eq(&e.at(r, c).im_part(), t.im);
                }
            }
        }
    }

    /// `E = T` entrywise, real and imaginary parts.
    pub fn eq_general(&mut self, e: &MatLin, target: &CMatrix) {
        for r in 0..e.rows {
            for c in 0..e.cols {
                let t = target[(r, c)];
                self.eq(e.at(r, c), t.re);
                self.eq(&e.at(r, c).im_part(), t.im);
            }
        }
    }

    /// `E = E^dagger` for a square expression built from block entries.
    pub fn hermitian(&mut self, e: &MatLin) {
        assert_eq!(e.rows, e.cols);
        let n = e.rows;
        for r in 0..n {
            for c in r..n {
                if r == c {
                    self.eq(&e.at(r, r).im_part(), 0.0);
                } else {
                    let diff = e.at(r, c).clone() - e.at(c, r).conj();
                    self.eq(&diff, 0.0);
                    self.eq(&diff.im_part(), 0.0);
                }
            }
        }
    }

    /// `E = (Tr E / n) I` for a Hermitian-valued expression.
    pub fn proportional_to_identity(&mut self, e: &MatLin) {
        assert_eq!(e.rows, e.cols);
        let n = e.rows;
        for r in 0..n {
            for c in (r + 1)..n {
                self.eq(e.at(r, c), 0.0);
                self.eq(&e.at(r, c).im_part(), 0.0);
            }
        }
        for p in 1..n {
            let diff = e.at(p, p).clone() - e.at(0, 0).clone();
            self.eq(&diff, 0.0);
        }
    }

    /// Objective `Re lin`.
    pub fn objective(&mut self, sense: Sense, lin: &Lin) {
        let (form, constant) = lin.real_form(&self.blocks);
        self.objective = form;
        self.objective_constant = constant;
        self.sense = sense;
    }

    pub fn build(self) -> SdpProblem {
        SdpProblem {
            blocks: self.blocks,
            sense: self.sense,
            objective: self.objective,
            objective_constant: self.objective_constant,
            constraints: self.constraints,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, random_hermitian};
    use crate::rng::seeded;

    fn random_hermitian_point(dim: usize, seed: u64) -> CMatrix {
        random_hermitian(dim, &mut seeded(seed))
    }

    #[test]
    fn real_part_functional_matches_direct_evaluation() {
        let mut b = SdpBuilder::new();
        let x = b.add_block(3);
        let w = c64(0.3, -1.7);
        b.eq(&x.entry(0, 2).scale(w), 0.0);
        b.eq(&x.entry(1, 1).scale(w).im_part(), 0.0);
        let p = b.build();
        p.validate().unwrap();
        let pt = random_hermitian_point(3, 1);
        let v0 = p.constraints[0].form.evaluate(std::slice::from_ref(&pt));
        assert!((v0 - (w * pt[(0, 2)]).re).abs() < 1e-14);
        let v1 = p.constraints[1].form.evaluate(std::slice::from_ref(&pt));
        assert!((v1 - (w * pt[(1, 1)]).im).abs() < 1e-14);
    }

    #[test]
    fn sandwich_and_trace_match_dense_products() {
        let mut rng = seeded(5);
        let l = CMatrix::from_fn(2, 3, |_, _| crate::linalg::random_complex_gaussian(&mut rng));
        let r = CMatrix::from_fn(3, 2, |_, _| crate::linalg::random_complex_gaussian(&mut rng));
        let h = random_hermitian(2, &mut rng);
        let mut b = SdpBuilder::new();
        let x = b.add_block(3);
        let expr = x.all().sandwich(&l, &r);
        let pt = random_hermitian_point(3, 9);
        let dense = &l * &pt * &r;
        let eval = |lin: &Lin| -> C64 {
            lin.terms
                .iter()
                .map(|&(_, rr, cc, w)| w * pt[(rr, cc)])
                .sum::<C64>()
                + lin.constant
        };
        for p in 0..2 {
            for q in 0..2 {
                assert!((eval(expr.at(p, q)) - dense[(p, q)]).norm() < 1e-12);
            }
        }
        assert!((eval(&expr.trace_with(&h)) - (&h * &dense).trace()).norm() < 1e-12);
        let _ = b.build();
    }

    #[test]
    fn scalarization_counts() {
        let mut b = SdpBuilder::new();
        let x = b.add_block(4);
        b.eq_hermitian(&x.all(), &CMatrix::identity(4, 4));
        assert_eq!(b.n_constraints(), 16);
        b.proportional_to_identity(&x.all());
        assert_eq!(b.n_constraints(), 31);
        b.hermitian(&x.sub(0, 0, 2, 2));
        assert_eq!(b.n_constraints(), 35);
        b.eq_general(&x.sub(0, 2, 2, 2), &CMatrix::zeros(2, 2));
        assert_eq!(b.n_constraints(), 43);
        let p = b.build();
        p.validate().unwrap();
        // identity satisfies the first 31
        let id = [CMatrix::identity(4, 4)];
        for c in &p.constraints[..31] {
            assert!((c.form.evaluate(&id) - c.rhs).abs() < 1e-14);
        }
        let m = p.constraints[0].form.block_matrix(0, 4);
        assert!(max_abs(&(m.adjoint() - &m)) < 1e-15);
    }
}
