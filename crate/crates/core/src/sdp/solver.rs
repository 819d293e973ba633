//! Infeasible-start primal-dual interior point method with the HKM search
//! direction and a Mehrotra predictor-corrector.
//!
//! Internally every problem is brought to the form
//!
//! ```text
//! maximize <C, X>  s.t.  <A_k, X> = b_k,  X >= 0
//! minimize b^T y   s.t.  S = A^*(y) - C >= 0
//! ```
//!
//! with one extra `1 x 1` block per inequality. The dual value is an upper
//! bound on the primal value whenever both iterates are feasible.

use nalgebra::{Cholesky, DMatrix};

use super::cholesky::{cholesky_in_place, cholesky_solve};
use super::{Relation, SdpProblem, SdpSolution, SdpStatus, Sense};
use crate::error::Result;
use crate::linalg::{c64, hermitian_eigen_unchecked, CMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Absolute tolerance on `<X, S>`.
    pub gap_abs_tol: f64,
    /// Relative tolerance on `<X, S> / (1 + |primal objective|)`.
    pub gap_rel_tol: f64,
    /// Largest admissible `|<A_k, X> - b_k|` and (relative) dual residual.
    pub feas_tol: f64,
    /// Fraction of the distance to the boundary taken per step.
    pub step_fraction: f64,
    /// Iterates with norms beyond this are declared infeasible.
    pub divergence_limit: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gap_abs_tol: 1e-8,
            gap_rel_tol: 1e-6,
            feas_tol: 1e-8,
            step_fraction: 0.95,
            divergence_limit: 1e12,
        }
    }
}

/// Diagnostics of one iterate, in the internal maximization form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateRecord {
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `<X, S>`, nonnegative for any interior iterate.
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `|r_p^T y| + |<R_d, X>|`: how far `dual - primal` may fall below
    /// `<X, S>` because of infeasibility.
    pub infeasibility_slack: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

type Entries = Vec<(usize, usize, C64)>;

struct Standard {
    dims: Vec<usize>,
    n_user: usize,
    c: Vec<CMatrix>,
    b: Vec<f64>,
    /// For every block, the constraints touching it and their entries.
    by_block: Vec<Vec<(usize, Entries)>>,
    sign: f64,
    constant: f64,
}

impl Standard {
    fn from_problem(p: &SdpProblem) -> Self {
        let n_user = p.blocks.len();
        let mut dims: Vec<usize> = p.blocks.iter().map(|b| b.dim).collect();
        let sign = match p.sense {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        };
        let mut c: Vec<CMatrix> = dims.iter().map(|&d| CMatrix::zeros(d, d)).collect();
        for e in &p.objective.canonical().entries {
            c[e.block][(e.row, e.col)] += e.value * sign;
        }
        let mut by_block: Vec<Vec<(usize, Entries)>> = vec![Vec::new(); n_user];
        let mut b = Vec::with_capacity(p.constraints.len());
        for (k, con) in p.constraints.iter().enumerate() {
            let canon = con.form.canonical();
            let mut per: Vec<(usize, Entries)> = Vec::new();
            for e in &canon.entries {
                match per.last_mut() {
                    Some((blk, ents)) if *blk == e.block => ents.push((e.row, e.col, e.value)),
                    _ => per.push((e.block, vec![(e.row, e.col, e.value)])),
                }
            }
            for (blk, ents) in per {
                by_block[blk].push((k, ents));
            }
            let slack = match con.relation {
                Relation::Eq => None,
                Relation::Ge => Some(-1.0),
                Relation::Le => Some(1.0),
            };
            if let Some(s) = slack {
                dims.push(1);
                c.push(CMatrix::zeros(1, 1));
                by_block.push(vec![(k, vec![(0, 0, c64(s, 0.0))])]);
            }
            b.push(con.rhs);
        }
        Self {
            dims,
            n_user,
            c,
            b,
            by_block,
            sign,
            constant: p.objective_constant,
        }
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    fn apply_a(&self, x: &[CMatrix]) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        for (blk, list) in self.by_block.iter().enumerate() {
            let xb = &x[blk];
            for (k, ents) in list {
                let mut s = 0.0;
                for &(r, c, v) in ents {
                    s += (v * xb[(c, r)]).re;
                }
                out[*k] += s;
            }
        }
        out
    }

    fn apply_at(&self, y: &[f64]) -> Vec<CMatrix> {
        self.dims
            .iter()
            .enumerate()
            .map(|(blk, &d)| {
                let mut m = CMatrix::zeros(d, d);
                for (k, ents) in &self.by_block[blk] {
                    let yk = y[*k];
                    if yk == 0.0 {
                        continue;
                    }
                    for &(r, c, v) in ents {
                        m[(r, c)] += v * yk;
                    }
                }
                m
            })
            .collect()
    }
}

fn inner(a: &[CMatrix], b: &[CMatrix]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let mut s = 0.0;
            for (u, v) in x.iter().zip(y.iter()) {
                s += u.re * v.re + u.im * v.im;
            }
            s
        })
        .sum()
}

fn herm(m: CMatrix) -> CMatrix {
    let t = m.adjoint();
    (m + t) * c64(0.5, 0.0)
}

fn max_abs_all(ms: &[CMatrix]) -> f64 {
    ms.iter()
        .flat_map(|m| m.iter())
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn inverse_pd(m: &CMatrix) -> Option<CMatrix> {
    if m.nrows() == 1 {
        let v = m[(0, 0)].re;
        return if v > 0.0 {
            Some(CMatrix::from_element(1, 1, c64(1.0 / v, 0.0)))
        } else {
            None
        };
    }
    let ch = Cholesky::new(m.clone())?;
    Some(herm(ch.inverse()))
}

/// Largest `t` with `X + t dX` PSD, capped at `cap`.
fn max_step(x: &CMatrix, dx: &CMatrix, cap: f64) -> f64 {
    if x.nrows() == 1 {
        let (v, dv) = (x[(0, 0)].re, dx[(0, 0)].re);
        return if dv < 0.0 { (-v / dv).min(cap) } else { cap };
    }
    let Some(ch) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = ch.l();
    let Some(a) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(bt) = l.solve_lower_triangular(&a.adjoint()) else {
        return 0.0;
    };
    let lam = hermitian_eigen_unchecked(&bt).min();
    if lam < 0.0 {
        (-1.0 / lam).min(cap)
    } else {
        cap
    }
}

fn step_length(x: &[CMatrix], dx: &[CMatrix], fraction: f64) -> f64 {
    let mut t = f64::INFINITY;
    for (a, b) in x.iter().zip(dx.iter()) {
        t = t.min(max_step(a, b, f64::INFINITY));
    }
    (fraction * t).min(1.0)
}

struct Schur {
    factor: DMatrix<f64>,
}

impl Schur {
    fn build(std: &Standard, x: &[CMatrix], sinv: &[CMatrix]) -> Option<Self> {
        let m = std.m();
        let mut mm = DMatrix::<f64>::zeros(m, m);
        for (blk, list) in std.by_block.iter().enumerate() {
            let xb = &x[blk];
            let si = &sinv[blk];
            let n = std.dims[blk];
            if n == 1 {
                let w = xb[(0, 0)].re * si[(0, 0)].re;
                for (pl, (l, el)) in list.iter().enumerate() {
                    let al: f64 = el.iter().map(|e| e.2.re).sum();
                    for (k, ek) in &list[..=pl] {
                        let ak: f64 = ek.iter().map(|e| e.2.re).sum();
                        let v = ak * al * w;
                        mm[(*k, *l)] += v;
                        if k != l {
                            mm[(*l, *k)] += v;
                        }
                    }
                }
                continue;
            }
            let mut f = CMatrix::zeros(n, n);
            for (pl, (l, el)) in list.iter().enumerate() {
                f.fill(c64(0.0, 0.0));
                for &(r, c, v) in el {
                    for q in 0..n {
                        let s = si[(c, q)] * v;
                        for p in 0..n {
                            f[(p, q)] += xb[(p, r)] * s;
                        }
                    }
                }
                for (k, ek) in &list[..=pl] {
                    let mut s = 0.0;
                    for &(r, c, v) in ek {
                        s += (v * f[(c, r)]).re;
                    }
                    mm[(*k, *l)] += s;
                    if k != l {
                        mm[(*l, *k)] += s;
                    }
                }
            }
        }
        let scale = (0..m).map(|i| mm[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut reg = 0.0;
        for _ in 0..8 {
            let mut trial = mm.clone();
            if reg > 0.0 {
                for i in 0..m {
                    trial[(i, i)] += reg * scale;
                }
            }
            if cholesky_in_place(&mut trial) {
                return Some(Self { factor: trial });
            }
            reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
        }
        None
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        cholesky_solve(&self.factor, rhs)
    }
}

fn initial_point(std: &Standard) -> (Vec<CMatrix>, Vec<CMatrix>) {
    let mut xs = Vec::with_capacity(std.dims.len());
    let mut ss = Vec::with_capacity(std.dims.len());
    for (blk, &n) in std.dims.iter().enumerate() {
        let nf = n as f64;
        let mut xi: f64 = 10f64.max(nf.sqrt());
        let mut eta: f64 = 10f64.max(nf.sqrt());
        for (k, ents) in &std.by_block[blk] {
            let norm: f64 = ents.iter().map(|e| e.2.norm_sqr()).sum::<f64>().sqrt();
            xi = xi.max(nf * (1.0 + std.b[*k].abs()) / (1.0 + norm));
            eta = eta.max(norm);
        }
        let cn = std.c[blk].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        eta = eta.max(cn);
        let eta = (1.0 + eta) / nf.sqrt();
        xs.push(CMatrix::identity(n, n) * c64(xi, 0.0));
        ss.push(CMatrix::identity(n, n) * c64(eta, 0.0));
    }
    (xs, ss)
}

struct State {
    x: Vec<CMatrix>,
    s: Vec<CMatrix>,
    y: Vec<f64>,
}

struct Metrics {
    pobj: f64,
    dobj: f64,
    gap: f64,
    pres: f64,
    dres: f64,
    rp: Vec<f64>,
    rd: Vec<CMatrix>,
    slack: f64,
}

fn metrics(std: &Standard, st: &State) -> Metrics {
    let ax = std.apply_a(&st.x);
    let rp: Vec<f64> = std.b.iter().zip(ax.iter()).map(|(b, a)| b - a).collect();
    let aty = std.apply_at(&st.y);
    let rd: Vec<CMatrix> = aty
        .iter()
        .zip(st.s.iter())
        .zip(std.c.iter())
        .map(|((a, s), c)| a - s - c)
        .collect();
    let pobj = inner(&std.c, &st.x);
    let dobj: f64 = std.b.iter().zip(st.y.iter()).map(|(b, y)| b * y).sum();
    let gap = inner(&st.x, &st.s);
    let pres = rp.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let dres = max_abs_all(&rd);
    let slack = rp.iter().zip(st.y.iter()).map(|(r, y)| r * y).sum::<f64>().abs()
        + inner(&rd, &st.x).abs();
    Metrics {
        pobj,
        dobj,
        gap,
        pres,
        dres,
        rp,
        rd,
        slack,
    }
}

/// Solve an SDP. Never fails on numerical trouble; the returned status says
/// how far the solve got and the best iterate is returned.
pub fn solve(problem: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let std = Standard::from_problem(problem);
    let m = std.m();
    let n_total: f64 = std.dims.iter().map(|&d| d as f64).sum();
    let c_scale = 1.0 + max_abs_all(&std.c);
    let (x, s) = initial_point(&std);
    let mut st = State {
        x,
        s,
        y: vec![0.0; m],
    };
    let mut history = Vec::new();
    let status;
    let mut best: Option<(f64, State)> = None;
    let mut met_tolerance = false;
    let mut iterations = 0;

    let merit = |mt: &Metrics| -> f64 {
        let rel = mt.gap / (1.0 + mt.pobj.abs());
        (mt.pres / opts.feas_tol)
            .max(mt.dres / (opts.feas_tol * c_scale))
            .max((mt.gap / opts.gap_abs_tol).min(rel / opts.gap_rel_tol))
    };

    loop {
        let mt = metrics(&std, &st);
        let score = merit(&mt);
        let converged = score <= 1.0;
        if converged {
            met_tolerance = true;
        }
        if best.as_ref().is_none_or(|(b, _)| score <= *b) {
            best = Some((
                score,
                State {
                    x: st.x.clone(),
                    s: st.s.clone(),
                    y: st.y.clone(),
                },
            ));
        }
        if converged {
            let polished = mt.gap <= 1e-2 * opts.gap_abs_tol
                || mt.gap / (1.0 + mt.pobj.abs()) <= 1e-4 * opts.gap_rel_tol;
            if polished {
                status = SdpStatus::Optimal;
                break;
            }
        }
        if iterations >= opts.max_iterations {
            status = if met_tolerance {
                SdpStatus::Optimal
            } else {
                SdpStatus::MaxIterations
            };
            break;
        }
        let ynorm = st.y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if ynorm > opts.divergence_limit || max_abs_all(&st.x) > opts.divergence_limit {
            status = SdpStatus::Infeasible;
            break;
        }
        iterations += 1;

        let sinv: Option<Vec<CMatrix>> = st.s.iter().map(inverse_pd).collect();
        let Some(sinv) = sinv else {
            status = if met_tolerance { SdpStatus::Optimal } else { SdpStatus::NumericalError };
            break;
        };
        let Some(schur) = Schur::build(&std, &st.x, &sinv) else {
            status = if met_tolerance { SdpStatus::Optimal } else { SdpStatus::NumericalError };
            break;
        };
        let mu = mt.gap / n_total;

        // X R_d S^{-1}, shared by both solves
        let xrs: Vec<CMatrix> = st
            .x
            .iter()
            .zip(mt.rd.iter())
            .zip(sinv.iter())
            .map(|((x, r), si)| x * r * si)
            .collect();
        let a_xrs = std.apply_a(&xrs);

        let direction = |sigma_mu: f64, corr: Option<&[CMatrix]>| -> (Vec<CMatrix>, Vec<f64>, Vec<CMatrix>) {
            // G = sigma mu S^{-1} - X - corr
            let g: Vec<CMatrix> = sinv
                .iter()
                .zip(st.x.iter())
                .enumerate()
                .map(|(i, (si, x))| {
                    let mut t = si * c64(sigma_mu, 0.0) - x;
                    if let Some(cs) = corr {
                        t -= &cs[i];
                    }
                    t
                })
                .collect();
            let ag = std.apply_a(&g);
            let rhs: Vec<f64> = (0..m).map(|k| ag[k] - a_xrs[k] - mt.rp[k]).collect();
            let dy = schur.solve(&rhs);
            let aty = std.apply_at(&dy);
            let ds: Vec<CMatrix> = aty.iter().zip(mt.rd.iter()).map(|(a, r)| a + r).collect();
            let dx: Vec<CMatrix> = g
                .iter()
                .zip(st.x.iter())
                .zip(ds.iter().zip(sinv.iter()))
                .map(|((g, x), (d, si))| g - herm(x * d * si))
                .collect();
            (dx, dy, ds)
        };

        let (dx_a, _dy_a, ds_a) = direction(0.0, None);
        let ap = step_length(&st.x, &dx_a, 1.0);
        let ad = step_length(&st.s, &ds_a, 1.0);
        let x_aff: Vec<CMatrix> = st.x.iter().zip(dx_a.iter()).map(|(x, d)| x + d * c64(ap, 0.0)).collect();
        let s_aff: Vec<CMatrix> = st.s.iter().zip(ds_a.iter()).map(|(s, d)| s + d * c64(ad, 0.0)).collect();
        let mu_aff = inner(&x_aff, &s_aff) / n_total;
        let sigma = if mu > 0.0 {
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };
        let corr: Vec<CMatrix> = dx_a
            .iter()
            .zip(ds_a.iter())
            .zip(sinv.iter())
            .map(|((dx, ds), si)| dx * ds * si)
            .collect();
        let (dx, dy, ds) = direction(sigma * mu, Some(&corr));
        let ap = step_length(&st.x, &dx, opts.step_fraction);
        let ad = step_length(&st.s, &ds, opts.step_fraction);

        for (x, d) in st.x.iter_mut().zip(dx.iter()) {
            *x = herm(&*x + d * c64(ap, 0.0));
        }
        for (s, d) in st.s.iter_mut().zip(ds.iter()) {
            *s = herm(&*s + d * c64(ad, 0.0));
        }
        for (y, d) in st.y.iter_mut().zip(dy.iter()) {
            *y += ad * d;
        }

        history.push(IterateRecord {
            primal_objective: mt.pobj,
            dual_objective: mt.dobj,
            gap: mt.gap,
            primal_residual: mt.pres,
            dual_residual: mt.dres,
            infeasibility_slack: mt.slack,
            step_primal: ap,
            step_dual: ad,
        });

        if ap < 1e-10 && ad < 1e-10 {
            status = if met_tolerance { SdpStatus::Optimal } else { SdpStatus::Stalled };
            break;
        }
    }

    let final_state = match (status, best) {
        (SdpStatus::Infeasible, _) | (_, None) => st,
        (_, Some((_, b))) => b,
    };
    let mt = metrics(&std, &final_state);
    let blocks = final_state.x[..std.n_user].to_vec();
    Ok(SdpSolution {
        status,
        blocks,
        y: final_state.y.clone(),
        primal_objective: std.sign * mt.pobj + std.constant,
        dual_objective: std.sign * mt.dobj + std.constant,
        gap: mt.gap,
        primal_residual: mt.pres,
        dual_residual: mt.dres / c_scale,
        iterations,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_abs, min_eigenvalue, random_hermitian};
    use crate::rng::seeded;
    use crate::sdp::builder::{Lin, SdpBuilder};

    fn solve_default(p: &SdpProblem) -> SdpSolution {
        solve(p, &SolveOptions::default()).unwrap()
    }

    #[test]
    fn max_trace_below_identity() {
        // maximize Tr X s.t. X + Y = I, X, Y >= 0
        let mut b = SdpBuilder::new();
        let x = b.add_block(2);
        let y = b.add_block(2);
        b.eq_hermitian(&(x.all() + y.all()), &identity(2));
        b.objective(Sense::Maximize, &x.all().trace());
        let sol = solve_default(&b.build());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_objective - 2.0).abs() < 1e-8, "{}", sol.primal_objective);
        assert!(sol.primal_residual <= 1e-7);
    }

    #[test]
    fn minimize_with_inequality() {
        // minimize x00 s.t. x00 >= 0.3 on a 1x1 block, plus x00 <= 5
        let mut b = SdpBuilder::new();
        let x = b.add_real_block(1);
        b.ge(&x.entry(0, 0), 0.3);
        b.le(&x.entry(0, 0), 5.0);
        b.objective(Sense::Minimize, &(x.entry(0, 0) + Lin::real(1.0)));
        let sol = solve_default(&b.build());
        assert!((sol.primal_objective - 1.3).abs() < 1e-8);
    }

    #[test]
    fn smallest_eigenvalue_as_sdp() {
        // min Tr(H X) s.t. Tr X = 1 gives lambda_min(H)
        let h = random_hermitian(5, &mut seeded(4));
        let mut b = SdpBuilder::new();
        let x = b.add_block(5);
        b.eq(&x.all().trace(), 1.0);
        b.objective(Sense::Minimize, &x.trace_with(&h));
        let sol = solve_default(&b.build());
        let want = min_eigenvalue(&h).unwrap();
        assert!((sol.primal_objective - want).abs() < 1e-7);
        assert!((sol.dual_objective - want).abs() < 1e-7);
        assert!(min_eigenvalue(&sol.blocks[0]).unwrap() > -1e-9);
        assert!(max_abs(&(sol.blocks[0].adjoint() - &sol.blocks[0])) < 1e-12);
    }

    #[test]
    fn weak_duality_along_the_path() {
        let h = random_hermitian(4, &mut seeded(8));
        let mut b = SdpBuilder::new();
        let x = b.add_block(4);
        let z = b.add_block(4);
        b.eq(&x.all().trace(), 1.0);
        b.eq_hermitian(&(x.all() + z.all()), &(identity(4) * c64(0.6, 0.0)));
        b.objective(Sense::Maximize, &x.trace_with(&h));
        let sol = solve_default(&b.build());
        assert!(sol.is_optimal());
        for r in &sol.history {
            assert!(r.gap >= 0.0);
            assert!(r.dual_objective - r.primal_objective >= -r.infeasibility_slack - 1e-9);
        }
        assert!(sol.dual_objective >= sol.primal_objective - 1e-9);
    }

    #[test]
    fn infeasible_problem_is_flagged() {
        // Tr X = -1 with X >= 0
        let mut b = SdpBuilder::new();
        let x = b.add_block(2);
        b.eq(&x.all().trace(), -1.0);
        b.objective(Sense::Maximize, &x.entry(0, 0));
        let sol = solve_default(&b.build());
        assert_ne!(sol.status, SdpStatus::Optimal);
        assert!(sol.value().is_err());
    }
}
