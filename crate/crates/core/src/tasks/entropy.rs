//! Lower bounds on the conditional Shannon entropy of the outcome of a
//! witness-constrained measurement, via Gauss-Radau quadrature of the
//! logarithm and one SDP relaxation per node.

use std::f64::consts::{LN_2, PI, TAU};

use crate::error::{Error, Result};
use crate::linalg::{c64, hermitian_eigen_unchecked, identity, projector, CMatrix, C64, Ket};
use crate::povm::{sic_states_d4, StateSet};
use crate::sdp::builder::sum_matlin;
use crate::sdp::{solve, Lin, MatLin, SdpBuilder, Sense, SolveOptions};

use super::certification::{min_entropy, IDEAL_WITNESS};

/// Radau rule on `(0, 1]` with the fixed node at `t = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `tau_i = w_i / (t_i ln 2)`.
    pub fn taus(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(t, w)| w / (t * LN_2))
            .collect()
    }

    /// Constant term `sum tau_i` over the free nodes (all but `t = 1`).
    pub fn c_m(&self) -> f64 {
        let taus = self.taus();
        taus[..taus.len() - 1].iter().sum()
    }
}

/// Gauss-Radau nodes and weights on `[0, 1]`, exact up to degree `2m - 2`.
///
/// The free nodes are the Gauss-Jacobi nodes for the weight `(1 - x)` on
/// `[-1, 1]`, found from the eigenvalues of the Jacobi matrix.
pub fn gauss_radau(m: usize) -> Result<Quadrature> {
    if m < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 nodes, got {m}")));
    }
    let k = m - 1;
    let (a, b) = (1.0f64, 0.0f64);
    let mut j = CMatrix::zeros(k, k);
    for n in 0..k {
        let nf = n as f64;
        j[(n, n)] = c64((b * b - a * a) / ((2.0 * nf + a + b) * (2.0 * nf + a + b + 2.0)), 0.0);
        if n > 0 {
            let s = 2.0 * nf + a + b;
            let off = (4.0 * nf * (nf + a) * (nf + b) * (nf + a + b) / (s * s * (s + 1.0) * (s - 1.0))).sqrt();
            j[(n, n - 1)] = c64(off, 0.0);
            j[(n - 1, n)] = c64(off, 0.0);
        }
    }
    let eig = hermitian_eigen_unchecked(&j);
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for (idx, &x) in eig.values.iter().enumerate() {
        // total mass of (1 - x) on [-1, 1] is 2
        let w = 2.0 * eig.vectors[(0, idx)].norm_sqr() / (1.0 - x);
        nodes.push((x + 1.0) / 2.0);
        weights.push(w / 2.0);
    }
    nodes.push(1.0);
    weights.push(1.0 / (m * m) as f64);
    Ok(Quadrature { nodes, weights })
}

/// `D_jk = e^{i pi jk / d} sum_m w^{jm} |k + m><m|` with `w = e^{2 pi i / d}`.
pub fn wh_displacement(d: usize, j: usize, k: usize) -> CMatrix {
    let mut out = CMatrix::zeros(d, d);
    let pre = C64::from_polar(1.0, PI * (j * k) as f64 / d as f64);
    for m in 0..d {
        let phase = C64::from_polar(1.0, TAU * ((j * m) % d) as f64 / d as f64);
        out[((k + m) % d, m)] = pre * phase;
    }
    out
}

/// Tetrahedral qubit SIC states, the orbit of a fiducial under `D_jk`.
pub fn qubit_sic_states() -> StateSet {
    let theta = (1.0 / 3f64.sqrt()).acos();
    let fid = crate::linalg::ket_from(&[
        c64((theta / 2.0).cos(), 0.0),
        C64::from_polar((theta / 2.0).sin(), PI / 4.0),
    ]);
    let states: Vec<Ket> = (0..2)
        .flat_map(|j| (0..2).map(move |k| (j, k)))
        .map(|(j, k)| wh_displacement(2, j, k) * &fid)
        .collect();
    StateSet { dim: 2, states }
}

fn check_order(k: usize) -> Result<()> {
    if k != 1 {
        return Err(Error::InvalidInput(format!(
            "relaxation order 2k = {} is not supported; only k = 1",
            2 * k
        )));
    }
    Ok(())
}

/// `lhs - rhs` for expressions of equal shape.
fn difference(lhs: &MatLin, rhs: &MatLin) -> MatLin {
    let mut out = lhs.clone();
    out.add_assign(&rhs.scale(c64(-1.0, 0.0)));
    out
}

/// Per-node block `[[E, Z], [Z, Y]]` constraints: corner fixed, `Z`
/// Hermitian. Returns `(Z, Y)`.
fn node_block(b: &mut SdpBuilder, d: usize, corner: &MatLin) -> (MatLin, MatLin) {
    let g = b.add_block(2 * d);
    let diff = difference(&g.sub(0, 0, d, d), corner);
    b.eq_hermitian(&diff, &CMatrix::zeros(d, d));
    let z = g.sub(0, d, d, d);
    b.hermitian(&z);
    (z, g.sub(d, d, d, d))
}

/// Shannon bound for the d=4 SIC witness at relaxation order `2k`.
pub fn shannon_bound(witness: f64, m: usize, k: usize, opts: &SolveOptions) -> Result<f64> {
    if !(0.0..=IDEAL_WITNESS + 1e-12).contains(&witness) {
        return Err(Error::InvalidInput(format!(
            "witness must lie in [0, 0.25], got {witness}"
        )));
    }
    shannon_bound_covariant(&sic_states_d4().states[0], witness, m, k, opts)
}

/// Shannon bound for the orbit `D_jk |fid>` (state index `d j + k`).
///
/// The witness and the objective are covariant under the displacements, so
/// the optimum may be taken covariant: `E_b = D_b E_0 D_b^dagger` and the
/// node blocks for outcome `a` are translates of those for outcome 0. This
/// leaves one `E_0` and `d^2` blocks per node.
pub fn shannon_bound_covariant(
    fiducial: &Ket,
    witness: f64,
    m: usize,
    k: usize,
    opts: &SolveOptions,
) -> Result<f64> {
    check_order(k)?;
    let quad = gauss_radau(m)?;
    let taus = quad.taus();
    let d = fiducial.len();
    let n = d * d;
    let rho0 = projector(fiducial);
    let disp: Vec<CMatrix> = (0..n).map(|c| wh_displacement(d, c / d, c % d)).collect();

    let mut b = SdpBuilder::new();
    let e0 = b.add_block(d);
    // sum_c D_c X D_c^dagger = d Tr(X) I
    b.eq(&e0.all().trace(), 1.0 / d as f64);
    b.ge(&e0.trace_with(&rho0), witness);
    let corners: Vec<MatLin> = disp
        .iter()
        .map(|u| e0.all().sandwich(u, &u.adjoint()))
        .collect();

    let mut obj = Lin::real(quad.c_m());
    for i in 0..m - 1 {
        let t = quad.nodes[i];
        let mut zs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for corner in &corners {
            let (z, y) = node_block(&mut b, d, corner);
            zs.push(z);
            ys.push(y);
        }
        b.proportional_to_identity(&sum_matlin(d, d, zs.iter()));
        let y_sum = sum_matlin(d, d, ys.iter());
        b.proportional_to_identity(&y_sum);
        let mut f = zs[0].trace() * (2.0 / d as f64);
        f.add_assign(&(ys[0].trace() * ((1.0 - t) / d as f64)));
        f.add_assign(&(y_sum.trace() * (t / d as f64)));
        obj.add_assign(&(f * (taus[i] * n as f64)));
    }
    b.objective(Sense::Minimize, &obj);
    solve(&b.build(), opts)?.value()
}

/// Shannon bound for an arbitrary state set `rho_x = |psi_x><psi_x|`, one
/// outcome per state, witness `1/n sum_x Tr(rho_x E_x) >= W`, measured
/// state `I/d`. No symmetry is assumed.
pub fn shannon_bound_full(
    states: &StateSet,
    witness: f64,
    m: usize,
    k: usize,
    opts: &SolveOptions,
) -> Result<f64> {
    check_order(k)?;
    states.check_normalized()?;
    let quad = gauss_radau(m)?;
    let taus = quad.taus();
    let d = states.dim;
    let n = states.len();
    let rho: Vec<CMatrix> = states.states.iter().map(projector).collect();

    let mut b = SdpBuilder::new();
    let es: Vec<_> = (0..n).map(|_| b.add_block(d)).collect();
    let e_all: Vec<MatLin> = es.iter().map(|e| e.all()).collect();
    b.eq_hermitian(&sum_matlin(d, d, e_all.iter()), &identity(d));
    let mut wit = Lin::zero();
    for (e, r) in es.iter().zip(rho.iter()) {
        wit.add_assign(&e.trace_with(r));
    }
    b.ge(&(wit * (1.0 / n as f64)), witness);

    let mut obj = Lin::real(quad.c_m());
    for i in 0..m - 1 {
        let t = quad.nodes[i];
        for a in 0..n {
            let mut zs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for corner in &e_all {
                let (z, y) = node_block(&mut b, d, corner);
                zs.push(z);
                ys.push(y);
            }
            b.proportional_to_identity(&sum_matlin(d, d, zs.iter()));
            let y_sum = sum_matlin(d, d, ys.iter());
            b.proportional_to_identity(&y_sum);
            let mut f = zs[a].trace() * (2.0 / d as f64);
            f.add_assign(&(ys[a].trace() * ((1.0 - t) / d as f64)));
            f.add_assign(&(y_sum.trace() * (t / d as f64)));
            obj.add_assign(&(f * taus[i]));
        }
    }
    b.objective(Sense::Minimize, &obj);
    solve(&b.build(), opts)?.value()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyCertificate {
    pub witness: f64,
    pub h_min: f64,
    pub shannon_lb: f64,
    pub quadrature: Quadrature,
    pub taus: Vec<f64>,
    pub c_m: f64,
    /// Relaxation order `2k`.
    pub order: usize,
}

/// Both entropy bounds for the d=4 SIC witness.
pub fn entropy_certificate(
    witness: f64,
    m: usize,
    k: usize,
    opts: &SolveOptions,
) -> Result<EntropyCertificate> {
    let quadrature = gauss_radau(m)?;
    let h_min = min_entropy(witness, opts)?.h_min;
    let shannon_lb = shannon_bound(witness, m, k, opts)?;
    Ok(EntropyCertificate {
        witness,
        h_min,
        shannon_lb,
        taus: quadrature.taus(),
        c_m: quadrature.c_m(),
        quadrature,
        order: 2 * k,
    })
}
