//! Measurement tomography by iterative maximum likelihood, and the
//! measurement fidelity used to score reconstructions.

use crate::error::{Error, Result};
use crate::linalg::{
    self, c64, hermitian_eigen_unchecked, identity, max_abs, projector, trace_product, CMatrix,
};
use crate::povm::{OperatorPovm, StateSet};
use crate::simulator::CountTable;

/// Frequencies are floored here so the likelihood stays finite.
pub const FREQUENCY_FLOOR: f64 = 1e-12;
const PROBABILITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Stop once the relative change of the log-likelihood drops below this.
    pub rel_tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MleResult {
    pub povm: OperatorPovm,
    pub log_likelihood: f64,
    /// Log-likelihood after every iteration, starting with the initial guess.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Rank of the span of the probe projectors in operator space.
pub fn probe_operator_rank(probes: &StateSet) -> usize {
    let d = probes.dim;
    let cols: Vec<linalg::Ket> = probes
        .states
        .iter()
        .map(|k| {
            let p = projector(k);
            linalg::Ket::from_iterator(d * d, p.iter().cloned())
        })
        .collect();
    if cols.is_empty() {
        return 0;
    }
    linalg::numerical_rank(&CMatrix::from_columns(&cols), 1e-9)
}

fn log_likelihood(ops: &[CMatrix], rhos: &[CMatrix], f: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for (i, e) in ops.iter().enumerate() {
        for (j, rho) in rhos.iter().enumerate() {
            let p = trace_product(e, rho).max(PROBABILITY_FLOOR);
            acc += f[i][j] * p.ln();
        }
    }
    acc
}

fn inverse_sqrt_psd(m: &CMatrix) -> Result<CMatrix> {
    let eig = hermitian_eigen_unchecked(m);
    if eig.min() <= 0.0 {
        return Err(Error::Numerical(format!(
            "normalization operator is singular (min eigenvalue {:e})",
            eig.min()
        )));
    }
    Ok(eig.map(|v| 1.0 / v.sqrt()))
}

/// Rescale factors `A_i` so that `sum_i A_i A_i^dagger = I`; returns the
/// new factors and the elements `E_i = A_i A_i^dagger`.
fn normalize_factors(factors: Vec<CMatrix>) -> Result<(Vec<CMatrix>, Vec<CMatrix>)> {
    let d = factors[0].nrows();
    let mut g = CMatrix::zeros(d, d);
    for a in &factors {
        g += a * a.adjoint();
    }
    let gi = inverse_sqrt_psd(&g)?;
    let factors: Vec<CMatrix> = factors.iter().map(|a| &gi * a).collect();
    let ops = factors
        .iter()
        .map(|a| {
            let e = a * a.adjoint();
            (&e + e.adjoint()) * c64(0.5, 0.0)
        })
        .collect();
    Ok((factors, ops))
}

/// Reconstruct a POVM from counts on known probe states.
///
/// Each step applies the diluted update
/// `E_i <- G^{-1/2} T_i E_i T_i G^{-1/2}` with `T_i = (I + eps R_i)/(1 + eps)`,
/// `R_i = sum_j f_ij / p_ij rho_j` and `G = sum_i T_i E_i T_i`. The dilution
/// `eps` is halved until the log-likelihood does not decrease.
///
/// Elements are carried as factors `E_i = A_i A_i^dagger`, so the update is
/// `A_i <- G^{-1/2} T_i A_i`. Optima with vanishing probabilities sit on the
/// boundary, where these steps crawl; each step therefore also tries a
/// momentum extrapolation of the factors and keeps it when the likelihood
/// rises further. Both candidates are valid POVMs by construction.
pub fn mle_reconstruct(probes: &StateSet, counts: &CountTable, opts: &MleOptions) -> Result<MleResult> {
    counts.check()?;
    if counts.probes != probes.len() {
        return Err(Error::InvalidInput(format!(
            "count table has {} probes, probe set has {}",
            counts.probes,
            probes.len()
        )));
    }
    if counts.outcomes == 0 {
        return Err(Error::InvalidInput("count table has no outcomes".into()));
    }
    let d = probes.dim;
    if probe_operator_rank(probes) < d * d {
        return Err(Error::InvalidInput(
            "probe states are not informationally complete".into(),
        ));
    }
    let freq = counts.frequencies()?;
    let n = counts.outcomes;
    let m = counts.probes;
    let f: Vec<Vec<f64>> = freq
        .rows
        .iter()
        .map(|r| r.iter().map(|v| v.max(FREQUENCY_FLOOR)).collect())
        .collect();
    let rhos: Vec<CMatrix> = probes.states.iter().map(projector).collect();

    let totals: Vec<f64> = f.iter().map(|r| r.iter().sum()).collect();
    let grand: f64 = totals.iter().sum();
    let mut factors: Vec<CMatrix> = totals
        .iter()
        .map(|t| identity(d) * c64((t / grand).sqrt(), 0.0))
        .collect();
    let mut ops: Vec<CMatrix> = factors.iter().map(|a| a * a.adjoint()).collect();
    let mut previous = factors.clone();
    let mut ll = log_likelihood(&ops, &rhos, &f);
    let mut history = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut eps: f64 = 1e3;
    let mut momentum_age = 0usize;

    while iterations < opts.max_iterations {
        iterations += 1;
        let rs: Vec<CMatrix> = (0..n)
            .map(|i| {
                let mut r = CMatrix::zeros(d, d);
                for j in 0..m {
                    let p = trace_product(&ops[i], &rhos[j]).max(PROBABILITY_FLOOR);
                    r += &rhos[j] * c64(f[i][j] / p, 0.0);
                }
                r
            })
            .collect();

        let mut accepted = None;
        let mut trial_eps = (eps * 4.0).min(1e6);
        while trial_eps > 1e-12 {
            let stepped: Vec<CMatrix> = rs
                .iter()
                .zip(factors.iter())
                .map(|(r, a)| (identity(d) + r * c64(trial_eps, 0.0)) * a * c64(1.0 / (1.0 + trial_eps), 0.0))
                .collect();
            let (next_factors, next) = normalize_factors(stepped)?;
            let ll_next = log_likelihood(&next, &rhos, &f);
            if ll_next >= ll {
                accepted = Some((next_factors, next, ll_next));
                break;
            }
            trial_eps /= 2.0;
        }
        let Some((mut next_factors, mut next, mut ll_next)) = accepted else {
            converged = true;
            break;
        };
        eps = trial_eps;

        momentum_age += 1;
        let beta = (momentum_age as f64 - 1.0) / (momentum_age as f64 + 2.0);
        if beta > 0.0 {
            let extrapolated: Vec<CMatrix> = next_factors
                .iter()
                .zip(previous.iter())
                .map(|(a, b)| a + (a - b) * c64(beta, 0.0))
                .collect();
            match normalize_factors(extrapolated) {
                Ok((ef, eo)) if log_likelihood(&eo, &rhos, &f) > ll_next => {
                    ll_next = log_likelihood(&eo, &rhos, &f);
                    next_factors = ef;
                    next = eo;
                }
                _ => momentum_age = 0,
            }
        }
        previous = std::mem::replace(&mut factors, next_factors);
        let change = (ll_next - ll).abs() / ll.abs().max(1e-300);
        ops = next;
        ll = ll_next;
        history.push(ll);

        if iterations % 100 == 0 {
            let mut sum = CMatrix::zeros(d, d);
            for e in &ops {
                sum += e;
            }
            let dev = max_abs(&(sum - identity(d)));
            let min_eig = ops
                .iter()
                .map(|e| hermitian_eigen_unchecked(e).min())
                .fold(f64::INFINITY, f64::min);
            if dev > 1e-8 || min_eig < -1e-8 {
                return Err(Error::Numerical(format!(
                    "MLE iterate lost completeness/positivity (deviation {dev:e}, min eigenvalue {min_eig:e})"
                )));
            }
        }
        if change < opts.rel_tol {
            converged = true;
            break;
        }
    }

    Ok(MleResult {
        povm: OperatorPovm { dim: d, matrices: ops },
        log_likelihood: ll,
        history,
        iterations,
        converged,
    })
}

/// `F = (sum_i w_i sqrt(F_i))^2` with `F_i` the Uhlmann fidelity of the
/// trace-normalized elements and `w_i = sqrt(Tr E_i Tr E'_i) / d`. Elements
/// with zero trace contribute nothing.
pub fn measurement_fidelity(a: &OperatorPovm, b: &OperatorPovm) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            a.dim, b.dim
        )));
    }
    if a.n_outcomes() != b.n_outcomes() {
        return Err(Error::InvalidInput(format!(
            "outcome count mismatch: {} vs {}",
            a.n_outcomes(),
            b.n_outcomes()
        )));
    }
    let d = a.dim as f64;
    let mut acc = 0.0;
    for (ea, eb) in a.matrices.iter().zip(b.matrices.iter()) {
        let (ta, tb) = (linalg::trace_re(ea), linalg::trace_re(eb));
        if ta <= 0.0 || tb <= 0.0 {
            continue;
        }
        let fi = linalg::uhlmann_fidelity(
            &(ea * c64(1.0 / ta, 0.0)),
            &(eb * c64(1.0 / tb, 0.0)),
        )?;
        acc += (ta * tb).sqrt() / d * fi.clamp(0.0, 1.0).sqrt();
    }
    Ok((acc * acc).clamp(0.0, 1.0))
}
