//! Forward simulation of circuit programs, shot sampling, and recovery of
//! small phase deviations from observed statistics.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Binomial, Distribution};

use crate::compiler::{mzi_matrix, CircuitProgram, MziSetting};
use crate::error::{Error, Result};
use crate::linalg::{c64, C64, CMatrix, Ket};
use crate::povm::{OperatorPovm, StateSet};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Shifter {
    Alpha,
    Beta,
}

impl Shifter {
    pub fn as_str(&self) -> &'static str {
        match self {
            Shifter::Alpha => "alpha",
            Shifter::Beta => "beta",
        }
    }
}

/// Phase deviations keyed by (module, MZI, shifter), module and MZI
/// 1-based. Missing entries are zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseError {
    pub deviations: BTreeMap<(usize, usize, Shifter), f64>,
}

impl PhaseError {
    pub fn get(&self, module: usize, mzi: usize, s: Shifter) -> f64 {
        self.deviations
            .get(&(module, mzi, s))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, module: usize, mzi: usize, s: Shifter, v: f64) {
        self.deviations.insert((module, mzi, s), v);
    }

    pub fn max_abs(&self) -> f64 {
        self.deviations.values().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.deviations.values().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput("phase error has non-finite entries".into()))
        }
    }

    /// Dense vector in parameter order: module, MZI, then alpha before beta.
    pub fn to_vector(&self, program: &CircuitProgram) -> Vec<f64> {
        let mut v = Vec::with_capacity(program.n_phases());
        for i in 1..=program.modules.len() {
            for j in 1..=program.dim {
                v.push(self.get(i, j, Shifter::Alpha));
                v.push(self.get(i, j, Shifter::Beta));
            }
        }
        v
    }

    pub fn from_vector(program: &CircuitProgram, v: &[f64]) -> Self {
        let mut e = PhaseError::default();
        let mut it = v.iter();
        for i in 1..=program.modules.len() {
            for j in 1..=program.dim {
                e.set(i, j, Shifter::Alpha, *it.next().unwrap_or(&0.0));
                e.set(i, j, Shifter::Beta, *it.next().unwrap_or(&0.0));
            }
        }
        e
    }

    /// Uniformly random deviations in `[-max, max]` with one entry pinned at
    /// `+-max`, so `max_abs() == max` exactly.
    pub fn random(program: &CircuitProgram, max: f64, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = seeded(seed);
        let n = program.n_phases();
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-max..=max)).collect();
        if n > 0 {
            let k = rng.random_range(0..n);
            v[k] = if rng.random::<bool>() { max } else { -max };
        }
        Self::from_vector(program, &v)
    }
}

/// Program with `sign * err` added to every phase.
pub fn apply_phase_error(program: &CircuitProgram, err: &PhaseError, sign: f64) -> CircuitProgram {
    let mut out = program.clone();
    for (i0, m) in out.modules.iter_mut().enumerate() {
        for (j0, s) in m.iter_mut().enumerate() {
            let (i, j) = (i0 + 1, j0 + 1);
            *s = MziSetting {
                alpha: s.alpha + sign * err.get(i, j, Shifter::Alpha),
                beta: s.beta + sign * err.get(i, j, Shifter::Beta),
            };
        }
    }
    out
}

/// Corrected settings `phi_ideal - dphi`.
pub fn corrected_program(program: &CircuitProgram, estimate: &PhaseError) -> CircuitProgram {
    apply_phase_error(program, estimate, -1.0)
}

/// Observed counts or frequencies; `rows[i][j]` is outcome `i` on probe `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub outcomes: usize,
    pub probes: usize,
    pub rows: Vec<Vec<f64>>,
}

impl CountTable {
    pub fn zeros(outcomes: usize, probes: usize) -> Self {
        Self {
            outcomes,
            probes,
            rows: vec![vec![0.0; probes]; outcomes],
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.rows.len() != self.outcomes {
            return Err(Error::InvalidInput(format!(
                "count table declares {} outcomes but has {} rows",
                self.outcomes,
                self.rows.len()
            )));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != self.probes {
                return Err(Error::InvalidInput(format!(
                    "row {} has {} entries, expected {}",
                    i + 1,
                    r.len(),
                    self.probes
                )));
            }
            if r.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "row {} has negative or non-finite entries",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        self.rows.iter().map(|r| r[j]).sum()
    }

    /// Column-normalized copy. Errors on an all-zero column.
    pub fn frequencies(&self) -> Result<CountTable> {
        self.check()?;
        let mut out = self.clone();
        for j in 0..self.probes {
            let s = self.column_sum(j);
            if s <= 0.0 {
                return Err(Error::InvalidInput(format!("probe {} has no counts", j + 1)));
            }
            for r in out.rows.iter_mut() {
                r[j] /= s;
            }
        }
        Ok(out)
    }
}

fn apply_module(amp: &mut [C64], module: &[MziSetting], module_idx: usize, err: Option<&PhaseError>) {
    for (j0, s) in module.iter().enumerate() {
        let (da, db) = match err {
            Some(e) => (
                e.get(module_idx, j0 + 1, Shifter::Alpha),
                e.get(module_idx, j0 + 1, Shifter::Beta),
            ),
            None => (0.0, 0.0),
        };
        let m = mzi_matrix(s.alpha + da, s.beta + db);
        let (a, b) = (amp[j0], amp[j0 + 1]);
        amp[j0] = m[0][0] * a + m[0][1] * b;
        amp[j0 + 1] = m[1][0] * a + m[1][1] * b;
    }
}

fn simulate_unchecked(prog: &CircuitProgram, phi: &[C64], err: Option<&PhaseError>) -> Vec<f64> {
    let d = prog.dim;
    let mut amp = vec![c64(0.0, 0.0); d + 1];
    amp[..d].copy_from_slice(phi);
    let mut probs = Vec::with_capacity(prog.n_outcomes);
    for (i0, module) in prog.modules.iter().enumerate() {
        apply_module(&mut amp, module, i0 + 1, err);
        probs.push(amp[d].norm_sqr());
        amp[d] = c64(0.0, 0.0);
    }
    probs.push(amp[..d].iter().map(|z| z.norm_sqr()).sum());
    probs
}

/// Outcome probabilities for input `phi`.
pub fn simulate(prog: &CircuitProgram, phi: &Ket, err: Option<&PhaseError>) -> Result<Vec<f64>> {
    prog.check_shape()?;
    if phi.len() != prog.dim {
        return Err(Error::InvalidInput(format!(
            "input has dimension {}, program expects {}",
            phi.len(),
            prog.dim
        )));
    }
    if let Some(e) = err {
        e.check_finite()?;
    }
    let v: Vec<C64> = phi.iter().cloned().collect();
    Ok(simulate_unchecked(prog, &v, err))
}

/// Transfer rows of every outcome: outcome `i < n` has a single row, the
/// last outcome the `d x d` residual operator. `E_i = T_i^dagger T_i`.
pub fn outcome_transfers(prog: &CircuitProgram, err: Option<&PhaseError>) -> Result<Vec<CMatrix>> {
    prog.check_shape()?;
    let d = prog.dim;
    let n = prog.n_outcomes;
    let mut rows: Vec<CMatrix> = (0..n - 1).map(|_| CMatrix::zeros(1, d)).collect();
    let mut last = CMatrix::zeros(d, d);
    for k in 0..d {
        let mut amp = vec![c64(0.0, 0.0); d + 1];
        amp[k] = c64(1.0, 0.0);
        for (i0, module) in prog.modules.iter().enumerate() {
            apply_module(&mut amp, module, i0 + 1, err);
            rows[i0][(0, k)] = amp[d];
            amp[d] = c64(0.0, 0.0);
        }
        for r in 0..d {
            last[(r, k)] = amp[r];
        }
    }
    rows.push(last);
    Ok(rows)
}

/// The measurement a program implements.
pub fn effective_povm(prog: &CircuitProgram, err: Option<&PhaseError>) -> Result<OperatorPovm> {
    let transfers = outcome_transfers(prog, err)?;
    Ok(OperatorPovm {
        dim: prog.dim,
        matrices: transfers.iter().map(|t| t.adjoint() * t).collect(),
    })
}

/// Outcome probabilities for a density matrix input.
pub fn simulate_rho(prog: &CircuitProgram, rho: &CMatrix, err: Option<&PhaseError>) -> Result<Vec<f64>> {
    if rho.shape() != (prog.dim, prog.dim) {
        return Err(Error::InvalidInput("density matrix dimension mismatch".into()));
    }
    Ok(effective_povm(prog, err)?.probabilities_rho(rho))
}

/// Probability matrix `p[i][j]` for every probe.
pub fn probability_table(
    prog: &CircuitProgram,
    probes: &StateSet,
    err: Option<&PhaseError>,
) -> Result<CountTable> {
    let mut t = CountTable::zeros(prog.n_outcomes, probes.len());
    for (j, phi) in probes.states.iter().enumerate() {
        let p = simulate(prog, phi, err)?;
        for (i, v) in p.into_iter().enumerate() {
            t.rows[i][j] = v;
        }
    }
    Ok(t)
}

fn multinomial<R: rand::Rng + ?Sized>(probs: &[f64], shots: u64, rng: &mut R) -> Vec<u64> {
    let clean: Vec<f64> = probs.iter().map(|p| p.max(0.0)).collect();
    let mut remaining_mass: f64 = clean.iter().sum();
    let mut remaining = shots;
    let mut out = vec![0u64; probs.len()];
    for (k, p) in clean.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == clean.len() {
            out[k] = remaining;
            break;
        }
        let q = if remaining_mass > 0.0 {
            (p / remaining_mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let draw = Binomial::new(remaining, q)
            .map(|b| b.sample(rng))
            .unwrap_or(0);
        out[k] = draw;
        remaining -= draw;
        remaining_mass -= p;
    }
    out
}

/// Multinomial shot counts for every probe state.
pub fn sample_counts(
    prog: &CircuitProgram,
    states: &StateSet,
    shots_per_state: u64,
    seed: u64,
    err: Option<&PhaseError>,
) -> Result<CountTable> {
    if shots_per_state == 0 {
        return Err(Error::InvalidInput("shots per state must be at least 1".into()));
    }
    let probs = probability_table(prog, states, err)?;
    let mut rng = seeded(seed);
    let mut t = CountTable::zeros(prog.n_outcomes, states.len());
    for j in 0..states.len() {
        let column: Vec<f64> = probs.rows.iter().map(|r| r[j]).collect();
        let counts = multinomial(&column, shots_per_state, &mut rng);
        for (i, c) in counts.into_iter().enumerate() {
            t.rows[i][j] = c as f64;
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub fd_step: f64,
    pub lambda_init: f64,
    pub max_iterations: usize,
    pub tol: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            fd_step: 1e-6,
            lambda_init: 1e-3,
            max_iterations: 200,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    /// Estimated deviations `dphi`; the corrected settings are
    /// `phi_ideal - dphi`.
    pub estimate: PhaseError,
    /// Sum of squared residuals at the estimate.
    pub residual: f64,
    pub initial_residual: f64,
    /// Residual after every accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn residual_vector(points: &[(&CircuitProgram, CountTable)], probes: &[Vec<C64>], params: &[f64]) -> DVector<f64> {
    let err = PhaseError::from_vector(points[0].0, params);
    let n = points[0].0.n_outcomes;
    let block = n * probes.len();
    let mut r = DVector::zeros(block * points.len());
    for (q, (prog, observed)) in points.iter().enumerate() {
        for (j, phi) in probes.iter().enumerate() {
            let p = simulate_unchecked(prog, phi, Some(&err));
            for i in 0..n {
                r[q * block + j * n + i] = p[i] - observed.rows[i][j];
            }
        }
    }
    r
}

/// Fit phase deviations so the simulated statistics match `observed`
/// (damped least squares, central-difference Jacobian).
pub fn calibrate(
    prog: &CircuitProgram,
    probes: &StateSet,
    observed: &CountTable,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    calibrate_multi(&[(prog.clone(), observed.clone())], probes, opts)
}

/// Program with `offset` added to every `beta`.
pub fn dithered(prog: &CircuitProgram, offset: f64) -> CircuitProgram {
    let mut out = prog.clone();
    for s in out.modules.iter_mut().flatten() {
        s.beta += offset;
    }
    out
}

/// Fit one set of deviations shared by several operating points of the same
/// device, each observed on the same probes. At `beta = 0` the statistics
/// are even in each `beta` deviation, so a single table leaves its sign
/// open; adding a point from [`dithered`] settles it.
pub fn calibrate_multi(
    points: &[(CircuitProgram, CountTable)],
    probes: &StateSet,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    let Some((prog, _)) = points.first() else {
        return Err(Error::InvalidInput("no operating points given".into()));
    };
    let mut freqs = Vec::with_capacity(points.len());
    for (p, observed) in points {
        p.check_shape()?;
        observed.check()?;
        if p.dim != prog.dim || p.modules.len() != prog.modules.len() {
            return Err(Error::InvalidInput("operating points differ in shape".into()));
        }
        if observed.outcomes != p.n_outcomes || observed.probes != probes.len() {
            return Err(Error::InvalidInput(format!(
                "observed table is {}x{}, expected {}x{}",
                observed.outcomes,
                observed.probes,
                p.n_outcomes,
                probes.len()
            )));
        }
        freqs.push((p, observed.frequencies()?));
    }
    if probes.dim != prog.dim {
        return Err(Error::InvalidInput("probe dimension mismatch".into()));
    }
    let probe_vecs: Vec<Vec<C64>> = probes
        .states
        .iter()
        .map(|s| s.iter().cloned().collect())
        .collect();
    let np = prog.n_phases();
    let mut x = vec![0.0; np];
    let mut r = residual_vector(&freqs, &probe_vecs, &x);
    let mut cost = r.norm_squared();
    let initial_residual = cost;
    let mut history = vec![cost];
    let mut lambda = opts.lambda_init;
    let mut converged = cost <= opts.tol;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let m = r.len();
        let mut jac = DMatrix::<f64>::zeros(m, np);
        for k in 0..np {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += opts.fd_step;
            xm[k] -= opts.fd_step;
            let rp = residual_vector(&freqs, &probe_vecs, &xp);
            let rm = residual_vector(&freqs, &probe_vecs, &xm);
            jac.set_column(k, &((rp - rm) / (2.0 * opts.fd_step)));
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut accepted = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for k in 0..np {
                a[(k, k)] += lambda;
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&jtr)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = residual_vector(&freqs, &probe_vecs, &trial);
            let ct = rt.norm_squared();
            if ct < cost {
                let improvement = cost - ct;
                x = trial;
                r = rt;
                cost = ct;
                history.push(cost);
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if cost <= opts.tol || improvement <= opts.tol * 1e-3 * cost.max(opts.tol) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at any damping: local minimum
            converged = jtr.amax() <= 1e-10;
            break;
        }
    }

    Ok(CalibrationResult {
        estimate: PhaseError::from_vector(prog, &x),
        residual: cost,
        initial_residual,
        history,
        iterations,
        converged,
    })
}

/// Largest `|p_a - p_b|` over probes and outcomes for two programs.
pub fn born_distance(
    a: &CircuitProgram,
    b: &CircuitProgram,
    probes: &StateSet,
) -> Result<f64> {
    let ta = probability_table(a, probes, None)?;
    let tb = probability_table(b, probes, None)?;
    let mut worst: f64 = 0.0;
    for (ra, rb) in ta.rows.iter().zip(tb.rows.iter()) {
        for (x, y) in ra.iter().zip(rb.iter()) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile;
    use crate::linalg::{basis_ket, projector, random_ket};
    use crate::povm::{mub_probe_states_d4, random_rank1_povm, sic_povm_d4, Element, Povm};
    use crate::tomography::measurement_fidelity;
    use proptest::prelude::*;

    fn projective(d: usize) -> Povm {
        Povm {
            dim: d,
            elements: (0..d)
                .map(|k| Element { weight: 1.0, ket: basis_ket(d, k) })
                .collect(),
        }
    }

    #[test]
    fn qubit_projective_probabilities() {
        let (prog, _) = compile(&projective(2)).unwrap();
        let phi = crate::linalg::ket_from(&[c64(0.6, 0.0), c64(0.8, 0.0)]);
        let p = simulate(&prog, &phi, None).unwrap();
        assert!((p[0] - 0.36).abs() < 1e-12 && (p[1] - 0.64).abs() < 1e-12);
        assert!(simulate(&prog, &basis_ket(3, 0), None).is_err());
    }

    #[test]
    fn sic_program_on_mub_probes() {
        let p = sic_povm_d4();
        let (prog, _) = compile(&p).unwrap();
        let probes = mub_probe_states_d4();
        let mut worst: f64 = 0.0;
        for phi in &probes.states {
            let sim = simulate(&prog, phi, None).unwrap();
            for (a, b) in sim.iter().zip(p.probabilities(phi)) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst < 1e-9);
    }

    #[test]
    fn effective_povm_matches_target() {
        let p = random_rank1_povm(3, 5, 12).unwrap();
        let (prog, _) = compile(&p).unwrap();
        let eff = effective_povm(&prog, None).unwrap();
        for (a, b) in eff.matrices.iter().zip(p.operators()) {
            assert!(crate::linalg::max_abs(&(a - b)) < 1e-9);
        }
    }

    #[test]
    fn sampling_basics() {
        let (prog, _) = compile(&sic_povm_d4()).unwrap();
        let probes = mub_probe_states_d4();
        let one = sample_counts(&prog, &probes, 1, 5, None).unwrap();
        for j in 0..probes.len() {
            assert_eq!(one.column_sum(j), 1.0);
            assert_eq!(one.rows.iter().filter(|r| r[j] == 1.0).count(), 1);
        }
        let a = sample_counts(&prog, &probes, 100, 5, None).unwrap();
        let b = sample_counts(&prog, &probes, 100, 5, None).unwrap();
        assert_eq!(a, b);
        assert!(sample_counts(&prog, &probes, 0, 5, None).is_err());
    }

    #[test]
    fn large_sample_frequencies_within_five_sigma() {
        let (prog, _) = compile(&random_rank1_povm(4, 7, 2).unwrap()).unwrap();
        let probes = StateSet::new(4, vec![random_ket(4, &mut seeded(1))]).unwrap();
        let shots = 1_000_000u64;
        let counts = sample_counts(&prog, &probes, shots, 99, None).unwrap();
        let probs = probability_table(&prog, &probes, None).unwrap();
        for i in 0..7 {
            let p = probs.rows[i][0];
            let f = counts.rows[i][0] / shots as f64;
            let sigma = (p * (1.0 - p) / shots as f64).sqrt().max(1e-12);
            assert!((f - p).abs() <= 5.0 * sigma, "outcome {i}: f={f} p={p}");
        }
    }

    #[test]
    fn calibrate_zero_error_is_fixed_point() {
        let (prog, _) = compile(&projective(4)).unwrap();
        let probes = mub_probe_states_d4();
        let obs = probability_table(&prog, &probes, None).unwrap();
        let res = calibrate(&prog, &probes, &obs, &CalibrationOptions::default()).unwrap();
        assert!(res.estimate.max_abs() < 1e-6);
    }

    #[test]
    fn calibrate_recovers_injected_error_up_to_gauge() {
        let (prog, _) = compile(&projective(4)).unwrap();
        let probes = mub_probe_states_d4();
        let truth = PhaseError::random(&prog, 0.05, 7);
        let obs = probability_table(&prog, &probes, Some(&truth)).unwrap();
        let res = calibrate(&prog, &probes, &obs, &CalibrationOptions::default()).unwrap();
        for w in res.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(res.residual < 1e-12, "residual {}", res.residual);
        let fitted = apply_phase_error(&prog, &res.estimate, 1.0);
        let device = apply_phase_error(&prog, &truth, 1.0);
        assert!(born_distance(&fitted, &device, &probes).unwrap() < 1e-6);
    }

    #[test]
    fn single_table_leaves_beta_sign_open_and_dither_fixes_it() {
        let (prog, _) = compile(&projective(4)).unwrap();
        let probes = mub_probe_states_d4();
        let truth = PhaseError::random(&prog, 0.05, 7);
        let obs = probability_table(&prog, &probes, Some(&truth)).unwrap();
        let single = calibrate(&prog, &probes, &obs, &CalibrationOptions::default()).unwrap();
        let fitted = apply_phase_error(&prog, &single.estimate, 1.0);
        let device = apply_phase_error(&prog, &truth, 1.0);
        assert!(born_distance(&fitted, &device, &probes).unwrap() < 1e-6);
        let flipped = (1..=3)
            .flat_map(|i| (1..=4).map(move |j| (i, j)))
            .filter(|&(i, j)| {
                let (t, e) = (truth.get(i, j, Shifter::Beta), single.estimate.get(i, j, Shifter::Beta));
                t.abs() > 1e-3 && (t + e).abs() < 1e-4
            })
            .count();
        assert!(flipped > 0);

        let points: Vec<_> = [prog.clone(), dithered(&prog, 0.5)]
            .into_iter()
            .map(|p| {
                let o = probability_table(&p, &probes, Some(&truth)).unwrap();
                (p, o)
            })
            .collect();
        let res = calibrate_multi(&points, &probes, &CalibrationOptions::default()).unwrap();
        let corrected = apply_phase_error(&corrected_program(&prog, &res.estimate), &truth, 1.0);
        assert!(born_distance(&corrected, &prog, &probes).unwrap() < 1e-6);
    }

    #[test]
    fn calibration_improves_fidelity_under_shot_noise() {
        let target = projective(4);
        let (prog, _) = compile(&target).unwrap();
        let probes = mub_probe_states_d4();
        let truth = PhaseError::random(&prog, 0.05, 21);
        let points: Vec<_> = [prog.clone(), dithered(&prog, 0.5)]
            .into_iter()
            .enumerate()
            .map(|(q, p)| {
                let obs = sample_counts(&p, &probes, 100_000, 3 + q as u64, Some(&truth)).unwrap();
                (p, obs)
            })
            .collect();
        let res = calibrate_multi(&points, &probes, &CalibrationOptions::default()).unwrap();
        let ideal = target.to_operator_povm();
        let before = measurement_fidelity(&effective_povm(&prog, Some(&truth)).unwrap(), &ideal).unwrap();
        let corrected = corrected_program(&prog, &res.estimate);
        let after = measurement_fidelity(&effective_povm(&corrected, Some(&truth)).unwrap(), &ideal).unwrap();
        assert!(after > before, "before {before}, after {after}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn probabilities_conserve(seed in any::<u64>(), d in 1usize..=4, extra in 0usize..=12) {
            let n = (d + extra).min(d * d);
            let (prog, _) = compile(&random_rank1_povm(d, n, seed).unwrap()).unwrap();
            let phi = random_ket(d, &mut seeded(seed.wrapping_add(1)));
            let s: f64 = simulate(&prog, &phi, None).unwrap().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }

        #[test]
        fn simulation_is_linear_in_density(seed in any::<u64>(), w in 0.0f64..1.0) {
            let (prog, _) = compile(&random_rank1_povm(3, 6, seed).unwrap()).unwrap();
            let mut rng = seeded(seed ^ 77);
            let (a, b) = (random_ket(3, &mut rng), random_ket(3, &mut rng));
            let rho = projector(&a) * c64(w, 0.0) + projector(&b) * c64(1.0 - w, 0.0);
            let mixed = simulate_rho(&prog, &rho, None).unwrap();
            let pa = simulate(&prog, &a, None).unwrap();
            let pb = simulate(&prog, &b, None).unwrap();
            for i in 0..6 {
                prop_assert!((mixed[i] - (w * pa[i] + (1.0 - w) * pb[i])).abs() < 1e-9);
            }
        }
    }
}
