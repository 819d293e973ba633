//! Lowering of a rank-1 POVM to a cascade of two-mode interferometer
//! settings.
//!
//! Each of the `n - 1` modules acts on the `d` system modes plus one ancilla
//! mode (index `d`). MZI `j` of a module (1-based) couples modes `j-1` and
//! `j`, so MZI `d` couples the last system mode to the ancilla. Outcome `i`
//! is detected at the ancilla after module `i`; outcome `n` is whatever
//! amplitude is left in the system modes after the last module.
//!
//! A single MZI with phases `(alpha, beta)` has transfer matrix
//!
//! ```text
//! C = i e^{i beta/2} [ e^{i alpha} sin(beta/2)   cos(beta/2)  ]
//!                    [ e^{i alpha} cos(beta/2)  -sin(beta/2)  ]
//! ```
//!
//! so `beta = 0` is a full swap (`c00 = 0`) and `beta = pi` is the
//! pass-through `diag(-e^{i alpha}, 1)`.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::linalg::{self, c64, C64, CMatrix, Ket, DEFAULT_RANK_TOL};
use crate::povm::{validate_povm, Povm};

/// Amplitudes below this are treated as zero by the zeroing step.
pub const ZERO_AMPLITUDE_TOL: f64 = 1e-12;
/// Largest tolerated overshoot of `b sqrt(a)` above 1.
pub const OVERSHOOT_TOL: f64 = 1e-6;
/// `|c00|^2` below this counts as a vanishing `c00` and is snapped to zero.
pub const VANISHING_C00_SQ_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MziSetting {
    pub alpha: f64,
    pub beta: f64,
}

impl MziSetting {
    pub const PASS_THROUGH: MziSetting = MziSetting {
        alpha: 0.0,
        beta: PI,
    };
    pub const SWAP: MziSetting = MziSetting {
        alpha: 0.0,
        beta: 0.0,
    };

    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha: canonical_angle(alpha),
            beta: canonical_angle(beta),
        }
    }

    pub fn matrix(&self) -> [[C64; 2]; 2] {
        mzi_matrix(self.alpha, self.beta)
    }

    pub fn c00(&self) -> C64 {
        self.matrix()[0][0]
    }
}

/// Wrap an angle into `[0, 2pi)`.
pub fn canonical_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

pub fn mzi_matrix(alpha: f64, beta: f64) -> [[C64; 2]; 2] {
    let g = c64(0.0, 1.0) * C64::from_polar(1.0, beta / 2.0);
    let ea = C64::from_polar(1.0, alpha);
    let (s, c) = (beta / 2.0).sin_cos();
    [[g * ea * s, g * c], [g * ea * c, -g * s]]
}

pub fn mzi_cmatrix(setting: &MziSetting) -> CMatrix {
    let m = setting.matrix();
    CMatrix::from_fn(2, 2, |r, c| m[r][c])
}

/// Compiled measurement: `n_outcomes - 1` modules of `dim` MZI settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitProgram {
    pub dim: usize,
    pub n_outcomes: usize,
    pub modules: Vec<Vec<MziSetting>>,
}

impl CircuitProgram {
    pub fn check_shape(&self) -> Result<()> {
        if self.dim == 0 || self.n_outcomes == 0 {
            return Err(Error::InvalidInput(
                "program needs dim >= 1 and n_outcomes >= 1".into(),
            ));
        }
        if self.modules.len() != self.n_outcomes - 1 {
            return Err(Error::InvalidInput(format!(
                "program with {} outcomes must have {} modules, found {}",
                self.n_outcomes,
                self.n_outcomes - 1,
                self.modules.len()
            )));
        }
        for (i, m) in self.modules.iter().enumerate() {
            if m.len() != self.dim {
                return Err(Error::InvalidInput(format!(
                    "module {} has {} settings, expected {}",
                    i + 1,
                    m.len(),
                    self.dim
                )));
            }
            for (j, s) in m.iter().enumerate() {
                if !s.alpha.is_finite() || !s.beta.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "module {} MZI {} has a non-finite phase",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Total number of phase shifters (two per MZI).
    pub fn n_phases(&self) -> usize {
        2 * self.dim * self.modules.len()
    }
}

/// Per-module record of the compiler state.
#[derive(Debug, Clone)]
pub struct ModuleTrace {
    /// Cumulative evolution operator entering the module.
    pub k: CMatrix,
    /// Effective dimension entering the module.
    pub l: usize,
    pub b: f64,
    pub eta: Ket,
    /// Product of the zeroing unitaries `U^{l-1} ... U^1`.
    pub r: CMatrix,
}

#[derive(Debug, Clone)]
pub struct CompileTrace {
    pub modules: Vec<ModuleTrace>,
    /// Evolution operator left after the last module.
    pub k_final: CMatrix,
    pub l_final: usize,
}

/// `d x d` operator of MZI `j` (1-based) restricted to the system modes.
/// For `j < d` this is unitary on modes `(j-1, j)`; for `j = d` only `c00`
/// survives at `(d-1, d-1)`.
pub fn embed_two_mode(c: &CMatrix, j: usize, d: usize) -> Result<CMatrix> {
    if j == 0 || j > d {
        return Err(Error::InvalidInput(format!(
            "MZI index {j} out of range 1..={d}"
        )));
    }
    if c.shape() != (2, 2) {
        return Err(Error::InvalidInput("two-mode block must be 2x2".into()));
    }
    let unitary_dev = linalg::max_abs(&(c.adjoint() * c - linalg::identity(2)));
    if unitary_dev > 1e-10 {
        return Err(Error::Contract(format!(
            "two-mode block is not unitary (deviation {unitary_dev:e})"
        )));
    }
    let mut u = linalg::identity(d);
    if j < d {
        for r in 0..2 {
            for s in 0..2 {
                u[(j - 1 + r, j - 1 + s)] = c[(r, s)];
            }
        }
    } else {
        u[(d - 1, d - 1)] = c[(0, 0)];
    }
    Ok(u)
}

/// Setting whose MZI on modes `(j-1, j)` sends all of `xi` out of mode `j-1`.
pub fn zeroing_setting(xi: &Ket, j: usize) -> Result<MziSetting> {
    if j == 0 || j >= xi.len() {
        return Err(Error::InvalidInput(format!(
            "zeroing index {j} out of range 1..{}",
            xi.len()
        )));
    }
    let x = xi[j - 1];
    let y = xi[j];
    Ok(zeroing_for_pair(x, y))
}

fn zeroing_for_pair(x: C64, y: C64) -> MziSetting {
    let (ax, ay) = (x.norm(), y.norm());
    if ax <= ZERO_AMPLITUDE_TOL && ay <= ZERO_AMPLITUDE_TOL {
        return MziSetting::PASS_THROUGH;
    }
    if ax <= ZERO_AMPLITUDE_TOL {
        return MziSetting::PASS_THROUGH;
    }
    if ay <= ZERO_AMPLITUDE_TOL {
        return MziSetting::SWAP;
    }
    let beta = 2.0 * ay.atan2(ax);
    let alpha = (-y / x).arg();
    MziSetting::new(alpha, beta)
}

fn apply_two_mode(v: &mut [C64], lo: usize, m: &[[C64; 2]; 2]) {
    let (a, b) = (v[lo], v[lo + 1]);
    v[lo] = m[0][0] * a + m[0][1] * b;
    v[lo + 1] = m[1][0] * a + m[1][1] * b;
}

/// Compile a rank-1 POVM into a circuit program.
pub fn compile(p: &Povm) -> Result<(CircuitProgram, CompileTrace)> {
    let report = validate_povm(p)?;
    if !report.pass {
        return Err(Error::InvalidInput(format!("POVM failed validation: {report}")));
    }
    let d = p.dim;
    let n = p.n_outcomes();
    if n == 0 {
        return Err(Error::InvalidInput("POVM has no elements".into()));
    }
    let mut k = linalg::identity(d);
    let mut l = d;
    let mut modules = Vec::with_capacity(n.saturating_sub(1));
    let mut traces = Vec::with_capacity(n.saturating_sub(1));

    for i in 0..n.saturating_sub(1) {
        if l == 0 {
            return Err(Error::Numerical(format!(
                "effective dimension reached 0 before module {}",
                i + 1
            )));
        }
        let elem = &p.elements[i];
        let k_pinv = linalg::pseudo_inverse(&k, DEFAULT_RANK_TOL)?;
        let steer = k_pinv.adjoint() * &elem.ket;
        let b = steer.norm();
        if b <= 0.0 {
            return Err(Error::Numerical(format!(
                "steering ket of module {} vanishes",
                i + 1
            )));
        }
        let eta = &steer / c64(b, 0.0);

        let mut settings = Vec::with_capacity(d);
        let mut xi: Vec<C64> = eta.iter().cloned().collect();
        let mut r = linalg::identity(d);
        for j in 1..l {
            let s = zeroing_for_pair(xi[j - 1], xi[j]);
            let m = s.matrix();
            apply_two_mode(&mut xi, j - 1, &m);
            for col in 0..d {
                let (a0, a1) = (r[(j - 1, col)], r[(j, col)]);
                r[(j - 1, col)] = m[0][0] * a0 + m[0][1] * a1;
                r[(j, col)] = m[1][0] * a0 + m[1][1] * a1;
            }
            settings.push(s);
        }

        let target = b * elem.weight.sqrt();
        if target > 1.0 + OVERSHOOT_TOL {
            return Err(Error::Infeasible(format!(
                "module {}: required transmission b*sqrt(a) = {target} exceeds 1",
                i + 1
            )));
        }
        let c10 = target.min(1.0);
        let split = if 1.0 - c10 * c10 <= VANISHING_C00_SQ_TOL {
            MziSetting::SWAP
        } else {
            MziSetting::new(0.0, 2.0 * c10.acos())
        };
        let c00 = split.c00();
        settings.push(split);
        while settings.len() < d {
            settings.push(MziSetting::SWAP);
        }

        let mut next = r.clone() * &k;
        for row in 0..d {
            let f = if row + 1 < l {
                c64(1.0, 0.0)
            } else if row + 1 == l {
                c00
            } else {
                c64(0.0, 0.0)
            };
            for col in 0..d {
                next[(row, col)] *= f;
            }
        }

        traces.push(ModuleTrace {
            k: k.clone(),
            l,
            b,
            eta,
            r,
        });
        modules.push(settings);
        k = next;
        if c00.norm() == 0.0 {
            l -= 1;
        }
    }

    let program = CircuitProgram {
        dim: d,
        n_outcomes: n,
        modules,
    };
    let trace = CompileTrace {
        modules: traces,
        k_final: k,
        l_final: l,
    };
    Ok((program, trace))
}

/// Structural checks on a compiled program and its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    /// `(module, mzi)` pairs (1-based) with `j > n - i` whose `c00` is not zero.
    pub vanishing_violations: Vec<(usize, usize)>,
    /// Modules (1-based) where `rank(K_i) != l_i`.
    pub rank_violations: Vec<usize>,
    /// Modules (1-based) where `l_i > n - i + 1`.
    pub effective_dim_violations: Vec<usize>,
}

impl StructureReport {
    pub fn ok(&self) -> bool {
        self.vanishing_violations.is_empty()
            && self.rank_violations.is_empty()
            && self.effective_dim_violations.is_empty()
    }
}

pub fn check_structure(program: &CircuitProgram, trace: &CompileTrace) -> StructureReport {
    let n = program.n_outcomes;
    let mut vanishing_violations = Vec::new();
    for (i0, m) in program.modules.iter().enumerate() {
        let i = i0 + 1;
        for (j0, s) in m.iter().enumerate() {
            let j = j0 + 1;
            if j + i > n && s.c00().norm() > 1e-9 {
                vanishing_violations.push((i, j));
            }
        }
    }
    let mut rank_violations = Vec::new();
    let mut effective_dim_violations = Vec::new();
    for (i0, t) in trace.modules.iter().enumerate() {
        let i = i0 + 1;
        if linalg::numerical_rank(&t.k, DEFAULT_RANK_TOL) != t.l {
            rank_violations.push(i);
        }
        if t.l > n - i + 1 {
            effective_dim_violations.push(i);
        }
    }
    StructureReport {
        vanishing_violations,
        rank_violations,
        effective_dim_violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{basis_ket, max_abs};
    use crate::povm::{random_rank1_povm, sic_povm_d4, Element};
    use crate::rng::seeded;
    use crate::simulator::simulate;
    use proptest::prelude::*;

    fn basis_povm(d: usize) -> Povm {
        Povm {
            dim: d,
            elements: (0..d)
                .map(|k| Element {
                    weight: 1.0,
                    ket: basis_ket(d, k),
                })
                .collect(),
        }
    }

    fn born_deviation(p: &Povm, prog: &CircuitProgram, seed: u64, probes: usize) -> f64 {
        let mut rng = seeded(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let phi = linalg::random_ket(p.dim, &mut rng);
            let sim = simulate(prog, &phi, None).unwrap();
            for (a, b) in sim.iter().zip(p.probabilities(&phi)) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    #[test]
    fn mzi_is_unitary_and_conventions_hold() {
        for &(a, b) in &[(0.0, 0.0), (1.0, 2.0), (5.0, 0.3), (0.0, PI)] {
            let c = mzi_cmatrix(&MziSetting::new(a, b));
            assert!(max_abs(&(c.adjoint() * &c - linalg::identity(2))) < 1e-14);
        }
        assert!(MziSetting::SWAP.c00().norm() < 1e-15);
        let pass = mzi_cmatrix(&MziSetting::PASS_THROUGH);
        assert!(pass[(0, 1)].norm() < 1e-15 && pass[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn embed_identity_block() {
        let u = embed_two_mode(&linalg::identity(2), 1, 4).unwrap();
        assert_eq!(u, linalg::identity(4));
    }

    #[test]
    fn embed_last_mzi_with_vanishing_c00_projects() {
        let c = mzi_cmatrix(&MziSetting::SWAP);
        let u = embed_two_mode(&c, 4, 4).unwrap();
        let want = linalg::diag_real(&[1.0, 1.0, 1.0, 0.0]);
        assert!(max_abs(&(u - want)) < 1e-15);
    }

    #[test]
    fn embed_random_block_entrywise() {
        let mut rng = seeded(4);
        let c = linalg::haar_unitary(2, &mut rng);
        let u = embed_two_mode(&c, 2, 4).unwrap();
        for r in 0..4 {
            for s in 0..4 {
                let want = if (1..=2).contains(&r) && (1..=2).contains(&s) {
                    c[(r - 1, s - 1)]
                } else if r == s {
                    c64(1.0, 0.0)
                } else {
                    c64(0.0, 0.0)
                };
                assert_eq!(u[(r, s)], want);
            }
        }
        assert!(embed_two_mode(&c, 0, 4).is_err());
        assert!(embed_two_mode(&c, 5, 4).is_err());
    }

    fn residual(xi: &Ket, j: usize) -> f64 {
        let s = zeroing_setting(xi, j).unwrap();
        let m = s.matrix();
        (m[0][0] * xi[j - 1] + m[0][1] * xi[j]).norm()
    }

    #[test]
    fn zeroing_examples() {
        let e0 = basis_ket(4, 0);
        assert!(residual(&e0, 1) < 1e-10);
        let e1 = basis_ket(4, 1);
        assert!(residual(&e1, 1) < 1e-10);
        assert!((zeroing_setting(&e1, 1).unwrap().beta - PI).abs() < 1e-15);
        let v = linalg::ket_from(&[c64(0.5, 0.5), c64(0.5, 0.5)]);
        let s = zeroing_setting(&v, 1).unwrap();
        assert!(((s.beta / 2.0).tan().abs() - 1.0).abs() < 1e-12);
        assert!(residual(&v, 1) < 1e-10);
    }

    #[test]
    fn projective_qubit_program() {
        let p = basis_povm(2);
        let (prog, _) = compile(&p).unwrap();
        assert_eq!(prog.modules.len(), 1);
        let phi = linalg::ket_from(&[c64(0.6, 0.0), c64(0.8, 0.0)]);
        let probs = simulate(&prog, &phi, None).unwrap();
        assert!((probs[0] - 0.36).abs() < 1e-12);
        assert!((probs[1] - 0.64).abs() < 1e-12);
    }

    #[test]
    fn sic_program_matches_born_rule() {
        let p = sic_povm_d4();
        let (prog, trace) = compile(&p).unwrap();
        assert_eq!(prog.modules.len(), 15);
        assert!(born_deviation(&p, &prog, 17, 50) < 1e-9);
        let rep = check_structure(&prog, &trace);
        assert!(rep.ok(), "{rep:?}");
        for t in &trace.modules {
            assert!((t.eta.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn repeated_element_drops_effective_dimension_early() {
        // |1><1| split over three outcomes
        let third = 1.0 / 3.0;
        let p = Povm {
            dim: 2,
            elements: vec![
                Element { weight: 1.0, ket: basis_ket(2, 0) },
                Element { weight: third, ket: basis_ket(2, 1) },
                Element { weight: third, ket: basis_ket(2, 1) },
                Element { weight: third, ket: basis_ket(2, 1) },
            ],
        };
        let (prog, trace) = compile(&p).unwrap();
        assert!(born_deviation(&p, &prog, 3, 20) < 1e-9);
        assert!(check_structure(&prog, &trace).ok());
        assert_eq!(trace.modules[1].l, 1);
    }

    #[test]
    fn invalid_povm_is_rejected() {
        let mut p = basis_povm(2);
        p.elements[0].weight = 0.5;
        assert!(matches!(compile(&p), Err(Error::InvalidInput(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn compiled_programs_reproduce_born_rule(seed in any::<u64>(), d in 1usize..=4, extra in 0usize..=12) {
            let n = (d + extra).min(d * d);
            let p = random_rank1_povm(d, n, seed).unwrap();
            let (prog, trace) = compile(&p).unwrap();
            prop_assert_eq!(prog.modules.len(), n - 1);
            prop_assert!(born_deviation(&p, &prog, seed ^ 0x5eed, 5) < 1e-9);
            let rep = check_structure(&prog, &trace);
            prop_assert!(rep.ok(), "{:?}", rep);
        }

        #[test]
        fn zeroing_residual_vanishes(seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let xi = linalg::random_ket(3, &mut rng);
            prop_assert!(residual(&xi, 1) < 1e-10);
            prop_assert!(residual(&xi, 2) < 1e-10);
        }
    }
}
