//! POVM and state-set data model, validation, random sampling and the
//! fixed constructions used by the benchmarks (SIC in d=4, MUB probes, the
//! three discrimination state sets).

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use crate::error::{Error, Result};
use crate::linalg::{
    self, c64, hermitian_eigen_unchecked, identity, max_abs, projector, C64, CMatrix, Ket,
};
use crate::rng::seeded;

pub const COMPLETENESS_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = -1e-9;
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// One rank-1 element `a |psi><psi|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub weight: f64,
    pub ket: Ket,
}

impl Element {
    pub fn operator(&self) -> CMatrix {
        projector(&self.ket) * c64(self.weight, 0.0)
    }
}

/// Rank-1 POVM `{a_i |psi_i><psi_i|}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    pub dim: usize,
    pub elements: Vec<Element>,
}

/// POVM with general PSD elements.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPovm {
    pub dim: usize,
    pub matrices: Vec<CMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSet {
    pub dim: usize,
    pub states: Vec<Ket>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// `max |sum_i E_i - I|` entrywise.
    pub completeness_deviation: f64,
    /// Smallest eigenvalue over all elements.
    pub min_eigenvalue: f64,
    /// Largest `| ||psi_i|| - 1 |` (zero for operator POVMs).
    pub normalization_deviation: f64,
    /// Weights outside `(0, 1]`, by index.
    pub bad_weights: Vec<usize>,
    pub pass: bool,
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: completeness deviation {:.3e}, min eigenvalue {:.3e}, normalization deviation {:.3e}",
            if self.pass { "pass" } else { "fail" },
            self.completeness_deviation,
            self.min_eigenvalue,
            self.normalization_deviation
        )?;
        if !self.bad_weights.is_empty() {
            write!(f, ", weights outside (0,1] at {:?}", self.bad_weights)?;
        }
        Ok(())
    }
}

impl Povm {
    pub fn new(dim: usize, elements: Vec<Element>) -> Result<Self> {
        for (i, e) in elements.iter().enumerate() {
            if e.ket.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "element {} has dimension {}, expected {}",
                    i + 1,
                    e.ket.len(),
                    dim
                )));
            }
        }
        Ok(Self { dim, elements })
    }

    /// Build from unnormalized vectors `v_i`, so that `E_i = |v_i><v_i|`.
    pub fn from_vectors(dim: usize, vectors: &[Ket]) -> Result<Self> {
        let elements = vectors
            .iter()
            .map(|v| {
                let n = v.norm();
                Element {
                    weight: n * n,
                    ket: if n > 0.0 { v / c64(n, 0.0) } else { v.clone() },
                }
            })
            .collect();
        Self::new(dim, elements)
    }

    pub fn n_outcomes(&self) -> usize {
        self.elements.len()
    }

    pub fn operators(&self) -> Vec<CMatrix> {
        self.elements.iter().map(Element::operator).collect()
    }

    pub fn to_operator_povm(&self) -> OperatorPovm {
        OperatorPovm {
            dim: self.dim,
            matrices: self.operators(),
        }
    }

    /// Born-rule probabilities `<phi|E_i|phi>`.
    pub fn probabilities(&self, phi: &Ket) -> Vec<f64> {
        self.elements
            .iter()
            .map(|e| e.weight * e.ket.dotc(phi).norm_sqr())
            .collect()
    }
}

impl OperatorPovm {
    pub fn n_outcomes(&self) -> usize {
        self.matrices.len()
    }

    /// `Tr(E_i rho)` for every element.
    pub fn probabilities_rho(&self, rho: &CMatrix) -> Vec<f64> {
        self.matrices
            .iter()
            .map(|e| linalg::trace_product(e, rho))
            .collect()
    }

    pub fn probabilities(&self, phi: &Ket) -> Vec<f64> {
        self.matrices
            .iter()
            .map(|e| phi.dotc(&(e * phi)).re)
            .collect()
    }
}

impl StateSet {
    pub fn new(dim: usize, states: Vec<Ket>) -> Result<Self> {
        for (i, s) in states.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "state {} has dimension {}, expected {}",
                    i + 1,
                    s.len(),
                    dim
                )));
            }
        }
        Ok(Self { dim, states })
    }

    /// Columns of `m` as states.
    pub fn from_columns(m: &CMatrix) -> Self {
        Self {
            dim: m.nrows(),
            states: (0..m.ncols()).map(|k| m.column(k).into_owned()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn as_matrix(&self) -> CMatrix {
        CMatrix::from_columns(&self.states)
    }

    pub fn max_normalization_deviation(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Rescale every state to unit norm; returns the largest deviation seen.
    pub fn renormalize(&mut self) -> f64 {
        let dev = self.max_normalization_deviation();
        for s in &mut self.states {
            let n = s.norm();
            if n > 0.0 {
                *s /= c64(n, 0.0);
            }
        }
        dev
    }

    pub fn check_normalized(&self) -> Result<()> {
        let dev = self.max_normalization_deviation();
        if dev > NORMALIZATION_TOL {
            return Err(Error::Contract(format!(
                "state set is not normalized (deviation {dev:e})"
            )));
        }
        Ok(())
    }
}

fn completeness_and_positivity(dim: usize, ops: &[CMatrix]) -> (f64, f64) {
    let mut sum = CMatrix::zeros(dim, dim);
    let mut min_eig = f64::INFINITY;
    for e in ops {
        sum += e;
        min_eig = min_eig.min(hermitian_eigen_unchecked(e).min());
    }
    if ops.is_empty() {
        min_eig = 0.0;
    }
    (max_abs(&(sum - identity(dim))), min_eig)
}

pub fn validate_povm(p: &Povm) -> Result<ValidationReport> {
    for (i, e) in p.elements.iter().enumerate() {
        if e.ket.len() != p.dim {
            return Err(Error::InvalidInput(format!(
                "element {} has dimension {}, expected {}",
                i + 1,
                e.ket.len(),
                p.dim
            )));
        }
    }
    let (completeness_deviation, min_eigenvalue) =
        completeness_and_positivity(p.dim, &p.operators());
    let normalization_deviation = p
        .elements
        .iter()
        .map(|e| (e.ket.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    let bad_weights: Vec<usize> = p
        .elements
        .iter()
        .enumerate()
        .filter(|(_, e)| !(e.weight > 0.0 && e.weight <= 1.0 + COMPLETENESS_TOL))
        .map(|(i, _)| i + 1)
        .collect();
    let pass = completeness_deviation <= COMPLETENESS_TOL
        && min_eigenvalue >= POSITIVITY_TOL
        && normalization_deviation <= NORMALIZATION_TOL
        && bad_weights.is_empty();
    Ok(ValidationReport {
        completeness_deviation,
        min_eigenvalue,
        normalization_deviation,
        bad_weights,
        pass,
    })
}

pub fn validate_operator_povm(p: &OperatorPovm) -> Result<ValidationReport> {
    for (i, m) in p.matrices.iter().enumerate() {
        if m.shape() != (p.dim, p.dim) {
            return Err(Error::InvalidInput(format!(
                "element {} is {}x{}, expected {}x{}",
                i + 1,
                m.nrows(),
                m.ncols(),
                p.dim,
                p.dim
            )));
        }
    }
    let (completeness_deviation, min_eigenvalue) =
        completeness_and_positivity(p.dim, &p.matrices);
    let herm_ok = p.matrices.iter().all(linalg::is_hermitian);
    Ok(ValidationReport {
        completeness_deviation,
        min_eigenvalue,
        normalization_deviation: 0.0,
        bad_weights: Vec::new(),
        pass: herm_ok
            && completeness_deviation <= COMPLETENESS_TOL
            && min_eigenvalue >= POSITIVITY_TOL,
    })
}

/// Random rank-1 POVM from `n` rows of a Haar-random `n x n` unitary,
/// restricted to its first `d` columns.
pub fn random_rank1_povm(d: usize, n: usize, seed: u64) -> Result<Povm> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if n < d {
        return Err(Error::InvalidInput(format!(
            "a complete rank-1 POVM in dimension {d} needs at least {d} outcomes, got {n}"
        )));
    }
    if n > d * d {
        return Err(Error::InvalidInput(format!(
            "at most d^2 = {} outcomes supported, got {n}",
            d * d
        )));
    }
    let mut rng = seeded(seed);
    let u = linalg::haar_unitary(n, &mut rng);
    // rows of the n x d isometry V give E_i = V_i.^dagger V_i.
    let vectors: Vec<Ket> = (0..n)
        .map(|i| Ket::from_fn(d, |k, _| u[(i, k)].conj()))
        .collect();
    Povm::from_vectors(d, &vectors)
}

/// Gram matrix `G_ij = <Psi_i|Psi_j>`.
pub fn gram_matrix(s: &StateSet) -> CMatrix {
    let m = s.as_matrix();
    m.adjoint() * m
}

pub fn gram_det(s: &StateSet) -> Result<f64> {
    if s.is_empty() {
        return Ok(1.0);
    }
    let det = gram_matrix(s).determinant();
    let scale = det.norm().max(1.0);
    if det.im.abs() > 1e-10 * scale {
        return Err(Error::Numerical(format!(
            "Gram determinant has imaginary residue {:e}",
            det.im
        )));
    }
    Ok(det.re.max(0.0))
}

/// Weyl-Heisenberg displacement `D_jk = w^{jk/2} sum_m w^{jm} |k+m><m|` in
/// d=4 with `w = i` and addition mod 4.
pub fn displacement_d4(j: usize, k: usize) -> CMatrix {
    let d = 4;
    let mut m = CMatrix::zeros(d, d);
    let pre = C64::from_polar(1.0, FRAC_PI_2 * (j * k) as f64 / 2.0);
    for col in 0..d {
        let phase = C64::from_polar(1.0, FRAC_PI_2 * ((j * col) % 4) as f64);
        m[((k + col) % d, col)] = pre * phase;
    }
    m
}

/// Fiducial ket of the d=4 SIC.
pub fn sic_fiducial_d4() -> Ket {
    let s5 = 5f64.sqrt();
    let r0 = (1.0 - 1.0 / s5).sqrt() / (2.0 * (2.0 - SQRT_2).sqrt());
    let r1 = (SQRT_2 - 1.0) * r0;
    let inner = (0.2 + 1.0 / s5).sqrt();
    let rp = 0.5 * (1.0 + 1.0 / s5 + inner).sqrt();
    let rm = 0.5 * (1.0 + 1.0 / s5 - inner).sqrt();
    let a = (2.0 / (5.0 + s5).sqrt()).acos();
    let b = (2.0 / s5).asin();
    let tp = a / 2.0 + b / 4.0 + PI / 4.0;
    let tm = -a / 2.0 + b / 4.0 + PI / 4.0;
    let t1 = FRAC_PI_2;
    linalg::ket_from(&[
        c64(r0, 0.0),
        C64::from_polar(rp, tp),
        C64::from_polar(r1, t1),
        C64::from_polar(rm, tm),
    ])
}

/// The 16 SIC states `D_jk |psi>`, state index `4j + k`.
pub fn sic_states_d4() -> StateSet {
    let fid = sic_fiducial_d4();
    let mut states = Vec::with_capacity(16);
    for j in 0..4 {
        for k in 0..4 {
            states.push(displacement_d4(j, k) * &fid);
        }
    }
    StateSet { dim: 4, states }
}

/// SIC-POVM `E_i = |psi_i><psi_i| / 4`.
pub fn sic_povm_d4() -> Povm {
    let elements = sic_states_d4()
        .states
        .into_iter()
        .map(|ket| Element { weight: 0.25, ket })
        .collect();
    Povm { dim: 4, elements }
}

/// The 20 MUB probe states in d=4, in the listed order.
pub fn mub_probe_states_d4() -> StateSet {
    let o = c64(1.0, 0.0);
    let z = c64(-1.0, 0.0);
    let i = c64(0.0, 1.0);
    let mi = c64(0.0, -1.0);
    let bases: [[[C64; 4]; 4]; 4] = [
        [[o, o, o, o], [o, z, o, z], [i, i, mi, mi], [i, mi, mi, i]],
        [[o, o, o, o], [i, mi, i, mi], [o, o, z, z], [i, mi, mi, i]],
        [[o, o, o, o], [z, o, o, z], [o, z, o, z], [o, o, z, z]],
        [[o, o, o, o], [mi, i, i, mi], [mi, mi, i, i], [o, z, o, z]],
    ];
    let mut states: Vec<Ket> = (0..4).map(|k| linalg::basis_ket(4, k)).collect();
    for rows in bases.iter() {
        let m = CMatrix::from_fn(4, 4, |r, c| rows[r][c] * 0.5);
        for c in 0..4 {
            states.push(m.column(c).into_owned());
        }
    }
    StateSet { dim: 4, states }
}

const USD_SETS: [[[(f64, f64); 4]; 4]; 3] = [
    [
        [(-0.3717, -0.3117), (0.4394, -0.2619), (-0.1983, -0.3443), (-0.0325, -0.1753)],
        [(0.1096, 0.5635), (0.2859, 0.5227), (-0.0971, -0.2818), (-0.0403, -0.4469)],
        [(-0.2687, -0.2008), (0.4953, -0.3402), (0.2266, 0.5127), (-0.0579, -0.3399)],
        [(0.4649, -0.3263), (0.0964, 0.1142), (-0.4841, 0.4525), (-0.5207, -0.6139)],
    ],
    [
        [(0.3963, 0.4143), (0.2242, 0.1814), (0.1670, -0.5253), (-0.2909, -0.0835)],
        [(0.1252, -0.4273), (-0.6517, 0.1848), (0.0179, -0.5335), (-0.3509, -0.2353)],
        [(-0.1291, 0.4315), (0.2118, -0.4864), (0.3334, -0.0495), (-0.4095, 0.5014)],
        [(0.3979, -0.3345), (0.4051, -0.1118), (0.4434, 0.3177), (0.2368, 0.5048)],
    ],
    [
        [(-0.4383, -0.5134), (-0.3202, 0.0620), (0.4884, -0.0513), (0.4286, 0.3428)],
        [(-0.5238, -0.0632), (0.1704, -0.8889), (-0.2911, 0.1488), (-0.0686, 0.4814)],
        [(-0.0482, 0.3753), (0.2068, -0.1038), (0.5337, 0.3368), (-0.1992, 0.3649)],
        [(-0.2591, 0.2359), (-0.0940, 0.1102), (-0.4580, -0.2096), (-0.5134, 0.1611)],
    ],
];

/// The three discrimination state sets exactly as printed (4 decimals),
/// columns as states, before renormalization.
pub fn usd_state_sets_raw() -> [StateSet; 3] {
    USD_SETS.map(|rows| {
        let m = CMatrix::from_fn(4, 4, |r, c| c64(rows[r][c].0, rows[r][c].1));
        StateSet::from_columns(&m)
    })
}

/// The three state sets renormalized to unit norm.
pub fn usd_state_sets() -> [StateSet; 3] {
    let mut sets = usd_state_sets_raw();
    for s in &mut sets {
        s.renormalize();
    }
    sets
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn basis_povm(d: usize) -> Povm {
        Povm {
            dim: d,
            elements: (0..d)
                .map(|k| Element {
                    weight: 1.0,
                    ket: linalg::basis_ket(d, k),
                })
                .collect(),
        }
    }

    #[test]
    fn computational_basis_passes() {
        assert!(validate_povm(&basis_povm(4)).unwrap().pass);
    }

    #[test]
    fn overcomplete_identity_fails() {
        let p = OperatorPovm {
            dim: 2,
            matrices: vec![identity(2) * c64(0.5, 0.0), identity(2) * c64(0.6, 0.0)],
        };
        let r = validate_operator_povm(&p).unwrap();
        assert!(!r.pass);
        assert!((r.completeness_deviation - 0.1).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = Povm {
            dim: 3,
            elements: vec![Element {
                weight: 1.0,
                ket: linalg::basis_ket(2, 0),
            }],
        };
        assert!(matches!(validate_povm(&p), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sic_is_valid_with_uniform_overlaps() {
        let p = sic_povm_d4();
        assert_eq!(p.n_outcomes(), 16);
        let r = validate_povm(&p).unwrap();
        assert!(r.pass, "{r}");
        let s = sic_states_d4();
        for a in 0..16 {
            for b in 0..16 {
                let o = s.states[a].dotc(&s.states[b]).norm_sqr();
                let want = if a == b { 1.0 } else { 0.2 };
                assert!((o - want).abs() < 1e-9, "overlap {a},{b} = {o}");
            }
        }
    }

    #[test]
    fn displacement_origin_is_identity() {
        assert!(max_abs(&(displacement_d4(0, 0) - identity(4))) < 1e-15);
    }

    #[test]
    fn displacements_are_unitary() {
        for j in 0..4 {
            for k in 0..4 {
                let d = displacement_d4(j, k);
                assert!(max_abs(&(d.adjoint() * &d - identity(4))) < 1e-14);
            }
        }
    }

    #[test]
    fn mub_probes() {
        let s = mub_probe_states_d4();
        assert_eq!(s.len(), 20);
        for k in 0..4 {
            assert_eq!(s.states[k], linalg::basis_ket(4, k));
        }
        s.check_normalized().unwrap();
        for a in 0..20 {
            for b in 0..20 {
                let o = s.states[a].dotc(&s.states[b]).norm_sqr();
                let want = if a == b {
                    1.0
                } else if a / 4 == b / 4 {
                    0.0
                } else {
                    0.25
                };
                assert!((o - want).abs() < 1e-12, "probes {a},{b}: {o}");
            }
        }
    }

    #[test]
    fn mub_projectors_span_operator_space() {
        let s = mub_probe_states_d4();
        let vecs: Vec<Ket> = s
            .states
            .iter()
            .map(|k| {
                let p = projector(k);
                Ket::from_iterator(16, p.iter().cloned())
            })
            .collect();
        let m = CMatrix::from_columns(&vecs);
        assert_eq!(linalg::numerical_rank(&m, 1e-9), 16);
    }

    #[test]
    fn usd_sets_as_printed() {
        let raw = usd_state_sets_raw();
        assert_eq!(raw[0].states[0][0], c64(-0.3717, -0.3117));
        for s in &raw {
            assert!(s.max_normalization_deviation() < 1e-3);
        }
        let sets = usd_state_sets();
        for s in &sets {
            s.check_normalized().unwrap();
        }
    }

    #[test]
    fn gram_determinants() {
        let sets = usd_state_sets();
        let want = [0.3011, 0.4446, 0.4275];
        for (s, w) in sets.iter().zip(want) {
            let g = gram_det(s).unwrap();
            assert!((g - w).abs() < 5e-4, "gram det {g} vs {w}");
        }
        let basis = StateSet::from_columns(&identity(4));
        assert!((gram_det(&basis).unwrap() - 1.0).abs() < 1e-12);
        let mut rep = basis.clone();
        rep.states[3] = rep.states[0].clone();
        assert!(gram_det(&rep).unwrap().abs() < 1e-10);
    }

    #[test]
    fn random_povm_shapes() {
        let p = random_rank1_povm(4, 4, 9).unwrap();
        let ops = p.operators();
        for a in 0..4 {
            assert!((p.elements[a].weight - 1.0).abs() < 1e-9);
            for b in 0..4 {
                if a != b {
                    assert!(max_abs(&(&ops[a] * &ops[b])) < 1e-9);
                }
            }
        }
        assert!(validate_povm(&random_rank1_povm(4, 16, 9).unwrap()).unwrap().pass);
        assert_eq!(
            random_rank1_povm(4, 7, 42).unwrap(),
            random_rank1_povm(4, 7, 42).unwrap()
        );
        assert!(matches!(
            random_rank1_povm(4, 3, 1),
            Err(Error::InvalidInput(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn random_povms_validate(seed in any::<u64>(), d in 1usize..=4, extra in 0usize..=12) {
            let n = (d + extra).min(d * d);
            let p = random_rank1_povm(d, n, seed).unwrap();
            let r = validate_povm(&p).unwrap();
            prop_assert!(r.pass, "{}", r);
        }

        #[test]
        fn gram_det_is_nonnegative(seed in any::<u64>(), k in 1usize..=4) {
            let mut rng = seeded(seed);
            let states = (0..k).map(|_| linalg::random_ket(4, &mut rng)).collect();
            let s = StateSet::new(4, states).unwrap();
            prop_assert!(gram_det(&s).unwrap() >= -1e-10);
        }
    }
}
