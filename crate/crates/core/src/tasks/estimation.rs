//! Estimating a qubit direction from two copies `|n>|n>`.

use std::f64::consts::{FRAC_PI_3, PI, SQRT_2, TAU};

use crate::error::{Error, Result};
use crate::linalg::{c64, hermitian_eigen_unchecked, identity, kron_ket, ket_from, C64, Ket};
use crate::povm::{Element, Povm};

pub type Bloch = [f64; 3];

/// A measurement on two qubits with an estimate per outcome. `None` marks
/// an outcome answered with a uniformly random direction.
#[derive(Debug, Clone)]
pub struct EstimationScheme {
    pub povm: Povm,
    pub estimates: Vec<Option<Bloch>>,
}

/// `cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>` for a unit Bloch vector.
pub fn bloch_ket(n: &Bloch) -> Ket {
    let theta = n[2].clamp(-1.0, 1.0).acos();
    let phi = n[1].atan2(n[0]);
    ket_from(&[
        c64((theta / 2.0).cos(), 0.0),
        C64::from_polar((theta / 2.0).sin(), phi),
    ])
}

/// `(2 Re a*b, 2 Im a*b, |a|^2 - |b|^2)` of a normalized qubit ket.
pub fn bloch_vector(k: &Ket) -> Bloch {
    let (a, b) = (k[0], k[1]);
    let ab = a.conj() * b;
    [2.0 * ab.re, 2.0 * ab.im, a.norm_sqr() - b.norm_sqr()]
}

fn singlet() -> Ket {
    let s = 1.0 / SQRT_2;
    ket_from(&[c64(0.0, 0.0), c64(s, 0.0), c64(-s, 0.0), c64(0.0, 0.0)])
}

/// Covariant two-copy measurement: `1/2 |m><m|^{x2}` over the six Pauli
/// eigenstates, plus the singlet projector.
pub fn two_copy_optimal() -> EstimationScheme {
    let dirs: [Bloch; 6] = [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let mut elements: Vec<Element> = dirs
        .iter()
        .map(|m| {
            let k = bloch_ket(m);
            Element {
                weight: 0.5,
                ket: kron_ket(&k, &k),
            }
        })
        .collect();
    elements.push(Element {
        weight: 1.0,
        ket: singlet(),
    });
    let mut estimates: Vec<Option<Bloch>> = dirs.iter().map(|m| Some(*m)).collect();
    estimates.push(None);
    EstimationScheme {
        povm: Povm { dim: 4, elements },
        estimates,
    }
}

/// The four tetrahedron kets `m'_j` of the projective scheme.
pub fn tetrahedron_kets() -> [Ket; 4] {
    let r3 = 3f64.sqrt();
    let i3 = c64(0.0, 1.0 / r3);
    [
        ket_from(&[c64(1.0, 0.0), c64(0.0, 0.0)]),
        ket_from(&[i3, i3 * SQRT_2]),
        ket_from(&[i3, i3 * C64::from_polar(SQRT_2, 2.0 * FRAC_PI_3)]),
        ket_from(&[-i3, i3 * C64::from_polar(SQRT_2, FRAC_PI_3)]),
    ]
}

/// Projective two-copy scheme with elements
/// `|1/2 Psi- + sqrt(3)/2 |m'_j>|m'_j>|^2` and estimates `m'_j`.
pub fn massar_popescu() -> EstimationScheme {
    let s = singlet();
    let mut elements = Vec::with_capacity(4);
    let mut estimates = Vec::with_capacity(4);
    for m in tetrahedron_kets() {
        let k = &s * c64(0.5, 0.0) + kron_ket(&m, &m) * c64(3f64.sqrt() / 2.0, 0.0);
        elements.push(Element { weight: 1.0, ket: k });
        estimates.push(Some(bloch_vector(&m)));
    }
    EstimationScheme {
        povm: Povm { dim: 4, elements },
        estimates,
    }
}

/// Mean fidelity `1/2 + 1/2 sum_i p_i(n) n.m_i` on input `|n>|n>`; random
/// answers score `1/2`.
pub fn estimation_fidelity(scheme: &EstimationScheme, n: &Bloch) -> Result<f64> {
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "Bloch vector must have unit length, got {norm}"
        )));
    }
    if scheme.estimates.len() != scheme.povm.n_outcomes() {
        return Err(Error::InvalidInput(
            "one estimate per outcome required".into(),
        ));
    }
    let k = bloch_ket(n);
    let input = kron_ket(&k, &k);
    let probs = scheme.povm.probabilities(&input);
    let mut f = 0.0;
    for (p, est) in probs.iter().zip(scheme.estimates.iter()) {
        let dot = match est {
            Some(m) => n[0] * m[0] + n[1] * m[1] + n[2] * m[2],
            None => 0.0,
        };
        f += p * (1.0 + dot) / 2.0;
    }
    Ok(f)
}

/// Closed-form fidelity of the projective scheme.
pub fn massar_popescu_closed_form(n: &Bloch) -> f64 {
    let (x, y, z) = (n[0], n[1], n[2]);
    let s2 = SQRT_2;
    (18.0 + s2 * x.powi(3) - 3.0 * s2 * x * y * y - 3.0 * x * x * z - 3.0 * y * y * z
        + 2.0 * z.powi(3))
        / 24.0
}

pub fn spherical(theta: f64, phi: f64) -> Bloch {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Golub-Welsch).
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = crate::linalg::CMatrix::zeros(m, m);
    for k in 1..m {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        j[(k, k - 1)] = c64(b, 0.0);
        j[(k - 1, k)] = c64(b, 0.0);
    }
    let eig = hermitian_eigen_unchecked(&j);
    let weights = (0..m).map(|k| 2.0 * eig.vectors[(0, k)].norm_sqr()).collect();
    (eig.values, weights)
}

/// Average over the sphere: Gauss-Legendre in `cos(theta)` and a uniform
/// grid in `phi`, exact for polynomials of degree below `2 * order`.
pub fn sphere_average<F: Fn(&Bloch) -> Result<f64>>(f: F, order: usize) -> Result<f64> {
    let (zs, ws) = gauss_legendre(order);
    let nphi = 2 * order + 1;
    let mut acc = 0.0;
    for (z, w) in zs.iter().zip(ws.iter()) {
        let s = (1.0 - z * z).max(0.0).sqrt();
        for q in 0..nphi {
            let phi = TAU * q as f64 / nphi as f64;
            acc += w / 2.0 / nphi as f64 * f(&[s * phi.cos(), s * phi.sin(), *z])?;
        }
    }
    Ok(acc)
}

/// Minimum over the sphere: grid search followed by a shrinking pattern
/// search around the best grid point.
pub fn sphere_minimum<F: Fn(&Bloch) -> Result<f64>>(f: F, grid: usize) -> Result<(f64, Bloch)> {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for a in 0..=grid {
        let theta = PI * a as f64 / grid as f64;
        for b in 0..2 * grid {
            let phi = PI * b as f64 / grid as f64;
            let v = f(&spherical(theta, phi))?;
            if v < best.0 {
                best = (v, theta, phi);
            }
        }
    }
    let (mut v, mut theta, mut phi) = best;
    let mut h = PI / grid as f64;
    while h > 1e-10 {
        let mut moved = false;
        for (dt, dp) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            let cand = f(&spherical(theta + dt, phi + dp))?;
            if cand < v {
                v = cand;
                theta += dt;
                phi += dp;
                moved = true;
            }
        }
        if !moved {
            h /= 2.0;
        }
    }
    Ok((v, spherical(theta, phi)))
}

/// Check that `Pi_7` of [`two_copy_optimal`] completes the POVM: returns
/// `max |I - sum_i Pi_i|`.
pub fn completeness_deviation(scheme: &EstimationScheme) -> f64 {
    let mut s = identity(scheme.povm.dim);
    for e in scheme.povm.operators() {
        s -= e;
    }
    crate::linalg::max_abs(&s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, projector, random_ket};
    use crate::povm::validate_povm;
    use crate::rng::seeded;

    fn random_direction(seed: u64) -> Bloch {
        bloch_vector(&random_ket(2, &mut seeded(seed)))
    }

    #[test]
    fn optimal_scheme_is_a_povm_with_singlet_remainder() {
        let s = two_copy_optimal();
        assert!(validate_povm(&s.povm).unwrap().pass);
        let mut rest = identity(4);
        for e in &s.povm.operators()[..6] {
            rest -= e;
        }
        assert!(max_abs(&(rest - projector(&singlet()))) < 1e-12);
        for seed in 0..20 {
            let k = bloch_ket(&random_direction(seed));
            let p = s.povm.probabilities(&kron_ket(&k, &k));
            assert!(p[6].abs() < 1e-12);
        }
    }

    #[test]
    fn optimal_scheme_is_covariant() {
        let s = two_copy_optimal();
        for seed in 0..50 {
            let f = estimation_fidelity(&s, &random_direction(100 + seed)).unwrap();
            assert!((f - 0.75).abs() < 1e-9, "{f}");
        }
    }

    #[test]
    fn projective_scheme_matches_closed_form() {
        let s = massar_popescu();
        let g = s.povm.elements.iter().map(|e| e.ket.clone()).collect::<Vec<_>>();
        for (a, ka) in g.iter().enumerate() {
            for (b, kb) in g.iter().enumerate() {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ka.dotc(kb).norm() - want).abs() < 1e-12);
            }
        }
        let z = estimation_fidelity(&s, &[0.0, 0.0, 1.0]).unwrap();
        assert!((z - 5.0 / 6.0).abs() < 1e-12);
        for seed in 0..30 {
            let n = random_direction(seed);
            let f = estimation_fidelity(&s, &n).unwrap();
            assert!((f - massar_popescu_closed_form(&n)).abs() < 1e-12);
        }
    }

    #[test]
    fn tetrahedron_directions_are_regular() {
        let dirs: Vec<Bloch> = tetrahedron_kets().iter().map(bloch_vector).collect();
        for (a, u) in dirs.iter().enumerate() {
            for v in &dirs[a + 1..] {
                let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
                assert!((dot + 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_guess_scores_one_half() {
        let scheme = EstimationScheme {
            povm: Povm {
                dim: 4,
                elements: (0..4)
                    .map(|k| Element {
                        weight: 1.0,
                        ket: crate::linalg::basis_ket(4, k),
                    })
                    .collect(),
            },
            estimates: vec![None; 4],
        };
        let f = estimation_fidelity(&scheme, &random_direction(5)).unwrap();
        assert!((f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quadrature_integrates_low_degree_polynomials() {
        let avg_z2 = sphere_average(|n| Ok(n[2] * n[2]), 4).unwrap();
        assert!((avg_z2 - 1.0 / 3.0).abs() < 1e-14);
        let avg_x2y2 = sphere_average(|n| Ok(n[0] * n[0] * n[1] * n[1]), 4).unwrap();
        assert!((avg_x2y2 - 1.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn non_unit_direction_is_rejected() {
        assert!(estimation_fidelity(&two_copy_optimal(), &[0.5, 0.0, 0.0]).is_err());
    }
}
