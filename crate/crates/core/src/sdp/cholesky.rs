//! Right-looking blocked Cholesky for the dense Schur complement. Trailing
//! updates go through nalgebra's `gemm`, which is where the time goes for
//! systems of a few thousand constraints.

use nalgebra::DMatrix;

const BLOCK: usize = 96;

/// Factor the panel `A[k.., k..k+kb]` held row-major in `panel`
/// (`rows x kb`): Cholesky of the top `kb x kb`, then `L21 = A21 L11^{-T}`.
fn factor_panel(panel: &mut [f64], rows: usize, kb: usize) -> bool {
    for j in 0..kb {
        let (head, tail) = panel.split_at_mut(j * kb + kb);
        let rj = &mut head[j * kb..j * kb + kb];
        let mut d = rj[j];
        for p in 0..j {
            d -= rj[p] * rj[p];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        rj[j] = d;
        let rj = &head[j * kb..j * kb + kb];
        for i in 0..(rows - j - 1) {
            let ri = &mut tail[i * kb..i * kb + kb];
            let mut s = ri[j];
            for p in 0..j {
                s -= ri[p] * rj[p];
            }
            ri[j] = s / d;
        }
    }
    true
}

/// Overwrite the lower triangle of `a` with its Cholesky factor. Returns
/// `false` if `a` is not numerically positive definite. The upper triangle
/// is left unspecified.
pub fn cholesky_in_place(a: &mut DMatrix<f64>) -> bool {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut k = 0;
    let mut panel = Vec::new();
    while k < n {
        let kb = BLOCK.min(n - k);
        let rows = n - k;
        panel.clear();
        panel.resize(rows * kb, 0.0);
        for c in 0..kb {
            let col = a.column(k + c);
            for r in 0..rows {
                panel[r * kb + c] = col[k + r];
            }
        }
        if !factor_panel(&mut panel, rows, kb) {
            return false;
        }
        for c in 0..kb {
            let mut col = a.column_mut(k + c);
            for r in c..rows {
                col[k + r] = panel[r * kb + c];
            }
        }
        let rest = rows - kb;
        if rest > 0 {
            let l21 = a.view((k + kb, k), (rest, kb)).into_owned();
            // A22 -= L21 L21^T, lower block-columns only
            let mut c0 = 0;
            while c0 < rest {
                let cb = BLOCK.min(rest - c0);
                let left = l21.view((c0, 0), (rest - c0, kb));
                let right = l21.view((c0, 0), (cb, kb));
                let mut target = a.view_mut((k + kb + c0, k + kb + c0), (rest - c0, cb));
                target.gemm(-1.0, &left, &right.transpose(), 1.0);
                c0 += cb;
            }
        }
        k += kb;
    }
    true
}

/// Solve `L L^T x = b` with the factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for p in 0..i {
            s -= l[(i, p)] * x[p];
        }
        x[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for p in (i + 1)..n {
            s -= l[(p, i)] * x[p];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn matches_reconstruction_across_block_boundaries() {
        let mut rng = crate::rng::seeded(3);
        for &n in &[1usize, 5, 96, 97, 250] {
            let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a = &g * g.transpose() + DMatrix::<f64>::identity(n, n) * (n as f64);
            let mut f = a.clone();
            assert!(cholesky_in_place(&mut f));
            let l = DMatrix::<f64>::from_fn(n, n, |i, j| if i >= j { f[(i, j)] } else { 0.0 });
            let err = (&l * l.transpose() - &a).amax();
            assert!(err < 1e-9 * n as f64, "n={n} err={err}");
            let b: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let x = cholesky_solve(&f, &b);
            let r = &a * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b);
            assert!(r.amax() < 1e-8 * n as f64);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(!cholesky_in_place(&mut a));
    }
}
