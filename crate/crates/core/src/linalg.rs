//! Small dense linear-algebra kernels shared by the tensor-train code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used wherever a pseudo-inverse is implied.
pub const PINV_CUTOFF: f64 = 1e-12;

/// Relative cutoff used for numerical rank decisions.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Minimum-norm minimizer of `‖A v − y‖₂`.
///
/// Singular values below `PINV_CUTOFF · σ_max` are treated as zero. Tall
/// systems are first reduced with a Householder QR so the SVD only sees the
/// square triangular factor.
pub fn solve_least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {} rows but right-hand side has {} entries",
            a.nrows(),
            y.len()
        )));
    }
    let n = a.ncols();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    if a.nrows() > 2 * n {
        let qr = a.clone().qr();
        let qty = qr.q().tr_mul(y);
        let r = qr.unpack_r();
        Ok(pinv_solve(r, &qty))
    } else {
        Ok(pinv_solve(a.clone(), y))
    }
}

/// Ridge-regularized variant: minimizes `‖A v − y‖² + λ‖v‖²`.
pub fn solve_ridge(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if lambda <= 0.0 {
        return solve_least_squares(a, y);
    }
    let (m, n) = a.shape();
    let mut stacked = DMatrix::zeros(m + n, n);
    stacked.rows_mut(0, m).copy_from(a);
    let s = lambda.sqrt();
    for i in 0..n {
        stacked[(m + i, i)] = s;
    }
    let mut rhs = DVector::zeros(m + n);
    rhs.rows_mut(0, m).copy_from(y);
    solve_least_squares(&stacked, &rhs)
}

fn pinv_solve(a: DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let svd = a.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = DVector::zeros(vt.ncols());
    if smax == 0.0 {
        return out;
    }
    let cut = PINV_CUTOFF * smax;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            let coef = u.column(i).dot(y) / s;
            out.axpy(coef, &vt.row(i).transpose(), 1.0);
        }
    }
    out
}

/// Numerical rank with cutoff `rel_tol · σ_max`. The zero matrix has rank 0.
pub fn matrix_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let s = a.singular_values();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * smax).count()
}

/// Thin QR with the sign of each column of `Q` chosen so that `diag(R) >= 0`.
///
/// For an `m × n` input returns `Q: m × min(m,n)` and `R: min(m,n) × n`.
pub fn qr_positive(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.unpack_r();
    for i in 0..r.nrows().min(r.ncols()) {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
            r.row_mut(i).neg_mut();
        }
    }
    (q, r)
}

/// Thin SVD truncated to rank `max_rank` and relative cutoff `rel_tol`
/// (applied to individual singular values). Returns `(U, s, Vt, discarded²)`.
pub fn truncated_svd(
    a: &DMatrix<f64>,
    max_rank: usize,
    rel_tol: f64,
) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>, f64) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let keep = s
        .iter()
        .take(max_rank)
        .take_while(|&&v| smax > 0.0 && v > rel_tol * smax)
        .count();
    let discarded: f64 = s[keep..].iter().map(|v| v * v).sum();
    (
        u.columns(0, keep).into_owned(),
        s[..keep].to_vec(),
        vt.rows(0, keep).into_owned(),
        discarded,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_system() {
        let a = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let v = solve_least_squares(&a, &y).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15 && (v[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_column_mean() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let y = DVector::from_vec(vec![0.0, 2.0]);
        let v = solve_least_squares(&a, &y).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = DMatrix::from_fn(20, 5, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(20, |_, _| rng.random_range(-1.0..1.0));
        let v = solve_least_squares(&a, &y).unwrap();
        // normal-equations oracle, independent of the SVD path
        let ata = a.tr_mul(&a);
        let aty = a.tr_mul(&y);
        let w = ata.cholesky().unwrap().solve(&aty);
        let r1 = (&a * &v - &y).norm();
        let r2 = (&a * &w - &y).norm();
        assert!((r1 - r2).abs() <= 1e-10 * r2);
        assert!((&v - &w).norm() <= 1e-10 * w.norm());
    }

    #[test]
    fn rank_deficient_gives_minimum_norm() {
        // duplicate columns: any split with v0 + v1 = 2 fits, minimum norm is (1, 1)
        let a = DMatrix::from_row_slice(3, 2, &[1., 1., 1., 1., 1., 1.]);
        let y = DVector::from_vec(vec![2., 2., 2.]);
        let v = solve_least_squares(&a, &y).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let a = DMatrix::<f64>::identity(3, 2);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(
            solve_least_squares(&a, &y),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn recovers_consistent_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = DMatrix::from_fn(40, 6, |_, _| rng.random_range(-1.0..1.0));
            let v = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let y = &a * &v;
            let w = solve_least_squares(&a, &y).unwrap();
            assert!((&a * (&w - &v)).norm() <= 1e-10 * y.norm());
        }
    }

    #[test]
    fn qr_has_nonnegative_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
        let (q, r) = qr_positive(&a);
        assert!((0..4).all(|i| r[(i, i)] >= 0.0));
        assert!((&q * &r - &a).norm() < 1e-13);
        assert!((q.tr_mul(&q) - DMatrix::identity(4, 4)).norm() < 1e-13);
    }

    #[test]
    fn ridge_shrinks() {
        let a = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let v = solve_ridge(&a, &y, 1.0).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-14 && (v[1] - 1.0).abs() < 1e-14);
    }
}
