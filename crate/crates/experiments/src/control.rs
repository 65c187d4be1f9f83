//! Linear-quadratic control of the 1D heat equation.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative ARE residual at which Newton–Kleinman stops.
pub const ARE_TOL: f64 = 1e-10;
pub const MAX_NEWTON_STEPS: usize = 100;
/// Lyapunov solves go through the `n² × n²` Kronecker system.
pub const MAX_STATE_DIM: usize = 40;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("Lyapunov equation is singular")]
    SingularLyapunov,
    #[error("Newton-Kleinman did not converge in {steps} steps (relative residual {residual:e})")]
    NoConvergence { steps: usize, residual: f64 },
    #[error("no stabilizing initial gain found")]
    NotStabilizable,
}

/// Finite-difference heat equation on `[-1, 1]` with Neumann boundaries.
#[derive(Debug, Clone)]
pub struct HeatSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// Grid nodes.
    pub nodes: Vec<f64>,
}

/// `d` equispaced nodes, ghost-node Neumann Laplacian scaled by `1/h²`,
/// control acting on `|x| ≤ 0.4`, lumped mass `Q = h I`.
pub fn discretize_heat_equation(d: usize) -> Result<HeatSystem, ControlError> {
    if d < 2 {
        return Err(ControlError::InvalidSystem(format!("grid size {d} < 2")));
    }
    let h = 2.0 / (d - 1) as f64;
    let nodes: Vec<f64> = (0..d).map(|i| -1.0 + i as f64 * h).collect();
    let s = 1.0 / (h * h);
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        a[(i, i)] = -2.0 * s;
        // the ghost value mirrors the inner neighbour
        match i {
            0 => a[(0, 1)] = 2.0 * s,
            _ if i == d - 1 => a[(i, i - 1)] = 2.0 * s,
            _ => {
                a[(i, i - 1)] = s;
                a[(i, i + 1)] = s;
            }
        }
    }
    let b = DMatrix::from_fn(d, 1, |i, _| {
        if nodes[i].abs() <= 0.4 + 1e-12 {
            1.0
        } else {
            0.0
        }
    });
    let q = DMatrix::identity(d, d) * h;
    Ok(HeatSystem { a, b, q, nodes })
}

/// Solves `Aᵀ X + X A = -C`.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>, ControlError> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    // column-major vec: vec(Aᵀ X) = (I ⊗ Aᵀ) vec X, vec(X A) = (Aᵀ ⊗ I) vec X
    let k = eye.kronecker(&a.transpose()) + a.transpose().kronecker(&eye);
    let rhs = -DVector::from_column_slice(c.as_slice());
    let x = k.lu().solve(&rhs).ok_or(ControlError::SingularLyapunov)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ControlError::SingularLyapunov);
    }
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Hurwitz with a margin relative to the matrix scale, so that a zero
/// eigenvalue perturbed by rounding does not count as stable.
fn is_stable(a: &DMatrix<f64>, scale: f64) -> bool {
    spectral_abscissa(a) < -1e-9 * scale
}

/// `‖AᵀP + PA − P B R⁻¹ Bᵀ P + Q‖_F` with `R = λ I`.
pub fn are_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    lambda: f64,
    p: &DMatrix<f64>,
) -> f64 {
    let pb = p * b;
    (a.transpose() * p + p * a - &pb * pb.transpose() / lambda + q).norm()
}

/// Newton–Kleinman iteration on `A - σI` from gain `k`. Returns the
/// solution and its final gain.
fn newton_kleinman(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    lambda: f64,
    mut k: DMatrix<f64>,
) -> Result<DMatrix<f64>, ControlError> {
    let qn = q.norm().max(f64::MIN_POSITIVE);
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_NEWTON_STEPS {
        let ak = a - b * &k;
        let c = q + k.transpose() * &k * lambda;
        let p = solve_lyapunov(&ak, &c)?;
        k = b.transpose() * &p / lambda;
        residual = are_residual(a, b, q, lambda, &p) / qn;
        if residual <= ARE_TOL {
            return Ok(p);
        }
    }
    Err(ControlError::NoConvergence {
        steps: MAX_NEWTON_STEPS,
        residual,
    })
}

/// Stabilizing solution of `AᵀP + PA − P B R⁻¹ Bᵀ P + Q = 0`, `R = λ I`.
///
/// If `A` is not Hurwitz, the zero gain stabilizes `A − σI` for
/// `σ` beyond the spectral abscissa. The shift is walked back to zero, each
/// stage starting from the previous stage's gain; a stage whose initial
/// closed loop is unstable is retried with half the step.
pub fn solve_are(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>, ControlError> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || b.ncols() == 0 {
        return Err(ControlError::InvalidSystem(
            "inconsistent matrix shapes".into(),
        ));
    }
    if n > MAX_STATE_DIM {
        return Err(ControlError::InvalidSystem(format!(
            "state dimension {n} exceeds {MAX_STATE_DIM}"
        )));
    }
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(ControlError::InvalidSystem(format!(
            "control penalty {lambda} must be positive"
        )));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let mut k = DMatrix::zeros(b.ncols(), n);
    let scale = a.norm().max(1.0);
    let alpha = spectral_abscissa(a);
    if is_stable(a, scale) {
        return check_stabilizing(a, b, lambda, scale, newton_kleinman(a, b, q, lambda, k)?);
    }
    let mut sigma = alpha.max(0.0) + 1.0;
    let mut p = newton_kleinman(&(a - &eye * sigma), b, q, lambda, k.clone())?;
    k = b.transpose() * &p / lambda;
    while sigma > 0.0 {
        let mut next = 0.0;
        loop {
            let shifted = a - &eye * next;
            if is_stable(&(&shifted - b * &k), scale) {
                break;
            }
            next = 0.5 * (next + sigma);
            if sigma - next < 1e-8 * scale {
                return Err(ControlError::NotStabilizable);
            }
        }
        sigma = next;
        p = newton_kleinman(&(a - &eye * sigma), b, q, lambda, k.clone())?;
        k = b.transpose() * &p / lambda;
    }
    check_stabilizing(a, b, lambda, scale, p)
}

fn check_stabilizing(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    lambda: f64,
    scale: f64,
    p: DMatrix<f64>,
) -> Result<DMatrix<f64>, ControlError> {
    if is_stable(&(a - b * b.transpose() * &p / lambda), scale) {
        Ok(p)
    } else {
        Err(ControlError::NotStabilizable)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumann_rows_sum_to_zero() {
        let s = discretize_heat_equation(7).unwrap();
        for i in 0..7 {
            assert!(s.a.row(i).sum().abs() < 1e-12);
        }
        let s = discretize_heat_equation(3).unwrap();
        assert_eq!(
            s.a.row(1).iter().copied().collect::<Vec<_>>(),
            vec![1.0, -2.0, 1.0]
        );
    }

    #[test]
    fn control_indicator() {
        let s = discretize_heat_equation(8).unwrap();
        let marked: Vec<f64> = s
            .nodes
            .iter()
            .zip(s.b.iter())
            .filter(|(_, &b)| b == 1.0)
            .map(|(&x, _)| x)
            .collect();
        assert_eq!(marked.len(), 2);
        assert!(marked.iter().all(|x| x.abs() <= 0.4));
        assert!(discretize_heat_equation(1).is_err());
    }

    #[test]
    fn scalar_roots() {
        // stabilizing root P = λa + λ√(a² + q b²/λ)
        for (a, l) in [(-1.0, 1.0), (1.0, 1.0), (0.0, 2.0), (0.5, 0.3)] {
            let p = solve_are(
                &DMatrix::from_element(1, 1, a),
                &DMatrix::from_element(1, 1, 1.0),
                &DMatrix::from_element(1, 1, 1.0),
                l,
            )
            .unwrap()[(0, 0)];
            let exact = l * a + l * (a * a + 1.0 / l).sqrt();
            assert!((p - exact).abs() < 1e-10, "a={a}: {p} vs {exact}");
        }
    }

    #[test]
    fn lyapunov_solution() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 4.0]);
        let x = solve_lyapunov(&a, &c).unwrap();
        assert!((a.transpose() * &x + &x * &a + c).norm() < 1e-12);
    }
}
