use bstt_experiments::control::{are_residual, solve_lyapunov};
use bstt_experiments::{discretize_heat_equation, solve_are};
use nalgebra::DMatrix;

#[test]
fn heat_are_solution() {
    let sys = discretize_heat_equation(8).unwrap();
    let p = solve_are(&sys.a, &sys.b, &sys.q, 1.0).unwrap();
    assert!(are_residual(&sys.a, &sys.b, &sys.q, 1.0, &p) <= 1e-10 * sys.q.norm());
    assert!((&p - p.transpose()).norm() <= 1e-12 * p.norm());
    let eig = p.clone().symmetric_eigen().eigenvalues;
    assert!(eig.iter().all(|&l| l >= -1e-12), "{eig}");
    // the closed loop is stable
    let closed = &sys.a - &sys.b * sys.b.transpose() * &p;
    assert!(closed.complex_eigenvalues().iter().all(|z| z.re < 0.0));
}

#[test]
fn scalar_example_root() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let p = solve_are(&DMatrix::from_element(1, 1, -1.0), &one, &one, 1.0).unwrap();
    assert!((p[(0, 0)] - (2f64.sqrt() - 1.0)).abs() < 1e-10);
    let p = solve_are(&one, &one, &one, 1.0).unwrap();
    assert!((p[(0, 0)] - (1.0 + 2f64.sqrt())).abs() < 1e-10);
}

#[test]
fn unstable_coupled_system() {
    // two unstable modes driven through one input
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let q = DMatrix::identity(2, 2);
    let p = solve_are(&a, &b, &q, 0.5).unwrap();
    assert!(are_residual(&a, &b, &q, 0.5, &p) <= 1e-10 * q.norm());
    let closed = &a - &b * b.transpose() * &p / 0.5;
    assert!(closed.complex_eigenvalues().iter().all(|z| z.re < 0.0));
}

#[test]
fn rejects_bad_input() {
    let sys = discretize_heat_equation(4).unwrap();
    assert!(solve_are(&sys.a, &sys.b, &sys.q, 0.0).is_err());
    assert!(solve_are(&sys.a, &sys.b, &DMatrix::identity(3, 3), 1.0).is_err());
    // an uncontrollable unstable mode cannot be stabilized
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    assert!(solve_are(&a, &b, &DMatrix::identity(2, 2), 1.0).is_err());
}

#[test]
fn lyapunov_against_kronecker_free_check() {
    let sys = discretize_heat_equation(6).unwrap();
    let a = &sys.a - DMatrix::identity(6, 6);
    let c = DMatrix::from_fn(6, 6, |i, j| 1.0 / (1 + i + j) as f64);
    let x = solve_lyapunov(&a, &c).unwrap();
    assert!((a.transpose() * &x + &x * &a + c).norm() < 1e-10);
}
