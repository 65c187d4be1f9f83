//! Empirical least squares on tensor-train ansatz spaces.

mod als;
mod evaluate;
mod fit;
mod samples;

pub use als::{micro_step, FitOptions, FitReport, MicroStep, Termination};
pub use evaluate::{
    assemble_phi, augmented_measurements, evaluate_with, relative_error, Evaluate, Stacks, SumModel,
};
pub use fit::{
    capped_ranks, fit_augmented, fit_homogeneous, fit_linear, fit_sum, fit_tt, refine_homogeneous,
    split_seed, LinearModel, LINEAR_MAX_COLUMNS,
};
pub use samples::SampleSet;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::{build_block_structure, BlockSparseTT};
    use crate::poly::Dictionary;
    use crate::space::SpaceDescriptor;
    use crate::tt::Side;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_target(
        model: &dyn Evaluate,
        m: usize,
        d: usize,
        p: usize,
        seed: u64,
        dict: &str,
    ) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = SampleSet::uniform_points(m, d, &mut rng);
        let dict = Dictionary::from_name(dict, p).unwrap();
        let blank = SampleSet::new(pts, vec![0.0; m], dict).unwrap();
        let y = model.evaluate(&blank).unwrap();
        blank.with_targets(y).unwrap()
    }

    #[test]
    fn constant_fit_is_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = SampleSet::uniform_points(30, 3, &mut rng);
        let y: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..2.0)).collect();
        let mean = y.iter().sum::<f64>() / 30.0;
        let s = SampleSet::new(pts, y, Dictionary::monomial(1).unwrap()).unwrap();
        let (model, _) = fit_homogeneous(&s, 0, 1, &FitOptions::default()).unwrap();
        for v in model.evaluate(&s).unwrap() {
            assert!((v - mean).abs() < 1e-12);
        }
        let (sum, _) = fit_sum(&s, 0, 1, &FitOptions::default()).unwrap();
        for v in sum.evaluate(&s).unwrap() {
            assert!((v - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn one_core_full_mask_is_linear_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = SampleSet::uniform_points(25, 1, &mut rng);
        let y: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = SampleSet::new(pts, y.clone(), Dictionary::legendre(4).unwrap()).unwrap();
        let (tt, _) = fit_tt(&s, 1, &FitOptions::default()).unwrap();
        let a = s.xi(0).transpose();
        let w = a
            .clone()
            .svd(true, true)
            .solve(&DVector::from_vec(y), 1e-14)
            .unwrap();
        let expected = &a * w;
        for (u, e) in tt.evaluate(&s).unwrap().iter().zip(expected.iter()) {
            assert!((u - e).abs() < 1e-12);
        }
    }

    #[test]
    fn micro_step_matches_restricted_oracle() {
        let truth = BlockSparseTT::random(build_block_structure(4, 2, 2, None).unwrap(), 11);
        let s = sample_target(&truth, 200, 4, 3, 3, "monomial");
        let mut model = BlockSparseTT::random(truth.structure().clone(), 12);
        model.orthogonalize_around(2);
        let before = relative_error(&model, &s).unwrap();
        // oracle: restricted system through the full operator, solved by normal equations
        let phi = assemble_phi(model.tt(), &s, 2).unwrap();
        let mask = model.structure().mask(2);
        let cols: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let a = phi.select_columns(&cols);
        let y = DVector::from_column_slice(s.targets());
        let v = a.tr_mul(&a).cholesky().unwrap().solve(&a.tr_mul(&y));
        let oracle = (&a * v - &y).norm() / y.norm();
        let step = micro_step(&mut model, &s, 2, None).unwrap();
        assert!((step.residual - oracle).abs() <= 1e-10);
        assert!(step.residual <= before + 1e-10);
        assert!((relative_error(&model, &s).unwrap() - step.residual).abs() < 1e-10);
        assert_eq!(model.violation_mass(), 0.0);
    }

    #[test]
    fn homogeneous_self_recovery() {
        let truth = BlockSparseTT::random(build_block_structure(5, 2, 2, None).unwrap(), 4);
        let m = 10 * truth.dof();
        let train = sample_target(&truth, m, 5, 3, 5, "monomial");
        let test = sample_target(&truth, 200, 5, 3, 6, "monomial");
        let opts = FitOptions {
            seed: 7,
            ..Default::default()
        };
        let (model, report) = fit_homogeneous(&train, 2, 2, &opts).unwrap();
        assert!(relative_error(&model, &test).unwrap() < 1e-8);
        assert!(report
            .micro_residuals
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-10));
        assert_eq!(model.violation_mass(), 0.0);
    }

    #[test]
    fn sum_and_augmented_recover_sum_of_components() {
        let d = 4;
        let p = 3;
        let mk = |h: usize, seed| {
            BlockSparseTT::random(
                crate::block::build_block_structure_with_dims(h, 2, None, vec![p; d], false)
                    .unwrap(),
                seed,
            )
        };
        let truth = SumModel(vec![mk(0, 1), mk(2, 2)]);
        let dof: usize = (0..=2).map(|h| mk(h, 0).dof()).sum();
        let train = sample_target(&truth, 10 * dof, d, p, 8, "legendre");
        let test = sample_target(&truth, 200, d, p, 9, "legendre");
        let opts = FitOptions {
            seed: 3,
            ..Default::default()
        };
        let (sum, report) = fit_sum(&train, 2, 2, &opts).unwrap();
        assert!(relative_error(&sum, &test).unwrap() < 1e-7, "{report:?}");
        assert!(report
            .micro_residuals
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-10));
        let (aug, _) = fit_augmented(&train, 2, 2, &opts).unwrap();
        assert!(relative_error(&aug, &test).unwrap() < 1e-6);
        // the augmented evaluation is the sum of its degree slices
        let total = aug.evaluate(&test).unwrap();
        let mut acc = vec![0.0; test.len()];
        for h in 0..=2 {
            for (a, v) in acc
                .iter_mut()
                .zip(aug.degree_slice(h).unwrap().evaluate(&test).unwrap())
            {
                *a += v;
            }
        }
        for (a, b) in acc.iter().zip(&total) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn linear_fit_recovers_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let q = &q + q.transpose();
        let pts = SampleSet::uniform_points(50, 3, &mut rng);
        let s = SampleSet::from_fn(pts, Dictionary::monomial(3).unwrap(), |x| {
            let v = DVector::from_column_slice(x);
            (v.transpose() * &q * v)[(0, 0)]
        })
        .unwrap();
        let space: SpaceDescriptor = "W(d=3,g=2)".parse().unwrap();
        let (model, report) = fit_linear(&s, &space, &FitOptions::default()).unwrap();
        assert_eq!(model.coefficients.len(), 6);
        assert!(report.final_residual() < 1e-12);
    }

    #[test]
    fn options_json_defaults() {
        let o = FitOptions::from_json(r#"{"max_sweeps": 5, "lambda": 0.1}"#).unwrap();
        assert_eq!(o.max_sweeps, 5);
        assert_eq!(o.lambda, 0.1);
        assert_eq!(o.tol, 1e-8);
        assert!(FitOptions::from_json(r#"{"typo": 1}"#).is_err());
    }

    #[test]
    fn report_json_round_trip() {
        let truth = BlockSparseTT::random(build_block_structure(3, 2, 2, None).unwrap(), 1);
        let s = sample_target(&truth, 60, 3, 3, 2, "monomial");
        let (_, report) = fit_homogeneous(&s, 2, 2, &FitOptions::default()).unwrap();
        let json = report.to_json().unwrap();
        assert!(json.contains("\"termination\""));
        let back: FitReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn fits_are_order_independent() {
        let truth = BlockSparseTT::random(build_block_structure(4, 2, 2, None).unwrap(), 21);
        let s = sample_target(&truth, 150, 4, 3, 22, "monomial");
        let mut perm: Vec<usize> = (0..150).collect();
        perm.reverse();
        perm.swap(3, 70);
        let shuffled = s.permuted(&perm).unwrap();
        let opts = FitOptions::default();
        let (a, _) = fit_homogeneous(&s, 2, 2, &opts).unwrap();
        let (b, _) = fit_homogeneous(&shuffled, 2, 2, &opts).unwrap();
        let ua = a.evaluate(&s).unwrap();
        let ub = b.evaluate(&s).unwrap();
        for (x, y) in ua.iter().zip(&ub) {
            assert!((x - y).abs() <= 1e-10);
        }
        let mut t = a.clone();
        t.orthogonalize(Side::Left);
        assert_eq!(t.violation_mass(), 0.0);
    }
}
