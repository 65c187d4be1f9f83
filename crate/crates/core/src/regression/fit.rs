//! Least-squares solvers for the supported ansatz spaces.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::block::{build_block_structure_with_dims, AugmentedBlockSparseTT, BlockSparseTT};
use crate::error::{Error, Result};
use crate::linalg::solve_ridge;
use crate::space::{space_dimension, SpaceDescriptor};
use crate::tensor::multi_indices;
use crate::tt::TensorTrain;

use super::als::{run_als, FitOptions, FitReport, Termination};
use super::evaluate::{augmented_measurements, relative_residual, Evaluate, SumModel};
use super::samples::SampleSet;

fn require_degree(samples: &SampleSet, g: usize) -> Result<usize> {
    let p = samples.dictionary().size();
    if p < g + 1 {
        return Err(Error::InvalidArgument(format!(
            "dictionary of size {p} cannot represent degree {g}"
        )));
    }
    Ok(p)
}

/// Seed of the `index`-th independent stream derived from `seed`.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined value
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Least squares on the block-sparse homogeneous space `B_ρ(W_g^d)`,
/// starting from a random block-sparse model seeded by `opts.seed`.
pub fn fit_homogeneous(
    samples: &SampleSet,
    g: usize,
    rho_max: usize,
    opts: &FitOptions,
) -> Result<(BlockSparseTT, FitReport)> {
    let p = require_degree(samples, g)?;
    let bs = build_block_structure_with_dims(g, rho_max, None, vec![p; samples.dim()], false)?;
    let mut model = BlockSparseTT::random(bs, opts.seed);
    let report = refine_homogeneous(&mut model, samples, opts)?;
    Ok((model, report))
}

/// Continues ALS from the given model.
pub fn refine_homogeneous(
    model: &mut BlockSparseTT,
    samples: &SampleSet,
    opts: &FitOptions,
) -> Result<FitReport> {
    let mut report = FitReport::new(opts.seed);
    run_als(
        model,
        &samples.measurements(),
        samples.targets(),
        opts,
        opts.max_sweeps,
        &mut report,
    )?;
    Ok(report)
}

/// Least squares on `S_{g,ρ}^d = ⊕_h B_ρ(W_h^d)` by alternating over the
/// homogeneous components in ascending degree. Each component solve is
/// warm-started and fits the residual of all other components.
pub fn fit_sum(
    samples: &SampleSet,
    g: usize,
    rho_max: usize,
    opts: &FitOptions,
) -> Result<(SumModel, FitReport)> {
    let start = Instant::now();
    let p = require_degree(samples, g)?;
    let d = samples.dim();
    let y = samples.targets();
    let m = y.len() as f64;
    let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = ynorm / (g + 1) as f64 / m.sqrt();

    let mut parts = Vec::with_capacity(g + 1);
    for h in 0..=g {
        let bs = build_block_structure_with_dims(h, rho_max, None, vec![p; d], false)?;
        let mut part = BlockSparseTT::random(bs, split_seed(opts.seed, h as u64));
        // right-orthogonal, so the norm sits in core 0
        let norm = part.core(0).norm();
        if norm > 0.0 {
            part.scale(scale / norm, 0);
        }
        parts.push(part);
    }
    let meas = samples.measurements();
    let mut evals: Vec<Vec<f64>> = parts
        .iter()
        .map(|c| c.evaluate(samples))
        .collect::<Result<_>>()?;
    let combined = |evals: &[Vec<f64>]| {
        let mut u = vec![0.0; y.len()];
        for e in evals {
            for (a, b) in u.iter_mut().zip(e) {
                *a += b;
            }
        }
        relative_residual(&u, y)
    };

    let mut report = FitReport::new(opts.seed);
    let mut prev = combined(&evals);
    report.initial_residual = prev;
    if prev < opts.min_residual {
        report.termination = Termination::Converged;
    }
    while report.termination != Termination::Converged && report.sweeps < opts.max_outer {
        for h in 0..=g {
            let z: Vec<f64> = (0..y.len())
                .map(|j| {
                    y[j] - (0..=g)
                        .filter(|&k| k != h)
                        .map(|k| evals[k][j])
                        .sum::<f64>()
                })
                .collect();
            let mut inner = FitReport::new(opts.seed);
            run_als(
                &mut parts[h],
                &meas,
                &z,
                opts,
                opts.inner_sweeps,
                &mut inner,
            )?;
            report.notes.extend(inner.notes);
            evals[h] = parts[h].evaluate(samples)?;
            report.micro_residuals.push(combined(&evals));
        }
        let current = combined(&evals);
        report.sweeps += 1;
        report.sweep_residuals.push(current);
        if current < opts.min_residual {
            report.termination = Termination::Converged;
            break;
        }
        if prev - current < opts.tol * prev {
            report.termination = Termination::Stagnation;
            break;
        }
        prev = current;
        report.termination = Termination::MaxSweeps;
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok((SumModel(parts), report))
}

/// Least squares on the augmented space: one order-`(d+1)` train whose
/// shadow core is measured by the all-ones matrix.
pub fn fit_augmented(
    samples: &SampleSet,
    g: usize,
    rho_max: usize,
    opts: &FitOptions,
) -> Result<(AugmentedBlockSparseTT, FitReport)> {
    let p = require_degree(samples, g)?;
    let mut dims = vec![p; samples.dim()];
    dims.push(g + 1);
    let bs = build_block_structure_with_dims(g, rho_max, None, dims, true)?;
    let mut model = BlockSparseTT::random(bs, opts.seed);
    let ones = augmented_measurements(samples, g);
    let mut meas = samples.measurements();
    meas.push(&ones);
    let mut report = FitReport::new(opts.seed);
    run_als(
        &mut model,
        &meas,
        samples.targets(),
        opts,
        opts.max_sweeps,
        &mut report,
    )?;
    Ok((AugmentedBlockSparseTT::new(model)?, report))
}

/// Ranks `min{r, p^k, p^{d-k}}` of `T_r(V_p^d)`.
pub fn capped_ranks(r: usize, d: usize, p: usize) -> Vec<usize> {
    let pw = |e: usize| p.checked_pow(e as u32).unwrap_or(usize::MAX);
    (1..d).map(|k| r.min(pw(k)).min(pw(d - k))).collect()
}

/// Plain ALS on the TT manifold `T_r(V_p^d)` from a random normal start.
pub fn fit_tt(
    samples: &SampleSet,
    r: usize,
    opts: &FitOptions,
) -> Result<(TensorTrain, FitReport)> {
    let d = samples.dim();
    let p = samples.dictionary().size();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut model = TensorTrain::random(&vec![p; d], &capped_ranks(r, d, p), &mut rng)?;
    let mut report = FitReport::new(opts.seed);
    run_als(
        &mut model,
        &samples.measurements(),
        samples.targets(),
        opts,
        opts.max_sweeps,
        &mut report,
    )?;
    Ok((model, report))
}

/// Linear combination of dictionary products `Π_k Ψ_{m_k}(x_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub indices: Vec<Vec<usize>>,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    fn design(&self, samples: &SampleSet) -> Result<DMatrix<f64>> {
        if let Some(idx) = self.indices.first() {
            if idx.len() != samples.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "model in {} variables for {}-dimensional samples",
                    idx.len(),
                    samples.dim()
                )));
            }
        }
        let p = samples.dictionary().size();
        if self.indices.iter().flatten().any(|&i| i >= p) {
            return Err(Error::DimensionMismatch(
                "index exceeds dictionary size".into(),
            ));
        }
        Ok(DMatrix::from_fn(
            samples.len(),
            self.indices.len(),
            |j, col| {
                self.indices[col]
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| samples.xi(k)[(i, j)])
                    .product()
            },
        ))
    }
}

impl Evaluate for LinearModel {
    fn evaluate(&self, samples: &SampleSet) -> Result<Vec<f64>> {
        let a = self.design(samples)?;
        Ok((a * DVector::from_column_slice(&self.coefficients))
            .iter()
            .copied()
            .collect())
    }
}

/// Column cap for the dense design matrix of linear fits.
pub const LINEAR_MAX_COLUMNS: u64 = 20_000;

/// Direct least squares on a linear space `V`, `W` or `S`.
pub fn fit_linear(
    samples: &SampleSet,
    space: &SpaceDescriptor,
    opts: &FitOptions,
) -> Result<(LinearModel, FitReport)> {
    let start = Instant::now();
    let d = samples.dim();
    let p = samples.dictionary().size();
    if space.d() != d || space.p() != p {
        return Err(Error::DimensionMismatch(format!(
            "space {space} does not match {d}-dimensional samples with dictionary size {p}"
        )));
    }
    let cols = space_dimension(space)?;
    if cols > LINEAR_MAX_COLUMNS {
        return Err(Error::Capacity {
            entries: cols as usize,
            cap: LINEAR_MAX_COLUMNS as usize,
        });
    }
    let keep: Box<dyn Fn(usize) -> bool> = match *space {
        SpaceDescriptor::V { .. } => Box::new(|_| true),
        SpaceDescriptor::W { g, .. } => Box::new(move |s| s == g),
        SpaceDescriptor::S { g, .. } => Box::new(move |s| s <= g),
        _ => unreachable!("space_dimension rejects other families"),
    };
    let indices: Vec<Vec<usize>> = multi_indices(&vec![p; d])
        .filter(|m| keep(m.iter().sum()))
        .collect();
    let mut model = LinearModel {
        indices,
        coefficients: Vec::new(),
    };
    let a = model.design(samples)?;
    let y = DVector::from_column_slice(samples.targets());
    let v = solve_ridge(&a, &y, opts.lambda)?;
    let fitted = &a * &v;
    model.coefficients = v.iter().copied().collect();
    let mut report = FitReport::new(opts.seed);
    report.initial_residual = 1.0;
    let res = relative_residual(fitted.as_slice(), samples.targets());
    report.sweep_residuals.push(res);
    report.micro_residuals.push(res);
    report.sweeps = 1;
    report.termination = Termination::Converged;
    report.seconds = start.elapsed().as_secs_f64();
    Ok((model, report))
}
