//! Alternating least squares over the cores of a (block-sparse) train.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::block::BlockSparseTT;
use crate::error::Result;
use crate::linalg::solve_ridge;
use crate::tensor::DenseTensor;
use crate::tt::{dims3, Orthogonality, Side, TensorTrain};

use super::evaluate::{evaluate_with, relative_residual, Stacks};
use super::samples::SampleSet;

/// Solver settings. Every field has a default, so `{}` is a valid document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Sweep limit of a single ALS run.
    pub max_sweeps: usize,
    /// Stop once a sweep improves the relative residual by less than this fraction.
    pub tol: f64,
    /// Stop once the relative training residual drops below this value.
    pub min_residual: f64,
    /// Ridge weight `λ` of the micro-steps; 0 gives plain least squares.
    pub lambda: f64,
    /// Seed for the random initial model.
    pub seed: u64,
    /// Sweep limit of each component solve inside the direct-sum solver.
    pub inner_sweeps: usize,
    /// Outer iteration limit of the direct-sum solver.
    pub max_outer: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 100,
            tol: 1e-8,
            min_residual: 1e-14,
            lambda: 0.0,
            seed: 0,
            inner_sweeps: 10,
            max_outer: 50,
        }
    }
}

impl FitOptions {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Training residual fell below `min_residual`.
    Converged,
    MaxSweeps,
    /// Relative improvement over a sweep fell below `tol`.
    Stagnation,
}

/// Outcome of a fit.
///
/// For single-train solvers `sweep_residuals` has one entry per sweep and
/// `micro_residuals` one per core update. The direct-sum solver records one
/// entry per outer iteration and one per component update respectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub initial_residual: f64,
    pub sweep_residuals: Vec<f64>,
    pub micro_residuals: Vec<f64>,
    pub test_error: Option<f64>,
    pub sweeps: usize,
    pub termination: Termination,
    pub seconds: f64,
    pub seed: u64,
    pub notes: Vec<String>,
}

impl FitReport {
    pub(crate) fn new(seed: u64) -> Self {
        Self {
            initial_residual: f64::NAN,
            sweep_residuals: Vec::new(),
            micro_residuals: Vec::new(),
            test_error: None,
            sweeps: 0,
            termination: Termination::MaxSweeps,
            seconds: 0.0,
            seed,
            notes: Vec::new(),
        }
    }

    pub fn final_residual(&self) -> f64 {
        self.sweep_residuals
            .last()
            .copied()
            .unwrap_or(self.initial_residual)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// What ALS needs from a model: its train, per-core masks, and gauge moves
/// that respect the masks.
pub(crate) trait AlsModel {
    fn train(&self) -> &TensorTrain;
    fn core_mask(&self, c: usize) -> Vec<bool>;
    fn replace_core(&mut self, c: usize, values: Vec<f64>);
    fn shift_left(&mut self, c: usize);
    fn right_orthogonalize(&mut self);
    fn mark_left(&mut self);
}

impl AlsModel for BlockSparseTT {
    fn train(&self) -> &TensorTrain {
        self.tt()
    }
    fn core_mask(&self, c: usize) -> Vec<bool> {
        self.structure().mask(c)
    }
    fn replace_core(&mut self, c: usize, values: Vec<f64>) {
        let shape = self.core(c).shape().to_vec();
        let core = DenseTensor::new(shape, values).expect("same length");
        self.set_core(c, core)
            .expect("masked solve respects the pattern");
        self.set_orthogonality(Orthogonality::Mixed { core: c });
    }
    fn shift_left(&mut self, c: usize) {
        self.left_step(c);
        self.set_orthogonality(Orthogonality::Mixed { core: c + 1 });
    }
    fn right_orthogonalize(&mut self) {
        self.orthogonalize(Side::Right);
    }
    fn mark_left(&mut self) {
        self.set_orthogonality(Orthogonality::Left);
    }
}

impl AlsModel for TensorTrain {
    fn train(&self) -> &TensorTrain {
        self
    }
    fn core_mask(&self, c: usize) -> Vec<bool> {
        vec![true; self.core(c).len()]
    }
    fn replace_core(&mut self, c: usize, values: Vec<f64>) {
        let shape = self.core(c).shape().to_vec();
        self.set_core(c, DenseTensor::new(shape, values).expect("same length"))
            .expect("same shape");
        self.set_orthogonality(Orthogonality::Mixed { core: c });
    }
    fn shift_left(&mut self, c: usize) {
        self.left_step(c);
        self.set_orthogonality(Orthogonality::Mixed { core: c + 1 });
    }
    fn right_orthogonalize(&mut self) {
        self.orthogonalize(Side::Right);
    }
    fn mark_left(&mut self) {
        self.set_orthogonality(Orthogonality::Left);
    }
}

/// Result of one restricted core update.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroStep {
    /// Relative residual of the local system after the update.
    pub residual: f64,
    /// Number of free entries.
    pub unknowns: usize,
}

/// Solves the masked local system of core `c` and writes the solution.
fn solve_core<M: AlsModel>(
    model: &mut M,
    stacks: &Stacks,
    meas: &[&DMatrix<f64>],
    y: &DVector<f64>,
    c: usize,
    lambda: f64,
) -> Result<MicroStep> {
    let core = model.train().core(c);
    let shape = dims3(core);
    let len = core.len();
    let mask = model.core_mask(c);
    let (phi, cols) = stacks.phi(c, meas[c], shape, &mask);
    let mut values = vec![0.0; len];
    if cols.is_empty() {
        model.replace_core(c, values);
        let residual = relative_residual(&vec![0.0; y.len()], y.as_slice());
        return Ok(MicroStep {
            residual,
            unknowns: 0,
        });
    }
    let v = solve_ridge(&phi, y, lambda)?;
    let fitted = &phi * &v;
    let residual = relative_residual(fitted.as_slice(), y.as_slice());
    for (&e, &x) in cols.iter().zip(v.iter()) {
        values[e] = x;
    }
    model.replace_core(c, values);
    Ok(MicroStep {
        residual,
        unknowns: cols.len(),
    })
}

/// One masked micro-step on core `k` of a block-sparse model, with stacks
/// contracted from scratch. Off-pattern entries stay exactly zero.
pub fn micro_step(
    model: &mut BlockSparseTT,
    samples: &SampleSet,
    k: usize,
    lambda: Option<f64>,
) -> Result<MicroStep> {
    let meas = samples.measurements();
    let stacks = Stacks::new(model.tt(), &meas, k)?;
    let y = DVector::from_column_slice(samples.targets());
    solve_core(model, &stacks, &meas, &y, k, lambda.unwrap_or(0.0))
}

/// Sweeps `k = 0..d` until one of the stopping rules fires. Each sweep
/// starts from a right-orthogonal gauge; after each update the core is
/// left-orthogonalized and the weight moves to the next core.
pub(crate) fn run_als<M: AlsModel>(
    model: &mut M,
    meas: &[&DMatrix<f64>],
    targets: &[f64],
    opts: &FitOptions,
    max_sweeps: usize,
    report: &mut FitReport,
) -> Result<()> {
    let start = Instant::now();
    let d = model.train().order();
    let y = DVector::from_column_slice(targets);
    let mut prev = relative_residual(&evaluate_with(model.train(), meas)?, targets);
    report.initial_residual = prev;
    report.termination = Termination::MaxSweeps;
    if prev < opts.min_residual {
        report.termination = Termination::Converged;
        report.seconds += start.elapsed().as_secs_f64();
        return Ok(());
    }
    for _ in 0..max_sweeps {
        model.right_orthogonalize();
        let mut stacks = Stacks::new(model.train(), meas, 0)?;
        let mut current = prev;
        for c in 0..d {
            let step = solve_core(model, &stacks, meas, &y, c, opts.lambda)?;
            if step.unknowns == 0 {
                report
                    .notes
                    .push(format!("core {c} has an empty mask and was set to zero"));
            }
            report.micro_residuals.push(step.residual);
            current = step.residual;
            if c + 1 < d {
                model.shift_left(c);
                stacks.push_left(c, meas[c], model.train().core(c));
            }
        }
        model.mark_left();
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
    }
    report.seconds += start.elapsed().as_secs_f64();
    Ok(())
}
