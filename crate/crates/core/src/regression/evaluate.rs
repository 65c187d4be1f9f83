//! Sample evaluation of tensor-train models through stack contractions.

use nalgebra::DMatrix;

use crate::block::{AugmentedBlockSparseTT, BlockSparseTT};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;
use crate::tt::{dims3, TensorTrain, ORTHOGONALITY_TOL};

use super::samples::SampleSet;

/// `L'[m, ℓ2] = Σ_{ℓ1, i} L[m, ℓ1] Ξ[i, m] C(ℓ1, i, ℓ2)`.
pub(crate) fn left_stack_step(
    prev: &DMatrix<f64>,
    xi: &DMatrix<f64>,
    core: &DenseTensor,
) -> DMatrix<f64> {
    let [r0, n, r1] = dims3(core);
    let m = prev.nrows();
    let z = DMatrix::from_fn(m, r0 * n, |j, col| prev[(j, col / n)] * xi[(col % n, j)]);
    z * DMatrix::from_row_slice(r0 * n, r1, core.values())
}

/// `R'[m, ℓ1] = Σ_{i, ℓ2} C(ℓ1, i, ℓ2) Ξ[i, m] R[m, ℓ2]`.
pub(crate) fn right_stack_step(
    next: &DMatrix<f64>,
    xi: &DMatrix<f64>,
    core: &DenseTensor,
) -> DMatrix<f64> {
    let [r0, n, r1] = dims3(core);
    let m = next.nrows();
    let z = DMatrix::from_fn(m, n * r1, |j, col| xi[(col / r1, j)] * next[(j, col % r1)]);
    z * DMatrix::from_row_slice(r0, n * r1, core.values()).transpose()
}

fn check_measurements(tt: &TensorTrain, meas: &[&DMatrix<f64>]) -> Result<()> {
    if tt.order() != meas.len() {
        return Err(Error::DimensionMismatch(format!(
            "model of order {} for {} measurement matrices",
            tt.order(),
            meas.len()
        )));
    }
    for (k, (n, xi)) in tt.mode_dims().iter().zip(meas).enumerate() {
        if *n != xi.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "mode {k} has dimension {n} but the dictionary has size {}",
                xi.nrows()
            )));
        }
    }
    if meas.windows(2).any(|w| w[0].ncols() != w[1].ncols()) {
        return Err(Error::DimensionMismatch(
            "measurement matrices disagree in M".into(),
        ));
    }
    Ok(())
}

/// Evaluations of a train against arbitrary measurement matrices (`n_k × M`).
pub fn evaluate_with(tt: &TensorTrain, meas: &[&DMatrix<f64>]) -> Result<Vec<f64>> {
    check_measurements(tt, meas)?;
    let m = meas[0].ncols();
    let mut acc = DMatrix::from_element(m, 1, 1.0);
    for (core, xi) in tt.cores().iter().zip(meas) {
        acc = left_stack_step(&acc, xi, core);
    }
    Ok(acc.column(0).iter().copied().collect())
}

/// Measurement matrices of the augmented train: the shadow mode is
/// contracted with the ones vector at every sample.
pub fn augmented_measurements(samples: &SampleSet, g: usize) -> DMatrix<f64> {
    DMatrix::from_element(g + 1, samples.len(), 1.0)
}

pub trait Evaluate {
    fn evaluate(&self, samples: &SampleSet) -> Result<Vec<f64>>;
}

impl Evaluate for TensorTrain {
    fn evaluate(&self, samples: &SampleSet) -> Result<Vec<f64>> {
        evaluate_with(self, &samples.measurements())
    }
}

impl Evaluate for BlockSparseTT {
    fn evaluate(&self, samples: &SampleSet) -> Result<Vec<f64>> {
        self.tt().evaluate(samples)
    }
}

impl Evaluate for AugmentedBlockSparseTT {
    fn evaluate(&self, samples: &SampleSet) -> Result<Vec<f64>> {
        let ones = augmented_measurements(samples, self.degree());
        let mut meas = samples.measurements();
        meas.push(&ones);
        evaluate_with(self.inner().tt(), &meas)
    }
}

/// A direct sum of homogeneous components.
#[derive(Debug, Clone, PartialEq)]
pub struct SumModel(pub Vec<BlockSparseTT>);

impl Evaluate for SumModel {
    fn evaluate(&self, samples: &SampleSet) -> Result<Vec<f64>> {
        let mut out = vec![0.0; samples.len()];
        for part in &self.0 {
            for (o, v) in out.iter_mut().zip(part.evaluate(samples)?) {
                *o += v;
            }
        }
        Ok(out)
    }
}

/// `‖u − y‖ / ‖y‖` over the sample set (absolute error if `y = 0`).
pub fn relative_error(model: &dyn Evaluate, samples: &SampleSet) -> Result<f64> {
    let u = model.evaluate(samples)?;
    Ok(relative_residual(&u, samples.targets()))
}

pub(crate) fn relative_residual(u: &[f64], y: &[f64]) -> f64 {
    let num: f64 = u
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let den: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Left and right partial contractions of a train against the samples.
///
/// `left[c]` is `M × r_c` and contracts cores `0..c`; `right[c]` is
/// `M × r_c` and contracts cores `c..d`. Only the stacks needed around the
/// current core are kept valid.
#[derive(Debug, Clone)]
pub struct Stacks {
    left: Vec<DMatrix<f64>>,
    right: Vec<DMatrix<f64>>,
}

impl Stacks {
    /// Stacks for an operator at core `k`: left stacks `0..=k`, right stacks `k+1..=d`.
    pub fn new(tt: &TensorTrain, meas: &[&DMatrix<f64>], k: usize) -> Result<Self> {
        check_measurements(tt, meas)?;
        let d = tt.order();
        let m = meas[0].ncols();
        let empty = DMatrix::zeros(0, 0);
        let mut left = vec![empty.clone(); d + 1];
        let mut right = vec![empty; d + 1];
        left[0] = DMatrix::from_element(m, 1, 1.0);
        right[d] = DMatrix::from_element(m, 1, 1.0);
        for c in 0..k {
            left[c + 1] = left_stack_step(&left[c], meas[c], tt.core(c));
        }
        for c in (k + 1..d).rev() {
            right[c] = right_stack_step(&right[c + 1], meas[c], tt.core(c));
        }
        Ok(Self { left, right })
    }

    /// Recomputes `left[c+1]` from the (updated) core `c`.
    pub fn push_left(&mut self, c: usize, meas: &DMatrix<f64>, core: &DenseTensor) {
        self.left[c + 1] = left_stack_step(&self.left[c], meas, core);
    }

    /// Recomputes `right[c]` from the (updated) core `c`.
    pub fn push_right(&mut self, c: usize, meas: &DMatrix<f64>, core: &DenseTensor) {
        self.right[c] = right_stack_step(&self.right[c + 1], meas, core);
    }

    pub fn left(&self, c: usize) -> &DMatrix<f64> {
        &self.left[c]
    }

    pub fn right(&self, c: usize) -> &DMatrix<f64> {
        &self.right[c]
    }

    /// Columns of `Φ_k` for the entries where `mask` is set, in row-major
    /// entry order: `Φ[m, (ℓ1, i, ℓ2)] = L[m, ℓ1] Ξ_k[i, m] R[m, ℓ2]`.
    pub fn phi(
        &self,
        k: usize,
        xi: &DMatrix<f64>,
        core_shape: [usize; 3],
        mask: &[bool],
    ) -> (DMatrix<f64>, Vec<usize>) {
        let [_, n, r1] = core_shape;
        let cols: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter(|(_, &ok)| ok)
            .map(|(i, _)| i)
            .collect();
        let (l, r) = (&self.left[k], &self.right[k + 1]);
        let m = l.nrows();
        let mut phi = DMatrix::zeros(m, cols.len());
        for (j, &e) in cols.iter().enumerate() {
            let (l1, i, l2) = (e / (n * r1), (e / r1) % n, e % r1);
            for s in 0..m {
                phi[(s, j)] = l[(s, l1)] * xi[(i, s)] * r[(s, l2)];
            }
        }
        (phi, cols)
    }
}

/// Full operator `Φ_k` (all `r_{k-1} n_k r_k` columns) of a train in
/// mixed-canonical form around core `k`, built from scratch.
pub fn assemble_phi(tt: &TensorTrain, samples: &SampleSet, k: usize) -> Result<DMatrix<f64>> {
    if k >= tt.order() {
        return Err(Error::InvalidArgument(format!("core {k} out of range")));
    }
    for c in 0..k {
        if !tt.is_left_orthogonal_core(c, ORTHOGONALITY_TOL) {
            return Err(Error::Orthogonality(format!(
                "core {c} is not left-orthogonal"
            )));
        }
    }
    for c in k + 1..tt.order() {
        if !tt.is_right_orthogonal_core(c, ORTHOGONALITY_TOL) {
            return Err(Error::Orthogonality(format!(
                "core {c} is not right-orthogonal"
            )));
        }
    }
    let meas = samples.measurements();
    let stacks = Stacks::new(tt, &meas, k)?;
    let core = tt.core(k);
    Ok(stacks
        .phi(k, meas[k], dims3(core), &vec![true; core.len()])
        .0)
}
