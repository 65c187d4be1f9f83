//! Tensor trains: `x(i_1,…,i_d) = C_1(i_1,:) C_2(:,i_2,:) ⋯ C_d(:,i_d)`.
//!
//! Every component is stored as an order-3 [`DenseTensor`] of shape
//! `(r_{k-1}, n_k, r_k)` with boundary ranks `r_0 = r_d = 1`. Because the
//! storage is row-major, the left unfolding `(r_{k-1} n_k) × r_k` and the
//! right unfolding `r_{k-1} × (n_k r_k)` are both plain reinterpretations of
//! the value buffer.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, qr_positive, truncated_svd, RANK_CUTOFF};
use crate::tensor::DenseTensor;

/// Default entry cap for materializing a train as a dense tensor.
pub const DEFAULT_DENSE_CAP: usize = 10_000_000;

/// Tolerance used when verifying orthogonality preconditions.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orthogonality {
    None,
    Left,
    Right,
    /// Cores left of `core` are left-orthogonal, cores right of it are
    /// right-orthogonal. Zero-based.
    Mixed {
        core: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorTrain {
    cores: Vec<DenseTensor>,
    orthogonality: Orthogonality,
}

impl TensorTrain {
    pub fn new(cores: Vec<DenseTensor>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::ShapeMismatch(
                "a tensor train needs at least one core".into(),
            ));
        }
        for (k, c) in cores.iter().enumerate() {
            if c.order() != 3 {
                return Err(Error::ShapeMismatch(format!(
                    "core {k} has order {}, expected 3",
                    c.order()
                )));
            }
        }
        if cores[0].shape()[0] != 1 || cores[cores.len() - 1].shape()[2] != 1 {
            return Err(Error::ShapeMismatch("boundary ranks must be 1".into()));
        }
        for k in 1..cores.len() {
            if cores[k - 1].shape()[2] != cores[k].shape()[0] {
                return Err(Error::ShapeMismatch(format!(
                    "right rank {} of core {} differs from left rank {} of core {}",
                    cores[k - 1].shape()[2],
                    k - 1,
                    cores[k].shape()[0],
                    k
                )));
            }
        }
        Ok(Self {
            cores,
            orthogonality: Orthogonality::None,
        })
    }

    /// Random train with i.i.d. standard normal entries.
    pub fn random<R: Rng>(mode_dims: &[usize], ranks: &[usize], rng: &mut R) -> Result<Self> {
        if ranks.len() + 1 != mode_dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} interior ranks for {} modes",
                ranks.len(),
                mode_dims.len()
            )));
        }
        let full: Vec<usize> = std::iter::once(1)
            .chain(ranks.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let cores = mode_dims
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let shape = vec![full[k], n, full[k + 1]];
                let len = shape.iter().product();
                let vals = (0..len).map(|_| rng.sample(StandardNormal)).collect();
                DenseTensor::new(shape, vals)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(cores)
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn cores(&self) -> &[DenseTensor] {
        &self.cores
    }

    pub fn core(&self, k: usize) -> &DenseTensor {
        &self.cores[k]
    }

    pub fn orthogonality(&self) -> Orthogonality {
        self.orthogonality
    }

    pub(crate) fn set_orthogonality(&mut self, o: Orthogonality) {
        self.orthogonality = o;
    }

    /// Replaces core `k`. Shapes must be unchanged; the orthogonality flag is cleared.
    pub fn set_core(&mut self, k: usize, core: DenseTensor) -> Result<()> {
        if core.shape() != self.cores[k].shape() {
            return Err(Error::ShapeMismatch(format!(
                "core {k}: {:?} vs {:?}",
                core.shape(),
                self.cores[k].shape()
            )));
        }
        self.cores[k] = core;
        self.orthogonality = Orthogonality::None;
        Ok(())
    }

    pub(crate) fn cores_mut(&mut self) -> &mut [DenseTensor] {
        &mut self.cores
    }

    /// Full rank tuple `(r_0, …, r_d)`.
    pub fn ranks(&self) -> Vec<usize> {
        std::iter::once(1)
            .chain(self.cores.iter().map(|c| c.shape()[2]))
            .collect()
    }

    pub fn mode_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape()[1]).collect()
    }

    /// Number of stored component entries.
    pub fn num_params(&self) -> usize {
        self.cores.iter().map(|c| c.len()).sum()
    }

    pub fn dense_len(&self) -> usize {
        self.mode_dims().iter().product()
    }

    /// Entry at a zero-based multi-index via a chain of matrix-vector products.
    pub fn entry(&self, index: &[usize]) -> f64 {
        let mut acc = vec![1.0];
        for (core, &i) in self.cores.iter().zip(index) {
            let [r0, n, r1] = dims3(core);
            let mut next = vec![0.0; r1];
            let v = core.values();
            for (a, &w) in acc.iter().enumerate() {
                let base = (a * n + i) * r1;
                for (b, slot) in next.iter_mut().enumerate() {
                    *slot += w * v[base + b];
                }
            }
            debug_assert_eq!(acc.len(), r0);
            acc = next;
        }
        acc[0]
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        tt_to_dense(self, DEFAULT_DENSE_CAP)
    }

    /// Frobenius norm computed without materializing the dense tensor.
    pub fn norm(&self) -> f64 {
        // Gram recursion G_k = Σ_i C_k(:,i,:)^T G_{k-1} C_k(:,i,:)
        let mut g = DMatrix::from_element(1, 1, 1.0);
        for core in &self.cores {
            let [r0, n, r1] = dims3(core);
            let mut next = DMatrix::zeros(r1, r1);
            for i in 0..n {
                let slice = slice_matrix(core, i);
                next += slice.transpose() * &g * &slice;
            }
            debug_assert_eq!(g.nrows(), r0);
            g = next;
        }
        g[(0, 0)].max(0.0).sqrt()
    }

    /// Inserts `gauge · gauge_inv = Id` on the bond between cores `k` and `k+1`.
    pub fn apply_gauge(
        &mut self,
        k: usize,
        gauge: &DMatrix<f64>,
        gauge_inv: &DMatrix<f64>,
    ) -> Result<()> {
        let r = self.cores[k].shape()[2];
        if gauge.nrows() != r || gauge_inv.ncols() != r || k + 1 >= self.order() {
            return Err(Error::ShapeMismatch(format!(
                "gauge on bond {k} of rank {r}"
            )));
        }
        let left = left_unfolding(&self.cores[k]) * gauge;
        let right = gauge_inv * right_unfolding(&self.cores[k + 1]);
        let [a, n, _] = dims3(&self.cores[k]);
        let [_, m, b] = dims3(&self.cores[k + 1]);
        self.cores[k] = matrix_to_core(&left, a, n, gauge.ncols());
        self.cores[k + 1] = matrix_to_core(&right, gauge_inv.nrows(), m, b);
        self.orthogonality = Orthogonality::None;
        Ok(())
    }

    pub fn is_left_orthogonal_core(&self, k: usize, tol: f64) -> bool {
        let u = left_unfolding(&self.cores[k]);
        (u.tr_mul(&u) - DMatrix::identity(u.ncols(), u.ncols())).amax() <= tol
    }

    pub fn is_right_orthogonal_core(&self, k: usize, tol: f64) -> bool {
        let v = right_unfolding(&self.cores[k]);
        (&v * v.transpose() - DMatrix::identity(v.nrows(), v.nrows())).amax() <= tol
    }

    /// Left-orthogonalizes cores `0..k` and right-orthogonalizes cores
    /// `k+1..d`, leaving the weight in core `k`.
    pub fn orthogonalize_around(&mut self, k: usize) {
        for j in 0..k {
            self.left_step(j);
        }
        for j in (k + 1..self.order()).rev() {
            self.right_step(j);
        }
        self.orthogonality = Orthogonality::Mixed { core: k };
    }

    pub fn orthogonalize(&mut self, side: Side) {
        let d = self.order();
        match side {
            Side::Left => {
                self.orthogonalize_around(d - 1);
                self.orthogonality = Orthogonality::Left;
            }
            Side::Right => {
                self.orthogonalize_around(0);
                self.orthogonality = Orthogonality::Right;
            }
        }
    }

    /// QR of the left unfolding of core `k`; `R` moves into core `k+1`.
    pub(crate) fn left_step(&mut self, k: usize) {
        let [a, n, _] = dims3(&self.cores[k]);
        let (q, r) = qr_positive(&left_unfolding(&self.cores[k]));
        let next = &r * right_unfolding(&self.cores[k + 1]);
        let [_, m, b] = dims3(&self.cores[k + 1]);
        self.cores[k] = matrix_to_core(&q, a, n, q.ncols());
        self.cores[k + 1] = matrix_to_core(&next, r.nrows(), m, b);
    }

    /// LQ of the right unfolding of core `k`; `L` moves into core `k-1`.
    pub(crate) fn right_step(&mut self, k: usize) {
        let [_, n, b] = dims3(&self.cores[k]);
        let (q, r) = qr_positive(&right_unfolding(&self.cores[k]).transpose());
        let prev = left_unfolding(&self.cores[k - 1]) * r.transpose();
        let [a, m, _] = dims3(&self.cores[k - 1]);
        self.cores[k] = matrix_to_core(&q.transpose(), q.ncols(), n, b);
        self.cores[k - 1] = matrix_to_core(&prev, a, m, r.nrows());
    }

    /// Left interface tensors `τ^≤_{k,ℓ}` stacked as a tensor of shape
    /// `(n_1, …, n_k, r_k)`. For `k = 0` this is the scalar 1 (shape `[1]`).
    pub fn left_interfaces(&self, k: usize) -> Result<DenseTensor> {
        let d = self.order();
        if k > d {
            return Err(Error::InvalidArgument(format!("position {k} > order {d}")));
        }
        for j in 0..k.min(d - 1) {
            if !self.is_left_orthogonal_core(j, ORTHOGONALITY_TOL) {
                return Err(Error::Orthogonality(format!(
                    "core {j} is not left-orthogonal"
                )));
            }
        }
        let mut acc = DMatrix::from_element(1, 1, 1.0);
        let mut shape = Vec::new();
        for core in &self.cores[..k] {
            let [r0, n, r1] = dims3(core);
            let rows = acc.nrows();
            let next = &acc * DMatrix::from_row_slice(r0, n * r1, core.values());
            acc = DMatrix::from_row_slice(rows * n, r1, next.transpose().as_slice());
            shape.push(n);
        }
        shape.push(acc.ncols());
        DenseTensor::from_matrix(&acc, shape)
    }

    /// Right interface tensors `τ^≥_{k+1,ℓ}` stacked as shape
    /// `(r_k, n_{k+1}, …, n_d)`. For `k = d` this is the scalar 1.
    pub fn right_interfaces(&self, k: usize) -> Result<DenseTensor> {
        let d = self.order();
        if k > d {
            return Err(Error::InvalidArgument(format!("position {k} > order {d}")));
        }
        for j in (k.max(1))..d {
            if !self.is_right_orthogonal_core(j, ORTHOGONALITY_TOL) {
                return Err(Error::Orthogonality(format!(
                    "core {j} is not right-orthogonal"
                )));
            }
        }
        let mut acc = DMatrix::from_element(1, 1, 1.0);
        let mut shape = Vec::new();
        for core in self.cores[k..].iter().rev() {
            let [r0, n, r1] = dims3(core);
            let cols = acc.ncols();
            let next = DMatrix::from_row_slice(r0 * n, r1, core.values()) * &acc;
            acc = DMatrix::from_row_slice(r0, n * cols, next.transpose().as_slice());
            shape.insert(0, n);
        }
        shape.insert(0, acc.nrows());
        DenseTensor::from_matrix(&acc, shape)
    }

    pub fn to_document(&self) -> TensorTrainDocument {
        TensorTrainDocument {
            shape: self.mode_dims(),
            ranks: self.ranks(),
            components: self
                .cores
                .iter()
                .map(|c| {
                    let [r0, n, r1] = dims3(c);
                    (0..r0)
                        .map(|a| {
                            (0..n)
                                .map(|i| (0..r1).map(|b| c.get(&[a, i, b])).collect())
                                .collect()
                        })
                        .collect()
                })
                .collect(),
            orthogonality: self.orthogonality,
        }
    }

    pub fn from_document(doc: &TensorTrainDocument) -> Result<Self> {
        if doc.shape.len() != doc.components.len() || doc.ranks.len() != doc.shape.len() + 1 {
            return Err(Error::Serialization(
                "shape, ranks and components disagree in length".into(),
            ));
        }
        let mut cores = Vec::with_capacity(doc.components.len());
        for (k, comp) in doc.components.iter().enumerate() {
            let (r0, n, r1) = (doc.ranks[k], doc.shape[k], doc.ranks[k + 1]);
            let mut vals = Vec::with_capacity(r0 * n * r1);
            if comp.len() != r0 {
                return Err(Error::Serialization(format!(
                    "component {k}: bad left rank"
                )));
            }
            for row in comp {
                if row.len() != n {
                    return Err(Error::Serialization(format!(
                        "component {k}: bad mode size"
                    )));
                }
                for fiber in row {
                    if fiber.len() != r1 {
                        return Err(Error::Serialization(format!(
                            "component {k}: bad right rank"
                        )));
                    }
                    vals.extend_from_slice(fiber);
                }
            }
            cores.push(DenseTensor::new(vec![r0, n, r1], vals)?);
        }
        let mut tt = Self::new(cores)?;
        tt.orthogonality = doc.orthogonality;
        Ok(tt)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }
}

/// JSON layout of a tensor train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorTrainDocument {
    pub shape: Vec<usize>,
    pub ranks: Vec<usize>,
    pub components: Vec<Vec<Vec<Vec<f64>>>>,
    pub orthogonality: Orthogonality,
}

pub(crate) fn dims3(core: &DenseTensor) -> [usize; 3] {
    let s = core.shape();
    [s[0], s[1], s[2]]
}

pub(crate) fn left_unfolding(core: &DenseTensor) -> DMatrix<f64> {
    let [a, n, b] = dims3(core);
    DMatrix::from_row_slice(a * n, b, core.values())
}

pub(crate) fn right_unfolding(core: &DenseTensor) -> DMatrix<f64> {
    let [a, n, b] = dims3(core);
    DMatrix::from_row_slice(a, n * b, core.values())
}

/// Slice `C(:, i, :)` as an `r_{k-1} × r_k` matrix.
pub(crate) fn slice_matrix(core: &DenseTensor, i: usize) -> DMatrix<f64> {
    let [a, _, b] = dims3(core);
    DMatrix::from_fn(a, b, |l, r| core.get(&[l, i, r]))
}

/// Reads a row-major-interpreted matrix back into a `(a, n, b)` core.
pub(crate) fn matrix_to_core(m: &DMatrix<f64>, a: usize, n: usize, b: usize) -> DenseTensor {
    let vals: Vec<f64> = m.transpose().iter().copied().collect();
    DenseTensor::new(vec![a, n, b], vals).expect("core shape matches matrix size")
}

pub fn tt_to_dense(t: &TensorTrain, cap: usize) -> Result<DenseTensor> {
    let entries = t.dense_len();
    if entries > cap {
        return Err(Error::Capacity { entries, cap });
    }
    let mut acc = DMatrix::from_element(1, 1, 1.0);
    for core in &t.cores {
        let [r0, n, r1] = dims3(core);
        let rows = acc.nrows();
        let next = &acc * DMatrix::from_row_slice(r0, n * r1, core.values());
        acc = DMatrix::from_row_slice(rows * n, r1, next.transpose().as_slice());
    }
    DenseTensor::new(t.mode_dims(), acc.iter().copied().collect())
}

/// Sequential-SVD decomposition.
///
/// Each of the `d-1` steps may discard singular mass up to
/// `(tol ‖x‖)² / (d-1)`, so the total error stays below `tol ‖x‖`.
/// Singular values below `RANK_CUTOFF · σ_max` are always dropped.
pub fn dense_to_tt(x: &DenseTensor, max_rank: usize, tol: f64) -> Result<TensorTrain> {
    let d = x.order();
    if d == 0 {
        return Err(Error::ShapeMismatch(
            "cannot decompose an order-0 tensor".into(),
        ));
    }
    let norm = x.norm();
    if norm == 0.0 {
        return Err(Error::InvalidArgument(
            "cannot decompose the zero tensor".into(),
        ));
    }
    let dims = x.shape().to_vec();
    let budget = if d > 1 {
        (tol * norm).powi(2) / (d - 1) as f64
    } else {
        0.0
    };
    let mut total_discarded = 0.0;
    let mut truncated_by_rank = false;
    let mut cores = Vec::with_capacity(d);
    let mut rest = x.values().to_vec();
    let mut r_prev = 1;
    for (k, &n) in dims.iter().enumerate().take(d - 1) {
        let rows = r_prev * n;
        let cols = rest.len() / rows;
        let w = DMatrix::from_row_slice(rows, cols, &rest);
        let (u, s, vt, _) = truncated_svd(&w, usize::MAX, RANK_CUTOFF);
        // smallest rank whose tail fits the per-step budget
        let mut keep = s.len();
        let mut tail = 0.0;
        while keep > 0 && tail + s[keep - 1] * s[keep - 1] <= budget {
            tail += s[keep - 1] * s[keep - 1];
            keep -= 1;
        }
        keep = keep.max(1);
        if keep > max_rank {
            truncated_by_rank = true;
            keep = max_rank.max(1);
        }
        total_discarded += s[keep..].iter().map(|v| v * v).sum::<f64>();
        let uk = u.columns(0, keep).into_owned();
        cores.push(matrix_to_core(&uk, r_prev, n, keep));
        let mut sv = vt.rows(0, keep).into_owned();
        for (i, mut row) in sv.row_iter_mut().enumerate() {
            row *= s[i];
        }
        rest = sv.transpose().iter().copied().collect();
        r_prev = keep;
        let _ = k;
    }
    cores.push(DenseTensor::new(vec![r_prev, dims[d - 1], 1], rest)?);
    let achieved = total_discarded.sqrt() / norm;
    if truncated_by_rank && achieved > tol {
        return Err(Error::ToleranceUnreachable {
            tol,
            max_rank,
            achieved,
        });
    }
    let mut tt = TensorTrain::new(cores)?;
    tt.orthogonality = Orthogonality::Left;
    Ok(tt)
}

/// Interior TT-ranks `(r_1, …, r_{d-1})` from the sequential unfoldings.
pub fn tt_rank(x: &DenseTensor) -> Vec<usize> {
    (1..x.order())
        .map(|k| linalg::matrix_rank(&x.unfold(k), RANK_CUTOFF))
        .collect()
}
