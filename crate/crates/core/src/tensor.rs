//! Dense row-major tensors.
//!
//! Storage is zero-based; the `*_one_based` accessors are the single place
//! where the 1-based multi-index convention of external documents is
//! translated.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

fn product(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

/// Iterates all multi-indices of `shape` in row-major order.
pub fn multi_indices(shape: &[usize]) -> MultiIndexIter {
    MultiIndexIter {
        shape: shape.to_vec(),
        current: vec![0; shape.len()],
        done: shape.iter().any(|&n| n == 0),
    }
}

pub struct MultiIndexIter {
    shape: Vec<usize>,
    current: Vec<usize>,
    done: bool,
}

impl Iterator for MultiIndexIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let mut k = self.shape.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.current[k] += 1;
            if self.current[k] < self.shape[k] {
                break;
            }
            self.current[k] = 0;
        }
        Some(out)
    }
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&n| n == 0) {
            return Err(Error::ShapeMismatch(format!(
                "shape entries must be positive, got {shape:?}"
            )));
        }
        if product(&shape) != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} holds {} values, got {}",
                shape,
                product(&shape),
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = product(&shape);
        Self {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let values = multi_indices(&shape).map(|idx| f(&idx)).collect();
        Self { shape, values }
    }

    /// Order-0 tensors are represented with the empty shape and one value.
    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            values: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, (&l, &n)) in index.iter().zip(&self.shape).enumerate() {
            assert!(l < n, "index {l} out of range {n} in mode {i}");
            off = off * n + l;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.values[off] = value;
    }

    /// Entry access with 1-based labels `1 <= l_k <= n_k`.
    pub fn get_one_based(&self, index: &[usize]) -> Result<f64> {
        Ok(self.get(&self.zero_based(index)?))
    }

    pub fn set_one_based(&mut self, index: &[usize], value: f64) -> Result<()> {
        let idx = self.zero_based(index)?;
        self.set(&idx, value);
        Ok(())
    }

    fn zero_based(&self, index: &[usize]) -> Result<Vec<usize>> {
        if index.len() != self.shape.len() {
            return Err(Error::DimensionMismatch(format!(
                "multi-index of length {} for order-{} tensor",
                index.len(),
                self.shape.len()
            )));
        }
        index
            .iter()
            .zip(&self.shape)
            .map(|(&l, &n)| {
                if l == 0 || l > n {
                    Err(Error::DimensionMismatch(format!(
                        "label {l} outside 1..={n}"
                    )))
                } else {
                    Ok(l - 1)
                }
            })
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn reshape(&self, new_shape: Vec<usize>) -> Result<Self> {
        if product(&new_shape) != self.values.len() || new_shape.iter().any(|&n| n == 0) {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, new_shape
            )));
        }
        Ok(Self {
            shape: new_shape,
            values: self.values.clone(),
        })
    }

    /// Matrix view joining modes `0..split` into rows and the rest into columns.
    pub fn unfold(&self, split: usize) -> DMatrix<f64> {
        let rows = product(&self.shape[..split]);
        let cols = product(&self.shape[split..]);
        DMatrix::from_row_slice(rows, cols, &self.values)
    }

    pub fn from_matrix(m: &DMatrix<f64>, shape: Vec<usize>) -> Result<Self> {
        let values: Vec<f64> = m.transpose().iter().copied().collect();
        Self::new(shape, values)
    }

    pub fn axpy(&mut self, alpha: f64, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Mode `perm[i]` of `self` becomes mode `i` of the result.
    fn permute(&self, perm: &[usize]) -> Self {
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let old_strides = strides(&self.shape);
        let mut values = Vec::with_capacity(self.values.len());
        for idx in multi_indices(&new_shape) {
            let off: usize = idx
                .iter()
                .zip(perm)
                .map(|(&i, &p)| i * old_strides[p])
                .sum();
            values.push(self.values[off]);
        }
        Self {
            shape: new_shape,
            values,
        }
    }
}

/// Sums over the paired modes of `a` and `b`. Free modes of `a` come first
/// in the result, followed by free modes of `b`, each in original order.
pub fn contract(
    a: &DenseTensor,
    a_modes: &[usize],
    b: &DenseTensor,
    b_modes: &[usize],
) -> Result<DenseTensor> {
    if a_modes.len() != b_modes.len() {
        return Err(Error::InvalidMode(format!(
            "{} modes paired with {}",
            a_modes.len(),
            b_modes.len()
        )));
    }
    check_modes(a, a_modes)?;
    check_modes(b, b_modes)?;
    for (&i, &j) in a_modes.iter().zip(b_modes) {
        if a.shape[i] != b.shape[j] {
            return Err(Error::DimensionMismatch(format!(
                "mode {i} of a has dimension {} but mode {j} of b has {}",
                a.shape[i], b.shape[j]
            )));
        }
    }
    let a_free: Vec<usize> = (0..a.order()).filter(|m| !a_modes.contains(m)).collect();
    let b_free: Vec<usize> = (0..b.order()).filter(|m| !b_modes.contains(m)).collect();

    let a_perm: Vec<usize> = a_free.iter().chain(a_modes).copied().collect();
    let b_perm: Vec<usize> = b_modes.iter().chain(&b_free).copied().collect();
    let ap = a.permute(&a_perm);
    let bp = b.permute(&b_perm);

    let rows: usize = a_free.iter().map(|&m| a.shape[m]).product();
    let inner: usize = a_modes.iter().map(|&m| a.shape[m]).product();
    let cols: usize = b_free.iter().map(|&m| b.shape[m]).product();
    let am = DMatrix::from_row_slice(rows, inner, &ap.values);
    let bm = DMatrix::from_row_slice(inner, cols, &bp.values);
    let prod = am * bm;

    let shape: Vec<usize> = a_free
        .iter()
        .map(|&m| a.shape[m])
        .chain(b_free.iter().map(|&m| b.shape[m]))
        .collect();
    let values: Vec<f64> = prod.transpose().iter().copied().collect();
    Ok(DenseTensor { shape, values })
}

fn check_modes(t: &DenseTensor, modes: &[usize]) -> Result<()> {
    for (i, &m) in modes.iter().enumerate() {
        if m >= t.order() {
            return Err(Error::InvalidMode(format!(
                "mode {m} for order-{} tensor",
                t.order()
            )));
        }
        if modes[..i].contains(&m) {
            return Err(Error::InvalidMode(format!("duplicate mode {m}")));
        }
    }
    Ok(())
}
