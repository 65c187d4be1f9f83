//! Homogeneous polynomials as symmetric tensors.
//!
//! A degree-`g` polynomial in `d` variables is `u(x) = Σ_i B(i_1,…,i_g)
//! x_{i_1}⋯x_{i_g}` over all `d^g` index tuples, with `B` invariant under
//! permutations. Only sorted tuples are stored; the multiplicity of a sorted
//! tuple (its number of distinct rearrangements) enters at conversion time.
//!
//! The conversion to coefficient tensors assumes the monomial dictionary.
//! For other graded dictionaries an analogous map exists but depends on the
//! basis and is not provided.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{multi_indices, DenseTensor};

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTensor {
    d: usize,
    g: usize,
    /// Zero-based sorted index tuples.
    entries: BTreeMap<Vec<usize>, f64>,
}

/// All non-decreasing tuples of length `g` over `0..d`, in lexicographic order.
pub fn sorted_indices(d: usize, g: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, g: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == g {
            out.push(cur.clone());
            return;
        }
        for i in start..d {
            cur.push(i);
            rec(d, g, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, g, 0, &mut Vec::with_capacity(g), &mut out);
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Variable counts of a tuple: `counts[k]` = occurrences of `k`.
fn counts(index: &[usize], d: usize) -> Vec<usize> {
    let mut c = vec![0; d];
    for &i in index {
        c[i] += 1;
    }
    c
}

/// `g! / Π counts!`, the number of distinct rearrangements.
fn multinomial(counts: &[usize]) -> f64 {
    let g: usize = counts.iter().sum();
    factorial(g) / counts.iter().map(|&c| factorial(c)).product::<f64>()
}

fn spread(index: &[usize]) -> usize {
    match (index.first(), index.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0,
    }
}

impl SymmetricTensor {
    pub fn zeros(d: usize, g: usize) -> Self {
        Self {
            d,
            g,
            entries: BTreeMap::new(),
        }
    }

    /// I.i.d. uniform `[-1, 1]` values on every sorted tuple.
    pub fn random<R: Rng>(d: usize, g: usize, rng: &mut R) -> Self {
        Self::random_banded(d, g, d.saturating_sub(1), rng)
    }

    /// Random values on the tuples with spread at most `k_loc`.
    pub fn random_banded<R: Rng>(d: usize, g: usize, k_loc: usize, rng: &mut R) -> Self {
        let mut out = Self::zeros(d, g);
        for idx in sorted_indices(d, g) {
            if spread(&idx) <= k_loc {
                out.entries.insert(idx, rng.random_range(-1.0..1.0));
            }
        }
        out
    }

    pub fn num_vars(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> usize {
        self.g
    }

    /// Value at any (not necessarily sorted) zero-based tuple.
    pub fn get(&self, index: &[usize]) -> f64 {
        let mut key = index.to_vec();
        key.sort_unstable();
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    /// Sets the value of the whole permutation class of `index`.
    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        if index.len() != self.g || index.iter().any(|&i| i >= self.d) {
            return Err(Error::InvalidArgument(format!(
                "index {index:?} invalid for d = {}, g = {}",
                self.d, self.g
            )));
        }
        let mut key = index.to_vec();
        key.sort_unstable();
        if value == 0.0 {
            self.entries.remove(&key);
        } else {
            self.entries.insert(key, value);
        }
        Ok(())
    }

    /// Sorted tuples with their values.
    pub fn entries(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.entries.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    /// Frobenius norm of the full `d^g` tensor.
    pub fn norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|(k, v)| multinomial(&counts(k, self.d)) * v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Largest spread `max n − min n` over the nonzero entries.
    pub fn locality(&self) -> usize {
        self.entries
            .iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|(k, _)| spread(k))
            .max()
            .unwrap_or(0)
    }

    /// `u(x)` summed over sorted tuples with multiplicities.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|(k, &v)| {
                multinomial(&counts(k, self.d)) * v * k.iter().map(|&i| x[i]).product::<f64>()
            })
            .sum()
    }

    /// `u(x)` as the literal contraction over all `d^g` tuples.
    pub fn evaluate_full(&self, x: &[f64]) -> f64 {
        multi_indices(&vec![self.d; self.g])
            .map(|i| self.get(&i) * i.iter().map(|&k| x[k]).product::<f64>())
            .sum()
    }

    pub fn to_document(&self) -> SymmetricDocument {
        SymmetricDocument {
            d: self.d,
            g: self.g,
            entries: self
                .entries
                .iter()
                .map(|(k, &v)| (k.iter().map(|i| i + 1).collect(), v))
                .collect(),
        }
    }

    pub fn from_document(doc: &SymmetricDocument) -> Result<Self> {
        let mut out = Self::zeros(doc.d, doc.g);
        for (idx, v) in &doc.entries {
            if idx.iter().any(|&i| i == 0) {
                return Err(Error::Serialization("indices are 1-based".into()));
            }
            if idx.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Serialization(format!("index {idx:?} is not sorted")));
            }
            let zero_based: Vec<usize> = idx.iter().map(|i| i - 1).collect();
            out.set(&zero_based, *v)
                .map_err(|e| Error::Serialization(e.to_string()))?;
        }
        Ok(out)
    }
}

/// JSON layout: 1-based sorted index tuples with their values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricDocument {
    pub d: usize,
    pub g: usize,
    pub entries: Vec<(Vec<usize>, f64)>,
}

/// `c(m) = multinomial(g; m) · B(n)` where `n` lists variable `k` exactly
/// `m_k` times (zero-based mode indices are degrees). Shape `(g+1)^d`.
pub fn symmetric_to_coefficient(b: &SymmetricTensor) -> DenseTensor {
    let (d, g) = (b.d, b.g);
    let mut c = DenseTensor::zeros(vec![g + 1; d]);
    for (key, &v) in &b.entries {
        let m = counts(key, d);
        c.set(&m, multinomial(&m) * v);
    }
    c
}

/// Inverse of [`symmetric_to_coefficient`] for coefficient tensors of
/// degree `g`. Entries of other total degree must not exceed `1e-14`.
pub fn coefficient_to_symmetric(c: &DenseTensor, g: usize) -> Result<SymmetricTensor> {
    let d = c.order();
    if c.shape().iter().any(|&n| n < g + 1) {
        return Err(Error::DimensionMismatch(format!(
            "shape {:?} cannot hold degree {g}",
            c.shape()
        )));
    }
    let mut out = SymmetricTensor::zeros(d, g);
    let mut worst = 0.0f64;
    for (m, &v) in multi_indices(c.shape()).zip(c.values()) {
        if m.iter().sum::<usize>() == g {
            if v != 0.0 {
                let key: Vec<usize> = m
                    .iter()
                    .enumerate()
                    .flat_map(|(k, &cnt)| std::iter::repeat_n(k, cnt))
                    .collect();
                out.entries.insert(key, v / multinomial(&m));
            }
        } else {
            worst = worst.max(v.abs());
        }
    }
    if worst > 1e-14 {
        return Err(Error::NotHomogeneous {
            degree: g,
            magnitude: worst,
        });
    }
    Ok(out)
}

/// Zeroes every entry whose tuple spread exceeds `k_loc`. Returns the
/// restricted tensor and the removed Frobenius mass (of the full tensor).
pub fn restrict_locality(b: &SymmetricTensor, k_loc: usize) -> (SymmetricTensor, f64) {
    let mut kept = SymmetricTensor::zeros(b.d, b.g);
    let mut removed = 0.0;
    for (key, &v) in &b.entries {
        if spread(key) <= k_loc {
            kept.entries.insert(key.clone(), v);
        } else {
            removed += multinomial(&counts(key, b.d)) * v * v;
        }
    }
    (kept, removed.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mixed_quadratic() {
        let mut b = SymmetricTensor::zeros(2, 2);
        b.set(&[0, 1], 0.5).unwrap();
        assert_eq!(b.get(&[1, 0]), 0.5);
        let c = symmetric_to_coefficient(&b);
        assert_eq!(c.get(&[1, 1]), 1.0);
        assert_eq!(c.values().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn pure_square() {
        let mut b = SymmetricTensor::zeros(2, 2);
        b.set(&[0, 0], 1.0).unwrap();
        let c = symmetric_to_coefficient(&b);
        assert_eq!(c.get(&[2, 0]), 1.0);
        assert_eq!(c.norm(), 1.0);
        let back = coefficient_to_symmetric(&c, 2).unwrap();
        assert_eq!(back.get(&[0, 0]), 1.0);
    }

    #[test]
    fn multinomial_inversion() {
        let mut c = DenseTensor::zeros(vec![3, 3, 3]);
        c.set(&[1, 1, 0], 1.0);
        let b = coefficient_to_symmetric(&c, 2).unwrap();
        assert_eq!(b.get(&[0, 1]), 0.5);
        assert_eq!(b.get(&[1, 0]), 0.5);
    }

    #[test]
    fn rejects_inhomogeneous() {
        let mut c = DenseTensor::zeros(vec![3, 3]);
        c.set(&[1, 1], 1.0);
        c.set(&[0, 1], 1e-10);
        assert!(matches!(
            coefficient_to_symmetric(&c, 2),
            Err(Error::NotHomogeneous { .. })
        ));
    }

    #[test]
    fn three_evaluations_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let b = SymmetricTensor::random(3, 3, &mut rng);
        let c = symmetric_to_coefficient(&b);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let via_c: f64 = multi_indices(c.shape())
                .zip(c.values())
                .map(|(m, &v)| {
                    v * m
                        .iter()
                        .zip(&x)
                        .map(|(&e, &xi)| xi.powi(e as i32))
                        .product::<f64>()
                })
                .sum();
            let full = b.evaluate_full(&x);
            assert!((b.evaluate(&x) - full).abs() < 1e-12);
            assert!((via_c - full).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in 1..=4 {
            for g in 0..=3 {
                let b = SymmetricTensor::random(d, g, &mut rng);
                let c = symmetric_to_coefficient(&b);
                let c2 = symmetric_to_coefficient(&coefficient_to_symmetric(&c, g).unwrap());
                let mut diff = c2.clone();
                diff.axpy(-1.0, &c).unwrap();
                assert!(diff.norm() <= 1e-13 * c.norm().max(1.0));
            }
        }
    }

    #[test]
    fn zero_locality_is_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = SymmetricTensor::random(4, 2, &mut rng);
        let (r, removed) = restrict_locality(&b, 0);
        assert!(r.entries().all(|(k, _)| k[0] == k[1]));
        assert_eq!(r.entries().count(), 4);
        assert!((removed.powi(2) + r.norm().powi(2) - b.norm().powi(2)).abs() < 1e-12);
        let (same, none) = restrict_locality(&b, 3);
        assert_eq!(same, b);
        assert_eq!(none, 0.0);
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = SymmetricTensor::random(3, 2, &mut rng);
        let doc = b.to_document();
        assert_eq!(doc.entries[0].0, vec![1, 1]);
        let s = serde_json::to_string(&doc).unwrap();
        let back = SymmetricTensor::from_document(&serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn sorted_index_count() {
        assert_eq!(sorted_indices(4, 3).len(), 20);
        assert_eq!(sorted_indices(3, 0), vec![Vec::<usize>::new()]);
    }
}
