//! Univariate function dictionaries `Ψ: R → R^p`.
//!
//! Entry `k` (zero-based) of every dictionary is a polynomial of degree
//! exactly `k`. The block structure of homogeneous coefficient tensors
//! depends on that grading, so custom dictionaries are checked on
//! construction.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type Evaluator = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictionaryKind {
    Monomial,
    Legendre,
    Custom,
}

#[derive(Clone)]
pub struct Dictionary {
    kind: DictionaryKind,
    p: usize,
    custom: Option<Evaluator>,
}

impl fmt::Debug for Dictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dictionary")
            .field("kind", &self.kind)
            .field("p", &self.p)
            .finish()
    }
}

impl Dictionary {
    /// `(1, x, x², …, x^{p-1})`.
    pub fn monomial(p: usize) -> Result<Self> {
        Self::builtin(DictionaryKind::Monomial, p)
    }

    /// Unnormalized Legendre polynomials `P_0, …, P_{p-1}` with `P_k(1) = 1`.
    pub fn legendre(p: usize) -> Result<Self> {
        Self::builtin(DictionaryKind::Legendre, p)
    }

    fn builtin(kind: DictionaryKind, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidDictionary("size must be positive".into()));
        }
        Ok(Self {
            kind,
            p,
            custom: None,
        })
    }

    /// Registers a user evaluator after checking that entry `k` has degree
    /// exactly `k`.
    pub fn custom<F>(p: usize, f: F) -> Result<Self>
    where
        F: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        if p == 0 {
            return Err(Error::InvalidDictionary("size must be positive".into()));
        }
        let f: Evaluator = Arc::new(f);
        verify_grading(p, &*f)?;
        Ok(Self {
            kind: DictionaryKind::Custom,
            p,
            custom: Some(f),
        })
    }

    pub fn from_name(name: &str, p: usize) -> Result<Self> {
        match name {
            "monomial" => Self::monomial(p),
            "legendre" => Self::legendre(p),
            other => Err(Error::InvalidDictionary(format!(
                "unknown dictionary {other:?}"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DictionaryKind::Monomial => "monomial",
            DictionaryKind::Legendre => "legendre",
            DictionaryKind::Custom => "custom",
        }
    }

    pub fn kind(&self) -> DictionaryKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.p
    }

    /// Polynomial degree of each entry.
    pub fn degrees(&self) -> Vec<usize> {
        (0..self.p).collect()
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.p);
        match self.kind {
            DictionaryKind::Monomial => {
                let mut v = 1.0;
                for o in out.iter_mut() {
                    *o = v;
                    v *= x;
                }
            }
            DictionaryKind::Legendre => legendre_into(x, out),
            DictionaryKind::Custom => (self.custom.as_ref().expect("custom evaluator"))(x, out),
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        self.eval_into(x, &mut out);
        out
    }
}

pub fn eval_dictionary(dict: &Dictionary, x: f64) -> Vec<f64> {
    dict.eval(x)
}

/// Bonnet recurrence `(k+1) P_{k+1} = (2k+1) x P_k − k P_{k-1}`.
fn legendre_into(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for k in 1..out.len().saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

/// Newton divided-difference coefficients of the interpolant through
/// `p + 2` Chebyshev points; entry `j` is the leading coefficient of degree `j`.
fn verify_grading(p: usize, f: &(dyn Fn(f64, &mut [f64]) + Send + Sync)) -> Result<()> {
    let n = p + 2;
    let nodes: Vec<f64> = (0..n)
        .map(|i| (std::f64::consts::PI * (2 * i + 1) as f64 / (2 * n) as f64).cos())
        .collect();
    let mut values = vec![vec![0.0; p]; n];
    for (x, row) in nodes.iter().zip(values.iter_mut()) {
        f(*x, row);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDictionary(format!(
                "non-finite value at x = {x}"
            )));
        }
    }
    for k in 0..p {
        let mut dd: Vec<f64> = values.iter().map(|r| r[k]).collect();
        let scale = dd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(Error::InvalidDictionary(format!("entry {k} vanishes")));
        }
        let mut coeffs = vec![dd[0]];
        for level in 1..n {
            for i in (level..n).rev() {
                dd[i] = (dd[i] - dd[i - 1]) / (nodes[i] - nodes[i - level]);
            }
            coeffs.push(dd[level]);
        }
        let tol = 1e-8 * scale;
        let degree = coeffs.iter().rposition(|c| c.abs() > tol);
        if degree != Some(k) {
            return Err(Error::InvalidDictionary(format!(
                "entry {k} has degree {:?}, expected {k}",
                degree
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomials() {
        assert_eq!(
            Dictionary::monomial(3).unwrap().eval(2.0),
            vec![1.0, 2.0, 4.0]
        );
    }

    #[test]
    fn legendre_at_one() {
        assert_eq!(Dictionary::legendre(4).unwrap().eval(1.0), vec![1.0; 4]);
    }

    #[test]
    fn legendre_second_degree() {
        let v = Dictionary::legendre(3).unwrap().eval(0.5);
        assert!((v[2] + 0.125).abs() < 1e-15);
        assert_eq!(v[1], 0.5);
    }

    #[test]
    fn legendre_closed_forms() {
        let d = Dictionary::legendre(5).unwrap();
        for &x in &[-0.9, -0.3, 0.2, 0.77] {
            let v = d.eval(x);
            let p3 = 0.5 * (5.0 * x * x * x - 3.0 * x);
            let p4 = (35.0 * x.powi(4) - 30.0 * x * x + 3.0) / 8.0;
            assert!((v[3] - p3).abs() < 1e-14);
            assert!((v[4] - p4).abs() < 1e-14);
        }
    }

    #[test]
    fn builtins_pass_grading_check() {
        for p in 1..9 {
            let m = Dictionary::monomial(p).unwrap();
            let l = Dictionary::legendre(p).unwrap();
            assert!(verify_grading(p, &move |x, o: &mut [f64]| m.eval_into(x, o)).is_ok());
            assert!(verify_grading(p, &move |x, o: &mut [f64]| l.eval_into(x, o)).is_ok());
        }
    }

    #[test]
    fn custom_grading_is_checked() {
        // Hermite-like: 1, 2x, 4x² − 2
        let ok = Dictionary::custom(3, |x, o| {
            o[0] = 1.0;
            o[1] = 2.0 * x;
            o[2] = 4.0 * x * x - 2.0;
        });
        assert!(ok.is_ok());
        let bad_order = Dictionary::custom(2, |x, o| {
            o[0] = x;
            o[1] = 1.0;
        });
        assert!(matches!(bad_order, Err(Error::InvalidDictionary(_))));
        let not_poly = Dictionary::custom(2, |x, o| {
            o[0] = 1.0;
            o[1] = x.sin();
        });
        assert!(not_poly.is_err());
    }

    #[test]
    fn zero_size_rejected() {
        assert!(Dictionary::monomial(0).is_err());
    }
}
