use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::poly::Dictionary;

/// Point samples with targets and cached measurement matrices.
///
/// `Ξ_k` is `p × M` with column `m` equal to `Ψ(x^{(m)}_k)`.
#[derive(Debug, Clone)]
pub struct SampleSet {
    points: DMatrix<f64>,
    targets: Vec<f64>,
    dictionary: Dictionary,
    xi: Vec<DMatrix<f64>>,
}

impl SampleSet {
    /// `points` is `M × d`.
    pub fn new(points: DMatrix<f64>, targets: Vec<f64>, dictionary: Dictionary) -> Result<Self> {
        let (m, d) = points.shape();
        if m == 0 || d == 0 {
            return Err(Error::InvalidSamples(
                "need at least one point of positive dimension".into(),
            ));
        }
        if targets.len() != m {
            return Err(Error::InvalidSamples(format!(
                "{m} points but {} targets",
                targets.len()
            )));
        }
        if let Some(i) = (0..m).find(|&i| points.row(i).iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidSamples(format!("point {i} is not finite")));
        }
        if let Some(i) = targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSamples(format!("target {i} is not finite")));
        }
        let p = dictionary.size();
        let xi = (0..d)
            .map(|k| {
                let mut x = DMatrix::zeros(p, m);
                for j in 0..m {
                    dictionary.eval_into(points[(j, k)], x.column_mut(j).as_mut_slice());
                }
                x
            })
            .collect();
        Ok(Self {
            points,
            targets,
            dictionary,
            xi,
        })
    }

    /// Evaluates `f` at every row of `points`.
    pub fn from_fn(
        points: DMatrix<f64>,
        dictionary: Dictionary,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let targets = (0..points.nrows())
            .map(|i| {
                let x: Vec<f64> = points.row(i).iter().copied().collect();
                f(&x)
            })
            .collect();
        Self::new(points, targets, dictionary)
    }

    /// `M` points drawn uniformly from `[-1, 1]^d`.
    pub fn uniform_points<R: Rng>(m: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
        // filled row by row so the draw order does not depend on storage order
        let mut out = DMatrix::zeros(m, d);
        for i in 0..m {
            for k in 0..d {
                out[(i, k)] = rng.random_range(-1.0..=1.0);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn xi(&self, k: usize) -> &DMatrix<f64> {
        &self.xi[k]
    }

    pub fn measurements(&self) -> Vec<&DMatrix<f64>> {
        self.xi.iter().collect()
    }

    /// Same points with new targets.
    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Self> {
        if targets.len() != self.len() {
            return Err(Error::InvalidSamples("target count changed".into()));
        }
        if let Some(i) = targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSamples(format!("target {i} is not finite")));
        }
        Ok(Self {
            targets,
            ..self.clone()
        })
    }

    /// Rows reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let points = self.points.select_rows(perm);
        let targets = perm.iter().map(|&i| self.targets[i]).collect();
        Self::new(points, targets, self.dictionary.clone())
    }
}
