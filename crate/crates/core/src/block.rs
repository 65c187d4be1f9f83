//! Block-sparse tensor trains for eigenspaces of the degree operator.
//!
//! With the graded dictionary, mode index `m` (zero-based) carries degree
//! `m`, and the degree operator acts as `(Lc)(m) = (Σ_k m_k) c(m)`. A tensor
//! train of a degree-`g` eigenvector can be gauged so that the rank slots at
//! every interface `k` split into degree groups `S_{k,h}`, and
//!
//! ```text
//! C_k(ℓ1, m, ℓ2) ≠ 0  only if  ℓ1 ∈ S_{k-1,h} and ℓ2 ∈ S_{k,h+m}.
//! ```
//!
//! Slots are laid out contiguously in ascending degree, so each allowed
//! slice `C_k(S_{k-1,h}, m, S_{k,h+m})` is a dense block. Cores are indexed
//! from zero: core `c` sits between interfaces `c` and `c+1`, and interface
//! `0` / `d` are the trivial boundary ranks.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{qr_positive, RANK_CUTOFF};
use crate::space::{binomial, space_dimension, SpaceDescriptor};
use crate::tensor::{multi_indices, DenseTensor};
use crate::tt::{dims3, Orthogonality, Side, TensorTrain, TensorTrainDocument};

/// `(Lc)(m) = (Σ_k grading[m_k]) c(m)`.
pub fn degree_operator_apply(c: &DenseTensor, grading: &[usize]) -> Result<DenseTensor> {
    if c.shape().iter().any(|&n| n != grading.len()) {
        return Err(Error::DimensionMismatch(format!(
            "grading of length {} for shape {:?}",
            grading.len(),
            c.shape()
        )));
    }
    let values = multi_indices(c.shape())
        .zip(c.values())
        .map(|(m, &v)| m.iter().map(|&i| grading[i]).sum::<usize>() as f64 * v)
        .collect();
    DenseTensor::new(c.shape().to_vec(), values)
}

/// Per-interface degree-group sizes `ρ_{k,h}` for `k = 0..=d`, `h = 0..=g`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BlockStructureDocument", into = "BlockStructureDocument")]
pub struct BlockStructure {
    g: usize,
    mode_dims: Vec<usize>,
    rho: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct BlockStructureDocument {
    d: usize,
    g: usize,
    p: usize,
    mode_dims: Vec<usize>,
    rho: Vec<Vec<usize>>,
}

impl From<BlockStructure> for BlockStructureDocument {
    fn from(b: BlockStructure) -> Self {
        Self {
            d: b.order(),
            g: b.g,
            p: b.p(),
            mode_dims: b.mode_dims,
            rho: b.rho,
        }
    }
}

impl TryFrom<BlockStructureDocument> for BlockStructure {
    type Error = Error;

    fn try_from(doc: BlockStructureDocument) -> Result<Self> {
        if doc.d != doc.mode_dims.len() || doc.mode_dims.first() != Some(&doc.p) {
            return Err(Error::Serialization("d, p and mode_dims disagree".into()));
        }
        BlockStructure::from_sizes(doc.g, doc.mode_dims, doc.rho)
    }
}

impl BlockStructure {
    /// Validates an explicit size table. Besides the boundary conditions,
    /// every group must be reachable from its neighbours: `ρ_{k,h}` may not
    /// exceed the number of slot/mode pairs feeding it from either side.
    pub fn from_sizes(g: usize, mode_dims: Vec<usize>, rho: Vec<Vec<usize>>) -> Result<Self> {
        let d = mode_dims.len();
        if d == 0 || mode_dims.contains(&0) {
            return Err(Error::InvalidArgument(
                "mode dimensions must be positive".into(),
            ));
        }
        if rho.len() != d + 1 || rho.iter().any(|r| r.len() != g + 1) {
            return Err(Error::ShapeMismatch(format!(
                "size table must be {} × {}",
                d + 1,
                g + 1
            )));
        }
        let unit = |h: usize| (0..=g).map(|j| usize::from(j == h)).collect::<Vec<_>>();
        if rho[0] != unit(0) || rho[d] != unit(g) {
            return Err(Error::InvalidArgument(
                "boundary groups must be S_{0,0} = S_{d,g} = {1}".into(),
            ));
        }
        let bs = Self { g, mode_dims, rho };
        for k in 1..d {
            for h in 0..=g {
                let (fwd, bwd) = (bs.feed_forward(k, h), bs.feed_backward(k, h));
                if bs.rho[k][h] > fwd.min(bwd) {
                    return Err(Error::InvalidArgument(format!(
                        "group {h} at interface {k} has {} slots but only {} reachable",
                        bs.rho[k][h],
                        fwd.min(bwd)
                    )));
                }
            }
        }
        Ok(bs)
    }

    /// Number of `(slot, mode index)` pairs at interface `k-1` feeding group `h` at `k`.
    fn feed_forward(&self, k: usize, h: usize) -> usize {
        let n = self.mode_dims[k - 1];
        (0..n.min(h + 1)).map(|m| self.rho[k - 1][h - m]).sum()
    }

    /// Number of `(mode index, slot)` pairs at interface `k+1` fed by group `h` at `k`.
    fn feed_backward(&self, k: usize, h: usize) -> usize {
        let n = self.mode_dims[k];
        (0..n)
            .take_while(|m| h + m <= self.g)
            .map(|m| self.rho[k + 1][h + m])
            .sum()
    }

    pub fn order(&self) -> usize {
        self.mode_dims.len()
    }

    pub fn degree(&self) -> usize {
        self.g
    }

    pub fn mode_dims(&self) -> &[usize] {
        &self.mode_dims
    }

    pub fn p(&self) -> usize {
        self.mode_dims[0]
    }

    /// Group sizes `ρ_{k,0..=g}` at interface `k`.
    pub fn sizes(&self, k: usize) -> &[usize] {
        &self.rho[k]
    }

    pub fn size(&self, k: usize, h: usize) -> usize {
        self.rho[k][h]
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.rho
    }

    /// Full rank tuple `(r_0, …, r_d)`.
    pub fn ranks(&self) -> Vec<usize> {
        self.rho.iter().map(|r| r.iter().sum()).collect()
    }

    /// Slot range of group `h` at interface `k`.
    pub fn slots(&self, k: usize, h: usize) -> Range<usize> {
        let start: usize = self.rho[k][..h].iter().sum();
        start..start + self.rho[k][h]
    }

    /// Degree of every slot at interface `k`.
    pub fn slot_degrees(&self, k: usize) -> Vec<usize> {
        self.rho[k]
            .iter()
            .enumerate()
            .flat_map(|(h, &n)| std::iter::repeat_n(h, n))
            .collect()
    }

    /// Allowed `(ℓ1, m, ℓ2)` triples of core `c`, zero-based, in row-major order.
    pub fn sparsity_pattern(&self, c: usize) -> Vec<(usize, usize, usize)> {
        let left = self.slot_degrees(c);
        let right = self.slot_degrees(c + 1);
        let mut out = Vec::new();
        for (l1, &h) in left.iter().enumerate() {
            for m in 0..self.mode_dims[c] {
                for (l2, &h2) in right.iter().enumerate() {
                    if h + m == h2 {
                        out.push((l1, m, l2));
                    }
                }
            }
        }
        out
    }

    /// Row-major boolean mask over the entries of core `c`.
    pub fn mask(&self, c: usize) -> Vec<bool> {
        let left = self.slot_degrees(c);
        let right = self.slot_degrees(c + 1);
        let n = self.mode_dims[c];
        let mut out = Vec::with_capacity(left.len() * n * right.len());
        for &h in &left {
            for m in 0..n {
                out.extend(right.iter().map(|&h2| h + m == h2));
            }
        }
        out
    }

    /// Number of allowed entries summed over all cores.
    pub fn dof(&self) -> usize {
        (0..self.order())
            .map(|c| {
                let n = self.mode_dims[c];
                let mut count = 0;
                for h in 0..=self.g {
                    for m in 0..n.min(self.g - h + 1) {
                        count += self.rho[c][h] * self.rho[c + 1][h + m];
                    }
                }
                count
            })
            .sum()
    }
}

/// Block sizes from the closed-form bound
/// `ρ_{k,h} ≤ min{ C(k+h-1, k-1), C(d-k+g-h-1, d-k-1), ρ_max }`,
/// optionally further capped by [`local_rank_bound`].
pub fn build_block_structure(
    d: usize,
    g: usize,
    rho_max: usize,
    k_loc: Option<usize>,
) -> Result<BlockStructure> {
    build_block_structure_with_dims(g, rho_max, k_loc, vec![g + 1; d], false)
}

/// As [`build_block_structure`] with explicit mode dimensions. The bounds
/// are finally tightened until every group is reachable from both sides,
/// which only matters when a mode dimension is smaller than `g + 1`.
pub fn build_block_structure_with_dims(
    g: usize,
    rho_max: usize,
    k_loc: Option<usize>,
    mode_dims: Vec<usize>,
    augmented_locality: bool,
) -> Result<BlockStructure> {
    let d = mode_dims.len();
    if d == 0 || mode_dims.contains(&0) {
        return Err(Error::InvalidArgument(
            "mode dimensions must be positive".into(),
        ));
    }
    if rho_max == 0 {
        return Err(Error::InvalidArgument("rho_max must be positive".into()));
    }
    if mode_dims.iter().map(|n| n - 1).sum::<usize>() < g {
        return Err(Error::InvalidArgument(format!(
            "degree {g} is not reachable with mode dimensions {mode_dims:?}"
        )));
    }
    let mut rho = vec![vec![0; g + 1]; d + 1];
    rho[0][0] = 1;
    rho[d][g] = 1;
    for k in 1..d {
        for h in 0..=g {
            let mut v = (binomial(k + h - 1, k - 1))
                .min(binomial(d - k + g - h - 1, d - k - 1))
                .min(rho_max as u64);
            if let Some(kl) = k_loc {
                v = v.min(local_rank_bound(g, h, kl, augmented_locality));
            }
            rho[k][h] = v as usize;
        }
    }
    let mut bs = BlockStructure { g, mode_dims, rho };
    loop {
        let mut changed = false;
        for k in 1..d {
            for h in 0..=g {
                let cap = bs.feed_forward(k, h);
                if bs.rho[k][h] > cap {
                    bs.rho[k][h] = cap;
                    changed = true;
                }
            }
        }
        for k in (1..d).rev() {
            for h in 0..=g {
                let cap = bs.feed_backward(k, h);
                if bs.rho[k][h] > cap {
                    bs.rho[k][h] = cap;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    if d > 1 && bs.feed_forward(d, g) == 0 {
        return Err(Error::InvalidArgument(format!(
            "no admissible block structure for degree {g}"
        )));
    }
    Ok(bs)
}

/// Structure of the augmented order-`(d+1)` train: the standard structure
/// with an extra shadow mode of dimension `g + 1`. Group `h` at interface
/// `d` can only reach the final slot through shadow index `g - h`.
pub fn build_augmented(
    d: usize,
    g: usize,
    rho_max: usize,
    k_loc: Option<usize>,
) -> Result<BlockStructure> {
    let mut dims = vec![g + 1; d];
    dims.push(g + 1);
    build_block_structure_with_dims(g, rho_max, k_loc, dims, true)
}

/// Rank bound for polynomials whose monomials only couple variables at most
/// `k_loc` apart:
///
/// ```text
/// ρ_{k,h} ≤ Σ_{ℓ=1}^{K} min{ C(K-ℓ+h-1, K-ℓ), C(ℓ+g-h-2, ℓ-1) }
/// ```
///
/// The augmented variant adds one and shifts `ℓ → ℓ+1` in the second
/// binomial. Groups `h ∈ {0, g}` always have size 1.
pub fn local_rank_bound(g: usize, h: usize, k_loc: usize, augmented: bool) -> u64 {
    if h == 0 || h >= g {
        return 1;
    }
    let shift = usize::from(augmented);
    let sum: u64 = (1..=k_loc)
        .map(|l| {
            binomial(k_loc - l + h - 1, k_loc - l)
                .min(binomial(l + shift + g - h - 2, l + shift - 1))
        })
        .sum();
    sum + shift as u64
}

/// Raw representation counts `Σ r_{k-1} p r_k` with `r_k = min{r, p^k, p^{d-k}}`.
fn dense_tt_params(r: usize, d: usize, p: usize) -> u64 {
    let cap = |k: usize| -> u64 {
        let pw = |e: usize| (p as u64).checked_pow(e as u32).unwrap_or(u64::MAX);
        (r as u64).min(pw(k)).min(pw(d - k))
    };
    (1..=d).map(|k| cap(k - 1) * p as u64 * cap(k)).sum()
}

/// Degrees of freedom of an ansatz space.
///
/// Linear spaces report their dimension. Block-capped spaces count allowed
/// core entries; the direct sum adds the counts of its homogeneous parts.
/// `T(r;V)` reports the raw parameter count of a train with ranks
/// `min{r, p^k, p^{d-k}}`, which overcounts the manifold dimension.
pub fn dof_count(s: &SpaceDescriptor) -> Result<u64> {
    match s.validate()? {
        SpaceDescriptor::V { .. } | SpaceDescriptor::W { .. } | SpaceDescriptor::S { .. } => {
            space_dimension(s)
        }
        SpaceDescriptor::T { r, d, p } => Ok(dense_tt_params(r, d, p)),
        SpaceDescriptor::B { rho, d, g } => {
            Ok(build_block_structure(d, g, rho, None)?.dof() as u64)
        }
        SpaceDescriptor::SRho {
            d,
            g,
            rho,
            aug: false,
        } => (0..=g)
            .map(|h| {
                build_block_structure_with_dims(h, rho, None, vec![g + 1; d], false)
                    .map(|b| b.dof() as u64)
            })
            .sum(),
        SpaceDescriptor::SRho {
            d,
            g,
            rho,
            aug: true,
        } => Ok(build_augmented(d, g, rho, None)?.dof() as u64),
    }
}

/// A tensor train whose cores obey the sparsity pattern of a [`BlockStructure`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseTT {
    tt: TensorTrain,
    structure: BlockStructure,
}

impl BlockSparseTT {
    /// Wraps `tt` after checking shapes and that every forbidden entry is exactly zero.
    pub fn new(tt: TensorTrain, structure: BlockStructure) -> Result<Self> {
        if tt.ranks() != structure.ranks() || tt.mode_dims() != structure.mode_dims() {
            return Err(Error::ShapeMismatch(format!(
                "train with ranks {:?} and modes {:?} does not fit structure ranks {:?} and modes {:?}",
                tt.ranks(),
                tt.mode_dims(),
                structure.ranks(),
                structure.mode_dims()
            )));
        }
        for c in 0..tt.order() {
            let core = tt.core(c);
            let [_, n, r1] = dims3(core);
            for (i, (&v, ok)) in core.values().iter().zip(structure.mask(c)).enumerate() {
                if !ok && v != 0.0 {
                    return Err(Error::SparsityViolation {
                        core: c,
                        entry: (i / (n * r1), (i / r1) % n, i % r1),
                        value: v,
                    });
                }
            }
        }
        Ok(Self { tt, structure })
    }

    pub fn zeros(structure: BlockStructure) -> Self {
        let ranks = structure.ranks();
        let cores = structure
            .mode_dims()
            .iter()
            .enumerate()
            .map(|(c, &n)| DenseTensor::zeros(vec![ranks[c], n, ranks[c + 1]]))
            .collect();
        let tt = TensorTrain::new(cores).expect("structure ranks are consistent");
        Self { tt, structure }
    }

    /// I.i.d. standard normal entries on the pattern, then block-wise
    /// right-orthogonalized.
    pub fn random(structure: BlockStructure, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Self::zeros(structure);
        for c in 0..out.order() {
            let mask = out.structure.mask(c);
            for (v, ok) in out.tt.cores_mut()[c].values_mut().iter_mut().zip(mask) {
                if ok {
                    *v = StandardNormal.sample(&mut rng);
                }
            }
        }
        out.orthogonalize(Side::Right);
        out
    }

    pub fn tt(&self) -> &TensorTrain {
        &self.tt
    }

    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    pub fn order(&self) -> usize {
        self.tt.order()
    }

    pub fn degree(&self) -> usize {
        self.structure.degree()
    }

    pub fn core(&self, c: usize) -> &DenseTensor {
        self.tt.core(c)
    }

    /// Replaces core `c`, rejecting values outside the pattern.
    pub fn set_core(&mut self, c: usize, core: DenseTensor) -> Result<()> {
        let [_, n, r1] = dims3(&core);
        for (i, (&v, ok)) in core.values().iter().zip(self.structure.mask(c)).enumerate() {
            if !ok && v != 0.0 {
                return Err(Error::SparsityViolation {
                    core: c,
                    entry: (i / (n * r1), (i / r1) % n, i % r1),
                    value: v,
                });
            }
        }
        self.tt.set_core(c, core)
    }

    /// Scales the whole tensor by multiplying core `c`.
    pub fn scale(&mut self, alpha: f64, c: usize) {
        for v in self.tt.cores_mut()[c].values_mut() {
            *v *= alpha;
        }
    }

    pub fn orthogonality(&self) -> Orthogonality {
        self.tt.orthogonality()
    }

    /// Plain tensor train with the sparsity materialized.
    pub fn to_dense_tt(&self) -> TensorTrain {
        self.tt.clone()
    }

    pub fn into_tt(self) -> TensorTrain {
        self.tt
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        self.tt.to_dense()
    }

    pub fn dof(&self) -> usize {
        self.structure.dof()
    }

    /// Squared mass of entries outside the pattern. Zero by construction.
    pub fn violation_mass(&self) -> f64 {
        (0..self.order())
            .map(|c| {
                self.core(c)
                    .values()
                    .iter()
                    .zip(self.structure.mask(c))
                    .filter(|(_, ok)| !ok)
                    .map(|(v, _)| v * v)
                    .sum::<f64>()
            })
            .sum()
    }

    /// Per-group QR of core `c` (column groups of the left unfolding); the
    /// triangular factors move into core `c+1`.
    pub fn left_step(&mut self, c: usize) {
        let bs = &self.structure;
        let n = bs.mode_dims[c];
        let cores = self.tt.cores_mut();
        let [_, _, r1] = dims3(&cores[c]);
        let [_, n2, r2] = dims3(&cores[c + 1]);
        for h in 0..=bs.g {
            let cols = bs.slots(c + 1, h);
            if cols.is_empty() {
                continue;
            }
            let rows: Vec<usize> = (0..=h)
                .filter(|&lo| h - lo < n)
                .flat_map(|lo| bs.slots(c, lo).map(move |l1| l1 * n + (h - lo)))
                .collect();
            let block = DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
                cores[c].values()[rows[i] * r1 + cols.start + j]
            });
            let (q, r) = qr_positive(&block);
            debug_assert_eq!(q.ncols(), cols.len());
            let vals = cores[c].values_mut();
            for (i, &row) in rows.iter().enumerate() {
                for j in 0..cols.len() {
                    vals[row * r1 + cols.start + j] = q[(i, j)];
                }
            }
            let width = n2 * r2;
            let next = cores[c + 1].values_mut();
            let old =
                DMatrix::from_fn(cols.len(), width, |i, j| next[(cols.start + i) * width + j]);
            let new = &r * old;
            for i in 0..cols.len() {
                for j in 0..width {
                    next[(cols.start + i) * width + j] = new[(i, j)];
                }
            }
        }
        self.clean(c + 1);
    }

    /// Per-group LQ of core `c` (row groups of the right unfolding); the
    /// triangular factors move into core `c-1`.
    pub fn right_step(&mut self, c: usize) {
        let bs = &self.structure;
        let n = bs.mode_dims[c];
        let g = bs.g;
        let cores = self.tt.cores_mut();
        let [_, _, r1] = dims3(&cores[c]);
        let [p0, pn, p1] = dims3(&cores[c - 1]);
        let width = n * r1;
        for lo in 0..=g {
            let rows = bs.slots(c, lo);
            if rows.is_empty() {
                continue;
            }
            let cols: Vec<usize> = (0..n)
                .take_while(|m| lo + m <= g)
                .flat_map(|m| bs.slots(c + 1, lo + m).map(move |l2| m * r1 + l2))
                .collect();
            let vals = cores[c].values_mut();
            let block_t = DMatrix::from_fn(cols.len(), rows.len(), |i, j| {
                vals[(rows.start + j) * width + cols[i]]
            });
            let (q, r) = qr_positive(&block_t);
            debug_assert_eq!(q.ncols(), rows.len());
            for (i, &col) in cols.iter().enumerate() {
                for j in 0..rows.len() {
                    vals[(rows.start + j) * width + col] = q[(i, j)];
                }
            }
            let prev = cores[c - 1].values_mut();
            let old = DMatrix::from_fn(p0 * pn, rows.len(), |i, j| prev[i * p1 + rows.start + j]);
            let new = old * r.transpose();
            for i in 0..p0 * pn {
                for j in 0..rows.len() {
                    prev[i * p1 + rows.start + j] = new[(i, j)];
                }
            }
        }
        self.clean(c - 1);
    }

    /// Resets forbidden entries of core `c` to `+0.0` (they can only have
    /// become `-0.0` through products with zero).
    fn clean(&mut self, c: usize) {
        let mask = self.structure.mask(c);
        for (v, ok) in self.tt.cores_mut()[c].values_mut().iter_mut().zip(mask) {
            if !ok {
                *v = 0.0;
            }
        }
    }

    /// Block-wise mixed-canonical form with the weight in core `c`.
    pub fn orthogonalize_around(&mut self, c: usize) {
        for j in 0..c {
            self.left_step(j);
        }
        for j in (c + 1..self.order()).rev() {
            self.right_step(j);
        }
        self.tt.set_orthogonality(Orthogonality::Mixed { core: c });
    }

    pub fn orthogonalize(&mut self, side: Side) {
        let d = self.order();
        match side {
            Side::Left => {
                self.orthogonalize_around(d - 1);
                self.tt.set_orthogonality(Orthogonality::Left);
            }
            Side::Right => {
                self.orthogonalize_around(0);
                self.tt.set_orthogonality(Orthogonality::Right);
            }
        }
    }

    pub(crate) fn set_orthogonality(&mut self, o: Orthogonality) {
        self.tt.set_orthogonality(o);
    }

    /// Block TT-SVD of a homogeneous coefficient tensor of degree `g`.
    ///
    /// Each step splits the current unfolding by the degree of its rows and
    /// factors every degree block separately, so the result satisfies the
    /// sparsity pattern by construction. Group sizes are the numerical ranks
    /// of the degree blocks (cutoff relative to the largest singular value
    /// of the step). The final core is projected onto its pattern.
    pub fn from_dense_homogeneous(c: &DenseTensor, g: usize) -> Result<Self> {
        let dims = c.shape().to_vec();
        let d = dims.len();
        let norm = c.norm();
        if d == 0 || norm == 0.0 {
            return Err(Error::InvalidArgument(
                "need a nonzero tensor of positive order".into(),
            ));
        }
        let off: f64 = multi_indices(&dims)
            .zip(c.values())
            .filter(|(m, _)| m.iter().sum::<usize>() != g)
            .map(|(_, v)| v * v)
            .sum::<f64>()
            .sqrt();
        if off > 1e-12 * norm {
            return Err(Error::NotHomogeneous {
                degree: g,
                magnitude: off,
            });
        }

        let mut rho = vec![vec![0; g + 1]; d + 1];
        rho[0][0] = 1;
        let mut cores = Vec::with_capacity(d);
        let mut rest = DMatrix::from_row_slice(1, c.len(), c.values());
        for (k, &n) in dims.iter().enumerate().take(d - 1) {
            let prev_deg: Vec<usize> = (0..=g)
                .flat_map(|h| std::iter::repeat_n(h, rho[k][h]))
                .collect();
            let cols = rest.ncols() / n;
            // rows of the new unfolding are (slot, m); rest is (slot) × (m, tail)
            let w = DMatrix::from_fn(prev_deg.len() * n, cols, |i, j| {
                rest[(i / n, (i % n) * cols + j)]
            });
            let mut factors = Vec::with_capacity(g + 1);
            let mut smax = 0.0f64;
            for h in 0..=g {
                let rows: Vec<usize> = (0..w.nrows())
                    .filter(|&i| prev_deg[i / n] + i % n == h)
                    .collect();
                if rows.is_empty() {
                    factors.push((rows, None));
                    continue;
                }
                let block = DMatrix::from_fn(rows.len(), cols, |i, j| w[(rows[i], j)]);
                let svd = block.svd(true, true);
                smax = smax.max(svd.singular_values.max());
                factors.push((rows, Some(svd)));
            }
            let cutoff = RANK_CUTOFF * smax;
            let mut slot_blocks = Vec::new();
            for (h, (rows, svd)) in factors.into_iter().enumerate() {
                let Some(svd) = svd else { continue };
                let keep = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
                rho[k + 1][h] = keep;
                if keep > 0 {
                    slot_blocks.push((rows, svd, keep));
                }
            }
            let r_new: usize = rho[k + 1].iter().sum();
            let mut core = DenseTensor::zeros(vec![prev_deg.len(), n, r_new]);
            let mut next = DMatrix::zeros(r_new, cols);
            let mut offset = 0;
            for (rows, svd, keep) in slot_blocks {
                let u = svd.u.as_ref().expect("u requested");
                let vt = svd.v_t.as_ref().expect("v_t requested");
                for (i, &row) in rows.iter().enumerate() {
                    for j in 0..keep {
                        core.values_mut()[row * r_new + offset + j] = u[(i, j)];
                    }
                }
                for j in 0..keep {
                    let s = svd.singular_values[j];
                    for col in 0..cols {
                        next[(offset + j, col)] = s * vt[(j, col)];
                    }
                }
                offset += keep;
            }
            cores.push(core);
            rest = next;
        }
        rho[d][g] = 1;
        let n = dims[d - 1];
        let last_deg: Vec<usize> = (0..=g)
            .flat_map(|h| std::iter::repeat_n(h, rho[d - 1][h]))
            .collect();
        let mut last = DenseTensor::zeros(vec![last_deg.len(), n, 1]);
        for (l, &h) in last_deg.iter().enumerate() {
            if h <= g && g - h < n {
                last.values_mut()[l * n + (g - h)] = rest[(l, g - h)];
            }
        }
        cores.push(last);
        let structure = BlockStructure::from_sizes(g, dims, rho)?;
        let mut tt = TensorTrain::new(cores)?;
        tt.set_orthogonality(Orthogonality::Left);
        Self::new(tt, structure)
    }

    pub fn to_document(&self) -> BlockSparseDocument {
        BlockSparseDocument {
            structure: self.structure.clone(),
            tt: self.tt.to_document(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    /// Loads and rejects any nonzero entry outside the pattern.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: BlockSparseDocument = serde_json::from_str(s)?;
        Self::new(TensorTrain::from_document(&doc.tt)?, doc.structure)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSparseDocument {
    pub structure: BlockStructure,
    pub tt: TensorTrainDocument,
}

/// Numerical ranks of the degree blocks of every unfolding of a homogeneous
/// tensor: entry `[k][h]` is the rank of the rows of unfolding `k` whose
/// multi-index has degree `h`. The cutoff is relative to the largest
/// singular value of the whole unfolding.
pub fn group_ranks(c: &DenseTensor, g: usize) -> Vec<Vec<usize>> {
    let dims = c.shape();
    let d = dims.len();
    let mut out = vec![vec![0; g + 1]; d + 1];
    out[0][0] = 1;
    out[d][g] = 1;
    for k in 1..d {
        let unf = c.unfold(k);
        let smax = unf.singular_values().max();
        let degrees: Vec<usize> = multi_indices(&dims[..k]).map(|m| m.iter().sum()).collect();
        for h in 0..=g {
            let rows: Vec<usize> = (0..degrees.len()).filter(|&i| degrees[i] == h).collect();
            if rows.is_empty() || smax == 0.0 {
                continue;
            }
            let block = unf.select_rows(&rows);
            out[k][h] = block
                .singular_values()
                .iter()
                .filter(|&&s| s > RANK_CUTOFF * smax)
                .count();
        }
    }
    out
}

/// An order-`(d+1)` block-sparse train whose last (shadow) mode indexes the
/// homogeneous degree: contracting it with the ones vector gives the sum of
/// all homogeneous parts, contracting with `e_{g-h}` the degree-`h` part.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedBlockSparseTT {
    inner: BlockSparseTT,
}

impl AugmentedBlockSparseTT {
    pub fn new(inner: BlockSparseTT) -> Result<Self> {
        let bs = inner.structure();
        let d1 = bs.order();
        if d1 < 2 || bs.mode_dims()[d1 - 1] != bs.degree() + 1 {
            return Err(Error::ShapeMismatch(
                "augmented train needs a final shadow mode of dimension g+1".into(),
            ));
        }
        Ok(Self { inner })
    }

    pub fn random(d: usize, g: usize, rho_max: usize, seed: u64) -> Result<Self> {
        Self::new(BlockSparseTT::random(
            build_augmented(d, g, rho_max, None)?,
            seed,
        ))
    }

    pub fn inner(&self) -> &BlockSparseTT {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut BlockSparseTT {
        &mut self.inner
    }

    pub fn into_inner(self) -> BlockSparseTT {
        self.inner
    }

    /// Number of physical variables `d`.
    pub fn dim(&self) -> usize {
        self.inner.order() - 1
    }

    pub fn degree(&self) -> usize {
        self.inner.degree()
    }

    /// Contracts the shadow mode with `w` and merges it into core `d-1`.
    pub fn contract_shadow(&self, w: &[f64]) -> Result<TensorTrain> {
        let g = self.degree();
        if w.len() != g + 1 {
            return Err(Error::DimensionMismatch(format!(
                "shadow weights of length {} for g = {g}",
                w.len()
            )));
        }
        let tt = self.inner.tt();
        let d = self.dim();
        let last = tt.core(d);
        let r = last.shape()[0];
        let v: Vec<f64> = (0..r)
            .map(|l| (0..=g).map(|m| last.get(&[l, m, 0]) * w[m]).sum())
            .collect();
        let prev = tt.core(d - 1);
        let [a, n, _] = dims3(prev);
        let merged = DenseTensor::from_fn(vec![a, n, 1], |i| {
            (0..r).map(|l| prev.get(&[i[0], i[1], l]) * v[l]).sum()
        });
        let mut cores: Vec<DenseTensor> = tt.cores()[..d - 1].to_vec();
        cores.push(merged);
        TensorTrain::new(cores)
    }

    /// The represented function: shadow mode summed out.
    pub fn summed(&self) -> Result<TensorTrain> {
        self.contract_shadow(&vec![1.0; self.degree() + 1])
    }

    /// The homogeneous part of degree `h`.
    pub fn degree_slice(&self, h: usize) -> Result<TensorTrain> {
        let g = self.degree();
        if h > g {
            return Err(Error::InvalidArgument(format!("degree {h} exceeds {g}")));
        }
        let mut w = vec![0.0; g + 1];
        w[g - h] = 1.0;
        self.contract_shadow(&w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rel(a: &DenseTensor, b: &DenseTensor) -> f64 {
        let mut d = a.clone();
        d.axpy(-1.0, b).unwrap();
        d.norm() / b.norm()
    }

    fn random_homogeneous(d: usize, g: usize, seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseTensor::from_fn(vec![g + 1; d], |m| {
            if m.iter().sum::<usize>() == g {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        })
    }

    #[test]
    fn degree_operator_examples() {
        let mut c = DenseTensor::zeros(vec![2, 2, 2]);
        c.set(&[0, 0, 0], 1.0);
        assert_eq!(degree_operator_apply(&c, &[0, 1]).unwrap().norm(), 0.0);
        let mut c = DenseTensor::zeros(vec![2, 2, 2]);
        c.set(&[1, 0, 0], 1.0);
        assert_eq!(degree_operator_apply(&c, &[0, 1]).unwrap(), c);
    }

    #[test]
    fn degree_operator_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = DenseTensor::from_fn(vec![3, 3, 3], |_| rng.random_range(-1.0..1.0));
        let lc = degree_operator_apply(&c, &[0, 1, 2]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert_eq!(lc.get(&[i, j, k]), (i + j + k) as f64 * c.get(&[i, j, k]));
                }
            }
        }
        assert!(degree_operator_apply(&c, &[0, 1]).is_err());
    }

    #[test]
    fn quadratic_profile() {
        let bs = build_block_structure(8, 2, 4, None).unwrap();
        let mid: Vec<usize> = (1..8).map(|k| bs.size(k, 1)).collect();
        assert_eq!(mid, vec![1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(bs.ranks(), vec![1, 3, 4, 5, 6, 5, 4, 3, 1]);
        assert_eq!(bs.dof(), 94);
    }

    #[test]
    fn cubic_profile_matches_generic_ranks() {
        // closed form for g = 3: (1, min{k, C(d-k+1,2)}, min{C(k+1,2), d-k}, 1),
        // checked against the degree-block ranks of generic cubics
        for d in 2..=6 {
            let bs = build_block_structure(d, 3, usize::MAX, None).unwrap();
            let oracle = group_ranks(&random_homogeneous(d, 3, d as u64), 3);
            for k in 1..d {
                let expected = [
                    1,
                    k.min((d - k + 1) * (d - k) / 2),
                    ((k + 1) * k / 2).min(d - k),
                    1,
                ];
                assert_eq!(bs.sizes(k), &expected);
                assert_eq!(oracle[k], expected, "d={d} k={k}");
            }
        }
    }

    #[test]
    fn locality_one_quadratic() {
        assert_eq!(local_rank_bound(2, 1, 1, false), 1);
        let bs = build_block_structure(6, 2, 10, Some(1)).unwrap();
        assert!((1..6).all(|k| bs.size(k, 1) == 1));
    }

    #[test]
    fn local_bound_boundaries_and_monotonicity() {
        for g in 1..=5 {
            assert_eq!(local_rank_bound(g, 0, 3, false), 1);
            assert_eq!(local_rank_bound(g, g, 3, true), 1);
            for h in 1..g {
                for aug in [false, true] {
                    let seq: Vec<u64> = (0..=6).map(|k| local_rank_bound(g, h, k, aug)).collect();
                    assert!(seq.windows(2).all(|w| w[0] <= w[1]), "{g} {h} {seq:?}");
                }
            }
        }
    }

    #[test]
    fn paper_example_slices() {
        // p = 4, g = 3, an interior core with one slot per degree
        let rho = vec![
            vec![1, 0, 0, 0],
            vec![1, 1, 1, 1],
            vec![1, 1, 1, 1],
            vec![0, 0, 0, 1],
        ];
        let bs = BlockStructure::from_sizes(3, vec![4, 4, 4], rho).unwrap();
        let pat = bs.sparsity_pattern(1);
        for m in 0..4 {
            // slice m is the m-th superdiagonal
            let slice: Vec<(usize, usize)> = pat
                .iter()
                .filter(|t| t.1 == m)
                .map(|t| (t.0, t.2))
                .collect();
            let expected: Vec<(usize, usize)> = (0..4 - m).map(|i| (i, i + m)).collect();
            assert_eq!(slice, expected);
        }
        assert!(bs
            .sparsity_pattern(0)
            .iter()
            .all(|t| t.0 == 0 && t.2 == t.1));
    }

    #[test]
    fn dof_matches_enumeration() {
        for d in 1..=6 {
            for g in 0..=4 {
                for rho in 1..=4 {
                    let bs = build_block_structure(d, g, rho, None).unwrap();
                    let brute: usize = (0..d).map(|c| bs.sparsity_pattern(c).len()).sum();
                    assert_eq!(bs.dof(), brute);
                    assert_eq!(
                        bs.mask(0).iter().filter(|&&b| b).count(),
                        bs.sparsity_pattern(0).len()
                    );
                }
            }
        }
    }

    #[test]
    fn dof_table_values() {
        let dof = |s: &str| dof_count(&s.parse().unwrap()).unwrap();
        assert_eq!(dof("W(d=8,g=2)"), 36);
        assert_eq!(dof("B(rho=4;W(d=8,g=2))"), 94);
        assert_eq!(dof("S(d=6,g=7)"), 1716);
        assert_eq!(dof("S(d=6,g=7,rho=1)"), 552);
        assert_eq!(dof("S(d=10,g=5)"), 3003);
        assert_eq!(dof("S(d=10,g=5,rho=3)"), 1726);
        assert_eq!(dof("T(r=1;V(d=6,p=8))"), 48);
        assert_eq!(dof("T(r=8;V(d=6,p=8))"), 2176);
        assert_eq!(dof("T(r=6;V(d=8,p=3))"), 558);
        assert_eq!(dof("T(r=14;V(d=10,p=6))"), 8136);
        assert_eq!(dof("S(d=10,g=5,rho=3,aug)"), 899);
    }

    #[test]
    fn random_is_eigenvector_and_deterministic() {
        for (d, g) in [(3, 2), (4, 3), (5, 2), (2, 1), (1, 3)] {
            let bs = build_block_structure(d, g, 3, None).unwrap();
            let t = BlockSparseTT::random(bs.clone(), 17);
            let c = t.to_dense().unwrap();
            let mut diff = degree_operator_apply(&c, &(0..=g).collect::<Vec<_>>()).unwrap();
            diff.axpy(-(g as f64), &c).unwrap();
            assert!(diff.norm() <= 1e-12 * c.norm());
            let u = BlockSparseTT::random(bs, 17);
            assert_eq!(t, u);
        }
    }

    #[test]
    fn random_ranks_bounded_by_structure() {
        let bs = build_block_structure(4, 2, 5, None).unwrap();
        let c = BlockSparseTT::random(bs.clone(), 5).to_dense().unwrap();
        let ranks = crate::tt::tt_rank(&c);
        for k in 1..4 {
            assert!(ranks[k - 1] <= bs.ranks()[k]);
        }
    }

    #[test]
    fn block_orthogonalization() {
        let bs = build_block_structure(5, 3, 3, None).unwrap();
        let t = BlockSparseTT::random(bs, 2);
        let x = t.to_dense().unwrap();
        for side in [Side::Left, Side::Right] {
            let mut u = t.clone();
            u.orthogonalize(side);
            assert!(rel(&u.to_dense().unwrap(), &x) <= 1e-12);
            assert_eq!(u.violation_mass(), 0.0);
            for c in 0..5 {
                let zeros_before: Vec<bool> = t
                    .core(c)
                    .values()
                    .iter()
                    .map(|v| v.to_bits() == 0)
                    .collect();
                let mask = t.structure().mask(c);
                for (i, ok) in mask.iter().enumerate() {
                    if !ok {
                        assert!(zeros_before[i]);
                        assert_eq!(u.core(c).values()[i].to_bits(), 0);
                    }
                }
            }
            match side {
                Side::Left => assert!((0..4).all(|c| u.tt().is_left_orthogonal_core(c, 1e-12))),
                Side::Right => assert!((1..5).all(|c| u.tt().is_right_orthogonal_core(c, 1e-12))),
            }
        }
    }

    #[test]
    fn embedding_ranks() {
        let bs = build_block_structure(8, 2, 4, None).unwrap();
        let t = BlockSparseTT::random(bs, 1).to_dense_tt();
        let ranks = t.ranks();
        assert_eq!(ranks[1..8], [3, 4, 5, 6, 5, 4, 3]);
        assert!(t.num_params() >= 94);
    }

    #[test]
    fn block_svd_recovers_homogeneous_tensor() {
        for (d, g, seed) in [(3, 2, 1), (4, 3, 2), (5, 2, 3), (4, 1, 4)] {
            let c = random_homogeneous(d, g, seed);
            let t = BlockSparseTT::from_dense_homogeneous(&c, g).unwrap();
            assert!(rel(&t.to_dense().unwrap(), &c) <= 1e-10);
            assert_eq!(t.structure().table(), &group_ranks(&c, g)[..]);
            let bound = build_block_structure(d, g, usize::MAX, None).unwrap();
            for k in 0..=d {
                for h in 0..=g {
                    assert!(t.structure().size(k, h) <= bound.size(k, h));
                }
            }
        }
        let mut c = random_homogeneous(3, 2, 9);
        c.set(&[0, 0, 0], 0.5);
        assert!(matches!(
            BlockSparseTT::from_dense_homogeneous(&c, 2),
            Err(Error::NotHomogeneous { .. })
        ));
    }

    #[test]
    fn sparsity_checked_on_load() {
        let bs = build_block_structure(3, 2, 2, None).unwrap();
        let t = BlockSparseTT::random(bs, 4);
        let s = t.to_json().unwrap();
        assert_eq!(BlockSparseTT::from_json(&s).unwrap(), t);
        let mut doc = t.to_document();
        // first core entry (0, 0, last slot) has degree 0 → 2 which is forbidden
        let last = doc.tt.components[0][0][0].len() - 1;
        doc.tt.components[0][0][0][last] = 1.0;
        let bad = serde_json::to_string(&doc).unwrap();
        assert!(matches!(
            BlockSparseTT::from_json(&bad),
            Err(Error::SparsityViolation { core: 0, .. })
        ));
    }

    #[test]
    fn structure_json_round_trip() {
        let bs = build_augmented(4, 3, 2, None).unwrap();
        let s = serde_json::to_string(&bs).unwrap();
        assert_eq!(serde_json::from_str::<BlockStructure>(&s).unwrap(), bs);
        let broken = s.replace("\"rho\":[[1,0,0,0]", "\"rho\":[[1,1,0,0]");
        assert!(serde_json::from_str::<BlockStructure>(&broken).is_err());
    }

    #[test]
    fn augmented_shape_and_routing() {
        let bs = build_augmented(4, 2, 3, None).unwrap();
        assert_eq!(bs.order(), 5);
        assert_eq!(bs.mode_dims()[4], 3);
        for (l, m, _) in bs.sparsity_pattern(4) {
            assert_eq!(m, 2 - bs.slot_degrees(4)[l]);
        }
    }

    #[test]
    fn augmented_sum_equals_slices() {
        let a = AugmentedBlockSparseTT::random(4, 2, 3, 7).unwrap();
        let total = a.summed().unwrap().to_dense().unwrap();
        let mut acc = DenseTensor::zeros(vec![3; 4]);
        for h in 0..=2 {
            let slice = a.degree_slice(h).unwrap().to_dense().unwrap();
            // each slice is homogeneous of its own degree
            let mut diff = degree_operator_apply(&slice, &[0, 1, 2]).unwrap();
            diff.axpy(-(h as f64), &slice).unwrap();
            assert!(diff.norm() <= 1e-12 * slice.norm().max(1e-300));
            acc.axpy(1.0, &slice).unwrap();
        }
        assert!(rel(&acc, &total) <= 1e-12);
    }

    #[test]
    fn feasibility_caps_small_modes() {
        // p = 2 with g = 3: degree h at interface k needs h ≤ k
        let bs = build_block_structure_with_dims(3, 5, None, vec![2; 5], false).unwrap();
        assert_eq!(bs.size(1, 2), 0);
        assert_eq!(bs.size(1, 3), 0);
        let t = BlockSparseTT::random(bs, 3);
        let mut u = t.clone();
        u.orthogonalize(Side::Left);
        assert!(rel(&u.to_dense().unwrap(), &t.to_dense().unwrap()) <= 1e-12);
        assert!(build_block_structure_with_dims(7, 5, None, vec![2; 5], false).is_err());
    }
}
