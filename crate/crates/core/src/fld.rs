//! History-aware Fisher discriminant projection.
//!
//! Every live trajectory contributes a FIFO queue of its recent embeddings;
//! each queue is one class. Class centroids and the global mean are
//! weighted by `lambda0^age` so that recent observations dominate, the
//! scatter matrices are formed around those shifted centroids, and the
//! projection is the top `min(C - 1, D)` generalized eigenvectors of
//! `(S_B, S_W + shrinkage)`.
//!
//! Matching then blends cosine similarity in the projected space with
//! cosine similarity in the original space.

use std::borrow::Borrow;
use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::linalg::{self, cosine, FeatureVector, LinalgError, Matrix};

/// Track identity.
pub type TrackId = u64;

/// Absolute floor added to the shrinkage scale so an all-zero `S_W` still
/// regularizes to a positive-definite matrix.
pub const SHRINKAGE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FldError {
    #[error("feature queue is empty")]
    EmptyQueue,
    #[error("no samples to average")]
    EmptySampleSet,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least 2 classes, got {classes}")]
    InsufficientClasses { classes: usize },
    #[error("need at least {required} samples, got {samples}")]
    InsufficientSamples { samples: usize, required: usize },
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("queue ages must increase strictly from the front")]
    QueueOrder,
    #[error("no centroid for track {0}")]
    MissingCentroid(TrackId),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueEntry {
    /// Frames elapsed since the observation.
    pub age: u32,
    pub feature: FeatureVector,
}

/// Bounded FIFO of one trajectory's recent features, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureQueue {
    id: TrackId,
    capacity: usize,
    entries: VecDeque<QueueEntry>,
}

impl FeatureQueue {
    pub fn new(id: TrackId, capacity: usize) -> Self {
        Self {
            id,
            capacity: capacity.max(1),
            entries: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    /// Builds a queue from `(age, feature)` pairs listed newest first.
    /// Entries beyond `capacity` are dropped from the old end.
    pub fn from_entries(
        id: TrackId,
        capacity: usize,
        entries: impl IntoIterator<Item = (u32, FeatureVector)>,
    ) -> Result<Self, FldError> {
        let mut q = Self::new(id, capacity);
        for (age, feature) in entries {
            if let Some(last) = q.entries.back() {
                if age <= last.age {
                    return Err(FldError::QueueOrder);
                }
                if feature.dim() != last.feature.dim() {
                    return Err(FldError::DimensionMismatch {
                        expected: last.feature.dim(),
                        found: feature.dim(),
                    });
                }
            }
            q.entries.push_back(QueueEntry { age, feature });
        }
        q.entries.truncate(q.capacity);
        Ok(q)
    }

    pub fn id(&self) -> TrackId {
        self.id
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.entries.front().map(|e| e.feature.dim())
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &QueueEntry> {
        self.entries.iter()
    }

    /// Ages every entry by `frames`.
    pub fn advance(&mut self, frames: u32) {
        for e in &mut self.entries {
            e.age = e.age.saturating_add(frames);
        }
    }

    /// Pushes an observation from the current frame (age 0), evicting the
    /// oldest entry when full.
    pub fn push(&mut self, feature: FeatureVector) -> Result<(), FldError> {
        if let Some(front) = self.entries.front() {
            if front.age == 0 {
                return Err(FldError::QueueOrder);
            }
            if front.feature.dim() != feature.dim() {
                return Err(FldError::DimensionMismatch {
                    expected: front.feature.dim(),
                    found: feature.dim(),
                });
            }
        }
        self.entries.push_front(QueueEntry { age: 0, feature });
        self.entries.truncate(self.capacity);
        Ok(())
    }
}

/// How samples are weighted when forming centroids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CentroidWeighting {
    /// `lambda0^age` weights, favoring recent observations.
    TemporalShifted { lambda0: f64 },
    /// Plain arithmetic mean.
    Uniform,
}

impl CentroidWeighting {
    fn validate(self) -> Result<Self, FldError> {
        if let CentroidWeighting::TemporalShifted { lambda0 } = self {
            if !(lambda0 > 0.0 && lambda0 <= 1.0) {
                return Err(FldError::InvalidParameter {
                    name: "lambda0",
                    value: lambda0,
                });
            }
        }
        Ok(self)
    }
}

/// Accumulates a (possibly weighted) mean over `entries`.
fn weighted_mean<'a>(
    entries: impl Iterator<Item = &'a QueueEntry>,
    weighting: CentroidWeighting,
) -> Result<FeatureVector, FldError> {
    let mut acc: Vec<f64> = Vec::new();
    let mut total = 0.0;
    let mut count = 0usize;
    for e in entries {
        let f = e.feature.as_slice();
        if acc.is_empty() {
            acc = vec![0.0; f.len()];
        } else if f.len() != acc.len() {
            return Err(FldError::DimensionMismatch {
                expected: acc.len(),
                found: f.len(),
            });
        }
        match weighting {
            CentroidWeighting::TemporalShifted { lambda0 } => {
                let w = lambda0.powi(e.age as i32);
                linalg::axpy(w, f, &mut acc);
                total += w;
            }
            CentroidWeighting::Uniform => {
                for (a, x) in acc.iter_mut().zip(f) {
                    *a += x;
                }
            }
        }
        count += 1;
    }
    if count == 0 {
        return Err(FldError::EmptySampleSet);
    }
    let denom = match weighting {
        CentroidWeighting::TemporalShifted { .. } => total,
        CentroidWeighting::Uniform => count as f64,
    };
    for a in &mut acc {
        *a /= denom;
    }
    Ok(FeatureVector::new(acc)?)
}

/// Temporal-shifted centroid of one queue: `Σ λ₀^age f / Σ λ₀^age`.
pub fn weighted_centroid(queue: &FeatureQueue, lambda0: f64) -> Result<FeatureVector, FldError> {
    let weighting = CentroidWeighting::TemporalShifted { lambda0 }.validate()?;
    if queue.is_empty() {
        return Err(FldError::EmptyQueue);
    }
    weighted_mean(queue.entries(), weighting)
}

/// Weighted mean over the union of all entries of all queues.
pub fn weighted_global_mean<Q: Borrow<FeatureQueue>>(queues: &[Q], lambda0: f64) -> Result<FeatureVector, FldError> {
    let weighting = CentroidWeighting::TemporalShifted { lambda0 }.validate()?;
    weighted_mean(each(queues).flat_map(|q| q.entries()), weighting)
}

/// Per-class centroids plus the global mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    pub per_class: BTreeMap<TrackId, FeatureVector>,
    pub global: Option<FeatureVector>,
    pub weighting: CentroidWeighting,
}

impl CentroidSet {
    /// Centroids of every non-empty queue.
    pub fn compute<Q: Borrow<FeatureQueue>>(queues: &[Q], weighting: CentroidWeighting) -> Result<Self, FldError> {
        let weighting = weighting.validate()?;
        let mut per_class = BTreeMap::new();
        for q in each(queues).filter(|q| !q.is_empty()) {
            per_class.insert(q.id(), weighted_mean(q.entries(), weighting)?);
        }
        let global = if per_class.is_empty() {
            None
        } else {
            Some(weighted_mean(each(queues).flat_map(|q| q.entries()), weighting)?)
        };
        Ok(Self {
            per_class,
            global,
            weighting,
        })
    }

    fn class(&self, id: TrackId) -> Result<&FeatureVector, FldError> {
        self.per_class.get(&id).ok_or(FldError::MissingCentroid(id))
    }
}

fn each<Q: Borrow<FeatureQueue>>(queues: &[Q]) -> impl Iterator<Item = &FeatureQueue> {
    queues.iter().map(Borrow::borrow)
}

fn common_dim<Q: Borrow<FeatureQueue>>(queues: &[Q]) -> Result<Option<usize>, FldError> {
    let mut dim = None;
    for q in each(queues) {
        if let Some(d) = q.dim() {
            match dim {
                None => dim = Some(d),
                Some(expected) if expected != d => {
                    return Err(FldError::DimensionMismatch { expected, found: d })
                }
                _ => {}
            }
        }
    }
    Ok(dim)
}

/// Adds `scale · d dᵀ` to the upper triangle of `s`.
fn add_outer_upper(s: &mut Matrix, d: &[f64], scale: f64) {
    let n = d.len();
    for i in 0..n {
        let di = scale * d[i];
        if di != 0.0 {
            linalg::axpy(di, &d[i..], &mut s.row_mut(i)[i..]);
        }
    }
}

const GRAM_BLOCK: usize = 8;

/// Adds `Σ_r d_r d_rᵀ` over the `GRAM_BLOCK` rows of `block` (row-major,
/// zero-padded) to the upper triangle of `s`. Batching rows keeps each row
/// of `s` in cache across the block instead of streaming it per sample.
fn add_gram_upper(s: &mut Matrix, block: &[f64], dim: usize) {
    for i in 0..dim {
        let c: [f64; GRAM_BLOCK] = std::array::from_fn(|r| block[r * dim + i]);
        if c.iter().all(|&v| v == 0.0) {
            continue;
        }
        let out = &mut s.row_mut(i)[i..];
        let len = out.len();
        // Equal-length slices let the inner loop run without bounds checks.
        let rows: [&[f64]; GRAM_BLOCK] = std::array::from_fn(|r| &block[r * dim + i..r * dim + i + len]);
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for r in 0..GRAM_BLOCK {
                acc += c[r] * rows[r][j];
            }
            *o += acc;
        }
    }
}

fn check_centroid_dim(c: &FeatureVector, dim: usize) -> Result<(), FldError> {
    if c.dim() != dim {
        return Err(FldError::DimensionMismatch {
            expected: dim,
            found: c.dim(),
        });
    }
    Ok(())
}

/// Within-class scatter `Σ_c Σ_x (x − m_c)(x − m_c)ᵀ`.
pub fn scatter_within<Q: Borrow<FeatureQueue>>(queues: &[Q], centroids: &CentroidSet) -> Result<Matrix, FldError> {
    let Some(dim) = common_dim(queues)? else {
        return Err(FldError::EmptySampleSet);
    };
    let mut s = Matrix::zeros(dim, dim);
    let mut block = vec![0.0; GRAM_BLOCK * dim];
    let mut filled = 0;
    for q in each(queues).filter(|q| !q.is_empty()) {
        let m = centroids.class(q.id())?;
        check_centroid_dim(m, dim)?;
        for e in q.entries() {
            let dev = &mut block[filled * dim..(filled + 1) * dim];
            for ((d, x), c) in dev.iter_mut().zip(e.feature.iter()).zip(m.iter()) {
                *d = x - c;
            }
            filled += 1;
            if filled == GRAM_BLOCK {
                add_gram_upper(&mut s, &block, dim);
                filled = 0;
            }
        }
    }
    if filled > 0 {
        block[filled * dim..].iter_mut().for_each(|v| *v = 0.0);
        add_gram_upper(&mut s, &block, dim);
    }
    s.mirror_upper();
    Ok(s)
}

/// Between-class scatter `Σ_c N_c (m_c − m)(m_c − m)ᵀ` with integer `N_c`.
pub fn scatter_between<Q: Borrow<FeatureQueue>>(queues: &[Q], centroids: &CentroidSet) -> Result<Matrix, FldError> {
    let Some(dim) = common_dim(queues)? else {
        return Err(FldError::EmptySampleSet);
    };
    let global = centroids.global.as_ref().ok_or(FldError::EmptySampleSet)?;
    check_centroid_dim(global, dim)?;
    let mut s = Matrix::zeros(dim, dim);
    let mut dev = vec![0.0; dim];
    for q in each(queues).filter(|q| !q.is_empty()) {
        let m = centroids.class(q.id())?;
        check_centroid_dim(m, dim)?;
        for ((d, c), g) in dev.iter_mut().zip(m.iter()).zip(global.iter()) {
            *d = c - g;
        }
        add_outer_upper(&mut s, &dev, q.len() as f64);
    }
    s.mirror_upper();
    Ok(s)
}

/// `S_W + ε·(tr(S_W)/D + SHRINKAGE_FLOOR)·I`
pub fn regularize_within(s_w: &Matrix, epsilon: f64) -> Matrix {
    let d = s_w.rows().max(1) as f64;
    let mut reg = s_w.clone();
    reg.add_diagonal(epsilon * (s_w.trace() / d + SHRINKAGE_FLOOR));
    reg
}

/// Scatter matrices of one fit, exposed for diagnostics.
#[derive(Debug, Clone)]
pub struct FisherScatter {
    pub within: Matrix,
    pub between: Matrix,
    pub within_reg: Matrix,
    pub centroids: CentroidSet,
    pub class_count: usize,
    pub sample_count: usize,
}

impl FisherScatter {
    pub fn compute<Q: Borrow<FeatureQueue>>(
        queues: &[Q],
        weighting: CentroidWeighting,
        epsilon: f64,
    ) -> Result<Self, FldError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(FldError::InvalidParameter {
                name: "epsilon",
                value: epsilon,
            });
        }
        common_dim(queues)?;
        let class_count = each(queues).filter(|q| !q.is_empty()).count();
        let sample_count: usize = each(queues).map(FeatureQueue::len).sum();
        if class_count < 2 {
            return Err(FldError::InsufficientClasses {
                classes: class_count,
            });
        }
        if sample_count < class_count + 1 {
            return Err(FldError::InsufficientSamples {
                samples: sample_count,
                required: class_count + 1,
            });
        }
        let centroids = CentroidSet::compute(queues, weighting)?;
        let within = scatter_within(queues, &centroids)?;
        let between = scatter_between(queues, &centroids)?;
        let within_reg = regularize_within(&within, epsilon);
        Ok(Self {
            within,
            between,
            within_reg,
            centroids,
            class_count,
            sample_count,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    Fisher,
    Pca,
}

/// A `D × D′` linear map applied as `f′ = fᵀW`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    pub w: Matrix,
    pub eigenvalues: Vec<f64>,
    /// Shrinkage coefficient used for `S_W`; zero for PCA.
    pub epsilon: f64,
    pub class_count: usize,
    pub sample_count: usize,
    pub kind: ProjectionKind,
}

impl ProjectionMatrix {
    pub fn input_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.cols()
    }

    /// Wraps an arbitrary matrix, e.g. the identity, as a projection.
    pub fn from_matrix(w: Matrix) -> Self {
        Self {
            eigenvalues: vec![0.0; w.cols()],
            w,
            epsilon: 0.0,
            class_count: 0,
            sample_count: 0,
            kind: ProjectionKind::Fisher,
        }
    }

    pub fn project_one(&self, f: &[f64]) -> Result<Vec<f64>, FldError> {
        if f.len() != self.input_dim() {
            return Err(FldError::DimensionMismatch {
                expected: self.input_dim(),
                found: f.len(),
            });
        }
        Ok(self.w.left_mul_vec(f)?)
    }
}

/// Fits the Fisher projection with temporal-shifted centroids.
pub fn fit_projection<Q: Borrow<FeatureQueue>>(queues: &[Q], lambda0: f64, epsilon: f64) -> Result<ProjectionMatrix, FldError> {
    fit_projection_with(queues, CentroidWeighting::TemporalShifted { lambda0 }, epsilon)
}

pub fn fit_projection_with<Q: Borrow<FeatureQueue>>(
    queues: &[Q],
    weighting: CentroidWeighting,
    epsilon: f64,
) -> Result<ProjectionMatrix, FldError> {
    let scatter = FisherScatter::compute(queues, weighting, epsilon)?;
    fit_from_scatter(&scatter, epsilon)
}

pub fn fit_from_scatter(scatter: &FisherScatter, epsilon: f64) -> Result<ProjectionMatrix, FldError> {
    let dim = scatter.within.rows();
    let out_dim = (scatter.class_count - 1).min(dim);
    let eig = linalg::generalized_eig_top(&scatter.between, &scatter.within_reg, out_dim)?;
    Ok(ProjectionMatrix {
        w: eig.eigenvectors,
        eigenvalues: eig.eigenvalues,
        epsilon,
        class_count: scatter.class_count,
        sample_count: scatter.sample_count,
        kind: ProjectionKind::Fisher,
    })
}

/// `tr((WᵀS_W W)⁻¹ (WᵀS_B W))`
pub fn fisher_criterion(w: &Matrix, s_w: &Matrix, s_b: &Matrix) -> Result<f64, FldError> {
    let wt = w.transpose();
    let mut within = wt.matmul(s_w)?.matmul(w)?;
    let mut between = wt.matmul(s_b)?.matmul(w)?;
    within.mirror_upper();
    between.mirror_upper();
    let x = linalg::solve_spd(&within, &between)?;
    Ok(x.trace())
}

/// Projects each feature: `f′ = fᵀW`.
pub fn project(features: &[FeatureVector], proj: &ProjectionMatrix) -> Result<Vec<FeatureVector>, FldError> {
    features
        .iter()
        .map(|f| Ok(FeatureVector::new(proj.project_one(f)?)?))
        .collect()
}

/// Principal-component projection over all queued samples, for comparison
/// against the discriminant. Centroids are unweighted.
pub fn fit_pca_projection<Q: Borrow<FeatureQueue>>(queues: &[Q], target_dim: usize) -> Result<ProjectionMatrix, FldError> {
    let Some(dim) = common_dim(queues)? else {
        return Err(FldError::InsufficientSamples {
            samples: 0,
            required: 2,
        });
    };
    let n: usize = each(queues).map(FeatureQueue::len).sum();
    if n < 2 {
        return Err(FldError::InsufficientSamples {
            samples: n,
            required: 2,
        });
    }
    if target_dim == 0 {
        return Err(FldError::InvalidParameter {
            name: "target_dim",
            value: 0.0,
        });
    }
    let mean = weighted_mean(each(queues).flat_map(|q| q.entries()), CentroidWeighting::Uniform)?;
    let mut cov = Matrix::zeros(dim, dim);
    let mut dev = vec![0.0; dim];
    for e in each(queues).flat_map(|q| q.entries()) {
        for ((d, x), m) in dev.iter_mut().zip(e.feature.iter()).zip(mean.iter()) {
            *d = x - m;
        }
        add_outer_upper(&mut cov, &dev, 1.0 / (n - 1) as f64);
    }
    cov.mirror_upper();
    let k = target_dim.min(dim);
    let eig = linalg::sym_eig_top(&cov, k)?;
    Ok(ProjectionMatrix {
        w: eig.eigenvectors,
        eigenvalues: eig.eigenvalues,
        epsilon: 0.0,
        class_count: each(queues).filter(|q| !q.is_empty()).count(),
        sample_count: n,
        kind: ProjectionKind::Pca,
    })
}

/// Dense detection × trajectory similarity values.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Result<f64, FldError>,
    ) -> Result<Self, FldError> {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j)?);
            }
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The two cosine matrices and their blend for one association step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBreakdown {
    pub plain: SimilarityMatrix,
    /// Absent when no projection was used or alpha is zero.
    pub projected: Option<SimilarityMatrix>,
    pub integrated: SimilarityMatrix,
    pub alpha: f64,
}

fn cosine_matrix<A: AsRef<[f64]>, B: AsRef<[f64]>>(dets: &[A], trajs: &[B]) -> Result<SimilarityMatrix, FldError> {
    SimilarityMatrix::from_fn(dets.len(), trajs.len(), |i, j| {
        Ok(cosine(dets[i].as_ref(), trajs[j].as_ref())?)
    })
}

/// Computes plain, projected, and blended similarities. With no projection
/// the blend degenerates to the plain cosine matrix.
pub fn similarity_breakdown<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    det_feats: &[A],
    traj_feats: &[B],
    proj: Option<&ProjectionMatrix>,
    alpha: f64,
) -> Result<SimilarityBreakdown, FldError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FldError::InvalidParameter { name: "alpha", value: alpha });
    }
    let plain = cosine_matrix(det_feats, traj_feats)?;
    let proj = proj.filter(|_| alpha > 0.0);
    let Some(proj) = proj else {
        return Ok(SimilarityBreakdown {
            integrated: plain.clone(),
            plain,
            projected: None,
            alpha: 0.0,
        });
    };
    let dets: Vec<Vec<f64>> = det_feats
        .iter()
        .map(|f| proj.project_one(f.as_ref()))
        .collect::<Result<_, _>>()?;
    let trajs: Vec<Vec<f64>> = traj_feats
        .iter()
        .map(|f| proj.project_one(f.as_ref()))
        .collect::<Result<_, _>>()?;
    let projected = cosine_matrix(&dets, &trajs)?;
    let integrated = SimilarityMatrix {
        rows: plain.rows,
        cols: plain.cols,
        values: projected
            .values
            .iter()
            .zip(&plain.values)
            .map(|(p, o)| alpha * p + (1.0 - alpha) * o)
            .collect(),
    };
    Ok(SimilarityBreakdown {
        plain,
        projected: Some(projected),
        integrated,
        alpha,
    })
}

/// `α·cos(f′, f̂′) + (1 − α)·cos(f, f̂)` for every detection/trajectory pair.
pub fn integrated_similarity<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    det_feats: &[A],
    traj_feats: &[B],
    proj: Option<&ProjectionMatrix>,
    alpha: f64,
) -> Result<SimilarityMatrix, FldError> {
    Ok(similarity_breakdown(det_feats, traj_feats, proj, alpha)?.integrated)
}
