//! Single-stage appearance-only tracker.
//!
//! Per frame: gate detections on confidence, match them against every live
//! trajectory with the blended (projected + original) cosine similarity,
//! accept matches above the similarity threshold, spawn newborns from
//! confident leftovers, and retire trajectories that stay unmatched for too
//! long. The discriminant projection is fitted from the trajectories'
//! feature queues as they stood before the current frame.

use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::assignment::{self, CostMatrix};
use crate::config::{parse_bool, parse_value, ConfigError};
use crate::fld::{
    self, CentroidWeighting, FeatureQueue, FldError, ProjectionMatrix, SimilarityBreakdown, SimilarityMatrix,
    TrackId,
};
use crate::linalg::{FeatureVector, LinalgError};
use crate::record::{sort_records, BBox, TrackRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("frame {got} does not follow frame {previous}")]
    FrameOrder { previous: u64, got: u64 },
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("frame input is misaligned: {boxes} boxes, {confidences} confidences, {features} features")]
    Alignment {
        boxes: usize,
        confidences: usize,
        features: usize,
    },
    #[error("detection {index} has a non-positive box")]
    InvalidBox { index: usize },
    #[error(transparent)]
    Fld(#[from] FldError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which subspace sharpens the similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionChoice {
    Fld,
    Pca,
    None,
}

impl fmt::Display for ProjectionChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProjectionChoice::Fld => "fld",
            ProjectionChoice::Pca => "pca",
            ProjectionChoice::None => "none",
        })
    }
}

impl std::str::FromStr for ProjectionChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "fld" => Ok(Self::Fld),
            "pca" => Ok(Self::Pca),
            "none" => Ok(Self::None),
            other => Err(format!("unknown projection kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Detections at or below this confidence are ignored.
    pub tau_det: f64,
    /// Minimum normalized similarity `(cos + 1) / 2` for accepting a match.
    pub tau_sim: f64,
    /// Unmatched detections above this confidence start new tracks.
    pub tau_new: f64,
    /// Trajectories are removed once missed for more than this many frames.
    pub tau_miss: u32,
    /// Feature queue capacity per trajectory.
    pub queue_len: usize,
    pub lambda0: f64,
    /// Weight of the projected-space similarity.
    pub alpha: f64,
    /// Weight of the new observation in the EMA update.
    pub alpha_ema: f64,
    /// Shrinkage coefficient for the within-class scatter.
    pub epsilon: f64,
    /// Refit the projection every this many frames.
    pub refit_stride: u32,
    pub use_projection: bool,
    pub projection_kind: ProjectionChoice,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            tau_det: 0.6,
            tau_sim: 0.55,
            tau_new: 0.7,
            tau_miss: 30,
            queue_len: 60,
            lambda0: 0.9,
            alpha: 0.9,
            alpha_ema: 0.9,
            epsilon: 1e-3,
            refit_stride: 1,
            use_projection: true,
            projection_kind: ProjectionChoice::Fld,
        }
    }
}

impl TrackerConfig {
    pub const KEYS: [&'static str; 12] = [
        "tau_det",
        "tau_sim",
        "tau_new",
        "tau_miss",
        "queue_len",
        "lambda0",
        "alpha",
        "alpha_ema",
        "epsilon",
        "refit_stride",
        "use_projection",
        "projection_kind",
    ];

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "tau_det" => self.tau_det = parse_value(key, value)?,
            "tau_sim" => self.tau_sim = parse_value(key, value)?,
            "tau_new" => self.tau_new = parse_value(key, value)?,
            "tau_miss" => self.tau_miss = parse_value(key, value)?,
            "queue_len" | "T" => self.queue_len = parse_value(key, value)?,
            "lambda0" => self.lambda0 = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "alpha_ema" => self.alpha_ema = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "refit_stride" => self.refit_stride = parse_value(key, value)?,
            "use_projection" => self.use_projection = parse_bool(key, value)?,
            "projection_kind" => self.projection_kind = parse_value(key, value)?,
            _ => return Err(ConfigError::new(key, "unknown tracker config key")),
        }
        Ok(())
    }

    /// `(key, value)` for every field, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("tau_det", self.tau_det.to_string()),
            ("tau_sim", self.tau_sim.to_string()),
            ("tau_new", self.tau_new.to_string()),
            ("tau_miss", self.tau_miss.to_string()),
            ("queue_len", self.queue_len.to_string()),
            ("lambda0", self.lambda0.to_string()),
            ("alpha", self.alpha.to_string()),
            ("alpha_ema", self.alpha_ema.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("refit_stride", self.refit_stride.to_string()),
            ("use_projection", self.use_projection.to_string()),
            ("projection_kind", self.projection_kind.to_string()),
        ]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::new(name, format!("must be in [0, 1], got {v}")))
            }
        };
        unit("tau_det", self.tau_det)?;
        unit("tau_sim", self.tau_sim)?;
        unit("tau_new", self.tau_new)?;
        unit("alpha", self.alpha)?;
        unit("alpha_ema", self.alpha_ema)?;
        if self.tau_miss < 1 {
            return Err(ConfigError::new("tau_miss", "must be at least 1"));
        }
        if self.queue_len < 1 {
            return Err(ConfigError::new("queue_len", "must be at least 1"));
        }
        if !(self.lambda0 > 0.0 && self.lambda0 <= 1.0) {
            return Err(ConfigError::new("lambda0", format!("must be in (0, 1], got {}", self.lambda0)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ConfigError::new("epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if self.refit_stride < 1 {
            return Err(ConfigError::new("refit_stride", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub confidence: f64,
    pub feature: FeatureVector,
}

/// All detections of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub frame: u64,
    pub detections: Vec<Detection>,
}

impl FrameInput {
    /// Builds a frame from parallel lists.
    pub fn from_parts(
        frame: u64,
        boxes: Vec<BBox>,
        confidences: Vec<f64>,
        features: Vec<FeatureVector>,
    ) -> Result<Self, TrackerError> {
        if boxes.len() != confidences.len() || boxes.len() != features.len() {
            return Err(TrackerError::Alignment {
                boxes: boxes.len(),
                confidences: confidences.len(),
                features: features.len(),
            });
        }
        let detections = boxes
            .into_iter()
            .zip(confidences)
            .zip(features)
            .map(|((bbox, confidence), feature)| Detection {
                bbox,
                confidence,
                feature,
            })
            .collect();
        Ok(Self { frame, detections })
    }
}

/// One live track.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: TrackId,
    pub queue: FeatureQueue,
    pub ema: FeatureVector,
    pub last_seen_frame: u64,
    pub misses: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub frame: u64,
    /// `(detection index in the frame input, track id)`.
    pub matches: Vec<(usize, TrackId)>,
    pub newborns: Vec<TrackId>,
    pub removed: Vec<TrackId>,
    pub records: Vec<TrackRecord>,
    /// Whether a projection contributed to this frame's similarities.
    pub projection_used: bool,
    /// Wall time of the projection fit, when one ran this frame.
    pub fit_time: Option<Duration>,
}

/// What the tracker saw while associating one frame.
pub struct FrameProbe<'a> {
    pub frame: u64,
    /// Indices into the frame input of the detections that passed `tau_det`.
    pub detections: &'a [usize],
    pub track_ids: &'a [TrackId],
    pub similarity: &'a SimilarityBreakdown,
}

pub type Probe = Box<dyn FnMut(&FrameProbe<'_>) + Send>;

/// `normalize((1 − α)·old + α·new)`
pub fn ema_update(old: &FeatureVector, new: &FeatureVector, alpha_ema: f64) -> Result<FeatureVector, TrackerError> {
    if old.dim() != new.dim() {
        return Err(TrackerError::DimensionMismatch {
            expected: old.dim(),
            found: new.dim(),
        });
    }
    let blended: Vec<f64> = old
        .iter()
        .zip(new.iter())
        .map(|(o, n)| (1.0 - alpha_ema) * o + alpha_ema * n)
        .collect();
    match FeatureVector::new(blended)?.normalized() {
        Ok(v) => Ok(v),
        // Exactly opposing inputs cancel; keep the fresh observation.
        Err(LinalgError::ZeroVector) => Ok(new.normalized()?),
        Err(e) => Err(e.into()),
    }
}

/// Maps cosine similarity to `[0, 1]` and negates it into a cost.
pub fn build_cost(similarity: &SimilarityMatrix) -> CostMatrix {
    let values = similarity.values().iter().map(|&c| -normalized_similarity(c)).collect();
    CostMatrix::new(similarity.rows(), similarity.cols(), values).expect("similarities are finite")
}

#[inline]
pub fn normalized_similarity(cos: f64) -> f64 {
    (cos + 1.0) / 2.0
}

pub struct Tracker {
    config: TrackerConfig,
    weighting: CentroidWeighting,
    trajectories: Vec<Trajectory>,
    next_id: TrackId,
    frames_processed: u64,
    last_frame: Option<u64>,
    dim: Option<usize>,
    records: Vec<TrackRecord>,
    cached: Option<ProjectionMatrix>,
    steps_since_fit: u32,
    solver_calls: u64,
    probe: Option<Probe>,
}

impl fmt::Debug for Tracker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tracker")
            .field("config", &self.config)
            .field("trajectories", &self.trajectories.len())
            .field("next_id", &self.next_id)
            .field("frames_processed", &self.frames_processed)
            .finish_non_exhaustive()
    }
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self, TrackerError> {
        config.validate()?;
        Ok(Self {
            weighting: CentroidWeighting::TemporalShifted {
                lambda0: config.lambda0,
            },
            config,
            trajectories: Vec::new(),
            next_id: 1,
            frames_processed: 0,
            last_frame: None,
            dim: None,
            records: Vec::new(),
            cached: None,
            steps_since_fit: 0,
            solver_calls: 0,
            probe: None,
        })
    }

    /// Replaces the temporal-shifted centroids with plain means.
    pub fn with_uniform_centroids(mut self) -> Self {
        self.weighting = CentroidWeighting::Uniform;
        self
    }

    /// Installs a callback invoked after similarities are computed.
    pub fn set_probe(&mut self, probe: Probe) {
        self.probe = Some(probe);
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn next_id(&self) -> TrackId {
        self.next_id
    }

    pub fn frames_processed(&self) -> u64 {
        self.frames_processed
    }

    /// Number of projection fits performed so far.
    pub fn solver_calls(&self) -> u64 {
        self.solver_calls
    }

    pub fn records(&self) -> &[TrackRecord] {
        &self.records
    }

    fn projection_enabled(&self) -> bool {
        self.config.use_projection && self.config.projection_kind != ProjectionChoice::None && self.config.alpha > 0.0
    }

    /// Fits the configured projection from the current queues, if the
    /// trajectory set supports one (at least two classes and `C + 1`
    /// samples).
    pub fn fit_current_projection(&self) -> Result<Option<ProjectionMatrix>, TrackerError> {
        let queues: Vec<&FeatureQueue> = self.trajectories.iter().map(|t| &t.queue).collect();
        let classes = queues.iter().filter(|q| !q.is_empty()).count();
        let samples: usize = queues.iter().map(|q| q.len()).sum();
        if classes < 2 || samples < classes + 1 {
            return Ok(None);
        }
        let proj = match self.config.projection_kind {
            ProjectionChoice::Pca => fld::fit_pca_projection(&queues, classes - 1)?,
            _ => fld::fit_projection_with(&queues, self.weighting, self.config.epsilon)?,
        };
        Ok(Some(proj))
    }

    fn current_projection(&mut self) -> Result<(Option<ProjectionMatrix>, Option<Duration>), TrackerError> {
        if !self.projection_enabled() {
            return Ok((None, None));
        }
        let due = self.cached.is_none() || self.steps_since_fit >= self.config.refit_stride;
        if !due {
            return Ok((self.cached.clone(), None));
        }
        let start = Instant::now();
        let fitted = self.fit_current_projection()?;
        let elapsed = start.elapsed();
        if fitted.is_some() {
            self.solver_calls += 1;
            self.steps_since_fit = 0;
        }
        let timing = fitted.as_ref().map(|_| elapsed);
        self.cached = fitted.clone();
        Ok((fitted, timing))
    }

    /// Processes one frame.
    pub fn step(&mut self, input: &FrameInput) -> Result<StepReport, TrackerError> {
        if let Some(previous) = self.last_frame {
            if input.frame <= previous {
                return Err(TrackerError::FrameOrder {
                    previous,
                    got: input.frame,
                });
            }
        }
        // Validate and normalize before touching any state.
        let mut features = Vec::with_capacity(input.detections.len());
        let mut dim = self.dim;
        for (index, det) in input.detections.iter().enumerate() {
            if !det.bbox.is_valid() {
                return Err(TrackerError::InvalidBox { index });
            }
            let d = det.feature.dim();
            match dim {
                None => dim = Some(d),
                Some(expected) if expected != d => {
                    return Err(TrackerError::DimensionMismatch { expected, found: d })
                }
                _ => {}
            }
            features.push(det.feature.normalized()?);
        }
        self.dim = dim;

        let gap = self.last_frame.map_or(1, |p| input.frame - p);
        let gap = u32::try_from(gap).unwrap_or(u32::MAX);
        for t in &mut self.trajectories {
            t.queue.advance(gap);
        }
        self.last_frame = Some(input.frame);

        let kept: Vec<usize> = (0..input.detections.len())
            .filter(|&i| input.detections[i].confidence > self.config.tau_det)
            .collect();

        let (projection, fit_time) = self.current_projection()?;
        self.steps_since_fit = self.steps_since_fit.saturating_add(1);

        let det_feats: Vec<&[f64]> = kept.iter().map(|&i| features[i].as_slice()).collect();
        let traj_feats: Vec<&[f64]> = self.trajectories.iter().map(|t| t.ema.as_slice()).collect();
        let alpha = if projection.is_some() { self.config.alpha } else { 0.0 };
        let breakdown = fld::similarity_breakdown(&det_feats, &traj_feats, projection.as_ref(), alpha)?;

        if let Some(probe) = self.probe.as_mut() {
            let ids: Vec<TrackId> = self.trajectories.iter().map(|t| t.id).collect();
            probe(&FrameProbe {
                frame: input.frame,
                detections: &kept,
                track_ids: &ids,
                similarity: &breakdown,
            });
        }

        let costs = build_cost(&breakdown.integrated);
        let solution = assignment::solve(&costs);

        let mut report = StepReport {
            frame: input.frame,
            projection_used: breakdown.projected.is_some(),
            fit_time,
            ..StepReport::default()
        };
        let mut det_taken = vec![false; kept.len()];
        let mut traj_hit = vec![false; self.trajectories.len()];
        for &(row, col) in &solution.pairs {
            if normalized_similarity(breakdown.integrated.get(row, col)) <= self.config.tau_sim {
                continue;
            }
            let det_index = kept[row];
            let feature = features[det_index].clone();
            let traj = &mut self.trajectories[col];
            traj.ema = ema_update(&traj.ema, &feature, self.config.alpha_ema)?;
            traj.queue.push(feature)?;
            traj.misses = 0;
            traj.last_seen_frame = input.frame;
            det_taken[row] = true;
            traj_hit[col] = true;
            report.matches.push((det_index, traj.id));
            report.records.push(TrackRecord {
                frame: input.frame,
                id: traj.id,
                bbox: input.detections[det_index].bbox,
            });
        }

        // Age out unmatched trajectories before adding newborns.
        let mut survivors = Vec::with_capacity(self.trajectories.len());
        for (traj, hit) in std::mem::take(&mut self.trajectories).into_iter().zip(traj_hit) {
            let mut traj = traj;
            if !hit {
                traj.misses += 1;
                if traj.misses > self.config.tau_miss {
                    report.removed.push(traj.id);
                    continue;
                }
            }
            survivors.push(traj);
        }
        self.trajectories = survivors;

        for (row, &det_index) in kept.iter().enumerate() {
            let det = &input.detections[det_index];
            if det_taken[row] || det.confidence <= self.config.tau_new {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            let feature = features[det_index].clone();
            let mut queue = FeatureQueue::new(id, self.config.queue_len);
            queue.push(feature.clone())?;
            self.trajectories.push(Trajectory {
                id,
                queue,
                ema: feature,
                last_seen_frame: input.frame,
                misses: 0,
            });
            report.newborns.push(id);
            report.records.push(TrackRecord {
                frame: input.frame,
                id,
                bbox: det.bbox,
            });
        }

        sort_records(&mut report.records);
        self.records.extend_from_slice(&report.records);
        self.frames_processed += 1;
        Ok(report)
    }

    /// All emitted records sorted by `(frame, id)`.
    pub fn finalize(&self) -> Vec<TrackRecord> {
        let mut out = self.records.clone();
        sort_records(&mut out);
        out
    }
}

/// Runs a fresh tracker over `frames` and returns its finalized records.
pub fn track_frames(config: &TrackerConfig, frames: &[FrameInput]) -> Result<Vec<TrackRecord>, TrackerError> {
    let mut tracker = Tracker::new(config.clone())?;
    for f in frames {
        tracker.step(f)?;
    }
    Ok(tracker.finalize())
}
