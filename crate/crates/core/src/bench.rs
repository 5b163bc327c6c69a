//! Latency harness: runs the tracker on a synthetic sequence with a fixed
//! number of always-visible identities and times the projection fit.

use std::time::{Duration, Instant};

use crate::io::frame_inputs;
use crate::synth::{generate, SynthConfig};
use crate::tracker::{Tracker, TrackerConfig, TrackerError};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub dim: usize,
    pub ids: usize,
    /// Queue capacity; this many frames run untimed first so queues are full.
    pub queue: usize,
    /// Timed frames.
    pub frames: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dim: 256,
            ids: 20,
            queue: 60,
            frames: 100,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfig,
    /// Per timed frame, in milliseconds.
    pub fit_ms: Vec<f64>,
    pub fit_p50_ms: f64,
    pub fit_p95_ms: f64,
    pub fit_max_ms: f64,
    /// Timed frames per second of wall time, including matching.
    pub fps: f64,
}

impl BenchReport {
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dim", self.config.dim.to_string()),
            ("ids", self.config.ids.to_string()),
            ("queue", self.config.queue.to_string()),
            ("frames", self.config.frames.to_string()),
            ("seed", self.config.seed.to_string()),
            ("fit_p50_ms", format!("{:.4}", self.fit_p50_ms)),
            ("fit_p95_ms", format!("{:.4}", self.fit_p95_ms)),
            ("fit_max_ms", format!("{:.4}", self.fit_max_ms)),
            ("fps", format!("{:.2}", self.fps)),
        ]
    }
}

/// Nearest-rank percentile of unsorted `values`; `p` in `[0, 100]`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

pub fn run(config: &BenchConfig) -> Result<BenchReport, TrackerError> {
    let synth = SynthConfig {
        num_ids: config.ids,
        num_frames: config.queue + config.frames,
        dim: config.dim,
        occlusion_prob: 0.0,
        nuisance_dim: SynthConfig::default().nuisance_dim.min(config.dim),
        seed: config.seed,
        ..SynthConfig::default()
    };
    let out = generate(&synth)?;
    let frames = frame_inputs(&out.dets, &out.feats).expect("generated data is aligned");
    let mut tracker = Tracker::new(TrackerConfig {
        queue_len: config.queue,
        ..TrackerConfig::default()
    })?;
    let (warmup, timed) = frames.split_at(config.queue.min(frames.len()));
    for f in warmup {
        tracker.step(f)?;
    }
    let mut fit_ms = Vec::with_capacity(timed.len());
    let start = Instant::now();
    for f in timed {
        let report = tracker.step(f)?;
        fit_ms.push(report.fit_time.map_or(0.0, ms));
    }
    let wall = start.elapsed().as_secs_f64();
    Ok(BenchReport {
        config: config.clone(),
        fit_p50_ms: percentile(&fit_ms, 50.0),
        fit_p95_ms: percentile(&fit_ms, 95.0),
        fit_max_ms: fit_ms.iter().copied().fold(f64::NAN, f64::max),
        fps: if wall > 0.0 { timed.len() as f64 / wall } else { f64::INFINITY },
        fit_ms,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
