//! Deterministic synthetic sequences: many look-alike identities whose
//! embeddings drift and jitter, with occlusion gaps and bouncing boxes.
//!
//! All randomness comes from one `ChaCha8Rng` seeded with `seed`, drawn in a
//! fixed order, so output is identical across runs and platforms.
//!
//! Embedding model per identity `k` at frame `t`:
//!
//! ```text
//! drift_k(t) = drift_memory * drift_k(t-1) + drift_step * g / sqrt(dim)
//! feature    = normalize(prototype_k + drift_k(t) + noise)
//! ```
//!
//! with `g` a standard normal vector. Observation noise has RMS norm
//! `noise_sigma` regardless of `dim`; a share `nuisance_share` of its variance lives in a
//! random `nuisance_dim`-dimensional subspace common to all identities (think
//! pose or lighting), the rest is isotropic. Prototypes are uniform over a
//! spherical cap of half-angle `cone_angle_deg` around a random axis.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};

use crate::config::{parse_range, parse_value, ConfigError};
use crate::io::{DetectionFile, DetectionRow, FeatureBank};
use crate::linalg::{dot, norm, FeatureVector};
use crate::record::{BBox, TrackRecord};

pub const FRAME_WIDTH: f64 = 1920.0;
pub const FRAME_HEIGHT: f64 = 1080.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_ids: usize,
    pub num_frames: usize,
    pub dim: usize,
    /// Half-angle of the cap holding all prototypes.
    pub cone_angle_deg: f64,
    /// Scale of the per-frame drift increment (the whole increment has
    /// norm about `drift_step`).
    pub drift_step: f64,
    /// Fraction of the previous drift kept each frame; below 1 the drift
    /// reverts toward the prototype.
    pub drift_memory: f64,
    /// RMS norm of the observation noise vector.
    pub noise_sigma: f64,
    /// Dimension of the shared nuisance subspace.
    pub nuisance_dim: usize,
    /// Fraction of noise variance inside the nuisance subspace.
    pub nuisance_share: f64,
    /// Per-frame probability that a visible identity becomes occluded.
    pub occlusion_prob: f64,
    /// Inclusive bounds on occlusion span length in frames.
    pub occlusion_len: (usize, usize),
    /// Detection confidences are uniform on this range.
    pub det_conf: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_ids: 10,
            num_frames: 400,
            dim: 64,
            cone_angle_deg: 12.0,
            drift_step: 0.02,
            drift_memory: 0.98,
            noise_sigma: 0.08,
            nuisance_dim: 3,
            nuisance_share: 0.9,
            occlusion_prob: 0.1,
            occlusion_len: (2, 12),
            det_conf: (0.75, 1.0),
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub const KEYS: [&'static str; 13] = [
        "num_ids",
        "num_frames",
        "dim",
        "cone_angle_deg",
        "drift_step",
        "drift_memory",
        "noise_sigma",
        "nuisance_dim",
        "nuisance_share",
        "occlusion_prob",
        "occlusion_len",
        "det_conf",
        "seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "num_ids" => self.num_ids = parse_value(key, value)?,
            "num_frames" => self.num_frames = parse_value(key, value)?,
            "dim" => self.dim = parse_value(key, value)?,
            "cone_angle_deg" => self.cone_angle_deg = parse_value(key, value)?,
            "drift_step" => self.drift_step = parse_value(key, value)?,
            "drift_memory" => self.drift_memory = parse_value(key, value)?,
            "noise_sigma" => self.noise_sigma = parse_value(key, value)?,
            "nuisance_dim" => self.nuisance_dim = parse_value(key, value)?,
            "nuisance_share" => self.nuisance_share = parse_value(key, value)?,
            "occlusion_prob" => self.occlusion_prob = parse_value(key, value)?,
            "occlusion_len" => self.occlusion_len = parse_range(key, value)?,
            "det_conf" => self.det_conf = parse_range(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(ConfigError::new(key, "unknown synth config key")),
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("num_ids", self.num_ids.to_string()),
            ("num_frames", self.num_frames.to_string()),
            ("dim", self.dim.to_string()),
            ("cone_angle_deg", self.cone_angle_deg.to_string()),
            ("drift_step", self.drift_step.to_string()),
            ("drift_memory", self.drift_memory.to_string()),
            ("noise_sigma", self.noise_sigma.to_string()),
            ("nuisance_dim", self.nuisance_dim.to_string()),
            ("nuisance_share", self.nuisance_share.to_string()),
            ("occlusion_prob", self.occlusion_prob.to_string()),
            ("occlusion_len", format!("{},{}", self.occlusion_len.0, self.occlusion_len.1)),
            ("det_conf", format!("{},{}", self.det_conf.0, self.det_conf.1)),
            ("seed", self.seed.to_string()),
        ]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |field: &str, msg: String| Err(ConfigError::new(field, msg));
        if self.num_ids < 2 {
            return err("num_ids", format!("must be at least 2, got {}", self.num_ids));
        }
        if self.num_frames < 1 {
            return err("num_frames", "must be at least 1".into());
        }
        if self.dim < 2 {
            return err("dim", format!("must be at least 2, got {}", self.dim));
        }
        if !(self.cone_angle_deg > 0.0 && self.cone_angle_deg <= 90.0) {
            return err("cone_angle_deg", format!("must be in (0, 90], got {}", self.cone_angle_deg));
        }
        for (name, v) in [("drift_step", self.drift_step), ("noise_sigma", self.noise_sigma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return err(name, format!("must be non-negative, got {v}"));
            }
        }
        if self.nuisance_dim > self.dim {
            return err("nuisance_dim", format!("must not exceed dim {}, got {}", self.dim, self.nuisance_dim));
        }
        for (name, v) in [
            ("drift_memory", self.drift_memory),
            ("nuisance_share", self.nuisance_share),
            ("occlusion_prob", self.occlusion_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return err(name, format!("must be in [0, 1], got {v}"));
            }
        }
        let (lo, hi) = self.occlusion_len;
        if lo < 1 || lo > hi {
            return err("occlusion_len", format!("need 1 <= min <= max, got {lo},{hi}"));
        }
        let (lo, hi) = self.det_conf;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return err("det_conf", format!("need 0 <= min <= max <= 1, got {lo},{hi}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub gt: Vec<TrackRecord>,
    pub dets: DetectionFile,
    pub feats: FeatureBank,
    /// Ground-truth identity of each detection row.
    pub det_ids: Vec<u64>,
    /// Prototype of identity `k + 1` at index `k`.
    pub prototypes: Vec<FeatureVector>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Uniform over the spherical cap of half-angle `cone` (radians) around
/// unit `axis`, in the sense of the angle's area element on a 2-sphere.
fn cone_sample(rng: &mut ChaCha8Rng, axis: &[f64], cone: f64) -> Vec<f64> {
    let theta = cone * rng.random::<f64>().sqrt();
    let mut o = gaussian(rng, axis.len());
    let along = dot(&o, axis);
    for (x, a) in o.iter_mut().zip(axis) {
        *x -= along * a;
    }
    let o = unit(o);
    axis.iter()
        .zip(&o)
        .map(|(a, b)| theta.cos() * a + theta.sin() * b)
        .collect()
}

/// `k` orthonormal vectors by Gram-Schmidt on Gaussian draws.
fn random_basis(rng: &mut ChaCha8Rng, dim: usize, k: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = gaussian(rng, dim);
        for b in &basis {
            let c = dot(&v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
        if norm(&v) > 1e-6 {
            basis.push(unit(v));
        }
    }
    basis
}

struct Mover {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    w: f64,
    h: f64,
}

impl Mover {
    fn spawn(rng: &mut ChaCha8Rng) -> Self {
        let w = rng.random_range(40.0..120.0);
        let h = w * rng.random_range(2.0..3.0);
        Self {
            x: rng.random_range(0.0..FRAME_WIDTH - w),
            y: rng.random_range(0.0..FRAME_HEIGHT - h),
            vx: rng.random_range(-4.0..4.0),
            vy: rng.random_range(-2.0..2.0),
            w,
            h,
        }
    }

    fn advance(&mut self) {
        fn bounce(p: &mut f64, v: &mut f64, max: f64) {
            *p += *v;
            if *p < 0.0 {
                *p = -*p;
                *v = -*v;
            }
            if *p > max {
                *p = 2.0 * max - *p;
                *v = -*v;
            }
        }
        bounce(&mut self.x, &mut self.vx, FRAME_WIDTH - self.w);
        bounce(&mut self.y, &mut self.vy, FRAME_HEIGHT - self.h);
    }

    /// Box rounded to hundredths so text output is exact.
    fn bbox(&self) -> BBox {
        let r = |v: f64| (v * 100.0).round() / 100.0;
        BBox::new(r(self.x), r(self.y), r(self.w), r(self.h))
    }
}

/// Generates one sequence. Occluded identities have neither a detection nor
/// a ground-truth row.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput, ConfigError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim;
    let axis = unit(gaussian(&mut rng, dim));
    let cone = config.cone_angle_deg.to_radians();
    let prototypes: Vec<Vec<f64>> = (0..config.num_ids).map(|_| cone_sample(&mut rng, &axis, cone)).collect();
    let nuisance = random_basis(&mut rng, dim, config.nuisance_dim);
    let iso_sigma = config.noise_sigma * ((1.0 - config.nuisance_share) / dim as f64).sqrt();
    let nuisance_sigma = if config.nuisance_dim == 0 {
        0.0
    } else {
        config.noise_sigma * (config.nuisance_share / config.nuisance_dim as f64).sqrt()
    };
    let mut movers: Vec<Mover> = (0..config.num_ids).map(|_| Mover::spawn(&mut rng)).collect();
    let mut drift = vec![vec![0.0; dim]; config.num_ids];
    let mut hidden_until = vec![0usize; config.num_ids];

    let (len_lo, len_hi) = config.occlusion_len;
    let extra_mean = (len_hi - len_lo) as f64 / 2.0;
    let span = Geometric::new(1.0 / (1.0 + extra_mean)).expect("probability in (0, 1]");
    let drift_scale = config.drift_step / (dim as f64).sqrt();

    let mut gt = Vec::new();
    let mut rows = Vec::new();
    let mut det_ids = Vec::new();
    let mut feats: Vec<f32> = Vec::new();
    let mut order: Vec<usize> = (0..config.num_ids).collect();

    for t in 0..config.num_frames {
        let frame = t as u64 + 1;
        if t > 0 {
            for m in &mut movers {
                m.advance();
            }
        }
        for k in 0..config.num_ids {
            let g = gaussian(&mut rng, dim);
            for (d, gi) in drift[k].iter_mut().zip(g) {
                *d = config.drift_memory * *d + drift_scale * gi;
            }
            if t > hidden_until[k] && rng.random::<f64>() < config.occlusion_prob {
                let len = (len_lo as u64 + span.sample(&mut rng)).min(len_hi as u64);
                hidden_until[k] = t + len as usize;
            }
        }
        order.shuffle(&mut rng);
        for &k in &order {
            if t < hidden_until[k] {
                continue;
            }
            let mut raw: Vec<f64> = gaussian(&mut rng, dim)
                .into_iter()
                .enumerate()
                .map(|(i, g)| prototypes[k][i] + drift[k][i] + iso_sigma * g)
                .collect();
            for b in &nuisance {
                let g: f64 = StandardNormal.sample(&mut rng);
                let c = nuisance_sigma * g;
                for (x, y) in raw.iter_mut().zip(b) {
                    *x += c * y;
                }
            }
            let f = unit(raw);
            let confidence = rng.random_range(config.det_conf.0..=config.det_conf.1);
            let bbox = movers[k].bbox();
            let id = k as u64 + 1;
            gt.push(TrackRecord { frame, id, bbox });
            rows.push(DetectionRow {
                frame,
                id: -1,
                bbox,
                confidence,
                index: rows.len(),
            });
            det_ids.push(id);
            feats.extend(f.iter().map(|&v| v as f32));
        }
    }
    crate::record::sort_records(&mut gt);
    let feats = FeatureBank::new(dim, feats).expect("generated features are finite");
    let prototypes = prototypes
        .into_iter()
        .map(|p| FeatureVector::new(p).expect("finite prototype"))
        .collect();
    Ok(SynthOutput {
        gt,
        dets: DetectionFile { rows },
        feats,
        det_ids,
        prototypes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::encode_features;
    use crate::linalg::cosine;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            num_ids: 3,
            num_frames: 10,
            dim: 16,
            occlusion_prob: 0.0,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn no_occlusion_gives_one_row_per_id_and_frame() {
        let out = generate(&small(1)).unwrap();
        assert_eq!(out.dets.len(), 30);
        assert_eq!(out.feats.count(), 30);
        assert_eq!(out.gt.len(), 30);
        assert_eq!(out.det_ids.len(), 30);
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SynthConfig {
            num_frames: 50,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(encode_features(&a.feats), encode_features(&b.feats));
        let c = generate(&SynthConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a.feats, c.feats);
    }

    #[test]
    fn noiseless_features_equal_prototypes() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            drift_step: 0.0,
            ..small(4)
        };
        let out = generate(&cfg).unwrap();
        for (row, &id) in out.det_ids.iter().enumerate() {
            let f = out.feats.vector(row);
            let p = &out.prototypes[id as usize - 1];
            assert!(cosine(&f, p).unwrap() > 1.0 - 1e-6);
        }
    }

    #[test]
    fn prototypes_stay_inside_the_cone() {
        for seed in 0..20 {
            let cfg = SynthConfig {
                num_ids: 12,
                num_frames: 1,
                cone_angle_deg: 5.0 + seed as f64 * 4.0,
                seed,
                ..SynthConfig::default()
            };
            let out = generate(&cfg).unwrap();
            let floor = (2.0 * cfg.cone_angle_deg).to_radians().cos();
            for a in &out.prototypes {
                assert!((a.norm() - 1.0).abs() < 1e-12);
                for b in &out.prototypes {
                    assert!(cosine(a, b).unwrap() >= floor - 1e-12);
                }
            }
        }
    }

    #[test]
    fn intra_identity_similarity_beats_inter() {
        let out = generate(&SynthConfig {
            num_frames: 60,
            ..SynthConfig::default()
        })
        .unwrap();
        let (mut intra, mut inter) = ((0.0, 0usize), (0.0, 0usize));
        for i in (0..out.feats.count()).step_by(7) {
            for j in (i + 1..out.feats.count()).step_by(5) {
                let c = cosine(&out.feats.vector(i), &out.feats.vector(j)).unwrap();
                let slot = if out.det_ids[i] == out.det_ids[j] { &mut intra } else { &mut inter };
                slot.0 += c;
                slot.1 += 1;
            }
        }
        assert!(intra.0 / intra.1 as f64 > inter.0 / inter.1 as f64);
    }

    #[test]
    fn features_are_unit_and_boxes_in_frame() {
        let out = generate(&SynthConfig {
            num_frames: 200,
            ..SynthConfig::default()
        })
        .unwrap();
        for row in out.feats.rows() {
            let n: f64 = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
        for r in &out.dets.rows {
            assert!(r.bbox.is_valid());
            assert!(r.bbox.left >= 0.0 && r.bbox.right() <= FRAME_WIDTH + 0.01);
            assert!(r.bbox.top >= 0.0 && r.bbox.bottom() <= FRAME_HEIGHT + 0.01);
            assert!((0.75..=1.0).contains(&r.confidence));
        }
    }

    #[test]
    fn occlusion_spans_respect_bounds() {
        let cfg = SynthConfig {
            num_frames: 300,
            occlusion_prob: 0.2,
            occlusion_len: (3, 6),
            ..SynthConfig::default()
        };
        let out = generate(&cfg).unwrap();
        for id in 1..=cfg.num_ids as u64 {
            let frames: Vec<u64> = out.gt.iter().filter(|r| r.id == id).map(|r| r.frame).collect();
            assert_eq!(frames[0], 1);
            for w in frames.windows(2) {
                let gap = w[1] - w[0] - 1;
                assert!(gap == 0 || (3..=6).contains(&gap), "gap {gap}");
            }
        }
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let cases: [(&str, &str); 6] = [
            ("num_ids", "1"),
            ("cone_angle_deg", "0"),
            ("occlusion_prob", "1.5"),
            ("occlusion_len", "5,2"),
            ("det_conf", "0.5,1.2"),
            ("nuisance_dim", "100"),
        ];
        for (k, v) in cases {
            let mut cfg = SynthConfig::default();
            cfg.set(k, v).unwrap();
            assert_eq!(generate(&cfg).unwrap_err().field, k);
        }
        assert_eq!(SynthConfig::default().entries().len(), SynthConfig::KEYS.len());
    }
}
