//! CLEAR-MOT counts (FP, FN, ID switches, MOTA) and identity metrics (IDF1).
//!
//! Per frame, predictions and ground truth are matched by minimum-cost
//! assignment on `1 - IoU`, keeping only pairs with `IoU >= iou_thr`. IDF1
//! instead matches whole identities once over the sequence, maximizing the
//! number of frames in which a predicted and a ground-truth identity overlap
//! with `IoU >= iou_thr`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::assignment::{self, CostMatrix};
use crate::record::{BBox, TrackRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{source_name} has a duplicate row for frame {frame}, id {id}")]
    DuplicateKey {
        source_name: &'static str,
        frame: u64,
        id: u64,
    },
    #[error("iou threshold must be in (0, 1), got {0}")]
    InvalidThreshold(f64),
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.left.max(b.left)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.top.max(b.top)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub mota: f64,
    pub idsw: usize,
    pub fp: usize,
    pub fn_: usize,
    pub matches: usize,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
    pub num_gt: usize,
    pub num_pred: usize,
    pub num_gt_ids: usize,
    pub num_pred_ids: usize,
}

impl EvalReport {
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("idf1", self.idf1.to_string()),
            ("idp", self.idp.to_string()),
            ("idr", self.idr.to_string()),
            ("mota", self.mota.to_string()),
            ("idsw", self.idsw.to_string()),
            ("fp", self.fp.to_string()),
            ("fn", self.fn_.to_string()),
            ("matches", self.matches.to_string()),
            ("idtp", self.idtp.to_string()),
            ("idfp", self.idfp.to_string()),
            ("idfn", self.idfn.to_string()),
            ("num_gt", self.num_gt.to_string()),
            ("num_pred", self.num_pred.to_string()),
            ("num_gt_ids", self.num_gt_ids.to_string()),
            ("num_pred_ids", self.num_pred_ids.to_string()),
        ]
    }

    /// One `key=value` per line.
    pub fn to_key_value_block(&self) -> String {
        self.key_values().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>8} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6} {:>8}",
            "IDF1", "IDP", "IDR", "MOTA", "IDSW", "FP", "FN", "GT"
        )?;
        writeln!(
            f,
            "{:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>6} {:>6} {:>6} {:>8}",
            self.idf1, self.idp, self.idr, self.mota, self.idsw, self.fp, self.fn_, self.num_gt
        )
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

type FrameIndex<'a> = BTreeMap<u64, Vec<&'a TrackRecord>>;

fn index_by_frame<'a>(records: &'a [TrackRecord], source_name: &'static str) -> Result<FrameIndex<'a>, EvalError> {
    let mut seen = HashSet::with_capacity(records.len());
    let mut out: FrameIndex<'a> = BTreeMap::new();
    for r in records {
        if !seen.insert((r.frame, r.id)) {
            return Err(EvalError::DuplicateKey {
                source_name,
                frame: r.frame,
                id: r.id,
            });
        }
        out.entry(r.frame).or_default().push(r);
    }
    for rows in out.values_mut() {
        rows.sort_by_key(|r| r.id);
    }
    Ok(out)
}

/// Scores `pred` against `gt`. Empty inputs score 1 on every ratio whose
/// denominator vanishes.
pub fn evaluate(pred: &[TrackRecord], gt: &[TrackRecord], iou_thr: f64) -> Result<EvalReport, EvalError> {
    if !(iou_thr > 0.0 && iou_thr < 1.0) {
        return Err(EvalError::InvalidThreshold(iou_thr));
    }
    let pred_frames = index_by_frame(pred, "prediction")?;
    let gt_frames = index_by_frame(gt, "ground truth")?;

    let mut fp = 0;
    let mut fn_ = 0;
    let mut matches = 0;
    let mut idsw = 0;
    let mut last_match: HashMap<u64, u64> = HashMap::new();
    // Frames in which (gt id, pred id) overlap enough, for IDF1.
    let mut overlap: HashMap<(u64, u64), usize> = HashMap::new();
    let empty = Vec::new();

    let frames: std::collections::BTreeSet<u64> = pred_frames.keys().chain(gt_frames.keys()).copied().collect();
    for frame in frames {
        let g = gt_frames.get(&frame).unwrap_or(&empty);
        let p = pred_frames.get(&frame).unwrap_or(&empty);
        if g.is_empty() || p.is_empty() {
            fn_ += g.len();
            fp += p.len();
            continue;
        }
        let ious: Vec<f64> = g
            .iter()
            .flat_map(|a| p.iter().map(move |b| iou(&a.bbox, &b.bbox)))
            .collect();
        for (gi, a) in g.iter().enumerate() {
            for (pi, b) in p.iter().enumerate() {
                if ious[gi * p.len() + pi] >= iou_thr {
                    *overlap.entry((a.id, b.id)).or_default() += 1;
                }
            }
        }
        // Gated pairs cost more than leaving both sides unmatched.
        let costs: Vec<f64> = ious
            .iter()
            .map(|&v| if v >= iou_thr { 1.0 - v } else { 2.0 })
            .collect();
        let solution = assignment::solve(&CostMatrix::new(g.len(), p.len(), costs).expect("finite costs"));
        let mut frame_matches = 0;
        for (gi, pi) in solution.pairs {
            if ious[gi * p.len() + pi] < iou_thr {
                continue;
            }
            frame_matches += 1;
            let (gid, pid) = (g[gi].id, p[pi].id);
            if let Some(prev) = last_match.insert(gid, pid) {
                if prev != pid {
                    idsw += 1;
                }
            }
        }
        matches += frame_matches;
        fn_ += g.len() - frame_matches;
        fp += p.len() - frame_matches;
    }

    let gt_ids: Vec<u64> = ids(gt);
    let pred_ids: Vec<u64> = ids(pred);
    let idtp = identity_true_positives(&gt_ids, &pred_ids, &overlap);
    let num_gt = gt.len();
    let num_pred = pred.len();
    let idfn = num_gt - idtp;
    let idfp = num_pred - idtp;
    let mota = if num_gt == 0 {
        if fp == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - (fn_ + fp + idsw) as f64 / num_gt as f64
    };
    Ok(EvalReport {
        idf1: ratio(2 * idtp, 2 * idtp + idfp + idfn),
        idp: ratio(idtp, num_pred),
        idr: ratio(idtp, num_gt),
        mota,
        idsw,
        fp,
        fn_,
        matches,
        idtp,
        idfp,
        idfn,
        num_gt,
        num_pred,
        num_gt_ids: gt_ids.len(),
        num_pred_ids: pred_ids.len(),
    })
}

fn ids(records: &[TrackRecord]) -> Vec<u64> {
    let mut v: Vec<u64> = records.iter().map(|r| r.id).collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn identity_true_positives(gt_ids: &[u64], pred_ids: &[u64], overlap: &HashMap<(u64, u64), usize>) -> usize {
    if gt_ids.is_empty() || pred_ids.is_empty() {
        return 0;
    }
    let values = gt_ids
        .iter()
        .flat_map(|g| pred_ids.iter().map(move |p| -(overlap.get(&(*g, *p)).copied().unwrap_or(0) as f64)))
        .collect();
    let costs = CostMatrix::new(gt_ids.len(), pred_ids.len(), values).expect("finite costs");
    assignment::solve(&costs)
        .pairs
        .iter()
        .map(|&(i, j)| overlap.get(&(gt_ids[i], pred_ids[j])).copied().unwrap_or(0))
        .sum()
}
