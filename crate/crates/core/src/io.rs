//! On-disk formats.
//!
//! Detections, ground truth and results are MOT-Challenge-style text. Feature
//! vectors live in a little-endian binary sidecar:
//!
//! ```text
//! "HATF" | u32 version = 1 | u32 dim | u64 count | count * dim f32, row-major
//! ```
//!
//! Feature rows align one-to-one with detection rows in file order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::linalg::FeatureVector;
use crate::record::{sort_records, BBox, TrackRecord};
use crate::tracker::{Detection, FrameInput};

pub const FEATURE_MAGIC: &[u8; 4] = b"HATF";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("bad feature file header: {0}")]
    Format(String),
    #[error("feature payload truncated: expected {expected} bytes, found {found}")]
    Truncation { expected: usize, found: usize },
    #[error("feature value {index} is not finite")]
    Data { index: usize },
    #[error("{detections} detection rows but {features} feature vectors")]
    Alignment { detections: usize, features: usize },
}

impl IoError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            IoError::Io { .. } => "IO",
            IoError::Parse { .. } => "PARSE",
            IoError::Format(_) => "FORMAT",
            IoError::Truncation { .. } => "TRUNCATION",
            IoError::Data { .. } => "DATA",
            IoError::Alignment { .. } => "ALIGNMENT",
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, IoError>;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRow {
    pub frame: u64,
    pub id: i64,
    pub bbox: BBox,
    pub confidence: f64,
    /// Zero-based position in the file, i.e. the row of its feature vector.
    pub index: usize,
}

/// Detection rows, stably sorted by frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionFile {
    pub rows: Vec<DetectionRow>,
}

impl DetectionFile {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Row-major `f32` feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    dim: usize,
    data: Vec<f32>,
}

impl FeatureBank {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(IoError::Format("dimension must be at least 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(IoError::Format(format!(
                "{} values do not divide into rows of {dim}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(IoError::Data { index });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(IoError::Format(format!("row {i} has {} values, expected {dim}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Widened copy of row `i`.
    pub fn vector(&self, i: usize) -> FeatureVector {
        FeatureVector::new(self.row(i).iter().map(|&v| f64::from(v)).collect()).expect("bank values are finite")
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

fn field<T: std::str::FromStr>(cols: &[&str], i: usize, name: &str, line: usize) -> Result<T> {
    let raw = cols.get(i).ok_or_else(|| IoError::Parse {
        line,
        message: format!("missing column `{name}`"),
    })?;
    raw.trim().parse().map_err(|_| IoError::Parse {
        line,
        message: format!("bad `{name}` value `{}`", raw.trim()),
    })
}

fn parse_box(cols: &[&str], line: usize) -> Result<BBox> {
    let bbox = BBox::new(
        field(cols, 2, "left", line)?,
        field(cols, 3, "top", line)?,
        field(cols, 4, "width", line)?,
        field(cols, 5, "height", line)?,
    );
    if !bbox.is_valid() || !bbox.width.is_finite() || !bbox.height.is_finite() {
        return Err(IoError::Parse {
            line,
            message: "box width and height must be positive".into(),
        });
    }
    Ok(bbox)
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').collect()))
}

/// Parses `frame,id,left,top,width,height,conf[,...]` rows.
pub fn parse_detections(text: &str) -> Result<DetectionFile> {
    let mut rows = Vec::new();
    for (line, cols) in data_lines(text) {
        let frame: u64 = field(&cols, 0, "frame", line)?;
        if frame == 0 {
            return Err(IoError::Parse {
                line,
                message: "frame numbers start at 1".into(),
            });
        }
        let id: i64 = field(&cols, 1, "id", line)?;
        let bbox = parse_box(&cols, line)?;
        let raw: f64 = field(&cols, 6, "confidence", line)?;
        if raw.is_nan() {
            return Err(IoError::Parse {
                line,
                message: "confidence is NaN".into(),
            });
        }
        let confidence = raw.clamp(0.0, 1.0);
        if confidence != raw {
            log::warn!("line {line}: confidence {raw} clamped to {confidence}");
        }
        let index = rows.len();
        rows.push(DetectionRow {
            frame,
            id,
            bbox,
            confidence,
            index,
        });
    }
    rows.sort_by_key(|r| r.frame);
    Ok(DetectionFile { rows })
}

pub fn read_detections(path: &Path) -> Result<DetectionFile> {
    parse_detections(&read_text(path)?)
}

pub fn write_detections(rows: &[DetectionRow], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.frame, r.id, r.bbox.left, r.bbox.top, r.bbox.width, r.bbox.height, r.confidence
        ));
    }
    fs::write(path, out).map_err(|e| IoError::io(path, e))
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureBank> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != FEATURE_MAGIC {
            return Err(IoError::Format("bad magic".into()));
        }
        return Err(IoError::Truncation {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(IoError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FEATURE_VERSION {
        return Err(IoError::Format(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    if dim == 0 {
        return Err(IoError::Format("dimension must be at least 1".into()));
    }
    let expected = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(dim))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| IoError::Format(format!("count {count} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(IoError::Truncation {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(IoError::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    FeatureBank::new(dim, data)
}

pub fn encode_features(bank: &FeatureBank) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + bank.data.len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(bank.dim as u32).to_le_bytes());
    out.extend_from_slice(&(bank.count() as u64).to_le_bytes());
    for v in &bank.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_features(path: &Path) -> Result<FeatureBank> {
    decode_features(&fs::read(path).map_err(|e| IoError::io(path, e))?)
}

pub fn write_features(bank: &FeatureBank, path: &Path) -> Result<()> {
    fs::write(path, encode_features(bank)).map_err(|e| IoError::io(path, e))
}

/// One comma-separated vector per line.
pub fn parse_features_csv(text: &str) -> Result<FeatureBank> {
    let mut dim = None;
    let mut data = Vec::new();
    for (line, cols) in data_lines(text) {
        match dim {
            None => dim = Some(cols.len()),
            Some(d) if d != cols.len() => {
                return Err(IoError::Parse {
                    line,
                    message: format!("{} values, expected {d}", cols.len()),
                })
            }
            _ => {}
        }
        for (i, c) in cols.iter().enumerate() {
            let v: f32 = c.trim().parse().map_err(|_| IoError::Parse {
                line,
                message: format!("bad value `{}` in column {}", c.trim(), i + 1),
            })?;
            if !v.is_finite() {
                return Err(IoError::Data { index: data.len() });
            }
            data.push(v);
        }
    }
    match dim {
        Some(d) => FeatureBank::new(d, data),
        None => Err(IoError::Format("feature CSV is empty".into())),
    }
}

pub fn read_features_csv(path: &Path) -> Result<FeatureBank> {
    parse_features_csv(&read_text(path)?)
}

pub fn format_tracks(records: &[TrackRecord]) -> String {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut out = String::with_capacity(sorted.len() * 40);
    for r in &sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{},1,-1,-1,-1\n",
            r.frame, r.id, r.bbox.left, r.bbox.top, r.bbox.width, r.bbox.height
        ));
    }
    out
}

/// Writes `frame,id,left,top,w,h,1,-1,-1,-1` rows sorted by `(frame, id)`.
pub fn write_tracks(records: &[TrackRecord], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(format_tracks(records).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| IoError::io(path, e))
}

/// Parses track or ground-truth rows. Rows whose seventh column is `0`
/// (the "ignore" flag of MOT ground truth) are skipped.
pub fn parse_tracks(text: &str) -> Result<Vec<TrackRecord>> {
    let mut out = Vec::new();
    for (line, cols) in data_lines(text) {
        let frame: u64 = field(&cols, 0, "frame", line)?;
        let id: i64 = field(&cols, 1, "id", line)?;
        if id < 0 {
            return Err(IoError::Parse {
                line,
                message: format!("track id {id} is negative"),
            });
        }
        let bbox = parse_box(&cols, line)?;
        if let Some(flag) = cols.get(6) {
            if flag.trim() == "0" {
                continue;
            }
        }
        out.push(TrackRecord {
            frame,
            id: id as u64,
            bbox,
        });
    }
    Ok(out)
}

pub fn read_gt(path: &Path) -> Result<Vec<TrackRecord>> {
    parse_tracks(&read_text(path)?)
}

/// Groups aligned detections and features into per-frame tracker inputs.
/// Frames without detections are not materialized.
pub fn frame_inputs(dets: &DetectionFile, feats: &FeatureBank) -> Result<Vec<FrameInput>> {
    if dets.len() != feats.count() {
        return Err(IoError::Alignment {
            detections: dets.len(),
            features: feats.count(),
        });
    }
    let mut frames: Vec<FrameInput> = Vec::new();
    for row in &dets.rows {
        let det = Detection {
            bbox: row.bbox,
            confidence: row.confidence,
            feature: feats.vector(row.index),
        };
        match frames.last_mut() {
            Some(f) if f.frame == row.frame => f.detections.push(det),
            _ => frames.push(FrameInput {
                frame: row.frame,
                detections: vec![det],
            }),
        }
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(dim: u32, count: u64) -> Vec<u8> {
        let mut b = b"HATF".to_vec();
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&dim.to_le_bytes());
        b.extend_from_slice(&count.to_le_bytes());
        b
    }

    #[test]
    fn detection_examples() {
        let d = parse_detections("1,-1,10,20,30,40,0.95").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.rows[0].frame, 1);
        assert_eq!(d.rows[0].confidence, 0.95);
        assert_eq!(d.rows[0].bbox, BBox::new(10.0, 20.0, 30.0, 40.0));
        assert!(parse_detections("").unwrap().is_empty());
        match parse_detections("1,-1,10,20,-5,40,0.9") {
            Err(IoError::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn detections_sort_stably_and_keep_file_index() {
        let d = parse_detections("3,-1,0,0,1,1,0.9,x,y\n1,-1,0,0,2,1,0.9\n3,-1,0,0,3,1,1.7\n1,-1,0,0,4,1,-0.2\n").unwrap();
        let got: Vec<(u64, usize)> = d.rows.iter().map(|r| (r.frame, r.index)).collect();
        assert_eq!(got, vec![(1, 1), (1, 3), (3, 0), (3, 2)]);
        assert_eq!(d.rows[2].bbox.width, 1.0);
        assert_eq!(d.rows[3].confidence, 1.0);
        assert_eq!(d.rows[1].confidence, 0.0);
    }

    #[test]
    fn detection_errors_carry_line_numbers() {
        for (text, line) in [
            ("1,-1,1,1,1,1,0.9\n\n2,-1,1,1,1\n", 3),
            ("1,-1,1,1,1,1,0.9\nx,-1,1,1,1,1,0.9\n", 2),
            ("0,-1,1,1,1,1,0.9\n", 1),
            ("1,-1,1,1,1,0,0.9\n", 1),
        ] {
            match parse_detections(text) {
                Err(IoError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn feature_examples() {
        let mut b = header(2, 1);
        b.extend_from_slice(&1.0f32.to_le_bytes());
        b.extend_from_slice(&0.0f32.to_le_bytes());
        let bank = decode_features(&b).unwrap();
        assert_eq!((bank.dim(), bank.count()), (2, 1));
        assert_eq!(bank.row(0), &[1.0, 0.0]);

        let mut b = header(2, 2);
        b.extend_from_slice(&[0u8; 8]);
        assert!(matches!(decode_features(&b), Err(IoError::Truncation { .. })));
        assert!(matches!(decode_features(b"HATF"), Err(IoError::Truncation { .. })));
        assert!(matches!(decode_features(b"NOPE\0\0\0\0"), Err(IoError::Format(_))));

        let mut b = header(1, 1);
        b[4] = 2;
        b.extend_from_slice(&[0u8; 4]);
        assert!(matches!(decode_features(&b), Err(IoError::Format(_))));

        let mut b = header(2, 2);
        for v in [1.0f32, 2.0, f32::NAN, 0.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(decode_features(&b), Err(IoError::Data { index: 2 })));
    }

    #[test]
    fn csv_features() {
        let bank = parse_features_csv("1,0,0\n0.5, 0.5, 0\n").unwrap();
        assert_eq!((bank.dim(), bank.count()), (3, 2));
        assert!(matches!(parse_features_csv("1,0\n1\n"), Err(IoError::Parse { line: 2, .. })));
        assert!(matches!(parse_features_csv("1,inf\n"), Err(IoError::Data { index: 1 })));
    }

    #[test]
    fn track_line_format() {
        let r = TrackRecord {
            frame: 1,
            id: 7,
            bbox: BBox::new(10.0, 20.0, 30.0, 40.0),
        };
        assert_eq!(format_tracks(&[r]), "1,7,10,20,30,40,1,-1,-1,-1\n");
        assert_eq!(parse_tracks("1,7,10,20,30,40,1,-1,-1,-1\n").unwrap(), vec![r]);
        assert!(parse_tracks("1,7,10,20,30,40,0,-1,-1,-1\n").unwrap().is_empty());
    }

    #[test]
    fn alignment_is_checked() {
        let dets = parse_detections("1,-1,0,0,1,1,0.9\n2,-1,0,0,1,1,0.9\n").unwrap();
        let bank = FeatureBank::new(2, vec![1.0, 0.0]).unwrap();
        assert!(matches!(frame_inputs(&dets, &bank), Err(IoError::Alignment { .. })));
    }

    #[test]
    fn frame_inputs_follow_file_index() {
        let dets = parse_detections("2,-1,0,0,1,1,0.9\n1,-1,0,0,1,1,0.8\n2,-1,0,0,1,1,0.7\n").unwrap();
        let bank = FeatureBank::new(1, vec![10.0, 20.0, 30.0]).unwrap();
        let frames = frame_inputs(&dets, &bank).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].detections[0].feature.as_slice(), &[20.0]);
        assert_eq!(frames[1].detections[0].feature.as_slice(), &[10.0]);
        assert_eq!(frames[1].detections[1].feature.as_slice(), &[30.0]);
    }

    fn finite_f32() -> impl Strategy<Value = f32> {
        prop::num::f32::NORMAL | prop::num::f32::ZERO | prop::num::f32::SUBNORMAL
    }

    proptest! {
        #[test]
        fn features_round_trip(dim in 1usize..8, rows in 0usize..12, seed in prop::collection::vec(finite_f32(), 96)) {
            let data: Vec<f32> = seed.iter().copied().cycle().take(dim * rows).collect();
            let bank = FeatureBank::new(dim, data).unwrap();
            prop_assert_eq!(decode_features(&encode_features(&bank)).unwrap(), bank);
        }

        #[test]
        fn tracks_round_trip(raw in prop::collection::vec((1u64..500, 0u64..50, -1e4f64..1e4, -1e4f64..1e4, 1e-3f64..1e3, 1e-3f64..1e3), 0..40)) {
            let mut records: Vec<TrackRecord> = raw
                .iter()
                .map(|&(frame, id, l, t, w, h)| TrackRecord { frame, id, bbox: BBox::new(l, t, w, h) })
                .collect();
            sort_records(&mut records);
            records.dedup_by_key(|r| (r.frame, r.id));
            prop_assert_eq!(parse_tracks(&format_tracks(&records)).unwrap(), records);
        }

        #[test]
        fn detections_round_trip(raw in prop::collection::vec((1u64..50, -1e3f64..1e3, 1e-3f64..1e3, 0.0f64..=1.0), 0..30)) {
            let rows: Vec<DetectionRow> = raw
                .iter()
                .enumerate()
                .map(|(index, &(frame, x, w, confidence))| DetectionRow { frame, id: -1, bbox: BBox::new(x, -x, w, w * 2.0), confidence, index })
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("det.txt");
            write_detections(&rows, &path).unwrap();
            let back = read_detections(&path).unwrap();
            let mut want = rows.clone();
            want.sort_by_key(|r| r.frame);
            prop_assert_eq!(back.rows, want);
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_features(Path::new("/nonexistent/feats.bin")).unwrap_err();
        assert_eq!(err.code(), "IO");
    }
}
