//! Boxes and per-frame track output shared by the tracker, I/O and metrics.

/// Axis-aligned box in pixels: `(left, top, width, height)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self {
            left,
            top,
            width,
            height,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn is_valid(&self) -> bool {
        self.width > 0.0 && self.height > 0.0 && self.left.is_finite() && self.top.is_finite()
    }
}

/// One output row: track `id` was at `bbox` in `frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub frame: u64,
    pub id: u64,
    pub bbox: BBox,
}

/// Sorts by `(frame, id)`.
pub fn sort_records(records: &mut [TrackRecord]) {
    records.sort_by_key(|r| (r.frame, r.id));
}
