//! Minimum-cost bipartite assignment (Hungarian algorithm).
//!
//! Rectangular inputs are padded to square with a sentinel of `max + 1`.
//! Among all optimal assignments the lexicographically smallest pair list is
//! returned: the dual potentials from the Hungarian pass identify every edge
//! that can appear in some optimum, and rows are then fixed greedily to
//! their smallest feasible column.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignmentError {
    #[error("non-finite cost at ({row}, {col})")]
    InvalidCost { row: usize, col: usize },
    #[error("cost matrix has {found} values, expected {expected}")]
    Shape { expected: usize, found: usize },
}

/// Row-major cost matrix; lower is better.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, AssignmentError> {
        if values.len() != rows * cols {
            return Err(AssignmentError::Shape {
                expected: rows * cols,
                found: values.len(),
            });
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(AssignmentError::InvalidCost {
                row: idx / cols,
                col: idx % cols,
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, AssignmentError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(AssignmentError::Shape {
                    expected: cols,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
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

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                values.push(self.get(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Sum of the selected costs, added in ascending order of value so the
/// result does not depend on the matrix orientation.
pub fn canonical_cost(costs: &CostMatrix, pairs: &[(usize, usize)]) -> f64 {
    let mut vals: Vec<f64> = pairs.iter().map(|&(i, j)| costs.get(i, j)).collect();
    vals.sort_by(f64::total_cmp);
    vals.iter().sum()
}

/// Optimal assignment of size `min(rows, cols)`.
pub fn solve(costs: &CostMatrix) -> Assignment {
    let (m, k) = (costs.rows, costs.cols);
    if m == 0 || k == 0 {
        return Assignment {
            pairs: Vec::new(),
            total_cost: 0.0,
        };
    }
    let n = m.max(k);
    let max = costs.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sentinel = max + 1.0;
    let mut a = vec![sentinel; n * n];
    for i in 0..m {
        a[i * n..i * n + k].copy_from_slice(&costs.values[i * k..(i + 1) * k]);
    }

    let (u, v, mut row_to_col) = hungarian(&a, n);
    let scale = 1.0 + costs.values.iter().fold(0.0_f64, |s, x| s.max(x.abs()));
    let tol = 1e-9 * scale;
    let tight = |i: usize, j: usize| a[i * n + j] - u[i] - v[j] <= tol;
    lexicographic_refine(n, &tight, &mut row_to_col);

    let pairs: Vec<(usize, usize)> = (0..m)
        .filter_map(|i| {
            let j = row_to_col[i];
            (j < k).then_some((i, j))
        })
        .collect();
    let total_cost = canonical_cost(costs, &pairs);
    Assignment { pairs, total_cost }
}

/// O(n³) shortest-augmenting-path Hungarian method on a square matrix.
/// Returns row potentials, column potentials, and the row → column map.
fn hungarian(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    // 1-based internally; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[col_owner[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), row_to_col)
}

/// Rewrites the perfect matching `row_to_col` (which uses tight edges only)
/// into the lexicographically smallest tight perfect matching.
fn lexicographic_refine(n: usize, tight: &dyn Fn(usize, usize) -> bool, row_to_col: &mut [usize]) {
    let mut col_to_row = vec![0usize; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    let mut row_fixed = vec![false; n];
    let mut col_fixed = vec![false; n];
    let mut parent = vec![usize::MAX; n];

    for i in 0..n {
        let current = row_to_col[i];
        for j in 0..n {
            if col_fixed[j] || !tight(i, j) {
                continue;
            }
            if j == current {
                break;
            }
            // Force i -> j: the row holding j must reach `current` through an
            // alternating path of tight edges among unfixed rows/cols.
            let start = col_to_row[j];
            row_fixed[i] = true;
            col_fixed[j] = true;
            let found = alternating_path(n, tight, start, current, &row_fixed, &col_fixed, &col_to_row, &mut parent);
            row_fixed[i] = false;
            col_fixed[j] = false;
            if let Some(path_end) = found {
                // Walk back from `current`, shifting columns along the path.
                let mut c = path_end;
                loop {
                    let r = parent[c];
                    let prev = row_to_col[r];
                    row_to_col[r] = c;
                    col_to_row[c] = r;
                    if r == start {
                        break;
                    }
                    c = prev;
                }
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
        row_fixed[i] = true;
        col_fixed[row_to_col[i]] = true;
    }
}

/// BFS over tight edges from row `start` looking for column `target`.
/// `parent[c]` records the row from which column `c` was reached.
#[allow(clippy::too_many_arguments)]
fn alternating_path(
    n: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    start: usize,
    target: usize,
    row_fixed: &[bool],
    col_fixed: &[bool],
    col_to_row: &[usize],
    parent: &mut [usize],
) -> Option<usize> {
    parent.iter_mut().for_each(|p| *p = usize::MAX);
    let mut queue = VecDeque::from([start]);
    let mut row_seen = vec![false; n];
    row_seen[start] = true;
    while let Some(r) = queue.pop_front() {
        for c in 0..n {
            if col_fixed[c] || parent[c] != usize::MAX || !tight(r, c) {
                continue;
            }
            parent[c] = r;
            if c == target {
                return Some(c);
            }
            let next = col_to_row[c];
            if !row_fixed[next] && !row_seen[next] {
                row_seen[next] = true;
                queue.push_back(next);
            }
        }
    }
    None
}
