//! Minimum-cost one-to-one assignment.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Dense `rows x cols` cost matrix. Entries are finite and `>= 0`, or
/// forbidden.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    // Forbidden entries are stored as +inf.
    data: Vec<f64>,
}

impl CostMatrix {
    /// All entries forbidden.
    pub fn forbidden(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![f64::INFINITY; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut m = Self::forbidden(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, f(r, c))?;
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidParameter("ragged cost matrix"));
        }
        Self::from_fn(rows.len(), cols, |r, c| rows[r][c])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Sets a finite entry; `+inf` marks it forbidden.
    pub fn set(&mut self, r: usize, c: usize, v: f64) -> Result<()> {
        if v.is_nan() || v < 0.0 || v == f64::NEG_INFINITY {
            return Err(Error::InvalidParameter("costs must be >= 0"));
        }
        self.data[r * self.cols + c] = v;
        Ok(())
    }

    pub fn forbid(&mut self, r: usize, c: usize) {
        self.data[r * self.cols + c] = f64::INFINITY;
    }

    /// `None` when forbidden.
    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        let v = self.data[r * self.cols + c];
        v.is_finite().then_some(v)
    }

    fn max_finite(&self) -> f64 {
        self.data.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Exact minimum-cost assignment of `min(rows, cols)` pairs, O(n^3)
/// shortest-augmenting-path with potentials.
///
/// Forbidden entries become a finite sentinel of at least `1e6` times the
/// largest permitted entry, so the solver first maximizes the number of
/// permitted pairs and then minimizes their cost. Pairs that land on a
/// sentinel are left out of the result.
pub fn hungarian(c: &CostMatrix) -> Assignment {
    if c.rows == 0 || c.cols == 0 {
        return Assignment { pairs: Vec::new(), total_cost: 0.0 };
    }
    let sentinel = 1e6 * c.max_finite().max(1.0);
    let transpose = c.rows > c.cols;
    let (n, m) = if transpose { (c.cols, c.rows) } else { (c.rows, c.cols) };
    let cost = |i: usize, j: usize| -> f64 {
        let v = if transpose { c.data[j * c.cols + i] } else { c.data[i * c.cols + j] };
        if v.is_finite() {
            v
        } else {
            sentinel
        }
    };

    // 1-based arrays; column 0 is the virtual start.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| if transpose { (j - 1, p[j] - 1) } else { (p[j] - 1, j - 1) })
        .filter(|&(r, col)| c.get(r, col).is_some())
        .collect();
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(r, col)| c.data[r * c.cols + col]).sum();
    Assignment { pairs, total_cost }
}
