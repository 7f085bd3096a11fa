//! Dense two-phase simplex method for small equality-form linear programs
//!
//! ```text
//! minimize c·x  subject to  A x = b,  x >= 0.
//! ```
//!
//! Pivoting follows Bland's rule, so the method terminates on degenerate
//! problems and returns the same basic solution for the same input.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Indices of the basic variables at the optimum.
    pub basis: Vec<usize>,
}

struct Tableau {
    rows: usize,
    cols: usize, // variables + rhs
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let cols = self.cols;
        let p = self.at(r, c);
        for v in &mut self.data[r * cols..(r + 1) * cols] {
            *v /= p;
        }
        let (before, rest) = self.data.split_at_mut(r * cols);
        let (pivot_row, after) = rest.split_at_mut(cols);
        for row in before.chunks_exact_mut(cols).chain(after.chunks_exact_mut(cols)) {
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations on objective row `obj` (last row) over the
    /// first `active` columns.
    fn optimize(&mut self, active: usize, tol: f64) -> Result<()> {
        let obj = self.rows;
        let rhs = self.cols - 1;
        loop {
            let entering = (0..active).find(|&c| self.at(obj, c) < -tol);
            let Some(c) = entering else { return Ok(()) };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, c);
                if a > tol {
                    let ratio = self.at(r, rhs) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - tol || (ratio <= bv + tol && self.basis[r] < self.basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, c),
                // unbounded direction; cannot happen for bounded feasible sets
                None => return Err(Error::Infeasible),
            }
        }
    }
}

/// Minimizes `c·x` over `{x >= 0 : A x = b}`; `a` is row-major
/// `b.len() x c.len()`.
pub fn minimize(c: &[f64], a: &[f64], b: &[f64], tol: f64) -> Result<LpSolution> {
    let m = b.len();
    let n = c.len();
    if a.len() != m * n {
        return Err(Error::DimensionMismatch { expected: m * n, found: a.len() });
    }
    // columns: n originals, m artificials, rhs; rows: m constraints + objective
    let cols = n + m + 1;
    let mut data = vec![0.0; (m + 1) * cols];
    for r in 0..m {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            data[r * cols + j] = sign * a[r * n + j];
        }
        data[r * cols + n + r] = 1.0;
        data[r * cols + cols - 1] = sign * b[r];
    }
    let mut t = Tableau { rows: m, cols, data, basis: (n..n + m).collect() };

    // phase 1: minimize the sum of artificials
    for j in 0..cols {
        let s: f64 = (0..m).map(|r| t.at(r, j)).sum();
        t.data[m * cols + j] = if (n..n + m).contains(&j) { 0.0 } else { -s };
    }
    t.optimize(n + m, tol)?;
    if -t.at(m, cols - 1) > tol * (1.0 + b.iter().map(|v| v.abs()).sum::<f64>()) {
        return Err(Error::Infeasible);
    }
    // drive remaining artificials out of the basis
    let mut redundant = Vec::new();
    for r in 0..m {
        if t.basis[r] >= n {
            match (0..n).find(|&j| t.at(r, j).abs() > tol) {
                Some(j) => t.pivot(r, j),
                None => redundant.push(r),
            }
        }
    }

    // phase 2: original costs, reduced against the current basis
    for j in 0..cols {
        t.data[m * cols + j] = if j < n { c[j] } else { 0.0 };
    }
    for r in 0..m {
        let bj = t.basis[r];
        if bj < n && c[bj] != 0.0 {
            let f = c[bj];
            for j in 0..cols {
                let v = t.at(r, j);
                t.data[m * cols + j] -= f * v;
            }
        }
    }
    // artificial columns are excluded from entering
    t.optimize(n, tol)?;

    let mut x = vec![0.0; n];
    let mut basis = Vec::with_capacity(m);
    for r in 0..m {
        if redundant.contains(&r) {
            continue;
        }
        let bj = t.basis[r];
        if bj < n {
            x[bj] = t.at(r, cols - 1).max(0.0);
            basis.push(bj);
        }
    }
    basis.sort_unstable();
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpSolution { x, objective, basis })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn small_lp() {
        // min -x0 - x1  s.t. x0 + 2 x1 + s0 = 4, 3 x0 + x1 + s1 = 6
        let c = [-1.0, -1.0, 0.0, 0.0];
        let a = [1.0, 2.0, 1.0, 0.0, 3.0, 1.0, 0.0, 1.0];
        let sol = minimize(&c, &a, &[4.0, 6.0], 1e-12).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x[1], 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.objective, -2.8, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_lp() {
        // x0 + x1 = -1 with x >= 0
        assert!(matches!(minimize(&[1.0, 1.0], &[1.0, 1.0], &[-1.0], 1e-12), Err(Error::Infeasible)));
    }

    #[test]
    fn redundant_rows() {
        let a = [1.0, 1.0, 2.0, 2.0];
        let sol = minimize(&[1.0, 3.0], &a, &[1.0, 2.0], 1e-12).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.objective, 1.0, epsilon = 1e-12);
    }
}
