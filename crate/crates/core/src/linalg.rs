//! Dense symmetric positive-definite solves for the trainers.

use alloc::vec;
use alloc::vec::Vec;

/// Lower Cholesky factor of a row-major `n x n` SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factorizes `a`; `None` if it is not numerically positive definite.
    pub fn new(a: &[f64], n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * n + i] = libm::sqrt(s);
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }

    /// `tr(A⁻¹) = ‖L⁻¹‖_F²`.
    pub fn trace_inverse(&self) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            for i in j..n {
                let mut s = col[i];
                for k in j..i {
                    s -= self.l[i * n + k] * col[k];
                }
                col[i] = s / self.l[i * n + i];
                total += col[i] * col[i];
            }
        }
        total
    }
}

/// `JᵀJ` (row-major, `p x p`) and `Jᵀr` for a row-major `n x p` Jacobian.
pub fn normal_equations(jac: &[f64], residual: &[f64], params: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jtj = vec![0.0; params * params];
    let mut jtr = vec![0.0; params];
    for (row, &r) in jac.chunks_exact(params).zip(residual) {
        for i in 0..params {
            let ji = row[i];
            if ji == 0.0 {
                continue;
            }
            jtr[i] += ji * r;
            for j in 0..=i {
                jtj[i * params + j] += ji * row[j];
            }
        }
    }
    for i in 0..params {
        for j in 0..i {
            jtj[j * params + i] = jtj[i * params + j];
        }
    }
    (jtj, jtr)
}
