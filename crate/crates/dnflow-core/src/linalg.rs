//! Sparse symmetric matrices (CSR) and a Jacobi-preconditioned conjugate
//! gradient solver. Iteration order is fixed, so results are bit-stable
//! across runs.

use alloc::vec;
use alloc::vec::Vec;

/// Square sparse matrix in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl SparseSym {
    /// Build from (row, col, value) triplets; duplicates are summed.
    /// A diagonal entry is materialized for every row.
    pub fn from_triplets(n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> Self {
        for i in 0..n {
            triplets.push((i, i, 0.0));
        }
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in triplets.iter() {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        // prefix sums
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self {
            n,
            indptr,
            indices,
            data,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            y[i] = acc;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                if self.indices[k] == i {
                    d[i] = self.data[k];
                }
            }
        }
        d
    }

    /// Add `d[i]` to the `i`-th diagonal entry.
    pub fn add_diag(&mut self, d: &[f64]) {
        debug_assert_eq!(d.len(), self.n);
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                if self.indices[k] == i {
                    self.data[k] += d[i];
                }
            }
        }
    }

    /// Dense entry accessor (tests).
    pub fn get(&self, r: usize, c: usize) -> f64 {
        for k in self.indptr[r]..self.indptr[r + 1] {
            if self.indices[k] == c {
                return self.data[k];
            }
        }
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgOutcome {
    Converged,
    MaxIter,
    /// Encountered a direction of nonpositive curvature: the matrix is not
    /// positive definite.
    Indefinite,
}

pub struct CgResult {
    pub x: Vec<f64>,
    pub outcome: CgOutcome,
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned CG for symmetric positive definite systems.
pub fn cg(a: &SparseSym, b: &[f64], x0: &[f64], tol_rel: f64, max_iter: usize) -> CgResult {
    let n = a.n;
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut m = a.diag();
    for mi in m.iter_mut() {
        if mi.abs() < 1e-300 {
            *mi = 1.0;
        }
    }
    let mut z: Vec<f64> = r.iter().zip(&m).map(|(ri, mi)| ri / mi).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let b_norm = norm(b).max(1e-300);
    let mut ap = vec![0.0; n];
    let mut res = norm(&r);
    if res <= tol_rel * b_norm {
        return CgResult {
            x,
            outcome: CgOutcome::Converged,
            iterations: 0,
            residual: res,
        };
    }
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return CgResult {
                x,
                outcome: CgOutcome::Indefinite,
                iterations: it,
                residual: res,
            };
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r);
        if res <= tol_rel * b_norm {
            return CgResult {
                x,
                outcome: CgOutcome::Converged,
                iterations: it,
                residual: res,
            };
        }
        for i in 0..n {
            z[i] = r[i] / m[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgResult {
        x,
        outcome: CgOutcome::MaxIter,
        iterations: max_iter,
        residual: res,
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    crate::math::sqrt(dot(a, a))
}
