//! Dense linear-algebra helpers shared by the solver modules.

use nalgebra::{DMatrix, DVector};

/// Compressed sparse-column view of a dense matrix.
///
/// Constraint matrices of transport and network-flow programs carry only
/// 1–3 nonzeros per column, so gradient passes and the Newton Hessian
/// `A·diag(w)·Aᵀ` assemble in O(nnz) / O(Σⱼ nnzⱼ²) instead of O(k·m) /
/// O(k²·m). Exact zeros are dropped; everything else is kept verbatim.
#[derive(Debug, Clone)]
pub struct CscPattern {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    nrows: usize,
    ncols: usize,
}

impl CscPattern {
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let (k, m) = a.shape();
        let mut col_ptr = Vec::with_capacity(m + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..m {
            for i in 0..k {
                let v = a[(i, j)];
                if v != 0.0 {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        CscPattern { col_ptr, row_idx, values, nrows: k, ncols: m }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        self.row_idx[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    /// `A · x`
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.nrows);
        for j in 0..self.ncols {
            let xj = x[j];
            if xj != 0.0 {
                for (i, v) in self.col(j) {
                    out[i] += v * xj;
                }
            }
        }
        out
    }

    /// `Aᵀ · y`
    pub fn tr_mul_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols);
        for j in 0..self.ncols {
            out[j] = self.col_dot(j, y);
        }
        out
    }

    /// `aⱼᵀ · y`
    pub fn col_dot(&self, j: usize, y: &DVector<f64>) -> f64 {
        self.col(j).map(|(i, v)| v * y[i]).sum()
    }

    /// `A · diag(w) · Aᵀ`, assembled column by column.
    pub fn weighted_gram(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.nrows, self.nrows);
        for j in 0..self.ncols {
            let wj = w[j];
            if wj == 0.0 {
                continue;
            }
            let lo = self.col_ptr[j];
            let hi = self.col_ptr[j + 1];
            for p in lo..hi {
                let (ip, vp) = (self.row_idx[p], self.values[p]);
                for q in lo..hi {
                    let (iq, vq) = (self.row_idx[q], self.values[q]);
                    h[(ip, iq)] += wj * vp * vq;
                }
            }
        }
        h
    }
}

/// Orthonormal basis of `ker(A)` for a full-row-rank `k×m` matrix `A`
/// (`k ≤ m`), via a full Householder QR of `Aᵀ`: the trailing `m−k`
/// columns of Q span the orthogonal complement of the row space.
///
/// Returns `None` when a diagonal entry of R falls below
/// `rank_tol · max|R|`, i.e. when A is numerically rank-deficient.
pub fn null_space_basis(a: &DMatrix<f64>, rank_tol: f64) -> Option<DMatrix<f64>> {
    let k = a.nrows();
    let m = a.ncols();
    assert!(k <= m, "null_space_basis expects a wide matrix (k <= m)");
    let mut at = a.transpose(); // m×k, factored in place
    let mut q = DMatrix::<f64>::identity(m, m);
    let mut rdiag_max: f64 = 0.0;
    let mut rdiag_min = f64::INFINITY;

    for j in 0..k {
        // Householder reflector annihilating at[j+1.., j].
        let mut norm2 = 0.0;
        for i in j..m {
            norm2 += at[(i, j)] * at[(i, j)];
        }
        let norm = norm2.sqrt();
        rdiag_max = rdiag_max.max(norm);
        rdiag_min = rdiag_min.min(norm);
        if norm == 0.0 {
            continue; // fully zero column: rank deficiency, caught below
        }
        let alpha = if at[(j, j)] >= 0.0 { -norm } else { norm };
        let mut v = DVector::zeros(m);
        for i in j..m {
            v[i] = at[(i, j)];
        }
        v[j] -= alpha;
        let vnorm2 = v.dot(&v);
        if vnorm2 == 0.0 {
            continue; // column already reduced
        }
        let beta = 2.0 / vnorm2;
        // Apply H = I − beta·v·vᵀ to the remaining columns of at ...
        for c in j..k {
            let s = (j..m).map(|i| v[i] * at[(i, c)]).sum::<f64>() * beta;
            for i in j..m {
                at[(i, c)] -= s * v[i];
            }
        }
        // ... and accumulate Q ← Q·H.
        for c in 0..m {
            let s = (j..m).map(|i| v[i] * q[(c, i)]).sum::<f64>() * beta;
            for i in j..m {
                q[(c, i)] -= s * v[i];
            }
        }
    }
    if rdiag_min < rank_tol * rdiag_max.max(1e-300) {
        return None;
    }
    Some(q.columns(k, m - k).into_owned())
}

/// Solve `(H + μI)·d = g` for symmetric positive semidefinite `H`,
/// escalating the Levenberg damping `μ` geometrically from zero until the
/// Cholesky factorization succeeds. Returns the solution and the damping
/// that was required, or `None` if even extreme damping fails.
pub fn solve_spd_damped(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let n = h.nrows();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0f64, f64::max).max(1e-300);
    if let Some(chol) = nalgebra::Cholesky::new(h.clone()) {
        return Some((chol.solve(g), 0.0));
    }
    let mut mu = 1e-14 * scale;
    while mu < 1e20 * scale {
        let mut hd = h.clone();
        for i in 0..n {
            hd[(i, i)] += mu;
        }
        if let Some(chol) = nalgebra::Cholesky::new(hd) {
            return Some((chol.solve(g), mu));
        }
        mu *= 100.0;
    }
    None
}

/// Minimum-norm solution of `A·x = y` for full-row-rank `A`:
/// `x = Aᵀ·(A·Aᵀ)⁻¹·y`.
pub fn min_norm_solution(csc: &CscPattern, y: &DVector<f64>) -> Option<DVector<f64>> {
    let gram = csc.weighted_gram(&DVector::from_element(csc.ncols(), 1.0));
    let chol = nalgebra::Cholesky::new(gram)?;
    Some(csc.tr_mul_vec(&chol.solve(y)))
}
