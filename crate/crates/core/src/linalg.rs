//! Dense symmetric matrices and the rank-one machinery used to keep a
//! precision matrix and a covariance determinant current without ever
//! factorizing the full matrix.
//!
//! Vectors are plain `&[f64]` slices. [`SymmetricMatrix`] stores all `n * n`
//! entries row-major; every mutating operation writes the upper triangle and
//! mirrors it, so stored matrices are exactly symmetric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Threshold below which `1 - u^T A^-1 u` is treated as a loss of positive
/// definiteness.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Relative pivot threshold for [`solve_small_spd`].
pub const SINGULAR_PIVOT_RTOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("rank-one downdate is degenerate: 1 - u'A^-1 u = {factor:e}")]
    DegenerateUpdate { factor: f64 },
    #[error("matrix is singular: pivot {pivot:e} at row {row}")]
    SingularMatrix { row: usize, pivot: f64 },
    #[error("matrix is not positive definite: pivot {pivot:e} at row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(LinalgError::DimensionMismatch { expected, found })
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators let the compiler vectorize without fast-math.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `a - b` elementwise.
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Dense, logically symmetric `n x n` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymmetricMatrix {
    order: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            data: vec![0.0; order * order],
        }
    }

    pub fn identity(order: usize) -> Self {
        Self::from_diagonal(&vec![1.0; order])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * m.order + i] = d;
        }
        m
    }

    /// Builds a matrix from `f(i, j)` evaluated on the upper triangle.
    pub fn from_fn(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(order);
        for i in 0..order {
            for j in i..order {
                let v = f(i, j);
                m.data[i * order + j] = v;
                m.data[j * order + i] = v;
            }
        }
        m
    }

    /// Builds a matrix from rows, symmetrizing as `(M + M^T) / 2`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            check_len(n, r.len())?;
        }
        Ok(Self::from_fn(n, |i, j| 0.5 * (rows[i][j] + rows[j][i])))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.order.max(1)).map(<[f64]>::to_vec).take(self.order).collect()
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    /// Sets `M[i][j]` and `M[j][i]`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.order + j] = v;
        self.data[j * self.order + i] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.order..(i + 1) * self.order]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.order).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |M[i][j] - M[j][i]|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.order;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `M <- (M + M^T) / 2`.
    pub fn symmetrize(&mut self) {
        let n = self.order;
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.order];
        self.mat_vec_into(v, &mut out);
        out
    }

    pub fn mat_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.order);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), v);
        }
    }

    /// `v^T M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        (0..self.order).map(|i| v[i] * dot(self.row(i), v)).sum()
    }

    /// `M <- scale * M + coeff * w w^T`, row by row over the full matrix.
    /// Writing `coeff * (w_i * w_j)` keeps the two triangles bitwise equal.
    pub fn scale_add_outer(&mut self, scale: f64, coeff: f64, w: &[f64]) {
        let n = self.order;
        debug_assert_eq!(w.len(), n);
        for (i, row) in self.data.chunks_exact_mut(n).enumerate() {
            let wi = w[i];
            for (m, &wj) in row.iter_mut().zip(w) {
                *m = scale * *m + coeff * (wi * wj);
            }
        }
    }

    /// `M <- M + coeff * w w^T`.
    pub fn add_outer(&mut self, coeff: f64, w: &[f64]) {
        self.scale_add_outer(1.0, coeff, w);
    }

    /// Principal submatrix on `indices`.
    pub fn principal(&self, indices: &[usize]) -> SymmetricMatrix {
        SymmetricMatrix::from_fn(indices.len(), |a, b| self.get(indices[a], indices[b]))
    }

    /// General `rows.len() x cols.len()` block, row-major.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            let row = self.row(r);
            out.extend(cols.iter().map(|&c| row[c]));
        }
        out
    }

    /// General matrix product `self * other` (test and diagnostic use).
    pub fn matmul(&self, other: &SymmetricMatrix) -> Vec<Vec<f64>> {
        let n = self.order;
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| self.get(i, k) * other.get(k, j)).sum())
                    .collect()
            })
            .collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymmetricMatrix {
    type Error = LinalgError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        for r in &rows {
            check_len(n, r.len())?;
        }
        let data = rows.into_iter().flatten().collect();
        let mut m = SymmetricMatrix { order: n, data };
        m.symmetrize();
        Ok(m)
    }
}

impl From<SymmetricMatrix> for Vec<Vec<f64>> {
    fn from(m: SymmetricMatrix) -> Self {
        m.to_rows()
    }
}

/// Lower Cholesky factor `L` with `M = L L^T`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    order: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factorizes `m`, failing on the first non-positive pivot.
    pub fn factor(m: &SymmetricMatrix) -> Result<Self> {
        Self::factor_with_floor(m, 0.0, false)
    }

    fn factor_with_floor(m: &SymmetricMatrix, floor: f64, singular: bool) -> Result<Self> {
        let n = m.order();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s = m.get(i, j) - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
                if i == j {
                    if !(s > floor) || !s.is_finite() {
                        return Err(if singular {
                            LinalgError::SingularMatrix { row: i, pivot: s }
                        } else {
                            LinalgError::NotPositiveDefinite { row: i, pivot: s }
                        });
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { order: n, l })
    }

    /// Factor of a diagonal matrix given its diagonal.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut l = vec![0.0; n * n];
        for (i, &d) in diag.iter().enumerate() {
            if !(d > 0.0) || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { row: i, pivot: d });
            }
            l[i * n + i] = d.sqrt();
        }
        Ok(Self { order: n, l })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `ln det M = 2 * sum ln L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.order).map(|i| self.l[i * self.order + i].ln()).sum::<f64>()
    }

    /// Solves `L y = b` in place.
    pub fn forward_in_place(&self, b: &mut [f64]) {
        let n = self.order;
        for i in 0..n {
            let s = b[i] - dot(&self.l[i * n..i * n + i], &b[..i]);
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `L^T x = y` in place.
    pub fn backward_in_place(&self, y: &mut [f64]) {
        let n = self.order;
        for i in (0..n).rev() {
            let xi = y[i] / self.l[i * n + i];
            y[i] = xi;
            for k in 0..i {
                y[k] -= self.l[i * n + k] * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        x
    }

    /// `v^T M^-1 v = |L^-1 v|^2`.
    pub fn inv_quad_form(&self, v: &[f64]) -> f64 {
        let mut y = v.to_vec();
        self.forward_in_place(&mut y);
        dot(&y, &y)
    }

    /// Explicit `M^-1`.
    pub fn inverse(&self) -> SymmetricMatrix {
        let n = self.order;
        let mut inv = SymmetricMatrix::zeros(n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.forward_in_place(&mut col);
            self.backward_in_place(&mut col);
            for i in j..n {
                inv.set(i, j, col[i]);
            }
        }
        inv
    }
}

/// `(x - mu)^T lambda (x - mu)`; never inverts anything.
pub fn mahalanobis_sq(x: &[f64], mu: &[f64], lambda: &SymmetricMatrix) -> Result<f64> {
    check_len(lambda.order(), x.len())?;
    check_len(lambda.order(), mu.len())?;
    Ok(lambda.quad_form(&sub(x, mu)))
}

/// `(A + u u^T)^-1` from `A^-1` by Sherman-Morrison.
pub fn rank_one_inverse_add(a_inv: &SymmetricMatrix, u: &[f64]) -> Result<SymmetricMatrix> {
    check_len(a_inv.order(), u.len())?;
    let w = a_inv.mat_vec(u);
    let q = dot(u, &w);
    let mut out = a_inv.clone();
    out.add_outer(-1.0 / (1.0 + q), &w);
    Ok(out)
}

/// `(A - u u^T)^-1` from `A^-1`. Fails when `1 - u^T A^-1 u < DEGENERATE_EPS`.
pub fn rank_one_inverse_sub(a_inv: &SymmetricMatrix, u: &[f64]) -> Result<SymmetricMatrix> {
    check_len(a_inv.order(), u.len())?;
    let w = a_inv.mat_vec(u);
    let factor = 1.0 - dot(u, &w);
    if !(factor >= DEGENERATE_EPS) {
        return Err(LinalgError::DegenerateUpdate { factor });
    }
    let mut out = a_inv.clone();
    out.add_outer(1.0 / factor, &w);
    Ok(out)
}

/// `|A + u u^T| = |A| (1 + u^T A^-1 u)`.
pub fn det_rank_one_add(det_a: f64, a_inv: &SymmetricMatrix, u: &[f64]) -> Result<f64> {
    check_len(a_inv.order(), u.len())?;
    Ok(det_a * (1.0 + a_inv.quad_form(u)))
}

/// `|A - u u^T| = |A| (1 - u^T A^-1 u)`.
pub fn det_rank_one_sub(det_a: f64, a_inv: &SymmetricMatrix, u: &[f64]) -> Result<f64> {
    check_len(a_inv.order(), u.len())?;
    let factor = 1.0 - a_inv.quad_form(u);
    if !(factor >= DEGENERATE_EPS) {
        return Err(LinalgError::DegenerateUpdate { factor });
    }
    Ok(det_a * factor)
}

/// Solves `m x = rhs` for a small SPD `m`.
pub fn solve_small_spd(m: &SymmetricMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    check_len(m.order(), rhs.len())?;
    Ok(small_spd_factor(m)?.solve(rhs))
}

/// Solves `m X = B` column by column; `columns[k]` is the k-th column of `B`.
pub fn solve_small_spd_columns(m: &SymmetricMatrix, columns: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let f = small_spd_factor(m)?;
    columns
        .iter()
        .map(|c| {
            check_len(m.order(), c.len())?;
            Ok(f.solve(c))
        })
        .collect()
}

/// Cholesky factor with the relative singularity check used for small solves.
pub fn small_spd_factor(m: &SymmetricMatrix) -> Result<Cholesky> {
    let floor = SINGULAR_PIVOT_RTOL * m.max_abs();
    Cholesky::factor_with_floor(m, floor, true)
}
