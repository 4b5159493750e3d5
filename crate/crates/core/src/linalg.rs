//! Dense linear algebra helpers built on `nalgebra`.
//!
//! Everything here is a pure function of its inputs. Singular values are
//! always reported in nonincreasing order and factor signs are not
//! canonicalized: only the reconstruction `U diag(sigma) V^T` is guaranteed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative tolerance below which `sigma_min^2 / sigma_max^2` marks a Gram
/// matrix as singular.
pub const GRAM_TOL: f64 = 1e-12;

/// Tolerance used when checking that a set of columns is orthonormal.
pub const ORTHO_TOL: f64 = 1e-8;

/// Compact SVD `M = U diag(sigma) V^T` keeping only the `rank` nonzero
/// singular values.
#[derive(Debug, Clone)]
pub struct CompactSvd {
    pub u: Matrix,
    pub sigma: Vector,
    pub v: Matrix,
    pub rank: usize,
}

impl CompactSvd {
    /// `Z = U diag(sigma)`.
    pub fn z(&self) -> Matrix {
        let mut z = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            z.column_mut(j).scale_mut(*s);
        }
        z
    }

    /// `Z^+ = diag(sigma)^{-1} U^T`, the left inverse of [`CompactSvd::z`].
    pub fn z_pinv(&self) -> Matrix {
        let mut zp = self.u.transpose();
        for (i, s) in self.sigma.iter().enumerate() {
            zp.row_mut(i).scale_mut(1.0 / *s);
        }
        zp
    }

    pub fn reconstruct(&self) -> Matrix {
        self.z() * self.v.transpose()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma[self.rank - 1]
    }
}

/// Numerical-rank tolerance: `max(rows, cols) * eps`, relative to `sigma_max`.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} contains NaN or infinite entries")))
    }
}

/// Full (thin) SVD with singular values sorted nonincreasing.
fn sorted_svd(m: &Matrix) -> (Matrix, Vector, Matrix) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let u_sorted = Matrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let v_sorted = Matrix::from_fn(vt.ncols(), order.len(), |i, j| vt[(order[j], i)]);
    let s_sorted = Vector::from_iterator(order.len(), order.iter().map(|&k| s[k]));
    (u_sorted, s_sorted, v_sorted)
}

/// Singular values in nonincreasing order. Empty matrices yield an empty vector.
pub fn singular_values(m: &Matrix) -> Vector {
    if m.is_empty() {
        return Vector::zeros(0);
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Vector::from_vec(s)
}

/// Compact SVD keeping singular values above `rank_tol * sigma_max`.
///
/// `rank_tol = None` selects [`default_rank_tol`].
pub fn compact_svd(m: &Matrix, rank_tol: Option<f64>) -> Result<CompactSvd> {
    ensure_finite(m, "matrix")?;
    if m.is_empty() {
        return Err(Error::AllZeroMatrix);
    }
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(m.nrows(), m.ncols()));
    let (u, s, v) = sorted_svd(m);
    let smax = s[0];
    if !(smax > 0.0) || smax <= f64::MIN_POSITIVE {
        return Err(Error::AllZeroMatrix);
    }
    let rank = s.iter().take_while(|&&x| x > tol * smax).count();
    if rank == 0 {
        return Err(Error::AllZeroMatrix);
    }
    Ok(CompactSvd {
        u: u.columns(0, rank).into_owned(),
        sigma: s.rows(0, rank).into_owned(),
        v: v.columns(0, rank).into_owned(),
        rank,
    })
}

/// Largest absolute entry of `M^T M - I`.
pub fn orthonormality_defect(m: &Matrix) -> f64 {
    let g = m.transpose() * m;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Orthonormal basis of the complement of `span(v_beta)`.
///
/// The completion comes from the full Householder QR of `v_beta`; the
/// trailing `p - r` columns of the orthogonal factor are re-orthogonalized
/// against `v_beta` once more before being returned.
pub fn orthonormal_complement(v_beta: &Matrix) -> Result<Matrix> {
    let (p, r) = v_beta.shape();
    if r > p {
        return Err(Error::DimensionMismatch(format!(
            "cannot complete {r} columns in dimension {p}"
        )));
    }
    let defect = orthonormality_defect(v_beta);
    if defect > ORTHO_TOL {
        return Err(Error::NotOrthonormal(defect));
    }
    if r == p {
        return Ok(Matrix::zeros(p, 0));
    }
    if r == 0 {
        return Ok(Matrix::identity(p, p));
    }
    let qr = v_beta.clone().qr();
    let mut qt = Matrix::identity(p, p);
    qr.q_tr_mul(&mut qt);
    let mut comp = qt.transpose().columns(r, p - r).into_owned();
    for _ in 0..2 {
        let proj = v_beta * (v_beta.transpose() * &comp);
        comp -= proj;
        // modified Gram-Schmidt amongst the completion columns
        for j in 0..comp.ncols() {
            for k in 0..j {
                let dot = comp.column(k).dot(&comp.column(j));
                let ck = comp.column(k).into_owned();
                comp.column_mut(j).axpy(-dot, &ck, 1.0);
            }
            let nrm = comp.column(j).norm();
            comp.column_mut(j).scale_mut(1.0 / nrm);
        }
    }
    Ok(comp)
}

/// `sigma_max / sigma_min` over the nonzero singular values.
pub fn condition_number(m: &Matrix) -> Result<f64> {
    ensure_finite(m, "matrix")?;
    let s = singular_values(m);
    if s.is_empty() || !(s[0] > f64::MIN_POSITIVE) {
        return Err(Error::AllZeroMatrix);
    }
    let tol = default_rank_tol(m.nrows(), m.ncols()) * s[0];
    let smin = s.iter().copied().filter(|&x| x > tol).fold(f64::INFINITY, f64::min);
    Ok(s[0] / smin)
}

/// Least-squares solution of `a x ~ b` for full-column-rank `a`.
///
/// Fails with `SingularGram` when `sigma_min(a)^2 <= GRAM_TOL * sigma_max(a)^2`.
pub fn least_squares(a: &Matrix, b: &Vector) -> Result<Vector> {
    let (n, k) = a.shape();
    if b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "least_squares: matrix has {n} rows, rhs has {}",
            b.len()
        )));
    }
    if k == 0 {
        return Ok(Vector::zeros(0));
    }
    let f = GramFactor::new(a)?;
    Ok(f.solve_normal(b))
}

/// Minimum-norm least-squares solution `a^+ b` (no rank requirement).
pub fn min_norm_solve(a: &Matrix, b: &Vector) -> Result<Vector> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch("min_norm_solve: rhs length".into()));
    }
    if a.ncols() == 0 {
        return Ok(Vector::zeros(0));
    }
    match compact_svd(a, None) {
        Ok(svd) => {
            let mut coef = svd.u.transpose() * b;
            for (c, s) in coef.iter_mut().zip(svd.sigma.iter()) {
                *c /= *s;
            }
            Ok(&svd.v * coef)
        }
        Err(Error::AllZeroMatrix) => Ok(Vector::zeros(a.ncols())),
        Err(e) => Err(e),
    }
}

/// Orthonormal basis for the column space of `m` (numerical rank).
pub fn range_basis(m: &Matrix) -> Matrix {
    if m.is_empty() {
        return Matrix::zeros(m.nrows(), 0);
    }
    match compact_svd(m, Some(1e-10)) {
        Ok(svd) => svd.u,
        Err(_) => Matrix::zeros(m.nrows(), 0),
    }
}

/// Cached factorization of a full-column-rank matrix `A = U S W^T`, used for
/// every `(A^T A)^{-1} A^T` product without forming the inverse.
#[derive(Debug, Clone)]
pub struct GramFactor {
    u: Matrix,
    sigma: Vector,
    w: Matrix,
}

impl GramFactor {
    pub fn new(a: &Matrix) -> Result<Self> {
        Self::with_scale(a, 0.0)
    }

    /// Like [`GramFactor::new`], with the singularity threshold measured
    /// against `max(sigma_max(a), scale)`. Lets callers reject columns that
    /// are numerically zero relative to a parent matrix.
    pub fn with_scale(a: &Matrix, scale: f64) -> Result<Self> {
        ensure_finite(a, "matrix")?;
        let (n, k) = a.shape();
        if k == 0 {
            return Ok(GramFactor {
                u: Matrix::zeros(n, 0),
                sigma: Vector::zeros(0),
                w: Matrix::zeros(0, 0),
            });
        }
        if n < k {
            return Err(Error::SingularGram { sigma_min_sq: 0.0, tol: GRAM_TOL });
        }
        let (u, s, w) = sorted_svd(a);
        let smax = s[0].max(scale);
        let smin = s[s.len() - 1];
        if !(smax > 0.0) || smin * smin <= GRAM_TOL * smax * smax {
            return Err(Error::SingularGram {
                sigma_min_sq: smin * smin,
                tol: GRAM_TOL * smax * smax,
            });
        }
        Ok(GramFactor { u, sigma: s, w })
    }

    pub fn ncols(&self) -> usize {
        self.sigma.len()
    }

    /// `(A^T A)^{-1} A^T b`.
    pub fn solve_normal(&self, b: &Vector) -> Vector {
        let mut coef = self.u.transpose() * b;
        for (c, s) in coef.iter_mut().zip(self.sigma.iter()) {
            *c /= *s;
        }
        &self.w * coef
    }

    /// `P b = b - A (A^T A)^{-1} A^T b`, the projection onto `range(A)^perp`.
    pub fn project_out(&self, b: &Vector) -> Vector {
        if self.ncols() == 0 {
            return b.clone();
        }
        b - &self.u * (self.u.transpose() * b)
    }

    /// Column-wise [`GramFactor::project_out`].
    pub fn project_out_matrix(&self, b: &Matrix) -> Matrix {
        if self.ncols() == 0 {
            return b.clone();
        }
        b - &self.u * (self.u.transpose() * b)
    }

    /// `sigma_min(A^T A) = sigma_min(A)^2`; `None` when `A` has no columns.
    pub fn sigma_min_gram(&self) -> Option<f64> {
        self.sigma.iter().next_back().map(|s| s * s)
    }
}

pub fn l1_norm(v: &Vector) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn linf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}
