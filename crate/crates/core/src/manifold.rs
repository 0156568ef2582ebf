//! Geometry of the manifold of `n x n` symmetric PSD matrices of rank exactly `k`.
//!
//! Points are kept in eigenform `Y = Q Λ Qᵀ`. Tangent vectors at `Y` are kept
//! as a pair `(B, Up)` with `B` symmetric `k x k` and `Qᵀ Up = 0`; their
//! ambient form is `Q B Qᵀ + Up Qᵀ + Q Upᵀ`. Neither `Q_⊥` nor any ambient
//! `n x n` matrix is formed on the hot path.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};
use crate::matrix_ops::{symmetric_eig, truncated_eig, SymmetricMatrix};

/// Tolerance on `QᵀQ = I` accepted by [`ManifoldPoint::new`].
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Eigenvalues at or below this fraction of the spectral radius count as zero
/// when retracting.
pub const RANK_THRESHOLD: f64 = 1e-12;

/// A rank-`k` PSD matrix `Q diag(λ) Qᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    q: DMatrix<f64>,
    lambda: DVector<f64>,
}

impl ManifoldPoint {
    /// Validates orthonormality of `q` and strict positivity/ordering of `lambda`.
    pub fn new(q: DMatrix<f64>, lambda: DVector<f64>) -> Result<Self> {
        let k = lambda.len();
        if k == 0 || q.ncols() != k || q.nrows() < k {
            return Err(dim_err(format!(
                "eigenvector block is {}x{} but {} eigenvalues were given",
                q.nrows(),
                q.ncols(),
                k
            )));
        }
        let off = (q.transpose() * &q - DMatrix::identity(k, k)).amax();
        if !(off <= ORTHONORMALITY_TOL) {
            return Err(Error::NotOnManifold {
                k,
                reason: format!("columns not orthonormal (deviation {off:e})"),
            });
        }
        if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::NotOnManifold {
                k,
                reason: "eigenvalues must be finite and strictly positive".into(),
            });
        }
        if lambda.as_slice().windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::NotOnManifold {
                k,
                reason: "eigenvalues must be sorted descending".into(),
            });
        }
        Ok(Self { q, lambda })
    }

    /// Best rank-`k` eigen-truncation of a symmetric matrix. Fails if the
    /// truncation is not strictly positive.
    pub fn from_ambient(a: &SymmetricMatrix, k: usize) -> Result<Self> {
        let eig = truncated_eig(a, k)?;
        Self::new(eig.vectors, eig.values)
    }

    /// `Y = X Xᵀ` for a full-column-rank factor `X` (`n x k`).
    pub fn from_factor(x: &DMatrix<f64>) -> Result<Self> {
        let k = x.ncols();
        if k == 0 || x.nrows() < k {
            return Err(dim_err(format!("factor must be n x k with n >= k >= 1, got {}x{}", x.nrows(), k)));
        }
        let svd = x.clone().svd(true, false);
        let u = svd.u.ok_or_else(|| Error::NumericalFailure("SVD produced no U".into()))?;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let mut q = DMatrix::zeros(x.nrows(), k);
        let mut lambda = DVector::zeros(k);
        for (dst, &src) in order.iter().enumerate() {
            q.set_column(dst, &u.column(src));
            lambda[dst] = svd.singular_values[src].powi(2);
        }
        Self::new(q, lambda)
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn k(&self) -> usize {
        self.q.ncols()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    /// `Q Λ^{1/2}`, an `n x k` factor with `X Xᵀ = Y`.
    pub fn factor(&self) -> DMatrix<f64> {
        let mut x = self.q.clone();
        for (j, l) in self.lambda.iter().enumerate() {
            x.column_mut(j).scale_mut(l.sqrt());
        }
        x
    }

    pub fn to_ambient(&self) -> SymmetricMatrix {
        to_ambient(self)
    }
}

/// Factored tangent vector `(B, Up)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    b: DMatrix<f64>,
    up: DMatrix<f64>,
}

impl TangentVector {
    /// `b` is symmetrized; `up` is taken as given (callers must ensure `Qᵀ up = 0`
    /// for the intended base point, see [`TangentVector::is_tangent_at`]).
    pub fn new(b: DMatrix<f64>, up: DMatrix<f64>) -> Result<Self> {
        if !b.is_square() || b.nrows() != up.ncols() {
            return Err(dim_err(format!(
                "B is {}x{} but Up is {}x{}",
                b.nrows(),
                b.ncols(),
                up.nrows(),
                up.ncols()
            )));
        }
        let b = crate::matrix_ops::sym(&b)?.into_matrix();
        Ok(Self { b, up })
    }

    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            b: DMatrix::zeros(k, k),
            up: DMatrix::zeros(n, k),
        }
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn up(&self) -> &DMatrix<f64> {
        &self.up
    }

    pub fn n(&self) -> usize {
        self.up.nrows()
    }

    pub fn k(&self) -> usize {
        self.b.nrows()
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            b: &self.b * a,
            up: &self.up * a,
        }
    }

    /// `a·self + b·other`. Both must live at the same base point.
    pub fn axpby(&self, a: f64, other: &TangentVector, b: f64) -> Self {
        Self {
            b: &self.b * a + &other.b * b,
            up: &self.up * a + &other.up * b,
        }
    }

    pub fn is_tangent_at(&self, base: &ManifoldPoint, tol: f64) -> bool {
        self.n() == base.n()
            && self.k() == base.k()
            && (base.q.transpose() * &self.up).amax() <= tol
            && (&self.b - self.b.transpose()).amax() <= tol
    }

    /// `Q B Qᵀ + Up Qᵀ + Q Upᵀ` at `base`.
    pub fn ambient(&self, base: &ManifoldPoint) -> Result<SymmetricMatrix> {
        check_tangent_dims(base, self)?;
        let q = &base.q;
        let qb = q * &self.b;
        let upq = &self.up * q.transpose();
        let full = qb * q.transpose() + &upq + upq.transpose();
        crate::matrix_ops::sym(&full)
    }

    pub fn norm(&self) -> f64 {
        tangent_inner(self, self).expect("same shape").max(0.0).sqrt()
    }
}

fn check_tangent_dims(base: &ManifoldPoint, v: &TangentVector) -> Result<()> {
    if v.n() != base.n() || v.k() != base.k() {
        return Err(dim_err(format!(
            "tangent vector is ({}, {}) but base point is ({}, {})",
            v.n(),
            v.k(),
            base.n(),
            base.k()
        )));
    }
    Ok(())
}

/// `Q diag(λ) Qᵀ`.
pub fn to_ambient(y: &ManifoldPoint) -> SymmetricMatrix {
    let x = &y.q * DMatrix::from_diagonal(&y.lambda);
    let full = x * y.q.transpose();
    crate::matrix_ops::sym(&full).expect("square by construction")
}

/// Tangent projection given the thin product `S Q` of a symmetric `S` with
/// the base eigenvectors: `B = Qᵀ S Q`, `Up = S Q - Q B`.
pub(crate) fn project_from_product(y: &ManifoldPoint, sq: DMatrix<f64>) -> TangentVector {
    let b = y.q.transpose() * &sq;
    let b = (&b + b.transpose()) * 0.5;
    let up = sq - &y.q * &b;
    TangentVector { b, up }
}

/// Orthogonal projection of `Sym(A)` onto `T_Y`.
pub fn project_tangent(y: &ManifoldPoint, a: &SymmetricMatrix) -> Result<TangentVector> {
    if a.n() != y.n() {
        return Err(dim_err(format!(
            "matrix is {}x{} but base point has n = {}",
            a.n(),
            a.n(),
            y.n()
        )));
    }
    Ok(project_from_product(y, a.as_matrix() * &y.q))
}

/// Riemannian gradient: tangent projection of the Euclidean gradient.
pub fn riemannian_grad(y: &ManifoldPoint, euclid_grad: &SymmetricMatrix) -> Result<TangentVector> {
    project_tangent(y, euclid_grad)
}

/// Moves `v_old` (tangent at `y_old`) into `T_{y_new}` by orthogonal projection.
pub fn transport(
    y_old: &ManifoldPoint,
    y_new: &ManifoldPoint,
    v_old: &TangentVector,
) -> Result<TangentVector> {
    check_tangent_dims(y_old, v_old)?;
    if y_old.n() != y_new.n() || y_old.k() != y_new.k() {
        return Err(dim_err("transport between points of different shape"));
    }
    // ambient(V_old) · Q_new without forming the n x n matrix.
    let qo = &y_old.q;
    let qn = &y_new.q;
    let cross = qo.transpose() * qn;
    let sq = qo * (&v_old.b * &cross) + &v_old.up * &cross + qo * (v_old.up.transpose() * qn);
    Ok(project_from_product(y_new, sq))
}

/// Ambient trace inner product of two tangent vectors at the same base:
/// `tr(B1 B2) + 2 tr(Up1ᵀ Up2)`.
pub fn tangent_inner(v1: &TangentVector, v2: &TangentVector) -> Result<f64> {
    if v1.n() != v2.n() || v1.k() != v2.k() {
        return Err(dim_err("tangent vectors of different shape"));
    }
    Ok(v1.b.dot(&v2.b) + 2.0 * v1.up.dot(&v2.up))
}

/// Rank-`k` eigen-truncation of `Y + step·V`.
///
/// `Y + step·V` lives in the column space of `[Q, Up]`, so a thin QR of that
/// `n x 2k` block reduces the problem to a `2k x 2k` symmetric eigenproblem.
pub fn retract(y: &ManifoldPoint, v: &TangentVector, step: f64) -> Result<ManifoldPoint> {
    check_tangent_dims(y, v)?;
    if !step.is_finite() || step < 0.0 {
        return Err(Error::InvalidConfig(format!("retraction step must be finite and >= 0, got {step}")));
    }
    let n = y.n();
    let k = y.k();

    let mut basis = DMatrix::zeros(n, 2 * k);
    basis.columns_mut(0, k).copy_from(&y.q);
    basis.columns_mut(k, k).copy_from(&v.up);

    // Y + tV = [Q Up] M [Q Up]ᵀ with M = [[Λ + tB, tI], [tI, 0]].
    let mut core = DMatrix::zeros(2 * k, 2 * k);
    {
        let mut top = core.view_mut((0, 0), (k, k));
        top.copy_from(&(&v.b * step));
        for i in 0..k {
            top[(i, i)] += y.lambda[i];
        }
    }
    for i in 0..k {
        core[(i, k + i)] = step;
        core[(k + i, i)] = step;
    }

    let qr = basis.qr();
    let q_full = qr.q();
    let r = qr.r();
    let small = &r * core * r.transpose();
    let small = crate::matrix_ops::sym(&small)?;
    let eig = symmetric_eig(small.as_matrix())?;

    let spectral_radius = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = RANK_THRESHOLD * spectral_radius;
    let positive = eig.values.iter().take(k).filter(|&&l| l > cutoff).count();
    if positive < k || eig.values.len() < k {
        return Err(Error::RankDeficientRetraction { k, positive });
    }

    let q_new = q_full * eig.vectors.columns(0, k);
    let lambda = eig.values.rows(0, k).into_owned();
    ManifoldPoint::new(q_new, lambda)
}
