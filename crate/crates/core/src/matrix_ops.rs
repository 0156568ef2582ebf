//! Dense symmetric-matrix primitives and the linear operators tying Gram
//! matrices to squared-distance matrices.
//!
//! The central map is `g(Y) = 2 Sym(diag(Y) 1^T - Y)`, which sends a Gram
//! matrix `Y = X X^T` to the matrix of squared pairwise distances between the
//! rows of `X`. Its adjoint `g*(R) = 2 diag(R 1) - 2 R` is the kernel of the
//! Euclidean gradient of the masked least-squares objective.

use std::ops::Index;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

/// Dense symmetric `n x n` matrix. Symmetry is enforced on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    data: DMatrix<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            data: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            data: DMatrix::identity(n, n),
        }
    }

    /// Builds a matrix from the upper triangle (`i <= j`) of `f`, mirroring it
    /// into the lower triangle.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = f(i, j);
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        Self { data }
    }

    /// Symmetrizes an arbitrary square matrix, `½(A + Aᵀ)`. Already symmetric
    /// inputs pass through bit-for-bit.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        sym(&a)
    }

    /// Wraps a matrix the caller guarantees to be exactly symmetric.
    pub(crate) fn from_symmetric_unchecked(data: DMatrix<f64>) -> Self {
        debug_assert!(data.is_square());
        Self { data }
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Trace inner product `tr(Aᵀ B)`.
    pub fn inner(&self, other: &SymmetricMatrix) -> f64 {
        self.data.dot(&other.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn scale(&self, a: f64) -> SymmetricMatrix {
        Self {
            data: &self.data * a,
        }
    }

    /// `a·self + b·other`
    pub fn axpby(&self, a: f64, other: &SymmetricMatrix, b: f64) -> Result<SymmetricMatrix> {
        check_same(self.n(), other.n())?;
        Ok(Self {
            data: &self.data * a + &other.data * b,
        })
    }

    pub fn sub(&self, other: &SymmetricMatrix) -> Result<SymmetricMatrix> {
        self.axpby(1.0, other, -1.0)
    }

    pub fn add(&self, other: &SymmetricMatrix) -> Result<SymmetricMatrix> {
        self.axpby(1.0, other, 1.0)
    }
}

impl Index<(usize, usize)> for SymmetricMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.data[idx]
    }
}

fn check_same(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(dim_err(format!("dimension {a} does not match {b}")));
    }
    Ok(())
}

/// Symmetric part `½(A + Aᵀ)`.
pub fn sym(a: &DMatrix<f64>) -> Result<SymmetricMatrix> {
    if !a.is_square() {
        return Err(dim_err(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    Ok(SymmetricMatrix::from_upper_fn(n, |i, j| {
        if i == j {
            a[(i, i)]
        } else {
            0.5 * (a[(i, j)] + a[(j, i)])
        }
    }))
}

/// Skew part `½(A - Aᵀ)`.
pub fn skew(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(dim_err(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok((a - a.transpose()) * 0.5)
}

/// `g(Y)[i][j] = Y[i][i] + Y[j][j] - 2 Y[i][j]`.
pub fn edm_from_gram(y: &SymmetricMatrix) -> SymmetricMatrix {
    let n = y.n();
    SymmetricMatrix::from_upper_fn(n, |i, j| {
        if i == j {
            0.0
        } else {
            y[(i, i)] + y[(j, j)] - 2.0 * y[(i, j)]
        }
    })
}

/// Adjoint of [`edm_from_gram`]: `g*(R) = 2 diag(R 1) - 2 R`.
pub fn edm_adjoint(r: &SymmetricMatrix) -> SymmetricMatrix {
    let n = r.n();
    let row_sums: Vec<f64> = (0..n).map(|i| r.data.row(i).sum()).collect();
    let mut out = &r.data * -2.0;
    for i in 0..n {
        out[(i, i)] += 2.0 * row_sums[i];
    }
    SymmetricMatrix::from_symmetric_unchecked(out)
}

/// Symmetric set of observed off-diagonal positions `E`.
///
/// Stored as sorted unordered pairs `(i, j)` with `i < j`; each one stands for
/// both `(i, j)` and `(j, i)`. The diagonal is never part of `E`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl SampleSet {
    /// Accepts pairs in either orientation; mirrored duplicates collapse.
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut out = Vec::new();
        for (i, j) in pairs {
            if i == j {
                return Err(Error::InvalidSample(format!(
                    "diagonal position ({i},{i}) cannot be sampled"
                )));
            }
            if i >= n || j >= n {
                return Err(Error::InvalidSample(format!(
                    "pair ({i},{j}) out of range for n = {n}"
                )));
            }
            out.push((i.min(j), i.max(j)));
        }
        out.sort_unstable();
        out.dedup();
        Ok(Self { n, pairs: out })
    }

    pub fn full(n: usize) -> Self {
        let pairs = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        Self { n, pairs }
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            pairs: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unordered pairs with `i < j`, sorted.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// `|E|` counting both orientations of each pair.
    pub fn directed_len(&self) -> usize {
        2 * self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i != j && self.pairs.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    /// Dense 0/1 indicator of `E`.
    pub fn indicator(&self) -> SymmetricMatrix {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.pairs {
            m[(i, j)] = 1.0;
            m[(j, i)] = 1.0;
        }
        SymmetricMatrix::from_symmetric_unchecked(m)
    }
}

/// Sampling operator `P_E`: keeps entries in `E`, zeroes everything else
/// including the diagonal.
pub fn apply_mask(a: &SymmetricMatrix, e: &SampleSet) -> Result<SymmetricMatrix> {
    check_same(a.n(), e.n())?;
    let n = a.n();
    let mut out = DMatrix::zeros(n, n);
    for &(i, j) in e.pairs() {
        out[(i, j)] = a[(i, j)];
        out[(j, i)] = a[(j, i)];
    }
    Ok(SymmetricMatrix::from_symmetric_unchecked(out))
}

/// Leading eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPair {
    /// `P Σ Pᵀ`
    pub fn reconstruct(&self) -> SymmetricMatrix {
        let scaled = &self.vectors * DMatrix::from_diagonal(&self.values);
        let full = scaled * self.vectors.transpose();
        sym(&full).expect("square by construction")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

const EIG_MAX_SWEEPS: usize = 10_000;

/// Full eigendecomposition of a symmetric matrix with eigenvalues sorted
/// descending.
pub fn symmetric_eig(a: &DMatrix<f64>) -> Result<EigenPair> {
    if !a.is_square() {
        return Err(dim_err("eigendecomposition needs a square matrix"));
    }
    let n = a.nrows();
    let eig = a
        .clone()
        .try_symmetric_eigen(f64::EPSILON, EIG_MAX_SWEEPS)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenPair { values, vectors })
}

/// Top-`k` eigenpairs (algebraically largest) of `A`. Negative eigenvalues
/// are kept as-is.
pub fn truncated_eig(a: &SymmetricMatrix, k: usize) -> Result<EigenPair> {
    if k == 0 || k > a.n() {
        return Err(dim_err(format!(
            "rank {k} outside 1..={} for truncated eigendecomposition",
            a.n()
        )));
    }
    let full = symmetric_eig(a.as_matrix())?;
    Ok(EigenPair {
        values: full.values.rows(0, k).into_owned(),
        vectors: full.vectors.columns(0, k).into_owned(),
    })
}
