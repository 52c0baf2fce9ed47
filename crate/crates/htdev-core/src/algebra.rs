//! Step-two stratified Lie algebras over a fixed orthonormal horizontal
//! basis, together with the linear-algebra kernel every solver consumes:
//! the J operator, adjoint matrices, matrix norms, and kernel/image bases.
//!
//! Conventions used throughout the crate:
//!
//! * The horizontal basis `X_1..X_m` is orthonormal. Arbitrary horizontal
//!   Gram matrices are absorbed at construction via
//!   [`StepTwoAlgebra::orthonormalized_from_horizontal_gram`].
//! * Structure constants satisfy `[X_j, X_k] = sum_a c_{jk}^a T_a` and are
//!   antisymmetric in `(j, k)`. Indices are zero-based in this API.
//! * The matrix of the J operator uses `entry(r, k) = <J_T X_k, X_r>`, so the
//!   operator acts on coordinate columns. Any skew convention yields the same
//!   squares, norms and deviations.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::tol;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AlgebraError {
    #[error("structure tensor has {got} entries, expected m*m*p = {expected} for m={m}, p={p}")]
    ShapeMismatch { m: usize, p: usize, expected: usize, got: usize },
    #[error("rank must satisfy m >= 2 and p >= 1, got m={m}, p={p}")]
    BadDimensions { m: usize, p: usize },
    #[error("structure constants violate antisymmetry at (j={j}, k={k}, alpha={alpha})")]
    Antisymmetry { j: usize, k: usize, alpha: usize },
    #[error("not bracket-generating: structure matrix has rank {rank} < p = {p}")]
    NotBracketGenerating { rank: usize, p: usize },
    #[error("bracket index ({j}, {k}) out of range for m={m} (need j < k < m)")]
    IndexOutOfRange { j: usize, k: usize, m: usize },
    #[error("duplicate bracket record for pair ({j}, {k})")]
    DuplicatePair { j: usize, k: usize },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("vertical form must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("vertical form is not symmetric (max asymmetry {max_asym:.3e})")]
    NotSymmetric { max_asym: f64 },
    #[error("vertical metric is not positive definite (min eigenvalue {min_eig:.3e}); use the semimetric path")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("vertical semimetric is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPositiveSemidefinite { min_eig: f64 },
}

/// One bracket record `[X_j, X_k] = sum_a coeffs[a] T_a` with `j < k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    pub j: usize,
    pub k: usize,
    pub coeffs: DVector<f64>,
}

impl Bracket {
    pub fn new(j: usize, k: usize, coeffs: Vec<f64>) -> Self {
        Bracket { j, k, coeffs: DVector::from_vec(coeffs) }
    }
}

/// A step-two stratified Lie algebra with orthonormal horizontal basis,
/// stored as the canonical list of nonzero brackets over pairs `j < k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTwoAlgebra {
    m: usize,
    p: usize,
    brackets: Vec<Bracket>,
}

impl StepTwoAlgebra {
    /// Builds and validates an algebra from bracket records.
    ///
    /// Antisymmetry holds by construction; bracket generation (the pair-by-p
    /// structure matrix having rank exactly `p`) is checked numerically.
    pub fn from_brackets(m: usize, p: usize, brackets: Vec<Bracket>) -> Result<Self, AlgebraError> {
        if m < 2 || p < 1 {
            return Err(AlgebraError::BadDimensions { m, p });
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut cleaned = Vec::with_capacity(brackets.len());
        for b in brackets {
            if b.j >= b.k || b.k >= m {
                return Err(AlgebraError::IndexOutOfRange { j: b.j, k: b.k, m });
            }
            if b.coeffs.len() != p {
                return Err(AlgebraError::DimensionMismatch {
                    context: format!(
                        "bracket ({}, {}) has {} coefficients, expected p = {}",
                        b.j,
                        b.k,
                        b.coeffs.len(),
                        p
                    ),
                });
            }
            if !seen.insert((b.j, b.k)) {
                return Err(AlgebraError::DuplicatePair { j: b.j, k: b.k });
            }
            if b.coeffs.iter().any(|&x| x != 0.0) {
                cleaned.push(b);
            }
        }
        cleaned.sort_by_key(|b| (b.j, b.k));
        let algebra = StepTwoAlgebra { m, p, brackets: cleaned };
        let rank = algebra.structure_rank();
        if rank != p {
            return Err(AlgebraError::NotBracketGenerating { rank, p });
        }
        Ok(algebra)
    }

    /// Builds an algebra from a dense `(m, m, p)` tensor in row-major layout.
    pub fn from_tensor(m: usize, p: usize, c: &[f64]) -> Result<Self, AlgebraError> {
        check_tensor_shape(m, p, c)?;
        if let Some((j, k, alpha)) = antisymmetry_violation(m, p, c) {
            return Err(AlgebraError::Antisymmetry { j, k, alpha });
        }
        let mut brackets = Vec::new();
        for j in 0..m {
            for k in (j + 1)..m {
                let coeffs: Vec<f64> = (0..p).map(|a| c[(j * m + k) * p + a]).collect();
                brackets.push(Bracket::new(j, k, coeffs));
            }
        }
        Self::from_brackets(m, p, brackets)
    }

    /// Re-expresses brackets over the orthonormal basis induced by a
    /// horizontal Gram matrix `G = L L^T`: the new basis is `Y = X L^{-T}`.
    pub fn orthonormalized_from_horizontal_gram(
        m: usize,
        p: usize,
        brackets: Vec<Bracket>,
        gram: &DMatrix<f64>,
    ) -> Result<Self, AlgebraError> {
        if gram.nrows() != m || gram.ncols() != m {
            return Err(AlgebraError::DimensionMismatch {
                context: format!("horizontal Gram matrix is {}x{}, expected {m}x{m}", gram.nrows(), gram.ncols()),
            });
        }
        let chol = nalgebra::Cholesky::new(gram.clone()).ok_or(AlgebraError::DimensionMismatch {
            context: "horizontal Gram matrix is not positive definite".into(),
        })?;
        // A = L^{-T}; c'_{ab} = sum_{j<k} (A_{ja} A_{kb} - A_{ka} A_{jb}) c_{jk}
        let a = chol
            .l()
            .transpose()
            .solve_upper_triangular(&DMatrix::identity(m, m))
            .expect("triangular solve");
        let raw = StepTwoAlgebra { m, p, brackets };
        let mut out = Vec::new();
        for ja in 0..m {
            for kb in (ja + 1)..m {
                let mut coeffs = DVector::zeros(p);
                for br in &raw.brackets {
                    let w = a[(br.j, ja)] * a[(br.k, kb)] - a[(br.k, ja)] * a[(br.j, kb)];
                    if w != 0.0 {
                        coeffs += &br.coeffs * w;
                    }
                }
                if coeffs.iter().any(|&x| x != 0.0) {
                    out.push(Bracket { j: ja, k: kb, coeffs });
                }
            }
        }
        Self::from_brackets(m, p, out)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn brackets(&self) -> &[Bracket] {
        &self.brackets
    }

    /// `c_{jk}^alpha` for arbitrary `j, k` (antisymmetric extension).
    pub fn structure_constant(&self, j: usize, k: usize, alpha: usize) -> f64 {
        let (lo, hi, sign) = if j < k { (j, k, 1.0) } else { (k, j, -1.0) };
        if j == k {
            return 0.0;
        }
        self.brackets
            .iter()
            .find(|b| b.j == lo && b.k == hi)
            .map(|b| sign * b.coeffs[alpha])
            .unwrap_or(0.0)
    }

    /// Dense `(m, m, p)` tensor in row-major layout.
    pub fn tensor(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.m * self.m * self.p];
        for b in &self.brackets {
            for a in 0..self.p {
                c[(b.j * self.m + b.k) * self.p + a] = b.coeffs[a];
                c[(b.k * self.m + b.j) * self.p + a] = -b.coeffs[a];
            }
        }
        c
    }

    /// The `C(m,2) x p` structure matrix whose rows are the bracket
    /// coordinates `(c_{jk}^a)_a` over pairs `j < k` in lexicographic order.
    pub fn structure_matrix(&self) -> DMatrix<f64> {
        let n = self.m * (self.m - 1) / 2;
        let mut c = DMatrix::zeros(n, self.p);
        for b in &self.brackets {
            let row = pair_index(self.m, b.j, b.k);
            for a in 0..self.p {
                c[(row, a)] = b.coeffs[a];
            }
        }
        c
    }

    /// Numerical rank of the structure matrix.
    pub fn structure_rank(&self) -> usize {
        numerical_rank(&self.structure_matrix())
    }

    /// Vertical coordinates of `[x, y]` by bilinear expansion.
    pub fn bracket_of(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.p);
        for b in &self.brackets {
            let w = x[b.j] * y[b.k] - x[b.k] * y[b.j];
            if w != 0.0 {
                out += &b.coeffs * w;
            }
        }
        out
    }

    /// The skew matrix `sum_a w_a C_a` where `(C_a)_{rk} = c_{kr}^a`.
    ///
    /// This is the J operator for the vertical weight vector `w = Q t`; it is
    /// the single hot path of all solvers and is exactly skew by assembly.
    pub(crate) fn weighted_op(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut jm = DMatrix::zeros(self.m, self.m);
        for b in &self.brackets {
            let x = b.coeffs.dot(w);
            jm[(b.k, b.j)] += x;
            jm[(b.j, b.k)] -= x;
        }
        jm
    }

    /// `tr(M C_a)` for every vertical index `a`; the gradient kernel of the
    /// deviation objective.
    pub(crate) fn trace_against_ops(&self, mat: &DMatrix<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.p);
        for b in &self.brackets {
            let w = mat[(b.j, b.k)] - mat[(b.k, b.j)];
            if w != 0.0 {
                out += &b.coeffs * w;
            }
        }
        out
    }
}

/// Lexicographic index of the pair `(j, k)`, `j < k`, among all pairs.
pub fn pair_index(m: usize, j: usize, k: usize) -> usize {
    debug_assert!(j < k && k < m);
    j * m - j * (j + 1) / 2 + (k - j - 1)
}

/// All pairs `(j, k)` with `j < k < m` in lexicographic order.
pub fn pairs(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(m * (m - 1) / 2);
    for j in 0..m {
        for k in (j + 1)..m {
            out.push((j, k));
        }
    }
    out
}

fn check_tensor_shape(m: usize, p: usize, c: &[f64]) -> Result<(), AlgebraError> {
    if m < 2 || p < 1 {
        return Err(AlgebraError::BadDimensions { m, p });
    }
    let expected = m * m * p;
    if c.len() != expected {
        return Err(AlgebraError::ShapeMismatch { m, p, expected, got: c.len() });
    }
    Ok(())
}

fn antisymmetry_violation(m: usize, p: usize, c: &[f64]) -> Option<(usize, usize, usize)> {
    let scale = c.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(1.0);
    for j in 0..m {
        for k in j..m {
            for a in 0..p {
                let lhs = c[(j * m + k) * p + a];
                let rhs = c[(k * m + j) * p + a];
                if (lhs + rhs).abs() > tol::SKEW_ABS_TOL * scale {
                    return Some((j, k, a));
                }
            }
        }
    }
    None
}

/// Outcome of validating a raw structure tensor.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub pass: bool,
    pub violation: Option<AlgebraError>,
    pub structure_rank: usize,
}

/// Checks antisymmetry and bracket generation of a dense `(m, m, p)` tensor.
///
/// Shape problems are input errors; invariant violations come back in the
/// report with the first offending entry named.
pub fn validate_algebra(m: usize, p: usize, c: &[f64]) -> Result<ValidationReport, AlgebraError> {
    check_tensor_shape(m, p, c)?;
    if let Some((j, k, alpha)) = antisymmetry_violation(m, p, c) {
        return Ok(ValidationReport {
            pass: false,
            violation: Some(AlgebraError::Antisymmetry { j, k, alpha }),
            structure_rank: 0,
        });
    }
    let mut rows = DMatrix::zeros(m * (m - 1) / 2, p);
    for j in 0..m {
        for k in (j + 1)..m {
            for a in 0..p {
                rows[(pair_index(m, j, k), a)] = c[(j * m + k) * p + a];
            }
        }
    }
    let rank = numerical_rank(&rows);
    if rank != p {
        return Ok(ValidationReport {
            pass: false,
            violation: Some(AlgebraError::NotBracketGenerating { rank, p }),
            structure_rank: rank,
        });
    }
    Ok(ValidationReport { pass: true, violation: None, structure_rank: rank })
}

/// Common access to the Gram matrix of a vertical metric or semimetric.
pub trait VerticalForm {
    fn gram(&self) -> &DMatrix<f64>;

    fn dim(&self) -> usize {
        self.gram().nrows()
    }
}

/// A positive-definite inner product on the vertical layer.
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalMetric {
    gram: DMatrix<f64>,
    cholesky_lower: DMatrix<f64>,
}

impl VerticalMetric {
    pub fn new(gram: DMatrix<f64>) -> Result<Self, MetricError> {
        check_symmetric(&gram)?;
        let sym = symmetrize(&gram);
        let eig = sym.clone().symmetric_eigen();
        let max_eig = eig.eigenvalues.amax();
        let min_eig = eig.eigenvalues.min();
        if min_eig <= tol::rank_tolerance(max_eig) {
            return Err(MetricError::NotPositiveDefinite { min_eig });
        }
        let chol = nalgebra::Cholesky::new(sym.clone())
            .ok_or(MetricError::NotPositiveDefinite { min_eig })?;
        Ok(VerticalMetric { gram: sym, cholesky_lower: chol.l() })
    }

    pub fn identity(p: usize) -> Self {
        VerticalMetric {
            gram: DMatrix::identity(p, p),
            cholesky_lower: DMatrix::identity(p, p),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, MetricError> {
        Self::new(DMatrix::from_diagonal(&DVector::from_vec(diag.to_vec())))
    }

    /// Lower-triangular factor `L` with `Q = L L^T`.
    pub fn cholesky_lower(&self) -> &DMatrix<f64> {
        &self.cholesky_lower
    }
}

impl VerticalForm for VerticalMetric {
    fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
}

/// A positive-semidefinite bilinear form on the vertical layer, together
/// with its numerical rank and spectral factorization.
#[derive(Debug, Clone)]
pub struct VerticalSemimetric {
    gram: DMatrix<f64>,
    rank: usize,
    /// Columns: eigenvectors of the positive eigenvalues.
    basis: DMatrix<f64>,
    /// The corresponding positive eigenvalues.
    eigenvalues: DVector<f64>,
}

impl VerticalSemimetric {
    pub fn new(gram: DMatrix<f64>) -> Result<Self, MetricError> {
        check_symmetric(&gram)?;
        let sym = symmetrize(&gram);
        let eig = sym.clone().symmetric_eigen();
        let max_eig = eig.eigenvalues.amax().max(0.0);
        let cut = tol::rank_tolerance(max_eig);
        let min_eig = eig.eigenvalues.min();
        if min_eig < -cut {
            return Err(MetricError::NotPositiveSemidefinite { min_eig });
        }
        // order positive eigenpairs descending for determinism
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let kept: Vec<usize> = order.into_iter().filter(|&i| eig.eigenvalues[i] > cut).collect();
        let rank = kept.len();
        let p = sym.nrows();
        let mut basis = DMatrix::zeros(p, rank);
        let mut vals = DVector::zeros(rank);
        for (col, &i) in kept.iter().enumerate() {
            basis.set_column(col, &eig.eigenvectors.column(i));
            vals[col] = eig.eigenvalues[i];
        }
        Ok(VerticalSemimetric { gram: sym, rank, basis, eigenvalues: vals })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Eigenvectors of the positive eigenvalues, one column per rank.
    pub fn range_basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn positive_eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }
}

impl VerticalForm for VerticalSemimetric {
    fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
}

fn check_symmetric(gram: &DMatrix<f64>) -> Result<(), MetricError> {
    if gram.nrows() != gram.ncols() {
        return Err(MetricError::NotSquare { rows: gram.nrows(), cols: gram.ncols() });
    }
    let scale = gram.amax().max(1.0);
    let max_asym = (gram - gram.transpose()).amax();
    if max_asym > 1e-10 * scale {
        return Err(MetricError::NotSymmetric { max_asym });
    }
    Ok(())
}

fn symmetrize(gram: &DMatrix<f64>) -> DMatrix<f64> {
    (gram + gram.transpose()) * 0.5
}

/// Matrix of Kaplan's J operator for the vertical coordinate vector `t`.
#[derive(Debug, Clone)]
pub struct SkewOperator {
    pub matrix: DMatrix<f64>,
    pub t: DVector<f64>,
}

/// `J_T` in the orthonormal horizontal basis: `entry(r, k) = <J_T X_k, X_r>`
/// equals `sum_{a,b} c_{kr}^a Q_{ab} t_b`. Linear in `t` and in `Q`.
pub fn j_matrix<Q: VerticalForm>(
    g: &StepTwoAlgebra,
    q: &Q,
    t: &DVector<f64>,
) -> Result<SkewOperator, AlgebraError> {
    if q.dim() != g.p() || t.len() != g.p() {
        return Err(AlgebraError::DimensionMismatch {
            context: format!(
                "j_matrix needs a {p}x{p} vertical form and a length-{p} vector, got {}x{} and {}",
                q.dim(),
                q.dim(),
                t.len(),
                p = g.p()
            ),
        });
    }
    let w = q.gram() * t;
    Ok(SkewOperator { matrix: g.weighted_op(&w), t: t.clone() })
}

/// Matrix of the adjoint map `ad_x : v1 -> v2` for a first-layer vector `x`.
#[derive(Debug, Clone)]
pub struct AdjointMatrix {
    /// `p x m` with `B_{ak} = sum_j x_j c_{jk}^a`, so `B y = [x, y]`.
    pub matrix: DMatrix<f64>,
    pub x: DVector<f64>,
}

pub fn ad_matrix(g: &StepTwoAlgebra, x: &DVector<f64>) -> Result<AdjointMatrix, AlgebraError> {
    if x.len() != g.m() {
        return Err(AlgebraError::DimensionMismatch {
            context: format!("ad_matrix needs a length-{} vector, got {}", g.m(), x.len()),
        });
    }
    let mut b = DMatrix::zeros(g.p(), g.m());
    for br in g.brackets() {
        let (xj, xk) = (x[br.j], x[br.k]);
        for a in 0..g.p() {
            b[(a, br.k)] += xj * br.coeffs[a];
            b[(a, br.j)] -= xk * br.coeffs[a];
        }
    }
    Ok(AdjointMatrix { matrix: b, x: x.clone() })
}

/// Hilbert-Schmidt, operator, smallest, and smallest-nonzero singular values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixNorms {
    pub hilbert_schmidt: f64,
    pub operator: f64,
    pub min_singular: f64,
    pub min_nonzero_singular: f64,
}

pub fn matrix_norms(m: &DMatrix<f64>) -> MatrixNorms {
    let hs = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sv = singular_values(m);
    let op = sv.first().copied().unwrap_or(0.0);
    let min_sv = sv.last().copied().unwrap_or(0.0);
    let cut = tol::rank_tolerance(op);
    let min_nonzero = sv.iter().rev().find(|&&s| s > cut).copied().unwrap_or(0.0);
    MatrixNorms {
        hilbert_schmidt: hs,
        operator: op,
        min_singular: min_sv,
        min_nonzero_singular: min_nonzero,
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = singular_values(m);
    let cut = tol::rank_tolerance(sv.first().copied().unwrap_or(0.0));
    sv.iter().filter(|&&s| s > cut).count()
}

/// `|| J(t)^2 + (t^T Q t) Id ||_HS`, homogeneous of degree two in `t`.
pub fn defect<Q: VerticalForm>(
    g: &StepTwoAlgebra,
    q: &Q,
    t: &DVector<f64>,
) -> Result<f64, AlgebraError> {
    let j = j_matrix(g, q, t)?;
    let scale = (q.gram() * t).dot(t);
    let mut m2 = &j.matrix * &j.matrix;
    for i in 0..g.m() {
        m2[(i, i)] += scale;
    }
    Ok(m2.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Orthonormal basis of `Ker(ad_x)^perp` in the first layer, one column per
/// dimension: the row space of the adjoint matrix.
pub fn kernel_complement(g: &StepTwoAlgebra, x: &DVector<f64>) -> Result<DMatrix<f64>, AlgebraError> {
    let ad = ad_matrix(g, x)?;
    Ok(row_space_basis(&ad.matrix))
}

/// Orthonormal basis of `span { J_{T_a} x : a = 1..p }`; as a subspace this
/// equals `Ker(ad_x)^perp` for any positive-definite vertical metric.
pub fn j_image(
    g: &StepTwoAlgebra,
    q: &VerticalMetric,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>, AlgebraError> {
    if x.len() != g.m() {
        return Err(AlgebraError::DimensionMismatch {
            context: format!("j_image needs a length-{} vector, got {}", g.m(), x.len()),
        });
    }
    let mut cols = DMatrix::zeros(g.m(), g.p());
    for a in 0..g.p() {
        let mut e = DVector::zeros(g.p());
        e[a] = 1.0;
        let w = q.gram() * &e;
        cols.set_column(a, &(g.weighted_op(&w) * x));
    }
    Ok(column_space_basis(&cols))
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn column_space_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("svd with u");
    let cut = tol::rank_tolerance(svd.singular_values.amax());
    let r = svd.singular_values.iter().filter(|&&s| s > cut).count();
    u.columns(0, r).into_owned()
}

/// Orthonormal basis (as columns) of the row space of `m`.
pub fn row_space_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), 0);
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("svd with v_t");
    let cut = tol::rank_tolerance(svd.singular_values.amax());
    let r = svd.singular_values.iter().filter(|&&s| s > cut).count();
    v_t.rows(0, r).transpose()
}

/// Largest principal angle gap between two orthonormal column spans,
/// measured as `|| P1 - P2 ||_op` of the orthogonal projectors.
pub fn subspace_gap(u1: &DMatrix<f64>, u2: &DMatrix<f64>) -> f64 {
    let p1 = u1 * u1.transpose();
    let p2 = u2 * u2.transpose();
    singular_values(&(p1 - p2)).first().copied().unwrap_or(0.0)
}
