//! Constructive submersions onto the first Heisenberg group, verification of
//! the four defining conditions, the degenerating metric family
//! `g_{v,eps} = eps^2 g_{V2} (+) g_{W2}`, and the resulting upper-bound
//! pipeline for the deviation.
//!
//! The construction picks an orthonormal pair `(X_j, X_k)` with nonzero
//! bracket, sends it to the generators `(U, V)` of the target, kills the
//! orthocomplement, and extends to the second layer through a Moore-Penrose
//! right inverse of the structure matrix in a vertical basis completed from
//! `T_1 = [X_j, X_k]`. The extension is a genuine homomorphism exactly when
//! the pair indicator lies in the column space of the structure matrix;
//! `verify_submersion` reports the residual either way.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::{
    column_space_basis, numerical_rank, singular_values, MetricError, StepTwoAlgebra,
    VerticalForm, VerticalMetric,
};
use crate::deviation::{deviation_given_metric, DeviationError, InnerOpts};
use crate::tol;
use crate::zoo;

#[derive(Debug, Clone, Error)]
pub enum SubmersionError {
    #[error("pair ({j}, {k}) does not generate: bracket is zero")]
    PairDoesNotGenerate { j: usize, k: usize },
    #[error("no pair with nonzero bracket exists")]
    NoNonzeroBracket,
    #[error("epsilon must be positive, got {0}")]
    EpsilonNotPositive(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Deviation(#[from] DeviationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairChoice {
    /// First pair in lexicographic order with bracket norm above tolerance.
    Auto,
    Pair(usize, usize),
}

/// Block description of a candidate stratified submersion `F : G -> K`.
#[derive(Debug, Clone)]
pub struct SubmersionMap {
    pub target: StepTwoAlgebra,
    /// First-layer action, `dim w1 x m`.
    pub f1: DMatrix<f64>,
    /// Second-layer action, `dim w2 x p`.
    pub f2: DMatrix<f64>,
    /// Orthonormal basis of `W = Ker(F1)^perp`.
    pub w_basis: DMatrix<f64>,
    /// Orthonormal basis of `V = Ker(F1)`.
    pub v_basis: DMatrix<f64>,
    /// Orthonormal basis of `W2 = [W, W]` in vertical coordinates.
    pub w2_basis: DMatrix<f64>,
    /// Orthonormal basis of `V2 = span{[x, y] : y in V}`.
    pub v2_basis: DMatrix<f64>,
    /// The generating pair, when the map came from the pair construction.
    pub pair: Option<(usize, usize)>,
    /// Whether `v2 = V2 (+) W2` holds as a direct sum.
    pub splitting_is_direct: bool,
}

fn bracket_norm(g: &StepTwoAlgebra, j: usize, k: usize) -> f64 {
    (0..g.p()).map(|a| g.structure_constant(j, k, a).powi(2)).sum::<f64>().sqrt()
}

fn resolve_pair(g: &StepTwoAlgebra, choice: PairChoice) -> Result<(usize, usize), SubmersionError> {
    let scale = g
        .brackets()
        .iter()
        .map(|b| b.coeffs.norm())
        .fold(0.0f64, f64::max);
    match choice {
        PairChoice::Pair(j, k) => {
            if j >= k || k >= g.m() {
                return Err(SubmersionError::InvalidParameter(format!(
                    "pair ({j}, {k}) out of range for m = {}",
                    g.m()
                )));
            }
            if bracket_norm(g, j, k) <= 1e-12 * scale.max(1.0) {
                return Err(SubmersionError::PairDoesNotGenerate { j, k });
            }
            Ok((j, k))
        }
        PairChoice::Auto => {
            for j in 0..g.m() {
                for k in (j + 1)..g.m() {
                    if bracket_norm(g, j, k) > 1e-12 * scale.max(1.0) {
                        return Ok((j, k));
                    }
                }
            }
            Err(SubmersionError::NoNonzeroBracket)
        }
    }
}

/// Completes `first` (kept verbatim) to a basis of `R^p` by Gram-Schmidt
/// against the standard coordinate order.
fn complete_basis(first: &DVector<f64>) -> DMatrix<f64> {
    let p = first.len();
    let mut cols: Vec<DVector<f64>> = vec![first.clone()];
    let mut ortho: Vec<DVector<f64>> = vec![first.normalize()];
    for a in 0..p {
        if cols.len() == p {
            break;
        }
        let mut e = DVector::zeros(p);
        e[a] = 1.0;
        let mut w = e.clone();
        for o in &ortho {
            w -= o * o.dot(&e);
        }
        if w.norm() > 1e-9 {
            ortho.push(w.normalize());
            cols.push(e);
        }
    }
    let mut s = DMatrix::zeros(p, p);
    for (i, c) in cols.iter().enumerate() {
        // keep T_1 = first; later columns are the orthonormalized completions
        if i == 0 {
            s.set_column(0, c);
        } else {
            s.set_column(i, &ortho[i]);
        }
    }
    s
}

/// Builds the pair submersion `G -> H^1`: `F1 X_j = U`, `F1 X_k = V`, zero on
/// the orthocomplement, with the second layer extended through the
/// pseudoinverse of the structure matrix in the completed vertical basis.
pub fn build_submersion_to_h1(
    g: &StepTwoAlgebra,
    choice: PairChoice,
) -> Result<SubmersionMap, SubmersionError> {
    let (j, k) = resolve_pair(g, choice)?;
    let m = g.m();
    let p = g.p();
    let target = zoo::heisenberg(1).expect("H^1 exists");

    let mut f1 = DMatrix::zeros(2, m);
    f1[(0, j)] = 1.0;
    f1[(1, k)] = 1.0;

    let c_pair = DVector::from_iterator(p, (0..p).map(|a| g.structure_constant(j, k, a)));
    let basis = complete_basis(&c_pair);
    let basis_inv = basis
        .clone()
        .try_inverse()
        .expect("completed vertical basis is invertible");

    // structure matrix in the completed basis: rows transform by S^{-1}
    let c_mat = g.structure_matrix();
    let c_tilde = &c_mat * basis_inv.transpose();
    let n_pairs = c_mat.nrows();
    let mut e = DVector::zeros(n_pairs);
    e[crate::algebra::pair_index(m, j, k)] = 1.0;
    // minimum-norm least-squares solution = pseudoinverse column
    let f_tilde = c_tilde
        .clone()
        .svd(true, true)
        .solve(&e, tol::rank_tolerance(1.0))
        .map_err(|msg| SubmersionError::InvalidParameter(msg.to_string()))?;
    let f2_row = basis_inv.transpose() * f_tilde;
    let mut f2 = DMatrix::zeros(1, p);
    f2.set_row(0, &f2_row.transpose());

    let mut w_basis = DMatrix::zeros(m, 2);
    w_basis[(j, 0)] = 1.0;
    w_basis[(k, 1)] = 1.0;
    let mut v_basis = DMatrix::zeros(m, m - 2);
    let mut col = 0;
    for i in 0..m {
        if i != j && i != k {
            v_basis[(i, col)] = 1.0;
            col += 1;
        }
    }

    let w2_basis = {
        let mut w2 = DMatrix::zeros(p, 1);
        w2.set_column(0, &c_pair.normalize());
        w2
    };
    // V2 = span of all brackets with a factor in V = every pair except (j, k)
    let mut others = Vec::new();
    for b in g.brackets() {
        if (b.j, b.k) != (j, k) {
            others.push(b.coeffs.clone());
        }
    }
    let v2_basis = if others.is_empty() {
        DMatrix::zeros(p, 0)
    } else {
        let mut stacked = DMatrix::zeros(p, others.len());
        for (i, c) in others.iter().enumerate() {
            stacked.set_column(i, c);
        }
        column_space_basis(&stacked)
    };
    let stacked_rank = {
        let mut all = DMatrix::zeros(p, v2_basis.ncols() + 1);
        for i in 0..v2_basis.ncols() {
            all.set_column(i, &v2_basis.column(i).into_owned());
        }
        all.set_column(v2_basis.ncols(), &w2_basis.column(0).into_owned());
        numerical_rank(&all)
    };
    let splitting_is_direct = v2_basis.ncols() + 1 == p && stacked_rank == p;

    Ok(SubmersionMap {
        target,
        f1,
        f2,
        w_basis,
        v_basis,
        w2_basis,
        v2_basis,
        pair: Some((j, k)),
        splitting_is_direct,
    })
}

/// One verified condition with its numerical residual.
#[derive(Debug, Clone)]
pub struct ConditionCheck {
    pub pass: bool,
    pub residual: f64,
    pub detail: String,
}

/// Per-condition report for a candidate submersion.
#[derive(Debug, Clone)]
pub struct SubmersionReport {
    /// (1) bracket commutation `F2 [X_j, X_k] = [F1 X_j, F1 X_k]`.
    pub homomorphism: ConditionCheck,
    /// (2) surjectivity of both layer actions.
    pub surjective: ConditionCheck,
    /// (3) `F1` restricted to `W` is an isometry.
    pub isometry_on_w: ConditionCheck,
    /// (4) `F2 : W2 -> w2` is an isomorphism.
    pub w2_isomorphism: ConditionCheck,
    /// The direct-sum check `v2 = V2 (+) W2` (informational).
    pub direct_sum: ConditionCheck,
}

impl SubmersionReport {
    pub fn all_pass(&self) -> bool {
        self.homomorphism.pass && self.surjective.pass && self.isometry_on_w.pass && self.w2_isomorphism.pass
    }

    pub fn conditions(&self) -> [(&'static str, &ConditionCheck); 4] {
        [
            ("homomorphism", &self.homomorphism),
            ("surjectivity", &self.surjective),
            ("isometry on W", &self.isometry_on_w),
            ("W2 isomorphism", &self.w2_isomorphism),
        ]
    }
}

const CONDITION_TOL: f64 = 1e-10;

/// Checks the four defining conditions of a stratified sub-Riemannian
/// submersion, reporting residuals instead of failing.
pub fn verify_submersion(f: &SubmersionMap, g: &StepTwoAlgebra) -> SubmersionReport {
    let m = g.m();
    let w1 = f.target.m();
    let w2 = f.target.p();

    // (1) homomorphism residual over every pair
    let mut hom_res: f64 = 0.0;
    for j in 0..m {
        for k in (j + 1)..m {
            let c_jk = DVector::from_iterator(g.p(), (0..g.p()).map(|a| g.structure_constant(j, k, a)));
            let lhs = &f.f2 * c_jk;
            let rhs = f.target.bracket_of(&f.f1.column(j).into_owned(), &f.f1.column(k).into_owned());
            hom_res = hom_res.max((lhs - rhs).amax());
        }
    }
    let homomorphism = ConditionCheck {
        pass: hom_res <= CONDITION_TOL,
        residual: hom_res,
        detail: format!("max bracket-commutation residual {hom_res:.3e}"),
    };

    // (2) surjectivity of F1 and F2
    let r1 = numerical_rank(&f.f1);
    let r2 = numerical_rank(&f.f2);
    let surjective = ConditionCheck {
        pass: r1 == w1 && r2 == w2,
        residual: 0.0,
        detail: format!("rank F1 = {r1}/{w1}, rank F2 = {r2}/{w2}"),
    };

    // (3) F1 restricted to W is an isometry
    let iso_res = if f.w_basis.ncols() == 0 {
        0.0
    } else {
        singular_values(&(&f.f1 * &f.w_basis))
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0f64, f64::max)
    };
    let isometry_on_w = ConditionCheck {
        pass: iso_res <= CONDITION_TOL,
        residual: iso_res,
        detail: format!("max |singular value - 1| of F1|_W is {iso_res:.3e}"),
    };

    // (4) F2 : W2 -> w2 is an isomorphism, with W2 = [W, W] recomputed
    let w2_span = {
        let cols = f.w_basis.ncols();
        let mut brackets = Vec::new();
        for a in 0..cols {
            for b in (a + 1)..cols {
                brackets.push(g.bracket_of(
                    &f.w_basis.column(a).into_owned(),
                    &f.w_basis.column(b).into_owned(),
                ));
            }
        }
        if brackets.is_empty() {
            DMatrix::zeros(g.p(), 0)
        } else {
            let mut stacked = DMatrix::zeros(g.p(), brackets.len());
            for (i, c) in brackets.iter().enumerate() {
                stacked.set_column(i, c);
            }
            column_space_basis(&stacked)
        }
    };
    let dim_w2 = w2_span.ncols();
    let image_rank = if dim_w2 == 0 { 0 } else { numerical_rank(&(&f.f2 * &w2_span)) };
    let w2_isomorphism = ConditionCheck {
        pass: dim_w2 == w2 && image_rank == w2,
        residual: 0.0,
        detail: format!("dim W2 = {dim_w2}, dim w2 = {w2}, rank F2|_W2 = {image_rank}"),
    };

    // direct sum v2 = V2 (+) W2
    let dim_v2 = f.v2_basis.ncols();
    let stacked_rank = {
        let total = dim_v2 + f.w2_basis.ncols();
        if total == 0 {
            0
        } else {
            let mut all = DMatrix::zeros(g.p(), total);
            for i in 0..dim_v2 {
                all.set_column(i, &f.v2_basis.column(i).into_owned());
            }
            for i in 0..f.w2_basis.ncols() {
                all.set_column(dim_v2 + i, &f.w2_basis.column(i).into_owned());
            }
            numerical_rank(&all)
        }
    };
    let ds_ok = dim_v2 + f.w2_basis.ncols() == g.p() && stacked_rank == g.p();
    let direct_sum = ConditionCheck {
        pass: ds_ok,
        residual: 0.0,
        detail: format!(
            "dim V2 = {dim_v2}, dim W2 = {}, stacked rank = {stacked_rank}, p = {}",
            f.w2_basis.ncols(),
            g.p()
        ),
    };

    SubmersionReport { homomorphism, surjective, isometry_on_w, w2_isomorphism, direct_sum }
}

/// The displayed map `F : F_{2,2n} -> H^n` that satisfies conditions (1)-(3)
/// but not (4): its `W2` is the whole second layer of the free algebra.
pub fn counterexample_f22n_to_hn(
    n: usize,
) -> Result<(SubmersionMap, SubmersionReport), SubmersionError> {
    if n < 2 {
        return Err(SubmersionError::InvalidParameter("counterexample needs n >= 2".into()));
    }
    let g = zoo::free_step2(2 * n).map_err(|e| SubmersionError::InvalidParameter(e.to_string()))?;
    let target = zoo::heisenberg(n).map_err(|e| SubmersionError::InvalidParameter(e.to_string()))?;
    let m = 2 * n;
    let p = g.p();

    let f1 = DMatrix::identity(m, m);
    let mut f2 = DMatrix::zeros(1, p);
    for j in 0..n {
        f2[(0, crate::algebra::pair_index(m, j, n + j))] = 1.0;
    }
    let map = SubmersionMap {
        target,
        f1,
        f2,
        w_basis: DMatrix::identity(m, m),
        v_basis: DMatrix::zeros(m, 0),
        w2_basis: DMatrix::identity(p, p),
        v2_basis: DMatrix::zeros(p, 0),
        pair: None,
        splitting_is_direct: true,
    };
    let report = verify_submersion(&map, &g);
    Ok((map, report))
}

/// Assembles the Gram matrix of `g_{v,eps} = eps^2 g_{V2} (+) g_{W2}` in the
/// original vertical coordinates, where `g_{W2}` is the pullback of
/// `q_target` through `F2`.
///
/// When the bracket complement fails to split the second layer, the
/// orthogonal complement of `W2` is used in its place, so the family is
/// always defined.
pub fn epsilon_metric(
    f: &SubmersionMap,
    q_target: &VerticalMetric,
    q_v2: &VerticalMetric,
    eps: f64,
) -> Result<VerticalMetric, SubmersionError> {
    if !(eps > 0.0) {
        return Err(SubmersionError::EpsilonNotPositive(eps));
    }
    let p = f.f2.ncols();
    if q_target.dim() != f.target.p() {
        return Err(SubmersionError::DimensionMismatch(format!(
            "target metric is {}-dimensional, expected {}",
            q_target.dim(),
            f.target.p()
        )));
    }
    let complement = if f.splitting_is_direct {
        f.v2_basis.clone()
    } else {
        // orthogonal complement of W2
        let w2 = &f.w2_basis;
        let proj = DMatrix::identity(p, p) - w2 * w2.transpose();
        column_space_basis(&proj)
    };
    let dv = complement.ncols();
    let dw = f.w2_basis.ncols();
    if q_v2.dim() != dv {
        return Err(SubmersionError::DimensionMismatch(format!(
            "V2 metric is {}-dimensional, expected {dv}",
            q_v2.dim()
        )));
    }
    let mut basis = DMatrix::zeros(p, dv + dw);
    for i in 0..dv {
        basis.set_column(i, &complement.column(i).into_owned());
    }
    for i in 0..dw {
        basis.set_column(dv + i, &f.w2_basis.column(i).into_owned());
    }
    let basis_inv = basis
        .try_inverse()
        .ok_or_else(|| SubmersionError::DimensionMismatch("splitting basis is singular".into()))?;

    let mut block = DMatrix::zeros(p, p);
    for i in 0..dv {
        for jj in 0..dv {
            block[(i, jj)] = eps * eps * q_v2.gram()[(i, jj)];
        }
    }
    // pullback block: <w_a, w_b> = (F2 w_a)^T q_target (F2 w_b)
    let images = &f.f2 * &f.w2_basis;
    let pullback = images.transpose() * q_target.gram() * images;
    for i in 0..dw {
        for jj in 0..dw {
            block[(dv + i, dv + jj)] = pullback[(i, jj)];
        }
    }
    let q = basis_inv.transpose() * block * basis_inv;
    Ok(VerticalMetric::new(q)?)
}

/// Runs the full pipeline: build the pair submersion, pick the target scale
/// that best normalizes the limiting direction, place `g_{v,eps}` for each
/// epsilon, and measure the deviation. Returns `(eps, delta(G, g_{v,eps}))`.
pub fn bound_via_submersion(
    g: &StepTwoAlgebra,
    eps_list: &[f64],
    inner: &InnerOpts,
) -> Result<Vec<(f64, f64)>, SubmersionError> {
    if eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(SubmersionError::EpsilonNotPositive(
            eps_list.iter().copied().find(|&e| !(e > 0.0)).unwrap_or(0.0),
        ));
    }
    let map = build_submersion_to_h1(g, PairChoice::Auto)?;
    let (j, k) = map.pair.expect("pair construction");
    let c_pair = DVector::from_iterator(g.p(), (0..g.p()).map(|a| g.structure_constant(j, k, a)));
    let t_hat = c_pair.normalize();

    // scale the target metric so that the limiting one-parameter profile
    // sum_i (1 - s mu_i^2)^2 over the singular values of C(t_hat) is minimized
    let mu = singular_values(&g.weighted_op(&t_hat));
    let s2: f64 = mu.iter().map(|x| x * x).sum();
    let s4: f64 = mu.iter().map(|x| x.powi(4)).sum();
    let s_opt = if s4 > 0.0 { s2 / s4 } else { 1.0 };
    let gamma = (&map.f2 * &c_pair)[0];
    if gamma.abs() < 1e-14 {
        return Err(SubmersionError::InvalidParameter(
            "second-layer action vanishes on the generating bracket".into(),
        ));
    }
    let q_target =
        VerticalMetric::from_diagonal(&[s_opt * c_pair.norm_squared() / (gamma * gamma)])?;

    let dv = if map.splitting_is_direct { map.v2_basis.ncols() } else { g.p() - map.w2_basis.ncols() };
    let q_v2 = VerticalMetric::identity(dv);

    let mut out: Vec<(f64, f64)> = eps_list
        .par_iter()
        .map(|&eps| -> Result<(f64, f64), SubmersionError> {
            let q = epsilon_metric(&map, &q_target, &q_v2, eps)?;
            let r = deviation_given_metric(g, &q, inner)?;
            Ok((eps, r.value))
        })
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    Ok(out)
}
