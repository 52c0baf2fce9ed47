//! The deviation solvers.
//!
//! `delta(G, Q)` is the supremum over the vertical unit sphere of
//! `||J_T^2 + Id||_HS / sqrt(m)`. Substituting `t = L^{-T} u` with `Q = L L^T`
//! turns the feasible set into the Euclidean sphere, and since the J matrix
//! depends on `t` only through `Q t = L u`, the objective
//! `phi(u) = || C(L u)^2 + Id ||_HS^2` is a smooth even quartic on the sphere.
//! The inner solver runs multistart projected-gradient ascent with the
//! analytic gradient of `tr((K^2 + I)^2)`.
//!
//! `delta(G)` minimizes the inner value over positive-definite metrics
//! parametrized by their Cholesky factor with log-parametrized diagonal
//! (which already quotients the orthogonal gauge `M -> M A^{-1}`), using a
//! Nelder-Mead simplex plus a coordinate pattern polish; the outer objective
//! is a max and hence nonsmooth, so the search is derivative-free.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::{StepTwoAlgebra, VerticalForm, VerticalMetric, VerticalSemimetric};
use crate::optim;
use crate::tol;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DeviationError {
    #[error("null semimetric: rank 0")]
    NullSemimetric,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular matrix: {0}")]
    SingularMatrix(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Options for the inner sphere maximization.
#[derive(Debug, Clone)]
pub struct InnerOpts {
    /// Low-discrepancy starts, in addition to the coordinate directions.
    pub n_starts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for InnerOpts {
    fn default() -> Self {
        InnerOpts { n_starts: 32, max_iter: 400, grad_tol: tol::DEFAULT_GRAD_TOL, seed: 0 }
    }
}

/// Result of one inner maximization.
#[derive(Debug, Clone)]
pub struct DeviationResult {
    /// The deviation value `delta(G, Q)`.
    pub value: f64,
    /// Vertical coordinate vector attaining the maximum, normalized to
    /// `t^T Q t = 1`.
    pub witness_t: DVector<f64>,
    pub n_starts: usize,
    pub converged: bool,
    pub seed: u64,
    /// Iterations used by the winning start.
    pub iterations: usize,
}

/// Shared inner solve: maximize `||C(A u)^2 + I||_HS^2` over the unit sphere
/// in `u`-space and map the winner back through `t = B u`.
fn solve_inner(
    g: &StepTwoAlgebra,
    a_map: &DMatrix<f64>,
    b_map: &DMatrix<f64>,
    opts: &InnerOpts,
) -> DeviationResult {
    let m = g.m();
    let d = a_map.ncols();
    let eye = DMatrix::<f64>::identity(m, m);

    let fg = |u: &DVector<f64>| {
        let w = a_map * u;
        let k = g.weighted_op(&w);
        let k2 = &k * &k;
        let s = &k2 + &eye;
        let f = s.iter().map(|x| x * x).sum::<f64>();
        // d phi / d w_a = 4 tr((K^3 + K) C_a)
        let k3k = &k2 * &k + &k;
        let grad_w = g.trace_against_ops(&k3k) * 4.0;
        (f, a_map.transpose() * grad_w)
    };

    let mut starts: Vec<DVector<f64>> = Vec::with_capacity(d + opts.n_starts);
    for i in 0..d {
        let mut e = DVector::zeros(d);
        e[i] = 1.0;
        starts.push(e);
    }
    starts.extend(optim::halton_sphere_points(d, opts.n_starts));

    let runs: Vec<(usize, optim::SphereAscent)> = starts
        .par_iter()
        .enumerate()
        .map(|(idx, s)| (idx, optim::maximize_on_sphere(s, fg, opts.max_iter, opts.grad_tol)))
        .collect();

    // deterministic reduction: strictly larger value wins, ties keep the
    // earliest start index, so the outcome is schedule-independent
    let best = runs
        .iter()
        .min_by(|(ia, ra), (ib, rb)| {
            rb.value
                .partial_cmp(&ra.value)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ia.cmp(ib))
        })
        .expect("at least one start");

    let phi = best.1.value.max(0.0);
    DeviationResult {
        value: phi.sqrt() / (m as f64).sqrt(),
        witness_t: b_map * &best.1.x,
        n_starts: starts.len(),
        converged: best.1.converged,
        seed: opts.seed,
        iterations: best.1.iterations,
    }
}

/// `delta(G, Q)` for a positive-definite vertical metric: a certified-from-
/// below approximation of the supremum over the vertical unit sphere.
pub fn deviation_given_metric(
    g: &StepTwoAlgebra,
    q: &VerticalMetric,
    opts: &InnerOpts,
) -> Result<DeviationResult, DeviationError> {
    if q.dim() != g.p() {
        return Err(DeviationError::DimensionMismatch(format!(
            "metric is {}x{} but p = {}",
            q.dim(),
            q.dim(),
            g.p()
        )));
    }
    let l = q.cholesky_lower().clone();
    // t = L^{-T} u keeps t^T Q t = |u|^2 = 1 and Q t = L u
    let b_map = l
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(g.p(), g.p()))
        .ok_or_else(|| DeviationError::SingularMatrix("Cholesky factor not invertible".into()))?;
    Ok(solve_inner(g, &l, &b_map, opts))
}

/// Deviation for a positive-semidefinite vertical form. The J matrix depends
/// on `t` only through `Q t`, so the objective is constant along the null
/// space; the maximization runs on the rank-`r` reduced sphere. Agrees with
/// [`deviation_given_metric`] whenever `Q` is positive definite.
pub fn deviation_given_semimetric(
    g: &StepTwoAlgebra,
    q: &VerticalSemimetric,
    opts: &InnerOpts,
) -> Result<DeviationResult, DeviationError> {
    if q.dim() != g.p() {
        return Err(DeviationError::DimensionMismatch(format!(
            "semimetric is {}x{} but p = {}",
            q.dim(),
            q.dim(),
            g.p()
        )));
    }
    let r = q.rank();
    if r == 0 {
        return Err(DeviationError::NullSemimetric);
    }
    let basis = q.range_basis();
    let evals = q.positive_eigenvalues();
    let mut a_map = DMatrix::zeros(g.p(), r);
    let mut b_map = DMatrix::zeros(g.p(), r);
    for c in 0..r {
        let col = basis.column(c);
        let s = evals[c].sqrt();
        a_map.set_column(c, &(col * s));
        b_map.set_column(c, &(col / s));
    }
    Ok(solve_inner(g, &a_map, &b_map, opts))
}

/// Options for the outer minimization over vertical metrics.
#[derive(Debug, Clone)]
pub struct OuterOpts {
    pub outer_iters: usize,
    pub restarts: usize,
    pub simplex_tol: f64,
    /// Inner options for the final evaluation at the best metric found.
    pub inner: InnerOpts,
    /// Inner options used while searching; `None` derives a cheaper profile
    /// from `inner`. The reported value always comes from a full solve.
    pub search_inner: Option<InnerOpts>,
    /// Additional starting metrics (for instance a family's known optimum).
    pub initial_metrics: Vec<DMatrix<f64>>,
    /// Finish with a coordinate pattern search below the simplex tolerance.
    pub polish: bool,
}

impl Default for OuterOpts {
    fn default() -> Self {
        OuterOpts {
            outer_iters: 400,
            restarts: 3,
            simplex_tol: tol::DEFAULT_SIMPLEX_TOL,
            inner: InnerOpts::default(),
            search_inner: None,
            initial_metrics: Vec::new(),
            polish: true,
        }
    }
}

impl OuterOpts {
    fn search_profile(&self) -> InnerOpts {
        self.search_inner.clone().unwrap_or(InnerOpts {
            n_starts: (self.inner.n_starts / 4).max(4),
            max_iter: self.inner.max_iter.min(150),
            grad_tol: self.inner.grad_tol.max(1e-7),
            seed: self.inner.seed,
        })
    }
}

/// Result of the outer metric search: an upper bound for `delta(G)`.
#[derive(Debug, Clone)]
pub struct MetricSearchResult {
    pub value: f64,
    pub q_best: VerticalMetric,
    /// Inner solve at the best metric, with the full inner options.
    pub inner: DeviationResult,
    /// Running best value after each outer iteration; nonincreasing.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

fn theta_dim(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Lower-triangular Cholesky factor from the search coordinates:
/// log-parametrized diagonal first, then the strict lower triangle row-major.
fn theta_to_lower(p: usize, theta: &DVector<f64>) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(p, p);
    for i in 0..p {
        l[(i, i)] = theta[i].clamp(-120.0, 120.0).exp();
    }
    let mut idx = p;
    for i in 1..p {
        for j in 0..i {
            l[(i, j)] = theta[idx];
            idx += 1;
        }
    }
    l
}

fn lower_to_theta(l: &DMatrix<f64>) -> DVector<f64> {
    let p = l.nrows();
    let mut theta = DVector::zeros(theta_dim(p));
    for i in 0..p {
        theta[i] = l[(i, i)].max(1e-300).ln();
    }
    let mut idx = p;
    for i in 1..p {
        for j in 0..i {
            theta[idx] = l[(i, j)];
            idx += 1;
        }
    }
    theta
}

/// Minimizes `Q -> delta(G, Q)` over positive-definite vertical metrics.
///
/// Starting points are the identity, the scaled identities `Q = s Id` for
/// `s in {1/4, 4}`, and any caller-provided metrics. Each start runs an
/// independent Nelder-Mead chain with restarts (chains execute in parallel
/// and reduce deterministically), followed by a coordinate pattern polish;
/// the reported value is a fresh full inner solve at the best metric found.
pub fn optimize_metric(g: &StepTwoAlgebra, opts: &OuterOpts) -> MetricSearchResult {
    let p = g.p();
    let search_inner = opts.search_profile();
    let eval_count = std::sync::atomic::AtomicUsize::new(0);
    let objective = |theta: &DVector<f64>| -> f64 {
        eval_count.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let l = theta_to_lower(p, theta);
        // Q = L L^T is positive definite by construction; solve directly on L
        let b_map = match l.transpose().solve_upper_triangular(&DMatrix::identity(p, p)) {
            Some(b) => b,
            None => return f64::INFINITY,
        };
        solve_inner(g, &l, &b_map, &search_inner).value
    };

    let mut thetas: Vec<DVector<f64>> = vec![
        DVector::zeros(theta_dim(p)),
        DVector::from_fn(theta_dim(p), |i, _| if i < p { 0.25f64.ln() / 2.0 } else { 0.0 }),
        DVector::from_fn(theta_dim(p), |i, _| if i < p { 4.0f64.ln() / 2.0 } else { 0.0 }),
    ];
    for q0 in &opts.initial_metrics {
        if let Ok(vm) = VerticalMetric::new(q0.clone()) {
            thetas.push(lower_to_theta(vm.cholesky_lower()));
        }
    }

    struct Chain {
        theta: DVector<f64>,
        value: f64,
        trace: Vec<f64>,
        converged: bool,
    }
    let chains: Vec<Chain> = thetas
        .par_iter()
        .map(|theta0| {
            let mut x = theta0.clone();
            let mut fx = objective(&x);
            let mut trace = vec![fx];
            let mut converged = false;
            let mut step = 0.1;
            for _ in 0..opts.restarts.max(1) {
                let res = optim::nelder_mead(&objective, &x, step, opts.outer_iters, opts.simplex_tol);
                converged |= res.converged;
                trace.extend(res.history.iter().copied());
                let improvement = fx - res.value;
                if res.value < fx {
                    x = res.x;
                    fx = res.value;
                }
                // a restart that changed nothing will not change anything
                // at a smaller scale either
                if improvement <= 1e-9 * fx.abs().max(1.0) {
                    break;
                }
                step *= 0.25;
            }
            Chain { theta: x, value: fx, trace, converged }
        })
        .collect();

    let mut trace: Vec<f64> = Vec::new();
    for chain in &chains {
        for &v in &chain.trace {
            trace.push(v.min(*trace.last().unwrap_or(&f64::INFINITY)));
        }
    }
    let best_chain = chains
        .iter()
        .min_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal))
        .expect("at least one chain");
    let mut best_theta = best_chain.theta.clone();
    let mut best_value = best_chain.value;
    let converged = best_chain.converged;

    if opts.polish {
        // in high dimension the deep polish buys nothing the simplex missed
        let hmin = if theta_dim(p) <= 12 { 1e-8 } else { 1e-4 };
        let (x, fx, _) = optim::pattern_polish(&objective, &best_theta, best_value, 0.02, hmin);
        if fx < best_value {
            best_value = fx;
            best_theta = x;
        }
        trace.push(best_value);
    }

    let l_best = theta_to_lower(p, &best_theta);
    let q_best = VerticalMetric::new(&l_best * l_best.transpose())
        .expect("Cholesky parametrization yields a positive-definite Gram matrix");
    let inner = deviation_given_metric(g, &q_best, &opts.inner)
        .expect("dimensions agree by construction");

    MetricSearchResult {
        value: inner.value,
        q_best,
        inner,
        trace,
        evaluations: eval_count.into_inner(),
        converged,
    }
}

/// The scalar statistics of the product-group minimax argument:
/// `G_q(M, u) = sum_i k_i (M u)_i^q`, `F = 1 - (2/n) G_2 + (1/n) G_4`,
/// and `B = M^T K M` with `K = diag(k)`.
#[derive(Debug, Clone)]
pub struct ProductLemmaStats {
    pub kvec: Vec<usize>,
    pub m_matrix: DMatrix<f64>,
    pub u: DVector<f64>,
    pub f: f64,
    pub g2: f64,
    pub g4: f64,
    pub b: DMatrix<f64>,
}

pub fn product_lemma_stats(
    kvec: &[usize],
    m_matrix: &DMatrix<f64>,
    u: &DVector<f64>,
) -> Result<ProductLemmaStats, DeviationError> {
    let l = kvec.len();
    if l == 0 || kvec.iter().any(|&k| k == 0) {
        return Err(DeviationError::InvalidInput("kvec must be nonempty and positive".into()));
    }
    if m_matrix.nrows() != l || m_matrix.ncols() != l || u.len() != l {
        return Err(DeviationError::DimensionMismatch(format!(
            "need an {l}x{l} matrix and a length-{l} unit vector"
        )));
    }
    if (u.norm() - 1.0).abs() > 1e-9 {
        return Err(DeviationError::InvalidInput(format!("u must be a unit vector, |u| = {}", u.norm())));
    }
    let sv = crate::algebra::singular_values(m_matrix);
    if sv.last().copied().unwrap_or(0.0) <= tol::rank_tolerance(sv.first().copied().unwrap_or(0.0)) {
        return Err(DeviationError::SingularMatrix("M must be invertible".into()));
    }
    let mu = m_matrix * u;
    let n: usize = kvec.iter().sum();
    let g2: f64 = kvec.iter().zip(mu.iter()).map(|(&k, &x)| k as f64 * x * x).sum();
    let g4: f64 = kvec.iter().zip(mu.iter()).map(|(&k, &x)| k as f64 * x.powi(4)).sum();
    let f = 1.0 - 2.0 / n as f64 * g2 + g4 / n as f64;
    let kdiag = DMatrix::from_diagonal(&DVector::from_iterator(l, kvec.iter().map(|&k| k as f64)));
    let b = m_matrix.transpose() * kdiag * m_matrix;
    Ok(ProductLemmaStats {
        kvec: kvec.to_vec(),
        m_matrix: m_matrix.clone(),
        u: u.clone(),
        f,
        g2,
        g4,
        b,
    })
}
