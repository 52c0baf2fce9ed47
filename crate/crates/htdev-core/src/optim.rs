//! Small dense optimizers used by the deviation and rigidity solvers:
//! multistart projected-gradient ascent on spheres, a subgradient variant for
//! singular-value objectives, a Nelder-Mead simplex search, and a pattern
//! polish for finishing outer minimizations.

use nalgebra::DVector;

const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical-inverse (van der Corput) value of `index` in the given base.
pub fn halton(mut index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Deterministic low-discrepancy points on the unit sphere of dimension `dim`,
/// taken from a Halton sequence pushed through Box-Muller pairs.
pub fn halton_sphere_points(dim: usize, n: usize) -> Vec<DVector<f64>> {
    assert!(dim >= 1, "sphere dimension must be positive");
    let n_pairs = dim.div_ceil(2);
    let mut out = Vec::with_capacity(n);
    let mut index = 1;
    while out.len() < n {
        let mut coords = Vec::with_capacity(2 * n_pairs);
        for pair in 0..n_pairs {
            let x = halton(index, PRIMES[(2 * pair) % PRIMES.len()]).max(1e-16);
            let y = halton(index, PRIMES[(2 * pair + 1) % PRIMES.len()]);
            let r = (-2.0 * x.ln()).sqrt();
            coords.push(r * (std::f64::consts::TAU * y).cos());
            coords.push(r * (std::f64::consts::TAU * y).sin());
        }
        coords.truncate(dim);
        let v = DVector::from_vec(coords);
        let norm = v.norm();
        if norm > 1e-12 {
            out.push(v / norm);
        }
        index += 1;
    }
    out
}

#[derive(Debug, Clone)]
pub struct SphereAscent {
    pub x: DVector<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Projected gradient ascent on the unit sphere with backtracking line search.
///
/// `fg` returns the objective and its Euclidean gradient; the Riemannian
/// gradient is the tangential projection and the retraction is renormalization.
pub fn maximize_on_sphere<F>(x0: &DVector<f64>, fg: F, max_iter: usize, grad_tol: f64) -> SphereAscent
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut x = x0.normalize();
    let (mut fx, mut gx) = fg(&x);
    let mut step: f64 = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let radial = x.dot(&gx);
        let tangent = &gx - &x * radial;
        let tn2 = tangent.norm_squared();
        if tn2.sqrt() <= grad_tol * fx.abs().max(1.0) {
            converged = true;
            break;
        }
        // backtrack until the Armijo condition accepts strictly; the start
        // is floored so one bad iteration cannot freeze later ones
        let mut eta = (step * 4.0).clamp(1e-6, 1e6);
        let mut accepted = None;
        while eta > 1e-18 {
            let trial = (&x + &tangent * eta).normalize();
            let (ft, gt) = fg(&trial);
            if ft > fx + 1e-4 * eta * tn2 {
                accepted = Some((trial, ft, gt));
                break;
            }
            eta *= 0.5;
        }
        let Some((mut tx, mut tf, mut tg)) = accepted else {
            converged = true;
            break;
        };
        // refine to a dyadic-local maximum in the step length: Armijo alone
        // can accept a marginal overshoot and zigzag across a ridge
        let mut grew = false;
        while eta < 1e6 {
            let wide = (&x + &tangent * (eta * 2.0)).normalize();
            let (fw, gw) = fg(&wide);
            if fw <= tf {
                break;
            }
            eta *= 2.0;
            tx = wide;
            tf = fw;
            tg = gw;
            grew = true;
        }
        while !grew && eta > 1e-18 {
            let narrow = (&x + &tangent * (eta * 0.5)).normalize();
            let (fn_, gn) = fg(&narrow);
            if fn_ <= tf {
                break;
            }
            eta *= 0.5;
            tx = narrow;
            tf = fn_;
            tg = gn;
        }
        x = tx;
        fx = tf;
        gx = tg;
        step = eta;
    }
    SphereAscent { x, value: fx, converged, iterations }
}

/// Subgradient descent on the unit sphere with diminishing steps.
///
/// Suitable for singular-value objectives, which are nonsmooth at crossings;
/// the best point visited is returned, not the last iterate.
pub fn minimize_on_sphere_subgradient<F>(
    x0: &DVector<f64>,
    fg: F,
    max_iter: usize,
    step0: f64,
) -> SphereAscent
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut x = x0.normalize();
    let (mut best_f, g0) = fg(&x);
    let mut best_x = x.clone();
    let mut g = g0;
    for it in 0..max_iter {
        let radial = x.dot(&g);
        let tangent = &g - &x * radial;
        let tn = tangent.norm();
        if tn <= 1e-14 {
            break;
        }
        let eta = step0 / ((it + 1) as f64).sqrt();
        x = (&x - &tangent * (eta / tn)).normalize();
        let (fx, gx) = fg(&x);
        g = gx;
        if fx < best_f {
            best_f = fx;
            best_x = x.clone();
        }
    }
    SphereAscent { x: best_x, value: best_f, converged: true, iterations: max_iter }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub converged: bool,
    /// Best objective value seen after each accepted iteration.
    pub history: Vec<f64>,
}

/// Nelder-Mead simplex minimization with the standard reflect / expand /
/// contract / shrink moves. Stops when the simplex diameter falls below
/// `xtol` or after `max_iter` iterations.
pub fn nelder_mead<F>(
    f: F,
    x0: &DVector<f64>,
    initial_step: f64,
    max_iter: usize,
    xtol: f64,
) -> SimplexResult
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = x0.len();
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.clone(), f(x0)));
    for i in 0..n {
        let mut xi = x0.clone();
        xi[i] += initial_step;
        let fi = f(&xi);
        simplex.push((xi, fi));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut history = Vec::with_capacity(max_iter);
    let mut converged = false;

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        history.push(simplex[0].1);

        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| (x - &simplex[0].0).amax())
            .fold(0.0f64, f64::max);
        if diameter <= xtol {
            converged = true;
            break;
        }

        let mut centroid = DVector::zeros(n);
        for (x, _) in &simplex[..n] {
            centroid += x;
        }
        centroid /= n as f64;

        let worst = simplex[n].clone();
        let reflected = &centroid + (&centroid - &worst.0) * alpha;
        let fr = f(&reflected);

        if fr < simplex[0].1 {
            let expanded = &centroid + (&centroid - &worst.0) * gamma;
            let fe = f(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 {
                &centroid + (&reflected - &centroid) * rho
            } else {
                &centroid + (&worst.0 - &centroid) * rho
            };
            let fc = f(&contracted);
            if fc < worst.1.min(fr) {
                simplex[n] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    entry.0 = &best + (&entry.0 - &best) * sigma;
                    entry.1 = f(&entry.0);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    history.push(simplex[0].1);
    SimplexResult { x: simplex[0].0.clone(), value: simplex[0].1, converged, history }
}

/// Coordinate pattern search that keeps halving the step until `hmin`.
/// Used to finish an outer search well below the simplex tolerance.
pub fn pattern_polish<F>(
    f: F,
    x0: &DVector<f64>,
    f0: f64,
    h0: f64,
    hmin: f64,
) -> (DVector<f64>, f64, usize)
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut x = x0.clone();
    let mut fx = f0;
    let mut h = h0;
    let mut evals = 0;
    while h >= hmin {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut trial = x.clone();
                trial[i] += dir * h;
                let ft = f(&trial);
                evals += 1;
                if ft < fx - 1e-15 {
                    x = trial;
                    fx = ft;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (x, fx, evals)
}

/// SplitMix64 step, used to derive per-instance seeds from a master seed.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
