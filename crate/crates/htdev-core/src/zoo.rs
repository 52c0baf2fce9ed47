//! Constructors for the named step-two group families, each paired with its
//! closed-form deviation value where one exists.
//!
//! Basis conventions: Heisenberg factors use the order `X_1..X_k, Y_1..Y_k`
//! with `[X_j, Y_j] = T`; products concatenate the factors' horizontal bases
//! in factor order, then the vertical bases, so the block structure of the J
//! operator stays visible. The quaternionic group uses the first-layer order
//! `(X, Z, Y, W)` so its J operators take their block form.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::algebra::{Bracket, StepTwoAlgebra};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ZooError {
    #[error("invalid family parameter: {0}")]
    InvalidParameter(String),
    #[error("product of an empty factor list")]
    EmptyProduct,
    #[error("random algebra generation exhausted {0} retries without a bracket-generating tensor")]
    RetryExhausted(usize),
    #[error("family has no closed-form deviation: {0}")]
    NoClosedForm(String),
    #[error("malformed family spec `{spec}`: {reason}")]
    ParseError { spec: String, reason: String },
}

/// Where a closed-form deviation value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Stated in the literature for this family.
    Paper,
    /// Obtained here by direct minimization over scaled metrics.
    Derived,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Paper => write!(f, "paper"),
            Provenance::Derived => write!(f, "derived"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm {
    pub value: f64,
    pub provenance: Provenance,
}

/// The `k`-th Heisenberg group `H^k`: rank `2k`, one vertical direction,
/// brackets `[X_j, Y_j] = T`.
pub fn heisenberg(k: usize) -> Result<StepTwoAlgebra, ZooError> {
    if k < 1 {
        return Err(ZooError::InvalidParameter("heisenberg needs k >= 1".into()));
    }
    let brackets = (0..k).map(|j| Bracket::new(j, k + j, vec![1.0])).collect();
    StepTwoAlgebra::from_brackets(2 * k, 1, brackets)
        .map_err(|e| ZooError::InvalidParameter(e.to_string()))
}

/// Anisotropic Heisenberg group `H^n(b)`: brackets `[X_j, Y_j] = b_j T`.
pub fn anisotropic_heisenberg(b: &[f64]) -> Result<StepTwoAlgebra, ZooError> {
    if b.is_empty() {
        return Err(ZooError::InvalidParameter("anisotropic needs at least one weight".into()));
    }
    if let Some(bad) = b.iter().find(|&&x| !(x > 0.0)) {
        return Err(ZooError::InvalidParameter(format!(
            "anisotropic weights must be positive, got {bad}"
        )));
    }
    let n = b.len();
    let brackets = b.iter().enumerate().map(|(j, &bj)| Bracket::new(j, n + j, vec![bj])).collect();
    StepTwoAlgebra::from_brackets(2 * n, 1, brackets)
        .map_err(|e| ZooError::InvalidParameter(e.to_string()))
}

/// Free step-two algebra of rank `m`: one vertical direction per pair.
pub fn free_step2(m: usize) -> Result<StepTwoAlgebra, ZooError> {
    if m < 2 {
        return Err(ZooError::InvalidParameter("free step-two needs m >= 2".into()));
    }
    let p = m * (m - 1) / 2;
    let mut brackets = Vec::with_capacity(p);
    let mut a = 0;
    for j in 0..m {
        for k in (j + 1)..m {
            let mut coeffs = vec![0.0; p];
            coeffs[a] = 1.0;
            brackets.push(Bracket::new(j, k, coeffs));
            a += 1;
        }
    }
    StepTwoAlgebra::from_brackets(m, p, brackets).map_err(|e| ZooError::InvalidParameter(e.to_string()))
}

/// The first quaternionic Heisenberg group, rank 4 with three vertical
/// directions `S, T, U` and first-layer basis order `(X, Z, Y, W)`.
///
/// Brackets: `[X,Y] = S`, `[Z,W] = -S`, `[X,Z] = T`, `[Y,W] = T`,
/// `[X,W] = U`, `[Y,Z] = -U`. With this sign pattern the three unit J
/// operators anticommute and square to minus the identity, which is what
/// makes the group H-type at the identity vertical metric.
pub fn quaternionic_h1() -> StepTwoAlgebra {
    // basis order (X, Z, Y, W) = (e0, e1, e2, e3)
    let brackets = vec![
        Bracket::new(0, 2, vec![1.0, 0.0, 0.0]),  // [X, Y] = S
        Bracket::new(1, 3, vec![-1.0, 0.0, 0.0]), // [Z, W] = -S
        Bracket::new(0, 1, vec![0.0, 1.0, 0.0]),  // [X, Z] = T
        Bracket::new(2, 3, vec![0.0, 1.0, 0.0]),  // [Y, W] = T
        Bracket::new(0, 3, vec![0.0, 0.0, 1.0]),  // [X, W] = U
        Bracket::new(1, 2, vec![0.0, 0.0, 1.0]),  // [Z, Y] = U
    ];
    StepTwoAlgebra::from_brackets(4, 3, brackets).expect("quaternionic tensor is valid")
}

/// Block direct sum of the factors: horizontal bases concatenated in factor
/// order, then vertical bases.
pub fn product(factors: &[StepTwoAlgebra]) -> Result<StepTwoAlgebra, ZooError> {
    if factors.is_empty() {
        return Err(ZooError::EmptyProduct);
    }
    let m: usize = factors.iter().map(|g| g.m()).sum();
    let p: usize = factors.iter().map(|g| g.p()).sum();
    let mut brackets = Vec::new();
    let mut h_off = 0;
    let mut v_off = 0;
    for g in factors {
        for b in g.brackets() {
            let mut coeffs = vec![0.0; p];
            for a in 0..g.p() {
                coeffs[v_off + a] = b.coeffs[a];
            }
            brackets.push(Bracket::new(h_off + b.j, h_off + b.k, coeffs));
        }
        h_off += g.m();
        v_off += g.p();
    }
    StepTwoAlgebra::from_brackets(m, p, brackets).map_err(|e| ZooError::InvalidParameter(e.to_string()))
}

/// Adds `nu` horizontal directions with all-zero brackets. The second layer
/// is unchanged and still spanned, so the result remains valid.
pub fn with_euclidean_factor(g: &StepTwoAlgebra, nu: usize) -> StepTwoAlgebra {
    if nu == 0 {
        return g.clone();
    }
    let brackets = g.brackets().to_vec();
    StepTwoAlgebra::from_brackets(g.m() + nu, g.p(), brackets)
        .expect("appending central horizontal directions preserves validity")
}

const RANDOM_RETRIES: usize = 32;

/// Random step-two algebra with standard-normal bracket coefficients,
/// regenerated until bracket-generating. Deterministic per seed.
pub fn random_algebra(m: usize, p: usize, seed: u64) -> Result<StepTwoAlgebra, ZooError> {
    if m < 2 || p < 1 || p > m * (m - 1) / 2 {
        return Err(ZooError::InvalidParameter(format!(
            "random algebra needs m >= 2 and 1 <= p <= m(m-1)/2, got m={m}, p={p}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_RETRIES {
        let mut brackets = Vec::with_capacity(m * (m - 1) / 2);
        for j in 0..m {
            for k in (j + 1)..m {
                let coeffs: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
                brackets.push(Bracket::new(j, k, coeffs));
            }
        }
        if let Ok(g) = StepTwoAlgebra::from_brackets(m, p, brackets) {
            return Ok(g);
        }
    }
    Err(ZooError::RetryExhausted(RANDOM_RETRIES))
}

/// A named family with parameters, as accepted on the command line and in
/// group files.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyDescriptor {
    Heisenberg { k: usize },
    Anisotropic { b: Vec<f64> },
    Free { m: usize },
    Quaternionic,
    /// Product of Heisenberg factors `H^{k_1} x ... x H^{k_l}`, `k` sorted ascending.
    Product { ks: Vec<usize> },
    /// Product of Heisenberg factors and a Euclidean factor `R^nu`.
    ProductWithEuclidean { ks: Vec<usize>, nu: usize },
    Random { m: usize, p: usize, seed: u64 },
}

impl FamilyDescriptor {
    /// Parses the compact `name:params` spec, e.g. `product:1,2` or
    /// `anisotropic:1.0,2.0` or `product_euclidean:1,1:2` or `random:4,2,42`.
    pub fn parse(spec: &str) -> Result<Self, ZooError> {
        let err = |reason: &str| ZooError::ParseError { spec: spec.to_string(), reason: reason.into() };
        let (name, rest) = match spec.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (spec, None),
        };
        let ints = |s: &str| -> Result<Vec<usize>, ZooError> {
            s.split(',')
                .map(|x| x.trim().parse::<usize>().map_err(|e| err(&format!("{e} in `{x}`"))))
                .collect()
        };
        match name {
            "heisenberg" => {
                let v = ints(rest.ok_or_else(|| err("expected heisenberg:k"))?)?;
                if v.len() != 1 {
                    return Err(err("expected a single k"));
                }
                Ok(FamilyDescriptor::Heisenberg { k: v[0] })
            }
            "anisotropic" => {
                let b: Result<Vec<f64>, _> = rest
                    .ok_or_else(|| err("expected anisotropic:b1,b2,..."))?
                    .split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|e| err(&format!("{e} in `{x}`"))))
                    .collect();
                Ok(FamilyDescriptor::Anisotropic { b: b? })
            }
            "free" => {
                let v = ints(rest.ok_or_else(|| err("expected free:m"))?)?;
                if v.len() != 1 {
                    return Err(err("expected a single m"));
                }
                Ok(FamilyDescriptor::Free { m: v[0] })
            }
            "quaternionic" => {
                if rest.is_some() {
                    return Err(err("quaternionic takes no parameters"));
                }
                Ok(FamilyDescriptor::Quaternionic)
            }
            "product" => {
                let mut ks = ints(rest.ok_or_else(|| err("expected product:k1,k2,..."))?)?;
                ks.sort_unstable();
                Ok(FamilyDescriptor::Product { ks })
            }
            "product_euclidean" => {
                let body = rest.ok_or_else(|| err("expected product_euclidean:k1,..,kl:nu"))?;
                let (klist, nu) =
                    body.rsplit_once(':').ok_or_else(|| err("expected product_euclidean:k1,..,kl:nu"))?;
                let mut ks = ints(klist)?;
                ks.sort_unstable();
                let nu = nu.trim().parse::<usize>().map_err(|e| err(&format!("{e} in `{nu}`")))?;
                Ok(FamilyDescriptor::ProductWithEuclidean { ks, nu })
            }
            "random" => {
                let v = ints(rest.ok_or_else(|| err("expected random:m,p,seed"))?)?;
                if v.len() != 3 {
                    return Err(err("expected random:m,p,seed"));
                }
                Ok(FamilyDescriptor::Random { m: v[0], p: v[1], seed: v[2] as u64 })
            }
            other => Err(err(&format!("unknown family `{other}`"))),
        }
    }

    pub fn build(&self) -> Result<StepTwoAlgebra, ZooError> {
        match self {
            FamilyDescriptor::Heisenberg { k } => heisenberg(*k),
            FamilyDescriptor::Anisotropic { b } => anisotropic_heisenberg(b),
            FamilyDescriptor::Free { m } => free_step2(*m),
            FamilyDescriptor::Quaternionic => Ok(quaternionic_h1()),
            FamilyDescriptor::Product { ks } => {
                let factors: Result<Vec<_>, _> = ks.iter().map(|&k| heisenberg(k)).collect();
                product(&factors?)
            }
            FamilyDescriptor::ProductWithEuclidean { ks, nu } => {
                let factors: Result<Vec<_>, _> = ks.iter().map(|&k| heisenberg(k)).collect();
                Ok(with_euclidean_factor(&product(&factors?)?, *nu))
            }
            FamilyDescriptor::Random { m, p, seed } => random_algebra(*m, *p, *seed),
        }
    }

    /// Closed-form deviation value, where the family has one.
    ///
    /// Values: `H^k -> 0`; free rank m -> `sqrt((m-2)/m)`; Heisenberg
    /// products -> `sqrt(1 - k_1/n)`; anisotropic -> the directly minimized
    /// `sqrt(1 - |b|_2^4 / (n |b|_4^4))`; Heisenberg-times-Euclidean ->
    /// `sqrt(1 - 2 k_1 / (2n + nu))`. The last two are derived by one-line
    /// scaled-metric minimization rather than quoted, and are tagged so.
    pub fn closed_form_delta(&self) -> Result<ClosedForm, ZooError> {
        match self {
            FamilyDescriptor::Heisenberg { .. } => {
                Ok(ClosedForm { value: 0.0, provenance: Provenance::Paper })
            }
            FamilyDescriptor::Free { m } => {
                if *m < 2 {
                    return Err(ZooError::InvalidParameter("free step-two needs m >= 2".into()));
                }
                Ok(ClosedForm {
                    value: ((*m as f64 - 2.0) / *m as f64).sqrt(),
                    provenance: Provenance::Paper,
                })
            }
            FamilyDescriptor::Product { ks } => {
                if ks.is_empty() {
                    return Err(ZooError::EmptyProduct);
                }
                let n: usize = ks.iter().sum();
                let k1 = *ks.iter().min().unwrap();
                Ok(ClosedForm {
                    value: (1.0 - k1 as f64 / n as f64).sqrt(),
                    provenance: Provenance::Paper,
                })
            }
            FamilyDescriptor::Anisotropic { b } => {
                if b.is_empty() || b.iter().any(|&x| !(x > 0.0)) {
                    return Err(ZooError::InvalidParameter("anisotropic weights must be positive".into()));
                }
                let n = b.len() as f64;
                let s2: f64 = b.iter().map(|x| x * x).sum();
                let s4: f64 = b.iter().map(|x| x.powi(4)).sum();
                Ok(ClosedForm {
                    value: (1.0 - s2 * s2 / (n * s4)).max(0.0).sqrt(),
                    provenance: Provenance::Derived,
                })
            }
            FamilyDescriptor::ProductWithEuclidean { ks, nu } => {
                if ks.is_empty() {
                    return Err(ZooError::EmptyProduct);
                }
                let n: usize = ks.iter().sum();
                let k1 = *ks.iter().min().unwrap();
                Ok(ClosedForm {
                    value: (1.0 - 2.0 * k1 as f64 / (2.0 * n as f64 + *nu as f64)).sqrt(),
                    provenance: Provenance::Derived,
                })
            }
            FamilyDescriptor::Quaternionic => Err(ZooError::NoClosedForm("quaternionic".into())),
            FamilyDescriptor::Random { .. } => Err(ZooError::NoClosedForm("random".into())),
        }
    }

    /// A good starting vertical metric for the outer search, when the family
    /// suggests one: the diagonal `M = diag(1, sqrt(k1/k2), ...)` for
    /// Heisenberg products (as `Q = M M^T`) and the optimal scalar for the
    /// anisotropic family.
    pub fn initial_metric(&self) -> Option<DMatrix<f64>> {
        match self {
            FamilyDescriptor::Product { ks } | FamilyDescriptor::ProductWithEuclidean { ks, .. } => {
                if ks.is_empty() {
                    return None;
                }
                let k1 = *ks.iter().min().unwrap() as f64;
                let diag: Vec<f64> = ks.iter().map(|&ki| k1 / ki as f64).collect();
                Some(DMatrix::from_diagonal(&DVector::from_vec(diag)))
            }
            FamilyDescriptor::Anisotropic { b } => {
                let s2: f64 = b.iter().map(|x| x * x).sum();
                let s4: f64 = b.iter().map(|x| x.powi(4)).sum();
                Some(DMatrix::from_element(1, 1, s2 / s4))
            }
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FamilyDescriptor::Heisenberg { .. } => "heisenberg",
            FamilyDescriptor::Anisotropic { .. } => "anisotropic",
            FamilyDescriptor::Free { .. } => "free",
            FamilyDescriptor::Quaternionic => "quaternionic",
            FamilyDescriptor::Product { .. } => "product",
            FamilyDescriptor::ProductWithEuclidean { .. } => "product_euclidean",
            FamilyDescriptor::Random { .. } => "random",
        }
    }
}

impl std::fmt::Display for FamilyDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FamilyDescriptor::Heisenberg { k } => write!(f, "heisenberg:{k}"),
            FamilyDescriptor::Anisotropic { b } => {
                let parts: Vec<String> = b.iter().map(|x| x.to_string()).collect();
                write!(f, "anisotropic:{}", parts.join(","))
            }
            FamilyDescriptor::Free { m } => write!(f, "free:{m}"),
            FamilyDescriptor::Quaternionic => write!(f, "quaternionic"),
            FamilyDescriptor::Product { ks } => {
                let parts: Vec<String> = ks.iter().map(|x| x.to_string()).collect();
                write!(f, "product:{}", parts.join(","))
            }
            FamilyDescriptor::ProductWithEuclidean { ks, nu } => {
                let parts: Vec<String> = ks.iter().map(|x| x.to_string()).collect();
                write!(f, "product_euclidean:{}:{nu}", parts.join(","))
            }
            FamilyDescriptor::Random { m, p, seed } => write!(f, "random:{m},{p},{seed}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{j_matrix, validate_algebra, VerticalMetric};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn heisenberg_one_is_h1() {
        let g = heisenberg(1).unwrap();
        assert_eq!((g.m(), g.p()), (2, 1));
        assert_abs_diff_eq!(g.structure_constant(0, 1, 0), 1.0);
    }

    #[test]
    fn heisenberg_two_has_two_symplectic_blocks() {
        let g = heisenberg(2).unwrap();
        assert_eq!((g.m(), g.p()), (4, 1));
        assert_abs_diff_eq!(g.structure_constant(0, 2, 0), 1.0);
        assert_abs_diff_eq!(g.structure_constant(1, 3, 0), 1.0);
        assert_eq!(g.brackets().len(), 2);
    }

    #[test]
    fn heisenberg_requires_positive_k() {
        assert!(heisenberg(0).is_err());
    }

    #[test]
    fn anisotropic_constant_weights_is_heisenberg() {
        let g = anisotropic_heisenberg(&[1.0, 1.0]).unwrap();
        assert_eq!(g.tensor(), heisenberg(2).unwrap().tensor());
        assert!(anisotropic_heisenberg(&[1.0, -2.0]).is_err());
        assert!(anisotropic_heisenberg(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn free_rank_two_is_h1() {
        assert_eq!(free_step2(2).unwrap().tensor(), heisenberg(1).unwrap().tensor());
        assert_eq!(free_step2(3).unwrap().p(), 3);
        assert_eq!(free_step2(4).unwrap().p(), 6);
        assert!(free_step2(1).is_err());
    }

    #[test]
    fn quaternionic_j_operators_anticommute_and_square_to_minus_id() {
        let g = quaternionic_h1();
        assert_eq!((g.m(), g.p()), (4, 3));
        let q = VerticalMetric::identity(3);
        let ops: Vec<DMatrix<f64>> = (0..3)
            .map(|a| {
                let mut t = nalgebra::DVector::zeros(3);
                t[a] = 1.0;
                j_matrix(&g, &q, &t).unwrap().matrix
            })
            .collect();
        for a in 0..3 {
            let sq = &ops[a] * &ops[a];
            assert_abs_diff_eq!(sq, -DMatrix::identity(4, 4), epsilon = 1e-14);
            for b in (a + 1)..3 {
                let anti = &ops[a] * &ops[b] + &ops[b] * &ops[a];
                assert_abs_diff_eq!(anti.amax(), 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn quaternionic_j_s_matches_defining_identity() {
        // With basis (X, Z, Y, W): J_S maps X -> Y, Z -> -W, Y -> -X, W -> Z.
        let g = quaternionic_h1();
        let q = VerticalMetric::identity(3);
        let js = j_matrix(&g, &q, &nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        // independent evaluation of <J_S X_k, X_r> = <[X_k, X_r], S> via bracket expansion
        let mut expected = DMatrix::zeros(4, 4);
        for k in 0..4 {
            for r in 0..4 {
                let mut ek = nalgebra::DVector::zeros(4);
                let mut er = nalgebra::DVector::zeros(4);
                ek[k] = 1.0;
                er[r] = 1.0;
                expected[(r, k)] = g.bracket_of(&ek, &er)[0];
            }
        }
        assert_abs_diff_eq!(js.matrix, expected, epsilon = 1e-15);
        let frozen = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, -1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                1.0, 0.0, 0.0, 0.0, //
                0.0, -1.0, 0.0, 0.0,
            ],
        );
        assert_abs_diff_eq!(js.matrix, frozen, epsilon = 1e-15);
    }

    #[test]
    fn product_dimensions_and_associativity() {
        let h1 = heisenberg(1).unwrap();
        let h2 = heisenberg(2).unwrap();
        let g = product(&[h1.clone(), h1.clone()]).unwrap();
        assert_eq!((g.m(), g.p()), (4, 2));
        let left = product(&[product(&[h1.clone(), h1.clone()]).unwrap(), h2.clone()]).unwrap();
        let right = product(&[h1.clone(), product(&[h1.clone(), h2.clone()]).unwrap()]).unwrap();
        let flat = product(&[h1.clone(), h1.clone(), h2.clone()]).unwrap();
        assert_eq!(left.tensor(), flat.tensor());
        assert_eq!(right.tensor(), flat.tensor());
        assert_eq!(product(&[h2.clone()]).unwrap().tensor(), h2.tensor());
        assert!(product(&[]).is_err());
    }

    #[test]
    fn euclidean_factor_pads_horizontal_layer() {
        let h1 = heisenberg(1).unwrap();
        assert_eq!(with_euclidean_factor(&h1, 0).tensor(), h1.tensor());
        let g = with_euclidean_factor(&h1, 2);
        assert_eq!((g.m(), g.p()), (4, 1));
        let report = validate_algebra(g.m(), g.p(), &g.tensor()).unwrap();
        assert!(report.pass);
    }

    #[test]
    fn random_algebra_is_deterministic_and_valid() {
        let a = random_algebra(5, 3, 7).unwrap();
        let b = random_algebra(5, 3, 7).unwrap();
        assert_eq!(a.tensor(), b.tensor());
        assert!(validate_algebra(4, 2, &random_algebra(4, 2, 42).unwrap().tensor()).unwrap().pass);
        // one pair only: a scalar multiple of the H^1 tensor
        let g = random_algebra(2, 1, 11).unwrap();
        assert_eq!(g.brackets().len(), 1);
        assert!(random_algebra(3, 9, 0).is_err());
    }

    #[test]
    fn closed_forms() {
        let f5 = FamilyDescriptor::Free { m: 5 }.closed_form_delta().unwrap();
        assert_abs_diff_eq!(f5.value, (3.0f64 / 5.0).sqrt(), epsilon = 1e-15);
        assert_eq!(f5.provenance, Provenance::Paper);

        let pr = FamilyDescriptor::Product { ks: vec![2, 3] }.closed_form_delta().unwrap();
        assert_abs_diff_eq!(pr.value, (1.0f64 - 2.0 / 5.0).sqrt(), epsilon = 1e-15);

        let an = FamilyDescriptor::Anisotropic { b: vec![1.0, 2.0] }.closed_form_delta().unwrap();
        assert_abs_diff_eq!(an.value, 3.0 / 34.0f64.sqrt(), epsilon = 1e-15);
        assert_eq!(an.provenance, Provenance::Derived);

        let eu = FamilyDescriptor::ProductWithEuclidean { ks: vec![1], nu: 2 }
            .closed_form_delta()
            .unwrap();
        assert_abs_diff_eq!(eu.value, 0.5f64.sqrt(), epsilon = 1e-15);

        assert!(FamilyDescriptor::Random { m: 4, p: 2, seed: 1 }.closed_form_delta().is_err());
        assert!(FamilyDescriptor::Quaternionic.closed_form_delta().is_err());
    }

    #[test]
    fn parse_round_trips() {
        for spec in [
            "heisenberg:2",
            "anisotropic:1,2",
            "free:3",
            "quaternionic",
            "product:1,2",
            "product_euclidean:1,1:2",
            "random:4,2,42",
        ] {
            let d = FamilyDescriptor::parse(spec).unwrap();
            assert_eq!(FamilyDescriptor::parse(&d.to_string()).unwrap(), d);
            d.build().unwrap();
        }
        assert!(FamilyDescriptor::parse("nope:1").is_err());
        assert!(FamilyDescriptor::parse("free:x").is_err());
    }

    #[test]
    fn product_descriptor_sorts_k_list() {
        let d = FamilyDescriptor::parse("product:3,1,2").unwrap();
        assert_eq!(d, FamilyDescriptor::Product { ks: vec![1, 2, 3] });
    }
}
