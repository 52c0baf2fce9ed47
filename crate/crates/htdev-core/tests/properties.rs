//! Property tests for the algebra kernel: skewness, bilinearity, the
//! defining identity of the J operator, defect homogeneity, and the
//! kernel-complement / J-image subspace identity.

use htdev_core::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn random_metric(p: usize, seed: u64) -> VerticalMetric {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut l = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            l[(i, j)] = rng.sample::<f64, _>(StandardNormal) * 0.5;
        }
        l[(i, i)] = l[(i, i)].abs() + 0.4;
    }
    VerticalMetric::new(&l * l.transpose()).unwrap()
}

fn random_unit(n: usize, rng: &mut ChaCha20Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = v.norm();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

fn algebra_cases() -> Vec<(StepTwoAlgebra, u64)> {
    let mut out = vec![
        (heisenberg(2).unwrap(), 1),
        (quaternionic_h1(), 2),
        (free_step2(3).unwrap(), 3),
        (anisotropic_heisenberg(&[1.0, 2.0]).unwrap(), 4),
    ];
    for (i, (m, p)) in [(3usize, 2usize), (4, 3), (5, 4), (6, 3)].iter().enumerate() {
        out.push((random_algebra(*m, *p, 100 + i as u64).unwrap(), 10 + i as u64));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn j_matrix_is_skew_and_bilinear(
        mp in (2usize..6).prop_flat_map(|m| (Just(m), 1usize..=(m * (m - 1) / 2).min(4))),
        seed in 0u64..1000,
        scale in -2.0f64..2.0,
    ) {
        let (m, p) = mp;
        let g = random_algebra(m, p, seed).unwrap();
        let q = random_metric(p, seed ^ 0xdead);
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xbeef);
        let t1 = random_unit(p, &mut rng);
        let t2 = random_unit(p, &mut rng);

        let j1 = j_matrix(&g, &q, &t1).unwrap().matrix;
        let j2 = j_matrix(&g, &q, &t2).unwrap().matrix;
        let rel = j1.amax().max(1.0);
        prop_assert!((&j1 + j1.transpose()).amax() <= 1e-12 * rel);

        let combo = j_matrix(&g, &q, &(&t1 * scale + &t2 * 0.7)).unwrap().matrix;
        let expected = &j1 * scale + &j2 * 0.7;
        let scale_ref = rel.max(expected.amax());
        prop_assert!((combo - expected).amax() <= 1e-12 * scale_ref);
    }

    #[test]
    fn j_matrix_satisfies_defining_identity(
        mp in (2usize..6).prop_flat_map(|m| (Just(m), 1usize..=(m * (m - 1) / 2).min(4))),
        seed in 0u64..1000,
    ) {
        let (m, p) = mp;
        let g = random_algebra(m, p, seed).unwrap();
        let q = random_metric(p, seed ^ 0xabcd);
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x1234);
        let u = random_unit(m, &mut rng);
        let v = random_unit(m, &mut rng);
        let t = random_unit(p, &mut rng);

        // <J_T u, v>_h against the independent bilinear expansion <[u, v], t>_v
        let j = j_matrix(&g, &q, &t).unwrap().matrix;
        let lhs = v.dot(&(&j * &u));
        let rhs = (q.gram() * &t).dot(&g.bracket_of(&u, &v));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn defect_is_degree_two_homogeneous(
        mp in (2usize..6).prop_flat_map(|m| (Just(m), 1usize..=(m * (m - 1) / 2).min(4))),
        seed in 0u64..1000,
        s in 0.05f64..4.0,
    ) {
        let (m, p) = mp;
        let g = random_algebra(m, p, seed).unwrap();
        let q = random_metric(p, seed ^ 0x7777);
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9999);
        let t = random_unit(p, &mut rng);
        let d1 = defect(&g, &q, &t).unwrap();
        let d2 = defect(&g, &q, &(&t * s)).unwrap();
        prop_assert!((d2 - s * s * d1).abs() <= 1e-10 * (1.0 + d2.abs()));
    }
}

#[test]
fn kernel_complement_matches_j_image_on_all_case_groups() {
    for (g, seed) in algebra_cases() {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let q = random_metric(g.p(), seed ^ 0x5150);
        for _ in 0..100 {
            let x = random_unit(g.m(), &mut rng);
            let kc = kernel_complement(&g, &x).unwrap();
            let im = j_image(&g, &q, &x).unwrap();
            assert_eq!(
                kc.ncols(),
                htdev_core::algebra::numerical_rank(&ad_matrix(&g, &x).unwrap().matrix),
                "complement dimension must equal adjoint rank"
            );
            assert!(
                htdev_core::algebra::subspace_gap(&kc, &im) <= 1e-8,
                "subspaces diverge on {} at x = {x}",
                g.m()
            );
        }
    }
}

#[test]
fn deviation_is_invariant_under_vertical_basis_change() {
    for (g, seed) in algebra_cases().into_iter().take(6) {
        let p = g.p();
        let q = random_metric(p, seed ^ 0x0246);
        let opts = InnerOpts::default();
        let base = deviation_given_metric(&g, &q, &opts).unwrap().value;

        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x1357);
        // invertible vertical change T~_b = sum_a P_ab T_a
        let pmat = loop {
            let cand = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            if cand.clone().try_inverse().is_some() {
                break cand;
            }
        };
        let pinv = pmat.clone().try_inverse().unwrap();
        let brackets: Vec<Bracket> = g
            .brackets()
            .iter()
            .map(|b| Bracket { j: b.j, k: b.k, coeffs: &pinv * &b.coeffs })
            .collect();
        let gt = StepTwoAlgebra::from_brackets(g.m(), p, brackets).unwrap();
        let qt = VerticalMetric::new(pmat.transpose() * q.gram() * &pmat).unwrap();
        let transformed = deviation_given_metric(&gt, &qt, &opts).unwrap().value;
        assert!(
            (base - transformed).abs() <= 1e-9 * base.max(1.0),
            "vertical gauge broke: {base} vs {transformed}"
        );
    }
}

#[test]
fn deviation_is_invariant_under_horizontal_rotation() {
    for (g, seed) in algebra_cases().into_iter().take(6) {
        let (m, p) = (g.m(), g.p());
        let q = random_metric(p, seed ^ 0x8642);
        let opts = InnerOpts::default();
        let base = deviation_given_metric(&g, &q, &opts).unwrap().value;

        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9753);
        let raw = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let rot = raw.qr().q();
        let mut brackets = Vec::new();
        for j in 0..m {
            for k in (j + 1)..m {
                let coeffs = g.bracket_of(&rot.column(j).into_owned(), &rot.column(k).into_owned());
                brackets.push(Bracket { j, k, coeffs });
            }
        }
        let gr = StepTwoAlgebra::from_brackets(m, p, brackets).unwrap();
        let rotated = deviation_given_metric(&gr, &q, &opts).unwrap().value;
        assert!(
            (base - rotated).abs() <= 1e-9 * base.max(1.0),
            "horizontal rotation broke: {base} vs {rotated}"
        );
    }
}

#[test]
fn inner_solver_dominates_quasi_random_grid() {
    // the solver output is a max: it must dominate every grid sample, and on
    // the small zoo instances it must not exceed the grid by more than 1e-3
    let cases: Vec<StepTwoAlgebra> = vec![
        heisenberg(1).unwrap(),
        heisenberg(2).unwrap(),
        quaternionic_h1(),
        product(&[heisenberg(1).unwrap(), heisenberg(1).unwrap()]).unwrap(),
        anisotropic_heisenberg(&[1.0, 2.0]).unwrap(),
        free_step2(3).unwrap(),
    ];
    for (i, g) in cases.iter().enumerate() {
        let p = g.p();
        assert!(p <= 3);
        let q = if i % 2 == 0 { VerticalMetric::identity(p) } else { random_metric(p, i as u64) };
        let solved = deviation_given_metric(g, &q, &InnerOpts::default()).unwrap().value;
        let l = q.cholesky_lower().clone();
        let mut grid_max: f64 = 0.0;
        for u in halton_sphere_points(p, 10_000) {
            let t = l
                .transpose()
                .solve_upper_triangular(&u)
                .expect("cholesky factor invertible");
            let d = defect(g, &q, &t).unwrap() / (g.m() as f64).sqrt();
            grid_max = grid_max.max(d);
        }
        assert!(
            solved >= grid_max - 1e-12,
            "solver {solved} fell below grid point {grid_max} on case {i}"
        );
        assert!(
            solved <= grid_max + 1e-3,
            "solver {solved} not matched by grid {grid_max} on case {i}"
        );
    }
}

#[test]
fn product_reassociation_leaves_deviation_unchanged() {
    let h1 = heisenberg(1).unwrap();
    let h2 = heisenberg(2).unwrap();
    let flat = product(&[h1.clone(), h1.clone(), h2.clone()]).unwrap();
    let nested = product(&[product(&[h1.clone(), h1.clone()]).unwrap(), h2.clone()]).unwrap();
    let q = random_metric(flat.p(), 77);
    let opts = InnerOpts::default();
    let a = deviation_given_metric(&flat, &q, &opts).unwrap().value;
    let b = deviation_given_metric(&nested, &q, &opts).unwrap().value;
    assert!((a - b).abs() <= 1e-6 * a.max(1.0));
}

#[test]
fn bi_lipschitz_bounds_follow_deviation_inequality() {
    // for random (G, Q, X, t): | |T|_v^2 |X|^2 - |J_T X|^2 | is controlled by
    // sqrt(m) |T|_v^2 |X|^2 delta(G, Q)
    let mut checked = 0;
    for (gi, (m, p)) in [(3usize, 2usize), (4, 2), (4, 3), (5, 3), (6, 4)].iter().enumerate() {
        for qi in 0..5u64 {
            let g = random_algebra(*m, *p, 500 + gi as u64 * 7 + qi).unwrap();
            let q = random_metric(*p, 900 + qi);
            let delta = deviation_given_metric(&g, &q, &InnerOpts::default()).unwrap().value;
            let mut rng = ChaCha20Rng::seed_from_u64(31 * gi as u64 + qi);
            for _ in 0..20 {
                let x = random_unit(*m, &mut rng);
                let t = random_unit(*p, &mut rng);
                let tv2 = (q.gram() * &t).dot(&t);
                let jx = (j_matrix(&g, &q, &t).unwrap().matrix * &x).norm_squared();
                let lhs = (tv2 - jx).abs();
                let rhs = (*m as f64).sqrt() * tv2 * delta + 1e-6;
                assert!(lhs <= rhs, "inequality failed: {lhs} > {rhs} (delta {delta})");
                checked += 1;
            }
        }
    }
    assert!(checked >= 500);
}

#[test]
fn vanishing_deviation_forces_unit_bi_lipschitz_constants() {
    let cases: Vec<(StepTwoAlgebra, VerticalMetric)> = vec![
        (heisenberg(1).unwrap(), VerticalMetric::identity(1)),
        (heisenberg(2).unwrap(), VerticalMetric::identity(1)),
        (heisenberg(3).unwrap(), VerticalMetric::identity(1)),
        (quaternionic_h1(), VerticalMetric::identity(3)),
        (anisotropic_heisenberg(&[1.0, 1.0, 1.0]).unwrap(), VerticalMetric::identity(1)),
    ];
    for (g, q) in cases {
        let delta = deviation_given_metric(&g, &q, &InnerOpts::default()).unwrap().value;
        assert!(delta <= 1e-9);
        let c = approx_htype_constants(&g, &q, &RigidityOpts::default()).unwrap();
        assert!((c.a - 1.0).abs() <= 1e-6, "A = {}", c.a);
        assert!((c.b - 1.0).abs() <= 1e-6, "B = {}", c.b);
    }
}

#[test]
fn glemma_sandwich_holds_on_random_instances() {
    // k1 G4 <= G2^2 <= n G4 for random (kvec, M, u)
    let mut rng = ChaCha20Rng::seed_from_u64(4242);
    for _ in 0..1000 {
        let l = rng.random_range(1usize..=4);
        let kvec: Vec<usize> = (0..l).map(|_| rng.random_range(1usize..=4)).collect();
        let m_matrix = loop {
            let cand = DMatrix::from_fn(l, l, |_, _| rng.sample::<f64, _>(StandardNormal));
            if cand.clone().try_inverse().is_some() {
                break cand;
            }
        };
        let u = random_unit(l, &mut rng);
        let s = product_lemma_stats(&kvec, &m_matrix, &u).unwrap();
        let k1 = *kvec.iter().min().unwrap() as f64;
        let n: usize = kvec.iter().sum();
        let scale = (s.g2 * s.g2).max(1.0);
        assert!(k1 * s.g4 <= s.g2 * s.g2 + 1e-10 * scale);
        assert!(s.g2 * s.g2 <= n as f64 * s.g4 + 1e-10 * scale);
        // F recomposition
        assert!((s.f - (1.0 - 2.0 / n as f64 * s.g2 + s.g4 / n as f64)).abs() <= 1e-12);
    }
}

#[test]
fn glemma_extremes_match_operator_norms() {
    // max/min of G2 over sampled u equals ||B||_op and the smallest
    // eigenvalue of B = M^T K M
    let mut rng = ChaCha20Rng::seed_from_u64(9090);
    for i in 0..20 {
        let l = 2 + (i % 2);
        let kvec: Vec<usize> = (0..l).map(|_| rng.random_range(1usize..=3)).collect();
        let m_matrix = loop {
            let cand = DMatrix::from_fn(l, l, |_, _| rng.sample::<f64, _>(StandardNormal));
            if cand.clone().try_inverse().is_some() {
                break cand;
            }
        };
        let b = {
            let kd = DMatrix::from_diagonal(&DVector::from_iterator(
                l,
                kvec.iter().map(|&k| k as f64),
            ));
            m_matrix.transpose() * kd * &m_matrix
        };
        let eig = b.clone().symmetric_eigen();
        let lam_max = eig.eigenvalues.max();
        let lam_min = eig.eigenvalues.min();

        let mut g2_max = f64::NEG_INFINITY;
        let mut g2_min = f64::INFINITY;
        for u in halton_sphere_points(l, 100_000) {
            let g2 = (&b * &u).dot(&u);
            g2_max = g2_max.max(g2);
            g2_min = g2_min.min(g2);
        }
        let tol = 1e-3 * lam_max.abs().max(1.0);
        assert!((g2_max - lam_max).abs() <= tol, "sup {g2_max} vs op norm {lam_max}");
        assert!((g2_min - lam_min).abs() <= tol, "inf {g2_min} vs least eigenvalue {lam_min}");
    }
}

#[test]
fn optimized_deviation_stays_below_universal_bound() {
    // smoke version; the full 50-instance sweep lives in the acceptance suite
    for (i, (m, p)) in [(3usize, 2usize), (4, 3), (5, 2)].iter().enumerate() {
        let g = random_algebra(*m, *p, 7000 + i as u64).unwrap();
        let r = optimize_metric(&g, &OuterOpts::default());
        assert!(r.value <= 1.0 + 1e-2, "m={m} p={p}: {}", r.value);
    }
}
