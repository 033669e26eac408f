use cautious_core::polytope::frank_wolfe;
use cautious_core::{
    assemble_batch, certify_convexity, phi_bounds, point_bounds, run_online, trial_rng, uncertainty, BasisSet,
    FwOptions, IntersectionSet, NoiseMode, NoiseModel, OnlineOptions, ParameterSet, Polytope, Primitive,
    SampleStencil, SolverOptions, SymQuadSet, SyntheticOracle,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn normal(rng: &mut ChaCha20Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn scale(x: f64) -> f64 {
    1.0 + x.abs()
}

/// Random data set; `None` when the batch is not exciting enough.
fn instance(seed: u64, n: usize, k: usize, t: usize) -> Option<(BasisSet, ParameterSet)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut prims = vec![Primitive::Constant];
    for i in 0..k.saturating_sub(1) {
        prims.push(match i % 4 {
            0 => Primitive::Coordinate(i % n),
            1 => Primitive::SquaredNorm,
            2 => Primitive::Monomial((0..n).map(|j| (j == 0) as u32 * 4).collect()),
            _ => Primitive::Gaussian { center: normal(&mut rng, n), width: 1.0 },
        });
    }
    let basis = BasisSet::new(n, prims).ok()?;
    let points: Vec<_> = (0..t).map(|_| normal(&mut rng, n) * 1.5).collect();
    let gamma = normal(&mut rng, k);
    let noise = NoiseModel::ball(rng.random_range(0.1..5.0), t).ok()?;
    let w = noise.sample_uniform(&mut rng);
    let y = DVector::from_iterator(t, points.iter().map(|p| basis.eval(p).unwrap().dot(&gamma))) + w;
    let batch = assemble_batch(&basis, points, y).ok()?;
    let set = ParameterSet::from_batch(&batch, &noise).ok()?;
    Some((basis, set))
}

fn random_ellipsoid_n(rng: &mut ChaCha20Rng, center: &DVector<f64>, r: f64) -> DMatrix<f64> {
    let k = center.len();
    let m = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = &m * m.transpose() + DMatrix::identity(k, k) * 0.3;
    let ac = &a * center;
    let mut n = DMatrix::zeros(k + 1, k + 1);
    n[(0, 0)] = r - center.dot(&ac);
    for i in 0..k {
        n[(0, i + 1)] = ac[i];
        n[(i + 1, 0)] = ac[i];
    }
    n.view_mut((1, 1), (k, k)).copy_from(&(-a));
    n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniform_samples_lie_in_the_set(seed in any::<u64>(), k in 1usize..5, r in 0.01f64..10.0) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let c = normal(&mut rng, k);
        let set = SymQuadSet::new(random_ellipsoid_n(&mut rng, &c, r)).unwrap();
        for _ in 0..50 {
            let g = set.sample_uniform(&mut rng).unwrap();
            prop_assert!(set.contains(&g));
        }
    }

    #[test]
    fn bounds_sandwich_every_consistent_parameter(seed in any::<u64>(), n in 1usize..4, k in 1usize..6, extra in 0usize..6) {
        let Some((basis, set)) = instance(seed, n, k, k + extra) else { return Ok(()) };
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 1);
        let z = normal(&mut rng, n);
        let p = point_bounds(&set, &basis, &z).unwrap();
        let u = uncertainty(&set, &basis, &z).unwrap();
        prop_assert!(u >= 0.0);
        prop_assert!((u - (p.upper - p.lower)).abs() <= 1e-12 * scale(p.upper) + 1e-12 * scale(p.lower));
        prop_assert!(((p.upper + p.lower) / 2.0 - p.lse).abs() <= 1e-12 * scale(p.lse).max(scale(p.upper)));
        let b = basis.eval(&z).unwrap();
        for _ in 0..30 {
            let g = set.ellipsoid().sample_uniform(&mut rng);
            let val = g.dot(&b);
            prop_assert!(val <= p.upper + 1e-9 * scale(p.upper));
            prop_assert!(val >= p.lower - 1e-9 * scale(p.lower));
        }
    }

    #[test]
    fn inflation_adds_weighted_uncertainty(seed in any::<u64>(), n in 1usize..4, k in 1usize..6, lambda in 0.0f64..10.0) {
        let Some((basis, set)) = instance(seed, n, k, k + 3) else { return Ok(()) };
        let z = normal(&mut ChaCha20Rng::seed_from_u64(seed ^ 2), n);
        let (_, hi) = phi_bounds(&set, &basis, &z).unwrap();
        let u = uncertainty(&set, &basis, &z).unwrap();
        let (_, hi_l) = phi_bounds(&set.inflate(lambda).unwrap(), &basis, &z).unwrap();
        prop_assert!((hi + lambda * u - hi_l).abs() <= 1e-9 * scale(hi_l));
    }

    #[test]
    fn intersection_shrinks_support(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let p = normal(&mut rng, k);
        let members: Vec<ParameterSet> = (0..3)
            .map(|_| {
                let c = &p + normal(&mut rng, k) * 0.5;
                let r = rng.random_range(1.0..4.0) * (1.0 + (&p - &c).norm_squared()) * 10.0;
                ParameterSet::new(SymQuadSet::new(random_ellipsoid_n(&mut rng, &c, r)).unwrap()).unwrap()
            })
            .filter(|m| m.contains(&p))
            .collect();
        prop_assume!(members.len() >= 2);
        let dir = normal(&mut rng, k);
        let opts = SolverOptions::default();
        let single = IntersectionSet::single(members[0].clone()).support(&dir, &opts).unwrap();
        let (_, closed) = members[0].support_interval(&dir).unwrap();
        prop_assert!((single.value - closed).abs() <= 1e-8 * scale(closed));
        let both = IntersectionSet::new(members.clone()).unwrap().support(&dir, &opts).unwrap();
        prop_assert!(both.value <= single.upper() + 1e-9 * scale(closed));
        prop_assert!(both.upper() >= p.dot(&dir) - 1e-9 * scale(closed));
        prop_assert!(members.iter().all(|m| m.n().form(&both.maximizer) >= -1e-6 * scale(m.n().m11())));
    }

    #[test]
    fn convexity_certificate_is_sound(seed in any::<u64>(), n in 1usize..3, extra in 0usize..6) {
        let Some((basis, set)) = instance(seed, n, 3, 3 + extra) else { return Ok(()) };
        let cert = certify_convexity(&set, &basis).unwrap();
        if !cert.is_convex() {
            return Ok(());
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 3);
        for _ in 0..20 {
            let g = set.ellipsoid().sample_uniform(&mut rng);
            let z = normal(&mut rng, n) * 2.0;
            let h = basis.combined_hessian(&g, &z).unwrap();
            let min_eig = h.symmetric_eigenvalues().min();
            prop_assert!(min_eig >= -1e-8 * (1.0 + h.norm()), "hessian eigenvalue {min_eig}");
        }
    }

    #[test]
    fn frank_wolfe_matches_projection(seed in any::<u64>(), n in 1usize..4, m in 1usize..7) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let poly = Polytope::new((0..m).map(|_| normal(&mut rng, n)).collect()).unwrap();
        let target = normal(&mut rng, n) * 2.0;
        let f = |z: &DVector<f64>| Ok(((z - &target).norm_squared(), (z - &target) * 2.0));
        let start = poly.vertices()[0].clone();
        let res = frank_wolfe(&poly, &start, f, &FwOptions::default()).unwrap();
        let proj = poly.nearest(&target);
        prop_assert!(res.gap <= 1e-7 * scale(res.value) || res.iterations == FwOptions::default().max_iter);
        let excess = res.value - proj.distance.powi(2);
        prop_assert!(excess >= -1e-9 * scale(res.value), "below the projection by {excess}");
        prop_assert!(excess <= res.gap + 1e-9 * scale(res.value), "excess {excess} beyond gap {}", res.gap);
        prop_assert!(poly.contains(&res.z));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn online_bounds_never_rise(seed in any::<u64>(), x in -4.0f64..4.0, y in -4.0f64..4.0) {
        let stencil = SampleStencil::new(vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[-1.0, -1.0])]).unwrap();
        let basis = BasisSet::affine_plus_squared_norm(2);
        let noise = NoiseModel::ball(30.0, 4).unwrap();
        let oracle = SyntheticOracle::new(v(&[1.0, 0.0, 0.0, 1.0]), basis.clone(), noise.clone(), NoiseMode::Uniform, trial_rng(seed, 0)).unwrap();
        let opts = OnlineOptions { force: true, track_points: vec![v(&[0.0, 0.0])], ..OnlineOptions::default() };
        let log = run_online(oracle, &basis, &stencil, &noise, v(&[x, y]), 8, opts).unwrap();
        prop_assert!(log.monotonicity_violations.is_empty());
        let b = log.bounds();
        for w in b.windows(2) {
            prop_assert!(w[1] <= w[0] + 2e-8 * scale(w[0]));
        }
        for s in &log.steps {
            prop_assert!(1.0 + s.z.norm_squared() <= s.bound + 1e-9);
        }
        let rep = log.final_report().unwrap();
        prop_assert!(rep.lower <= rep.upper);
    }
}
