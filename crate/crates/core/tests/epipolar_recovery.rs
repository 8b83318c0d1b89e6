use nalgebra::{Matrix3, Rotation3, Vector3};
use polymatch_core::epipolar::*;
use polymatch_core::geometry::{sampson_distance, Homography3x3};
use polymatch_core::vectorize::KeypointMatch;
use polymatch_core::Point2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact correspondences of random 3-D points seen by a general (not
/// rectified) two-camera rig.
fn rig_matches(rng: &mut ChaCha8Rng, n: usize) -> Vec<KeypointMatch> {
    let k = Matrix3::new(800.0, 0.0, 320.0, 0.0, 800.0, 240.0, 0.0, 0.0, 1.0);
    let r = Rotation3::from_euler_angles(0.01, 0.06, -0.02);
    let t = Vector3::new(-0.3, 0.02, 0.01);
    (0..n)
        .map(|_| {
            let z = rng.gen_range(3.0..8.0);
            let x = Vector3::new(rng.gen_range(-1.2..1.2) * z / 3.0, rng.gen_range(-0.9..0.9) * z / 3.0, z);
            let (a, b) = (k * x, k * (r * x + t));
            KeypointMatch::new(Point2::new(a.x / a.z, a.y / a.z), Point2::new(b.x / b.z, b.y / b.z), 1.0)
        })
        .collect()
}

fn with_outliers(rng: &mut ChaCha8Rng, inliers: &[KeypointMatch], fraction: f64) -> Vec<KeypointMatch> {
    let mut all = inliers.to_vec();
    let extra = (inliers.len() as f64 * fraction).round() as usize;
    for _ in 0..extra {
        let pl = Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
        let pr = Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
        all.push(KeypointMatch::new(pl, pr, 1.0));
    }
    all
}

#[test]
fn exact_rig_correspondences_are_all_inliers() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let m = rig_matches(&mut rng, 50);
    let (f, inl) = estimate_fundamental(&m, &RobustConfig::default()).unwrap();
    assert_eq!(inl, (0..50).collect::<Vec<_>>());
    let worst = m.iter().map(|k| sampson_distance(f.matrix(), k.pl, k.pr)).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn recovers_inliers_among_uniform_outliers() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let clean = rig_matches(&mut rng, 50);
        let m = with_outliers(&mut rng, &clean, 0.3);
        let cfg = RobustConfig { seed, ..RobustConfig::default() };
        let (_, inl) = estimate_fundamental(&m, &cfg).unwrap();
        let recovered = inl.iter().filter(|&&i| i < 50).count();
        assert!(recovered as f64 >= 0.95 * 50.0, "seed {seed}: {recovered}");
    }
}

#[test]
fn homography_recovered_up_to_scale() {
    let truth = Homography3x3::new(Matrix3::new(1.1, 0.05, 12.0, -0.03, 0.95, -7.0, 1e-4, -2e-4, 1.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let m: Vec<KeypointMatch> = (0..20)
        .map(|_| {
            let p = Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
            KeypointMatch::new(p, truth.apply(p).unwrap(), 1.0)
        })
        .collect();
    let (h, inl) = estimate_homography(&m, &RobustConfig::default()).unwrap();
    assert_eq!(inl.len(), 20);
    let (a, b) = (h.matrix() / h.matrix()[(2, 2)], truth.matrix() / truth.matrix()[(2, 2)]);
    let rel = (a - b).norm() / b.norm();
    assert!(rel < 1e-6, "{rel}");
}

#[test]
fn two_view_partitions_indices() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let clean = rig_matches(&mut rng, 60);
    let m = with_outliers(&mut rng, &clean, 0.2);
    let cfg = RobustConfig::default();
    let g = estimate_two_view(&m, &cfg, &Consensus { cfg }).unwrap();
    let mut all: Vec<usize> = g.near_epipolar.iter().chain(&g.retained).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..m.len()).collect::<Vec<_>>());
    assert!(g.near_epipolar.iter().all(|i| g.inliers_f.contains(i)));
    assert!(g.near_epipolar.iter().all(|i| !g.retained.contains(i)));
}

#[test]
fn zero_motion_falls_back_to_planar_gate() {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let m: Vec<KeypointMatch> = (0..30)
        .map(|_| {
            let p = Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
            KeypointMatch::new(p, p, 1.0)
        })
        .collect();
    let cfg = RobustConfig::default();
    let g = estimate_two_view(&m, &cfg, &Consensus { cfg }).unwrap();
    assert!(g.fundamental.is_none());
    assert_eq!(g.near_epipolar.len(), 30);
    assert!(matches!(g.constraint(), Constraint::Planar(_)));
    assert!(g.constraint().distance(Point2::new(5.0, 5.0), Point2::new(5.0, 9.0)) > 3.9);
}

#[test]
fn estimation_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let clean = rig_matches(&mut rng, 40);
    let m = with_outliers(&mut rng, &clean, 0.3);
    let cfg = RobustConfig { seed: 9, ..RobustConfig::default() };
    let a = estimate_two_view(&m, &cfg, &Consensus { cfg }).unwrap();
    let b = estimate_two_view(&m, &cfg, &Consensus { cfg }).unwrap();
    assert_eq!(a, b);
}

#[test]
fn degenerate_inputs_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let m = rig_matches(&mut rng, 7);
    assert!(matches!(
        estimate_fundamental(&m, &RobustConfig::default()),
        Err(polymatch_core::Error::InsufficientData { needed: 8, got: 7 })
    ));
    let line: Vec<KeypointMatch> =
        (0..10).map(|i| KeypointMatch::new(Point2::new(i as f64, 2.0 * i as f64), Point2::new(i as f64, 1.0), 1.0)).collect();
    assert!(estimate_homography(&line, &RobustConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inlier_count_monotone_in_threshold(seed in any::<u64>(), t in 0.5f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rig_matches(&mut rng, 30);
        let lo = RobustConfig { inlier_threshold: t, ..RobustConfig::default() };
        let hi = RobustConfig { inlier_threshold: 2.0 * t, ..lo };
        let (_, a) = estimate_fundamental(&m, &lo).unwrap();
        let (_, b) = estimate_fundamental(&m, &hi).unwrap();
        prop_assert!(b.len() >= a.len());
    }

    #[test]
    fn gate_monotone_in_eps(seed in any::<u64>(), eps in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clean = rig_matches(&mut rng, 30);
        let m = with_outliers(&mut rng, &clean, 0.5);
        let (f, _) = estimate_fundamental(&clean, &RobustConfig::default()).unwrap();
        let (near, far) = filter_near_epipolar(&m, &f, eps);
        let (wider, _) = filter_near_epipolar(&m, &f, 2.0 * eps);
        prop_assert_eq!(near.len() + far.len(), m.len());
        prop_assert!(near.iter().all(|i| wider.contains(i)));
    }
}
