use courtlift::camera::Distortion;
use courtlift::reconstruct::{
    crop_transform, foot_pixel, ground_of, reconstruct_from_diameter, reconstruct_from_height,
    to_crop, true_diameter_px, true_pixel_height,
};
use courtlift::synth::{generate_dataset, ArenaSpec, BallSample, HeightDistSpec};
use nalgebra::{Point3, Vector2};

fn samples(seed: u64, n: usize, arena: &ArenaSpec) -> Vec<BallSample> {
    generate_dataset(seed, n, arena, &HeightDistSpec::uniform(5.0), 10).unwrap()
}

#[test]
fn master_round_trip_without_distortion() {
    for s in samples(1, 1000, &ArenaSpec::default()) {
        let r = reconstruct_from_height(&s.cal, &s.ball_px, s.h_true).unwrap();
        let err = (r.ball_3d - s.ball_3d).norm();
        assert!(err < 1e-6, "sample {}: {err:e}", s.sample_id);
        assert!(r.plane_gap < 1e-6);
        assert_eq!(r.ground_projection.z, 0.0);
    }
}

#[test]
fn master_round_trip_with_distortion() {
    let arena =
        ArenaSpec { k1_range: [-0.3, 0.3], k2_range: [-0.05, 0.05], ..ArenaSpec::default() };
    for s in samples(2, 1000, &arena) {
        let r = reconstruct_from_height(&s.cal, &s.ball_px, s.h_true).unwrap();
        let err = (r.ball_3d - s.ball_3d).norm();
        assert!(err < 1e-4, "sample {}: {err:e}", s.sample_id);
    }
}

#[test]
fn foot_pixel_matches_projected_ground() {
    for s in samples(3, 1000, &ArenaSpec::default()) {
        let ball = s.cal.project_undistorted(&s.ball_3d).unwrap();
        let foot = foot_pixel(&s.cal, &ball, s.h_true).unwrap();
        let expected = s.cal.project_undistorted(&ground_of(&s.ball_3d)).unwrap();
        assert!((foot - expected).norm() < 0.05, "{foot} vs {expected}");
    }
}

#[test]
fn ground_case_is_exact() {
    for s in samples(4, 200, &ArenaSpec::default()) {
        let g = ground_of(&s.ball_3d);
        let px = s.cal.project(&g).unwrap();
        let r = reconstruct_from_height(&s.cal, &px, 0.0).unwrap();
        assert_eq!(r.ball_3d, r.ground_projection);
        assert!((r.ball_3d - g).norm() < 1e-6);
    }
}

#[test]
fn reconstruction_is_scale_invariant() {
    let data = samples(5, 500, &ArenaSpec::default());
    for (i, s) in data.iter().enumerate() {
        // Off-by-a-bit heights too, not just the exact ones.
        let h = s.h_true + (i % 7) as f64 * 3.0 - 9.0;
        let Ok(base) = reconstruct_from_height(&s.cal, &s.ball_px, h) else {
            continue;
        };
        for scale in [0.5, 0.25, 0.125] {
            let cal = s.cal.scaled(scale).unwrap();
            let r = reconstruct_from_height(&cal, &(s.ball_px * scale), h * scale).unwrap();
            assert!((r.ball_3d - base.ball_3d).norm() < 1e-9, "{scale}");
            assert!((r.ground_projection - base.ground_projection).norm() < 1e-9);
        }
    }
}

#[test]
fn mean_error_grows_with_height_offset() {
    let data = samples(6, 1000, &ArenaSpec::default());
    let mean_err = |dh: f64| {
        let errs: Vec<f64> = data
            .iter()
            .filter_map(|s| reconstruct_from_height(&s.cal, &s.ball_px, s.h_true + dh).ok())
            .zip(&data)
            .map(|(r, s)| (r.ball_3d - s.ball_3d).norm())
            .collect();
        assert_eq!(errs.len(), data.len());
        errs.iter().sum::<f64>() / errs.len() as f64
    };
    let curve: Vec<f64> = [0.0, 5.0, 10.0, 20.0, 40.0].into_iter().map(mean_err).collect();
    assert!(curve[0] < 1e-6);
    assert!(curve.windows(2).all(|w| w[1] >= w[0]), "{curve:?}");
}

#[test]
fn crop_rectifies_vertical() {
    for s in samples(7, 300, &ArenaSpec::default()) {
        for scale in [1.0, 0.5] {
            let t = crop_transform(&s.cal, &s.ball_px, 256.0, scale).unwrap();
            let b = to_crop(&t, &s.ball_px);
            assert!((b.coords - Vector2::new(128.0, 128.0)).norm() < 1e-9);
            let d = to_crop(&t, &s.foot_px) - b;
            assert!((d - Vector2::new(0.0, scale * s.h_true)).norm() < 0.1, "{d}");
        }
    }
}

/// Least-squares line fit; returns R^2.
fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

#[test]
fn baseline_error_grows_linearly_with_distance() {
    let cal = courtlift::CameraCalibration::pinhole(2000.0, 2000.0, 2250.0, 750.0, 4500.0, 1500.0)
        .looking_at(
            Point3::new(0.0, -30.0, 6.0),
            Point3::new(0.0, 0.0, 1.0),
            nalgebra::Vector3::z(),
        )
        .unwrap();
    let eps = 0.1;
    let (mut depths, mut errors) = (Vec::new(), Vec::new());
    for k in 0..20 {
        let b = Point3::new(3.0, -20.0 + 2.0 * k as f64, 1.5);
        let d = true_diameter_px(&cal, &b, 0.24).unwrap();
        let r = reconstruct_from_diameter(&cal, &cal.project(&b).unwrap(), d * (1.0 + eps), 0.24)
            .unwrap();
        depths.push(cal.depth(&b));
        errors.push((r.ball_3d - b).norm());
    }
    let r2 = r_squared(&depths, &errors);
    assert!(r2 > 0.99, "R^2 = {r2}");
    assert!(errors.last().unwrap() > errors.first().unwrap());
}

#[test]
fn diameter_oracle_recovers_ball() {
    let arena = ArenaSpec { k1_range: [-0.1, 0.0], ..ArenaSpec::default() };
    for s in samples(8, 500, &arena) {
        let r = reconstruct_from_diameter(&s.cal, &s.ball_px, s.diameter_px_true, 0.24).unwrap();
        assert!((r.ball_3d - s.ball_3d).norm() < 1e-6);
    }
}

#[test]
fn pixel_height_matches_annotation_distance() {
    let arena = ArenaSpec::default();
    for s in samples(9, 200, &arena) {
        assert_eq!(s.cal.distortion, Distortion::default());
        assert!(((s.foot_px - s.ball_px).norm() - s.h_true).abs() < 1e-9);
        assert_eq!(true_pixel_height(&s.cal, &s.ball_3d).unwrap(), s.h_true);
    }
}
