use mvdet_core::camgeo::{
    box_corners, classify_region, pixel_size, pixel_size_from_focal, project_point, visible_cameras,
};
use mvdet_core::synth::{gen_rig, RigStyle};
use mvdet_core::{Box3D, CameraExtrinsics, CameraIntrinsics, CameraModel, CameraRig, Region};
use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

fn intrinsics() -> impl Strategy<Value = CameraIntrinsics> {
    (100.0..3000.0f64, 100.0..3000.0f64, 0.05..0.95f64, 0.05..0.95f64, 64u32..2000, 64u32..2000).prop_map(
        |(fx, fy, ax, ay, w, h)| CameraIntrinsics::new(fx, fy, ax * w as f64, ay * h as f64, w, h).unwrap(),
    )
}

fn camera(intr: CameraIntrinsics, yaw: f64, x: f64, y: f64) -> CameraModel {
    CameraModel::new("cam", intr, CameraExtrinsics::looking_along(yaw, Vector3::new(x, y, 1.5)))
}

fn boxes() -> impl Strategy<Value = Box3D> {
    (
        -40.0..40.0f64,
        -40.0..40.0f64,
        -1.0..2.0f64,
        0.5..5.0f64,
        0.5..5.0f64,
        0.5..5.0f64,
        -std::f64::consts::PI..std::f64::consts::PI,
    )
        .prop_map(|(x, y, z, w, l, h, yaw)| Box3D::new(Vector3::new(x, y, z), Vector3::new(w, l, h), yaw).unwrap())
}

proptest! {
    #[test]
    fn intrinsic_scaling_scales_pixels(
        intr in intrinsics(),
        r in 0.25..4.0f64,
        yaw in -3.0..3.0f64,
        p in (-30.0..30.0f64, -30.0..30.0f64, -3.0..3.0f64),
    ) {
        let cam = camera(intr, yaw, 0.3, -0.2);
        let scaled = CameraModel::new("cam", intr.scaled(r).unwrap(), cam.extrinsics);
        let p = Vector3::new(p.0, p.1, p.2);
        let a = project_point(&p, &cam);
        prop_assume!(a.depth > 0.1);
        let b = project_point(&p, &scaled);
        for k in 0..2 {
            let expected = r * a.pixel[k];
            prop_assert!((b.pixel[k] - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        }
        prop_assert_eq!(a.depth, b.depth);
    }

    #[test]
    fn pixel_size_scales_inversely(fx in 1.0..1e4f64, fy in 1.0..1e4f64, r in 0.1..10.0f64) {
        let p = pixel_size_from_focal(fx, fy).unwrap();
        let q = pixel_size_from_focal(r * fx, r * fy).unwrap();
        prop_assert!((q - p / r).abs() <= 1e-12 * (p / r));
    }

    #[test]
    fn back_projection_round_trip(
        intr in intrinsics(),
        yaw in -3.0..3.0f64,
        fu in 0.0..1.0f64,
        fv in 0.0..1.0f64,
        depth in 0.5..80.0f64,
    ) {
        let cam = camera(intr, yaw, 1.0, 0.5);
        let pixel = Vector2::new(fu * intr.width as f64, fv * intr.height as f64);
        let p = cam.back_project(&pixel, depth);
        let proj = project_point(&p, &cam);
        prop_assert!((proj.depth - depth).abs() <= 1e-9 * depth);
        prop_assert!((proj.pixel - pixel).norm() <= 1e-9 * pixel.norm().max(1.0));
    }

    #[test]
    fn corners_are_centered_and_symmetric(b in boxes()) {
        let c = box_corners(&b);
        let centroid = c.iter().fold(Vector3::zeros(), |acc, p| acc + p) / 8.0;
        prop_assert!((centroid - b.center).norm() <= 1e-12 * (1.0 + b.center.norm()));
        // Corner i and its bitwise complement are opposite.
        for i in 0..8 {
            let mid = (c[i] + c[7 - i]) / 2.0;
            prop_assert!((mid - b.center).norm() <= 1e-12 * (1.0 + b.center.norm()));
        }
    }

    #[test]
    fn region_is_invariant_to_camera_order(b in boxes(), shift in 0usize..6, reverse: bool) {
        let rig = gen_rig(&RigStyle::NuScenesLike).unwrap();
        let mut cams = rig.cameras().to_vec();
        cams.rotate_left(shift);
        if reverse {
            cams.reverse();
        }
        let permuted = CameraRig::new(cams).unwrap();
        prop_assert_eq!(classify_region(&b, &rig), classify_region(&b, &permuted));
    }

    #[test]
    fn region_matches_exhaustive_projection(b in boxes()) {
        let rig = gen_rig(&RigStyle::NuScenesLike).unwrap();
        let mut probes = vec![b.center];
        probes.extend(box_corners(&b));
        let sees = |c: &CameraModel, p: &Vector3<f64>| {
            let proj = project_point(p, c);
            proj.depth > 0.0
                && proj.pixel.x >= 0.0
                && proj.pixel.x < c.intrinsics.width as f64
                && proj.pixel.y >= 0.0
                && proj.pixel.y < c.intrinsics.height as f64
        };
        // A box spans every camera that sees its centroid or any corner.
        let spanned = rig.cameras().iter().filter(|c| probes.iter().any(|p| sees(c, p))).count();
        let expected = match spanned {
            0 => Region::Invisible,
            1 => Region::NonOverlapping,
            _ => Region::Overlapping,
        };
        let centroid_views = rig.cameras().iter().filter(|c| sees(c, &b.center)).count();
        prop_assert_eq!(classify_region(&b, &rig), expected);
        prop_assert_eq!(visible_cameras(&b.center, &rig).len(), centroid_views);
    }
}

#[test]
fn pixel_size_rejects_bad_focal() {
    assert!(pixel_size_from_focal(0.0, 1.0).is_err());
    assert!(pixel_size_from_focal(1.0, -2.0).is_err());
    let intr = CameraIntrinsics::new(1000.0, 1000.0, 800.0, 450.0, 1600, 900).unwrap();
    assert!((pixel_size(&intr).unwrap() - std::f64::consts::SQRT_2 * 1e-3).abs() < 1e-18);
}
