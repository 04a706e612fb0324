use mvdet_core::augment::{
    di_transform, disentangled_transform, pixel_depth_decode, pixel_depth_encode, vanilla_transform, AnnotatedFrame,
    AnnotatedObject, DepthScaler, ScaleMode, ScaleTransform,
};
use mvdet_core::synth::{default_object_bounds, gen_objects, gen_rig, object_depth, RigStyle};
use mvdet_core::CameraIntrinsics;
use proptest::prelude::*;

fn frame(seed: u64) -> AnnotatedFrame {
    let rig = gen_rig(&RigStyle::NuScenesLike).unwrap();
    let objects = gen_objects(seed, 12, &default_object_bounds())
        .into_iter()
        .map(|bbox| AnnotatedObject {
            depth: object_depth(&bbox, &rig),
            bbox,
        })
        .collect();
    AnnotatedFrame::new(rig, objects, None).unwrap()
}

fn intrinsics() -> impl Strategy<Value = CameraIntrinsics> {
    (100.0..3000.0f64, 100.0..3000.0f64).prop_map(|(fx, fy)| CameraIntrinsics::new(fx, fy, 800.0, 450.0, 1600, 900).unwrap())
}

proptest! {
    #[test]
    fn pixel_depth_is_scale_invariant(z in 0.5..100.0f64, intr in intrinsics(), r in 0.25..4.0f64, sigma in 0.5..2.0f64, mu in -1.0..1.0f64) {
        let scaler = DepthScaler { sigma, mu };
        let a = pixel_depth_decode(z, &DepthScaler::default(), &intr).unwrap();
        let b = pixel_depth_decode(z / r, &DepthScaler::default(), &intr.scaled(r).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        let d = pixel_depth_decode(z, &scaler, &intr).unwrap();
        let back = pixel_depth_encode(d, &scaler, &intr).unwrap();
        prop_assert!((back - z).abs() <= 1e-12 * z);
    }

    #[test]
    fn di_composes(seed: u64, r1 in 0.3..3.0f64, r2 in 0.3..3.0f64) {
        let f = frame(seed);
        let twice = di_transform(&di_transform(&f, r1).unwrap(), r2).unwrap();
        let once = di_transform(&f, r1 * r2).unwrap();
        let (a, b) = (twice.objects(), once.objects());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.depth, y.depth);
            prop_assert_eq!(&x.bbox, &y.bbox);
        }
        for (s, t) in twice.image_sizes().unwrap().iter().zip(once.image_sizes().unwrap()) {
            prop_assert!(s[0].abs_diff(t[0]) <= 1 && s[1].abs_diff(t[1]) <= 1);
        }
    }

    #[test]
    fn di_round_trip(seed: u64, k in 1u32..8) {
        let r = k as f64 / 4.0;
        let f = frame(seed);
        let back = di_transform(&di_transform(&f, r).unwrap(), 1.0 / r).unwrap();
        for (x, y) in back.objects().iter().zip(f.objects()) {
            prop_assert_eq!(&x.bbox, &y.bbox);
            prop_assert!((x.depth - y.depth).abs() <= 1e-12 * y.depth.abs());
        }
        // 1600 and 900 times a multiple of 1/4 are integers.
        prop_assert_eq!(back.image_sizes().unwrap(), f.image_sizes().unwrap());
        prop_assert_eq!(back.rig(), f.rig());
    }

    #[test]
    fn transforms_touch_only_their_fields(seed: u64, r in 0.3..3.0f64) {
        let f = frame(seed);
        let di = di_transform(&f, r).unwrap();
        let vanilla = vanilla_transform(&f, r).unwrap();
        prop_assert_eq!(di.rig(), f.rig());
        for ((d, v), o) in di.objects().iter().zip(vanilla.objects()).zip(f.objects()) {
            prop_assert_eq!(&d.bbox, &o.bbox);
            prop_assert_eq!(d.depth, o.depth / r);
            prop_assert_eq!(&v, &o);
        }
        for (cv, c) in vanilla.rig().cameras().iter().zip(f.rig().cameras()) {
            prop_assert_eq!(cv.intrinsics, c.intrinsics.scaled(r).unwrap());
            prop_assert_eq!(&cv.extrinsics, &c.extrinsics);
        }
        prop_assert!(disentangled_transform(&f, r).unwrap().regression_mask() == (r == 1.0));
    }

    #[test]
    fn unit_scale_is_identity(seed: u64) {
        let f = frame(seed);
        for mode in [ScaleMode::Vanilla, ScaleMode::DepthInvariant, ScaleMode::Disentangled] {
            let out = ScaleTransform::new(1.0, mode).unwrap().apply(&f).unwrap();
            prop_assert_eq!(out.rig(), f.rig());
            prop_assert_eq!(out.objects(), f.objects());
            prop_assert_eq!(out.image_sizes().unwrap(), f.image_sizes().unwrap());
            prop_assert!(out.regression_mask());
            prop_assert_eq!(out.to_json().unwrap(), f.to_json().unwrap());
        }
    }

    #[test]
    fn json_round_trip_after_di(seed: u64, r in 0.3..3.0f64) {
        let out = di_transform(&frame(seed), r).unwrap();
        let json = out.to_json().unwrap();
        let back = AnnotatedFrame::from_json(&json).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), json);
    }
}
