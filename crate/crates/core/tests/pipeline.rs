use fdnet::camera::{
    rectification_map, remap, FisheyeCamera, FisheyeIntrinsics, PinholeIntrinsics, Pixel, Point3, RectifyTarget,
};
use fdnet::image::DistanceMap;
use fdnet::losses::{EvalOptions, LossWeights, Objective};
use fdnet::optim::{loss_gradient, optimize_distance, OptimConfig};
use fdnet::parallel;
use fdnet::se3::PoseSet;
use fdnet::synth::{make_snippet, odometry_consistent, render, straight_trajectory, Scene};
use fdnet::warp::synthesize_view;

fn snippet(w: usize, h: usize, step: Point3) -> fdnet::synth::SequenceSnippet {
    make_snippet(&Scene::panel_and_sphere(), &FisheyeIntrinsics::reference(w, h), &straight_trajectory(3, step, 3.0), 3)
        .unwrap()
}

#[test]
fn rectified_lines_are_straight() {
    // Every rectified pixel must look along its pinhole ray. Then collinear
    // points in the output are coplanar rays, i.e. images of 3D lines.
    let k = FisheyeIntrinsics::reference(640, 400);
    let pin = PinholeIntrinsics::new([150.0, 150.0], [159.5, 99.5], 320, 200).unwrap();
    let grid = rectification_map(&k, &RectifyTarget::Rectilinear(pin));
    let mut checked = 0;
    for v in (0..200).step_by(7) {
        for u in (0..320).step_by(7) {
            let Some(g) = grid.coord(u, v) else { continue };
            let ray = k.ray_exact(g).unwrap();
            let want = Point3::new((u as f64 - 159.5) / 150.0, (v as f64 - 99.5) / 150.0, 1.0).normalize();
            assert!(ray.cross(&want).norm() < 1e-9, "({u}, {v})");
            checked += 1;
        }
    }
    assert!(checked > 1000);

    // and a 3D line lands on a straight row of rectified samples
    let line: Vec<Point3> = (0..9).map(|i| Point3::new(-1.0 + 0.25 * i as f64, 0.4 + 0.05 * i as f64, 2.0)).collect();
    let pts: Vec<Pixel> = line.iter().map(|x| pin.project(x).0).collect();
    for (x, p) in line.iter().zip(&pts) {
        let g = grid.coord(p.u.round() as usize, p.v.round() as usize).unwrap();
        let (fish, _) = k.project(x).unwrap();
        assert!((g.u - fish.u).hypot(g.v - fish.v) < 2.0);
    }
}

#[test]
fn rectify_keeps_image_content() {
    let s = snippet(64, 40, Point3::new(0.5, 0.0, 0.0));
    let k = s.intrinsics;
    let pin = PinholeIntrinsics::new([20.0, 20.0], [15.5, 9.5], 32, 20).unwrap();
    let (img, mask) = remap(&s.frames[0].image, &rectification_map(&k, &RectifyTarget::Rectilinear(pin)));
    assert!(mask.fraction() > 0.99);
    let mean = img.data().iter().sum::<f64>() / img.data().len() as f64;
    assert!(mean > 0.05);
}

#[test]
fn rendered_views_are_consistent() {
    let s = snippet(64, 40, Point3::new(0.3, 0.05, 0.1));
    assert!(odometry_consistent(&s));
    let camera = FisheyeCamera::new(s.intrinsics).unwrap();
    let poses = s.pose_set().unwrap();
    let gt = s.ground_truth().unwrap();
    let pose = poses.pair(1, 0).unwrap();
    let (recon, mask) = synthesize_view(&gt[1], &s.frames[0].image, &pose, &camera).unwrap();
    let errors: Vec<f64> = (0..64 * 40)
        .filter(|&i| mask.data()[i])
        .map(|i| (recon.data()[i] - s.frames[1].image.data()[i]).abs())
        .collect();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    assert!(sorted[sorted.len() / 2] < 0.01, "median photometric error {}", sorted[sorted.len() / 2]);

    // distances agree at reprojected points wherever the view is not occluded
    let (mut agree, mut total) = (0, 0);
    for v in 0..40 {
        for u in 0..64 {
            let Ok(x) = camera.unproject(Pixel::new(u as f64, v as f64), gt[1].get(u, v)) else { continue };
            let y = pose.apply(&x);
            let Ok((q, true)) = s.intrinsics.project(&y) else { continue };
            if q.u < 0.0 || q.v < 0.0 || q.u > 63.0 || q.v > 39.0 {
                continue;
            }
            total += 1;
            if (gt[0].get(q.u.round() as usize, q.v.round() as usize) - y.norm()).abs() / y.norm() < 0.05 {
                agree += 1;
            }
        }
    }
    assert!(agree as f64 > 0.85 * total as f64, "{agree} of {total}");
}

#[test]
fn render_is_deterministic() {
    let k = FisheyeIntrinsics::reference(32, 20);
    let model = fdnet::camera::CameraModel::Fisheye(k);
    let pose = fdnet::se3::Pose::new(0.02, -0.01, 0.03, Point3::new(0.1, 0.0, 0.2));
    assert_eq!(render(&Scene::desk(), &model, &pose), render(&Scene::desk(), &model, &pose));
}

#[test]
fn threads_do_not_change_results() {
    let s = snippet(32, 20, Point3::new(0.5, 0.0, 0.0));
    let poses = s.odometry_scaled_poses().unwrap();
    let maps = vec![DistanceMap::constant(32, 20, 3.0).unwrap(); 3];
    let weights = LossWeights::default();
    let sequential = loss_gradient(&s, &maps, &poses, &weights).unwrap();
    parallel::set_threads(4);
    let threaded = loss_gradient(&s, &maps, &poses, &weights).unwrap();
    parallel::set_threads(0);
    assert_eq!(sequential, threaded);
}

#[test]
fn static_scene_has_zero_photometric_gradient() {
    let s = snippet(32, 20, Point3::new(0.5, 0.0, 0.0));
    let mut still = s.clone();
    for f in &mut still.frames {
        f.image = s.frames[0].image.clone();
    }
    let maps = vec![DistanceMap::constant(32, 20, 3.0).unwrap(); 3];
    let weights = LossWeights { beta: 0.0, gamma: 0.0, ..Default::default() };
    let g = loss_gradient(&still, &maps, &PoseSet::identity(3), &weights).unwrap();
    assert!(g.iter().flatten().all(|x| *x == 0.0));
}

#[test]
fn short_optimisation_lowers_the_loss() {
    let s = snippet(32, 20, Point3::new(0.5, 0.0, 0.0));
    let poses = s.odometry_scaled_poses().unwrap();
    let cfg = OptimConfig { iterations: 60, step_size: 0.2, ..Default::default() };
    let out = optimize_distance(&s, &poses, &cfg).unwrap();
    assert_eq!(out.trace.len(), 61);
    let obj = Objective::new(&s, &poses, cfg.weights).unwrap();
    let off = EvalOptions { automask: false, ..Default::default() };
    let init = vec![DistanceMap::constant(32, 20, 5.0).unwrap(); 3];
    let before = obj.evaluate(&init, &off).unwrap().report.photometric();
    let after = obj.evaluate(&out.distances, &off).unwrap().report.photometric();
    assert!(after < 0.8 * before, "{before} -> {after}");
}

#[test]
fn degenerate_baseline_is_rejected() {
    let s = snippet(32, 20, Point3::new(0.5, 0.0, 0.0));
    let mut still = s.clone();
    for f in &mut still.frames {
        f.odometry.v = 0.0;
    }
    assert!(still.odometry_scaled_poses().is_err());
    assert!(optimize_distance(&s, &PoseSet::identity(3), &OptimConfig::default()).is_err());
}
