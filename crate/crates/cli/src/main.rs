use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use fdnet::camera::{
    rectification_map, remap, CameraModel, CylindricalSpec, FisheyeCamera, FisheyeIntrinsics, Pixel,
    PinholeIntrinsics, Point3, RectifyTarget,
};
use fdnet::image::DistanceMap;
use fdnet::io::{self, BundleOptions};
use fdnet::losses::{LossWeights, Objective};
use fdnet::metrics;
use fdnet::optim::{grad_check_objective, optimize_distance, GradCheckConfig, OptimConfig};
use fdnet::se3::{Pose, PoseSet};
use fdnet::synth::{make_snippet, straight_trajectory, Scene, SequenceSnippet};
use fdnet::warp::synthesize_view;
use fdnet::{Error, Result};

/// Fisheye distance estimation toolkit. Every command prints JSON on stdout.
#[derive(Parser)]
#[command(name = "fdnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Project a camera-frame point to pixel coordinates.
    Project {
        #[arg(long)]
        intrinsics: PathBuf,
        #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
        point: Vec<f64>,
    },
    /// Lift a pixel to a camera-frame point at a Euclidean distance.
    Unproject {
        #[arg(long)]
        intrinsics: PathBuf,
        #[arg(long, num_args = 2, value_names = ["U", "V"], allow_negative_numbers = true)]
        pixel: Vec<f64>,
        #[arg(long)]
        distance: f64,
    },
    /// Undistort a fisheye image into a rectilinear or cylindrical view.
    Rectify {
        #[arg(long)]
        intrinsics: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Projection::Rectilinear)]
        projection: Projection,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// Focal length in pixels (pixels per radian horizontally for cylindrical).
        #[arg(long)]
        focal: Option<f64>,
    },
    /// Render a synthetic snippet bundle moving along a straight line.
    Render {
        /// Scene JSON; the built-in panel and sphere scene when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 40)]
        height: usize,
        #[arg(long, default_value_t = 3)]
        frames: usize,
        /// Camera displacement per frame in metres.
        #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], default_values_t = [0.5, 0.0, 0.0], allow_negative_numbers = true)]
        step: Vec<f64>,
        /// Vehicle speed in m/s.
        #[arg(long, default_value_t = 3.0)]
        speed: f64,
        #[arg(long)]
        png: bool,
    },
    /// Reconstruct a target frame from a source frame of a bundle.
    Warp {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        target: usize,
        #[arg(long)]
        source: usize,
        /// Target-to-source pose "roll pitch yaw tx ty tz"; from poses.txt when omitted.
        #[arg(long, allow_hyphen_values = true)]
        pose: Option<String>,
        /// Target distance map; the bundle ground truth when omitted.
        #[arg(long)]
        distance: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Recover per-frame distance maps of a bundle by direct optimisation.
    Optimize {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        #[arg(long, default_value_t = 0.2)]
        step_size: f64,
        #[arg(long, default_value_t = 5.0)]
        init: f64,
        #[arg(long, value_enum, default_value_t = PoseSource::Odometry)]
        poses: PoseSource,
        #[arg(long, default_value_t = 4)]
        scales: usize,
    },
    /// Finite-difference check of the objective gradient on a bundle.
    Gradcheck {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Constant distance to check at; the ground truth when omitted.
        #[arg(long)]
        init: Option<f64>,
        #[arg(long, default_value_t = 4)]
        scales: usize,
        #[arg(long)]
        automask: bool,
    },
    /// Error metrics between a predicted and a ground-truth PFM.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long, default_value_t = 80.0)]
        cap: f64,
        #[arg(long)]
        median_scale: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Projection {
    Rectilinear,
    Cylindrical,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoseSource {
    /// Bundle poses with baselines rescaled to the odometry displacement.
    Odometry,
    /// Bundle poses as stored.
    Stored,
}

fn fisheye(path: &Path) -> Result<FisheyeIntrinsics> {
    match io::read_intrinsics(path)? {
        CameraModel::Fisheye(k) => Ok(k),
        CameraModel::Pinhole(_) => Err(Error::InvalidArgument(format!("{}: fisheye intrinsics required", path.display()))),
    }
}

fn poses_of(snippet: &SequenceSnippet, source: PoseSource) -> Result<PoseSet> {
    match source {
        PoseSource::Odometry => snippet.odometry_scaled_poses(),
        PoseSource::Stored => snippet.pose_set(),
    }
}

fn ground_truth(snippet: &SequenceSnippet) -> Result<Vec<DistanceMap>> {
    snippet
        .ground_truth()
        .ok_or_else(|| Error::InvalidArgument("bundle has no frame_%03d_dist.pfm ground truth".into()))
}

fn run(command: Command) -> Result<Value> {
    match command {
        Command::Project { intrinsics, point } => {
            let x = Point3::new(point[0], point[1], point[2]);
            let (p, valid) = match io::read_intrinsics(&intrinsics)? {
                CameraModel::Fisheye(k) => k.project(&x)?,
                CameraModel::Pinhole(k) => k.project(&x),
            };
            Ok(json!({ "u": p.u, "v": p.v, "valid": valid }))
        }
        Command::Unproject { intrinsics, pixel, distance } => {
            let p = Pixel::new(pixel[0], pixel[1]);
            let x = match io::read_intrinsics(&intrinsics)? {
                CameraModel::Fisheye(k) => FisheyeCamera::new(k)?.unproject(p, distance)?,
                CameraModel::Pinhole(k) => {
                    if !(distance > 0.0 && distance.is_finite()) {
                        return Err(Error::InvalidDistance(distance));
                    }
                    let ray = k.unproject(p, 1.0)?;
                    ray * (distance / ray.norm())
                }
            };
            Ok(json!({ "x": x.x, "y": x.y, "z": x.z }))
        }
        Command::Rectify { intrinsics, input, output, projection, width, height, focal } => {
            let k = fisheye(&intrinsics)?;
            let (w, h) = (width.unwrap_or(k.width), height.unwrap_or(k.height));
            let principal = [(w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0];
            let target = match projection {
                Projection::Rectilinear => {
                    let f = focal.unwrap_or(w as f64 / 2.0);
                    RectifyTarget::Rectilinear(PinholeIntrinsics::new([f, f], principal, w, h)?)
                }
                Projection::Cylindrical => {
                    let f = focal.unwrap_or(w as f64 / std::f64::consts::PI);
                    if f.is_nan() || f <= 0.0 {
                        return Err(Error::InvalidArgument(format!("focal must be positive, got {f}")));
                    }
                    RectifyTarget::Cylindrical(CylindricalSpec { f_u: f, f_v: f, principal, width: w, height: h })
                }
            };
            let image = io::read_image(&input)?;
            if image.width() != k.width || image.height() != k.height {
                return Err(Error::DimensionMismatch(format!(
                    "image is {}x{}, intrinsics expect {}x{}",
                    image.width(),
                    image.height(),
                    k.width,
                    k.height
                )));
            }
            let (out, mask) = remap(&image, &rectification_map(&k, &target));
            io::write_image(&output, &out)?;
            Ok(json!({ "width": w, "height": h, "valid_fraction": mask.fraction() }))
        }
        Command::Render { scene, out, width, height, frames, step, speed, png } => {
            let scene = match scene {
                Some(path) => io::read_scene(&path)?,
                None => Scene::panel_and_sphere(),
            };
            let k = FisheyeIntrinsics::reference(width, height);
            let trajectory = straight_trajectory(frames, Point3::new(step[0], step[1], step[2]), speed);
            let snippet = make_snippet(&scene, &k, &trajectory, frames)?;
            io::write_bundle(&out, &snippet, BundleOptions { png })?;
            Ok(json!({ "frames": frames, "width": width, "height": height, "out": out }))
        }
        Command::Warp { bundle, target, source, pose, distance, output } => {
            let snippet = io::read_bundle(&bundle)?;
            let n = snippet.len();
            if target >= n || source >= n {
                return Err(Error::InvalidArgument(format!("frames must be below {n}")));
            }
            let pose: Pose = match pose {
                Some(text) => text.parse()?,
                None => snippet.pose_set()?.pair(target, source)?,
            };
            let d = match distance {
                Some(path) => io::read_distance(path)?,
                None => ground_truth(&snippet)?.swap_remove(target),
            };
            let camera = FisheyeCamera::new(snippet.intrinsics)?;
            let (recon, mask) = synthesize_view(&d, &snippet.frames[source].image, &pose, &camera)?;
            io::write_image(&output, &recon)?;
            let target_image = &snippet.frames[target].image;
            let c = recon.channels();
            let (sum, count) = mask.data().iter().enumerate().filter(|(_, &m)| m).fold((0.0, 0usize), |(s, n), (i, _)| {
                let e: f64 = (0..c).map(|ch| (recon.data()[i * c + ch] - target_image.data()[i * c + ch]).abs()).sum();
                (s + e / c as f64, n + 1)
            });
            let l1 = if count > 0 { Some(sum / count as f64) } else { None };
            Ok(json!({ "valid_fraction": mask.fraction(), "mean_abs_error": l1 }))
        }
        Command::Optimize { bundle, out, iterations, step_size, init, poses, scales } => {
            let snippet = io::read_bundle(&bundle)?;
            let poses = poses_of(&snippet, poses)?;
            let cfg = OptimConfig {
                iterations,
                step_size,
                init_distance: init,
                weights: LossWeights { n_scales: scales, ..Default::default() },
                ..Default::default()
            };
            let outcome = optimize_distance(&snippet, &poses, &cfg)?;
            std::fs::create_dir_all(&out)?;
            let mut files = Vec::new();
            for (i, d) in outcome.distances.iter().enumerate() {
                let path = out.join(format!("frame_{i:03}_pred.pfm"));
                io::write_distance(&path, d)?;
                files.push(path);
            }
            let trace_path = out.join("trace.json");
            std::fs::write(&trace_path, serde_json::to_string(&outcome.trace)?)?;
            let metrics = match snippet.ground_truth() {
                Some(gt) => Some(
                    outcome
                        .distances
                        .iter()
                        .zip(&gt)
                        .map(|(p, g)| metrics::evaluate(p, g, 80.0, false))
                        .collect::<Result<Vec<_>>>()?,
                ),
                None => None,
            };
            let first = &outcome.trace[0];
            let last = outcome.trace.last().expect("trace is never empty");
            Ok(json!({
                "iterations": iterations,
                "initial_total": first.total,
                "final_total": last.total,
                "final": last,
                "distances": files,
                "trace": trace_path,
                "metrics": metrics,
            }))
        }
        Command::Gradcheck { bundle, samples, epsilon, seed, init, scales, automask } => {
            let snippet = io::read_bundle(&bundle)?;
            let poses = snippet.odometry_scaled_poses()?;
            let weights = LossWeights { n_scales: scales, ..Default::default() };
            let maps = match init {
                Some(d) => {
                    let k = &snippet.intrinsics;
                    vec![DistanceMap::constant(k.width, k.height, d)?; snippet.len()]
                }
                None => ground_truth(&snippet)?,
            };
            let objective = Objective::new(&snippet, &poses, weights)?;
            let cfg = GradCheckConfig { epsilon, samples, seed, ..Default::default() };
            Ok(serde_json::to_value(grad_check_objective(&objective, &maps, automask, &cfg)?)?)
        }
        Command::Eval { pred, gt, cap, median_scale } => {
            let (p, g) = (io::read_pfm(&pred)?, io::read_pfm(&gt)?);
            if (p.width, p.height) != (g.width, g.height) {
                return Err(Error::DimensionMismatch(format!(
                    "prediction {}x{} vs ground truth {}x{}",
                    p.width, p.height, g.width, g.height
                )));
            }
            Ok(serde_json::to_value(metrics::evaluate_values(&p.to_f64(), &g.to_f64(), cap, median_scale)?)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Ok(n) = std::env::var("FDNET_THREADS") {
        match n.trim().parse() {
            Ok(n) => fdnet::parallel::set_threads(n),
            Err(_) => {
                eprintln!("error: FDNET_THREADS must be a non-negative integer, got {n:?}");
                return ExitCode::from(1);
            }
        }
    }
    match run(cli.command) {
        Ok(value) => {
            // a closed stdout (e.g. piped into `head`) is not an error
            let _ = writeln!(std::io::stdout(), "{value}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
