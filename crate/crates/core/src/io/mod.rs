//! File formats: PFM distance maps, 8-bit images, intrinsics and odometry
//! JSON, pose lists, and snippet bundle directories.

mod bundle;
mod pfm;
mod pnm;
mod text;

pub use bundle::{read_bundle, write_bundle, BundleOptions};
pub use pfm::{decode_pfm, encode_pfm, read_distance, read_pfm, write_distance, write_pfm, FloatMap};
pub use pnm::{decode_pnm, encode_pnm, read_image, write_image};
pub use text::{
    parse_intrinsics, parse_poses, read_intrinsics, read_odometry, read_poses, read_scene, write_intrinsics,
    write_odometry, write_poses, write_scene,
};
