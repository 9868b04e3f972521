//! Procedural box-city scenes with ground-truth and prior poses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{rot_z, wrap_degrees, EulerPose, Intrinsics, Vec3};
use crate::error::Result;
use crate::geometry::{box_faces, Mesh};

#[derive(Debug, Clone, PartialEq)]
pub struct CityConfig {
    pub seed: u64,
    /// The city covers `[-half_extent, half_extent]²`.
    pub half_extent: f64,
    /// City block pitch; each block holds at most one building.
    pub block: f64,
    pub occupancy: f64,
    pub min_footprint: f64,
    pub height_range: (f64, f64),
    pub gable_fraction: f64,
    /// Footprints are rotated by a uniform angle in `[0, max_rotation_deg)`.
    pub max_rotation_deg: f64,
}

impl Default for CityConfig {
    fn default() -> Self {
        CityConfig {
            seed: 0,
            half_extent: 300.0,
            block: 42.0,
            occupancy: 0.85,
            min_footprint: 10.0,
            height_range: (8.0, 50.0),
            gable_fraction: 0.25,
            max_rotation_deg: 90.0,
        }
    }
}

/// Closed building with a gable roof whose ridge runs along x.
fn gable_faces(min: Vec3, max: Vec3, ridge_rise: f64, base: usize) -> (Vec<Vec3>, Vec<Vec<usize>>) {
    let (x0, y0, x1, y1, h) = (min.x, min.y, max.x, max.y, max.z);
    let ym = 0.5 * (y0 + y1);
    let v = vec![
        Vec3::new(x0, y0, min.z),
        Vec3::new(x1, y0, min.z),
        Vec3::new(x1, y1, min.z),
        Vec3::new(x0, y1, min.z),
        Vec3::new(x0, y0, h),
        Vec3::new(x1, y0, h),
        Vec3::new(x1, y1, h),
        Vec3::new(x0, y1, h),
        Vec3::new(x0, ym, h + ridge_rise),
        Vec3::new(x1, ym, h + ridge_rise),
    ];
    let f: [&[usize]; 7] = [
        &[0, 3, 2, 1],
        &[0, 1, 5, 4],
        &[2, 3, 7, 6],
        &[1, 2, 6, 9, 5],
        &[3, 0, 4, 8, 7],
        &[4, 5, 9, 8],
        &[6, 7, 8, 9],
    ];
    let faces = f.iter().map(|q| q.iter().map(|i| i + base).collect()).collect();
    (v, faces)
}

pub fn box_city(cfg: &CityConfig) -> Result<Mesh> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let cells = (2.0 * cfg.half_extent / cfg.block).floor() as usize;
    let street = 6.0;
    for i in 0..cells {
        for j in 0..cells {
            if rng.gen::<f64>() > cfg.occupancy {
                continue;
            }
            let cx0 = -cfg.half_extent + i as f64 * cfg.block;
            let cy0 = -cfg.half_extent + j as f64 * cfg.block;
            // the rotated footprint must stay inside the circle inscribed in the lot
            let room = cfg.block - street;
            let w = rng.gen_range(cfg.min_footprint..room * 0.7);
            let d_max = (room * room - w * w).sqrt().min(room * 0.7);
            let d = rng.gen_range(cfg.min_footprint.min(d_max)..=d_max);
            let slack = (room - (w * w + d * d).sqrt()) / 2.0;
            let cx = cx0 + cfg.block / 2.0 + rng.gen_range(-slack..=slack);
            let cy = cy0 + cfg.block / 2.0 + rng.gen_range(-slack..=slack);
            let h = rng.gen_range(cfg.height_range.0..cfg.height_range.1);
            let angle = if cfg.max_rotation_deg > 0.0 {
                rng.gen_range(0.0..cfg.max_rotation_deg)
            } else {
                0.0
            };
            let min = Vec3::new(-w / 2.0, -d / 2.0, 0.0);
            let max = Vec3::new(w / 2.0, d / 2.0, h);
            let (v, f) = if rng.gen::<f64>() < cfg.gable_fraction {
                let rise = rng.gen_range(3.0..8.0);
                gable_faces(min, max, rise, vertices.len())
            } else {
                box_faces(min, max, vertices.len())
            };
            let r = rot_z(angle);
            let offset = Vec3::new(cx, cy, 0.0);
            vertices.extend(v.into_iter().map(|p| r * p + offset));
            faces.extend(f);
        }
    }
    Mesh::new(vertices, faces)
}

/// Camera used by the synthetic scenes (512x480, ~65° horizontal FOV).
pub fn default_intrinsics() -> Intrinsics {
    Intrinsics {
        fx: 400.0,
        fy: 400.0,
        cx: 256.0,
        cy: 240.0,
        width: 512,
        height: 480,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryConfig {
    pub seed: u64,
    pub count: usize,
    /// Ground-truth camera centers are drawn in `[-xy_extent, xy_extent]²`.
    pub xy_extent: f64,
    pub altitude: (f64, f64),
    pub pitch: (f64, f64),
    pub roll: (f64, f64),
    /// Prior error half-widths for (x, y, z, yaw): uniform in `±value`.
    pub prior_error: [f64; 4],
    /// Prior pitch/roll error half-width, degrees.
    pub prior_tilt_error: f64,
}

impl Default for QueryConfig {
    fn default() -> Self {
        QueryConfig {
            seed: 0,
            count: 10,
            xy_extent: 150.0,
            altitude: (120.0, 180.0),
            pitch: (-15.0, 15.0),
            roll: (-5.0, 5.0),
            prior_error: [10.0, 10.0, 30.0, 7.5],
            prior_tilt_error: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticQuery {
    pub name: String,
    pub gt: EulerPose,
    pub prior: EulerPose,
}

fn sym(rng: &mut ChaCha8Rng, half: f64) -> f64 {
    if half > 0.0 {
        rng.gen_range(-half..=half)
    } else {
        0.0
    }
}

pub fn synth_queries(cfg: &QueryConfig) -> Vec<SyntheticQuery> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.count)
        .map(|i| {
            let gt = EulerPose::new(
                rng.gen_range(-cfg.xy_extent..=cfg.xy_extent),
                rng.gen_range(-cfg.xy_extent..=cfg.xy_extent),
                rng.gen_range(cfg.altitude.0..=cfg.altitude.1),
                wrap_degrees(rng.gen_range(-180.0..180.0)),
                rng.gen_range(cfg.pitch.0..=cfg.pitch.1),
                rng.gen_range(cfg.roll.0..=cfg.roll.1),
            );
            let e = cfg.prior_error;
            let prior = EulerPose::new(
                gt.x + sym(&mut rng, e[0]),
                gt.y + sym(&mut rng, e[1]),
                gt.z + sym(&mut rng, e[2]),
                wrap_degrees(gt.yaw + sym(&mut rng, e[3])),
                gt.pitch + sym(&mut rng, cfg.prior_tilt_error),
                gt.roll + sym(&mut rng, cfg.prior_tilt_error),
            );
            SyntheticQuery {
                name: format!("q{i:04}"),
                gt,
                prior,
            }
        })
        .collect()
}
