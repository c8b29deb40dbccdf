//! Synthetic stand-in for robot-collected datasets: a fixed room rendered at
//! every grid pose, with pose jitter and pixel noise emulating odometry and
//! sensor noise.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, DatasetRecord, GridDataset, LoadOptions};
use crate::grid::{GridMap, Pose};
use crate::sim::{render_camera, Camera, ObjectClass, PlacedObject, RenderConfig, RoomLayout};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Standard deviation of the position error, meters.
    pub position_m: f64,
    /// Standard deviation of the heading error, degrees.
    pub heading_deg: f64,
    /// Standard deviation of additive pixel noise (intensity units).
    pub pixel: f64,
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig { position_m: 0.0, heading_deg: 0.0, pixel: 0.0 };

    /// Scaled noise preset; level 1 is "low".
    pub fn level(level: f64) -> Self {
        NoiseConfig { position_m: 0.01 * level, heading_deg: 2.0 * level, pixel: 0.02 * level }
    }

    pub fn is_zero(&self) -> bool {
        self.position_m == 0.0 && self.heading_deg == 0.0 && self.pixel == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub images_per_pose: usize,
    pub noise: NoiseConfig,
    pub resolution: f64,
    pub render: RenderConfig,
    /// Probability that a wall position starts an object.
    pub object_density: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            seed: 0,
            width: 6,
            height: 6,
            images_per_pose: 2,
            noise: NoiseConfig::level(1.0),
            resolution: 0.2,
            render: RenderConfig::default(),
            object_density: 0.45,
        }
    }
}

/// Room around the pose grid: a one-cell blocked ring with objects standing
/// against the walls. Grid cell `(c, r)` is room cell `(c + 1, r + 1)`.
fn dataset_room(cfg: &GenerateConfig, rng: &mut ChaCha8Rng) -> RoomLayout {
    let (w, h) = (cfg.width + 2, cfg.height + 2);
    let mut map = GridMap::empty(w, h, cfg.resolution).expect("positive resolution");
    for c in 0..w {
        map.set_blocked(c, 0, true);
        map.set_blocked(c, h - 1, true);
    }
    for r in 0..h {
        map.set_blocked(0, r, true);
        map.set_blocked(w - 1, r, true);
    }
    let mut layout = RoomLayout::bare(map, rng.gen(), 0.1);
    // Each side of the ring, corners excluded.
    let sides: [Vec<(i32, i32)>; 4] = [
        (1..w as i32 - 1).map(|c| (c, 0)).collect(),
        (1..w as i32 - 1).map(|c| (c, h as i32 - 1)).collect(),
        (1..h as i32 - 1).map(|r| (0, r)).collect(),
        (1..h as i32 - 1).map(|r| (w as i32 - 1, r)).collect(),
    ];
    for side in sides {
        let mut k = 0;
        while k < side.len() {
            if rng.gen_bool(cfg.object_density.clamp(0.0, 1.0)) {
                let class = ObjectClass::CATALOG[rng.gen_range(0..ObjectClass::CATALOG.len())];
                let len = class.footprint_len().min(side.len() - k);
                let cells = side[k..k + len].to_vec();
                let color = class.base_color().map(|v| (v + rng.gen_range(-0.1f32..=0.1)).clamp(0.0, 1.0));
                layout.add_object(PlacedObject { class, cells, color, texture_seed: rng.gen() });
                k += len;
            } else {
                k += 1;
            }
        }
    }
    layout
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; avoids ln(0).
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Renders `images_per_pose` images for every pose of a `width x height`
/// open grid. Deterministic in `cfg.seed`; with zero noise all images of a
/// pose are identical. Pixel values are quantized to the on-disk precision,
/// so writing and re-loading yields the same dataset.
pub fn generate_synthetic_dataset(cfg: &GenerateConfig) -> Result<GridDataset, DatasetError> {
    assert!(cfg.images_per_pose >= 1, "images_per_pose must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let layout = dataset_room(cfg, &mut rng);
    let map = GridMap::empty(cfg.width, cfg.height, cfg.resolution)?;
    let res = cfg.resolution;
    // Jitter stays well inside the default snapping tolerance.
    let max_offset = 0.2 * res;
    let mut records = Vec::with_capacity(map.state_count() * cfg.images_per_pose);
    for pose in map.free_poses() {
        for i in 0..cfg.images_per_pose {
            let (dx, dy, dyaw) = if cfg.noise.is_zero() {
                (0.0, 0.0, 0.0)
            } else {
                (
                    (gaussian(&mut rng) * cfg.noise.position_m).clamp(-max_offset, max_offset),
                    (gaussian(&mut rng) * cfg.noise.position_m).clamp(-max_offset, max_offset),
                    gaussian(&mut rng) * cfg.noise.heading_deg,
                )
            };
            let cam = Camera {
                x: pose.col as f64 + 1.5 + dx / res,
                y: pose.row as f64 + 1.5 + dy / res,
                yaw_deg: pose.heading.degrees() + dyaw,
            };
            let (mut rgb, mut depth) = render_camera(&layout, &cam, &cfg.render);
            if cfg.noise.pixel > 0.0 {
                for v in rgb.data.iter_mut() {
                    *v = (*v as f64 + gaussian(&mut rng) * cfg.noise.pixel).clamp(0.0, 1.0) as f32;
                }
                for v in depth.data.iter_mut() {
                    *v = (*v as f64 * (1.0 + gaussian(&mut rng) * cfg.noise.pixel)).max(0.0) as f32;
                }
            }
            records.push(DatasetRecord {
                x: pose.col as f64 * res + dx,
                y: pose.row as f64 * res + dy,
                phi: pose.heading,
                i: i as u32,
                rgb: Arc::new(rgb.quantize_rgb()),
                depth: Arc::new(depth.quantize_depth()),
            });
        }
    }
    let goals: Vec<Pose> = map.free_poses().into_iter().filter(|p| map.faces_obstacle(p)).collect();
    GridDataset::new(map, records, goals, cfg.render.max_depth_m, LoadOptions::default())
}
