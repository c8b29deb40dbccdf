//! Column raycaster producing RGB-D frames of a room layout.
//!
//! The camera is a pinhole with a square image and equal horizontal and
//! vertical field of view. Depth is planar (distance along the optical
//! axis), as reported by a depth camera.

use serde::{Deserialize, Serialize};

use super::layout::RoomLayout;
use super::SimError;
use crate::grid::Pose;
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub size: usize,
    pub fov_deg: f64,
    pub camera_height_m: f64,
    pub wall_height_m: f64,
    pub max_depth_m: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { size: 84, fov_deg: 90.0, camera_height_m: 0.12, wall_height_m: 0.6, max_depth_m: 5.0 }
    }
}

/// Continuous camera placement, in cell units (cell `(c, r)` spans
/// `[c, c+1) x [r, r+1)`), with yaw counter-clockwise from east.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub x: f64,
    pub y: f64,
    pub yaw_deg: f64,
}

impl Camera {
    /// Camera at the center of the pose's cell.
    pub fn at_pose(pose: &Pose) -> Self {
        Camera { x: pose.col as f64 + 0.5, y: pose.row as f64 + 0.5, yaw_deg: pose.heading.degrees() }
    }
}

#[derive(Debug, Clone, Copy)]
enum Surface {
    /// Wall face seen while looking along `side` (N, E, S, W index), at the
    /// given cell coordinate along the wall.
    Wall { side: usize, along: i32, x_face: bool },
    Object { index: usize, x_face: bool },
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    /// Planar distance in meters.
    z: f64,
    top: f64,
    surface: Surface,
    /// Position along the face, in `[0, 1)`.
    u: f64,
}

fn hash3(seed: u64, a: i64, b: i64) -> f32 {
    let mut z = seed ^ (a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (b as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 40) as f32 / (1u64 << 23) as f32 - 1.0
}

/// Walks the grid along one ray and collects every blocked face it meets
/// until (and including) the first full-height wall.
fn cast(layout: &RoomLayout, cam: &Camera, dir: (f64, f64), cfg: &RenderConfig, hits: &mut Vec<Hit>) {
    hits.clear();
    let map = &layout.map;
    let res = map.resolution();
    let (px, py) = (cam.x, cam.y);
    let (dx, dy) = dir;
    let mut cx = px.floor() as i32;
    let mut cy = py.floor() as i32;
    let delta_x = if dx == 0.0 { f64::INFINITY } else { (1.0 / dx).abs() };
    let delta_y = if dy == 0.0 { f64::INFINITY } else { (1.0 / dy).abs() };
    let (step_x, mut side_x) = if dx < 0.0 { (-1, (px - cx as f64) * delta_x) } else { (1, (cx as f64 + 1.0 - px) * delta_x) };
    let (step_y, mut side_y) = if dy < 0.0 { (-1, (py - cy as f64) * delta_y) } else { (1, (cy as f64 + 1.0 - py) * delta_y) };
    let limit = 4 * (map.width() + map.height()) + 8;
    for _ in 0..limit {
        let x_face = side_x < side_y;
        let t = if x_face {
            let t = side_x;
            side_x += delta_x;
            cx += step_x;
            t
        } else {
            let t = side_y;
            side_y += delta_y;
            cy += step_y;
            t
        };
        if !map.is_blocked(cx, cy) {
            continue;
        }
        let hit_along = if x_face { py + t * dy } else { px + t * dx };
        let u = hit_along - hit_along.floor();
        let z = (t * res).max(1e-6);
        match layout.object_at(cx, cy) {
            Some(index) => {
                let top = layout.objects[index].class.height_m();
                hits.push(Hit { z, top, surface: Surface::Object { index, x_face }, u });
            }
            None => {
                let side = match (x_face, step_x > 0, step_y > 0) {
                    (true, true, _) => 1,
                    (true, false, _) => 3,
                    (false, _, true) => 0,
                    (false, _, false) => 2,
                };
                let along = if x_face { cy } else { cx };
                hits.push(Hit { z, top: cfg.wall_height_m, surface: Surface::Wall { side, along, x_face }, u });
                return;
            }
        }
    }
}

fn shade(base: [f32; 3], gain: f32, z: f64) -> [f32; 3] {
    let fog = 1.0 / (1.0 + 0.3 * z as f32);
    base.map(|c| (c * gain * fog).clamp(0.0, 1.0))
}

/// Renders from a continuous camera. Returns `(rgb, depth)`.
pub fn render_camera(layout: &RoomLayout, cam: &Camera, cfg: &RenderConfig) -> (Image, Image) {
    let n = cfg.size;
    let res = layout.map.resolution();
    let mut rgb = Image::zeros(3, n, n);
    let mut depth = Image::zeros(1, n, n);
    let half = (cfg.fov_deg.to_radians() / 2.0).tan();
    let yaw = cam.yaw_deg.to_radians();
    let fwd = (yaw.cos(), yaw.sin());
    let right = (yaw.sin(), -yaw.cos());
    let mut hits = Vec::with_capacity(8);
    let pal = &layout.palette;
    for x in 0..n {
        let s = (2.0 * (x as f64 + 0.5) / n as f64 - 1.0) * half;
        let dir = (fwd.0 + s * right.0, fwd.1 + s * right.1);
        cast(layout, cam, dir, cfg, &mut hits);
        for y in 0..n {
            let v = (1.0 - 2.0 * (y as f64 + 0.5) / n as f64) * half;
            let covering = hits.iter().find(|h| {
                let height = cfg.camera_height_m + v * h.z;
                (0.0..=h.top).contains(&height)
            });
            let (color, z) = match covering {
                Some(h) => {
                    let height = cfg.camera_height_m + v * h.z;
                    let color = match h.surface {
                        Surface::Wall { side, along, x_face } => {
                            let stripe = hash3(layout.seed ^ side as u64, along as i64, 0) * 0.07;
                            let grain = hash3(layout.seed, along as i64 * 16 + (h.u * 8.0) as i64, (height * 40.0) as i64) * 0.03;
                            let base_board = if height < 0.03 { 0.7 } else { 1.0 };
                            let face = if x_face { 1.0 } else { 0.88 };
                            shade(pal.walls[side], (1.0 + stripe + grain) * base_board * face, h.z)
                        }
                        Surface::Object { index, x_face } => {
                            let o = &layout.objects[index];
                            let tex = hash3(o.texture_seed, (h.u * 4.0) as i64, (height / o.class.height_m() * 4.0) as i64);
                            let face = if x_face { 1.0 } else { 0.88 };
                            shade(o.color, (1.0 + 0.12 * tex) * face, h.z)
                        }
                    };
                    (color, h.z)
                }
                None if v < 0.0 => {
                    let z = cfg.camera_height_m / -v;
                    let t = z / res;
                    let (wx, wy) = (cam.x + t * dir.0, cam.y + t * dir.1);
                    let checker = if (wx.floor() as i64 + wy.floor() as i64) % 2 == 0 { 1.0 } else { 0.9 };
                    (shade(pal.floor, checker, z), z)
                }
                None => {
                    let z = (cfg.wall_height_m - cfg.camera_height_m) / v.max(1e-9);
                    (shade(pal.ceiling, 1.0, z), z)
                }
            };
            for (c, value) in color.into_iter().enumerate() {
                rgb.set(c, y, x, value);
            }
            depth.set(0, y, x, z.min(cfg.max_depth_m) as f32);
        }
    }
    (rgb, depth)
}

/// Renders the view from a grid pose. The pose must be on a free cell.
pub fn render(layout: &RoomLayout, pose: &Pose, cfg: &RenderConfig) -> Result<(Image, Image), SimError> {
    layout.map.validate(pose)?;
    Ok(render_camera(layout, &Camera::at_pose(pose), cfg))
}
