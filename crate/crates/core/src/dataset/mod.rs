//! Grid-aligned RGB-D image datasets and the replay environment built on
//! them.
//!
//! On disk a dataset is a directory holding
//!
//! * `index.csv` with header `x,y,phi,i,rgb_path,depth_path` (paths relative
//!   to the directory, `phi` one of `N`, `E`, `S`, `W`),
//! * `meta.json` with `resolution`, `width`, `height`, `max_depth` and the
//!   explicit `goal_poses` list,
//! * `map.txt` with the occupancy grid,
//! * 8-bit RGB PNGs and 16-bit depth PNGs (millimeters).

mod curriculum;
mod env;
mod generate;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use curriculum::{curriculum_max_length, CurriculumSchedule};
pub use env::{DatasetEnv, DatasetEnvConfig, DatasetTask, REWARD_COLLISION, REWARD_GOAL};
pub use generate::{generate_synthetic_dataset, GenerateConfig, NoiseConfig};

use crate::grid::{GridError, GridMap, Heading, Pose};
use crate::image::Image;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: unreadable image: {msg}")]
    Image { path: PathBuf, msg: String },
    #[error("index.csv line {line}: {msg}")]
    Index { line: usize, msg: String },
    #[error("meta.json: {0}")]
    Meta(String),
    #[error("index.csv line {line}: coordinate ({x}, {y}) is off the grid by more than {tolerance} cells")]
    OffGrid { line: usize, x: f64, y: f64, tolerance: f64 },
    #[error("index.csv line {line}: pose {pose} is not a free cell of the map")]
    InvalidPose { line: usize, pose: Pose },
    #[error("no record for pose {0}")]
    MissingPose(Pose),
    #[error("goal pose {0} is not a free pose facing a wall or object")]
    BadGoal(Pose),
    #[error("image shape mismatch in {path}: expected {expected:?}, found {found:?}")]
    Shape { path: PathBuf, expected: (usize, usize, usize), found: (usize, usize, usize) },
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub struct DatasetRecord {
    /// Pose estimate in meters, before snapping.
    pub x: f64,
    pub y: f64,
    pub phi: Heading,
    /// Image index at this pose.
    pub i: u32,
    pub rgb: Arc<Image>,
    pub depth: Arc<Image>,
}

#[derive(Debug, Clone)]
pub struct GridDataset {
    map: GridMap,
    records: Vec<DatasetRecord>,
    by_pose: HashMap<Pose, Vec<usize>>,
    goal_poses: Vec<Pose>,
    max_depth: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Allowed distance between a record's coordinates and its grid point,
    /// in cells.
    pub snap_tolerance_cells: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { snap_tolerance_cells: 0.25 }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    resolution: f64,
    width: usize,
    height: usize,
    max_depth: f64,
    goal_poses: Vec<Pose>,
}

/// Snaps metric coordinates to a grid cell, or `None` when either axis is
/// further than `tolerance_cells` from the nearest grid point.
pub fn snap(x: f64, y: f64, resolution: f64, tolerance_cells: f64) -> Option<(i32, i32)> {
    let (gx, gy) = (x / resolution, y / resolution);
    let (c, r) = (gx.round(), gy.round());
    ((gx - c).abs() <= tolerance_cells + 1e-9 && (gy - r).abs() <= tolerance_cells + 1e-9).then_some((c as i32, r as i32))
}

impl GridDataset {
    /// Validates and indexes a set of records.
    pub fn new(
        map: GridMap,
        records: Vec<DatasetRecord>,
        goal_poses: Vec<Pose>,
        max_depth: f64,
        options: LoadOptions,
    ) -> Result<Self, DatasetError> {
        let res = map.resolution();
        let mut by_pose: HashMap<Pose, Vec<usize>> = HashMap::new();
        for (k, rec) in records.iter().enumerate() {
            let line = k + 2;
            let (col, row) = snap(rec.x, rec.y, res, options.snap_tolerance_cells).ok_or(DatasetError::OffGrid {
                line,
                x: rec.x,
                y: rec.y,
                tolerance: options.snap_tolerance_cells,
            })?;
            let pose = Pose::new(col, row, rec.phi);
            if map.validate(&pose).is_err() {
                return Err(DatasetError::InvalidPose { line, pose });
            }
            by_pose.entry(pose).or_default().push(k);
        }
        for pose in map.free_poses() {
            if !by_pose.contains_key(&pose) {
                return Err(DatasetError::MissingPose(pose));
            }
        }
        for g in &goal_poses {
            if map.validate(g).is_err() || !map.faces_obstacle(g) {
                return Err(DatasetError::BadGoal(*g));
            }
        }
        Ok(GridDataset { map, records, by_pose, goal_poses, max_depth })
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn records(&self) -> &[DatasetRecord] {
        &self.records
    }

    pub fn goal_poses(&self) -> &[Pose] {
        &self.goal_poses
    }

    pub fn max_depth(&self) -> f64 {
        self.max_depth
    }

    pub fn pose_count(&self) -> usize {
        self.by_pose.len()
    }

    /// Records stored for a pose.
    pub fn records_at(&self, pose: &Pose) -> impl Iterator<Item = &DatasetRecord> {
        self.by_pose.get(pose).into_iter().flatten().map(|&k| &self.records[k])
    }

    pub(crate) fn record_indices(&self, pose: &Pose) -> &[usize] {
        self.by_pose.get(pose).map(Vec::as_slice).unwrap_or(&[])
    }

    fn file_stem(rec: &DatasetRecord, res: f64) -> String {
        let (c, r) = ((rec.x / res).round() as i32, (rec.y / res).round() as i32);
        format!("{c}_{r}_{}_{}", rec.phi, rec.i)
    }

    /// Writes the dataset in the directory format described at module level.
    pub fn write(&self, dir: &Path) -> Result<(), DatasetError> {
        for sub in ["rgb", "depth"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        let meta = Meta {
            resolution: self.map.resolution(),
            width: self.map.width(),
            height: self.map.height(),
            max_depth: self.max_depth,
            goal_poses: self.goal_poses.clone(),
        };
        let meta_path = dir.join("meta.json");
        let text = serde_json::to_string_pretty(&meta).map_err(|e| DatasetError::Meta(e.to_string()))?;
        fs::write(&meta_path, text + "\n").map_err(io_err(&meta_path))?;
        let map_path = dir.join("map.txt");
        fs::write(&map_path, self.map.to_text()).map_err(io_err(&map_path))?;

        let index_path = dir.join("index.csv");
        let mut w = csv::Writer::from_path(&index_path)
            .map_err(|e| DatasetError::Index { line: 0, msg: e.to_string() })?;
        let csv_err = |e: csv::Error| DatasetError::Index { line: 0, msg: e.to_string() };
        w.write_record(["x", "y", "phi", "i", "rgb_path", "depth_path"]).map_err(csv_err)?;
        for rec in &self.records {
            let stem = Self::file_stem(rec, self.map.resolution());
            let rgb_rel = format!("rgb/{stem}.png");
            let depth_rel = format!("depth/{stem}.png");
            let img_err = |p: &Path| {
                let p = p.to_path_buf();
                move |e: image::ImageError| DatasetError::Image { path: p, msg: e.to_string() }
            };
            let rp = dir.join(&rgb_rel);
            rec.rgb.write_rgb_png(&rp).map_err(img_err(&rp))?;
            let dp = dir.join(&depth_rel);
            rec.depth.write_depth_png(&dp).map_err(img_err(&dp))?;
            w.write_record([
                rec.x.to_string(),
                rec.y.to_string(),
                rec.phi.to_string(),
                rec.i.to_string(),
                rgb_rel,
                depth_rel,
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(io_err(&index_path))?;
        Ok(())
    }
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: &Path, options: LoadOptions) -> Result<GridDataset, DatasetError> {
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: Meta = serde_json::from_str(&meta_text).map_err(|e| DatasetError::Meta(e.to_string()))?;
    let map_path = dir.join("map.txt");
    let map = match fs::read_to_string(&map_path) {
        Ok(text) => GridMap::from_text(&text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => GridMap::empty(meta.width, meta.height, meta.resolution)?,
        Err(e) => return Err(DatasetError::Io { path: map_path, source: e }),
    };
    if map.width() != meta.width || map.height() != meta.height || map.resolution() != meta.resolution {
        return Err(DatasetError::Meta("map.txt disagrees with meta.json".into()));
    }

    let index_path = dir.join("index.csv");
    let mut reader = csv::Reader::from_path(&index_path)
        .map_err(|e| DatasetError::Index { line: 1, msg: e.to_string() })?;
    let headers = reader.headers().map_err(|e| DatasetError::Index { line: 1, msg: e.to_string() })?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "y", "phi", "i", "rgb_path", "depth_path"] {
        return Err(DatasetError::Index { line: 1, msg: format!("unexpected header {headers:?}") });
    }
    let mut records = Vec::new();
    let mut shape: Option<(usize, usize)> = None;
    for (k, row) in reader.records().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| DatasetError::Index { line, msg: e.to_string() })?;
        let field = |j: usize| row.get(j).ok_or(DatasetError::Index { line, msg: format!("missing column {j}") });
        let num = |j: usize| -> Result<f64, DatasetError> {
            field(j)?.parse().map_err(|_| DatasetError::Index { line, msg: format!("bad number in column {j}") })
        };
        let x = num(0)?;
        let y = num(1)?;
        let phi: Heading = field(2)?.parse().map_err(|msg| DatasetError::Index { line, msg })?;
        let i: u32 = field(3)?.parse().map_err(|_| DatasetError::Index { line, msg: "bad image index".into() })?;
        let rgb_path = dir.join(field(4)?);
        let depth_path = dir.join(field(5)?);
        let rgb = Image::read_rgb_png(&rgb_path)
            .map_err(|e| DatasetError::Image { path: rgb_path.clone(), msg: e.to_string() })?;
        let depth = Image::read_depth_png(&depth_path)
            .map_err(|e| DatasetError::Image { path: depth_path.clone(), msg: e.to_string() })?;
        let (h, w) = (rgb.height, rgb.width);
        let expected = shape.get_or_insert((h, w));
        if (h, w) != *expected {
            return Err(DatasetError::Shape { path: rgb_path, expected: (3, expected.0, expected.1), found: rgb.shape() });
        }
        if depth.shape() != (1, h, w) {
            return Err(DatasetError::Shape { path: depth_path, expected: (1, h, w), found: depth.shape() });
        }
        records.push(DatasetRecord { x, y, phi, i, rgb: Arc::new(rgb), depth: Arc::new(depth) });
    }
    GridDataset::new(map, records, meta.goal_poses, meta.max_depth, options)
}
