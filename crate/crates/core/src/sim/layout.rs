//! Procedural office-room layouts: a rectangular room with objects placed
//! against the walls.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::grid::{GridMap, Heading, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectClass {
    Bookshelf,
    Chair,
    Cabinet,
    Desk,
    Plant,
    Sofa,
}

impl ObjectClass {
    pub const CATALOG: [ObjectClass; 6] = [
        ObjectClass::Bookshelf,
        ObjectClass::Chair,
        ObjectClass::Cabinet,
        ObjectClass::Desk,
        ObjectClass::Plant,
        ObjectClass::Sofa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Bookshelf => "bookshelf",
            ObjectClass::Chair => "chair",
            ObjectClass::Cabinet => "cabinet",
            ObjectClass::Desk => "desk",
            ObjectClass::Plant => "plant",
            ObjectClass::Sofa => "sofa",
        }
    }

    /// Number of wall-aligned cells the object occupies.
    pub fn footprint_len(self) -> usize {
        match self {
            ObjectClass::Bookshelf | ObjectClass::Desk | ObjectClass::Sofa => 2,
            _ => 1,
        }
    }

    pub fn height_m(self) -> f64 {
        match self {
            ObjectClass::Bookshelf => 0.45,
            ObjectClass::Chair => 0.2,
            ObjectClass::Cabinet => 0.32,
            ObjectClass::Desk => 0.25,
            ObjectClass::Plant => 0.38,
            ObjectClass::Sofa => 0.22,
        }
    }

    pub fn base_color(self) -> [f32; 3] {
        match self {
            ObjectClass::Bookshelf => [0.55, 0.35, 0.2],
            ObjectClass::Chair => [0.8, 0.2, 0.2],
            ObjectClass::Cabinet => [0.4, 0.5, 0.75],
            ObjectClass::Desk => [0.85, 0.72, 0.45],
            ObjectClass::Plant => [0.2, 0.7, 0.3],
            ObjectClass::Sofa => [0.55, 0.3, 0.65],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub class: ObjectClass,
    pub cells: Vec<(i32, i32)>,
    pub color: [f32; 3],
    pub texture_seed: u64,
}

/// Surface colors of one layout. Walls are indexed by the direction the
/// viewer faces when looking at them (N, E, S, W).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub walls: [[f32; 3]; 4],
    pub floor: [f32; 3],
    pub ceiling: [f32; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    /// Inclusive range of room widths, in cells.
    pub width: (usize, usize),
    pub height: (usize, usize),
    /// Inclusive range of the number of objects.
    pub objects: (usize, usize),
    /// Meters per cell.
    pub resolution: f64,
    /// Maximum per-channel palette perturbation per layout.
    pub palette_jitter: f32,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig { width: (6, 10), height: (6, 10), objects: (3, 6), resolution: 0.2, palette_jitter: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomLayout {
    pub map: GridMap,
    pub objects: Vec<PlacedObject>,
    pub seed: u64,
    pub palette: Palette,
    /// Object index per cell (row-major), for blocked cells holding an object.
    cell_object: Vec<Option<usize>>,
}

const BASE_WALLS: [[f32; 3]; 4] = [[0.86, 0.85, 0.78], [0.72, 0.78, 0.86], [0.86, 0.76, 0.68], [0.76, 0.86, 0.74]];
const BASE_FLOOR: [f32; 3] = [0.45, 0.4, 0.35];
const BASE_CEILING: [f32; 3] = [0.93, 0.93, 0.93];

fn jitter(rng: &mut impl Rng, c: [f32; 3], amount: f32) -> [f32; 3] {
    if amount <= 0.0 {
        return c;
    }
    c.map(|v| (v + rng.gen_range(-amount..=amount)).clamp(0.0, 1.0))
}

impl RoomLayout {
    /// A layout over an existing map with no objects; blocked cells render as
    /// plain wall.
    pub fn bare(map: GridMap, seed: u64, palette_jitter: f32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let palette = Palette {
            walls: BASE_WALLS.map(|c| jitter(&mut rng, c, palette_jitter)),
            floor: jitter(&mut rng, BASE_FLOOR, palette_jitter),
            ceiling: jitter(&mut rng, BASE_CEILING, palette_jitter),
        };
        let n = map.width() * map.height();
        RoomLayout { map, objects: Vec::new(), seed, palette, cell_object: vec![None; n] }
    }

    /// Adds an object on currently free cells, marking them blocked.
    pub fn add_object(&mut self, object: PlacedObject) {
        let idx = self.objects.len();
        for &(c, r) in &object.cells {
            self.map.set_blocked(c as usize, r as usize, true);
            self.cell_object[r as usize * self.map.width() + c as usize] = Some(idx);
        }
        self.objects.push(object);
    }

    pub fn object_at(&self, col: i32, row: i32) -> Option<usize> {
        if !self.map.in_bounds(col, row) {
            return None;
        }
        self.cell_object[row as usize * self.map.width() + col as usize]
    }

    /// Free poses adjacent to the object's footprint, facing it.
    pub fn goal_poses(&self, object: usize) -> Vec<Pose> {
        let mut out = Vec::new();
        for &(c, r) in &self.objects[object].cells {
            for h in Heading::ALL {
                let (dc, dr) = h.delta();
                // Standing one cell against `h` and facing along it.
                let p = Pose::new(c - dc, r - dr, h);
                if self.map.is_free(p.col, p.row) && !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        out.sort();
        out
    }

    /// The object directly in front of the pose, if any.
    pub fn faced_object(&self, pose: &Pose) -> Option<usize> {
        let (c, r) = pose.ahead();
        self.object_at(c, r)
    }

    /// Debug dump: the map text followed by one line per object.
    pub fn dump(&self) -> String {
        let mut s = self.map.to_text();
        for (i, o) in self.objects.iter().enumerate() {
            let cells: Vec<String> = o.cells.iter().map(|(c, r)| format!("{c}:{r}")).collect();
            let _ = writeln!(
                s,
                "object {i} {} cells={} color={:.3},{:.3},{:.3}",
                o.class.name(),
                cells.join(";"),
                o.color[0],
                o.color[1],
                o.color[2]
            );
        }
        s
    }
}

fn is_wall_adjacent(map: &GridMap, c: i32, r: i32) -> bool {
    c == 0 || r == 0 || c as usize == map.width() - 1 || r as usize == map.height() - 1
}

fn free_space_connected(map: &GridMap) -> bool {
    let free: Vec<(i32, i32)> = map.free_cells().collect();
    let Some(&first) = free.first() else { return false };
    let mut seen = vec![false; map.width() * map.height()];
    let idx = |c: i32, r: i32| r as usize * map.width() + c as usize;
    seen[idx(first.0, first.1)] = true;
    let mut queue = VecDeque::from([first]);
    let mut count = 1;
    while let Some((c, r)) = queue.pop_front() {
        for h in Heading::ALL {
            let (dc, dr) = h.delta();
            let (nc, nr) = (c + dc, r + dr);
            if map.is_free(nc, nr) && !seen[idx(nc, nr)] {
                seen[idx(nc, nr)] = true;
                count += 1;
                queue.push_back((nc, nr));
            }
        }
    }
    count == free.len()
}

/// Wall-aligned runs of `len` cells that are all wall-adjacent.
fn candidate_footprints(map: &GridMap, len: usize) -> Vec<Vec<(i32, i32)>> {
    let (w, h) = (map.width() as i32, map.height() as i32);
    let len = len as i32;
    let mut out = Vec::new();
    let mut push = |cells: Vec<(i32, i32)>| {
        if cells.iter().all(|&(c, r)| map.in_bounds(c, r) && is_wall_adjacent(map, c, r)) && !out.contains(&cells) {
            out.push(cells);
        }
    };
    for start in 0..w.max(h) {
        for &row in &[0, h - 1] {
            push((0..len).map(|k| (start + k, row)).collect());
        }
        for &col in &[0, w - 1] {
            push((0..len).map(|k| (col, start + k)).collect());
        }
    }
    out
}

/// Generates a room deterministically from `seed`.
pub fn generate_layout(seed: u64, config: &LayoutConfig) -> Result<RoomLayout, SimError> {
    let LayoutConfig { width, height, objects, resolution, palette_jitter } = *config;
    if width.0 == 0 || height.0 == 0 || width.0 > width.1 || height.0 > height.1 || objects.0 > objects.1 {
        return Err(SimError::BadConfig(format!("empty range in {config:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.gen_range(width.0..=width.1);
    let h = rng.gen_range(height.0..=height.1);
    let target = rng.gen_range(objects.0..=objects.1);
    let map = GridMap::empty(w, h, resolution).map_err(|e| SimError::BadConfig(e.to_string()))?;
    let mut layout = RoomLayout::bare(map, rng.gen(), palette_jitter);

    let mut slots: Vec<(ObjectClass, Vec<(i32, i32)>)> = ObjectClass::CATALOG
        .iter()
        .flat_map(|&class| {
            candidate_footprints(&layout.map, class.footprint_len()).into_iter().map(move |cells| (class, cells))
        })
        .collect();
    slots.shuffle(&mut rng);

    for (class, cells) in slots {
        if layout.objects.len() >= target {
            break;
        }
        if cells.iter().any(|&(c, r)| layout.map.is_blocked(c, r)) {
            continue;
        }
        let mut trial = layout.map.clone();
        for &(c, r) in &cells {
            trial.set_blocked(c as usize, r as usize, true);
        }
        if !free_space_connected(&trial) {
            continue;
        }
        let color = jitter(&mut rng, class.base_color(), palette_jitter);
        layout.add_object(PlacedObject { class, cells, color, texture_seed: rng.gen() });
        // Every object must be approachable; undo otherwise.
        if layout.goal_poses(layout.objects.len() - 1).is_empty() {
            let o = layout.objects.pop().expect("just pushed");
            for (c, r) in o.cells {
                layout.map.set_blocked(c as usize, r as usize, false);
                layout.cell_object[r as usize * w + c as usize] = None;
            }
        }
    }
    if layout.objects.len() < objects.0.max(1) {
        return Err(SimError::Infeasible { width: w, height: h, wanted: objects.0.max(1), placed: layout.objects.len() });
    }
    Ok(layout)
}
