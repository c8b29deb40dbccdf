//! Grid-world geometry shared by both environments and the evaluator.
//!
//! Poses live on a rectangular grid of cells with one of four cardinal
//! headings. East is `+col`, north is `+row`; turning left rotates
//! counter-clockwise (E -> N -> W -> S).

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum metric distance (meters) between a pose and its goal for success.
pub const SUCCESS_DISTANCE_M: f64 = 0.3;
/// Maximum heading difference (degrees) between a pose and its goal for success.
pub const SUCCESS_HEADING_DEG: f64 = 30.0;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("pose {0} is outside the {1}x{2} grid")]
    OutOfBounds(Pose, usize, usize),
    #[error("pose {0} is on a blocked cell")]
    Blocked(Pose),
    #[error("terminate is not a motion action")]
    NotAMotion,
    #[error("grid resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("map parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::N, Heading::E, Heading::S, Heading::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Heading {
        Self::ALL[i % 4]
    }

    /// Unit step `(dcol, drow)` along this heading.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::N => (0, 1),
            Heading::E => (1, 0),
            Heading::S => (0, -1),
            Heading::W => (-1, 0),
        }
    }

    pub fn left(self) -> Heading {
        match self {
            Heading::N => Heading::W,
            Heading::W => Heading::S,
            Heading::S => Heading::E,
            Heading::E => Heading::N,
        }
    }

    pub fn right(self) -> Heading {
        self.left().left().left()
    }

    /// Counter-clockwise angle from east, in degrees.
    pub fn degrees(self) -> f64 {
        match self {
            Heading::E => 0.0,
            Heading::N => 90.0,
            Heading::W => 180.0,
            Heading::S => 270.0,
        }
    }

    /// Smallest absolute angle between two headings: 0, 90 or 180 degrees.
    pub fn angle_to(self, other: Heading) -> f64 {
        let d = (self.degrees() - other.degrees()).abs() % 360.0;
        d.min(360.0 - d)
    }

    pub fn as_char(self) -> char {
        match self {
            Heading::N => 'N',
            Heading::E => 'E',
            Heading::S => 'S',
            Heading::W => 'W',
        }
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Heading {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "N" => Ok(Heading::N),
            "E" => Ok(Heading::E),
            "S" => Ok(Heading::S),
            "W" => Ok(Heading::W),
            other => Err(format!("unknown heading {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pose {
    pub col: i32,
    pub row: i32,
    pub heading: Heading,
}

impl Pose {
    pub const fn new(col: i32, row: i32, heading: Heading) -> Self {
        Pose { col, row, heading }
    }

    /// Cell directly ahead of the pose.
    pub fn ahead(&self) -> (i32, i32) {
        let (dc, dr) = self.heading.delta();
        (self.col + dc, self.row + dr)
    }

    /// Metric coordinates `(col * r, row * r)`.
    pub fn metric(&self, resolution: f64) -> (f64, f64) {
        (self.col as f64 * resolution, self.row as f64 * resolution)
    }

    pub fn metric_distance(&self, other: &Pose, resolution: f64) -> f64 {
        let dc = (self.col - other.col) as f64;
        let dr = (self.row - other.row) as f64;
        resolution * (dc * dc + dr * dr).sqrt()
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.col, self.row, self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    MoveForward,
    MoveBackward,
    TurnLeft,
    TurnRight,
    Terminate,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [
        Action::MoveForward,
        Action::MoveBackward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Terminate,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn is_translation(self) -> bool {
        matches!(self, Action::MoveForward | Action::MoveBackward)
    }
}

/// Which motion actions the robot supports. TERMINATE is always available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionModel {
    pub allow_backward: bool,
}

impl Default for MotionModel {
    fn default() -> Self {
        MotionModel { allow_backward: true }
    }
}

impl MotionModel {
    /// Motion actions (everything except TERMINATE) enabled by this model.
    pub fn motions(&self) -> Vec<Action> {
        let mut v = vec![Action::MoveForward];
        if self.allow_backward {
            v.push(Action::MoveBackward);
        }
        v.extend([Action::TurnLeft, Action::TurnRight]);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    width: usize,
    height: usize,
    resolution: f64,
    /// Row-major, `true` = blocked.
    occupancy: Vec<bool>,
}

impl GridMap {
    pub fn empty(width: usize, height: usize, resolution: f64) -> Result<Self, GridError> {
        Self::from_occupancy(width, height, resolution, vec![false; width * height])
    }

    pub fn from_occupancy(
        width: usize,
        height: usize,
        resolution: f64,
        occupancy: Vec<bool>,
    ) -> Result<Self, GridError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(GridError::BadResolution(resolution));
        }
        assert_eq!(occupancy.len(), width * height, "occupancy size mismatch");
        Ok(GridMap { width, height, resolution, occupancy })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn in_bounds(&self, col: i32, row: i32) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height
    }

    /// Out-of-bounds cells count as blocked.
    pub fn is_blocked(&self, col: i32, row: i32) -> bool {
        !self.in_bounds(col, row) || self.occupancy[row as usize * self.width + col as usize]
    }

    pub fn is_free(&self, col: i32, row: i32) -> bool {
        !self.is_blocked(col, row)
    }

    pub fn set_blocked(&mut self, col: usize, row: usize, blocked: bool) {
        self.occupancy[row * self.width + col] = blocked;
    }

    pub fn free_cells(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        (0..self.height as i32)
            .flat_map(move |r| (0..self.width as i32).map(move |c| (c, r)))
            .filter(move |&(c, r)| self.is_free(c, r))
    }

    /// Every pose on a free cell, in row-major cell order then heading order.
    pub fn free_poses(&self) -> Vec<Pose> {
        self.free_cells()
            .flat_map(|(c, r)| Heading::ALL.into_iter().map(move |h| Pose::new(c, r, h)))
            .collect()
    }

    pub fn validate(&self, pose: &Pose) -> Result<(), GridError> {
        if !self.in_bounds(pose.col, pose.row) {
            return Err(GridError::OutOfBounds(*pose, self.width, self.height));
        }
        if self.is_blocked(pose.col, pose.row) {
            return Err(GridError::Blocked(*pose));
        }
        Ok(())
    }

    /// Dense index of a pose for BFS tables: `((row * width) + col) * 4 + heading`.
    pub fn pose_index(&self, pose: &Pose) -> usize {
        ((pose.row as usize * self.width) + pose.col as usize) * 4 + pose.heading.index()
    }

    pub fn pose_from_index(&self, idx: usize) -> Pose {
        let cell = idx / 4;
        Pose::new((cell % self.width) as i32, (cell / self.width) as i32, Heading::from_index(idx % 4))
    }

    pub fn state_count(&self) -> usize {
        self.width * self.height * 4
    }

    /// Whether the pose is directly in front of a blocked cell (wall or object).
    pub fn faces_obstacle(&self, pose: &Pose) -> bool {
        let (c, r) = pose.ahead();
        self.is_blocked(c, r)
    }

    /// Plain-text form: `width height resolution`, then `height` lines of
    /// `#`/`.`; text line `k` is grid row `k`.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.width, self.height, self.resolution);
        for r in 0..self.height {
            for c in 0..self.width {
                s.push(if self.occupancy[r * self.width + c] { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(GridError::Parse { line: 1, msg: "empty map".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(GridError::Parse { line: 1, msg: "expected `width height resolution`".into() });
        }
        let bad = |msg: &str| GridError::Parse { line: 1, msg: msg.to_string() };
        let width: usize = fields[0].parse().map_err(|_| bad("bad width"))?;
        let height: usize = fields[1].parse().map_err(|_| bad("bad height"))?;
        let resolution: f64 = fields[2].parse().map_err(|_| bad("bad resolution"))?;
        let mut occupancy = Vec::with_capacity(width * height);
        for r in 0..height {
            let line = lines
                .next()
                .ok_or(GridError::Parse { line: r + 2, msg: "missing map row".into() })?;
            let row: Vec<char> = line.trim_end().chars().collect();
            if row.len() != width {
                return Err(GridError::Parse {
                    line: r + 2,
                    msg: format!("expected {width} cells, found {}", row.len()),
                });
            }
            for ch in row {
                occupancy.push(match ch {
                    '#' => true,
                    '.' => false,
                    other => {
                        return Err(GridError::Parse { line: r + 2, msg: format!("unexpected {other:?}") })
                    }
                });
            }
        }
        Self::from_occupancy(width, height, resolution, occupancy)
    }
}

/// Applies a motion action. Collisions leave the pose unchanged and report
/// `collided = true`.
pub fn apply_action(pose: Pose, action: Action, map: &GridMap) -> Result<(Pose, bool), GridError> {
    map.validate(&pose)?;
    Ok(step_unchecked(pose, action, map)?)
}

fn step_unchecked(pose: Pose, action: Action, map: &GridMap) -> Result<(Pose, bool), GridError> {
    let (dc, dr) = pose.heading.delta();
    let target = match action {
        Action::TurnLeft => return Ok((Pose { heading: pose.heading.left(), ..pose }, false)),
        Action::TurnRight => return Ok((Pose { heading: pose.heading.right(), ..pose }, false)),
        Action::MoveForward => (pose.col + dc, pose.row + dr),
        Action::MoveBackward => (pose.col - dc, pose.row - dr),
        Action::Terminate => return Err(GridError::NotAMotion),
    };
    if map.is_blocked(target.0, target.1) {
        Ok((pose, true))
    } else {
        Ok((Pose { col: target.0, row: target.1, ..pose }, false))
    }
}

/// Within 0.3 m and 30 degrees of the goal.
pub fn success(pose: &Pose, goal: &Pose, resolution: f64) -> bool {
    // Small slack so that exact boundary cases are not lost to rounding.
    pose.metric_distance(goal, resolution) <= SUCCESS_DISTANCE_M + 1e-9
        && pose.heading.angle_to(goal.heading) <= SUCCESS_HEADING_DEG + 1e-9
}

pub fn success_any(pose: &Pose, goals: &[Pose], resolution: f64) -> bool {
    goals.iter().any(|g| success(pose, g, resolution))
}

/// Nearest metric distance to any goal pose, ignoring heading.
pub fn goal_distance(pose: &Pose, goals: &[Pose], resolution: f64) -> f64 {
    goals
        .iter()
        .map(|g| pose.metric_distance(g, resolution))
        .fold(f64::INFINITY, f64::min)
}

/// BFS over `(col, row, heading)` under the motion model. Returns, for every
/// dense pose index, the predecessor action leading to it (for path
/// reconstruction) and the depth. Search stops at the first pose accepted by
/// `is_goal`.
fn bfs<F: Fn(&Pose) -> bool>(
    start: Pose,
    map: &GridMap,
    motion: MotionModel,
    is_goal: F,
) -> Option<(Pose, Vec<Option<(usize, Action)>>, usize)> {
    let n = map.state_count();
    let mut parent: Vec<Option<(usize, Action)>> = vec![None; n];
    let mut depth = vec![usize::MAX; n];
    let start_idx = map.pose_index(&start);
    depth[start_idx] = 0;
    let mut queue = VecDeque::from([start]);
    let actions = motion.motions();
    while let Some(p) = queue.pop_front() {
        let pi = map.pose_index(&p);
        if is_goal(&p) {
            return Some((p, parent, depth[pi]));
        }
        for &a in &actions {
            let (q, _) = step_unchecked(p, a, map).expect("motion action");
            let qi = map.pose_index(&q);
            if depth[qi] == usize::MAX {
                depth[qi] = depth[pi] + 1;
                parent[qi] = Some((pi, a));
                queue.push_back(q);
            }
        }
    }
    None
}

/// Minimum number of motion actions from `start` to any pose that satisfies
/// [`success`] against one of `goals`. `None` when unreachable.
pub fn shortest_path_length(
    start: Pose,
    goals: &[Pose],
    map: &GridMap,
    motion: MotionModel,
) -> Result<Option<usize>, GridError> {
    map.validate(&start)?;
    let r = map.resolution();
    Ok(bfs(start, map, motion, |p| success_any(p, goals, r)).map(|(_, _, d)| d))
}

/// An optimal motion sequence to the goal set, or `None` when unreachable.
pub fn shortest_path(
    start: Pose,
    goals: &[Pose],
    map: &GridMap,
    motion: MotionModel,
) -> Result<Option<Vec<Action>>, GridError> {
    map.validate(&start)?;
    let r = map.resolution();
    let Some((end, parent, _)) = bfs(start, map, motion, |p| success_any(p, goals, r)) else {
        return Ok(None);
    };
    let mut path = Vec::new();
    let mut idx = map.pose_index(&end);
    while let Some((prev, a)) = parent[idx] {
        path.push(a);
        idx = prev;
    }
    path.reverse();
    Ok(Some(path))
}

/// Shortest-path lengths from every pose of the map to the goal set, indexed
/// by [`GridMap::pose_index`]; blocked or unreachable poses hold `None`.
///
/// Runs a backward BFS from the success region over reversed transitions.
pub fn distance_table(goals: &[Pose], map: &GridMap, motion: MotionModel) -> Vec<Option<usize>> {
    let n = map.state_count();
    let r = map.resolution();
    let actions = motion.motions();
    // Reverse adjacency: predecessors of each state.
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let poses = map.free_poses();
    for p in &poses {
        let pi = map.pose_index(p);
        for &a in &actions {
            let (q, _) = step_unchecked(*p, a, map).expect("motion action");
            preds[map.pose_index(&q)].push(pi);
        }
    }
    let mut dist = vec![None; n];
    let mut queue = VecDeque::new();
    for p in &poses {
        if success_any(p, goals, r) {
            let pi = map.pose_index(p);
            dist[pi] = Some(0);
            queue.push_back(pi);
        }
    }
    while let Some(qi) = queue.pop_front() {
        let d = dist[qi].expect("queued states have a distance");
        for &pi in &preds[qi] {
            if dist[pi].is_none() {
                dist[pi] = Some(d + 1);
                queue.push_back(pi);
            }
        }
    }
    dist
}
