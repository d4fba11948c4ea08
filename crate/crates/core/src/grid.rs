//! Deterministic discrete navigation environments.
//!
//! All tasks on one grid share the same dynamic; only the reward (goal
//! placement) differs. Episodes are driven externally: the environment is an
//! immutable state-transition table plus the reward rule, so replicas can run
//! concurrently without shared state.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::NeighborMap;

/// Canonical integer identity of a free grid cell.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct StateId(pub u32);

impl StateId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Four-directional movement. Index order is the tie-break order for greedy
/// action selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    /// Grid delta with y growing downward.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        };
        write!(f, "{s}")
    }
}

/// Start and goal cells read from a layout's `S`/`G` markers.
pub type StartGoalMarks = ((usize, usize), (usize, usize));

/// Built-in layout families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayoutKind {
    EmptyRoom,
    FourRoom,
    MultiRoom,
    Custom,
}

/// Static grid geometry: dimensions and blocked cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub walls: BTreeSet<(usize, usize)>,
    pub layout_kind: LayoutKind,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("grid must be at least 3x3 with walled border, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("border cell ({0}, {1}) is not a wall")]
    OpenBorder(usize, usize),
    #[error("free cells do not form a single connected component")]
    Disconnected,
    #[error("grid has no free cells")]
    NoFreeCells,
    #[error("need at least two free cells to place start and goal")]
    NotEnoughFreeCells,
    #[error("cell ({0}, {1}) is not a free cell")]
    CellNotFree(usize, usize),
    #[error("start and goal must be distinct cells")]
    StartEqualsGoal,
    #[error("bad layout: {0}")]
    BadLayout(String),
}

impl GridSpec {
    /// Empty room with a 10x10 free interior (12x12 including the border).
    pub fn empty_room() -> GridSpec {
        GridSpec::open_box(12, 12, LayoutKind::EmptyRoom)
    }

    /// 13x13 four-room layout: a wall cross through the center with one
    /// doorway per internal wall segment.
    pub fn four_room() -> GridSpec {
        let mut spec = GridSpec::open_box(13, 13, LayoutKind::FourRoom);
        let mid = 6;
        for y in 1..12 {
            spec.walls.insert((mid, y));
        }
        for x in 1..12 {
            spec.walls.insert((x, mid));
        }
        // One doorway per segment of the cross.
        spec.walls.remove(&(mid, 3));
        spec.walls.remove(&(mid, 9));
        spec.walls.remove(&(3, mid));
        spec.walls.remove(&(9, mid));
        spec
    }

    /// 19x9 chain of three rooms connected by single staggered doorways.
    pub fn multi_room() -> GridSpec {
        let mut spec = GridSpec::open_box(19, 9, LayoutKind::MultiRoom);
        for y in 1..8 {
            spec.walls.insert((6, y));
            spec.walls.insert((12, y));
        }
        spec.walls.remove(&(6, 3));
        spec.walls.remove(&(12, 5));
        spec
    }

    fn open_box(width: usize, height: usize, layout_kind: LayoutKind) -> GridSpec {
        let mut walls = BTreeSet::new();
        for y in 0..height {
            for x in 0..width {
                if x == 0 || y == 0 || x == width - 1 || y == height - 1 {
                    walls.insert((x, y));
                }
            }
        }
        GridSpec {
            width,
            height,
            walls,
            layout_kind,
        }
    }

    pub fn is_wall(&self, x: usize, y: usize) -> bool {
        x >= self.width || y >= self.height || self.walls.contains(&(x, y))
    }

    /// Renders the grid as a text map (`#` wall, `.` free), one row per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(if self.is_wall(x, y) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    /// Parses a text map. `#` wall, `.` free, `S`/`G` free cells that also
    /// mark a start/goal suggestion. Rows must all have the same width.
    pub fn parse(text: &str) -> Result<(GridSpec, Option<StartGoalMarks>), GridError> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.is_empty() {
            return Err(GridError::BadLayout("empty layout".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut walls = BTreeSet::new();
        let mut start = None;
        let mut goal = None;
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(GridError::BadLayout(format!(
                    "row {y} has width {} but expected {width}",
                    row.chars().count()
                )));
            }
            for (x, c) in row.chars().enumerate() {
                match c {
                    '#' => {
                        walls.insert((x, y));
                    }
                    '.' => {}
                    'S' => {
                        if start.replace((x, y)).is_some() {
                            return Err(GridError::BadLayout("more than one start marker".into()));
                        }
                    }
                    'G' => {
                        if goal.replace((x, y)).is_some() {
                            return Err(GridError::BadLayout("more than one goal marker".into()));
                        }
                    }
                    other => {
                        return Err(GridError::BadLayout(format!(
                            "unexpected character {other:?} at ({x}, {y})"
                        )));
                    }
                }
            }
        }
        let spec = GridSpec {
            width,
            height,
            walls,
            layout_kind: LayoutKind::Custom,
        };
        let marks = match (start, goal) {
            (Some(s), Some(g)) => Some((s, g)),
            _ => None,
        };
        Ok((spec, marks))
    }
}

/// A reward placement on a fixed grid: start, goal and the episode budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub start: StateId,
    pub goal: StateId,
    pub max_steps: u32,
}

/// Result of a single environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: StateId,
    pub extrinsic_reward: f64,
    pub done: bool,
    pub step_index: u32,
}

/// A built environment: enumerated free cells plus the transition table.
#[derive(Debug, Clone)]
pub struct GridEnv {
    spec: GridSpec,
    /// Cell of each state, in row-major scan order.
    cells: Vec<(usize, usize)>,
    /// Dense cell -> state lookup, `width * height` entries.
    cell_to_state: Vec<Option<StateId>>,
    /// Default episode budget for tasks sampled on this grid.
    pub default_max_steps: u32,
}

impl GridEnv {
    /// Validates the spec (walled border, connected free space) and
    /// enumerates the state set.
    pub fn build(spec: GridSpec) -> Result<GridEnv, GridError> {
        if spec.width < 3 || spec.height < 3 {
            return Err(GridError::TooSmall {
                width: spec.width,
                height: spec.height,
            });
        }
        for x in 0..spec.width {
            for y in [0, spec.height - 1] {
                if !spec.is_wall(x, y) {
                    return Err(GridError::OpenBorder(x, y));
                }
            }
        }
        for y in 0..spec.height {
            for x in [0, spec.width - 1] {
                if !spec.is_wall(x, y) {
                    return Err(GridError::OpenBorder(x, y));
                }
            }
        }

        let mut cells = Vec::new();
        let mut cell_to_state = vec![None; spec.width * spec.height];
        for y in 0..spec.height {
            for x in 0..spec.width {
                if !spec.is_wall(x, y) {
                    let id = StateId(cells.len() as u32);
                    cell_to_state[y * spec.width + x] = Some(id);
                    cells.push((x, y));
                }
            }
        }
        if cells.is_empty() {
            return Err(GridError::NoFreeCells);
        }

        // Flood fill from the first free cell; every free cell must be reached.
        let mut seen = vec![false; cells.len()];
        let mut stack = vec![StateId(0)];
        seen[0] = true;
        let mut reached = 1;
        while let Some(s) = stack.pop() {
            let (x, y) = cells[s.idx()];
            for a in Action::ALL {
                let (dx, dy) = a.delta();
                let nx = (x as i32 + dx) as usize;
                let ny = (y as i32 + dy) as usize;
                if let Some(Some(n)) = cell_to_state.get(ny * spec.width + nx) {
                    if !seen[n.idx()] {
                        seen[n.idx()] = true;
                        reached += 1;
                        stack.push(*n);
                    }
                }
            }
        }
        if reached != cells.len() {
            return Err(GridError::Disconnected);
        }

        let default_max_steps = match spec.layout_kind {
            LayoutKind::EmptyRoom => 500,
            _ => 1000,
        };
        Ok(GridEnv {
            spec,
            cells,
            cell_to_state,
            default_max_steps,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn num_states(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_of(&self, s: StateId) -> (usize, usize) {
        self.cells[s.idx()]
    }

    pub fn state_at(&self, x: usize, y: usize) -> Option<StateId> {
        if x >= self.spec.width || y >= self.spec.height {
            return None;
        }
        self.cell_to_state[y * self.spec.width + x]
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.cells.len() as u32).map(StateId)
    }

    /// Deterministic one-step move: bumping a wall leaves the agent in place.
    pub fn next_state(&self, s: StateId, a: Action) -> StateId {
        let (x, y) = self.cells[s.idx()];
        let (dx, dy) = a.delta();
        let nx = (x as i32 + dx) as usize;
        let ny = (y as i32 + dy) as usize;
        self.state_at(nx, ny).unwrap_or(s)
    }

    /// Executes one step of an episode. `step_index` is the 1-based count of
    /// this step within the episode (n_e). The goal pays `1 - 0.9 * n_e/n_max`
    /// on arrival; every other step pays zero, including wall bumps.
    pub fn step(&self, task: &Task, s: StateId, a: Action, step_index: u32) -> StepOutcome {
        debug_assert!(s.idx() < self.cells.len(), "invalid state id");
        debug_assert!(step_index >= 1 && step_index <= task.max_steps);
        let next = self.next_state(s, a);
        let at_goal = next == task.goal;
        let out_of_budget = step_index == task.max_steps;
        let extrinsic_reward = if at_goal {
            1.0 - 0.9 * (step_index as f64 / task.max_steps as f64)
        } else {
            0.0
        };
        StepOutcome {
            next_state: next,
            extrinsic_reward,
            done: at_goal || out_of_budget,
            step_index,
        }
    }

    /// Draws a task uniformly over ordered pairs of distinct free cells.
    pub fn sample_task<R: Rng>(&self, rng: &mut R) -> Result<Task, GridError> {
        let n = self.cells.len();
        if n < 2 {
            return Err(GridError::NotEnoughFreeCells);
        }
        let start = StateId(rng.random_range(0..n as u32));
        let mut goal = StateId(rng.random_range(0..(n - 1) as u32));
        if goal >= start {
            goal.0 += 1;
        }
        Ok(Task {
            start,
            goal,
            max_steps: self.default_max_steps,
        })
    }

    /// Builds a task from explicit cells, validating both are free and distinct.
    pub fn make_task(
        &self,
        start: (usize, usize),
        goal: (usize, usize),
        max_steps: u32,
    ) -> Result<Task, GridError> {
        let s = self
            .state_at(start.0, start.1)
            .ok_or(GridError::CellNotFree(start.0, start.1))?;
        let g = self
            .state_at(goal.0, goal.1)
            .ok_or(GridError::CellNotFree(goal.0, goal.1))?;
        if s == g {
            return Err(GridError::StartEqualsGoal);
        }
        Ok(Task {
            start: s,
            goal: g,
            max_steps,
        })
    }

    /// Ground-truth binary dynamic: for every state, the exact set of
    /// one-step-reachable states under any action. A state with a blocked
    /// move has a self-loop.
    pub fn true_binary_dynamics(&self) -> NeighborMap {
        let mut map = NeighborMap::new();
        for s in self.states() {
            for a in Action::ALL {
                map.insert_edge(s, self.next_state(s, a));
            }
        }
        map
    }

    /// Shortest-path length between two states, by breadth-first search.
    pub fn shortest_path_len(&self, from: StateId, to: StateId) -> Option<u32> {
        let mut dist = vec![u32::MAX; self.cells.len()];
        let mut queue = std::collections::VecDeque::new();
        dist[from.idx()] = 0;
        queue.push_back(from);
        while let Some(s) = queue.pop_front() {
            if s == to {
                return Some(dist[s.idx()]);
            }
            for a in Action::ALL {
                let n = self.next_state(s, a);
                if dist[n.idx()] == u32::MAX {
                    dist[n.idx()] = dist[s.idx()] + 1;
                    queue.push_back(n);
                }
            }
        }
        None
    }
}
