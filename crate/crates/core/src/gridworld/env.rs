use serde::{Deserialize, Serialize};

use super::cell::{object_id, Cell, CellKind, Color, DoorState};
use crate::error::{Error, Result};
use crate::hashing::{exact_hash, CanonicalBytes, HashCode};

/// Side length of the agent's egocentric view.
pub const VIEW: usize = 7;
pub const OBS_BYTES: usize = VIEW * VIEW * 3;
pub const NUM_ACTIONS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Left = 0,
    Right = 1,
    Forward = 2,
    Pickup = 3,
    Drop = 4,
    Toggle = 5,
    Done = 6,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::Left,
        Action::Right,
        Action::Forward,
        Action::Pickup,
        Action::Drop,
        Action::Toggle,
        Action::Done,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

/// Facing direction, with Minigrid's numbering (0 = east, clockwise).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Direction {
    East = 0,
    South = 1,
    West = 2,
    North = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::East,
        Direction::South,
        Direction::West,
        Direction::North,
    ];

    pub fn from_index(i: usize) -> Direction {
        Direction::ALL[i % 4]
    }

    pub fn left(self) -> Direction {
        Direction::from_index(self as usize + 3)
    }

    pub fn right(self) -> Direction {
        Direction::from_index(self as usize + 1)
    }

    pub fn vector(self) -> (i64, i64) {
        match self {
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
            Direction::North => (0, -1),
        }
    }
}

/// Egocentric 7x7x3 view, indexed `[column][row][channel]` with the agent at
/// column 3, row 6, facing towards row 0.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Observation {
    values: [[[u8; 3]; VIEW]; VIEW],
}

impl std::fmt::Debug for Observation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Observation [")?;
        for j in 0..VIEW {
            let row: Vec<String> = (0..VIEW)
                .map(|i| {
                    let [o, c, s] = self.values[i][j];
                    format!("{o}{c}{s}")
                })
                .collect();
            writeln!(f, "  {}", row.join(" "))?;
        }
        write!(f, "]")
    }
}

impl Observation {
    pub const AGENT_COL: usize = VIEW / 2;
    pub const AGENT_ROW: usize = VIEW - 1;

    pub fn unseen() -> Self {
        Observation {
            values: [[[object_id::UNSEEN, 0, 0]; VIEW]; VIEW],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> [u8; 3] {
        self.values[col][row]
    }

    pub fn set(&mut self, col: usize, row: usize, value: [u8; 3]) {
        self.values[col][row] = value;
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.values.as_flattened().as_flattened()
    }

    /// Parses the canonical 147-byte layout, checking every channel range.
    pub fn from_bytes(bytes: &[u8]) -> Result<Observation> {
        if bytes.len() != OBS_BYTES {
            return Err(Error::DimensionMismatch {
                expected: OBS_BYTES,
                actual: bytes.len(),
            });
        }
        let mut obs = Observation::unseen();
        for (k, chunk) in bytes.chunks_exact(3).enumerate() {
            let v = [chunk[0], chunk[1], chunk[2]];
            if v[0] > object_id::MAX || v[1] > 5 || v[2] > 2 {
                return Err(Error::Dataset(format!(
                    "observation value {v:?} out of range"
                )));
            }
            obs.values[k / VIEW][k % VIEW] = v;
        }
        Ok(obs)
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.as_bytes().iter().map(|&b| f64::from(b)).collect()
    }

    pub fn code(&self) -> HashCode {
        exact_hash(self)
    }
}

impl CanonicalBytes for Observation {
    fn write_canonical(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self.as_bytes());
    }
}

/// The four views seen after 0, 1, 2 and 3 left turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Panorama {
    pub views: [Observation; 4],
}

impl Panorama {
    pub fn code(&self) -> HashCode {
        exact_hash(self)
    }
}

impl CanonicalBytes for Panorama {
    fn write_canonical(&self, out: &mut Vec<u8>) {
        for v in &self.views {
            out.extend_from_slice(v.as_bytes());
        }
    }
}

/// What ends an episode successfully.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mission {
    ReachGoal,
    PickUp { kind: CellKind, color: Color },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

/// Extrinsic reward for succeeding after `steps_taken` earlier steps.
pub fn success_reward(steps_taken: u32, max_steps: u32) -> f64 {
    1.0 - 0.9 * (f64::from(steps_taken) / f64::from(max_steps))
}

/// Partially observable grid environment with Minigrid action semantics.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridEnv {
    width: usize,
    height: usize,
    grid: Vec<Cell>,
    agent_pos: (usize, usize),
    agent_dir: Direction,
    carrying: Option<Cell>,
    step_count: u32,
    max_steps: u32,
    episode_done: bool,
    success: bool,
    mission: Mission,
}

/// Complete copy of a [`GridEnv`]'s state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Snapshot(GridEnv);

impl Snapshot {
    pub fn restore(&self) -> GridEnv {
        self.0.clone()
    }

    pub fn env(&self) -> &GridEnv {
        &self.0
    }
}

impl GridEnv {
    pub fn new(
        width: usize,
        height: usize,
        grid: Vec<Cell>,
        agent_pos: (usize, usize),
        agent_dir: Direction,
        max_steps: u32,
        mission: Mission,
    ) -> Result<GridEnv> {
        if width == 0 || height == 0 || grid.len() != width * height {
            return Err(Error::InvalidConfig(format!(
                "grid of {} cells does not match {width}x{height}",
                grid.len()
            )));
        }
        if max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        let (x, y) = agent_pos;
        if x >= width || y >= height {
            return Err(Error::InvalidConfig(format!(
                "agent position {agent_pos:?} out of bounds"
            )));
        }
        if !grid[y * width + x].can_overlap() {
            return Err(Error::InvalidConfig(format!(
                "agent placed on {:?}",
                grid[y * width + x].kind
            )));
        }
        Ok(GridEnv {
            width,
            height,
            grid,
            agent_pos,
            agent_dir,
            carrying: None,
            step_count: 0,
            max_steps,
            episode_done: false,
            success: false,
            mission,
        })
    }

    /// Builds an environment from an ASCII layout, mostly for tests.
    ///
    /// `#` wall, `.` or space empty, `G` goal, `D` closed yellow door,
    /// `O` open yellow door, `L` locked yellow door, `K` yellow key,
    /// `B` green ball, `X` red box, and `>v<^` the agent with its heading.
    pub fn from_ascii(layout: &str, max_steps: u32, mission: Mission) -> Result<GridEnv> {
        let rows: Vec<&str> = layout
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.iter().map(|r| r.chars().count()).max().unwrap_or(0);
        let mut grid = vec![Cell::WALL; width * height];
        let mut agent = None;
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                let cell = match ch {
                    '#' => Cell::WALL,
                    '.' | ' ' => Cell::EMPTY,
                    'G' => Cell::GOAL,
                    'D' => Cell::door(Color::Yellow, DoorState::Closed),
                    'O' => Cell::door(Color::Yellow, DoorState::Open),
                    'L' => Cell::door(Color::Yellow, DoorState::Locked),
                    'K' => Cell::key(Color::Yellow),
                    'B' => Cell::ball(Color::Green),
                    'X' => Cell::boxed(Color::Red),
                    '>' | 'v' | '<' | '^' => {
                        let dir = match ch {
                            '>' => Direction::East,
                            'v' => Direction::South,
                            '<' => Direction::West,
                            _ => Direction::North,
                        };
                        agent = Some(((x, y), dir));
                        Cell::EMPTY
                    }
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "unknown layout char {other:?}"
                        )))
                    }
                };
                grid[y * width + x] = cell;
            }
        }
        let (pos, dir) = agent.ok_or_else(|| Error::InvalidConfig("layout has no agent".into()))?;
        GridEnv::new(width, height, grid, pos, dir, max_steps, mission)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn agent_pos(&self) -> (usize, usize) {
        self.agent_pos
    }

    pub fn agent_dir(&self) -> Direction {
        self.agent_dir
    }

    pub fn carrying(&self) -> Option<Cell> {
        self.carrying
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn max_steps(&self) -> u32 {
        self.max_steps
    }

    pub fn is_done(&self) -> bool {
        self.episode_done
    }

    pub fn success(&self) -> bool {
        self.success
    }

    pub fn mission(&self) -> Mission {
        self.mission
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.grid[y * self.width + x]
    }

    pub fn set_cell(&mut self, x: usize, y: usize, cell: Cell) {
        self.grid[y * self.width + x] = cell;
    }

    pub fn set_max_steps(&mut self, max_steps: u32) {
        self.max_steps = max_steps.max(1);
    }

    fn cell_at(&self, x: i64, y: i64) -> Cell {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            Cell::WALL
        } else {
            self.grid[y as usize * self.width + x as usize]
        }
    }

    pub fn front_pos(&self) -> Option<(usize, usize)> {
        let (dx, dy) = self.agent_dir.vector();
        let x = self.agent_pos.0 as i64 + dx;
        let y = self.agent_pos.1 as i64 + dy;
        (x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height)
            .then_some((x as usize, y as usize))
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot(self.clone())
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        let (reward, done) = self.apply(action)?;
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done,
        })
    }

    /// [`step`](Self::step) without rendering the next observation.
    pub fn apply(&mut self, action: Action) -> Result<(f64, bool)> {
        if self.episode_done {
            return Err(Error::EpisodeFinished);
        }
        let steps_before = self.step_count;
        self.step_count += 1;
        let mut reward = 0.0;
        let mut terminated = false;
        let front = self.front_pos();

        match action {
            Action::Left => self.agent_dir = self.agent_dir.left(),
            Action::Right => self.agent_dir = self.agent_dir.right(),
            Action::Forward => {
                if let Some((fx, fy)) = front {
                    let cell = self.cell(fx, fy);
                    if cell.can_overlap() {
                        self.agent_pos = (fx, fy);
                        if cell.kind == CellKind::Goal && self.mission == Mission::ReachGoal {
                            terminated = true;
                        }
                    }
                }
            }
            Action::Pickup => {
                if let Some((fx, fy)) = front {
                    let cell = self.cell(fx, fy);
                    if self.carrying.is_none() && cell.can_pickup() {
                        self.carrying = Some(cell);
                        self.set_cell(fx, fy, Cell::EMPTY);
                        if let Mission::PickUp { kind, color } = self.mission {
                            if cell.kind == kind && cell.color == color {
                                terminated = true;
                            }
                        }
                    }
                }
            }
            Action::Drop => {
                if let (Some((fx, fy)), Some(carried)) = (front, self.carrying) {
                    if self.cell(fx, fy).is_empty() {
                        self.set_cell(fx, fy, carried);
                        self.carrying = None;
                    }
                }
            }
            Action::Toggle => {
                if let Some((fx, fy)) = front {
                    let mut cell = self.cell(fx, fy);
                    match cell.kind {
                        CellKind::Door => {
                            cell.state = match cell.state {
                                DoorState::Locked => {
                                    let has_key = self.carrying.is_some_and(|c| {
                                        c.kind == CellKind::Key && c.color == cell.color
                                    });
                                    if has_key {
                                        DoorState::Open
                                    } else {
                                        DoorState::Locked
                                    }
                                }
                                DoorState::Closed => DoorState::Open,
                                DoorState::Open => DoorState::Closed,
                            };
                            self.set_cell(fx, fy, cell);
                        }
                        // boxes are always empty here, so opening one just removes it
                        CellKind::Box => self.set_cell(fx, fy, Cell::EMPTY),
                        _ => {}
                    }
                }
            }
            Action::Done => {}
        }

        if terminated {
            self.success = true;
            reward = success_reward(steps_before, self.max_steps);
        }
        let truncated = self.step_count >= self.max_steps;
        self.episode_done = terminated || truncated;
        Ok((reward, self.episode_done))
    }

    pub fn observe(&self) -> Observation {
        self.view(self.agent_dir).0
    }

    pub fn panorama(&self) -> Panorama {
        let mut dir = self.agent_dir;
        let mut views = [Observation::unseen(); 4];
        for v in &mut views {
            *v = self.view(dir).0;
            dir = dir.left();
        }
        Panorama { views }
    }

    /// World coordinates of every cell visible in the current observation.
    pub fn visible_cells(&self) -> Vec<(usize, usize)> {
        let (_, mask) = self.view(self.agent_dir);
        let mut out = Vec::new();
        for (i, col) in mask.iter().enumerate() {
            for (j, &seen) in col.iter().enumerate() {
                if !seen {
                    continue;
                }
                let (x, y) = self.local_to_world(self.agent_dir, i, j);
                if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
                    out.push((x as usize, y as usize));
                }
            }
        }
        out
    }

    fn local_to_world(&self, dir: Direction, col: usize, row: usize) -> (i64, i64) {
        let (fx, fy) = dir.vector();
        // right-hand side of the heading
        let (rx, ry) = (-fy, fx);
        let forward = (Observation::AGENT_ROW - row) as i64;
        let lateral = col as i64 - Observation::AGENT_COL as i64;
        (
            self.agent_pos.0 as i64 + forward * fx + lateral * rx,
            self.agent_pos.1 as i64 + forward * fy + lateral * ry,
        )
    }

    fn view(&self, dir: Direction) -> (Observation, [[bool; VIEW]; VIEW]) {
        let mut local = [[Cell::WALL; VIEW]; VIEW];
        for (i, col) in local.iter_mut().enumerate() {
            for (j, cell) in col.iter_mut().enumerate() {
                let (x, y) = self.local_to_world(dir, i, j);
                *cell = self.cell_at(x, y);
            }
        }

        // Occlusion sweep, row by row from the agent outwards.
        let mut mask = [[false; VIEW]; VIEW];
        mask[Observation::AGENT_COL][Observation::AGENT_ROW] = true;
        for j in (0..VIEW).rev() {
            for i in 0..VIEW - 1 {
                if !mask[i][j] || !local[i][j].see_behind() {
                    continue;
                }
                mask[i + 1][j] = true;
                if j > 0 {
                    mask[i + 1][j - 1] = true;
                    mask[i][j - 1] = true;
                }
            }
            for i in (1..VIEW).rev() {
                if !mask[i][j] || !local[i][j].see_behind() {
                    continue;
                }
                mask[i - 1][j] = true;
                if j > 0 {
                    mask[i - 1][j - 1] = true;
                    mask[i][j - 1] = true;
                }
            }
        }

        let mut obs = Observation::unseen();
        for i in 0..VIEW {
            for j in 0..VIEW {
                if mask[i][j] {
                    obs.values[i][j] = local[i][j].encode();
                }
            }
        }
        let own = self.carrying.unwrap_or(Cell::EMPTY);
        obs.values[Observation::AGENT_COL][Observation::AGENT_ROW] = own.encode();
        (obs, mask)
    }
}
