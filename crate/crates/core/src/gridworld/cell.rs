use serde::{Deserialize, Serialize};

/// Object ids of the standard Minigrid encoding.
pub mod object_id {
    pub const UNSEEN: u8 = 0;
    pub const EMPTY: u8 = 1;
    pub const WALL: u8 = 2;
    pub const FLOOR: u8 = 3;
    pub const DOOR: u8 = 4;
    pub const KEY: u8 = 5;
    pub const BALL: u8 = 6;
    pub const BOX: u8 = 7;
    pub const GOAL: u8 = 8;
    pub const LAVA: u8 = 9;
    pub const AGENT: u8 = 10;
    pub const MAX: u8 = AGENT;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Empty,
    Wall,
    Door,
    Key,
    Ball,
    Box,
    Goal,
}

impl CellKind {
    pub fn object_id(self) -> u8 {
        match self {
            CellKind::Empty => object_id::EMPTY,
            CellKind::Wall => object_id::WALL,
            CellKind::Door => object_id::DOOR,
            CellKind::Key => object_id::KEY,
            CellKind::Ball => object_id::BALL,
            CellKind::Box => object_id::BOX,
            CellKind::Goal => object_id::GOAL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Color {
    Red = 0,
    Green = 1,
    Blue = 2,
    Purple = 3,
    Yellow = 4,
    Grey = 5,
}

impl Color {
    pub const ALL: [Color; 6] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Purple,
        Color::Yellow,
        Color::Grey,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum DoorState {
    Open = 0,
    Closed = 1,
    Locked = 2,
}

/// One grid cell. Only doors carry a state other than `Open`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub kind: CellKind,
    pub color: Color,
    pub state: DoorState,
}

impl Cell {
    pub const EMPTY: Cell = Cell {
        kind: CellKind::Empty,
        color: Color::Red,
        state: DoorState::Open,
    };
    pub const WALL: Cell = Cell {
        kind: CellKind::Wall,
        color: Color::Grey,
        state: DoorState::Open,
    };
    pub const GOAL: Cell = Cell {
        kind: CellKind::Goal,
        color: Color::Green,
        state: DoorState::Open,
    };

    pub fn door(color: Color, state: DoorState) -> Cell {
        Cell {
            kind: CellKind::Door,
            color,
            state,
        }
    }

    pub fn key(color: Color) -> Cell {
        Cell {
            kind: CellKind::Key,
            color,
            state: DoorState::Open,
        }
    }

    pub fn ball(color: Color) -> Cell {
        Cell {
            kind: CellKind::Ball,
            color,
            state: DoorState::Open,
        }
    }

    pub fn boxed(color: Color) -> Cell {
        Cell {
            kind: CellKind::Box,
            color,
            state: DoorState::Open,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.kind == CellKind::Empty
    }

    pub fn can_overlap(&self) -> bool {
        match self.kind {
            CellKind::Empty | CellKind::Goal => true,
            CellKind::Door => self.state == DoorState::Open,
            _ => false,
        }
    }

    pub fn can_pickup(&self) -> bool {
        matches!(self.kind, CellKind::Key | CellKind::Ball | CellKind::Box)
    }

    pub fn see_behind(&self) -> bool {
        match self.kind {
            CellKind::Wall => false,
            CellKind::Door => self.state == DoorState::Open,
            _ => true,
        }
    }

    /// `(object, color, state)` triple. Empty cells encode as `(1, 0, 0)`.
    pub fn encode(&self) -> [u8; 3] {
        match self.kind {
            CellKind::Empty => [object_id::EMPTY, 0, 0],
            kind => [kind.object_id(), self.color.id(), self.state as u8],
        }
    }
}
