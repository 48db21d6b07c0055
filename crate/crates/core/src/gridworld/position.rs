use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{hash_bytes, HashCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Up,
    Right,
    Down,
    Left,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Right, Move::Down, Move::Left];

    fn delta(self) -> (i64, i64) {
        match self {
            Move::Up => (0, -1),
            Move::Right => (1, 0),
            Move::Down => (0, 1),
            Move::Left => (-1, 0),
        }
    }
}

/// Fully observable world whose state is the agent's position.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PositionWorld {
    width: usize,
    height: usize,
    walls: Arc<Vec<bool>>,
    agent_pos: (usize, usize),
}

impl PositionWorld {
    pub fn new(
        width: usize,
        height: usize,
        walls: &[(usize, usize)],
        agent_pos: (usize, usize),
    ) -> Result<Self> {
        let mut mask = vec![false; width * height];
        for &(x, y) in walls {
            if x >= width || y >= height {
                return Err(Error::InvalidConfig(format!(
                    "wall {:?} out of bounds",
                    (x, y)
                )));
            }
            mask[y * width + x] = true;
        }
        let world = PositionWorld {
            width,
            height,
            walls: Arc::new(mask),
            agent_pos,
        };
        if !world.is_free(agent_pos.0 as i64, agent_pos.1 as i64) {
            return Err(Error::InvalidConfig(format!(
                "agent at {agent_pos:?} is not on a free cell"
            )));
        }
        Ok(world)
    }

    /// `#` marks walls, `A` the agent, anything else is free.
    pub fn from_ascii(layout: &str) -> Result<Self> {
        let rows: Vec<&str> = layout
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let mut walls = Vec::new();
        let mut agent = None;
        for (y, row) in rows.iter().enumerate() {
            for x in 0..width {
                match row.as_bytes().get(x) {
                    Some(b'#') | None => walls.push((x, y)),
                    Some(b'A') => agent = Some((x, y)),
                    _ => {}
                }
            }
        }
        let agent = agent.ok_or_else(|| Error::InvalidConfig("layout has no agent".into()))?;
        PositionWorld::new(width, height, &walls, agent)
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

    pub fn is_free(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && !self.walls[y as usize * self.width + x as usize]
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.is_free(x as i64, y as i64))
            .collect()
    }

    pub fn with_agent_at(&self, pos: (usize, usize)) -> Result<Self> {
        if !self.is_free(pos.0 as i64, pos.1 as i64) {
            return Err(Error::InvalidConfig(format!("{pos:?} is not a free cell")));
        }
        Ok(PositionWorld {
            agent_pos: pos,
            ..self.clone()
        })
    }

    /// Moves one cell; bumping into a wall or the border leaves the agent in place.
    pub fn step(&mut self, m: Move) {
        let (dx, dy) = m.delta();
        let (x, y) = (self.agent_pos.0 as i64 + dx, self.agent_pos.1 as i64 + dy);
        if self.is_free(x, y) {
            self.agent_pos = (x as usize, y as usize);
        }
    }

    pub fn position_code(pos: (usize, usize)) -> HashCode {
        let mut bytes = [0u8; 8];
        bytes[..4].copy_from_slice(&(pos.0 as u32).to_le_bytes());
        bytes[4..].copy_from_slice(&(pos.1 as u32).to_le_bytes());
        hash_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wall_moves_are_noops() {
        let mut w = PositionWorld::from_ascii("###\n#A#\n###").unwrap();
        for m in Move::ALL {
            w.step(m);
            assert_eq!(w.agent_pos(), (1, 1));
        }
    }

    #[test]
    fn agent_cannot_start_in_wall() {
        assert!(PositionWorld::new(3, 3, &[(1, 1)], (1, 1)).is_err());
    }
}
