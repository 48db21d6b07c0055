//! Seeded layout generators for the MultiRoom and KeyCorridor families.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cell::{Cell, CellKind, Color, DoorState};
use super::env::{Direction, GridEnv, Mission};
use crate::error::{Error, Result};

/// Largest side length of a MultiRoom grid.
pub const MULTIROOM_MAX_SIDE: usize = 25;
const LAYOUT_ATTEMPTS: usize = 1000;
const ROOM_ATTEMPTS: usize = 40;

pub fn multiroom_max_steps(n_rooms: usize, max_room_size: usize) -> u32 {
    (20 * n_rooms * max_room_size) as u32
}

pub fn keycorridor_max_steps(room_size: usize) -> u32 {
    (30 * room_size * room_size) as u32
}

#[derive(Debug, Clone, Copy)]
struct Room {
    x: i64,
    y: i64,
    w: i64,
    h: i64,
    entry: Option<(i64, i64)>,
}

impl Room {
    fn disjoint(&self, other: &Room) -> bool {
        self.x + self.w <= other.x
            || other.x + other.w <= self.x
            || self.y + self.h <= other.y
            || other.y + other.h <= self.y
    }

    fn random_interior(&self, rng: &mut impl Rng) -> (usize, usize) {
        let x = rng.random_range(self.x + 1..self.x + self.w - 1);
        let y = rng.random_range(self.y + 1..self.y + self.h - 1);
        (x as usize, y as usize)
    }
}

/// A chain of `n_rooms` rooms joined by closed doors; goal in the last room.
///
/// Room sides (walls included) are drawn from `4..=max_room_size`. The grid is
/// square with side `min(25, n_rooms * (max_room_size - 1) + 1)`.
pub fn generate_multiroom(seed: u64, n_rooms: usize, max_room_size: usize) -> Result<GridEnv> {
    if n_rooms < 2 {
        return Err(Error::InvalidConfig(format!(
            "multiroom needs at least 2 rooms, got {n_rooms}"
        )));
    }
    if max_room_size < 4 {
        return Err(Error::InvalidConfig(format!(
            "max_room_size must be >= 4, got {max_room_size}"
        )));
    }
    let side = (n_rooms * (max_room_size - 1) + 1)
        .min(MULTIROOM_MAX_SIDE)
        .max(max_room_size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let rooms = (0..LAYOUT_ATTEMPTS)
        .find_map(|_| place_rooms(&mut rng, n_rooms, max_room_size as i64, side as i64))
        .ok_or_else(|| Error::Generation {
            attempts: LAYOUT_ATTEMPTS,
            reason: format!(
                "could not fit {n_rooms} rooms of size <= {max_room_size} in a {side}x{side} grid"
            ),
        })?;

    let mut grid = vec![Cell::WALL; side * side];
    for room in &rooms {
        for y in room.y + 1..room.y + room.h - 1 {
            for x in room.x + 1..room.x + room.w - 1 {
                grid[y as usize * side + x as usize] = Cell::EMPTY;
            }
        }
    }
    let mut prev_color = None;
    for room in &rooms[1..] {
        let (dx, dy) = room.entry.expect("non-first rooms have an entry door");
        let choices: Vec<Color> = Color::ALL
            .iter()
            .copied()
            .filter(|&c| Some(c) != prev_color)
            .collect();
        let color = *choices.choose(&mut rng).expect("palette is non-empty");
        prev_color = Some(color);
        grid[dy as usize * side + dx as usize] = Cell::door(color, DoorState::Closed);
    }

    let last = rooms.last().expect("at least two rooms");
    let (gx, gy) = last.random_interior(&mut rng);
    grid[gy * side + gx] = Cell::GOAL;
    let agent_pos = rooms[0].random_interior(&mut rng);
    let agent_dir = Direction::from_index(rng.random_range(0..4));

    GridEnv::new(
        side,
        side,
        grid,
        agent_pos,
        agent_dir,
        multiroom_max_steps(n_rooms, max_room_size),
        Mission::ReachGoal,
    )
}

fn place_rooms(rng: &mut impl Rng, n_rooms: usize, max_size: i64, side: i64) -> Option<Vec<Room>> {
    let w = rng.random_range(4..=max_size);
    let h = rng.random_range(4..=max_size);
    let first = Room {
        x: rng.random_range(0..=side - w),
        y: rng.random_range(0..=side - h),
        w,
        h,
        entry: None,
    };
    let mut rooms = vec![first];

    for _ in 1..n_rooms {
        let prev = *rooms.last().expect("non-empty");
        let placed = (0..ROOM_ATTEMPTS).find_map(|_| {
            let w = rng.random_range(4..=max_size);
            let h = rng.random_range(4..=max_size);
            let room = match rng.random_range(0..4) {
                // east wall of the previous room
                0 => {
                    let door = (
                        prev.x + prev.w - 1,
                        rng.random_range(prev.y + 1..prev.y + prev.h - 1),
                    );
                    let y = rng.random_range(door.1 - h + 2..=door.1 - 1);
                    Room {
                        x: door.0,
                        y,
                        w,
                        h,
                        entry: Some(door),
                    }
                }
                // south
                1 => {
                    let door = (
                        rng.random_range(prev.x + 1..prev.x + prev.w - 1),
                        prev.y + prev.h - 1,
                    );
                    let x = rng.random_range(door.0 - w + 2..=door.0 - 1);
                    Room {
                        x,
                        y: door.1,
                        w,
                        h,
                        entry: Some(door),
                    }
                }
                // west
                2 => {
                    let door = (prev.x, rng.random_range(prev.y + 1..prev.y + prev.h - 1));
                    let y = rng.random_range(door.1 - h + 2..=door.1 - 1);
                    Room {
                        x: door.0 - w + 1,
                        y,
                        w,
                        h,
                        entry: Some(door),
                    }
                }
                // north
                _ => {
                    let door = (rng.random_range(prev.x + 1..prev.x + prev.w - 1), prev.y);
                    let x = rng.random_range(door.0 - w + 2..=door.0 - 1);
                    Room {
                        x,
                        y: door.1 - h + 1,
                        w,
                        h,
                        entry: Some(door),
                    }
                }
            };
            let in_bounds =
                room.x >= 0 && room.y >= 0 && room.x + room.w <= side && room.y + room.h <= side;
            let clear = rooms[..rooms.len() - 1].iter().all(|r| r.disjoint(&room));
            (in_bounds && clear).then_some(room)
        })?;
        rooms.push(placed);
    }
    Some(rooms)
}

/// A vertical corridor flanked by side rooms. A key lies in one left room;
/// the target ball sits behind a locked door in one right room.
///
/// Rooms are `room_size` cells on a side including shared walls, in `rows`
/// rows and three columns.
pub fn generate_keycorridor(seed: u64, room_size: usize, rows: usize) -> Result<GridEnv> {
    if room_size < 3 {
        return Err(Error::InvalidConfig(format!(
            "room_size must be >= 3, got {room_size}"
        )));
    }
    if rows < 1 {
        return Err(Error::InvalidConfig("rows must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = room_size - 1;
    let width = 3 * step + 1;
    let height = rows * step + 1;
    let mut grid = vec![Cell::WALL; width * height];
    let idx = |x: usize, y: usize| y * width + x;

    let room = |col: usize, row: usize| Room {
        x: (col * step) as i64,
        y: (row * step) as i64,
        w: room_size as i64,
        h: room_size as i64,
        entry: None,
    };
    for row in 0..rows {
        for col in 0..3 {
            let r = room(col, row);
            for y in r.y + 1..r.y + r.h - 1 {
                for x in r.x + 1..r.x + r.w - 1 {
                    grid[idx(x as usize, y as usize)] = Cell::EMPTY;
                }
            }
        }
    }
    // open up the middle column into a hallway
    for row in 1..rows {
        let y = row * step;
        for x in step + 1..2 * step {
            grid[idx(x, y)] = Cell::EMPTY;
        }
    }

    let locked_row = rng.random_range(0..rows);
    let locked_color = *Color::ALL.choose(&mut rng).expect("palette");
    for row in 0..rows {
        for (col, wall_x) in [(0, step), (2, 2 * step)] {
            let y = row * step + rng.random_range(1..step);
            let door = if col == 2 && row == locked_row {
                Cell::door(locked_color, DoorState::Locked)
            } else {
                Cell::door(
                    *Color::ALL.choose(&mut rng).expect("palette"),
                    DoorState::Closed,
                )
            };
            grid[idx(wall_x, y)] = door;
        }
    }

    let ball_color = *Color::ALL.choose(&mut rng).expect("palette");
    let (bx, by) = room(2, locked_row).random_interior(&mut rng);
    grid[idx(bx, by)] = Cell::ball(ball_color);
    let key_row = rng.random_range(0..rows);
    let (kx, ky) = room(0, key_row).random_interior(&mut rng);
    grid[idx(kx, ky)] = Cell::key(locked_color);

    let agent_pos = room(1, rows / 2).random_interior(&mut rng);
    let agent_dir = Direction::from_index(rng.random_range(0..4));
    GridEnv::new(
        width,
        height,
        grid,
        agent_pos,
        agent_dir,
        keycorridor_max_steps(room_size),
        Mission::PickUp {
            kind: CellKind::Ball,
            color: ball_color,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiroom_is_seed_deterministic() {
        let a = generate_multiroom(1, 2, 5).unwrap();
        let b = generate_multiroom(1, 2, 5).unwrap();
        assert_eq!(a, b);
        let differs = (2..20).any(|s| generate_multiroom(s, 2, 5).unwrap() != a);
        assert!(differs);
    }

    #[test]
    fn multiroom_rejects_bad_parameters() {
        assert!(matches!(
            generate_multiroom(1, 1, 5),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            generate_multiroom(1, 2, 3),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn multiroom_has_doors_goal_and_agent() {
        for seed in 0..50 {
            let env = generate_multiroom(seed, 4, 6).unwrap();
            let cells: Vec<Cell> = (0..env.height())
                .flat_map(|y| (0..env.width()).map(move |x| (x, y)))
                .map(|(x, y)| env.cell(x, y))
                .collect();
            assert_eq!(cells.iter().filter(|c| c.kind == CellKind::Door).count(), 3);
            assert_eq!(cells.iter().filter(|c| c.kind == CellKind::Goal).count(), 1);
            assert!(cells
                .iter()
                .all(|c| c.kind == CellKind::Door || c.state == DoorState::Open));
            assert_eq!(env.max_steps(), 20 * 4 * 6);
        }
    }

    #[test]
    fn pathological_multiroom_fails_explicitly() {
        // 25 rooms of up to 25 cells cannot be chained inside a 25x25 grid
        let err = generate_multiroom(3, 25, 25).unwrap_err();
        assert!(matches!(err, Error::Generation { .. }), "{err}");
    }

    #[test]
    fn keycorridor_layout() {
        let env = generate_keycorridor(7, 3, 3).unwrap();
        assert_eq!((env.width(), env.height()), (7, 7));
        let mut locked = 0;
        let mut keys = 0;
        for y in 0..7 {
            for x in 0..7 {
                let c = env.cell(x, y);
                locked += usize::from(c.kind == CellKind::Door && c.state == DoorState::Locked);
                keys += usize::from(c.kind == CellKind::Key);
            }
        }
        assert_eq!((locked, keys), (1, 1));
        assert_eq!(env, generate_keycorridor(7, 3, 3).unwrap());
    }
}
