//! Grid-of-rooms environments with collision points on shared walls.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("grid shape and room size must be positive, got {0:?} and {1:?}")]
    BadDimensions([usize; 3], [f64; 3]),
    #[error("door of size {door} does not fit a wall face of extent {face}")]
    DoorTooLarge { door: f64, face: f64 },
    #[error("room index {0} outside the grid")]
    RoomOutOfRange(usize),
    #[error("rooms {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),
}

/// Wall shared by two rooms that differ by one step along `axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub rooms: (usize, usize),
    pub axis: usize,
    /// Coordinate of the wall plane along `axis`.
    pub plane: f64,
    /// Center of the wall face, which is also the door center.
    pub center: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomGrid {
    pub grid_shape: [usize; 3],
    pub room_size: [f64; 3],
    pub door_size: f64,
    pub points_per_wall: usize,
    pub seed: u64,
    pub walls: Vec<Wall>,
    pub collision_points: Vec<[f64; 3]>,
}

impl RoomGrid {
    pub fn n_rooms(&self) -> usize {
        self.grid_shape.iter().product()
    }

    pub fn room_coords(&self, room: usize) -> [usize; 3] {
        let [nx, ny, _] = self.grid_shape;
        [room % nx, (room / nx) % ny, room / (nx * ny)]
    }

    pub fn room_index(&self, c: [usize; 3]) -> usize {
        let [nx, ny, _] = self.grid_shape;
        c[0] + nx * (c[1] + ny * c[2])
    }

    pub fn room_center(&self, room: usize) -> DVector<f64> {
        let c = self.room_coords(room);
        DVector::from_fn(3, |d, _| (c[d] as f64 + 0.5) * self.room_size[d])
    }

    /// Rooms sharing a wall with `room`, in a fixed order.
    pub fn neighbors(&self, room: usize) -> Vec<usize> {
        let c = self.room_coords(room);
        let mut out = Vec::with_capacity(6);
        for axis in 0..3 {
            if c[axis] > 0 {
                let mut n = c;
                n[axis] -= 1;
                out.push(self.room_index(n));
            }
            if c[axis] + 1 < self.grid_shape[axis] {
                let mut n = c;
                n[axis] += 1;
                out.push(self.room_index(n));
            }
        }
        out
    }

    pub fn wall_between(&self, a: usize, b: usize) -> Result<&Wall, EnvError> {
        for r in [a, b] {
            if r >= self.n_rooms() {
                return Err(EnvError::RoomOutOfRange(r));
            }
        }
        let key = (a.min(b), a.max(b));
        self.walls.iter().find(|w| w.rooms == key).ok_or(EnvError::NotAdjacent(a, b))
    }

    pub fn points(&self) -> Vec<DVector<f64>> {
        self.collision_points.iter().map(|p| DVector::from_row_slice(p)).collect()
    }

    /// Whether `p` lies inside the door opening of `wall` (in-plane test only).
    pub fn in_door(&self, wall: &Wall, p: &[f64; 3]) -> bool {
        let half = 0.5 * self.door_size;
        (0..3).filter(|&d| d != wall.axis).all(|d| (p[d] - wall.center[d]).abs() < half)
    }
}

fn in_plane_axes(axis: usize) -> [usize; 2] {
    match axis {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    }
}

/// Builds the grid and samples `points_per_wall` points uniformly on every
/// shared wall, rejecting those that fall in the centered square door.
pub fn generate_environment(
    grid_shape: [usize; 3],
    room_size: [f64; 3],
    door_size: f64,
    points_per_wall: usize,
    seed: u64,
) -> Result<RoomGrid, EnvError> {
    if grid_shape.contains(&0) || !room_size.iter().all(|&s| s > 0.0 && s.is_finite()) || !(door_size > 0.0) {
        return Err(EnvError::BadDimensions(grid_shape, room_size));
    }
    let mut grid = RoomGrid {
        grid_shape,
        room_size,
        door_size,
        points_per_wall,
        seed,
        walls: Vec::new(),
        collision_points: Vec::new(),
    };
    for axis in 0..3 {
        if grid_shape[axis] < 2 {
            continue;
        }
        for d in in_plane_axes(axis) {
            if door_size >= room_size[d] {
                return Err(EnvError::DoorTooLarge { door: door_size, face: room_size[d] });
            }
        }
    }

    for room in 0..grid.n_rooms() {
        let c = grid.room_coords(room);
        for axis in 0..3 {
            if c[axis] + 1 >= grid_shape[axis] {
                continue;
            }
            let mut n = c;
            n[axis] += 1;
            let mut center = [0.0; 3];
            for d in 0..3 {
                center[d] = if d == axis {
                    (c[d] + 1) as f64 * room_size[d]
                } else {
                    (c[d] as f64 + 0.5) * room_size[d]
                };
            }
            grid.walls.push(Wall { rooms: (room, grid.room_index(n)), axis, plane: center[axis], center });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(grid.walls.len() * points_per_wall);
    for wall in &grid.walls {
        let [a, b] = in_plane_axes(wall.axis);
        let mut accepted = 0;
        while accepted < points_per_wall {
            let mut p = [0.0; 3];
            p[wall.axis] = wall.plane;
            for d in [a, b] {
                let half = 0.5 * room_size[d];
                p[d] = rng.gen_range(wall.center[d] - half..wall.center[d] + half);
            }
            if !grid.in_door(wall, &p) {
                points.push(p);
                accepted += 1;
            }
        }
    }
    grid.collision_points = points;
    Ok(grid)
}
