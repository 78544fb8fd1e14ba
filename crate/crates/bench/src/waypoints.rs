//! Room sequences and the door-to-door initial guesses through them.

use nalgebra::DVector;
use orthtrp::bezier::{arc_length_fractions, polyline_point};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::env::{EnvError, RoomGrid};

/// Rooms visited for a given waypoint count: one extra room per five waypoints.
pub fn rooms_for_waypoints(n_waypoints: usize) -> usize {
    (1 + n_waypoints.saturating_sub(1) / 5).max(2)
}

/// Seeded random walk over adjacent rooms that never steps straight back.
pub fn random_room_sequence<R: Rng>(grid: &RoomGrid, n_rooms: usize, rng: &mut R) -> Vec<usize> {
    let mut seq = vec![rng.gen_range(0..grid.n_rooms())];
    while seq.len() < n_rooms {
        let current = seq[seq.len() - 1];
        let previous = (seq.len() >= 2).then(|| seq[seq.len() - 2]);
        let options: Vec<usize> = grid.neighbors(current).into_iter().filter(|&r| Some(r) != previous).collect();
        // A room with a single neighbour forces a step back.
        let next = options.choose(rng).copied().or(previous);
        match next {
            Some(r) => seq.push(r),
            None => break,
        }
    }
    seq
}

/// Room centers joined through door centers, before resampling.
pub fn door_polyline(grid: &RoomGrid, rooms: &[usize]) -> Result<Vec<DVector<f64>>, EnvError> {
    let first = *rooms.first().ok_or(EnvError::RoomOutOfRange(usize::MAX))?;
    if first >= grid.n_rooms() {
        return Err(EnvError::RoomOutOfRange(first));
    }
    let mut path = vec![grid.room_center(first)];
    for w in rooms.windows(2) {
        let wall = grid.wall_between(w[0], w[1])?;
        path.push(DVector::from_row_slice(&wall.center));
        path.push(grid.room_center(w[1]));
    }
    Ok(path)
}

/// Uniform arc-length resampling of a polyline to `n` points.
pub fn resample(points: &[DVector<f64>], n: usize) -> Vec<DVector<f64>> {
    let fractions = arc_length_fractions(points);
    (0..n).map(|k| polyline_point(points, &fractions, k as f64 / (n - 1).max(1) as f64)).collect()
}

pub fn initial_waypoints(grid: &RoomGrid, rooms: &[usize], n_waypoints: usize) -> Result<Vec<DVector<f64>>, EnvError> {
    Ok(resample(&door_polyline(grid, rooms)?, n_waypoints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::generate_environment;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> RoomGrid {
        generate_environment([4, 4, 2], [4.0, 4.0, 3.0], 1.2, 5, 1).unwrap()
    }

    #[test]
    fn two_rooms_pass_through_the_door() {
        let g = generate_environment([2, 1, 1], [4.0, 4.0, 3.0], 1.2, 5, 1).unwrap();
        let path = door_polyline(&g, &[0, 1]).unwrap();
        assert_eq!(path.len(), 3);
        assert_eq!(path[1].as_slice(), &[4.0, 2.0, 1.5]);
        let w = initial_waypoints(&g, &[0, 1], 5).unwrap();
        assert_eq!(w[2].as_slice(), &[4.0, 2.0, 1.5]);
    }

    #[test]
    fn resampled_count_endpoints_and_spacing() {
        let g = grid();
        let rooms = [0, 1, 5, 21];
        let w = initial_waypoints(&g, &rooms, 11).unwrap();
        assert_eq!(w.len(), 11);
        assert_eq!(w[0], g.room_center(0));
        assert!((&w[10] - g.room_center(21)).amax() < 1e-12);
        let poly = door_polyline(&g, &rooms).unwrap();
        let f = arc_length_fractions(&poly);
        for (k, p) in w.iter().enumerate() {
            assert!((p - polyline_point(&poly, &f, k as f64 / 10.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_adjacent_rooms() {
        assert_eq!(initial_waypoints(&grid(), &[0, 2], 11), Err(EnvError::NotAdjacent(0, 2)));
    }

    #[test]
    fn walk_is_adjacent_without_backtracking() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let seq = random_room_sequence(&g, 6, &mut rng);
            assert_eq!(seq.len(), 6);
            for w in seq.windows(2) {
                assert!(g.wall_between(w[0], w[1]).is_ok());
            }
            for w in seq.windows(3) {
                assert_ne!(w[0], w[2]);
            }
        }
    }

    #[test]
    fn room_count_grows_with_waypoints() {
        assert_eq!(rooms_for_waypoints(11), 3);
        assert_eq!(rooms_for_waypoints(30), 6);
        assert_eq!(rooms_for_waypoints(2), 2);
    }
}
