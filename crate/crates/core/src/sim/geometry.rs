use serde::{Deserialize, Serialize};

use super::SimError;
use crate::channels::{GridPosition, ShearDirection, GRID_SIZE, HALL_COUNT};

/// Planar layout of the 20×20 mm contact surface, in millimetres.
///
/// Grid positions are the cell centres of a 3×3 division of the surface;
/// magnets sit under positions 1, 3, 5, 7 and 9 (the centre and the four
/// corners).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub surface_mm: f64,
    pub magnet_positions: [[f64; 2]; HALL_COUNT],
    pub grid_positions: [[f64; 2]; GRID_SIZE],
    pub piezo_sides: [ShearDirection; 4],
    /// Standard deviation of the radial force-spread kernel.
    pub spread_sigma_mm: f64,
}

impl Default for SensorGeometry {
    fn default() -> Self {
        let surface = 20.0;
        let cell = surface / 3.0;
        let centre = |i: usize| cell * (i as f64 + 0.5);
        let grid: [[f64; 2]; GRID_SIZE] = std::array::from_fn(|i| [centre(i % 3), centre(i / 3)]);
        let magnets = GridPosition::DIRECT.map(|p| grid[p.index()]);
        SensorGeometry {
            surface_mm: surface,
            magnet_positions: magnets,
            grid_positions: grid,
            piezo_sides: ShearDirection::ALL,
            spread_sigma_mm: 5.0,
        }
    }
}

impl SensorGeometry {
    pub fn grid_point(&self, position: GridPosition) -> [f64; 2] {
        self.grid_positions[position.index()]
    }

    pub fn contains(&self, point: [f64; 2]) -> bool {
        point.iter().all(|c| c.is_finite() && (0.0..=self.surface_mm).contains(c))
    }

    /// Grid cell containing `point`.
    pub fn cell_of(&self, point: [f64; 2]) -> GridPosition {
        let cell = self.surface_mm / 3.0;
        let idx = |c: f64| ((c / cell).floor() as usize).min(2);
        GridPosition::new((idx(point[1]) * 3 + idx(point[0]) + 1) as u8).expect("cell in range")
    }

    /// Normalized kernel weights of each magnet for a contact at `point`.
    pub fn spread_weights(&self, point: [f64; 2]) -> [f64; HALL_COUNT] {
        let two_sigma2 = 2.0 * self.spread_sigma_mm * self.spread_sigma_mm;
        let raw = self.magnet_positions.map(|m| {
            let d2 = (point[0] - m[0]).powi(2) + (point[1] - m[1]).powi(2);
            (-d2 / two_sigma2).exp()
        });
        let total: f64 = raw.iter().sum();
        raw.map(|w| w / total)
    }
}

/// Splits a normal force over the five magnets with a Gaussian radial kernel.
pub fn distribute_force(
    contact_point: [f64; 2],
    normal_force: f64,
    geometry: &SensorGeometry,
) -> Result<[f64; HALL_COUNT], SimError> {
    if !geometry.contains(contact_point) {
        return Err(SimError::ContactOutsideSurface(contact_point));
    }
    if !(normal_force >= 0.0) {
        return Err(SimError::NegativeForce(normal_force));
    }
    Ok(geometry.spread_weights(contact_point).map(|w| w * normal_force))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn magnets_sit_on_odd_grid_positions() {
        let g = SensorGeometry::default();
        for (m, p) in g.magnet_positions.iter().zip(GridPosition::DIRECT) {
            assert_eq!(*m, g.grid_point(p));
        }
        // edge midpoints lie halfway between two corner magnets
        let p2 = g.grid_point(GridPosition::new(2).unwrap());
        let (p1, p3) = (g.magnet_positions[0], g.magnet_positions[1]);
        assert!((p2[0] - (p1[0] + p3[0]) / 2.0).abs() < 1e-12);
        assert!(g.grid_positions.iter().all(|&p| g.contains(p)));
    }

    #[test]
    fn zero_force_gives_zero_shares() {
        let g = SensorGeometry::default();
        assert_eq!(distribute_force([10.0, 10.0], 0.0, &g).unwrap(), [0.0; 5]);
    }

    #[test]
    fn centre_press_is_symmetric() {
        let g = SensorGeometry::default();
        let f = distribute_force([10.0, 10.0], 4.0, &g).unwrap();
        for i in [1, 3, 4] {
            assert!((f[i] - f[0]).abs() < 1e-12);
        }
        assert!(f[2] > f[0]);
    }

    #[test]
    fn corner_press_matches_direct_kernel_evaluation() {
        let g = SensorGeometry::default();
        let p = g.grid_point(GridPosition::new(1).unwrap());
        // Oracle: evaluate exp(-d^2 / 50) at each magnet by hand.
        let c = 20.0 / 3.0;
        let d2 = [0.0, 4.0 * c * c, 2.0 * c * c, 4.0 * c * c, 8.0 * c * c];
        let k = d2.map(|d: f64| (-d / 50.0).exp());
        let total: f64 = k.iter().sum();
        let expected = k.map(|w| 6.0 * w / total);
        let got = distribute_force(p, 6.0, &g).unwrap();
        for i in 0..5 {
            assert!((got[i] - expected[i]).abs() < 1e-12);
        }
        assert!((got[0] - 4.89).abs() < 0.01);
        assert!(got[1..].iter().all(|&v| v < got[0]));
    }

    #[test]
    fn rejects_points_off_the_surface() {
        let g = SensorGeometry::default();
        assert!(matches!(
            distribute_force([21.0, 5.0], 1.0, &g),
            Err(SimError::ContactOutsideSurface(_))
        ));
    }

    #[test]
    fn cell_lookup() {
        let g = SensorGeometry::default();
        for p in GridPosition::all() {
            assert_eq!(g.cell_of(g.grid_point(p)), p);
        }
        assert_eq!(g.cell_of([20.0, 20.0]).label(), 9);
    }

    // Symmetries of the square about its centre, as maps on points and on the
    // magnet index order [1, 3, 5, 7, 9].
    fn symmetries() -> Vec<(fn([f64; 2]) -> [f64; 2], [usize; 5])> {
        vec![
            (|p| [20.0 - p[0], p[1]], [1, 0, 2, 4, 3]),
            (|p| [p[0], 20.0 - p[1]], [3, 4, 2, 0, 1]),
            (|p| [p[1], p[0]], [0, 3, 2, 1, 4]),
            (|p| [20.0 - p[1], p[0]], [1, 4, 2, 0, 3]),
        ]
    }

    proptest! {
        #[test]
        fn conserves_force(x in 0.0..20.0f64, y in 0.0..20.0f64, f in 0.0..20.0f64) {
            let g = SensorGeometry::default();
            let shares = distribute_force([x, y], f, &g).unwrap();
            prop_assert!(shares.iter().all(|&s| s >= 0.0));
            prop_assert!((shares.iter().sum::<f64>() - f).abs() < 1e-9);
        }

        #[test]
        fn equivariant_under_square_symmetries(x in 0.0..20.0f64, y in 0.0..20.0f64, f in 0.1..10.0f64) {
            let g = SensorGeometry::default();
            let base = distribute_force([x, y], f, &g).unwrap();
            for (map, perm) in symmetries() {
                let moved = distribute_force(map([x, y]), f, &g).unwrap();
                for i in 0..5 {
                    // magnet i under the original contact plays the role of
                    // magnet perm[i] after the transform
                    prop_assert!((moved[perm[i]] - base[i]).abs() < 1e-9);
                }
            }
        }
    }
}
