//! Channel map shared by every stage.
//!
//! Frame channel order is fixed: Hall sensors under grid positions
//! 1, 3, 5, 7, 9, then piezoresistors on sides x+, x−, y+, y−, then the
//! thermistor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const CHANNEL_COUNT: usize = 10;
pub const HALL_COUNT: usize = 5;
pub const PIEZO_COUNT: usize = 4;
pub const GRID_SIZE: usize = 9;

/// Frame index of the first Hall channel.
pub const HALL_BASE: usize = 0;
/// Frame index of the first piezo channel.
pub const PIEZO_BASE: usize = 5;
pub const THERMISTOR_CHANNEL: usize = 9;

/// A cell of the 3×3 calibration grid, labelled 1–9 row by row.
///
/// ```text
/// 1 2 3
/// 4 5 6
/// 7 8 9
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct GridPosition(u8);

impl GridPosition {
    /// Positions with a Hall sensor directly underneath.
    pub const DIRECT: [GridPosition; HALL_COUNT] = [
        GridPosition(1),
        GridPosition(3),
        GridPosition(5),
        GridPosition(7),
        GridPosition(9),
    ];

    /// Edge midpoints, resolved from their three neighbouring direct positions.
    pub const INTERPOLATED: [GridPosition; 4] =
        [GridPosition(2), GridPosition(4), GridPosition(6), GridPosition(8)];

    pub fn new(label: u8) -> Option<Self> {
        (1..=9).contains(&label).then_some(GridPosition(label))
    }

    pub fn all() -> impl Iterator<Item = GridPosition> {
        (1..=9).map(GridPosition)
    }

    pub fn label(self) -> u8 {
        self.0
    }

    /// Zero-based index into a 9-element grid array.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn row(self) -> usize {
        self.index() / 3
    }

    pub fn col(self) -> usize {
        self.index() % 3
    }

    pub fn is_direct(self) -> bool {
        self.0 % 2 == 1
    }

    /// Index of the Hall channel under this position, if any.
    pub fn hall_index(self) -> Option<usize> {
        self.is_direct().then(|| usize::from(self.0 - 1) / 2)
    }

    /// The three direct positions an edge midpoint is interpolated from.
    pub fn adjacency(self) -> Option<[GridPosition; 3]> {
        let triple = match self.0 {
            2 => [1, 3, 5],
            4 => [1, 5, 7],
            6 => [3, 5, 9],
            8 => [5, 7, 9],
            _ => return None,
        };
        Some(triple.map(GridPosition))
    }
}

impl TryFrom<u8> for GridPosition {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        GridPosition::new(value).ok_or_else(|| format!("grid position {value} outside 1..=9"))
    }
}

impl From<GridPosition> for u8 {
    fn from(p: GridPosition) -> u8 {
        p.0
    }
}

impl fmt::Display for GridPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for GridPosition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n: u8 = s.trim().parse().map_err(|_| format!("invalid grid position '{s}'"))?;
        GridPosition::try_from(n)
    }
}

/// In-plane direction sensed by one piezoresistor side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ShearDirection {
    #[serde(rename = "x+")]
    XPos,
    #[serde(rename = "x-")]
    XNeg,
    #[serde(rename = "y+")]
    YPos,
    #[serde(rename = "y-")]
    YNeg,
}

impl ShearDirection {
    pub const ALL: [ShearDirection; PIEZO_COUNT] = [
        ShearDirection::XPos,
        ShearDirection::XNeg,
        ShearDirection::YPos,
        ShearDirection::YNeg,
    ];

    pub fn index(self) -> usize {
        match self {
            ShearDirection::XPos => 0,
            ShearDirection::XNeg => 1,
            ShearDirection::YPos => 2,
            ShearDirection::YNeg => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ShearDirection::XPos => "x+",
            ShearDirection::XNeg => "x-",
            ShearDirection::YPos => "y+",
            ShearDirection::YNeg => "y-",
        }
    }

    /// Filesystem/CSV-safe tag (`xp`, `xn`, `yp`, `yn`).
    pub fn slug(self) -> &'static str {
        match self {
            ShearDirection::XPos => "xp",
            ShearDirection::XNeg => "xn",
            ShearDirection::YPos => "yp",
            ShearDirection::YNeg => "yn",
        }
    }

    /// Unit vector of the direction in the sensor plane.
    pub fn unit(self) -> [f64; 2] {
        match self {
            ShearDirection::XPos => [1.0, 0.0],
            ShearDirection::XNeg => [-1.0, 0.0],
            ShearDirection::YPos => [0.0, 1.0],
            ShearDirection::YNeg => [0.0, -1.0],
        }
    }

    /// Splits a planar shear vector into the non-negative component seen by
    /// each side.
    pub fn decompose(shear: [f64; 2]) -> [f64; PIEZO_COUNT] {
        [
            shear[0].max(0.0),
            (-shear[0]).max(0.0),
            shear[1].max(0.0),
            (-shear[1]).max(0.0),
        ]
    }
}

impl fmt::Display for ShearDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ShearDirection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "x+" | "xp" => Ok(ShearDirection::XPos),
            "x-" | "xn" => Ok(ShearDirection::XNeg),
            "y+" | "yp" => Ok(ShearDirection::YPos),
            "y-" | "yn" => Ok(ShearDirection::YNeg),
            other => Err(format!("invalid shear direction '{other}'")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hall_indices_follow_channel_order() {
        let idx: Vec<_> = GridPosition::DIRECT.iter().map(|p| p.hall_index().unwrap()).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
        assert!(GridPosition::new(2).unwrap().hall_index().is_none());
    }

    #[test]
    fn adjacency_triples() {
        let adj = |n| GridPosition::new(n).unwrap().adjacency().unwrap().map(u8::from);
        assert_eq!(adj(2), [1, 3, 5]);
        assert_eq!(adj(4), [1, 5, 7]);
        assert_eq!(adj(6), [3, 5, 9]);
        assert_eq!(adj(8), [5, 7, 9]);
        assert!(GridPosition::new(5).unwrap().adjacency().is_none());
    }

    #[test]
    fn shear_decomposition_is_one_sided() {
        assert_eq!(ShearDirection::decompose([3.0, -2.0]), [3.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn position_serde_rejects_out_of_range() {
        assert!(serde_json::from_str::<GridPosition>("10").is_err());
        assert_eq!(serde_json::from_str::<GridPosition>("4").unwrap().label(), 4);
    }
}
