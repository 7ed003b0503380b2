//! Triangular-lattice geometry in axial coordinates.
//!
//! `q` runs along the W–E axis and `r` along the SW–NE axis, so the
//! parallelogram bounding box with W–E and SW–NE sides is an ordinary
//! min/max box in `(q, r)` and the floor is the smallest `r`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

/// A node of the infinite triangular grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(i64, i64)", into = "(i64, i64)")]
pub struct Node {
    pub q: i64,
    pub r: i64,
}

impl Node {
    pub const ORIGIN: Node = Node { q: 0, r: 0 };

    pub const fn new(q: i64, r: i64) -> Self {
        Node { q, r }
    }

    pub fn neighbor(self, d: Direction) -> Node {
        self.offset_by(d.offset())
    }

    pub fn offset_by(self, (dq, dr): (i64, i64)) -> Node {
        Node::new(self.q + dq, self.r + dr)
    }

    /// All six 1-hop neighbors in [`Direction::ALL`] order.
    pub fn neighbors(self) -> impl Iterator<Item = Node> {
        Direction::ALL.into_iter().map(move |d| self.neighbor(d))
    }

    /// The direction of the unit step from `self` to `other`, if adjacent.
    pub fn direction_to(self, other: Node) -> Option<Direction> {
        Direction::from_offset((other.q - self.q, other.r - self.r))
    }
}

impl From<(i64, i64)> for Node {
    fn from((q, r): (i64, i64)) -> Self {
        Node::new(q, r)
    }
}

impl From<Node> for (i64, i64) {
    fn from(n: Node) -> Self {
        (n.q, n.r)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.q, self.r)
    }
}

/// The six lattice directions, as seen by particles sharing a common orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    E,
    NE,
    NW,
    W,
    SW,
    SE,
}

impl Direction {
    /// Counter-clockwise from east.
    pub const ALL: [Direction; 6] = [
        Direction::E,
        Direction::NE,
        Direction::NW,
        Direction::W,
        Direction::SW,
        Direction::SE,
    ];

    pub const fn offset(self) -> (i64, i64) {
        match self {
            Direction::E => (1, 0),
            Direction::W => (-1, 0),
            Direction::NE => (0, 1),
            Direction::SW => (0, -1),
            Direction::NW => (-1, 1),
            Direction::SE => (1, -1),
        }
    }

    pub const fn opposite(self) -> Direction {
        match self {
            Direction::E => Direction::W,
            Direction::W => Direction::E,
            Direction::NE => Direction::SW,
            Direction::SW => Direction::NE,
            Direction::NW => Direction::SE,
            Direction::SE => Direction::NW,
        }
    }

    pub fn from_offset(offset: (i64, i64)) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| d.offset() == offset)
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            Direction::E => "E",
            Direction::W => "W",
            Direction::NE => "NE",
            Direction::SW => "SW",
            Direction::NW => "NW",
            Direction::SE => "SE",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Direction::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown direction `{s}`")))
    }
}

pub fn offset(d: Direction) -> (i64, i64) {
    d.offset()
}

pub fn neighbor(v: Node, d: Direction) -> Node {
    v.neighbor(d)
}

/// Hop distance on the lattice.
pub fn distance(u: Node, v: Node) -> u64 {
    let dq = v.q - u.q;
    let dr = v.r - u.r;
    (dq.unsigned_abs() + dr.unsigned_abs() + (dq + dr).unsigned_abs()) / 2
}

/// Relative offsets of the 18 enumerated positions of the 2-hop neighborhood.
///
/// Row-major from the top row (`r = +2`) down to `r = -2`, west to east
/// inside a row, skipping the center. Entry `k - 1` holds position `k`.
pub const TWO_HOP_OFFSETS: [(i64, i64); 18] = [
    (-2, 2),
    (-1, 2),
    (0, 2),
    (-2, 1),
    (-1, 1),
    (0, 1),
    (1, 1),
    (-2, 0),
    (-1, 0),
    (1, 0),
    (2, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (2, -1),
    (0, -2),
    (1, -2),
    (2, -2),
];

/// Positions of the upper (north-west) trapezoid.
pub const UPPER_POSITIONS: [usize; 5] = [1, 2, 4, 5, 6];
/// Positions of the lower (south-east) trapezoid.
pub const LOWER_POSITIONS: [usize; 5] = [13, 14, 15, 17, 18];

/// Relative offset of enumerated position `k` (1-based).
pub fn two_hop_offset(k: usize) -> Result<(i64, i64), Error> {
    if (1..=18).contains(&k) {
        Ok(TWO_HOP_OFFSETS[k - 1])
    } else {
        Err(Error::PositionOutOfRange(k))
    }
}

pub fn two_hop_position(v: Node, k: usize) -> Result<Node, Error> {
    two_hop_offset(k).map(|o| v.offset_by(o))
}

/// Smallest parallelogram with W–E and SW–NE sides enclosing a node set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub q_min: i64,
    pub q_max: i64,
    pub r_min: i64,
    pub r_max: i64,
}

impl BoundingBox {
    pub fn of_node(v: Node) -> Self {
        BoundingBox {
            q_min: v.q,
            q_max: v.q,
            r_min: v.r,
            r_max: v.r,
        }
    }

    pub fn include(&mut self, v: Node) {
        self.q_min = self.q_min.min(v.q);
        self.q_max = self.q_max.max(v.q);
        self.r_min = self.r_min.min(v.r);
        self.r_max = self.r_max.max(v.r);
    }

    pub fn union(mut self, other: BoundingBox) -> BoundingBox {
        self.q_min = self.q_min.min(other.q_min);
        self.q_max = self.q_max.max(other.q_max);
        self.r_min = self.r_min.min(other.r_min);
        self.r_max = self.r_max.max(other.r_max);
        self
    }

    pub fn contains(&self, v: Node) -> bool {
        (self.q_min..=self.q_max).contains(&v.q) && (self.r_min..=self.r_max).contains(&v.r)
    }

    /// Side length along W–E, in edges.
    pub fn we_side(&self) -> i64 {
        self.q_max - self.q_min
    }

    /// Side length along SW–NE, in edges.
    pub fn swne_side(&self) -> i64 {
        self.r_max - self.r_min
    }
}

pub fn bounding_box<I>(nodes: I) -> Result<BoundingBox, Error>
where
    I: IntoIterator<Item = Node>,
{
    let mut it = nodes.into_iter();
    let first = it.next().ok_or(Error::EmptyNodeSet)?;
    let mut bbox = BoundingBox::of_node(first);
    for v in it {
        bbox.include(v);
    }
    Ok(bbox)
}

/// The `r` of the line through the southern side of the bounding box.
pub fn floor_row<I>(nodes: I) -> Result<i64, Error>
where
    I: IntoIterator<Item = Node>,
{
    bounding_box(nodes).map(|b| b.r_min)
}
