//! Configurations, occupancy, and the four view predicates.
//!
//! A particle's body node is the node it occupies; an expanded particle
//! additionally holds the edge toward its target. Only body nodes count as
//! occupied. A target with no body on it is semi-occupied.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::grid::{self, BoundingBox, Direction, Node, LOWER_POSITIONS, UPPER_POSITIONS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ParticleState {
    Contracted,
    Expanded(Direction),
}

impl ParticleState {
    pub fn is_contracted(self) -> bool {
        self == ParticleState::Contracted
    }

    pub fn expansion(self) -> Option<Direction> {
        match self {
            ParticleState::Contracted => None,
            ParticleState::Expanded(d) => Some(d),
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            ParticleState::Contracted => "C",
            ParticleState::Expanded(d) => d.as_str(),
        }
    }
}

impl fmt::Display for ParticleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ParticleState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "C" {
            Ok(ParticleState::Contracted)
        } else {
            s.parse().map(ParticleState::Expanded)
        }
    }
}

impl TryFrom<String> for ParticleState {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ParticleState> for String {
    fn from(s: ParticleState) -> Self {
        s.code().to_owned()
    }
}

/// The global system state: body node to particle state.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Configuration {
    particles: BTreeMap<Node, ParticleState>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a configuration, rejecting two particles on one node.
    pub fn from_particles<I>(particles: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Node, ParticleState)>,
    {
        let mut map = BTreeMap::new();
        for (v, s) in particles {
            if map.insert(v, s).is_some() {
                return Err(Error::DuplicateNode(v));
            }
        }
        Ok(Configuration { particles: map })
    }

    pub fn contracted<I>(nodes: I) -> Result<Self>
    where
        I: IntoIterator<Item = Node>,
    {
        Self::from_particles(nodes.into_iter().map(|v| (v, ParticleState::Contracted)))
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn get(&self, v: Node) -> Option<ParticleState> {
        self.particles.get(&v).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Node, ParticleState)> + '_ {
        self.particles.iter().map(|(&v, &s)| (v, s))
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        self.particles.keys().copied()
    }

    pub fn insert(&mut self, v: Node, s: ParticleState) -> Option<ParticleState> {
        self.particles.insert(v, s)
    }

    pub fn remove(&mut self, v: Node) -> Option<ParticleState> {
        self.particles.remove(&v)
    }

    pub fn bounding_box(&self) -> Result<BoundingBox> {
        grid::bounding_box(self.nodes()).map_err(|_| Error::EmptyConfiguration)
    }

    pub fn translate(&self, dq: i64, dr: i64) -> Configuration {
        Configuration {
            particles: self
                .iter()
                .map(|(v, s)| (v.offset_by((dq, dr)), s))
                .collect(),
        }
    }

    pub fn all_contracted(&self) -> bool {
        self.particles.values().all(|s| s.is_contracted())
    }
}

impl FromIterator<(Node, ParticleState)> for Configuration {
    /// Later entries overwrite earlier ones on the same node.
    fn from_iter<T: IntoIterator<Item = (Node, ParticleState)>>(iter: T) -> Self {
        Configuration {
            particles: iter.into_iter().collect(),
        }
    }
}

pub fn occupied(c: &Configuration, v: Node) -> bool {
    c.get(v).is_some()
}

pub fn semi_occupied(c: &Configuration, u: Node) -> bool {
    !occupied(c, u) && pointed(c, u)
}

pub fn upper(c: &Configuration, v: Node) -> bool {
    UPPER_POSITIONS
        .iter()
        .any(|&k| occupied(c, grid::two_hop_position(v, k).expect("static position")))
}

pub fn lower(c: &Configuration, v: Node) -> bool {
    LOWER_POSITIONS
        .iter()
        .any(|&k| occupied(c, grid::two_hop_position(v, k).expect("static position")))
}

/// Some neighbor of `v` is expanded along the edge toward `v`.
pub fn pointed(c: &Configuration, v: Node) -> bool {
    v.neighbors().any(|u| match c.get(u) {
        Some(ParticleState::Expanded(d)) => u.neighbor(d) == v,
        _ => false,
    })
}

/// Some empty neighbor of `v` is pointed, i.e. semi-occupied.
pub fn near(c: &Configuration, v: Node) -> bool {
    v.neighbors().any(|u| !occupied(c, u) && pointed(c, u))
}

/// Body-node connected components, labelled by the smallest node of each.
pub fn components(c: &Configuration) -> BTreeMap<Node, Node> {
    let mut label = BTreeMap::new();
    for start in c.nodes() {
        if label.contains_key(&start) {
            continue;
        }
        label.insert(start, start);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for u in v.neighbors() {
                if occupied(c, u) && !label.contains_key(&u) {
                    label.insert(u, start);
                    queue.push_back(u);
                }
            }
        }
    }
    label
}

pub fn is_connected(c: &Configuration) -> Result<bool> {
    let first = c.nodes().next().ok_or(Error::EmptyConfiguration)?;
    let mut seen = BTreeSet::from([first]);
    let mut queue = VecDeque::from([first]);
    while let Some(v) = queue.pop_front() {
        for u in v.neighbors() {
            if occupied(c, u) && seen.insert(u) {
                queue.push_back(u);
            }
        }
    }
    Ok(seen.len() == c.len())
}

pub fn is_initial(c: &Configuration) -> bool {
    !c.is_empty() && c.all_contracted() && is_connected(c).unwrap_or(false)
}

/// Initial, and every particle lies on the row `floor`.
pub fn is_final(c: &Configuration, floor: i64) -> bool {
    is_initial(c) && c.nodes().all(|v| v.r == floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyMode {
    Absolute,
    /// Translated so that `(q_min, r_min)` sits at the origin.
    Translated,
}

/// Order-independent configuration key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfigKey(Vec<(Node, ParticleState)>);

impl ConfigKey {
    pub fn to_configuration(&self) -> Configuration {
        self.0.iter().copied().collect()
    }

    pub fn entries(&self) -> &[(Node, ParticleState)] {
        &self.0
    }
}

/// Encodes as space-separated `q,r,STATE` entries in node order.
impl fmt::Display for ConfigKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (v, s)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{},{},{}", v.q, v.r, s)?;
        }
        Ok(())
    }
}

impl FromStr for ConfigKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for tok in s.split_whitespace() {
            let parts: Vec<&str> = tok.split(',').collect();
            let [q, r, st] = parts[..] else {
                return Err(Error::Parse(format!("bad key entry `{tok}`")));
            };
            let q = q
                .parse()
                .map_err(|_| Error::Parse(format!("bad q in `{tok}`")))?;
            let r = r
                .parse()
                .map_err(|_| Error::Parse(format!("bad r in `{tok}`")))?;
            entries.push((Node::new(q, r), st.parse()?));
        }
        let key = ConfigKey(entries);
        if !key.0.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(Error::Parse("key entries not strictly sorted".into()));
        }
        Ok(key)
    }
}

pub fn canonical_key(c: &Configuration, mode: KeyMode) -> ConfigKey {
    match (mode, c.bounding_box()) {
        (KeyMode::Translated, Ok(b)) => ConfigKey(
            c.iter()
                .map(|(v, s)| (Node::new(v.q - b.q_min, v.r - b.r_min), s))
                .collect(),
        ),
        _ => ConfigKey(c.iter().collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    SharedEdge { a: Node, b: Node },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => f.write_str("no particles"),
            Violation::SharedEdge { a, b } => {
                write!(f, "particles at {a} and {b} expanded on the same edge")
            }
        }
    }
}

/// Checks the configuration invariants that the map does not enforce.
pub fn validate(c: &Configuration) -> std::result::Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if c.is_empty() {
        violations.push(Violation::Empty);
    }
    let mut edges: BTreeMap<(Node, Node), Node> = BTreeMap::new();
    for (v, s) in c.iter() {
        if let Some(d) = s.expansion() {
            let u = v.neighbor(d);
            let edge = (v.min(u), v.max(u));
            if let Some(&other) = edges.get(&edge) {
                violations.push(Violation::SharedEdge { a: other, b: v });
            } else {
                edges.insert(edge, v);
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Node offsets visible from a center: the center plus the 18 positions.
const VIEW_OFFSETS: [(i64, i64); 19] = {
    let mut out = [(0, 0); 19];
    let mut i = 0;
    while i < 18 {
        out[i + 1] = grid::TWO_HOP_OFFSETS[i];
        i += 1;
    }
    out
};

/// What a particle at `center` can sense: nodes within two hops.
///
/// Index 0 is the center; index `k` is enumerated position `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct View {
    pub center: Node,
    cells: [Option<ParticleState>; 19],
}

impl View {
    pub fn capture(c: &Configuration, center: Node) -> View {
        let mut cells = [None; 19];
        for (cell, &o) in cells.iter_mut().zip(VIEW_OFFSETS.iter()) {
            *cell = c.get(center.offset_by(o));
        }
        View { center, cells }
    }

    /// State at a relative offset, or `None` when the offset is out of sight.
    pub fn at(&self, offset: (i64, i64)) -> Option<Option<ParticleState>> {
        VIEW_OFFSETS
            .iter()
            .position(|&o| o == offset)
            .map(|i| self.cells[i])
    }

    pub fn position(&self, k: usize) -> Option<ParticleState> {
        self.cells[k]
    }

    fn occupied_at(&self, offset: (i64, i64)) -> bool {
        matches!(self.at(offset), Some(Some(_)))
    }

    fn pointed_at(&self, (q, r): (i64, i64)) -> bool {
        Direction::ALL.into_iter().any(|d| {
            let (dq, dr) = d.offset();
            matches!(
                self.at((q + dq, r + dr)),
                Some(Some(ParticleState::Expanded(e))) if e == d.opposite()
            )
        })
    }

    pub fn upper(&self) -> bool {
        UPPER_POSITIONS.iter().any(|&k| self.cells[k].is_some())
    }

    pub fn lower(&self) -> bool {
        LOWER_POSITIONS.iter().any(|&k| self.cells[k].is_some())
    }

    pub fn pointed(&self) -> bool {
        self.pointed_at((0, 0))
    }

    pub fn near(&self) -> bool {
        Direction::ALL.into_iter().any(|d| {
            let o = d.offset();
            !self.occupied_at(o) && self.pointed_at(o)
        })
    }
}
