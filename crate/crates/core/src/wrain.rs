//! The line-formation rule: particles drift east and south-east like rain
//! in a westerly wind until they settle on the floor.

use serde::{Deserialize, Serialize};

use crate::grid::{Direction, Node};
use crate::model::{occupied, Configuration, ParticleState, View};
use crate::{Error, Result};

/// Decision of a contracted particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    NoOp,
    /// Always `E` or `SE`.
    Expand(Direction),
}

/// Decides from the 2-hop view of a contracted particle.
///
/// Near guards everything; a pushed particle moves east; otherwise a
/// particle with nothing above and something below moves south-east.
pub fn decide(view: &View) -> Action {
    if view.near() {
        Action::NoOp
    } else if view.pointed() {
        Action::Expand(Direction::E)
    } else if !view.upper() && view.lower() {
        Action::Expand(Direction::SE)
    } else {
        Action::NoOp
    }
}

/// [`decide`] for the particle on `v`, which must be contracted.
pub fn decide_at(c: &Configuration, v: Node) -> Result<Action> {
    match c.get(v) {
        None => Err(Error::NotOccupied(v)),
        Some(ParticleState::Expanded(_)) => Err(Error::NotContracted(v)),
        Some(ParticleState::Contracted) => Ok(decide(&View::capture(c, v))),
    }
}

/// Whether activating the particle on `v` would change the configuration.
pub fn enabled(c: &Configuration, v: Node) -> Result<bool> {
    match c.get(v) {
        None => Err(Error::NotOccupied(v)),
        Some(ParticleState::Expanded(d)) => Ok(!occupied(c, v.neighbor(d))),
        Some(ParticleState::Contracted) => Ok(decide_at(c, v)? != Action::NoOp),
    }
}
