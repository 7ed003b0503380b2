//! Initial-configuration generators.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::grid::{Direction, Node};
use crate::model::Configuration;
use crate::scheduler::SplitMix64;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Hexagonal blob filled ring by ring around the origin.
    Hex,
    /// A stack along NE.
    VLine,
    /// A row along E, already final.
    HLine,
    /// Seeded random connected growth from the origin.
    Random,
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hex" => Ok(Shape::Hex),
            "vline" => Ok(Shape::VLine),
            "hline" => Ok(Shape::HLine),
            "random" => Ok(Shape::Random),
            _ => Err(Error::Parse(format!("unknown shape `{s}`"))),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Hex => "hex",
            Shape::VLine => "vline",
            Shape::HLine => "hline",
            Shape::Random => "random",
        })
    }
}

/// Generates `n ≥ 1` contracted particles; `seed` only affects [`Shape::Random`].
pub fn generate(shape: Shape, n: usize, seed: u64) -> Result<Configuration> {
    if n == 0 {
        return Err(Error::EmptyConfiguration);
    }
    let nodes: Vec<Node> = match shape {
        Shape::Hex => spiral().take(n).collect(),
        Shape::VLine => (0..n as i64).map(|i| Node::new(0, i)).collect(),
        Shape::HLine => (0..n as i64).map(|i| Node::new(i, 0)).collect(),
        Shape::Random => random_growth(n, seed),
    };
    Configuration::contracted(nodes)
}

/// Origin, then ring k for k = 1, 2, ...: each ring starts at `k·SW` and
/// walks counterclockwise.
pub fn spiral() -> impl Iterator<Item = Node> {
    const WALK: [Direction; 6] = [
        Direction::E,
        Direction::NE,
        Direction::NW,
        Direction::W,
        Direction::SW,
        Direction::SE,
    ];
    std::iter::once(Node::ORIGIN).chain((1i64..).flat_map(|k| {
        let start = Node::new(0, -k);
        WALK.iter()
            .flat_map(move |&d| std::iter::repeat_n(d, k as usize))
            .scan(start, |at, d| {
                let here = *at;
                *at = at.neighbor(d);
                Some(here)
            })
    }))
}

fn random_growth(n: usize, seed: u64) -> Vec<Node> {
    let mut rng = SplitMix64::new(seed);
    let mut nodes = vec![Node::ORIGIN];
    let mut seen = BTreeSet::from([Node::ORIGIN]);
    while nodes.len() < n {
        let from = nodes[rng.below(nodes.len() as u64) as usize];
        let to = from.neighbor(Direction::ALL[rng.below(6) as usize]);
        if seen.insert(to) {
            nodes.push(to);
        }
    }
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::distance;
    use crate::model::{is_final, is_initial};

    fn diameter(c: &Configuration) -> u64 {
        c.nodes()
            .flat_map(|a| c.nodes().map(move |b| distance(a, b)))
            .max()
            .unwrap_or(0)
    }

    #[test]
    fn small_shapes() {
        let hex7 = generate(Shape::Hex, 7, 0).unwrap();
        let expected: BTreeSet<Node> = std::iter::once(Node::ORIGIN)
            .chain(Node::ORIGIN.neighbors())
            .collect();
        assert_eq!(hex7.nodes().collect::<BTreeSet<_>>(), expected);
        assert_eq!(diameter(&hex7), 2);

        let v = generate(Shape::VLine, 3, 0).unwrap();
        assert_eq!(
            v.nodes().collect::<Vec<_>>(),
            vec![Node::new(0, 0), Node::new(0, 1), Node::new(0, 2)]
        );
        assert!(is_final(&generate(Shape::HLine, 5, 0).unwrap(), 0));
        assert!(matches!(
            generate(Shape::Hex, 0, 0),
            Err(Error::EmptyConfiguration)
        ));
    }

    #[test]
    fn full_rings_are_balls() {
        // 1 + 3k(k+1) nodes fill the ball of radius k
        for k in 0..5u64 {
            let n = (1 + 3 * k * (k + 1)) as usize;
            let c = generate(Shape::Hex, n, 0).unwrap();
            assert!(c.nodes().all(|v| distance(v, Node::ORIGIN) <= k));
            assert_eq!(diameter(&c), 2 * k);
        }
    }

    #[test]
    fn shapes_are_initial_and_compact() {
        for n in 1..=70 {
            let hex = generate(Shape::Hex, n, 0).unwrap();
            assert_eq!(hex.len(), n);
            assert!(is_initial(&hex));
            assert!(
                (diameter(&hex) as f64) <= 2.0 * (n as f64).sqrt() + 2.0,
                "n = {n}"
            );
            for seed in 0..5 {
                let r = generate(Shape::Random, n, seed).unwrap();
                assert_eq!(r.len(), n);
                assert!(is_initial(&r));
            }
        }
    }

    #[test]
    fn random_is_seeded() {
        let a = generate(Shape::Random, 30, 7).unwrap();
        assert_eq!(a, generate(Shape::Random, 30, 7).unwrap());
        assert_ne!(a, generate(Shape::Random, 30, 8).unwrap());
    }
}
