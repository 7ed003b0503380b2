//! Activation schedules and tie-break policies: the adversary.
//!
//! All randomness comes from [`SplitMix64`] so that a seed fixes a trace
//! on every platform.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::engine::{Adversary, Conflict, RunState};
use crate::trace::{ConflictSite, ParticleId, TieBreak};
use crate::{Error, Result};

/// SplitMix64 (Steele, Lea, Flood 2014): 64-bit state, golden-ratio
/// increment, two xor-shift-multiply rounds.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `0..bound` by 128-bit multiply-high; `bound` must be nonzero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Fisher–Yates, from the last index down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Produces the activation set of each round.
pub trait Scheduler {
    fn next_activation(&mut self, state: &RunState) -> Result<Vec<ParticleId>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchedulerKind {
    FullySync,
    SerialRandom(u64),
    SubsetRandom(u64, f64),
    External,
}

impl SchedulerKind {
    pub fn build(&self) -> Result<Box<dyn Scheduler>> {
        Ok(match *self {
            SchedulerKind::FullySync => Box::new(FullySync),
            SchedulerKind::SerialRandom(seed) => Box::new(SerialRandom::new(seed)),
            SchedulerKind::SubsetRandom(seed, p) => Box::new(SubsetRandom::new(seed, p)?),
            SchedulerKind::External => {
                return Err(Error::Parse(
                    "the external scheduler is driven through a session".into(),
                ))
            }
        })
    }

    /// Replaces the seed, keeping the kind.
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            SchedulerKind::SerialRandom(_) => SchedulerKind::SerialRandom(seed),
            SchedulerKind::SubsetRandom(_, p) => SchedulerKind::SubsetRandom(seed, p),
            other => other,
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulerKind::FullySync => f.write_str("sync"),
            SchedulerKind::SerialRandom(s) => write!(f, "serial:{s}"),
            SchedulerKind::SubsetRandom(s, p) => write!(f, "subset:{s}:{p}"),
            SchedulerKind::External => f.write_str("external"),
        }
    }
}

fn parse_seed(s: &str) -> Result<u64> {
    s.parse()
        .map_err(|_| Error::Parse(format!("bad seed `{s}`")))
}

/// Accepts `sync`, `serial:SEED`, `subset:SEED:P`, `external`. A missing
/// seed defaults to 0.
impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts[..] {
            ["sync"] => Ok(SchedulerKind::FullySync),
            ["external"] => Ok(SchedulerKind::External),
            ["serial"] => Ok(SchedulerKind::SerialRandom(0)),
            ["serial", seed] => Ok(SchedulerKind::SerialRandom(parse_seed(seed)?)),
            ["subset", seed, p] => {
                let p: f64 = p
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad probability `{p}`")))?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::Parse(format!("probability {p} not in (0, 1]")));
                }
                Ok(SchedulerKind::SubsetRandom(parse_seed(seed)?, p))
            }
            _ => Err(Error::Parse(format!("unknown scheduler `{s}`"))),
        }
    }
}

/// Every particle, every round.
#[derive(Debug, Clone, Copy, Default)]
pub struct FullySync;

impl Scheduler for FullySync {
    fn next_activation(&mut self, state: &RunState) -> Result<Vec<ParticleId>> {
        Ok((0..state.n()).collect())
    }
}

/// One particle per round, in shuffled epochs: each epoch is a fresh random
/// permutation of all ids.
#[derive(Debug, Clone)]
pub struct SerialRandom {
    rng: SplitMix64,
    epoch: Vec<ParticleId>,
    pos: usize,
}

impl SerialRandom {
    pub fn new(seed: u64) -> Self {
        SerialRandom {
            rng: SplitMix64::new(seed),
            epoch: Vec::new(),
            pos: 0,
        }
    }
}

impl Scheduler for SerialRandom {
    fn next_activation(&mut self, state: &RunState) -> Result<Vec<ParticleId>> {
        if self.pos >= self.epoch.len() {
            self.epoch = (0..state.n()).collect();
            self.rng.shuffle(&mut self.epoch);
            self.pos = 0;
        }
        let id = self.epoch[self.pos];
        self.pos += 1;
        Ok(vec![id])
    }
}

/// Each particle independently with probability `p`; resampled when empty.
///
/// A particle left out for `n - 1` consecutive rounds is forced in, so
/// every window of `n` rounds activates everyone.
#[derive(Debug, Clone)]
pub struct SubsetRandom {
    rng: SplitMix64,
    p: f64,
    idle: Vec<u64>,
}

impl SubsetRandom {
    pub fn new(seed: u64, p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Parse(format!("probability {p} not in (0, 1]")));
        }
        Ok(SubsetRandom {
            rng: SplitMix64::new(seed),
            p,
            idle: Vec::new(),
        })
    }
}

impl Scheduler for SubsetRandom {
    fn next_activation(&mut self, state: &RunState) -> Result<Vec<ParticleId>> {
        let n = state.n();
        if self.idle.len() != n {
            self.idle = vec![0; n];
        }
        let limit = n as u64 - 1;
        let set = loop {
            let set: Vec<ParticleId> = (0..n)
                .filter(|&id| {
                    let sampled = self.rng.next_f64() < self.p;
                    sampled || self.idle[id] >= limit
                })
                .collect();
            if !set.is_empty() {
                break set;
            }
        };
        for (id, idle) in self.idle.iter_mut().enumerate() {
            *idle = if set.binary_search(&id).is_ok() {
                0
            } else {
                *idle + 1
            };
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryPolicy {
    FirstById,
    RandomChoice(u64),
    External,
}

impl AdversaryPolicy {
    pub fn build(&self) -> Box<dyn Adversary> {
        match *self {
            AdversaryPolicy::FirstById => Box::new(FirstById),
            AdversaryPolicy::RandomChoice(seed) => Box::new(RandomChoice::new(seed)),
            AdversaryPolicy::External => Box::new(ScriptedAdversary::default()),
        }
    }
}

impl fmt::Display for AdversaryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryPolicy::FirstById => f.write_str("first"),
            AdversaryPolicy::RandomChoice(s) => write!(f, "random:{s}"),
            AdversaryPolicy::External => f.write_str("external"),
        }
    }
}

/// Accepts `first`, `random:SEED`, `external`.
impl FromStr for AdversaryPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts[..] {
            ["first"] => Ok(AdversaryPolicy::FirstById),
            ["external"] => Ok(AdversaryPolicy::External),
            ["random"] => Ok(AdversaryPolicy::RandomChoice(0)),
            ["random", seed] => Ok(AdversaryPolicy::RandomChoice(parse_seed(seed)?)),
            _ => Err(Error::Parse(format!("unknown adversary `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FirstById;

impl Adversary for FirstById {
    fn choose(&mut self, conflict: &Conflict) -> Result<ParticleId> {
        conflict
            .group
            .iter()
            .copied()
            .min()
            .ok_or(Error::EmptyActivation)
    }
}

#[derive(Debug, Clone)]
pub struct RandomChoice {
    rng: SplitMix64,
}

impl RandomChoice {
    pub fn new(seed: u64) -> Self {
        RandomChoice {
            rng: SplitMix64::new(seed),
        }
    }
}

impl Adversary for RandomChoice {
    fn choose(&mut self, conflict: &Conflict) -> Result<ParticleId> {
        if conflict.group.is_empty() {
            return Err(Error::EmptyActivation);
        }
        let i = self.rng.below(conflict.group.len() as u64) as usize;
        Ok(conflict.group[i])
    }
}

/// Answers tie-breaks from a fixed table keyed by conflict site; used for
/// replay and for externally driven sessions.
#[derive(Debug, Clone, Default)]
pub struct ScriptedAdversary {
    answers: BTreeMap<ConflictSite, ParticleId>,
    groups: BTreeMap<ConflictSite, Vec<ParticleId>>,
}

impl ScriptedAdversary {
    pub fn new<I: IntoIterator<Item = (ConflictSite, ParticleId)>>(answers: I) -> Self {
        ScriptedAdversary {
            answers: answers.into_iter().collect(),
            groups: BTreeMap::new(),
        }
    }

    /// Also requires each presented group to equal the recorded one.
    pub fn from_tie_breaks(tie_breaks: &[TieBreak]) -> Self {
        ScriptedAdversary {
            answers: tie_breaks.iter().map(|t| (t.site, t.chosen)).collect(),
            groups: tie_breaks
                .iter()
                .map(|t| (t.site, t.group.clone()))
                .collect(),
        }
    }
}

impl Adversary for ScriptedAdversary {
    fn choose(&mut self, conflict: &Conflict) -> Result<ParticleId> {
        if let Some(group) = self.groups.get(&conflict.site) {
            if *group != conflict.group {
                return Err(Error::InvalidChoice {
                    chosen: self.answers[&conflict.site],
                    group: conflict.group.clone(),
                });
            }
        }
        self.answers
            .get(&conflict.site)
            .copied()
            .ok_or_else(|| Error::MissingTieBreak(conflict.clone()))
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::grid::Node;
    use crate::model::Configuration;

    fn state(n: usize) -> RunState {
        RunState::new(Configuration::contracted((0..n as i64).map(|q| Node::new(q, 0))).unwrap())
            .unwrap()
    }

    #[test]
    fn splitmix_reference_values() {
        // First outputs for seed 1234567 from the published reference implementation.
        let mut rng = SplitMix64::new(1234567);
        assert_eq!(rng.next_u64(), 6457827717110365317);
        assert_eq!(rng.next_u64(), 3203168211198807973);
        assert_eq!(rng.next_u64(), 9817491932198370423);
    }

    #[test]
    fn parse_specs() {
        assert_eq!(
            "sync".parse::<SchedulerKind>().unwrap(),
            SchedulerKind::FullySync
        );
        assert_eq!(
            "serial:7".parse::<SchedulerKind>().unwrap(),
            SchedulerKind::SerialRandom(7)
        );
        assert_eq!(
            "subset:3:0.5".parse::<SchedulerKind>().unwrap(),
            SchedulerKind::SubsetRandom(3, 0.5)
        );
        assert_eq!(
            "external".parse::<SchedulerKind>().unwrap(),
            SchedulerKind::External
        );
        for bad in ["", "serial:x", "subset:1:0", "subset:1:1.5", "async"] {
            assert!(bad.parse::<SchedulerKind>().is_err(), "{bad}");
        }
        for s in ["sync", "serial:9", "subset:2:0.25", "external"] {
            assert_eq!(s.parse::<SchedulerKind>().unwrap().to_string(), s);
        }
        assert_eq!(
            "random:5".parse::<AdversaryPolicy>().unwrap(),
            AdversaryPolicy::RandomChoice(5)
        );
        assert!("sometimes".parse::<AdversaryPolicy>().is_err());
    }

    #[test]
    fn fully_sync_activates_all() {
        let s = state(3);
        assert_eq!(FullySync.next_activation(&s).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn serial_epochs_are_permutations() {
        let s = state(5);
        let mut sched = SerialRandom::new(11);
        for _ in 0..4 {
            let epoch: BTreeSet<ParticleId> = (0..5)
                .map(|_| {
                    let a = sched.next_activation(&s).unwrap();
                    assert_eq!(a.len(), 1);
                    a[0]
                })
                .collect();
            assert_eq!(epoch.len(), 5);
        }
    }

    #[test]
    fn subset_with_probability_one_is_sync() {
        let s = state(4);
        let mut sched = SubsetRandom::new(1, 1.0).unwrap();
        for _ in 0..10 {
            assert_eq!(sched.next_activation(&s).unwrap(), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn subset_is_fair_within_n_rounds() {
        let s = state(6);
        let mut sched = SubsetRandom::new(99, 0.05).unwrap();
        let mut idle = [0u64; 6];
        for _ in 0..500 {
            let set = sched.next_activation(&s).unwrap();
            assert!(!set.is_empty());
            for (id, gap) in idle.iter_mut().enumerate() {
                *gap = if set.contains(&id) { 0 } else { *gap + 1 };
                assert!(*gap < 6);
            }
        }
    }

    #[test]
    fn tie_break_policies() {
        let c = Conflict {
            site: ConflictSite::Node(Node::new(1, 0)),
            group: vec![2, 5],
        };
        assert_eq!(FirstById.choose(&c).unwrap(), 2);
        let picks: Vec<_> = (0..20)
            .map(|_| RandomChoice::new(4).choose(&c).unwrap())
            .collect();
        assert!(picks.windows(2).all(|w| w[0] == w[1]));
        let mut r = RandomChoice::new(4);
        assert!((0..50).all(|_| c.group.contains(&r.choose(&c).unwrap())));

        let mut scripted = ScriptedAdversary::new([(c.site, 5)]);
        assert_eq!(scripted.choose(&c).unwrap(), 5);
        let mut empty = ScriptedAdversary::default();
        assert!(matches!(empty.choose(&c), Err(Error::MissingTieBreak(_))));
    }
}
