//! Round semantics.
//!
//! Every activated particle observes the same pre-round snapshot. Expanded
//! particles contract into their target if it is empty in the snapshot;
//! contracted particles run the rule and claim an edge. When several
//! particles claim the same node or edge the adversary picks exactly one
//! winner. A completed contraction is one move.

use std::collections::{BTreeMap, BTreeSet};

use crate::grid::{BoundingBox, Direction, Node};
use crate::model::{self, canonical_key, occupied, Configuration, KeyMode, ParticleState};
use crate::scheduler::{Scheduler, ScriptedAdversary};
use crate::trace::{
    ConflictSite, Event, ParticleEntry, ParticleEvent, ParticleId, StepRecord, Termination,
    TieBreak, Trace, TraceHeader, TraceSummary, TRACE_VERSION,
};
use crate::wrain::{self, Action};
use crate::{Error, Result};

/// A group of particles competing for one node or edge.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Conflict {
    pub site: ConflictSite,
    /// Sorted ascending.
    pub group: Vec<ParticleId>,
}

/// Resolves simultaneous claims.
pub trait Adversary {
    fn choose(&mut self, conflict: &Conflict) -> Result<ParticleId>;
}

/// Planned effect of activating one particle, before tie-breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intent {
    Noop,
    Wait,
    Contract(Node),
    Expand(Direction),
    Blocked(Direction),
}

/// Decisions of one round computed against a snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundPlan {
    pub intents: BTreeMap<Node, Intent>,
    /// Empty target node and the bodies contracting into it.
    pub node_groups: Vec<(Node, Vec<Node>)>,
    /// Undirected edge and the bodies expanding along it.
    pub edge_groups: Vec<((Node, Node), Vec<Node>)>,
}

fn edge(a: Node, b: Node) -> (Node, Node) {
    (a.min(b), a.max(b))
}

/// Computes every activated particle's intent against `snapshot`.
pub fn plan_round(snapshot: &Configuration, activated: &BTreeSet<Node>) -> Result<RoundPlan> {
    let held: BTreeSet<(Node, Node)> = snapshot
        .iter()
        .filter_map(|(v, s)| s.expansion().map(|d| edge(v, v.neighbor(d))))
        .collect();
    let mut intents = BTreeMap::new();
    let mut node_groups: BTreeMap<Node, Vec<Node>> = BTreeMap::new();
    let mut edge_groups: BTreeMap<(Node, Node), Vec<Node>> = BTreeMap::new();
    for &v in activated {
        let intent = match snapshot.get(v).ok_or(Error::NotOccupied(v))? {
            ParticleState::Expanded(d) => {
                let u = v.neighbor(d);
                if occupied(snapshot, u) {
                    Intent::Wait
                } else {
                    node_groups.entry(u).or_default().push(v);
                    Intent::Contract(u)
                }
            }
            ParticleState::Contracted => match wrain::decide_at(snapshot, v)? {
                Action::NoOp => Intent::Noop,
                Action::Expand(d) => {
                    let e = edge(v, v.neighbor(d));
                    if held.contains(&e) {
                        Intent::Blocked(d)
                    } else {
                        edge_groups.entry(e).or_default().push(v);
                        Intent::Expand(d)
                    }
                }
            },
        };
        intents.insert(v, intent);
    }
    Ok(RoundPlan {
        intents,
        node_groups: node_groups.into_iter().collect(),
        edge_groups: edge_groups.into_iter().collect(),
    })
}

/// Outcome of applying a plan with chosen winners.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub config: Configuration,
    /// Keyed by pre-round body node.
    pub events: BTreeMap<Node, Event>,
}

/// Applies `plan` to `snapshot`. Winners are given per group, in group order.
pub fn apply_plan(
    snapshot: &Configuration,
    plan: &RoundPlan,
    node_winners: &[Node],
    edge_winners: &[Node],
) -> RoundOutcome {
    assert_eq!(node_winners.len(), plan.node_groups.len());
    assert_eq!(edge_winners.len(), plan.edge_groups.len());
    let mut config = snapshot.clone();
    let mut events: BTreeMap<Node, Event> = plan
        .intents
        .iter()
        .map(|(&v, i)| {
            let e = match *i {
                Intent::Noop => Event::Noop,
                Intent::Wait | Intent::Contract(_) => Event::Wait,
                Intent::Expand(dir) => Event::Lost { dir },
                Intent::Blocked(dir) => Event::Blocked { dir },
            };
            (v, e)
        })
        .collect();
    for ((target, group), &winner) in plan.node_groups.iter().zip(node_winners) {
        debug_assert!(group.contains(&winner));
        config.remove(winner);
        config.insert(*target, ParticleState::Contracted);
        events.insert(winner, Event::Contract { to: *target });
    }
    for ((_, group), &winner) in plan.edge_groups.iter().zip(edge_winners) {
        debug_assert!(group.contains(&winner));
        let Intent::Expand(dir) = plan.intents[&winner] else {
            unreachable!("edge groups hold expansion intents only")
        };
        config.insert(winner, ParticleState::Expanded(dir));
        events.insert(winner, Event::Expand { dir });
    }
    RoundOutcome { config, events }
}

/// Per-particle completed moves by direction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MoveTally {
    pub east: u64,
    pub south_east: u64,
    pub other: u64,
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub config: Configuration,
    bodies: Vec<Node>,
    ids: BTreeMap<Node, ParticleId>,
    /// Fixed from the initial configuration.
    pub floor: i64,
    pub step_count: u64,
    pub expansion_count: u64,
    pub move_count: u64,
    pub initial_bbox: BoundingBox,
    pub union_bbox: BoundingBox,
    pub tallies: Vec<MoveTally>,
}

impl RunState {
    /// Ids are assigned in ascending node order.
    pub fn new(c0: Configuration) -> Result<RunState> {
        model::validate(&c0).map_err(Error::InvalidConfiguration)?;
        let floor = c0.bounding_box()?.r_min;
        let particles = c0.iter().collect();
        Self::with_ids(particles, floor)
    }

    pub fn from_header(header: &TraceHeader) -> Result<RunState> {
        let particles = header.particles.iter().map(|p| (p.node, p.state)).collect();
        Self::with_ids(particles, header.floor)
    }

    fn with_ids(particles: Vec<(Node, ParticleState)>, floor: i64) -> Result<RunState> {
        let config = Configuration::from_particles(particles.iter().copied())?;
        model::validate(&config).map_err(Error::InvalidConfiguration)?;
        let bodies: Vec<Node> = particles.iter().map(|p| p.0).collect();
        let ids = bodies.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let bbox = config.bounding_box()?;
        Ok(RunState {
            tallies: vec![MoveTally::default(); bodies.len()],
            config,
            bodies,
            ids,
            floor,
            step_count: 0,
            expansion_count: 0,
            move_count: 0,
            initial_bbox: bbox,
            union_bbox: bbox,
        })
    }

    pub fn n(&self) -> usize {
        self.bodies.len()
    }

    pub fn body(&self, id: ParticleId) -> Result<Node> {
        self.bodies
            .get(id)
            .copied()
            .ok_or(Error::UnknownParticle(id))
    }

    pub fn id_at(&self, v: Node) -> Option<ParticleId> {
        self.ids.get(&v).copied()
    }

    pub fn bodies(&self) -> &[Node] {
        &self.bodies
    }

    pub fn is_final(&self) -> bool {
        model::is_final(&self.config, self.floor)
    }

    pub fn key(&self) -> String {
        canonical_key(&self.config, KeyMode::Absolute).to_string()
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            version: TRACE_VERSION,
            n: self.n(),
            floor: self.floor,
            particles: self
                .bodies
                .iter()
                .enumerate()
                .map(|(id, &node)| ParticleEntry {
                    id,
                    node,
                    state: self.config.get(node).expect("body is occupied"),
                })
                .collect(),
        }
    }

    pub fn summary(&self, reason: Termination) -> TraceSummary {
        TraceSummary {
            steps: self.step_count,
            moves: self.move_count,
            expansions: self.expansion_count,
            union_bbox: self.union_bbox,
            terminated: reason == Termination::Final,
            reason,
        }
    }

    /// Ids whose activation would change the configuration.
    pub fn enabled_set(&self) -> Vec<ParticleId> {
        (0..self.n())
            .filter(|&id| wrain::enabled(&self.config, self.bodies[id]).unwrap_or(false))
            .collect()
    }

    /// Plays one round with the given activation set.
    pub fn step_round(
        &self,
        activated: &[ParticleId],
        adversary: &mut dyn Adversary,
    ) -> Result<(RunState, StepRecord)> {
        if activated.is_empty() {
            return Err(Error::EmptyActivation);
        }
        let ids: BTreeSet<ParticleId> = activated.iter().copied().collect();
        let nodes = ids
            .iter()
            .map(|&id| self.body(id))
            .collect::<Result<BTreeSet<Node>>>()?;
        let plan = plan_round(&self.config, &nodes)?;

        let mut tie_breaks = Vec::new();
        let mut pick = |site: ConflictSite, group: &[Node]| -> Result<Node> {
            if group.len() == 1 {
                return Ok(group[0]);
            }
            let mut group_ids: Vec<ParticleId> = group.iter().map(|v| self.ids[v]).collect();
            group_ids.sort_unstable();
            let conflict = Conflict {
                site,
                group: group_ids,
            };
            let chosen = adversary.choose(&conflict)?;
            if !conflict.group.contains(&chosen) {
                return Err(Error::InvalidChoice {
                    chosen,
                    group: conflict.group,
                });
            }
            tie_breaks.push(TieBreak {
                site: conflict.site,
                group: conflict.group,
                chosen,
            });
            Ok(self.bodies[chosen])
        };
        let node_winners = plan
            .node_groups
            .iter()
            .map(|(u, g)| pick(ConflictSite::Node(*u), g))
            .collect::<Result<Vec<_>>>()?;
        let edge_winners = plan
            .edge_groups
            .iter()
            .map(|((a, b), g)| pick(ConflictSite::Edge(*a, *b), g))
            .collect::<Result<Vec<_>>>()?;
        let outcome = apply_plan(&self.config, &plan, &node_winners, &edge_winners);

        let mut next = self.clone();
        next.config = outcome.config;
        next.step_count += 1;
        let mut events = Vec::with_capacity(outcome.events.len());
        for (from, event) in outcome.events {
            let id = self.ids[&from];
            match event {
                Event::Contract { to } => {
                    next.move_count += 1;
                    next.bodies[id] = to;
                    next.union_bbox.include(to);
                    let tally = &mut next.tallies[id];
                    match from.direction_to(to) {
                        Some(Direction::E) => tally.east += 1,
                        Some(Direction::SE) => tally.south_east += 1,
                        _ => tally.other += 1,
                    }
                }
                Event::Expand { .. } => next.expansion_count += 1,
                _ => {}
            }
            events.push(ParticleEvent { id, event });
        }
        events.sort_by_key(|e| e.id);
        next.ids = next
            .bodies
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i))
            .collect();
        let record = StepRecord {
            step: next.step_count,
            activated: ids.into_iter().collect(),
            events,
            tie_breaks,
            key: next.key(),
        };
        Ok((next, record))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    /// Defaults to `64 n²`.
    pub max_steps: Option<u64>,
    pub max_moves: Option<u64>,
    /// Every particle must be activated in any window of this many rounds.
    /// Defaults to `2n - 1`.
    pub fairness_window: Option<u64>,
    /// Require an initial (contracted, connected) start.
    pub strict: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_steps: None,
            max_moves: None,
            fairness_window: None,
            strict: true,
        }
    }
}

pub fn default_max_steps(n: usize) -> u64 {
    64 * (n as u64).pow(2)
}

pub fn default_fairness_window(n: usize) -> u64 {
    (2 * n as u64).saturating_sub(1).max(1)
}

/// Runs until the configuration is final or a limit is hit.
pub fn run(
    c0: Configuration,
    scheduler: &mut dyn Scheduler,
    adversary: &mut dyn Adversary,
    opts: &RunOptions,
) -> Result<Trace> {
    if opts.strict && !model::is_initial(&c0) {
        return Err(Error::NotInitial);
    }
    let mut state = RunState::new(c0)?;
    let header = state.header();
    let n = state.n();
    let max_steps = opts.max_steps.unwrap_or_else(|| default_max_steps(n));
    let max_moves = opts.max_moves.unwrap_or(u64::MAX);
    let window = opts
        .fairness_window
        .unwrap_or_else(|| default_fairness_window(n));
    let mut idle = vec![0u64; n];
    let mut records = Vec::new();

    let reason = loop {
        if state.is_final() {
            break Termination::Final;
        }
        if state.step_count >= max_steps {
            break Termination::StepLimit;
        }
        if state.move_count >= max_moves {
            break Termination::MoveLimit;
        }
        let activated = scheduler.next_activation(&state)?;
        if activated.is_empty() {
            if state.enabled_set().is_empty() {
                break Termination::Deadlock;
            }
            return Err(Error::EmptyActivation);
        }
        let (next, record) = state.step_round(&activated, adversary)?;
        for (id, gap) in idle.iter_mut().enumerate() {
            if record.activated.binary_search(&id).is_ok() {
                *gap = 0;
            } else {
                *gap += 1;
                if *gap >= window {
                    return Err(Error::Unfair {
                        id,
                        gap: *gap,
                        bound: window,
                    });
                }
            }
        }
        let stuck = !record.changed() && next.enabled_set().is_empty();
        state = next;
        records.push(record);
        if stuck {
            break Termination::Deadlock;
        }
    };
    Ok(Trace {
        header,
        records,
        summary: Some(state.summary(reason)),
    })
}

/// Re-executes a trace with its recorded activations and tie-breaks.
///
/// Returns the final state, or [`Error::Divergence`] at the first step whose
/// result differs from the record.
pub fn replay(trace: &Trace) -> Result<RunState> {
    let mut state = RunState::from_header(&trace.header)?;
    for (i, record) in trace.records.iter().enumerate() {
        let step = i as u64 + 1;
        let diverge = |expected: String, actual: String| Error::Divergence {
            step,
            expected,
            actual,
        };
        if record.step != step {
            return Err(diverge(
                format!("step {step}"),
                format!("step {}", record.step),
            ));
        }
        let mut adversary = ScriptedAdversary::from_tie_breaks(&record.tie_breaks);
        let (next, actual) = state
            .step_round(&record.activated, &mut adversary)
            .map_err(|e| diverge(record.key.clone(), e.to_string()))?;
        if actual.key != record.key {
            return Err(diverge(record.key.clone(), actual.key));
        }
        if actual.tie_breaks != record.tie_breaks {
            return Err(diverge(
                format!("tie-breaks {:?}", record.tie_breaks),
                format!("tie-breaks {:?}", actual.tie_breaks),
            ));
        }
        if actual.events != record.events {
            return Err(diverge(
                format!("events {:?}", record.events),
                format!("events {:?}", actual.events),
            ));
        }
        state = next;
    }
    if let Some(summary) = &trace.summary {
        let actual = state.summary(summary.reason);
        let consistent =
            actual == *summary && (summary.reason == Termination::Final) == state.is_final();
        if !consistent {
            return Err(Error::Divergence {
                step: trace.records.len() as u64,
                expected: format!("{summary:?}"),
                actual: format!("{actual:?}"),
            });
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Direction::*;
    use crate::scheduler::{FirstById, FullySync, SchedulerKind};

    fn n(q: i64, r: i64) -> Node {
        Node::new(q, r)
    }

    fn triangle() -> Configuration {
        Configuration::contracted([n(0, 0), n(1, 0), n(0, 1)]).unwrap()
    }

    fn all(state: &RunState) -> Vec<ParticleId> {
        (0..state.n()).collect()
    }

    #[test]
    fn triangle_fully_synchronous_by_hand() {
        let s0 = RunState::new(triangle()).unwrap();
        // ids in node order: (0,0)=0, (0,1)=1, (1,0)=2
        assert_eq!(s0.bodies(), &[n(0, 0), n(0, 1), n(1, 0)]);
        let mut adv = FirstById;

        let (s1, r1) = s0.step_round(&all(&s0), &mut adv).unwrap();
        assert_eq!(s1.config.get(n(0, 1)), Some(ParticleState::Expanded(SE)));
        assert_eq!(r1.key, "0,0,C 0,1,SE 1,0,C");
        assert_eq!(r1.events[0].event, Event::Noop);
        assert_eq!(r1.events[2].event, Event::Noop);

        let (s2, r2) = s1.step_round(&all(&s1), &mut adv).unwrap();
        assert_eq!(r2.key, "0,0,C 0,1,SE 1,0,E");
        assert_eq!(r2.events[1].event, Event::Wait);

        let (s3, r3) = s2.step_round(&all(&s2), &mut adv).unwrap();
        assert_eq!(r3.key, "0,0,C 0,1,SE 2,0,C");
        assert!(!model::is_connected(&s3.config).unwrap());

        let (s4, r4) = s3.step_round(&all(&s3), &mut adv).unwrap();
        assert_eq!(r4.key, "0,0,C 1,0,C 2,0,C");
        assert!(s4.is_final());
        assert_eq!(s4.move_count, 2);
        assert_eq!(s4.expansion_count, 2);
        assert_eq!(s4.step_count, 4);
        assert_eq!(
            s4.tallies[1],
            MoveTally {
                east: 0,
                south_east: 1,
                other: 0
            }
        );
        assert_eq!(
            s4.tallies[2],
            MoveTally {
                east: 1,
                south_east: 0,
                other: 0
            }
        );
        assert_eq!(
            s4.union_bbox,
            BoundingBox {
                q_min: 0,
                q_max: 2,
                r_min: 0,
                r_max: 1
            }
        );
    }

    #[test]
    fn run_examples() {
        let single = Configuration::contracted([n(3, 3)]).unwrap();
        let t = run(
            single,
            &mut FullySync,
            &mut FirstById,
            &RunOptions::default(),
        )
        .unwrap();
        assert!(t.records.is_empty() && t.terminated());
        assert_eq!(t.summary.as_ref().unwrap().moves, 0);

        let pair = Configuration::contracted([n(0, 0), n(0, 1)]).unwrap();
        let mut serial = SchedulerKind::SerialRandom(1).build().unwrap();
        let t = run(
            pair,
            serial.as_mut(),
            &mut FirstById,
            &RunOptions::default(),
        )
        .unwrap();
        assert!(t.terminated());
        assert_eq!(t.summary.as_ref().unwrap().moves, 1);
        assert_eq!(t.records.last().unwrap().key, "0,0,C 1,0,C");

        let t = run(
            triangle(),
            &mut FullySync,
            &mut FirstById,
            &RunOptions::default(),
        )
        .unwrap();
        let s = t.summary.unwrap();
        assert_eq!((s.steps, s.moves, s.terminated), (4, 2, true));
    }

    #[test]
    fn enabled_sets() {
        let line = RunState::new(Configuration::contracted([n(0, 0), n(1, 0)]).unwrap()).unwrap();
        assert!(line.enabled_set().is_empty());
        let pair = RunState::new(Configuration::contracted([n(0, 0), n(0, 1)]).unwrap()).unwrap();
        assert_eq!(pair.enabled_set(), vec![1]);
        let (after, _) = pair.step_round(&[1], &mut FirstById).unwrap();
        assert_eq!(after.config.get(n(0, 1)), Some(ParticleState::Expanded(SE)));
        assert_eq!(after.enabled_set(), vec![1]);
    }

    #[test]
    fn node_conflict_goes_to_the_adversary() {
        // (0,0)->E and (1,1)->SW both target the empty node (1,0)
        let c = Configuration::from_particles([
            (n(0, 0), ParticleState::Expanded(E)),
            (n(1, 1), ParticleState::Expanded(SW)),
        ])
        .unwrap();
        let s = RunState::new(c).unwrap();
        let (next, rec) = s.step_round(&[0, 1], &mut FirstById).unwrap();
        assert_eq!(rec.tie_breaks.len(), 1);
        assert_eq!(rec.tie_breaks[0].site, ConflictSite::Node(n(1, 0)));
        assert_eq!(rec.tie_breaks[0].group, vec![0, 1]);
        assert_eq!(rec.tie_breaks[0].chosen, 0);
        assert_eq!(next.config.get(n(1, 0)), Some(ParticleState::Contracted));
        assert_eq!(next.config.get(n(1, 1)), Some(ParticleState::Expanded(SW)));
        assert_eq!(rec.events[1].event, Event::Wait);
        assert_eq!(next.move_count, 1);
        assert_eq!(next.tallies[0].east, 1);
        assert_eq!(next.tallies[1], MoveTally::default());

        struct Bad;
        impl Adversary for Bad {
            fn choose(&mut self, _: &Conflict) -> Result<ParticleId> {
                Ok(7)
            }
        }
        assert!(matches!(
            s.step_round(&[0, 1], &mut Bad),
            Err(Error::InvalidChoice { chosen: 7, .. })
        ));
        assert!(matches!(
            s.step_round(&[9], &mut FirstById),
            Err(Error::UnknownParticle(9))
        ));
        assert!(matches!(
            s.step_round(&[], &mut FirstById),
            Err(Error::EmptyActivation)
        ));
    }

    #[test]
    fn expanded_into_occupied_waits() {
        let c = Configuration::from_particles([
            (n(0, 1), ParticleState::Expanded(SE)),
            (n(1, 0), ParticleState::Expanded(E)),
            (n(2, 0), ParticleState::Contracted),
        ])
        .unwrap();
        let s = RunState::new(c).unwrap();
        let (next, rec) = s.step_round(&[0], &mut FirstById).unwrap();
        assert_eq!(rec.events[0].event, Event::Wait);
        assert_eq!(next.config, s.config);
    }

    #[test]
    fn strict_run_rejects_non_initial() {
        let c = Configuration::contracted([n(0, 0), n(5, 0)]).unwrap();
        let err = run(
            c.clone(),
            &mut FullySync,
            &mut FirstById,
            &RunOptions::default(),
        );
        assert!(matches!(err, Err(Error::NotInitial)));
        let lenient = RunOptions {
            strict: false,
            ..RunOptions::default()
        };
        // two far-apart particles on the floor never move
        let t = run(c, &mut FullySync, &mut FirstById, &lenient).unwrap();
        assert_eq!(t.summary.unwrap().reason, Termination::Deadlock);
    }

    #[test]
    fn replay_detects_tampering() {
        let c = Configuration::from_particles([
            (n(0, 0), ParticleState::Expanded(E)),
            (n(1, 1), ParticleState::Expanded(SW)),
        ])
        .unwrap();
        let s = RunState::new(c).unwrap();
        let (next, rec) = s.step_round(&[0, 1], &mut FirstById).unwrap();
        let trace = Trace {
            header: s.header(),
            records: vec![rec],
            summary: Some(next.summary(Termination::StepLimit)),
        };
        replay(&trace).unwrap();

        let mut tampered = trace.clone();
        tampered.records[0].tie_breaks[0].chosen = 1;
        match replay(&tampered) {
            Err(Error::Divergence { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected divergence, got {other:?}"),
        }

        let final_line =
            RunState::new(Configuration::contracted([n(0, 0), n(1, 0)]).unwrap()).unwrap();
        let empty = Trace {
            header: final_line.header(),
            records: vec![],
            summary: Some(final_line.summary(Termination::Final)),
        };
        replay(&empty).unwrap();
    }

    #[test]
    fn fairness_breach_is_reported() {
        struct OnlyFirst;
        impl Scheduler for OnlyFirst {
            fn next_activation(&mut self, _: &RunState) -> Result<Vec<ParticleId>> {
                Ok(vec![0])
            }
        }
        let c = Configuration::contracted([n(0, 0), n(0, 1), n(0, 2)]).unwrap();
        let err = run(c, &mut OnlyFirst, &mut FirstById, &RunOptions::default());
        assert!(
            matches!(err, Err(Error::Unfair { bound: 5, .. })),
            "{err:?}"
        );
    }
}
