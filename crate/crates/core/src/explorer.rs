//! Exhaustive exploration of every adversary behavior on small instances.
//!
//! States are configurations in absolute coordinates. A transition is one
//! round: an activation set plus one winner per conflict group. The search
//! verifies that every sink is final, that no path revisits a configuration
//! (on the same nodes or translated), and that no path exceeds the move
//! bound. Violations come back as replayable traces.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::engine::{apply_plan, plan_round, RunState};
use crate::grid::Node;
use crate::model::{self, canonical_key, ConfigKey, Configuration, KeyMode};
use crate::scheduler::ScriptedAdversary;
use crate::trace::{ConflictSite, Termination, Trace};
use crate::{wrain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExploreMode {
    /// One particle per round.
    Serial,
    /// Every nonempty activation subset.
    AllSubsets,
}

impl ExploreMode {
    pub fn default_max_n(self) -> usize {
        match self {
            ExploreMode::Serial => 5,
            ExploreMode::AllSubsets => 3,
        }
    }
}

impl std::str::FromStr for ExploreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "serial" => Ok(ExploreMode::Serial),
            "all_subsets" | "all-subsets" => Ok(ExploreMode::AllSubsets),
            _ => Err(Error::Parse(format!("unknown explore mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExploreOptions {
    pub mode: ExploreMode,
    pub max_states: usize,
    /// Defaults to [`ExploreMode::default_max_n`].
    pub max_n: Option<usize>,
}

impl ExploreOptions {
    pub fn new(mode: ExploreMode) -> Self {
        ExploreOptions {
            mode,
            max_states: 10_000_000,
            max_n: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Counterexample {
    pub reason: String,
    pub trace: Trace,
}

#[derive(Debug, Clone)]
pub struct ExploreResult {
    pub states_visited: usize,
    pub transitions: usize,
    pub terminal_states: BTreeSet<ConfigKey>,
    pub max_moves_over_paths: u64,
    pub max_path_length: u64,
    pub counterexample: Option<Counterexample>,
}

impl ExploreResult {
    pub fn verified(&self) -> bool {
        self.counterexample.is_none()
    }
}

#[derive(Debug, Clone)]
struct Transition {
    activated: Vec<Node>,
    /// Conflict site and the body that wins it.
    winners: Vec<(ConflictSite, Node)>,
}

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    moves: u64,
    label: Transition,
}

struct Graph {
    states: Vec<Configuration>,
    edges: Vec<Vec<Edge>>,
    /// BFS tree: predecessor and the edge index used.
    parent: Vec<Option<(usize, usize)>>,
}

impl Graph {
    fn path_to(&self, mut s: usize) -> Vec<Transition> {
        let mut path = Vec::new();
        while let Some((p, e)) = self.parent[s] {
            path.push(self.edges[p][e].label.clone());
            s = p;
        }
        path.reverse();
        path
    }

    /// Shortest path between two states, if any.
    fn path_between(&self, from: usize, to: usize) -> Option<Vec<Transition>> {
        let mut prev: HashMap<usize, (usize, usize)> = HashMap::new();
        let mut queue = VecDeque::from([from]);
        while let Some(s) = queue.pop_front() {
            for (i, e) in self.edges[s].iter().enumerate() {
                if e.to == from || prev.contains_key(&e.to) {
                    continue;
                }
                prev.insert(e.to, (s, i));
                if e.to == to {
                    let mut path = Vec::new();
                    let mut cur = to;
                    while cur != from {
                        let (p, i) = prev[&cur];
                        path.push(self.edges[p][i].label.clone());
                        cur = p;
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(e.to);
            }
        }
        None
    }
}

/// All winner combinations of a plan, as (node winners, edge winners).
fn choice_product(groups: &[Vec<Node>]) -> Vec<Vec<Node>> {
    groups.iter().fold(vec![Vec::new()], |acc, g| {
        acc.iter()
            .flat_map(|prefix| {
                g.iter().map(move |&w| {
                    let mut next = prefix.clone();
                    next.push(w);
                    next
                })
            })
            .collect()
    })
}

fn successors(
    c: &Configuration,
    mode: ExploreMode,
) -> Result<Vec<(Configuration, u64, Transition)>> {
    let enabled: Vec<Node> = c
        .nodes()
        .filter(|&v| wrain::enabled(c, v).unwrap_or(false))
        .collect();
    let activations: Vec<BTreeSet<Node>> = match mode {
        ExploreMode::Serial => enabled.iter().map(|&v| BTreeSet::from([v])).collect(),
        ExploreMode::AllSubsets => (1u64..(1 << enabled.len()))
            .map(|mask| {
                enabled
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, &v)| v)
                    .collect()
            })
            .collect(),
    };
    let mut out = Vec::new();
    for activated in activations {
        let plan = plan_round(c, &activated)?;
        let node_groups: Vec<Vec<Node>> = plan.node_groups.iter().map(|g| g.1.clone()).collect();
        let edge_groups: Vec<Vec<Node>> = plan.edge_groups.iter().map(|g| g.1.clone()).collect();
        for node_winners in choice_product(&node_groups) {
            for edge_winners in choice_product(&edge_groups) {
                let outcome = apply_plan(c, &plan, &node_winners, &edge_winners);
                if outcome.config == *c {
                    continue;
                }
                let winners = plan
                    .node_groups
                    .iter()
                    .zip(&node_winners)
                    .map(|((u, _), &w)| (ConflictSite::Node(*u), w))
                    .chain(
                        plan.edge_groups
                            .iter()
                            .zip(&edge_winners)
                            .map(|(((a, b), _), &w)| (ConflictSite::Edge(*a, *b), w)),
                    )
                    .collect();
                out.push((
                    outcome.config,
                    plan.node_groups.len() as u64,
                    Transition {
                        activated: activated.iter().copied().collect(),
                        winners,
                    },
                ));
            }
        }
    }
    Ok(out)
}

/// Turns a transition path into an engine trace.
fn build_trace(
    c0: &Configuration,
    path: &[Transition],
    reason: Option<Termination>,
) -> Result<Trace> {
    let mut state = RunState::new(c0.clone())?;
    let header = state.header();
    let mut records = Vec::with_capacity(path.len());
    for t in path {
        let id = |v: &Node| state.id_at(*v).ok_or(Error::NotOccupied(*v));
        let activated = t.activated.iter().map(id).collect::<Result<Vec<_>>>()?;
        let answers = t
            .winners
            .iter()
            .map(|(site, w)| Ok((*site, id(w)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut adversary = ScriptedAdversary::new(answers);
        let (next, record) = state.step_round(&activated, &mut adversary)?;
        state = next;
        records.push(record);
    }
    Ok(Trace {
        header,
        records,
        summary: reason.map(|r| state.summary(r)),
    })
}

/// Explores every schedule from the initial configuration `c0`.
pub fn explore(c0: &Configuration, opts: &ExploreOptions) -> Result<ExploreResult> {
    if !model::is_initial(c0) {
        return Err(Error::NotInitial);
    }
    let max_n = opts.max_n.unwrap_or(opts.mode.default_max_n());
    if c0.len() > max_n {
        return Err(Error::TooLarge {
            n: c0.len(),
            max: max_n,
        });
    }
    let floor = c0.bounding_box()?.r_min;
    let n = c0.len() as u64;
    let move_bound = 2 * n * n.saturating_sub(1);

    let mut graph = Graph {
        states: vec![c0.clone()],
        edges: vec![Vec::new()],
        parent: vec![None],
    };
    let mut index: HashMap<ConfigKey, usize> =
        HashMap::from([(canonical_key(c0, KeyMode::Absolute), 0)]);
    let mut terminal_states = BTreeSet::new();
    let mut transitions = 0usize;
    let mut counterexample = None;

    let mut queue = VecDeque::from([0usize]);
    while let Some(s) = queue.pop_front() {
        let succ = successors(&graph.states[s], opts.mode)?;
        if succ.is_empty() {
            let c = &graph.states[s];
            terminal_states.insert(canonical_key(c, KeyMode::Absolute));
            if !model::is_final(c, floor) && counterexample.is_none() {
                counterexample = Some(Counterexample {
                    reason: format!(
                        "non-final configuration with no enabled particle: {}",
                        canonical_key(c, KeyMode::Absolute)
                    ),
                    trace: build_trace(c0, &graph.path_to(s), Some(Termination::Deadlock))?,
                });
            }
            continue;
        }
        for (config, moves, label) in succ {
            transitions += 1;
            let key = canonical_key(&config, KeyMode::Absolute);
            let to = match index.get(&key) {
                Some(&t) => t,
                None => {
                    if graph.states.len() >= opts.max_states {
                        return Err(Error::StateBudget(opts.max_states));
                    }
                    let t = graph.states.len();
                    index.insert(key, t);
                    graph.states.push(config);
                    graph.edges.push(Vec::new());
                    graph.parent.push(Some((s, graph.edges[s].len())));
                    queue.push_back(t);
                    t
                }
            };
            graph.edges[s].push(Edge { to, moves, label });
        }
    }

    let mut result = ExploreResult {
        states_visited: graph.states.len(),
        transitions,
        terminal_states,
        max_moves_over_paths: 0,
        max_path_length: 0,
        counterexample,
    };
    if result.counterexample.is_some() {
        return Ok(result);
    }

    // Cycles are absolute repeats along a path.
    let order = match topological_order(&graph) {
        Ok(order) => order,
        Err(cycle) => {
            result.counterexample = Some(Counterexample {
                reason: "a path revisits a configuration on the same nodes".into(),
                trace: build_trace(c0, &cycle, None)?,
            });
            return Ok(result);
        }
    };

    // Translated repeats: a state reaching a translate of itself.
    let mut shapes: BTreeMap<ConfigKey, Vec<usize>> = BTreeMap::new();
    for (i, c) in graph.states.iter().enumerate() {
        shapes
            .entry(canonical_key(c, KeyMode::Translated))
            .or_default()
            .push(i);
    }
    for members in shapes.values().filter(|m| m.len() > 1) {
        for &a in members {
            for &b in members {
                if a == b {
                    continue;
                }
                if let Some(tail) = graph.path_between(a, b) {
                    let mut path = graph.path_to(a);
                    path.extend(tail);
                    result.counterexample = Some(Counterexample {
                        reason: "a path revisits a configuration translated".into(),
                        trace: build_trace(c0, &path, None)?,
                    });
                    return Ok(result);
                }
            }
        }
    }

    // Longest paths over the DAG, by moves and by rounds.
    let mut best_moves = vec![0u64; graph.states.len()];
    let mut best_len = vec![0u64; graph.states.len()];
    let mut best_pred: Vec<Option<(usize, usize)>> = vec![None; graph.states.len()];
    for &s in &order {
        for (i, e) in graph.edges[s].iter().enumerate() {
            if best_pred[e.to].is_none() || best_moves[s] + e.moves > best_moves[e.to] {
                best_moves[e.to] = best_moves[s] + e.moves;
                best_pred[e.to] = Some((s, i));
            }
            best_len[e.to] = best_len[e.to].max(best_len[s] + 1);
        }
    }
    result.max_moves_over_paths = best_moves.iter().copied().max().unwrap_or(0);
    result.max_path_length = best_len.iter().copied().max().unwrap_or(0);
    if result.max_moves_over_paths > move_bound {
        let worst = (0..best_moves.len())
            .max_by_key(|&i| best_moves[i])
            .expect("nonempty");
        let mut path = Vec::new();
        let mut cur = worst;
        while let Some((p, i)) = best_pred[cur] {
            path.push(graph.edges[p][i].label.clone());
            cur = p;
        }
        path.reverse();
        result.counterexample = Some(Counterexample {
            reason: format!(
                "a path makes {} moves, above 2n(n-1) = {move_bound}",
                result.max_moves_over_paths
            ),
            trace: build_trace(c0, &path, None)?,
        });
    }
    Ok(result)
}

/// Reverse postorder of a DFS from the root, or a path ending in a repeat.
fn topological_order(graph: &Graph) -> std::result::Result<Vec<usize>, Vec<Transition>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut mark = vec![Mark::New; graph.states.len()];
    let mut post = Vec::with_capacity(graph.states.len());
    // (state, next edge index)
    let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
    mark[0] = Mark::Active;
    while let Some(&mut (s, ref mut next)) = stack.last_mut() {
        if let Some(e) = graph.edges[s].get(*next) {
            *next += 1;
            match mark[e.to] {
                Mark::New => {
                    mark[e.to] = Mark::Active;
                    stack.push((e.to, 0));
                }
                Mark::Active => {
                    // each stack entry has advanced past the edge it took
                    return Err(stack
                        .iter()
                        .map(|&(st, nx)| graph.edges[st][nx - 1].label.clone())
                        .collect());
                }
                Mark::Done => {}
            }
        } else {
            mark[s] = Mark::Done;
            post.push(s);
            stack.pop();
        }
    }
    post.reverse();
    Ok(post)
}

/// Largest instance size [`enumerate_initial`] accepts.
pub const MAX_ENUMERATION: usize = 6;

/// Every connected set of `n` nodes up to translation, as contracted
/// configurations normalized to `q_min = r_min = 0`, in key order.
pub fn enumerate_initial(n: usize) -> Result<Vec<Configuration>> {
    if n > MAX_ENUMERATION {
        return Err(Error::TooLarge {
            n,
            max: MAX_ENUMERATION,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut level: BTreeSet<BTreeSet<Node>> = BTreeSet::from([BTreeSet::from([Node::ORIGIN])]);
    for _ in 1..n {
        let mut next = BTreeSet::new();
        for shape in &level {
            for v in shape {
                for u in v.neighbors() {
                    if shape.contains(&u) {
                        continue;
                    }
                    let mut grown = shape.clone();
                    grown.insert(u);
                    next.insert(normalize(&grown));
                }
            }
        }
        level = next;
    }
    level.into_iter().map(Configuration::contracted).collect()
}

fn normalize(nodes: &BTreeSet<Node>) -> BTreeSet<Node> {
    let q = nodes.iter().map(|v| v.q).min().unwrap_or(0);
    let r = nodes.iter().map(|v| v.r).min().unwrap_or(0);
    nodes.iter().map(|v| Node::new(v.q - q, v.r - r)).collect()
}
