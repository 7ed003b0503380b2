//! Correctness properties checked on traces.
//!
//! Checkers rebuild every configuration from the header and the recorded
//! events, verify each against the recorded key, and never touch the
//! engine. Only the progress check consults the rule itself.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;

use crate::grid::{BoundingBox, Direction, Node};
use crate::model::{self, canonical_key, Configuration, KeyMode, ParticleState};
use crate::trace::{Event, ParticleId, StepRecord, Trace};
use crate::{wrain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The trace ends before the property can be decided.
    Inconclusive,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    /// 0 is the initial configuration.
    pub step: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckOutcome {
    pub check: &'static str,
    pub status: CheckStatus,
    pub witness: Option<Witness>,
    pub metrics: BTreeMap<&'static str, i64>,
}

impl CheckOutcome {
    fn new(check: &'static str) -> Self {
        CheckOutcome {
            check,
            status: CheckStatus::Pass,
            witness: None,
            metrics: BTreeMap::new(),
        }
    }

    fn fail(&mut self, step: u64, detail: impl Into<String>) {
        self.set(CheckStatus::Fail, step, detail);
    }

    fn inconclusive(&mut self, step: u64, detail: impl Into<String>) {
        self.set(CheckStatus::Inconclusive, step, detail);
    }

    fn set(&mut self, status: CheckStatus, step: u64, detail: impl Into<String>) {
        if self.status == CheckStatus::Pass {
            self.status = status;
            self.witness = Some(Witness {
                step,
                detail: detail.into(),
            });
        }
    }

    fn metric(&mut self, name: &'static str, value: impl TryInto<i64>) {
        self.metrics
            .insert(name, value.try_into().unwrap_or(i64::MAX));
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    /// One JSON object, for machine consumption.
    pub fn summary_line(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<13} {}", self.check, self.status)?;
        for (k, v) in &self.metrics {
            write!(f, " {k}={v}")?;
        }
        if let Some(w) = &self.witness {
            write!(f, " [step {}: {}]", w.step, w.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub checks: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }

    pub fn get(&self, check: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.check == check)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

impl From<CheckOutcome> for CheckReport {
    fn from(c: CheckOutcome) -> Self {
        CheckReport { checks: vec![c] }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// A configuration reached in a trace.
pub struct Frame<'a> {
    pub step: u64,
    pub config: &'a Configuration,
    pub bodies: &'a [Node],
    /// `None` for the initial configuration.
    pub record: Option<&'a StepRecord>,
    /// `(id, from, to)` for every contraction of this round.
    pub moves: &'a [(ParticleId, Node, Node)],
}

impl Frame<'_> {
    /// The round changed the configuration (or this is the initial one).
    pub fn is_new(&self) -> bool {
        self.record.is_none_or(StepRecord::changed)
    }
}

fn malformed(step: u64, msg: impl fmt::Display) -> Error {
    Error::MalformedTrace(format!("step {step}: {msg}"))
}

/// Rebuilds each configuration of `trace` from recorded events and calls
/// `visit` on it, initial configuration first.
pub fn walk<F>(trace: &Trace, mut visit: F) -> Result<()>
where
    F: FnMut(&Frame<'_>),
{
    let mut config = trace.header.configuration()?;
    model::validate(&config).map_err(Error::InvalidConfiguration)?;
    let mut bodies: Vec<Node> = trace.header.particles.iter().map(|p| p.node).collect();
    visit(&Frame {
        step: 0,
        config: &config,
        bodies: &bodies,
        record: None,
        moves: &[],
    });
    let mut moves = Vec::new();
    for (i, record) in trace.records.iter().enumerate() {
        let step = i as u64 + 1;
        if record.step != step {
            return Err(malformed(step, format!("recorded as step {}", record.step)));
        }
        moves.clear();
        // Contractions vacate nodes that expansions in the same round never target,
        // so events can be applied one at a time.
        let mut filled = Vec::new();
        for e in &record.events {
            let from = *bodies
                .get(e.id)
                .ok_or_else(|| malformed(step, format!("unknown id {}", e.id)))?;
            let state = config
                .get(from)
                .ok_or_else(|| malformed(step, "body not occupied"))?;
            match e.event {
                Event::Contract { to } => {
                    let toward = matches!(
                        (state, from.direction_to(to)),
                        (ParticleState::Expanded(d), Some(e)) if d == e
                    );
                    if !toward {
                        return Err(malformed(
                            step,
                            format!("particle {} cannot contract into {to}", e.id),
                        ));
                    }
                    config.remove(from);
                    filled.push((e.id, to));
                    moves.push((e.id, from, to));
                }
                Event::Expand { dir } => {
                    if !state.is_contracted() {
                        return Err(malformed(step, format!("particle {} expands twice", e.id)));
                    }
                    config.insert(from, ParticleState::Expanded(dir));
                }
                Event::Noop | Event::Lost { .. } | Event::Blocked { .. } => {
                    if !state.is_contracted() {
                        return Err(malformed(
                            step,
                            format!("expanded particle {} reported {:?}", e.id, e.event),
                        ));
                    }
                }
                Event::Wait => {
                    if state.is_contracted() {
                        return Err(malformed(
                            step,
                            format!("contracted particle {} waits", e.id),
                        ));
                    }
                }
            }
        }
        for (id, to) in filled {
            if config.insert(to, ParticleState::Contracted).is_some() {
                return Err(malformed(step, format!("node {to} filled twice")));
            }
            bodies[id] = to;
        }
        let key = canonical_key(&config, KeyMode::Absolute).to_string();
        if key != record.key {
            return Err(malformed(
                step,
                format!("events give `{key}`, record says `{}`", record.key),
            ));
        }
        visit(&Frame {
            step,
            config: &config,
            bodies: &bodies,
            record: Some(record),
            moves: &moves,
        });
    }
    Ok(())
}

/// No configuration repeats, on the same nodes or translated.
pub fn check_uniqueness(trace: &Trace) -> Result<CheckReport> {
    let mut out = CheckOutcome::new("uniqueness");
    let mut absolute = HashSet::new();
    let mut translated = HashSet::new();
    let mut distinct = 0u64;
    walk(trace, |f| {
        if !f.is_new() {
            return;
        }
        if f.step > 0 {
            distinct += 1;
        }
        if !absolute.insert(canonical_key(f.config, KeyMode::Absolute)) {
            out.fail(f.step, "configuration repeats on the same nodes");
        } else if !translated.insert(canonical_key(f.config, KeyMode::Translated)) {
            out.fail(f.step, "configuration repeats translated");
        }
    })?;
    out.metric("distinct_configs", distinct);
    Ok(out.into())
}

/// The union of all bounding boxes grows east by at most `n` and nowhere
/// else; the west side and the floor stay put and the north side only
/// moves south.
pub fn check_bbox(trace: &Trace) -> Result<CheckReport> {
    let mut out = CheckOutcome::new("bbox");
    let mut initial: Option<BoundingBox> = None;
    let mut prev: Option<BoundingBox> = None;
    let mut union: Option<BoundingBox> = None;
    walk(trace, |f| {
        let b = f.config.bounding_box().expect("nonempty");
        if let Some(p) = prev {
            if b.q_min < p.q_min {
                out.fail(
                    f.step,
                    format!("west side moved west: {} -> {}", p.q_min, b.q_min),
                );
            }
            if b.r_max > p.r_max {
                out.fail(
                    f.step,
                    format!("north side moved north: {} -> {}", p.r_max, b.r_max),
                );
            }
            if b.r_min != p.r_min {
                out.fail(f.step, format!("floor moved: {} -> {}", p.r_min, b.r_min));
            }
        }
        initial.get_or_insert(b);
        prev = Some(b);
        union = Some(union.map_or(b, |u| u.union(b)));
    })?;
    let (initial, union) = (
        initial.expect("initial frame"),
        union.expect("initial frame"),
    );
    let n = trace.n() as i64;
    let last = trace.records.len() as u64;
    let growth = union.we_side() - initial.we_side();
    if growth > n {
        out.fail(last, format!("W-E side grew by {growth} > n = {n}"));
    }
    if union.swne_side() > initial.swne_side() {
        out.fail(last, "SW-NE side grew");
    }
    out.metric("initial_we_side", initial.we_side());
    out.metric("initial_swne_side", initial.swne_side());
    out.metric("union_we_side", union.we_side());
    out.metric("union_swne_side", union.swne_side());
    out.metric("east_growth", growth);
    Ok(out.into())
}

fn enabled_exists(c: &Configuration) -> bool {
    c.nodes().any(|v| wrain::enabled(c, v).unwrap_or(false))
}

/// Every reached non-final configuration has a particle that can act.
pub fn check_progress(trace: &Trace) -> Result<CheckReport> {
    let mut out = CheckOutcome::new("progress");
    let floor = trace.header.floor;
    let mut checked = 0u64;
    walk(trace, |f| {
        if f.step == 0 && !model::is_initial(f.config) {
            out.inconclusive(
                0,
                "trace does not start from a connected contracted configuration",
            );
        }
        if !f.is_new() || model::is_final(f.config, floor) {
            return;
        }
        checked += 1;
        if !enabled_exists(f.config) {
            out.fail(
                f.step,
                format!("stuck: {}", canonical_key(f.config, KeyMode::Absolute)),
            );
        }
    })?;
    out.metric("configs_checked", checked);
    Ok(out.into())
}

fn contiguous_row(c: &Configuration) -> bool {
    let qs: BTreeSet<i64> = c.nodes().map(|v| v.q).collect();
    match (qs.first(), qs.last()) {
        (Some(&lo), Some(&hi)) => (hi - lo + 1) as usize == qs.len(),
        _ => false,
    }
}

/// The run ends connected on the floor, and every initially adjacent pair
/// that falls into different components shares a component again later.
pub fn check_connectivity(trace: &Trace) -> Result<CheckReport> {
    let mut out = CheckOutcome::new("connectivity");
    let floor = trace.header.floor;
    let initial: Vec<Node> = trace.header.particles.iter().map(|p| p.node).collect();
    let index: BTreeMap<Node, ParticleId> =
        initial.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let pairs: Vec<(ParticleId, ParticleId)> = initial
        .iter()
        .enumerate()
        .flat_map(|(i, v)| {
            v.neighbors()
                .filter_map(|u| index.get(&u).copied())
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
        .collect();
    let mut split_since: BTreeMap<(ParticleId, ParticleId), u64> = BTreeMap::new();
    let mut disconnections = 0u64;
    let mut longest = 0u64;
    let mut last: Option<(u64, Configuration)> = None;
    walk(trace, |f| {
        if f.step == trace.records.len() as u64 {
            last = Some((f.step, f.config.clone()));
        }
        if f.moves.is_empty() {
            return;
        }
        let comp = model::components(f.config);
        for &(a, b) in &pairs {
            let apart = comp[&f.bodies[a]] != comp[&f.bodies[b]];
            match (apart, split_since.get(&(a, b)).copied()) {
                (true, None) => {
                    split_since.insert((a, b), f.step);
                    disconnections += 1;
                }
                (false, Some(since)) => {
                    split_since.remove(&(a, b));
                    longest = longest.max(f.step - since);
                }
                _ => {}
            }
        }
    })?;
    let (end, terminal) = last.expect("trace has a last frame");
    let terminated = trace.terminated();
    let report = |out: &mut CheckOutcome, detail: String| {
        if terminated {
            out.fail(end, detail);
        } else {
            out.inconclusive(end, format!("{detail} (trace truncated)"));
        }
    };
    if let Some((&(a, b), &since)) = split_since.iter().next() {
        report(
            &mut out,
            format!("particles {a} and {b} split at step {since} and never reconnect"),
        );
    }
    if !model::is_final(&terminal, floor) || !contiguous_row(&terminal) {
        report(
            &mut out,
            "terminal configuration is not a contiguous contracted line on the floor".into(),
        );
    }
    out.metric("adjacent_pairs", pairs.len());
    out.metric("disconnections", disconnections);
    out.metric("longest_split", longest);
    Ok(out.into())
}

/// Moves within `2n(n-1)`, and no particle moves east or south-east more
/// than `n - 1` times.
pub fn check_moves(trace: &Trace) -> Result<CheckReport> {
    let mut out = CheckOutcome::new("moves");
    let n = trace.n() as u64;
    let per_dir_bound = n.saturating_sub(1);
    let bound = 2 * n * per_dir_bound;
    let mut east = vec![0u64; trace.n()];
    let mut south_east = vec![0u64; trace.n()];
    let mut total = 0u64;
    walk(trace, |f| {
        for &(id, from, to) in f.moves {
            total += 1;
            match from.direction_to(to) {
                Some(Direction::E) => east[id] += 1,
                Some(Direction::SE) => south_east[id] += 1,
                _ => {}
            }
            if east[id] > per_dir_bound {
                out.fail(
                    f.step,
                    format!("particle {id} moved east {} times", east[id]),
                );
            }
            if south_east[id] > per_dir_bound {
                out.fail(
                    f.step,
                    format!("particle {id} moved south-east {} times", south_east[id]),
                );
            }
            if total > bound {
                out.fail(f.step, format!("{total} moves exceed 2n(n-1) = {bound}"));
            }
        }
    })?;
    out.metric("moves", total);
    out.metric("bound", bound);
    out.metric("max_east", east.iter().copied().max().unwrap_or(0));
    out.metric(
        "max_south_east",
        south_east.iter().copied().max().unwrap_or(0),
    );
    Ok(out.into())
}

fn check_termination(trace: &Trace) -> CheckReport {
    let mut out = CheckOutcome::new("termination");
    match &trace.summary {
        Some(s) if s.terminated => {}
        Some(s) => out.fail(s.steps, format!("not terminated: {:?}", s.reason)),
        None => out.fail(trace.records.len() as u64, "not terminated: no summary"),
    }
    out.metric("steps", trace.records.len());
    out.into()
}

/// Every check above plus termination.
pub fn check_all(trace: &Trace) -> Result<CheckReport> {
    let mut report = CheckReport::default();
    for check in [
        check_uniqueness,
        check_bbox,
        check_progress,
        check_connectivity,
        check_moves,
    ] {
        report.checks.extend(check(trace)?.checks);
    }
    report.checks.extend(check_termination(trace).checks);
    Ok(report)
}
