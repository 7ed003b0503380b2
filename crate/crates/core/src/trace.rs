//! Line-delimited JSON trace files.
//!
//! Line 1 is the header, then one line per round, then an optional summary.
//! Field order is fixed by the struct definitions, so identical runs
//! produce identical bytes.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::grid::{BoundingBox, Direction, Node};
use crate::model::{Configuration, ParticleState};
use crate::{Error, Result};

pub const TRACE_VERSION: u32 = 1;

pub type ParticleId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticleEntry {
    pub id: ParticleId,
    pub node: Node,
    pub state: ParticleState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub n: usize,
    pub floor: i64,
    pub particles: Vec<ParticleEntry>,
}

impl TraceHeader {
    pub fn configuration(&self) -> Result<Configuration> {
        Configuration::from_particles(self.particles.iter().map(|p| (p.node, p.state)))
    }
}

/// Where two or more activated particles compete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictSite {
    /// Expanded particles contracting into the same empty node.
    Node(Node),
    /// Contracted particles expanding on the same undirected edge; endpoints sorted.
    Edge(Node, Node),
}

impl std::fmt::Display for ConflictSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConflictSite::Node(v) => write!(f, "node {v}"),
            ConflictSite::Edge(a, b) => write!(f, "edge {a}-{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieBreak {
    pub site: ConflictSite,
    pub group: Vec<ParticleId>,
    pub chosen: ParticleId,
}

/// What happened to one activated particle in a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    /// Contracted, and the rule said nothing.
    Noop,
    /// Expanded toward an occupied node, or lost a contraction tie.
    Wait,
    Contract {
        to: Node,
    },
    Expand {
        dir: Direction,
    },
    /// Lost an expansion tie on a shared edge.
    Lost {
        dir: Direction,
    },
    /// The edge was already held by another expansion.
    Blocked {
        dir: Direction,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticleEvent {
    pub id: ParticleId,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub activated: Vec<ParticleId>,
    pub events: Vec<ParticleEvent>,
    pub tie_breaks: Vec<TieBreak>,
    /// Absolute configuration key after the round.
    pub key: String,
}

impl StepRecord {
    pub fn contractions(&self) -> impl Iterator<Item = (ParticleId, Node)> + '_ {
        self.events.iter().filter_map(|e| match e.event {
            Event::Contract { to } => Some((e.id, to)),
            _ => None,
        })
    }

    pub fn changed(&self) -> bool {
        self.events
            .iter()
            .any(|e| matches!(e.event, Event::Contract { .. } | Event::Expand { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Final,
    Deadlock,
    StepLimit,
    MoveLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub steps: u64,
    pub moves: u64,
    pub expansions: u64,
    pub union_bbox: BoundingBox,
    pub terminated: bool,
    pub reason: Termination,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(TraceHeader),
    Step(StepRecord),
    Summary(TraceSummary),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<StepRecord>,
    pub summary: Option<TraceSummary>,
}

impl Trace {
    pub fn n(&self) -> usize {
        self.header.n
    }

    pub fn terminated(&self) -> bool {
        self.summary.as_ref().is_some_and(|s| s.terminated)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &Line::Header(self.header.clone()))?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, &Line::Step(r.clone()))?;
            w.write_all(b"\n")?;
        }
        if let Some(s) = &self.summary {
            serde_json::to_writer(&mut w, &Line::Summary(s.clone()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace> {
        let mut header = None;
        let mut records = Vec::new();
        let mut summary = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line)
                .map_err(|e| Error::MalformedTrace(format!("line {}: {e}", i + 1)))?;
            match (parsed, header.is_some(), summary.is_some()) {
                (_, _, true) => {
                    return Err(Error::MalformedTrace(format!(
                        "line {}: content after summary",
                        i + 1
                    )))
                }
                (Line::Header(h), false, _) => header = Some(h),
                (Line::Step(s), true, _) => records.push(s),
                (Line::Summary(s), true, _) => summary = Some(s),
                _ => {
                    return Err(Error::MalformedTrace(format!(
                        "line {}: header must come first and only once",
                        i + 1
                    )))
                }
            }
        }
        let header = header.ok_or_else(|| Error::MalformedTrace("missing header".into()))?;
        if header.version != TRACE_VERSION {
            return Err(Error::MalformedTrace(format!(
                "unsupported version {}",
                header.version
            )));
        }
        if header.particles.len() != header.n
            || header.particles.iter().enumerate().any(|(i, p)| p.id != i)
        {
            return Err(Error::MalformedTrace(
                "particles must be listed with ids 0..n".into(),
            ));
        }
        Ok(Trace {
            header,
            records,
            summary,
        })
    }

    pub fn from_jsonl(s: &str) -> Result<Trace> {
        Self::read_jsonl(s.as_bytes())
    }
}
