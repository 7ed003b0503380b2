//! Step sessions: an externally driven run with undo and export.
//!
//! A session holds the history of run states and the records applied
//! between them, so `history.len() == records.len() + 1` at all times.
//! Messages are JSON objects tagged by `type` and carry a `version`.

use serde::{Deserialize, Serialize};
use wrain_core::checkers::{check_all, CheckReport};
use wrain_core::engine::Conflict;
use wrain_core::grid::{BoundingBox, Node};
use wrain_core::scheduler::ScriptedAdversary;
use wrain_core::trace::ConflictSite;
use wrain_core::wrain::{decide_at, Action};
use wrain_core::{
    instance, model, AdversaryPolicy, Error as CoreError, ParticleId, ParticleState, RunState,
    SchedulerKind, StepRecord, Termination, Trace,
};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("unsupported protocol version {0}, expected {PROTOCOL_VERSION}")]
    Version(u32),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("no session; send `new` first")]
    NoSession,
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("the external scheduler cannot run unattended")]
    ExternalAuto,
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieBreakAnswer {
    pub site: ConflictSite,
    pub chosen: ParticleId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    /// Starts over from an instance file's text.
    New {
        instance: String,
    },
    State,
    Enabled,
    Step {
        ids: Vec<ParticleId>,
        #[serde(default)]
        tie_breaks: Vec<TieBreakAnswer>,
    },
    /// Runs up to `rounds` rounds with a built-in scheduler, stopping early
    /// once final.
    Auto {
        scheduler: String,
        #[serde(default)]
        adversary: Option<String>,
        rounds: u64,
    },
    Undo,
    Export,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestEnvelope {
    pub version: u32,
    #[serde(flatten)]
    pub request: Request,
}

impl RequestEnvelope {
    pub fn new(request: Request) -> Self {
        RequestEnvelope {
            version: PROTOCOL_VERSION,
            request,
        }
    }

    pub fn parse(line: &str) -> Result<Request, SessionError> {
        #[derive(Deserialize)]
        struct Version {
            version: Option<u32>,
        }
        let v: Version =
            serde_json::from_str(line).map_err(|e| SessionError::Malformed(e.to_string()))?;
        match v.version {
            Some(PROTOCOL_VERSION) => {}
            Some(other) => return Err(SessionError::Version(other)),
            None => return Err(SessionError::Malformed("missing field `version`".into())),
        }
        let env: RequestEnvelope =
            serde_json::from_str(line).map_err(|e| SessionError::Malformed(e.to_string()))?;
        Ok(env.request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleView {
    pub id: ParticleId,
    pub node: Node,
    pub state: ParticleState,
    pub enabled: bool,
    pub upper: bool,
    pub lower: bool,
    pub pointed: bool,
    pub near: bool,
    /// Rule output for contracted particles: `noop`, `E` or `SE`.
    pub decision: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub steps: u64,
    pub moves: u64,
    pub expansions: u64,
    /// `2n(n-1)`.
    pub move_budget: u64,
    pub distinct_configs: i64,
    pub connected: bool,
    pub is_final: bool,
    pub union_bbox: BoundingBox,
    /// Rounds since each particle was last activated.
    pub fairness_gaps: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckView {
    pub check: String,
    pub status: String,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub n: usize,
    pub floor: i64,
    pub key: String,
    pub particles: Vec<ParticleView>,
    pub metrics: Metrics,
    pub checks: Vec<CheckView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictView {
    pub site: ConflictSite,
    pub group: Vec<ParticleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    State(StateView),
    Enabled {
        ids: Vec<ParticleId>,
    },
    /// Records actually applied, in order.
    Step {
        records: Vec<StepRecord>,
        state: StateView,
    },
    /// Engine trace in JSONL form.
    Export {
        trace: String,
    },
    Error {
        message: String,
        /// Set when a step needs a tie-break answer for this group.
        #[serde(skip_serializing_if = "Option::is_none", default)]
        conflict: Option<ConflictView>,
    },
}

impl Response {
    pub fn error(e: &SessionError) -> Response {
        let conflict = match e {
            SessionError::Core(CoreError::MissingTieBreak(Conflict { site, group })) => {
                Some(ConflictView {
                    site: *site,
                    group: group.clone(),
                })
            }
            _ => None,
        };
        Response::Error {
            message: e.to_string(),
            conflict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseEnvelope {
    pub version: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub session: Option<u64>,
    #[serde(flatten)]
    pub response: Response,
}

impl ResponseEnvelope {
    pub fn new(session: Option<u64>, response: Response) -> Self {
        ResponseEnvelope {
            version: PROTOCOL_VERSION,
            session,
            response,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    history: Vec<RunState>,
    records: Vec<StepRecord>,
}

impl Session {
    /// Any valid configuration is accepted, initial or not.
    pub fn new(instance_text: &str) -> Result<Session, SessionError> {
        let c = instance::parse(instance_text)?;
        Ok(Session {
            history: vec![RunState::new(c)?],
            records: Vec::new(),
        })
    }

    pub fn current(&self) -> &RunState {
        self.history.last().expect("history is never empty")
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn handle(&mut self, request: Request) -> Response {
        self.try_handle(request)
            .unwrap_or_else(|e| Response::error(&e))
    }

    fn try_handle(&mut self, request: Request) -> Result<Response, SessionError> {
        Ok(match request {
            Request::New { instance } => {
                *self = Session::new(&instance)?;
                Response::State(self.view()?)
            }
            Request::State => Response::State(self.view()?),
            Request::Enabled => Response::Enabled {
                ids: self.current().enabled_set(),
            },
            Request::Step { ids, tie_breaks } => {
                let record = self.step(&ids, &tie_breaks)?;
                Response::Step {
                    records: vec![record],
                    state: self.view()?,
                }
            }
            Request::Auto {
                scheduler,
                adversary,
                rounds,
            } => {
                let records = self.auto(&scheduler, adversary.as_deref(), rounds)?;
                Response::Step {
                    records,
                    state: self.view()?,
                }
            }
            Request::Undo => {
                self.undo()?;
                Response::State(self.view()?)
            }
            Request::Export => Response::Export {
                trace: self.export().to_jsonl(),
            },
        })
    }

    /// Applies one round; on error the session is unchanged.
    pub fn step(
        &mut self,
        ids: &[ParticleId],
        tie_breaks: &[TieBreakAnswer],
    ) -> Result<StepRecord, SessionError> {
        let mut adversary = ScriptedAdversary::new(tie_breaks.iter().map(|t| (t.site, t.chosen)));
        let (next, record) = self.current().step_round(ids, &mut adversary)?;
        self.push(next, record.clone());
        Ok(record)
    }

    pub fn auto(
        &mut self,
        scheduler: &str,
        adversary: Option<&str>,
        rounds: u64,
    ) -> Result<Vec<StepRecord>, SessionError> {
        let kind: SchedulerKind = scheduler.parse()?;
        if kind == SchedulerKind::External {
            return Err(SessionError::ExternalAuto);
        }
        let mut scheduler = kind.build()?;
        let policy: AdversaryPolicy = adversary.unwrap_or("first").parse()?;
        if policy == AdversaryPolicy::External {
            return Err(SessionError::ExternalAuto);
        }
        let mut adversary = policy.build();
        let mut applied = Vec::new();
        for _ in 0..rounds {
            if self.current().is_final() {
                break;
            }
            let ids = scheduler.next_activation(self.current())?;
            if ids.is_empty() {
                break;
            }
            let (next, record) = self.current().step_round(&ids, adversary.as_mut())?;
            self.push(next, record.clone());
            applied.push(record);
        }
        Ok(applied)
    }

    pub fn undo(&mut self) -> Result<(), SessionError> {
        if self.records.pop().is_none() {
            return Err(SessionError::NothingToUndo);
        }
        self.history.pop();
        Ok(())
    }

    /// Trace of everything applied so far; the summary is present once final.
    pub fn export(&self) -> Trace {
        let state = self.current();
        Trace {
            header: self.history[0].header(),
            records: self.records.clone(),
            summary: state.is_final().then(|| state.summary(Termination::Final)),
        }
    }

    fn push(&mut self, next: RunState, record: StepRecord) {
        self.history.push(next);
        self.records.push(record);
    }

    pub fn view(&self) -> Result<StateView, SessionError> {
        let state = self.current();
        let c = &state.config;
        let n = state.n();
        let enabled = state.enabled_set();
        let particles = state
            .bodies()
            .iter()
            .enumerate()
            .map(|(id, &v)| {
                let s = c.get(v).expect("bodies are occupied");
                let decision = decide_at(c, v).ok().map(|a| match a {
                    Action::NoOp => "noop".to_string(),
                    Action::Expand(d) => d.to_string(),
                });
                ParticleView {
                    id,
                    node: v,
                    state: s,
                    enabled: enabled.binary_search(&id).is_ok(),
                    upper: model::upper(c, v),
                    lower: model::lower(c, v),
                    pointed: model::pointed(c, v),
                    near: model::near(c, v),
                    decision,
                }
            })
            .collect();
        let mut last_seen = vec![0u64; n];
        for r in &self.records {
            for &id in &r.activated {
                last_seen[id] = r.step;
            }
        }
        let report: CheckReport = check_all(&self.export())?;
        let distinct_configs = report
            .get("uniqueness")
            .and_then(|o| o.metrics.get("distinct_configs").copied())
            .unwrap_or(0);
        let summary = state.summary(Termination::Final);
        Ok(StateView {
            n,
            floor: state.floor,
            key: state.key(),
            particles,
            metrics: Metrics {
                steps: summary.steps,
                moves: summary.moves,
                expansions: summary.expansions,
                move_budget: 2 * n as u64 * (n as u64).saturating_sub(1),
                distinct_configs,
                connected: model::is_connected(c)?,
                is_final: state.is_final(),
                union_bbox: summary.union_bbox,
                fairness_gaps: last_seen.iter().map(|&s| summary.steps - s).collect(),
            },
            checks: report
                .checks
                .iter()
                .map(|o| CheckView {
                    check: o.check.to_string(),
                    status: o.status.to_string(),
                    detail: o
                        .witness
                        .as_ref()
                        .map(|w| format!("step {}: {}", w.step, w.detail)),
                })
                .collect(),
        })
    }
}
