//! Subcommands. Each returns `Ok(true)` on success, `Ok(false)` when the
//! command ran but found a failure, and `Err` on bad input.

use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use wrain_core::checkers::{check_all, walk, CheckReport, CheckStatus};
use wrain_core::explorer::{
    enumerate_initial, explore, ExploreMode, ExploreOptions, ExploreResult,
};
use wrain_core::gen::{generate, Shape};
use wrain_core::grid::{BoundingBox, Node};
use wrain_core::wrain::{decide_at, Action};
use wrain_core::{
    instance, model, replay, run, AdversaryPolicy, Configuration, RunOptions, SchedulerKind, Trace,
};

use crate::svg;

#[derive(Debug, Parser)]
#[command(
    name = "wrain",
    version,
    about = "Run, check and explore WRain particle systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one execution and write its trace.
    Run(RunArgs),
    /// Run many seeded executions and check every trace.
    Check(CheckArgs),
    /// Explore every schedule of small instances.
    Explore(ExploreArgs),
    /// Print a generated instance.
    Gen(GenArgs),
    /// Serve step sessions over local HTTP.
    Serve(ServeArgs),
    /// Re-execute a trace, re-check it and optionally render it.
    Replay(ReplayArgs),
    /// Print predicate values and decisions.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub instance: PathBuf,
    /// `sync`, `serial[:SEED]` or `subset:SEED:P`.
    #[arg(long, default_value = "sync")]
    pub scheduler: String,
    /// Overrides the scheduler seed and a random adversary's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `first` or `random[:SEED]`.
    #[arg(long, default_value = "first")]
    pub adversary: String,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub max_moves: Option<u64>,
    #[arg(long)]
    pub fairness_window: Option<u64>,
    /// Accept starts that are not contracted and connected.
    #[arg(long)]
    pub lenient: bool,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long)]
    pub svg_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub instance: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub runs: u64,
    #[arg(long, default_value = "serial")]
    pub scheduler: String,
    /// Run `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "random")]
    pub adversary: String,
    /// Where failing traces are written; defaults to the system temp dir.
    #[arg(long)]
    pub witness_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["instance", "sweep"]))]
pub struct ExploreArgs {
    pub instance: Option<PathBuf>,
    /// Explore every connected instance with 1..=N particles.
    #[arg(long)]
    pub sweep: Option<usize>,
    /// `serial` or `all_subsets`.
    #[arg(long, default_value = "serial")]
    pub mode: String,
    #[arg(long, default_value_t = 10_000_000)]
    pub max_states: usize,
    #[arg(long)]
    pub counterexample_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// `hex`, `vline`, `hline` or `random`.
    pub shape: String,
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 7878)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub trace: PathBuf,
    #[arg(long)]
    pub svg_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub instance: PathBuf,
    /// `q,r`; repeatable. Defaults to every particle's node.
    #[arg(long = "node", value_parser = parse_node)]
    pub nodes: Vec<Node>,
}

fn parse_node(s: &str) -> Result<Node, String> {
    let (q, r) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `q,r`, got `{s}`"))?;
    let q = q.trim().parse().map_err(|_| format!("bad q in `{s}`"))?;
    let r = r.trim().parse().map_err(|_| format!("bad r in `{s}`"))?;
    Ok(Node::new(q, r))
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run(a) => cmd_run(&a, out),
        Command::Check(a) => cmd_check(&a, out),
        Command::Explore(a) => cmd_explore(&a, out),
        Command::Gen(a) => cmd_gen(&a, out),
        Command::Serve(a) => cmd_serve(&a, out),
        Command::Replay(a) => cmd_replay(&a, out),
        Command::Inspect(a) => cmd_inspect(&a, out),
    }
}

fn read_instance(path: &Path) -> anyhow::Result<Configuration> {
    instance::read(path).with_context(|| format!("reading instance {}", path.display()))
}

fn seeded(
    scheduler: &str,
    adversary: &str,
    seed: Option<u64>,
) -> anyhow::Result<(SchedulerKind, AdversaryPolicy)> {
    let mut kind: SchedulerKind = scheduler.parse()?;
    let mut policy: AdversaryPolicy = adversary.parse()?;
    if kind == SchedulerKind::External || policy == AdversaryPolicy::External {
        bail!("external scheduling is only available through `serve`");
    }
    if let Some(seed) = seed {
        kind = kind.with_seed(seed);
        if let AdversaryPolicy::RandomChoice(_) = policy {
            policy = AdversaryPolicy::RandomChoice(seed);
        }
    }
    Ok((kind, policy))
}

fn execute_run(
    c: Configuration,
    kind: &SchedulerKind,
    policy: &AdversaryPolicy,
    opts: &RunOptions,
) -> wrain_core::Result<Trace> {
    let mut scheduler = kind.build()?;
    let mut adversary = policy.build();
    run(c, scheduler.as_mut(), adversary.as_mut(), opts)
}

fn write_trace(trace: &Trace, path: &Path) -> anyhow::Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    trace.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(())
}

/// One SVG per configuration of the trace, all on a common canvas.
pub fn write_frames(trace: &Trace, dir: &Path) -> anyhow::Result<usize> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut frames: Vec<(u64, Configuration)> = Vec::new();
    walk(trace, |f| frames.push((f.step, f.config.clone())))?;
    let bounds = frames
        .iter()
        .filter_map(|(_, c)| svg::extent(c))
        .reduce(BoundingBox::union)
        .unwrap_or(BoundingBox::of_node(Node::ORIGIN));
    let canvas = svg::Canvas::new(bounds);
    for (step, c) in &frames {
        let caption = format!("step {step}");
        let text = canvas.render(c, trace.header.floor, Some(&caption));
        fs::write(dir.join(format!("frame_{step:05}.svg")), text)?;
    }
    Ok(frames.len())
}

pub fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> anyhow::Result<bool> {
    let c = read_instance(&a.instance)?;
    let (kind, policy) = seeded(&a.scheduler, &a.adversary, a.seed)?;
    let opts = RunOptions {
        max_steps: a.max_steps,
        max_moves: a.max_moves,
        fairness_window: a.fairness_window,
        strict: !a.lenient,
    };
    let trace = execute_run(c, &kind, &policy, &opts)?;
    if let Some(path) = &a.trace_out {
        write_trace(&trace, path)?;
    }
    if let Some(dir) = &a.svg_dir {
        write_frames(&trace, dir)?;
    }
    let s = trace.summary.as_ref().expect("run always writes a summary");
    writeln!(
        out,
        "rounds={} moves={} expansions={} final={} reason={}",
        s.steps,
        s.moves,
        s.expansions,
        s.terminated,
        serde_json::to_value(s.reason)?.as_str().unwrap_or("?")
    )?;
    Ok(s.terminated)
}

pub fn cmd_check(a: &CheckArgs, out: &mut dyn Write) -> anyhow::Result<bool> {
    let c = read_instance(&a.instance)?;
    let witness_dir = a.witness_dir.clone().unwrap_or_else(std::env::temp_dir);
    let mut failed = 0u64;
    for i in 0..a.runs {
        let seed = a.seed.wrapping_add(i);
        let (kind, policy) = seeded(&a.scheduler, &a.adversary, Some(seed))?;
        let trace = match execute_run(c.clone(), &kind, &policy, &RunOptions::default()) {
            Ok(t) => t,
            Err(e) => {
                failed += 1;
                writeln!(out, "run {i} ({kind}, {policy}): error: {e}")?;
                continue;
            }
        };
        let report = check_all(&trace)?;
        if !report.passed() {
            failed += 1;
            fs::create_dir_all(&witness_dir)?;
            let path = witness_dir.join(format!("wrain-witness-{seed}.jsonl"));
            write_trace(&trace, &path)?;
            writeln!(
                out,
                "run {i} ({kind}, {policy}): FAIL, witness {}",
                path.display()
            )?;
            for f in report.failures() {
                writeln!(out, "  {f}")?;
            }
        }
    }
    writeln!(
        out,
        "runs={} passed={} failed={failed}",
        a.runs,
        a.runs - failed
    )?;
    Ok(failed == 0)
}

fn print_result(r: &ExploreResult, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(
        out,
        "states={} transitions={} terminals={} max_moves={} max_path_length={} verified={}",
        r.states_visited,
        r.transitions,
        r.terminal_states.len(),
        r.max_moves_over_paths,
        r.max_path_length,
        r.verified()
    )
}

fn report_counterexample(
    r: &ExploreResult,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    if let Some(cx) = &r.counterexample {
        let path = path
            .map(Path::to_path_buf)
            .unwrap_or_else(|| std::env::temp_dir().join("wrain-counterexample.jsonl"));
        write_trace(&cx.trace, &path)?;
        writeln!(out, "counterexample: {} ({})", cx.reason, path.display())?;
    }
    Ok(())
}

pub fn cmd_explore(a: &ExploreArgs, out: &mut dyn Write) -> anyhow::Result<bool> {
    let mode: ExploreMode = a.mode.parse()?;
    let opts = ExploreOptions {
        max_states: a.max_states,
        ..ExploreOptions::new(mode)
    };
    if let Some(path) = &a.instance {
        let c = read_instance(path)?;
        let r = explore(&c, &opts)?;
        print_result(&r, out)?;
        for key in &r.terminal_states {
            writeln!(out, "terminal {key}")?;
        }
        report_counterexample(&r, a.counterexample_out.as_deref(), out)?;
        return Ok(r.verified());
    }
    let n = a.sweep.expect("clap requires instance or sweep");
    let bound = mode.default_max_n();
    if n > bound {
        bail!(
            "refusing to sweep n = {n}: exploration is bounded to n <= {bound} in {} mode",
            a.mode
        );
    }
    let mut all_ok = true;
    for k in 1..=n {
        let (mut instances, mut verified, mut states, mut worst) = (0, 0, 0, 0);
        for c in enumerate_initial(k)? {
            let r = explore(&c, &opts)?;
            instances += 1;
            states += r.states_visited;
            worst = worst.max(r.max_moves_over_paths);
            if r.verified() {
                verified += 1;
            } else if all_ok {
                all_ok = false;
                writeln!(out, "instance:\n{}", instance::render(&c, None))?;
                report_counterexample(&r, a.counterexample_out.as_deref(), out)?;
            }
        }
        writeln!(
            out,
            "n={k} instances={instances} verified={verified} states={states} max_moves={worst}"
        )?;
    }
    Ok(all_ok)
}

pub fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> anyhow::Result<bool> {
    let shape: Shape = a.shape.parse()?;
    let c = generate(shape, a.n, a.seed)?;
    let comment = match shape {
        Shape::Random => format!("{shape} n={} seed={}", a.n, a.seed),
        _ => format!("{shape} n={}", a.n),
    };
    let text = instance::render(&c, Some(&comment));
    match &a.out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(true)
}

pub fn cmd_serve(a: &ServeArgs, out: &mut dyn Write) -> anyhow::Result<bool> {
    let addr = SocketAddr::new(a.host, a.port);
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        writeln!(out, "listening on http://{}", listener.local_addr()?)?;
        out.flush()?;
        crate::server::serve_on(listener).await?;
        anyhow::Ok(())
    })?;
    Ok(true)
}

/// Whether a report shows a real failure. Unfinished traces may leave
/// termination open.
fn has_failure(report: &CheckReport, trace: &Trace) -> bool {
    report.checks.iter().any(|c| {
        c.status == CheckStatus::Fail && !(c.check == "termination" && trace.summary.is_none())
    })
}

pub fn cmd_replay(a: &ReplayArgs, out: &mut dyn Write) -> anyhow::Result<bool> {
    let file =
        fs::File::open(&a.trace).with_context(|| format!("opening {}", a.trace.display()))?;
    let trace = Trace::read_jsonl(std::io::BufReader::new(file))?;
    let state = match replay(&trace) {
        Ok(state) => state,
        Err(e) => {
            writeln!(out, "replay diverged: {e}")?;
            return Ok(false);
        }
    };
    writeln!(
        out,
        "replay ok: rounds={} moves={} final={}",
        state.step_count,
        state.move_count,
        state.is_final()
    )?;
    let report = check_all(&trace)?;
    write!(out, "{report}")?;
    if let Some(dir) = &a.svg_dir {
        let frames = write_frames(&trace, dir)?;
        writeln!(out, "wrote {frames} frames to {}", dir.display())?;
    }
    Ok(!has_failure(&report, &trace))
}

#[derive(Serialize)]
struct NodeReport {
    node: Node,
    occupied: bool,
    upper: bool,
    lower: bool,
    pointed: bool,
    near: bool,
    decision: Option<String>,
}

pub fn cmd_inspect(a: &InspectArgs, out: &mut dyn Write) -> anyhow::Result<bool> {
    let c = read_instance(&a.instance)?;
    let nodes: Vec<Node> = if a.nodes.is_empty() {
        c.nodes().collect()
    } else {
        a.nodes.clone()
    };
    for v in nodes {
        let report = NodeReport {
            node: v,
            occupied: model::occupied(&c, v),
            upper: model::upper(&c, v),
            lower: model::lower(&c, v),
            pointed: model::pointed(&c, v),
            near: model::near(&c, v),
            decision: decide_at(&c, v).ok().map(|a| match a {
                Action::NoOp => "noop".to_string(),
                Action::Expand(d) => d.to_string(),
            }),
        };
        writeln!(out, "{}", serde_json::to_string(&report)?)?;
    }
    Ok(true)
}
