//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p wrain-cli --test acceptance`.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use wrain_core::checkers::{check_all, CheckStatus};
use wrain_core::explorer::{enumerate_initial, explore, ExploreMode, ExploreOptions};
use wrain_core::gen::{generate, Shape};
use wrain_core::model::{is_connected, is_final};
use wrain_core::scheduler::{FirstById, FullySync};
use wrain_core::{run, AdversaryPolicy, Configuration, Node, RunOptions, SchedulerKind};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

/// Every initial configuration with n <= 4: all serial schedules end
/// contracted, connected, on the floor row.
fn exhaustive_verification() -> Outcome {
    let (mut instances, mut states, mut bad) = (0, 0, Vec::new());
    for n in 1..=4 {
        for c in enumerate_initial(n).expect("n <= 6") {
            instances += 1;
            let floor = c.bounding_box().expect("nonempty").r_min;
            match explore(&c, &ExploreOptions::new(ExploreMode::Serial)) {
                Ok(r) => {
                    states += r.states_visited;
                    let terminals_ok = r.terminal_states.iter().all(|k| {
                        let t = k.to_configuration();
                        t.all_contracted()
                            && is_connected(&t).unwrap_or(false)
                            && is_final(&t, floor)
                    });
                    if !r.verified() || !terminals_ok {
                        bad.push(wrain_core::instance::render(&c, None));
                    }
                }
                Err(e) => bad.push(format!("{e}")),
            }
        }
    }
    outcome(
        bad.is_empty() && instances == 59,
        format!(
            "instances={instances} states={states} counterexamples={}",
            bad.len()
        ),
    )
}

/// All n <= 3 instances: subset-mode terminal sets equal serial-mode ones.
fn serializability() -> Outcome {
    let (mut instances, mut mismatches) = (0, 0);
    for n in 1..=3 {
        for c in enumerate_initial(n).expect("n <= 6") {
            instances += 1;
            let serial = explore(&c, &ExploreOptions::new(ExploreMode::Serial));
            let subsets = explore(&c, &ExploreOptions::new(ExploreMode::AllSubsets));
            match (serial, subsets) {
                (Ok(a), Ok(b))
                    if a.terminal_states == b.terminal_states && a.verified() && b.verified() => {}
                _ => mismatches += 1,
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("instances={instances} mismatches={mismatches}"),
    )
}

#[derive(Default)]
struct SuiteTally {
    runs: u64,
    errors: u64,
    move_violations: u64,
    claim_violations: u64,
    worst_ratio: f64,
}

const SUITE_SIZES: [usize; 3] = [5, 10, 20];
const RUNS_PER_CELL: u64 = 1667;

/// Seeded randomized runs over n in {5, 10, 20} and both random schedulers.
fn randomized_suite() -> SuiteTally {
    let mut t = SuiteTally::default();
    for n in SUITE_SIZES {
        for subset in [false, true] {
            for i in 0..RUNS_PER_CELL {
                let seed = (n as u64) << 32 | (subset as u64) << 31 | i;
                let c = generate(Shape::Random, n, seed).expect("n >= 1");
                let kind = if subset {
                    SchedulerKind::SubsetRandom(seed, 0.5)
                } else {
                    SchedulerKind::SerialRandom(seed)
                };
                t.runs += 1;
                let mut scheduler = kind.build().expect("built-in scheduler");
                let mut adversary = AdversaryPolicy::RandomChoice(seed).build();
                let trace = match run(
                    c,
                    scheduler.as_mut(),
                    adversary.as_mut(),
                    &RunOptions::default(),
                ) {
                    Ok(trace) => trace,
                    Err(_) => {
                        t.errors += 1;
                        continue;
                    }
                };
                let Ok(report) = check_all(&trace) else {
                    t.errors += 1;
                    continue;
                };
                let pass = |name: &str| {
                    report
                        .get(name)
                        .is_some_and(|o| o.status == CheckStatus::Pass)
                };
                if !(pass("moves") && trace.terminated()) {
                    t.move_violations += 1;
                }
                if !(pass("uniqueness") && pass("bbox") && pass("connectivity")) {
                    t.claim_violations += 1;
                }
                let moves = trace.summary.as_ref().map_or(0, |s| s.moves) as f64;
                let bound = (2 * n * (n - 1)) as f64;
                t.worst_ratio = t.worst_ratio.max(moves / bound);
            }
        }
    }
    t
}

fn move_bound(t: &SuiteTally) -> Outcome {
    outcome(
        t.runs >= 10_000 && t.errors == 0 && t.move_violations == 0,
        format!(
            "runs={} errors={} violations={} worst_moves/bound={:.3}",
            t.runs, t.errors, t.move_violations, t.worst_ratio
        ),
    )
}

fn claim_checks(t: &SuiteTally) -> Outcome {
    outcome(
        t.runs >= 10_000 && t.errors == 0 && t.claim_violations == 0,
        format!(
            "runs={} errors={} violations={}",
            t.runs, t.errors, t.claim_violations
        ),
    )
}

/// Hex-blob sizes and their fully synchronous move counts, frozen from the
/// first oracle run.
const HEX_MOVES: [(usize, u64); 4] = [(7, 21), (19, 171), (37, 666), (61, 1830)];

/// Least-squares slope of `ln y` against `ln x`.
fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn quadratic_scaling() -> Outcome {
    let mut points = Vec::new();
    let mut drift = Vec::new();
    for (n, frozen) in HEX_MOVES {
        let c = generate(Shape::Hex, n, 0).expect("n >= 1");
        let trace = match run(c, &mut FullySync, &mut FirstById, &RunOptions::default()) {
            Ok(t) if t.terminated() => t,
            _ => return outcome(false, format!("hex n={n} did not terminate")),
        };
        let moves = trace.summary.as_ref().map_or(0, |s| s.moves);
        if moves != frozen {
            drift.push(format!("n={n}: {moves} != frozen {frozen}"));
        }
        points.push((n as f64, moves as f64));
    }
    let slope = log_log_slope(&points);
    let counts: Vec<String> = points.iter().map(|(n, m)| format!("{n}:{m}")).collect();
    outcome(
        (1.6..=2.2).contains(&slope) && drift.is_empty(),
        format!(
            "moves {} slope={slope:.3} {}",
            counts.join(" "),
            drift.join("; ")
        ),
    )
}

/// Hand-derived fully synchronous executions: keys after every round.
fn running_examples() -> Outcome {
    let n = Node::new;
    let cases: [(&str, Vec<Node>, &[&str], u64); 2] = [
        (
            "triangle",
            vec![n(0, 0), n(1, 0), n(0, 1)],
            &[
                "0,0,C 0,1,SE 1,0,C",
                "0,0,C 0,1,SE 1,0,E",
                "0,0,C 0,1,SE 2,0,C",
                "0,0,C 1,0,C 2,0,C",
            ],
            2,
        ),
        (
            "pair",
            vec![n(0, 0), n(0, 1)],
            &["0,0,C 0,1,SE", "0,0,C 1,0,C"],
            1,
        ),
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, nodes, keys, moves) in cases {
        let c = Configuration::contracted(nodes).expect("distinct nodes");
        let trace = run(c, &mut FullySync, &mut FirstById, &RunOptions::default());
        let Ok(trace) = trace else {
            ok = false;
            notes.push(format!("{name}: run failed"));
            continue;
        };
        let got: Vec<&str> = trace.records.iter().map(|r| r.key.as_str()).collect();
        let got_moves = trace.summary.as_ref().map_or(0, |s| s.moves);
        ok &= got == keys && got_moves == moves && trace.terminated();
        notes.push(format!("{name}: rounds={} moves={got_moves}", got.len()));
    }
    outcome(ok, notes.join(", "))
}

fn wrain(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wrain"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

/// Same (instance, scheduler, seed) twice gives identical trace bytes, and
/// every trace replays.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let dir = dir.path();
    let instances: [(&str, &[&str]); 4] = [
        ("tri.txt", &[]),
        ("hex.txt", &["gen", "hex", "19", "--out", "hex.txt"]),
        (
            "rand.txt",
            &["gen", "random", "12", "--seed", "4", "--out", "rand.txt"],
        ),
        ("vline.txt", &["gen", "vline", "6", "--out", "vline.txt"]),
    ];
    std::fs::write(dir.join("tri.txt"), "0 0\n1 0\n0 1\n").expect("write");
    for (_, gen) in &instances {
        if !gen.is_empty() && !wrain(gen, dir).status.success() {
            return outcome(false, "gen failed");
        }
    }
    let specs = [
        ("sync", "first"),
        ("serial", "random"),
        ("subset:0:0.5", "random"),
    ];
    let (mut triples, mut mismatches, mut replay_failures) = (0, 0, 0);
    for (file, _) in &instances {
        for (scheduler, adversary) in specs {
            for seed in ["1", "77"] {
                triples += 1;
                let mut bytes = Vec::new();
                for attempt in ["a", "b"] {
                    let out =
                        format!("{file}.{scheduler}.{seed}.{attempt}.jsonl").replace(':', "_");
                    let o = wrain(
                        &[
                            "run",
                            file,
                            "--scheduler",
                            scheduler,
                            "--adversary",
                            adversary,
                            "--seed",
                            seed,
                            "--trace-out",
                            &out,
                        ],
                        dir,
                    );
                    if !o.status.success() {
                        replay_failures += 1;
                    }
                    let r = wrain(&["replay", &out], dir);
                    if !(r.status.success()
                        && String::from_utf8_lossy(&r.stdout).starts_with("replay ok"))
                    {
                        replay_failures += 1;
                    }
                    bytes.push(std::fs::read(dir.join(&out)).unwrap_or_default());
                }
                if bytes[0].is_empty() || bytes[0] != bytes[1] {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(
        mismatches == 0 && replay_failures == 0,
        format!("triples={triples} byte_mismatches={mismatches} replay_failures={replay_failures}"),
    )
}

fn main() {
    let start = Instant::now();
    let suite = randomized_suite();
    let criteria: Vec<(u32, &str, Outcome)> = vec![
        (1, "exhaustive verification n<=4", exhaustive_verification()),
        (2, "serializability n<=3", serializability()),
        (3, "move bound", move_bound(&suite)),
        (4, "quadratic scaling", quadratic_scaling()),
        (5, "claim checks", claim_checks(&suite)),
        (6, "running examples", running_examples()),
        (7, "determinism", determinism()),
    ];
    let mut failed = BTreeSet::new();
    for (id, name, o) in &criteria {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {id} {verdict} {name}: {}", o.detail);
        if !o.passed {
            failed.insert(*id);
        }
    }
    println!(
        "acceptance: {} of {} passed in {:.1?}",
        criteria.len() - failed.len(),
        criteria.len(),
        start.elapsed()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
