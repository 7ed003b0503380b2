//! Shared fixtures for the benchmarks.

use wrain_core::gen::{generate, Shape};
use wrain_core::{run, AdversaryPolicy, Configuration, RunOptions, SchedulerKind, Trace};

pub fn hex(n: usize) -> Configuration {
    generate(Shape::Hex, n, 0).expect("n >= 1")
}

pub fn random(n: usize, seed: u64) -> Configuration {
    generate(Shape::Random, n, seed).expect("n >= 1")
}

/// A finished run; panics if the run errors.
pub fn trace(c: Configuration, kind: SchedulerKind, policy: AdversaryPolicy) -> Trace {
    let mut scheduler = kind.build().expect("built-in scheduler");
    let mut adversary = policy.build();
    run(
        c,
        scheduler.as_mut(),
        adversary.as_mut(),
        &RunOptions::default(),
    )
    .expect("run succeeds")
}
