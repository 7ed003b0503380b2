//! Plain-text instance files.
//!
//! One particle per line: `q r` for a contracted particle, `q r DIR` for an
//! expanded one. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;

use crate::grid::Node;
use crate::model::{validate, Configuration, ParticleState};
use crate::{Error, Result};

pub fn parse(text: &str) -> Result<Configuration> {
    let mut particles = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("line {}: {what}: `{line}`", i + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (q, r, state) = match fields.as_slice() {
            [q, r] => (q, r, ParticleState::Contracted),
            [q, r, dir] => (
                q,
                r,
                ParticleState::Expanded(dir.parse().map_err(|_| bad("unknown direction"))?),
            ),
            _ => return Err(bad("expected `q r` or `q r DIR`")),
        };
        let q = q.parse().map_err(|_| bad("bad q coordinate"))?;
        let r = r.parse().map_err(|_| bad("bad r coordinate"))?;
        particles.push((Node::new(q, r), state));
    }
    let c = Configuration::from_particles(particles)?;
    if c.is_empty() {
        return Err(Error::EmptyConfiguration);
    }
    validate(&c).map_err(Error::InvalidConfiguration)?;
    Ok(c)
}

pub fn read(path: &std::path::Path) -> Result<Configuration> {
    parse(&std::fs::read_to_string(path)?)
}

/// Renders in node order; `parse(&render(c, None)) == c` for valid `c`.
pub fn render(c: &Configuration, comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(comment) = comment {
        for line in comment.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    for (v, s) in c.iter() {
        match s {
            ParticleState::Contracted => {
                let _ = writeln!(out, "{} {}", v.q, v.r);
            }
            ParticleState::Expanded(d) => {
                let _ = writeln!(out, "{} {} {d}", v.q, v.r);
            }
        }
    }
    out
}
