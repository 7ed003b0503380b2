//! Deterministic SVG frames of configurations.
//!
//! Node `(q, r)` sits at `x = q + r/2`, `y = -r·√3/2` in lattice units,
//! scaled by [`UNIT`]. Every number is printed with two decimals, so equal
//! inputs give equal bytes.

use std::fmt::Write as _;

use wrain_core::grid::{self, BoundingBox, Node};
use wrain_core::model::{Configuration, ParticleState};

/// Pixels per edge length.
pub const UNIT: f64 = 40.0;
pub const BODY_RADIUS: f64 = 12.0;
pub const HEAD_RADIUS: f64 = 8.0;
pub const DOT_RADIUS: f64 = 2.0;
pub const MARGIN: f64 = 30.0;

/// Lattice position in edge lengths.
pub fn layout(v: Node) -> (f64, f64) {
    let (q, r) = (v.q as f64, v.r as f64);
    (q + r / 2.0, -r * 3f64.sqrt() / 2.0)
}

/// Nodes shown in a frame: every body and every expansion target.
pub fn extent(c: &Configuration) -> Option<BoundingBox> {
    let nodes = c
        .iter()
        .flat_map(|(v, s)| std::iter::once(v).chain(s.expansion().map(|d| v.neighbor(d))));
    grid::bounding_box(nodes).ok()
}

/// Maps lattice positions inside `bounds` to pixels.
#[derive(Debug, Clone, Copy)]
pub struct Canvas {
    bounds: BoundingBox,
    x_min: f64,
    y_min: f64,
    width: f64,
    height: f64,
}

impl Canvas {
    pub fn new(bounds: BoundingBox) -> Canvas {
        let corners = [
            Node::new(bounds.q_min, bounds.r_min),
            Node::new(bounds.q_min, bounds.r_max),
            Node::new(bounds.q_max, bounds.r_min),
            Node::new(bounds.q_max, bounds.r_max),
        ]
        .map(layout);
        let fold = |pick: fn(&(f64, f64)) -> f64, init: f64, f: fn(f64, f64) -> f64| {
            corners.iter().map(pick).fold(init, f)
        };
        let x_min = fold(|p| p.0, f64::INFINITY, f64::min);
        let x_max = fold(|p| p.0, f64::NEG_INFINITY, f64::max);
        let y_min = fold(|p| p.1, f64::INFINITY, f64::min);
        let y_max = fold(|p| p.1, f64::NEG_INFINITY, f64::max);
        Canvas {
            bounds,
            x_min,
            y_min,
            width: (x_max - x_min) * UNIT + 2.0 * MARGIN,
            height: (y_max - y_min) * UNIT + 2.0 * MARGIN,
        }
    }

    pub fn pixel(&self, v: Node) -> (f64, f64) {
        let (x, y) = layout(v);
        (
            (x - self.x_min) * UNIT + MARGIN,
            (y - self.y_min) * UNIT + MARGIN,
        )
    }

    pub fn size(&self) -> (f64, f64) {
        (self.width, self.height)
    }

    /// Draws `c` with the floor row dashed and an optional caption.
    pub fn render(&self, c: &Configuration, floor: i64, caption: Option<&str>) -> String {
        let b = self.bounds;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.2}" height="{h:.2}" viewBox="0 0 {w:.2} {h:.2}">"#,
            w = self.width,
            h = self.height
        );
        s.push_str(concat!(
            r#"<defs><pattern id="hatch" width="4" height="4" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">"#,
            r##"<line x1="0" y1="0" x2="0" y2="4" stroke="#555" stroke-width="1.5"/></pattern></defs>"##,
            "\n",
            r#"<rect width="100%" height="100%" fill="white"/>"#,
            "\n"
        ));
        for r in b.r_min..=b.r_max {
            for q in b.q_min..=b.q_max {
                let (x, y) = self.pixel(Node::new(q, r));
                let _ = writeln!(
                    s,
                    r##"<circle cx="{x:.2}" cy="{y:.2}" r="{DOT_RADIUS:.2}" fill="#bbb"/>"##
                );
            }
        }
        if (b.r_min..=b.r_max).contains(&floor) {
            let (x0, y) = self.pixel(Node::new(b.q_min, floor));
            let (x1, _) = self.pixel(Node::new(b.q_max, floor));
            let _ = writeln!(
                s,
                r##"<line class="floor" x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#36c" stroke-dasharray="6 4"/>"##,
                x0 - UNIT / 2.0,
                x1 + UNIT / 2.0
            );
        }
        for (v, state) in c.iter() {
            let (x, y) = self.pixel(v);
            if let ParticleState::Expanded(d) = state {
                let (hx, hy) = self.pixel(v.neighbor(d));
                let _ = writeln!(
                    s,
                    r##"<line class="edge" x1="{x:.2}" y1="{y:.2}" x2="{hx:.2}" y2="{hy:.2}" stroke="#222" stroke-width="8"/>"##
                );
                let _ = writeln!(
                    s,
                    r##"<circle class="head" cx="{hx:.2}" cy="{hy:.2}" r="{HEAD_RADIUS:.2}" fill="url(#hatch)" stroke="#222"/>"##
                );
            }
            let _ = writeln!(
                s,
                r##"<circle class="body" cx="{x:.2}" cy="{y:.2}" r="{BODY_RADIUS:.2}" fill="#222"/>"##
            );
        }
        if let Some(text) = caption {
            let _ = writeln!(
                s,
                r#"<text x="{MARGIN:.2}" y="{:.2}" font-family="monospace" font-size="12">{}</text>"#,
                MARGIN / 2.0,
                escape(text)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// One frame sized to the configuration itself.
pub fn render(c: &Configuration, floor: i64, caption: Option<&str>) -> String {
    let bounds = extent(c).unwrap_or(BoundingBox::of_node(Node::ORIGIN));
    Canvas::new(bounds).render(c, floor, caption)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use wrain_core::Direction;

    fn pair() -> Configuration {
        Configuration::contracted([Node::new(0, 0), Node::new(0, 1)]).unwrap()
    }

    #[test]
    fn pixel_positions_follow_the_layout() {
        let canvas = Canvas::new(extent(&pair()).unwrap());
        // the pair spans x in [0, 0.5] and y in [-√3/2, 0]
        let h = 3f64.sqrt() / 2.0;
        assert_eq!(canvas.pixel(Node::new(0, 0)), (MARGIN, h * UNIT + MARGIN));
        assert_eq!(canvas.pixel(Node::new(0, 1)), (0.5 * UNIT + MARGIN, MARGIN));
        assert_eq!(
            canvas.size(),
            (0.5 * UNIT + 2.0 * MARGIN, h * UNIT + 2.0 * MARGIN)
        );
    }

    #[test]
    fn frames_are_deterministic() {
        let a = render(&pair(), 0, Some("step 0"));
        assert_eq!(a, render(&pair(), 0, Some("step 0")));
        assert_eq!(a.matches(r#"class="body""#).count(), 2);
        assert_eq!(a.matches(r#"class="floor""#).count(), 1);
        assert!(a.contains(r#"<circle class="body" cx="30.00" cy="64.64""#));
        assert!(a.contains(">step 0</text>"));
    }

    #[test]
    fn expanded_particles_show_edge_and_head() {
        let c: Configuration = [
            (Node::new(0, 0), ParticleState::Contracted),
            (Node::new(0, 1), ParticleState::Expanded(Direction::SE)),
        ]
        .into_iter()
        .collect();
        let svg = render(&c, 0, Some("a<b"));
        assert_eq!(svg.matches(r#"class="edge""#).count(), 1);
        assert_eq!(svg.matches(r#"class="head""#).count(), 1);
        // head at (1,0) is inside the extent
        assert_eq!(extent(&c).unwrap().q_max, 1);
        assert!(svg.contains("a&lt;b"));
    }
}
