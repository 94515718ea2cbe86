//! SVG rendering of trajectory records: voters as circles joined by
//! polylines, controls as squares, the conviction interval shaded.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use campaign_core::numeric::to_f64;
use campaign_core::Rational;

use crate::csv::{Agent, Record};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 44.0;

/// What the records alone do not tell.
#[derive(Debug, Clone, Default)]
pub struct Decorations {
    pub interval: Option<(Rational, Rational)>,
    pub epsilon: Option<Rational>,
    pub title: Option<String>,
}

struct Frame {
    stages: usize,
}

impl Frame {
    fn x(&self, stage: usize) -> f64 {
        LEFT + (WIDTH - LEFT - RIGHT) * stage as f64 / self.stages.max(1) as f64
    }

    fn y(&self, v: f64) -> f64 {
        TOP + (HEIGHT - TOP - BOTTOM) * (1.0 - v.clamp(0.0, 1.0))
    }

    fn column(&self) -> f64 {
        (WIDTH - LEFT - RIGHT) / self.stages.max(1) as f64
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(records: &[Record], deco: &Decorations) -> String {
    let stages = records.iter().map(|r| r.stage).max().unwrap_or(0);
    let f = Frame { stages };
    let mut voters: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    let mut controls = Vec::new();
    for r in records {
        match r.agent {
            Agent::Voter(i) => voters.entry(i).or_default().push((r.stage, to_f64(&r.opinion))),
            Agent::Control => controls.push((r.stage, to_f64(&r.opinion))),
        }
    }

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    if let Some(title) = &deco.title {
        writeln!(s, "<title>{}</title>", escape(title)).unwrap();
    }
    writeln!(s, r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##).unwrap();

    if let Some((l, r)) = &deco.interval {
        let (top, bottom) = (f.y(to_f64(r)), f.y(to_f64(l)));
        writeln!(
            s,
            r##"<rect class="interval" x="{:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="#cfe8cf"/>"##,
            LEFT,
            WIDTH - LEFT - RIGHT,
            bottom - top
        )
        .unwrap();
    }
    if let Some(eps) = &deco.epsilon {
        let eps = to_f64(eps);
        let w = f.column() * 0.5;
        for &(t, u) in &controls {
            let (top, bottom) = (f.y(u + eps), f.y(u - eps));
            writeln!(
                s,
                r##"<rect class="reach" x="{:.2}" y="{top:.2}" width="{w:.2}" height="{:.2}" fill="#f4d9a8" fill-opacity="0.6"/>"##,
                f.x(t),
                bottom - top
            )
            .unwrap();
        }
    }

    // axes and stage columns
    for t in 0..=stages {
        let x = f.x(t);
        writeln!(
            s,
            r##"<line class="stage" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            f.y(1.0),
            f.y(0.0)
        )
        .unwrap();
        writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#, f.y(0.0) + 16.0).unwrap();
    }
    for k in 0..=10 {
        let v = k as f64 / 10.0;
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, LEFT - 6.0, f.y(v) + 4.0).unwrap();
    }
    writeln!(
        s,
        r##"<path d="M{LEFT:.2} {:.2}V{:.2}H{:.2}" fill="none" stroke="#000000"/>"##,
        f.y(1.0),
        f.y(0.0),
        WIDTH - RIGHT
    )
    .unwrap();
    writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">stage</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, HEIGHT - 6.0).unwrap();

    for (i, points) in &voters {
        let path: Vec<String> = points.iter().map(|&(t, v)| format!("{:.2},{:.2}", f.x(t), f.y(v))).collect();
        writeln!(
            s,
            r##"<polyline class="voter" data-voter="{i}" points="{}" fill="none" stroke="#3a5fa0"/>"##,
            path.join(" ")
        )
        .unwrap();
        for &(t, v) in points {
            writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#3a5fa0"/>"##, f.x(t), f.y(v)).unwrap();
        }
    }
    for &(t, u) in &controls {
        writeln!(
            s,
            r##"<rect class="control" x="{:.2}" y="{:.2}" width="7" height="7" fill="#c0392b"/>"##,
            f.x(t) - 3.5,
            f.y(u) - 3.5
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use campaign_core::numeric::ratio;

    fn rec(stage: usize, agent: Agent, p: i64, q: i64) -> Record {
        Record {
            stage,
            agent,
            opinion: ratio(p, q),
            convinced: None,
        }
    }

    #[test]
    fn structure() {
        let recs = vec![
            rec(0, Agent::Control, 1, 2),
            rec(0, Agent::Voter(1), 0, 1),
            rec(0, Agent::Voter(2), 1, 1),
            rec(1, Agent::Voter(1), 1, 4),
            rec(1, Agent::Voter(2), 3, 4),
        ];
        let deco = Decorations {
            interval: Some((ratio(3, 8), ratio(5, 8))),
            epsilon: Some(ratio(1, 5)),
            title: Some("a < b".into()),
        };
        let svg = render(&recs, &deco);
        assert_eq!(svg.matches(r#"class="voter""#).count(), 2);
        assert_eq!(svg.matches(r#"class="stage""#).count(), 2);
        assert_eq!(svg.matches(r#"class="control""#).count(), 1);
        assert_eq!(svg.matches(r#"class="reach""#).count(), 1);
        assert_eq!(svg.matches(r#"class="interval""#).count(), 1);
        assert!(svg.contains("<title>a &lt; b</title>"));
        assert_eq!(svg, render(&recs, &deco));
    }

    #[test]
    fn opinions_map_top_down() {
        let f = Frame { stages: 4 };
        assert_eq!(f.y(1.0), TOP);
        assert_eq!(f.y(0.0), HEIGHT - BOTTOM);
        assert_eq!(f.x(4), WIDTH - RIGHT);
    }
}
