//! Trajectory records: `stage,agent,opinion,convinced`.

use std::fmt::Write as _;

use campaign_core::numeric::{parse_rational, DecimalStyle, Formatted};
use campaign_core::{ConvictionInterval, Rational, Trajectory};

pub const HEADER: &str = "stage,agent,opinion,convinced";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Agent {
    Control,
    Voter(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub stage: usize,
    pub agent: Agent,
    pub opinion: Rational,
    pub convinced: Option<bool>,
}

/// One row per agent and stage. The control row of stage `t` is the control
/// acting on the state of stage `t`; the convinced flag is set on the final
/// stage only.
pub fn write(trajectory: &Trajectory, interval: &ConvictionInterval, style: DecimalStyle) -> String {
    let mut out = format!("{HEADER}\n");
    let last = trajectory.stages();
    for (t, state) in trajectory.states.iter().enumerate() {
        if let Some(u) = trajectory.controls.get(t) {
            writeln!(out, "{t},control,{},", Formatted(u, style)).unwrap();
        }
        for (k, x) in state.opinions().iter().enumerate() {
            let flag = if t == last {
                if interval.contains(x) {
                    "1"
                } else {
                    "0"
                }
            } else {
                ""
            };
            writeln!(out, "{t},{},{},{flag}", k + 1, Formatted(x, style)).unwrap();
        }
    }
    out
}

pub fn read(text: &str) -> Result<Vec<Record>, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        Some((_, h)) => return Err(format!("line 1: expected header {HEADER:?}, found {h:?}")),
        None => return Err("empty trajectory file".into()),
    }
    let mut records = Vec::new();
    for (k, line) in lines {
        let at = |m: String| format!("line {}: {m}", k + 1);
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [stage, agent, opinion, convinced] = fields.as_slice() else {
            return Err(at(format!("expected 4 fields, found {}", fields.len())));
        };
        let stage = stage.parse().map_err(|_| at(format!("bad stage {stage:?}")))?;
        let agent = match *agent {
            "control" => Agent::Control,
            a => Agent::Voter(a.parse().ok().filter(|&i| i >= 1).ok_or_else(|| at(format!("bad agent {a:?}")))?),
        };
        let opinion = parse_rational(opinion).map_err(|e| at(e.to_string()))?;
        let convinced = match *convinced {
            "" => None,
            "1" => Some(true),
            "0" => Some(false),
            c => return Err(at(format!("bad convinced flag {c:?}"))),
        };
        records.push(Record {
            stage,
            agent,
            opinion,
            convinced,
        });
    }
    if records.is_empty() {
        return Err("trajectory has no records".into());
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use campaign_core::instances::benchmark;
    use campaign_core::numeric::ratio;
    use campaign_core::{simulate, ControlSequence};

    #[test]
    fn round_trip_exact() {
        let b = benchmark(2);
        let traj = simulate(&b, &ControlSequence::new(vec![ratio(9, 20), ratio(1, 3)]).unwrap()).unwrap();
        let text = write(&traj, b.interval(), DecimalStyle::Exact);
        let recs = read(&text).unwrap();
        assert_eq!(recs.len(), 3 * 11 + 2);
        assert_eq!(recs[0].agent, Agent::Control);
        assert_eq!(recs[0].opinion, ratio(9, 20));
        let last = recs.iter().filter(|r| r.stage == 2).count();
        assert_eq!(last, 11);
        assert!(recs.iter().filter(|r| r.stage < 2).all(|r| r.convinced.is_none()));
        assert_eq!(recs.iter().filter(|r| r.convinced == Some(true)).count(), 3);
    }

    #[test]
    fn truncated_digits() {
        let b = benchmark(1);
        let traj = simulate(&b, &ControlSequence::new(vec![ratio(1, 3)]).unwrap()).unwrap();
        let text = write(&traj, b.interval(), DecimalStyle::Truncated(4));
        assert!(text.contains("0,control,0.3333,\n"));
    }

    #[test]
    fn malformed_input() {
        assert!(read("").is_err());
        assert!(read("stage,agent,opinion,convinced\n").is_err());
        assert!(read("a,b\n").is_err());
        assert!(read("stage,agent,opinion,convinced\n0,0,0.5,\n").is_err());
        assert!(read("stage,agent,opinion,convinced\n0,1,x,\n").is_err());
        assert!(read("stage,agent,opinion,convinced\n0,1,0.5\n").is_err());
    }
}
