use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

use super::model::{MilpModel, VarName};
use super::MilpError;
use crate::dynamics::{perturbed_objective, simulate, ControlSequence, Instance, Member, Trajectory};
use crate::numeric::{format_ratio, parse_scientific, ratio, Rational};

/// Largest distance from 0 or 1 at which a binary value is snapped.
pub const BINARY_TOLERANCE: (i64, i64) = (1, 1_000_000);

fn tolerance() -> Rational {
    ratio(BINARY_TOLERANCE.0, BINARY_TOLERANCE.1)
}

/// Variable values reported by a solver, read exactly from their decimal
/// text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolutionMap {
    pub values: BTreeMap<String, Rational>,
    pub objective: Option<Rational>,
}

fn is_binary_name(name: &str) -> bool {
    matches!(
        name.parse::<VarName>(),
        Ok(VarName::Z { .. }
            | VarName::V { .. }
            | VarName::L { .. }
            | VarName::R { .. }
            | VarName::C { .. }
            | VarName::Kappa { .. }
            | VarName::Conf { .. }
            | VarName::Conv { .. }
            | VarName::S { .. }
            | VarName::B { .. })
    )
}

fn snap(name: &str, value: Rational) -> Result<Rational, MilpError> {
    if !is_binary_name(name) {
        return Ok(value);
    }
    for target in [Rational::zero(), Rational::one()] {
        if (&value - &target).abs() <= tolerance() {
            return Ok(target);
        }
    }
    Err(MilpError::NonIntegralBinary {
        name: name.to_string(),
        value: format_ratio(&value),
    })
}

fn parse_value(text: &str, line: usize) -> Result<Rational, MilpError> {
    parse_scientific(text).map_err(|e| MilpError::Parse {
        line,
        message: e.to_string(),
    })
}

/// Reads a solver solution. Two dialects are accepted:
///
/// * plain text with one `name value` (or `name = value`) per line. Lines
///   starting with `#` or `\` are comments, a line mentioning `objective`
///   (or whose first word is `obj`) gives the objective as its last token, and
///   lines that do not end in a number are headers. Row values following a
///   `# Rows` or `# Dual` comment are skipped until `# Columns`.
/// * CPLEX XML with `<header objectiveValue=…>` and `<variable name=…
///   value=…>` elements.
///
/// Binary variables (by name kind) are snapped to 0 or 1 within 10^-6.
pub fn parse_solution(text: &str) -> Result<SolutionMap, MilpError> {
    if text.trim_start().starts_with('<') {
        return parse_xml(text);
    }
    let mut out = SolutionMap::default();
    let mut skipping = false;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('\\') {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let lower = comment.trim().to_ascii_lowercase();
            if lower.starts_with("rows") || lower.starts_with("dual") {
                skipping = true;
            } else if lower.starts_with("columns") {
                skipping = false;
            }
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().filter(|t| *t != "=").collect();
        let lower = trimmed.to_ascii_lowercase();
        let last = tokens.last().copied().unwrap_or("");
        let numeric = parse_scientific(last).is_ok();
        let head = tokens.first().map(|t| t.trim_end_matches(':').to_ascii_lowercase());
        if lower.contains("objective") || head.as_deref() == Some("obj") {
            if numeric {
                out.objective = Some(parse_value(last, line)?);
            }
            continue;
        }
        if skipping || !numeric {
            continue;
        }
        let (name, value) = match tokens.as_slice() {
            [name, value] => (*name, *value),
            // index name value reduced-cost, as written by CBC
            [index, name, value, _] if index.parse::<usize>().is_ok() => (*name, *value),
            _ => {
                return Err(MilpError::Parse {
                    line,
                    message: format!("expected `name value`, got {trimmed:?}"),
                })
            }
        };
        insert(&mut out, name, parse_value(value, line)?, line)?;
    }
    Ok(out)
}

fn insert(out: &mut SolutionMap, name: &str, value: Rational, line: usize) -> Result<(), MilpError> {
    let value = snap(name, value)?;
    if out.values.insert(name.to_string(), value).is_some() {
        return Err(MilpError::Parse {
            line,
            message: format!("{name} given twice"),
        });
    }
    Ok(())
}

fn parse_xml(text: &str) -> Result<SolutionMap, MilpError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| MilpError::Parse {
        line: e.pos().row as usize,
        message: e.to_string(),
    })?;
    let mut out = SolutionMap::default();
    for node in doc.descendants().filter(|n| n.is_element()) {
        let line = doc.text_pos_at(node.range().start).row as usize;
        match node.tag_name().name() {
            "header" => {
                if let Some(v) = node.attribute("objectiveValue") {
                    out.objective = Some(parse_value(v, line)?);
                }
            }
            "variable" => {
                let (Some(name), Some(value)) = (node.attribute("name"), node.attribute("value")) else {
                    return Err(MilpError::Parse {
                        line,
                        message: "variable element needs name and value".into(),
                    });
                };
                insert(&mut out, name, parse_value(value, line)?, line)?;
            }
            _ => {}
        }
    }
    Ok(out)
}

impl SolutionMap {
    pub fn get(&self, name: &VarName) -> Option<&Rational> {
        self.values.get(&name.to_string())
    }

    /// Fails on the first name the model does not declare.
    pub fn check_names(&self, model: &MilpModel) -> Result<(), MilpError> {
        for name in self.values.keys() {
            let known = name.parse::<VarName>().ok().and_then(|v| model.var_index(&v)).is_some();
            if !known {
                return Err(MilpError::UnknownVariable(name.clone()));
            }
        }
        Ok(())
    }
}

/// The controls `x_t_0` for `t < stages`. Values within 10^-6 outside
/// `[0, 1]` are clamped.
pub fn extract_control(solution: &SolutionMap, stages: usize) -> Result<ControlSequence, MilpError> {
    let mut controls = Vec::with_capacity(stages);
    for t in 0..stages {
        let name = VarName::X { t, i: 0 };
        let value = solution
            .get(&name)
            .ok_or_else(|| MilpError::MissingVariable(name.to_string()))?;
        let (zero, one) = (Rational::zero(), Rational::one());
        let clamped = if *value < zero && -value <= tolerance() {
            zero
        } else if *value > one && value - &one <= tolerance() {
            one
        } else {
            value.clone()
        };
        if clamped.is_negative() || clamped > Rational::one() {
            return Err(MilpError::ControlOutOfRange {
                name: name.to_string(),
                value: format_ratio(value),
            });
        }
        controls.push(clamped);
    }
    Ok(ControlSequence::new(controls)?)
}

/// Default snapping tolerance, matching the solver feasibility tolerance.
pub const SNAP_TOLERANCE: (i64, i64) = (1, 1_000_000_000);

/// Replaces every control off the `tolerance` grid by the simplest rational
/// within `tolerance`. Solver output such as `0.5499999999999999` lands a
/// hair outside a confidence radius the model meant to hit; the snapped
/// value restores it. Values that are multiples of `tolerance`, such as a
/// hand-written `0.550001` with tolerance `10^-9`, are kept as written.
pub fn snap_controls(controls: &ControlSequence, tolerance: &Rational) -> ControlSequence {
    let one = Rational::one();
    let snapped = controls
        .values()
        .iter()
        .map(|u| {
            if tolerance.is_zero() || (u / tolerance).is_integer() {
                u.clone()
            } else {
                crate::numeric::snap(u, tolerance).min(one.clone())
            }
        })
        .collect();
    ControlSequence::new(snapped).expect("snapped controls stay in [0, 1]")
}

/// A distance in `(epsilon, epsilon + |eps_hat|]` at a stage that feeds
/// the dynamics. A model with that margin may disagree with the exact rule
/// there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandHit {
    pub stage: usize,
    pub a: Member,
    pub b: Member,
    pub distance: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationReport {
    pub count: usize,
    pub perturbed_objective: Option<Rational>,
    pub trajectory: Trajectory,
    pub band_hits: Vec<BandHit>,
}

/// Exact re-simulation of a control. An empty sequence runs the instance
/// uncontrolled for its own horizon; otherwise the horizon is the sequence
/// length.
pub fn verify_control(
    instance: &Instance,
    controls: &ControlSequence,
    eps_hat: &Rational,
) -> Result<VerificationReport, MilpError> {
    let instance = if controls.is_empty() {
        instance.clone()
    } else {
        instance.with_horizon(controls.len())
    };
    let trajectory = simulate(&instance, controls)?;
    let count = crate::dynamics::convinced_count(trajectory.final_state(), instance.interval());
    let perturbed = if instance.epsilon().is_some() && trajectory.stages() > 0 {
        perturbed_objective(&trajectory, &instance).ok()
    } else {
        None
    };
    let mut band_hits = Vec::new();
    if let Some(epsilon) = instance.epsilon() {
        let upper = epsilon + eps_hat.abs();
        let in_band = |d: &Rational| d > epsilon && *d <= upper;
        for t in 0..trajectory.stages() {
            let xs = trajectory.states[t].opinions();
            if let Some(u) = controls.get(t) {
                for (i, x) in xs.iter().enumerate() {
                    let d = (u - x).abs();
                    if in_band(&d) {
                        band_hits.push(BandHit {
                            stage: t,
                            a: Member::Control,
                            b: Member::Voter(i + 1),
                            distance: d,
                        });
                    }
                }
            }
            for i in 0..xs.len() {
                for j in i + 1..xs.len() {
                    let d = (&xs[j] - &xs[i]).abs();
                    if in_band(&d) {
                        band_hits.push(BandHit {
                            stage: t,
                            a: Member::Voter(i + 1),
                            b: Member::Voter(j + 1),
                            distance: d,
                        });
                    }
                }
            }
        }
    }
    Ok(VerificationReport {
        count,
        perturbed_objective: perturbed,
        trajectory,
        band_hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::bc_step;
    use crate::instances::benchmark;
    use crate::milp::{build_bc_advanced_model, MilpBuildOptions};
    use crate::numeric::{int, parse_decimal};
    use crate::OpinionProfile;

    #[test]
    fn snapping_restores_the_intended_control() {
        let b = benchmark(2);
        let raw = ControlSequence::new(vec![
            parse_decimal("0.5499999999999999").unwrap(),
            parse_decimal("0.5124999999999998").unwrap(),
        ])
        .unwrap();
        let snapped = snap_controls(&raw, &ratio(SNAP_TOLERANCE.0, SNAP_TOLERANCE.1));
        assert_eq!(snapped.values(), &[ratio(11, 20), ratio(41, 80)]);
        let written = ControlSequence::new(vec![parse_decimal("0.550001").unwrap()]).unwrap();
        assert_eq!(snap_controls(&written, &ratio(SNAP_TOLERANCE.0, SNAP_TOLERANCE.1)), written);
        let eps_hat = ratio(1, 100_000);
        assert_eq!(verify_control(&b, &raw, &eps_hat).unwrap().count, 3);
        assert_eq!(verify_control(&b, &snapped, &eps_hat).unwrap().count, 4);
    }

    #[test]
    fn plain_control_line() {
        let s = parse_solution("# from a solver\nx_0_0 0.45\nz_3 1\n").unwrap();
        let c = extract_control(&s, 1).unwrap();
        assert_eq!(c.values(), &[ratio(9, 20)]);
        assert_eq!(s.get(&VarName::Z { i: 3 }), Some(&int(1)));
    }

    #[test]
    fn fractional_binary_is_rejected_and_near_binary_snapped() {
        assert!(matches!(parse_solution("z_1 0.4\n"), Err(MilpError::NonIntegralBinary { .. })));
        let s = parse_solution("conf_0_1_1_2_1_1 0.9999995\nv_0_1_2 4e-7\n").unwrap();
        assert_eq!(s.values["conf_0_1_1_2_1_1"], int(1));
        assert_eq!(s.values["v_0_1_2"], int(0));
    }

    #[test]
    fn objective_lines() {
        let s = parse_solution("Objective value: 3.6\nx_0_0 4.5e-01\n").unwrap();
        assert_eq!(s.objective, Some(ratio(18, 5)));
        let highs = "Model status\nOptimal\n\n# Primal solution values\nFeasible\nObjective 3.6\n# Columns 2\nx_0_0 0.45\nz_1 1\n# Rows 1\nstart_1 0.5\n# Dual solution values\nNone\n";
        let s = parse_solution(highs).unwrap();
        assert_eq!(s.values.len(), 2);
        assert_eq!(s.objective, Some(ratio(18, 5)));
        let cbc = "Optimal - objective value 3.60000000\n      0 x_0_0                 0.45                      0\n";
        let s = parse_solution(cbc).unwrap();
        assert_eq!(s.values["x_0_0"], ratio(9, 20));
        let s = parse_solution("Objective 3.6\nobj_const 1\nobj: 3.6\n").unwrap();
        assert_eq!(s.values["obj_const"], int(1));
        assert_eq!(s.objective, Some(ratio(18, 5)));
    }

    #[test]
    fn cplex_xml() {
        let xml = r#"<?xml version="1.0"?>
<CPLEXSolution version="1.2">
 <header problemName="m.lp" objectiveValue="3.6000000000000001"/>
 <variables>
  <variable name="x_0_0" index="0" value="0.45000000000000001"/>
  <variable name="z_1" index="1" value="1"/>
 </variables>
</CPLEXSolution>"#;
        let s = parse_solution(xml).unwrap();
        assert_eq!(s.objective, Some(parse_decimal("3.6000000000000001").unwrap()));
        assert_eq!(s.values["z_1"], int(1));
        assert!(parse_solution("<CPLEXSolution><variable name=\"x\"/></CPLEXSolution>").is_err());
    }

    #[test]
    fn unknown_and_missing_names() {
        let m = build_bc_advanced_model(&benchmark(1), 1, &MilpBuildOptions::default()).unwrap();
        let s = parse_solution("x_0_0 0.45\nfoo 1\n").unwrap();
        assert!(matches!(s.check_names(&m), Err(MilpError::UnknownVariable(n)) if n == "foo"));
        let s = parse_solution("x_0_0 0.45\nx_1_12 0.5\n").unwrap();
        assert!(matches!(s.check_names(&m), Err(MilpError::UnknownVariable(_))));
        assert!(matches!(extract_control(&parse_solution("z_1 1").unwrap(), 1), Err(MilpError::MissingVariable(_))));
    }

    #[test]
    fn control_clamping() {
        let s = parse_solution("x_0_0 -1e-9\nx_1_0 1.0000001\n").unwrap();
        assert_eq!(extract_control(&s, 2).unwrap().values(), &[int(0), int(1)]);
        let s = parse_solution("x_0_0 -0.01\n").unwrap();
        assert!(matches!(extract_control(&s, 1), Err(MilpError::ControlOutOfRange { .. })));
    }

    #[test]
    fn reference_controls_verify() {
        let eps_hat = ratio(1, 100_000);
        let b = benchmark(10);
        let r = verify_control(&b, &ControlSequence::empty(), &eps_hat).unwrap();
        assert_eq!(r.count, 3);
        let c = ControlSequence::new(vec![
            ratio(349_999, 1_000_000),
            ratio(309_999, 800_000),
            ratio(550_001, 1_000_000),
            ratio(122_599_789, 200_000_000),
        ])
        .unwrap();
        let r = verify_control(&b, &c, &eps_hat).unwrap();
        assert_eq!(r.count, 6);
        assert_eq!(r.trajectory.stages(), 4);
        let one = ControlSequence::new(vec![ratio(9, 20)]).unwrap();
        assert_eq!(verify_control(&b, &one, &eps_hat).unwrap().count, 3);
    }

    #[test]
    fn band_detection() {
        let b = benchmark(1);
        // 0.550001 is 3/20 + 10^-6 from voter 5 at 0.4
        let c = ControlSequence::new(vec![ratio(550_001, 1_000_000)]).unwrap();
        let r = verify_control(&b, &c, &ratio(1, 100_000)).unwrap();
        assert!(r
            .band_hits
            .iter()
            .any(|h| h.a == Member::Control && h.b == Member::Voter(5) && h.distance == ratio(150_001, 1_000_000)));
        let clean = ControlSequence::new(vec![ratio(9, 20)]).unwrap();
        assert!(verify_control(&b, &clean, &ratio(1, 100_000)).unwrap().band_hits.is_empty());
    }

    #[test]
    fn control_on_a_voter_acts_like_a_duplicate_voter() {
        // The control sits on voter 4 at every stage; compare with an
        // uncontrolled run in which voter 4 appears twice.
        let b = benchmark(3);
        let eps = b.epsilon().unwrap().clone();
        let mut controls = Vec::new();
        let mut doubled: Vec<Rational> = b.start().opinions().to_vec();
        doubled.insert(3, doubled[3].clone());
        let mut doubled = OpinionProfile::new(doubled).unwrap();
        let mut state = b.start().clone();
        for _ in 0..3 {
            let u = state.voter(4).clone();
            controls.push(u.clone());
            state = bc_step(&state, Some(&u), &eps);
            doubled = bc_step(&doubled, None, &eps);
            let mut expect = doubled.opinions().to_vec();
            expect.remove(3);
            assert_eq!(state.opinions(), expect.as_slice());
        }
        let r = verify_control(&b, &ControlSequence::new(controls).unwrap(), &ratio(1, 100_000)).unwrap();
        assert_eq!(r.trajectory.final_state(), &state);
    }
}
