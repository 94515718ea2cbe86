use std::collections::HashMap;

use num_traits::{One, Zero};

use super::bc_advanced::FLAGS;
use super::model::VarName;
use super::{check_control_length, MilpError, ModelKind};
use crate::dynamics::{simulate, ControlSequence, Instance};
use crate::numeric::{int, Rational};

fn flag(b: bool) -> Rational {
    if b {
        Rational::one()
    } else {
        Rational::zero()
    }
}

/// The variable values a control induces in the chosen model: states from
/// the exact simulation and indicators from the closed-radius rule. When no
/// distance falls in the safety band the assignment is feasible and its
/// objective is the exact count (DeGroot, basic) or the exact perturbed
/// objective (advanced).
///
/// DeGroot models accept an empty control sequence (the control then sits
/// at 0 and must carry no weight).
pub fn canonical_assignment(
    kind: ModelKind,
    instance: &Instance,
    controls: &ControlSequence,
) -> Result<HashMap<VarName, Rational>, MilpError> {
    let stages = instance.horizon();
    if !(kind == ModelKind::DeGroot && controls.is_empty()) {
        check_control_length(controls, stages)?;
    }
    let trajectory = simulate(instance, controls)?;
    let n = instance.n();
    let interval = instance.interval();
    let x = |t: usize, i: usize| -> Rational {
        if i == 0 {
            controls.get(t).cloned().unwrap_or_else(Rational::zero)
        } else {
            trajectory.states[t].voter(i).clone()
        }
    };
    let mut out = HashMap::new();
    for t in 0..stages {
        out.insert(VarName::X { t, i: 0 }, x(t, 0));
    }
    for t in 0..=stages {
        for i in 1..=n {
            out.insert(VarName::X { t, i }, x(t, i));
        }
    }
    let convinced: Vec<bool> = (1..=n).map(|i| interval.contains(&x(stages, i))).collect();
    if kind == ModelKind::DeGroot || kind == ModelKind::BcBasic {
        for i in 1..=n {
            out.insert(VarName::Z { i }, flag(convinced[i - 1]));
        }
    }
    if kind == ModelKind::DeGroot {
        return Ok(out);
    }
    let epsilon = instance.epsilon().expect("bounded-confidence instance").clone();
    let near = |a: &Rational, b: &Rational| {
        let d = if a > b { a - b } else { b - a };
        d <= epsilon
    };

    match kind {
        ModelKind::BcBasic => {
            for t in 0..stages {
                let x0 = x(t, 0);
                for i in 1..=n {
                    let xi = x(t, i);
                    let c = near(&x0, &xi);
                    out.insert(VarName::C { t, i }, flag(c));
                    out.insert(VarName::R { t, i }, flag(!c && x0 > xi));
                    out.insert(VarName::L { t, i }, flag(!c && x0 < xi));
                    out.insert(VarName::Xbar { t, j: 0, i }, if c { x0.clone() } else { Rational::zero() });
                    let mut k = 1 + usize::from(c);
                    for j in (1..=n).filter(|&j| j != i) {
                        let xj = x(t, j);
                        let v = near(&xi, &xj);
                        k += usize::from(v);
                        if j > i {
                            out.insert(VarName::V { t, i, j }, flag(v));
                        }
                        out.insert(VarName::Xbar { t, j, i }, if v { xj } else { Rational::zero() });
                    }
                    out.insert(VarName::K { t, i }, int(k as i64));
                    for kk in 1..=n + 1 {
                        out.insert(VarName::Kappa { t, i, k: kk }, flag(kk == k));
                    }
                }
            }
        }
        ModelKind::BcAdvanced => {
            let (left, right) = (&interval.left, &interval.right);
            for t in 0..stages {
                let x0 = x(t, 0);
                for i in 1..=n {
                    let xi = x(t, i);
                    let heard: Vec<usize> = (1..=n).filter(|&j| near(&xi, &x(t, j))).collect();
                    let (lo, hi) = (heard[0], *heard.last().expect("a voter hears itself"));
                    let cl = u8::from(x0 >= &xi - &epsilon);
                    let cr = u8::from(x0 <= &xi + &epsilon);
                    for jmin in 1..=i {
                        for jmax in i..=n {
                            for (a, b) in FLAGS {
                                let on = (jmin, jmax, a, b) == (lo, hi, cl, cr);
                                out.insert(VarName::Conf { t, i, jmin, jmax, cl: a, cr: b }, flag(on));
                            }
                        }
                    }
                    for j in i + 1..=n {
                        out.insert(VarName::S { t, i, j }, flag(hi >= j));
                    }
                    out.insert(VarName::B { t, i }, flag(cl == 1 && cr == 1));
                }
            }
            let inside: Vec<usize> = (1..=n).filter(|&i| convinced[i - 1]).collect();
            for jmin in 1..=n {
                for jmax in jmin..=n {
                    let on = inside.first() == Some(&jmin) && inside.last() == Some(&jmax);
                    out.insert(VarName::Conv { jmin, jmax }, flag(on));
                }
            }
            let mut left_total = Rational::zero();
            let mut right_total = Rational::zero();
            for t in 1..=stages {
                for i in 1..=n {
                    let (dl, dr) = interval.gaps(&x(t, i));
                    left_total += &dl;
                    right_total += &dr;
                    out.insert(VarName::Dl { t, i }, dl);
                    out.insert(VarName::Dr { t, i }, dr);
                }
            }
            let scale = int((stages * n) as i64);
            let pen = left_total / (&scale * left) + right_total / (&scale * (Rational::one() - right));
            out.insert(VarName::Pen, pen);
            out.insert(VarName::ObjConst, Rational::one());
        }
        ModelKind::DeGroot => unreachable!(),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{convinced_count, perturbed_objective};
    use crate::instances::{benchmark, uniform_degroot_benchmark};
    use crate::milp::{build_model, MilpBuildOptions};
    use crate::numeric::ratio;

    fn check(kind: ModelKind, instance: &Instance, controls: &ControlSequence) -> Rational {
        let options = MilpBuildOptions::default();
        let model = build_model(kind, instance, instance.horizon(), &options).unwrap();
        let values = canonical_assignment(kind, instance, controls).unwrap();
        assert_eq!(values.len(), model.vars.len());
        let vector = model.assignment_vector(&values).unwrap();
        let violations = model.check_assignment(&vector);
        assert!(violations.is_empty(), "{kind}: {}", violations[0]);
        model.objective_value(&vector)
    }

    #[test]
    fn uniform_degroot_reaches_everyone() {
        let inst = uniform_degroot_benchmark(1);
        assert_eq!(check(ModelKind::DeGroot, &inst, &ControlSequence::empty()), int(11));
    }

    #[test]
    fn benchmark_controls_embed_in_both_models() {
        let inst = benchmark(2);
        let controls = ControlSequence::new(vec![ratio(9, 20), ratio(11, 20)]).unwrap();
        let traj = simulate(&inst, &controls).unwrap();
        let count = convinced_count(traj.final_state(), inst.interval());
        assert_eq!(check(ModelKind::BcBasic, &inst, &controls), int(count as i64));
        assert_eq!(
            check(ModelKind::BcAdvanced, &inst, &controls),
            perturbed_objective(&traj, &inst).unwrap()
        );
    }
}
