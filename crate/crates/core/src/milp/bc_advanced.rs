use num_traits::{One, Zero};

use super::model::{Domain, ModelBuilder, Sense, Terms, VarName};
use super::{bc_epsilon, MilpBuildOptions, MilpError, MilpModel};
use crate::dynamics::Instance;
use crate::numeric::{format_ratio, int, ratio, Rational};

/// The four control flags `(cl, cr)` in declaration order.
pub(crate) const FLAGS: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// Bounded-confidence model over combinatorial confidence configurations
/// `conf_t_i_jmin_jmax_cl_cr`: voter `i` hears exactly voters `jmin..=jmax`
/// at stage `t`, and the control iff `cl = cr = 1`. The objective is the
/// convinced count plus the perturbation `1 - pen`.
pub fn build_bc_advanced_model(
    instance: &Instance,
    stages: usize,
    options: &MilpBuildOptions,
) -> Result<MilpModel, MilpError> {
    let epsilon = bc_epsilon(instance, options, "advanced bounded-confidence")?;
    if stages == 0 {
        return Err(MilpError::NoStages);
    }
    let interval = instance.interval();
    let (left, right) = (&interval.left, &interval.right);
    if left.is_zero() || right.is_one() {
        return Err(MilpError::PerturbationUndefined {
            left: format_ratio(left),
            right: format_ratio(right),
        });
    }
    let n = instance.n();
    let exceed = epsilon + &options.eps_hat;
    let prio = |t: usize| Some((stages - t + 1) as u32);
    let one = || int(1);
    let mut b = ModelBuilder::new(format!("bc_advanced_{n}_voters_{stages}_stages"));

    for t in 0..stages {
        b.var(VarName::X { t, i: 0 }, Domain::unit(), None);
    }
    for t in 0..=stages {
        for i in 1..=n {
            b.var(VarName::X { t, i }, Domain::unit(), None);
        }
    }
    for t in 0..stages {
        for i in 1..=n {
            for jmin in 1..=i {
                for jmax in i..=n {
                    for (cl, cr) in FLAGS {
                        b.var(VarName::Conf { t, i, jmin, jmax, cl, cr }, Domain::Binary, prio(t));
                    }
                }
            }
        }
        for i in 1..=n {
            for j in i + 1..=n {
                b.var(VarName::S { t, i, j }, Domain::Binary, prio(t));
            }
        }
        for i in 1..=n {
            b.var(VarName::B { t, i }, Domain::Binary, prio(t));
        }
    }
    for jmin in 1..=n {
        for jmax in jmin..=n {
            b.var(VarName::Conv { jmin, jmax }, Domain::Binary, Some(1));
        }
    }
    let right_gap = Rational::one() - right;
    for t in 1..=stages {
        for i in 1..=n {
            b.var(
                VarName::Dl { t, i },
                Domain::Continuous {
                    lb: Rational::zero(),
                    ub: left.clone(),
                },
                None,
            );
            b.var(
                VarName::Dr { t, i },
                Domain::Continuous {
                    lb: Rational::zero(),
                    ub: right_gap.clone(),
                },
                None,
            );
        }
    }
    let pen = b.var(
        VarName::Pen,
        Domain::Continuous {
            lb: Rational::zero(),
            ub: int(2),
        },
        None,
    );
    let obj_const = b.var(
        VarName::ObjConst,
        Domain::Continuous {
            lb: Rational::one(),
            ub: Rational::one(),
        },
        None,
    );

    let mut objective: Terms = Vec::new();
    for jmin in 1..=n {
        for jmax in jmin..=n {
            objective.push((b.id(&VarName::Conv { jmin, jmax }), int((jmax - jmin + 1) as i64)));
        }
    }
    objective.push((obj_const, one()));
    objective.push((pen, int(-1)));
    b.objective(objective);

    for (i, x) in instance.start().opinions().iter().enumerate() {
        let i = i + 1;
        b.row(format!("start_{i}"), vec![(b.id(&VarName::X { t: 0, i }), one())], Sense::Eq, x.clone());
    }

    let x = |b: &ModelBuilder, t: usize, i: usize| b.id(&VarName::X { t, i });
    let conf = |b: &ModelBuilder, t, i, jmin, jmax, (cl, cr): (u8, u8)| b.id(&VarName::Conf { t, i, jmin, jmax, cl, cr });
    // All configuration variables of voter i at stage t accepted by `keep`.
    let confs = |b: &ModelBuilder, t: usize, i: usize, keep: &dyn Fn(usize, usize, u8, u8) -> bool| {
        let mut out = Vec::new();
        for jmin in 1..=i {
            for jmax in i..=n {
                for (cl, cr) in FLAGS {
                    if keep(jmin, jmax, cl, cr) {
                        out.push(conf(b, t, i, jmin, jmax, (cl, cr)));
                    }
                }
            }
        }
        out
    };

    for t in 0..stages {
        let x0 = x(&b, t, 0);
        for i in 1..=n {
            let xi = x(&b, t, i);
            let all = confs(&b, t, i, &|_, _, _, _| true);
            b.row(format!("conf_assign_{t}_{i}"), all.iter().map(|&v| (v, one())).collect(), Sense::Eq, one());

            for jmin in 1..=i {
                let guard = confs(&b, t, i, &|lo, _, _, _| lo == jmin);
                let bound = vec![(xi, one()), (x(&b, t, jmin), int(-1))];
                b.vif(format!("voter_bound_left_{t}_{i}_{jmin}"), &guard, true, bound, Sense::Le, epsilon.clone());
                if jmin > 1 {
                    let gap = vec![(xi, one()), (x(&b, t, jmin - 1), int(-1))];
                    b.vif(format!("voter_exceed_left_{t}_{i}_{jmin}"), &guard, true, gap, Sense::Ge, exceed.clone());
                }
            }
            for jmax in i..=n {
                let guard = confs(&b, t, i, &|_, hi, _, _| hi == jmax);
                let bound = vec![(x(&b, t, jmax), one()), (xi, int(-1))];
                b.vif(format!("voter_bound_right_{t}_{i}_{jmax}"), &guard, true, bound, Sense::Le, epsilon.clone());
                if jmax < n {
                    let gap = vec![(x(&b, t, jmax + 1), one()), (xi, int(-1))];
                    b.vif(format!("voter_exceed_right_{t}_{i}_{jmax}"), &guard, true, gap, Sense::Ge, exceed.clone());
                }
            }

            let ctrl_left = vec![(xi, one()), (x0, int(-1))];
            let ctrl_right = vec![(x0, one()), (xi, int(-1))];
            let g = confs(&b, t, i, &|_, _, cl, _| cl == 1);
            b.vif(format!("ctrl_bound_left_{t}_{i}"), &g, true, ctrl_left.clone(), Sense::Le, epsilon.clone());
            let g = confs(&b, t, i, &|_, _, _, cr| cr == 1);
            b.vif(format!("ctrl_bound_right_{t}_{i}"), &g, true, ctrl_right.clone(), Sense::Le, epsilon.clone());
            let g = confs(&b, t, i, &|_, _, cl, _| cl == 0);
            b.vif(format!("ctrl_exceed_left_{t}_{i}"), &g, true, ctrl_left, Sense::Ge, exceed.clone());
            let g = confs(&b, t, i, &|_, _, _, cr| cr == 0);
            b.vif(format!("ctrl_exceed_right_{t}_{i}"), &g, true, ctrl_right, Sense::Ge, exceed.clone());
        }
    }

    let conv = |b: &ModelBuilder, jmin: usize, jmax: usize| b.id(&VarName::Conv { jmin, jmax });
    let mut assign = Vec::new();
    for jmin in 1..=n {
        for jmax in jmin..=n {
            assign.push((conv(&b, jmin, jmax), one()));
        }
    }
    b.row("conv_assign".into(), assign, Sense::Le, one());
    for jmin in 1..=n {
        let guard: Vec<usize> = (jmin..=n).map(|jmax| conv(&b, jmin, jmax)).collect();
        let xn = x(&b, stages, jmin);
        b.vif(format!("conv_left_{jmin}"), &guard, true, vec![(xn, one())], Sense::Ge, left.clone());
    }
    for jmax in 1..=n {
        let guard: Vec<usize> = (1..=jmax).map(|jmin| conv(&b, jmin, jmax)).collect();
        let xn = x(&b, stages, jmax);
        b.vif(format!("conv_right_{jmax}"), &guard, true, vec![(xn, one())], Sense::Le, right.clone());
    }

    for t in 0..stages {
        for i in 1..=n {
            for jmin in 1..=i {
                for jmax in i..=n {
                    for (cl, cr) in FLAGS {
                        let g = conf(&b, t, i, jmin, jmax, (cl, cr));
                        let heard = (cl * cr) as i64;
                        let size = (jmax - jmin + 1) as i64 + heard;
                        let mut terms = vec![(x(&b, t + 1, i), int(size))];
                        terms.extend((jmin..=jmax).map(|j| (x(&b, t, j), int(-1))));
                        if heard == 1 {
                            terms.push((x(&b, t, 0), int(-1)));
                        }
                        b.vif(format!("dyn_{t}_{i}_{jmin}_{jmax}_{cl}_{cr}"), &[g], true, terms, Sense::Eq, int(0));
                    }
                }
            }
        }
    }

    for t in 1..=stages {
        for i in 1..=n {
            let xi = x(&b, t, i);
            let dl = b.id(&VarName::Dl { t, i });
            let dr = b.id(&VarName::Dr { t, i });
            b.row(format!("dist_left_{t}_{i}"), vec![(dl, one()), (xi, one())], Sense::Ge, left.clone());
            b.row(format!("dist_right_{t}_{i}"), vec![(dr, one()), (xi, int(-1))], Sense::Ge, -right.clone());
        }
    }
    for jmin in 1..=n {
        for jmax in jmin..=n {
            let g = conv(&b, jmin, jmax);
            for i in jmin..=n {
                let dl = b.id(&VarName::Dl { t: stages, i });
                b.vif(format!("dist_left_zero_{jmin}_{jmax}_{i}"), &[g], true, vec![(dl, one())], Sense::Le, int(0));
            }
            for i in 1..=jmax {
                let dr = b.id(&VarName::Dr { t: stages, i });
                b.vif(format!("dist_right_zero_{jmin}_{jmax}_{i}"), &[g], true, vec![(dr, one())], Sense::Le, int(0));
            }
        }
    }

    for t in 0..stages {
        for i in 1..=n {
            for j in i + 1..=n {
                let s = b.id(&VarName::S { t, i, j });
                let mut hears = vec![(s, one())];
                hears.extend(confs(&b, t, i, &|_, hi, _, _| hi >= j).into_iter().map(|v| (v, int(-1))));
                b.row(format!("sym_right_{t}_{i}_{j}"), hears, Sense::Eq, int(0));
                let mut heard = vec![(s, one())];
                heard.extend(confs(&b, t, j, &|lo, _, _, _| lo <= i).into_iter().map(|v| (v, int(-1))));
                b.row(format!("sym_left_{t}_{i}_{j}"), heard, Sense::Eq, int(0));
            }
        }
        for i in 1..=n {
            let mut terms = vec![(b.id(&VarName::B { t, i }), one())];
            terms.extend(confs(&b, t, i, &|_, _, cl, cr| cl == 1 && cr == 1).into_iter().map(|v| (v, int(-1))));
            b.row(format!("ctrl_heard_{t}_{i}"), terms, Sense::Eq, int(0));
        }
    }

    if options.symmetry_break {
        b.row("symmetry_break".into(), vec![(x(&b, 0, 0), one())], Sense::Le, ratio(1, 2));
    }

    for t in 1..=stages {
        for i in 1..=n {
            let step = vec![(x(&b, t, i), one()), (x(&b, t - 1, i), int(-1))];
            let up = ratio((n - i + 1) as i64, (n - i + 2) as i64) * epsilon;
            let down = -(ratio(i as i64, i as i64 + 1) * epsilon);
            b.row(format!("reach_right_{t}_{i}"), step.clone(), Sense::Le, up);
            b.row(format!("reach_left_{t}_{i}"), step, Sense::Ge, down);
        }
        for i in 1..=n {
            for j in i + 1..=n {
                b.row(format!("order_{t}_{i}_{j}"), vec![(x(&b, t, i), one()), (x(&b, t, j), int(-1))], Sense::Le, int(0));
            }
        }
    }

    // stages * n * pen = sum dl / left + sum dr / (1 - right)
    let mut terms = vec![(pen, int((stages * n) as i64))];
    let inv_left = Rational::one() / left;
    let inv_right = Rational::one() / &right_gap;
    for t in 1..=stages {
        for i in 1..=n {
            terms.push((b.id(&VarName::Dl { t, i }), -inv_left.clone()));
            terms.push((b.id(&VarName::Dr { t, i }), -inv_right.clone()));
        }
    }
    b.row("penalty".into(), terms, Sense::Eq, int(0));
    Ok(b.finish())
}
