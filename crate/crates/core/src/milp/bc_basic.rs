use num_traits::One;

use super::model::{Domain, ModelBuilder, Sense, VarName};
use super::{bc_epsilon, MilpBuildOptions, MilpError, MilpModel};
use crate::dynamics::Instance;
use crate::numeric::{int, Rational};

/// Bounded-confidence model with pairwise confidence indicators and
/// count-indexed dynamics. Voters are numbered by sorted start opinion, so
/// `x_t_i <= x_t_j` for `i < j` at every stage.
pub fn build_bc_basic_model(
    instance: &Instance,
    stages: usize,
    options: &MilpBuildOptions,
) -> Result<MilpModel, MilpError> {
    let epsilon = bc_epsilon(instance, options, "basic bounded-confidence")?;
    if stages == 0 {
        return Err(MilpError::NoStages);
    }
    let n = instance.n();
    let interval = instance.interval();
    let exceed = epsilon + &options.eps_hat;
    let prio = |t: usize| Some((stages - t + 1) as u32);
    let mut b = ModelBuilder::new(format!("bc_basic_{n}_voters_{stages}_stages"));

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
            b.var(VarName::L { t, i }, Domain::Binary, prio(t));
            b.var(VarName::R { t, i }, Domain::Binary, prio(t));
            b.var(VarName::C { t, i }, Domain::Binary, prio(t));
        }
        for i in 1..=n {
            for j in i + 1..=n {
                b.var(VarName::V { t, i, j }, Domain::Binary, prio(t));
            }
        }
        for i in 1..=n {
            b.var(
                VarName::K { t, i },
                Domain::Integer {
                    lb: int(1),
                    ub: int(n as i64 + 1),
                },
                prio(t),
            );
            for k in 1..=n + 1 {
                b.var(VarName::Kappa { t, i, k }, Domain::Binary, prio(t));
            }
        }
        for i in 1..=n {
            for j in 0..=n {
                if j != i {
                    b.var(VarName::Xbar { t, j, i }, Domain::unit(), None);
                }
            }
        }
    }
    for i in 1..=n {
        b.var(VarName::Z { i }, Domain::Binary, Some(1));
    }
    b.objective((1..=n).map(|i| (b.id(&VarName::Z { i }), Rational::one())).collect());

    for (i, x) in instance.start().opinions().iter().enumerate() {
        let i = i + 1;
        b.row(format!("start_{i}"), vec![(b.id(&VarName::X { t: 0, i }), int(1))], Sense::Eq, x.clone());
    }
    let x = |b: &ModelBuilder, t: usize, i: usize| b.id(&VarName::X { t, i });
    for t in 0..stages {
        let x0 = x(&b, t, 0);
        for i in 1..=n {
            let xi = x(&b, t, i);
            let (l, r, c) = (
                b.id(&VarName::L { t, i }),
                b.id(&VarName::R { t, i }),
                b.id(&VarName::C { t, i }),
            );
            b.row(format!("ctrl_pos_{t}_{i}"), vec![(l, int(1)), (r, int(1)), (c, int(1))], Sense::Eq, int(1));
            b.vif(format!("ctrl_in_right_{t}_{i}"), &[c], true, vec![(x0, int(1)), (xi, int(-1))], Sense::Le, epsilon.clone());
            b.vif(format!("ctrl_in_left_{t}_{i}"), &[c], true, vec![(xi, int(1)), (x0, int(-1))], Sense::Le, epsilon.clone());
            b.vif(format!("ctrl_out_right_{t}_{i}"), &[r], true, vec![(x0, int(1)), (xi, int(-1))], Sense::Ge, exceed.clone());
            b.vif(format!("ctrl_out_left_{t}_{i}"), &[l], true, vec![(xi, int(1)), (x0, int(-1))], Sense::Ge, exceed.clone());
        }
        for i in 1..=n {
            for j in i + 1..=n {
                let v = b.id(&VarName::V { t, i, j });
                let diff = vec![(x(&b, t, j), int(1)), (x(&b, t, i), int(-1))];
                b.vif(format!("voter_in_{t}_{i}_{j}"), &[v], true, diff.clone(), Sense::Le, epsilon.clone());
                b.vif(format!("voter_out_{t}_{i}_{j}"), &[v], false, diff, Sense::Ge, exceed.clone());
            }
        }
        for i in 1..=n {
            let mut terms = vec![(b.id(&VarName::K { t, i }), int(1)), (b.id(&VarName::C { t, i }), int(-1))];
            for j in (1..=n).filter(|&j| j != i) {
                terms.push((b.id(&VarName::V { t, i: i.min(j), j: i.max(j) }), int(-1)));
            }
            b.row(format!("count_{t}_{i}"), terms, Sense::Eq, int(1));
        }
        for i in 1..=n {
            let c = b.id(&VarName::C { t, i });
            let xb0 = b.id(&VarName::Xbar { t, j: 0, i });
            let link = vec![(xb0, int(1)), (x0, int(-1))];
            b.vif(format!("ctrl_contrib_{t}_{i}"), &[c], true, link, Sense::Eq, int(0));
            b.vif(format!("ctrl_nocontrib_{t}_{i}"), &[c], false, vec![(xb0, int(1))], Sense::Eq, int(0));
            for j in (1..=n).filter(|&j| j != i) {
                let v = b.id(&VarName::V { t, i: i.min(j), j: i.max(j) });
                let xb = b.id(&VarName::Xbar { t, j, i });
                let link = vec![(xb, int(1)), (x(&b, t, j), int(-1))];
                b.vif(format!("voter_contrib_{t}_{j}_{i}"), &[v], true, link, Sense::Eq, int(0));
                b.vif(format!("voter_nocontrib_{t}_{j}_{i}"), &[v], false, vec![(xb, int(1))], Sense::Eq, int(0));
            }
        }
        for i in 1..=n {
            let kappas: Vec<usize> = (1..=n + 1).map(|k| b.id(&VarName::Kappa { t, i, k })).collect();
            b.row(format!("kappa_one_{t}_{i}"), kappas.iter().map(|&v| (v, int(1))).collect(), Sense::Eq, int(1));
            let mut link = vec![(b.id(&VarName::K { t, i }), int(1))];
            link.extend(kappas.iter().enumerate().map(|(k, &v)| (v, -int(k as i64 + 1))));
            b.row(format!("kappa_link_{t}_{i}"), link, Sense::Eq, int(0));
            let mut sum = vec![(x(&b, t, i), int(-1))];
            for j in (0..=n).filter(|&j| j != i) {
                sum.push((b.id(&VarName::Xbar { t, j, i }), int(-1)));
            }
            for (k, &kappa) in kappas.iter().enumerate() {
                let k = k + 1;
                let mut terms = vec![(x(&b, t + 1, i), int(k as i64))];
                terms.extend(sum.iter().cloned());
                b.vif(format!("dyn_{t}_{i}_{k}"), &[kappa], true, terms, Sense::Eq, int(0));
            }
        }
    }
    for i in 1..=n {
        let xn = x(&b, stages, i);
        let z = b.id(&VarName::Z { i });
        b.vif(format!("conv_left_{i}"), &[z], true, vec![(xn, int(1))], Sense::Ge, interval.left.clone());
        b.vif(format!("conv_right_{i}"), &[z], true, vec![(xn, int(1))], Sense::Le, interval.right.clone());
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{benchmark, uniform_degroot_benchmark};
    use crate::numeric::ratio;

    #[test]
    fn sizes_and_big_m() {
        let m = build_bc_basic_model(&benchmark(1), 1, &MilpBuildOptions::default()).unwrap();
        let n = 11;
        let expected_vars = 1 + 2 * n + 3 * n + n * (n - 1) / 2 + n + n * (n + 1) + n * n + n;
        assert_eq!(m.vars.len(), expected_vars);
        assert_eq!(m.num_generals(), n);
        m.check_big_m().unwrap();
    }

    #[test]
    fn dynamics_constant_is_the_confidence_count_bound() {
        let m = build_bc_basic_model(&benchmark(1), 1, &MilpBuildOptions::default()).unwrap();
        let kappa = m.var_index(&VarName::Kappa { t: 0, i: 3, k: 5 }).unwrap();
        let le = m.constraints.iter().find(|c| c.name == "dyn_0_3_5_le").unwrap();
        let ge = m.constraints.iter().find(|c| c.name == "dyn_0_3_5_ge").unwrap();
        let coef = |row: &super::super::Constraint| row.terms.iter().find(|(v, _)| *v == kappa).unwrap().1.clone();
        assert_eq!(coef(le), int(5));
        assert_eq!(coef(ge), int(12));
    }

    #[test]
    fn option_and_dynamics_errors() {
        let wide = MilpBuildOptions::default().with_eps_hat(ratio(3, 20));
        assert!(matches!(build_bc_basic_model(&benchmark(1), 1, &wide), Err(MilpError::EpsHat { .. })));
        assert!(matches!(
            build_bc_basic_model(&uniform_degroot_benchmark(1), 1, &MilpBuildOptions::default()),
            Err(MilpError::WrongDynamics { .. })
        ));
    }
}
