use num_traits::One;

use super::model::{Domain, ModelBuilder, Sense, VarName};
use super::{MilpError, MilpModel};
use crate::dynamics::Instance;
use crate::numeric::{int, Rational};

/// DeGroot model: maximise the number of voters whose stage-`stages` opinion
/// lies in the conviction interval.
pub fn build_dg_model(instance: &Instance, stages: usize) -> Result<MilpModel, MilpError> {
    let weights = instance.dynamics().weights().ok_or(MilpError::WrongDynamics {
        model: "DeGroot",
        needed: "DeGroot",
    })?;
    if stages == 0 {
        return Err(MilpError::NoStages);
    }
    let n = instance.n();
    let interval = instance.interval();
    let mut b = ModelBuilder::new(format!("dg_{n}_voters_{stages}_stages"));

    for t in 0..stages {
        b.var(VarName::X { t, i: 0 }, Domain::unit(), None);
    }
    for t in 0..=stages {
        for i in 1..=n {
            b.var(VarName::X { t, i }, Domain::unit(), None);
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
    for t in 0..stages {
        for i in 1..=n {
            let mut terms = vec![(b.id(&VarName::X { t: t + 1, i }), int(1))];
            for j in 0..=n {
                terms.push((b.id(&VarName::X { t, i: j }), -weights.weight(i, j)));
            }
            b.row(format!("dyn_{t}_{i}"), terms, Sense::Eq, int(0));
        }
    }
    for i in 1..=n {
        let x = b.id(&VarName::X { t: stages, i });
        let z = b.id(&VarName::Z { i });
        b.vif(format!("conv_left_{i}"), &[z], true, vec![(x, int(1))], Sense::Ge, interval.left.clone());
        b.vif(format!("conv_right_{i}"), &[z], true, vec![(x, int(1))], Sense::Le, interval.right.clone());
    }
    Ok(b.finish())
}
