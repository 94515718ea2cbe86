use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::HeuristicError;
use crate::dynamics::{convinced_count, ControlSequence, Instance, OpinionProfile, Trajectory};
use crate::numeric::{format_ratio, Rational};

/// Target and tolerance for the DeGroot constant-control policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyOptions {
    pub target: Rational,
    pub tolerance: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyOutcome {
    pub trajectory: Trajectory,
    pub stages_used: usize,
    pub stage_bound: u64,
}

fn rational(k: usize) -> Rational {
    Rational::from_integer(BigInt::from(k))
}

/// `ceil((2n + 1) / epsilon) + 2`.
pub fn merge_walk_stage_bound(n: usize, epsilon: &Rational) -> u64 {
    let q = rational(2 * n + 1) / epsilon;
    q.numer().div_ceil(q.denom()).to_u64().expect("bound fits in u64") + 2
}

/// Smallest `t` with `(1 - omega)^t <= delta`, by exact repeated
/// multiplication. Equals `ceil(log delta / log(1 - omega))`.
pub fn constant_control_stage_bound(omega: &Rational, delta: &Rational) -> u64 {
    let base = Rational::one() - omega;
    let mut power = Rational::one();
    let mut t = 0;
    while power > *delta {
        power *= &base;
        t += 1;
    }
    t
}

struct Recorder<'a> {
    instance: &'a Instance,
    states: Vec<OpinionProfile>,
    controls: Vec<Rational>,
}

impl Recorder<'_> {
    fn current(&self) -> &OpinionProfile {
        self.states.last().expect("start state recorded")
    }

    fn apply(&mut self, u: Rational) -> Result<(), HeuristicError> {
        let next = self.instance.step(self.current(), Some(&u))?;
        self.controls.push(u);
        self.states.push(next);
        Ok(())
    }

    fn finish(self, stage_bound: u64) -> Result<PolicyOutcome, HeuristicError> {
        let stages_used = self.controls.len();
        Ok(PolicyOutcome {
            trajectory: Trajectory {
                states: self.states,
                controls: ControlSequence::new(self.controls)?,
            },
            stages_used,
            stage_bound,
        })
    }
}

/// Constructive BC policy that convinces every voter when all start opinions
/// and the interval keep distance `epsilon` from 0 and 1.
///
/// First the control sits `epsilon` right of the leftmost voter until the
/// spread is at most `epsilon`, then at the midpoint, which merges everybody.
/// The merged opinion is then walked towards the interval in steps of
/// `epsilon / (n + 1)` and finally placed exactly on its nearest border. The
/// run stops as soon as everybody is convinced; `instance.horizon()` is
/// ignored.
pub fn merge_walk_policy(instance: &Instance) -> Result<PolicyOutcome, HeuristicError> {
    let eps = instance
        .epsilon()
        .ok_or(HeuristicError::NeedsBoundedConfidence("merge_walk_policy"))?
        .clone();
    let interval = instance.interval();
    let low = eps.clone();
    let high = Rational::one() - &eps;
    let inside = |x: &Rational| low <= *x && *x <= high;
    if let Some(x) = instance.start().opinions().iter().find(|x| !inside(x)) {
        return Err(HeuristicError::Precondition(format!(
            "start opinion {} is closer than epsilon to 0 or 1",
            format_ratio(x)
        )));
    }
    if !inside(&interval.left) || !inside(&interval.right) {
        return Err(HeuristicError::Precondition(
            "conviction interval is closer than epsilon to 0 or 1".into(),
        ));
    }
    let n = instance.n();
    let bound = merge_walk_stage_bound(n, &eps);
    let mut rec = Recorder {
        instance,
        states: vec![instance.start().clone()],
        controls: Vec::new(),
    };
    let all_convinced = |p: &OpinionProfile| convinced_count(p, interval) == n;
    let exceeded = |rec: &Recorder| rec.controls.len() as u64 > bound;

    // Merge everybody into one opinion.
    while !all_convinced(rec.current()) {
        let p = rec.current();
        let (lo, hi) = (p.min().unwrap().clone(), p.max().unwrap().clone());
        if lo == hi {
            break;
        }
        let u = if &hi - &lo > eps {
            &lo + &eps
        } else {
            (&lo + &hi) / rational(2)
        };
        rec.apply(u)?;
        if exceeded(&rec) {
            return Err(HeuristicError::BoundExceeded { bound });
        }
    }

    // Walk the common opinion into the interval.
    let step = &eps / rational(n + 1);
    while !all_convinced(rec.current()) {
        let x = rec.current().opinions()[0].clone();
        let u = if x < interval.left {
            let gap = &interval.left - &x;
            if gap >= step {
                &x + &eps
            } else {
                &x + rational(n + 1) * gap
            }
        } else {
            let gap = &x - &interval.right;
            if gap >= step {
                &x - &eps
            } else {
                &x - rational(n + 1) * gap
            }
        };
        rec.apply(u)?;
        if exceeded(&rec) {
            return Err(HeuristicError::BoundExceeded { bound });
        }
    }
    rec.finish(bound)
}

/// Constant control at `target` for a DeGroot instance, run until every
/// opinion is within `tolerance` of the target. The envelope
/// `|x_i^t - p| <= (1 - omega)^t` is checked exactly at every stage.
pub fn constant_control_policy(instance: &Instance, options: &PolicyOptions) -> Result<PolicyOutcome, HeuristicError> {
    let omega = instance
        .control_influence()
        .ok_or(HeuristicError::NeedsDeGroot("constant_control_policy"))?;
    if omega.is_zero() {
        return Err(HeuristicError::Uncontrollable);
    }
    let tol = &options.tolerance;
    if !tol.is_positive() || *tol >= Rational::one() {
        return Err(HeuristicError::BadTolerance(format_ratio(tol)));
    }
    if !crate::numeric::is_unit(&options.target) {
        return Err(HeuristicError::Precondition(format!(
            "target {} lies outside [0, 1]",
            format_ratio(&options.target)
        )));
    }
    let p = &options.target;
    let bound = constant_control_stage_bound(&omega, tol);
    let base = Rational::one() - &omega;
    let mut envelope = Rational::one();
    let mut rec = Recorder {
        instance,
        states: vec![instance.start().clone()],
        controls: Vec::new(),
    };
    loop {
        let stage = rec.controls.len();
        let state = rec.current();
        if let Some(k) = state.opinions().iter().position(|x| (x - p).abs() > envelope) {
            return Err(HeuristicError::EnvelopeViolated { stage, voter: k + 1 });
        }
        if state.opinions().iter().all(|x| (x - p).abs() <= *tol) {
            break;
        }
        if stage as u64 >= bound {
            return Err(HeuristicError::BoundExceeded { bound });
        }
        rec.apply(p.clone())?;
        envelope *= &base;
    }
    rec.finish(bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ConvictionInterval, Dynamics, WeightMatrix};
    use crate::numeric::{int, ratio};

    fn dg(weights: Vec<Vec<Rational>>, start: Vec<Rational>) -> Instance {
        Instance::new(
            Dynamics::DeGroot {
                weights: WeightMatrix::new(weights).unwrap(),
            },
            start,
            ConvictionInterval::new(ratio(1, 4), ratio(3, 4)).unwrap(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn stage_bounds() {
        assert_eq!(merge_walk_stage_bound(11, &ratio(3, 20)), 156);
        assert_eq!(merge_walk_stage_bound(1, &ratio(1, 3)), 11);
        assert_eq!(constant_control_stage_bound(&ratio(1, 2), &ratio(1, 100)), 7);
        assert_eq!(constant_control_stage_bound(&ratio(1, 2), &ratio(1, 128)), 7);
        assert_eq!(constant_control_stage_bound(&int(1), &ratio(1, 100)), 1);
    }

    #[test]
    fn constant_control_bound_matches_logarithm() {
        for (om, de) in [((1, 12), (1, 100)), ((1, 3), (1, 1000)), ((2, 7), (1, 10))] {
            let t = constant_control_stage_bound(&ratio(om.0, om.1), &ratio(de.0, de.1));
            let real = (de.0 as f64 / de.1 as f64).ln() / (1.0 - om.0 as f64 / om.1 as f64).ln();
            assert_eq!(t, real.ceil() as u64);
        }
    }

    #[test]
    fn already_convinced_needs_no_stage() {
        let inst = Instance::bounded_confidence(ratio(1, 5), vec![ratio(2, 5), ratio(1, 2)], ratio(3, 8), ratio(5, 8), 0)
            .unwrap();
        let out = merge_walk_policy(&inst).unwrap();
        assert_eq!(out.stages_used, 0);
    }

    #[test]
    fn merged_voters_walk_to_the_border() {
        let inst = Instance::bounded_confidence(ratio(1, 5), vec![ratio(1, 5), ratio(1, 4)], ratio(3, 5), ratio(7, 10), 0)
            .unwrap();
        let out = merge_walk_policy(&inst).unwrap();
        let last = out.trajectory.final_state();
        assert_eq!(last.opinions(), &[ratio(3, 5), ratio(3, 5)]);
        assert!(out.stages_used as u64 <= out.stage_bound);
    }

    #[test]
    fn merge_walk_precondition() {
        let inst = Instance::bounded_confidence(ratio(1, 5), vec![ratio(1, 10)], ratio(3, 8), ratio(5, 8), 0).unwrap();
        assert!(matches!(merge_walk_policy(&inst), Err(HeuristicError::Precondition(_))));
    }

    #[test]
    fn worst_case_single_voter_takes_order_one_over_epsilon() {
        // one voter at epsilon, target pinned at 1 - epsilon
        for k in [5i64, 10, 20] {
            let eps = ratio(1, k);
            let right = int(1) - &eps;
            let left = &right - ratio(1, 1000 * k);
            let inst = Instance::bounded_confidence(eps.clone(), vec![eps.clone()], left, right, 0).unwrap();
            let out = merge_walk_policy(&inst).unwrap();
            let stages = out.stages_used as i64;
            assert!(stages >= k - 3 && stages <= 2 * k + 2, "k={k} stages={stages}");
        }
    }

    #[test]
    fn halving_toward_zero() {
        let inst = dg(vec![vec![ratio(1, 2), ratio(1, 2)]], vec![ratio(1, 2)]);
        let out = constant_control_policy(
            &inst,
            &PolicyOptions {
                target: int(0),
                tolerance: ratio(1, 100),
            },
        )
        .unwrap();
        for (t, s) in out.trajectory.states.iter().enumerate() {
            assert_eq!(s.voter(1), &Rational::new(BigInt::one(), BigInt::from(2u32).pow(t as u32 + 1)));
        }
        assert_eq!(out.stages_used, 6);
        assert!(out.stages_used as u64 <= out.stage_bound);
    }

    #[test]
    fn starts_on_target_need_no_stage() {
        let inst = dg(vec![vec![ratio(1, 2), ratio(1, 2)]], vec![ratio(1, 3)]);
        let out = constant_control_policy(
            &inst,
            &PolicyOptions {
                target: ratio(1, 3),
                tolerance: ratio(1, 100),
            },
        )
        .unwrap();
        assert_eq!(out.stages_used, 0);
    }

    #[test]
    fn zero_influence_is_uncontrollable() {
        let inst = dg(vec![vec![int(0), int(1)]], vec![ratio(1, 3)]);
        let opts = PolicyOptions {
            target: int(1),
            tolerance: ratio(1, 10),
        };
        assert!(matches!(constant_control_policy(&inst, &opts), Err(HeuristicError::Uncontrollable)));
    }

    #[test]
    fn taylor_bound_holds_for_uniform_influence() {
        for n in [1usize, 3, 11] {
            let omega = ratio(1, n as i64 + 1);
            let w = WeightMatrix::with_control_weight(n, &omega).unwrap();
            let interval = ConvictionInterval::new(ratio(1, 2), int(1)).unwrap();
            let inst = Instance::new(Dynamics::DeGroot { weights: w }, vec![int(0); n], interval, 0).unwrap();
            let delta = ratio(1, 100);
            let out = constant_control_policy(&inst, &PolicyOptions { target: int(1), tolerance: delta }).unwrap();
            let taylor = -((n + 1) as f64) * (0.01f64).ln();
            assert!((out.stages_used as f64) <= taylor);
        }
    }
}
