//! Controlled bounded-confidence and DeGroot dynamics in exact arithmetic.
//!
//! Voters are addressed by 1-based indices; index 0 is reserved for the
//! controller. Instances keep their start opinions sorted, so by the
//! order-preservation property of bounded-confidence updates every state of a
//! BC trajectory is sorted as well.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{format_ratio, is_unit, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DynamicsError {
    #[error("opinion {value} of voter {voter} lies outside [0, 1]")]
    OpinionOutOfRange { voter: usize, value: String },
    #[error("control {value} at stage {stage} lies outside [0, 1]")]
    ControlOutOfRange { stage: usize, value: String },
    #[error("voter index {index} out of range 1..={n}")]
    VoterOutOfRange { index: usize, n: usize },
    #[error("instance needs at least one voter")]
    NoVoters,
    #[error("confidence radius {0} must lie in (0, 1)")]
    EpsilonOutOfRange(String),
    #[error("conviction interval [{left}, {right}] must satisfy 0 <= left < right <= 1")]
    BadInterval { left: String, right: String },
    #[error("weight matrix must be {n} x {cols}, found row {row} with {found} entries")]
    WeightShape {
        n: usize,
        cols: usize,
        row: usize,
        found: usize,
    },
    #[error("weight row {row} sums to {sum}, expected exactly 1")]
    WeightRowSum { row: usize, sum: String },
    #[error("negative weight in row {row}")]
    NegativeWeight { row: usize },
    #[error("DeGroot step without a control requires zero control weights, voter {row} has {weight}")]
    ControlRequired { row: usize, weight: String },
    #[error("control sequence has {found} entries, expected 0 or {horizon}")]
    ControlLength { found: usize, horizon: usize },
    #[error("perturbed objective needs 0 < left and right < 1 (interval is [{left}, {right}])")]
    UndefinedPerturbation { left: String, right: String },
    #[error("perturbed objective needs a bounded-confidence instance")]
    NotBoundedConfidence,
    #[error("perturbed objective needs at least one stage")]
    NoStages,
}

/// Opinions of voters `1..=n` at one stage, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OpinionProfile(Vec<Rational>);

impl OpinionProfile {
    pub fn new(opinions: Vec<Rational>) -> Result<Self, DynamicsError> {
        for (k, v) in opinions.iter().enumerate() {
            if !is_unit(v) {
                return Err(DynamicsError::OpinionOutOfRange {
                    voter: k + 1,
                    value: format_ratio(v),
                });
            }
        }
        Ok(Self(opinions))
    }

    pub fn opinions(&self) -> &[Rational] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Rational> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Opinion of 1-based voter `i`.
    pub fn voter(&self, i: usize) -> &Rational {
        &self.0[i - 1]
    }

    pub fn is_sorted(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn min(&self) -> Option<&Rational> {
        self.0.iter().min()
    }

    pub fn max(&self) -> Option<&Rational> {
        self.0.iter().max()
    }
}

/// Row-stochastic influence weights, `n` rows by `n + 1` columns. Column 0 is
/// the weight a voter gives the controller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightMatrix {
    #[serde(with = "weights_serde")]
    rows: Vec<Vec<Rational>>,
}

mod weights_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(rows: &[Vec<Rational>], s: S) -> Result<S::Ok, S::Error> {
        let text: Vec<Vec<String>> = rows
            .iter()
            .map(|r| r.iter().map(format_ratio).collect())
            .collect();
        text.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Rational>>, D::Error> {
        use serde::de::Error as _;
        let text = Vec::<Vec<String>>::deserialize(d)?;
        text.iter()
            .map(|row| {
                row.iter()
                    .map(|t| crate::numeric::parse_rational(t).map_err(D::Error::custom))
                    .collect()
            })
            .collect()
    }
}

impl WeightMatrix {
    pub fn new(rows: Vec<Vec<Rational>>) -> Result<Self, DynamicsError> {
        let n = rows.len();
        for (k, row) in rows.iter().enumerate() {
            if row.len() != n + 1 {
                return Err(DynamicsError::WeightShape {
                    n,
                    cols: n + 1,
                    row: k + 1,
                    found: row.len(),
                });
            }
            if row.iter().any(|w| w.is_negative()) {
                return Err(DynamicsError::NegativeWeight { row: k + 1 });
            }
            let sum: Rational = row.iter().sum();
            if !sum.is_one() {
                return Err(DynamicsError::WeightRowSum {
                    row: k + 1,
                    sum: format_ratio(&sum),
                });
            }
        }
        Ok(Self { rows })
    }

    /// Every voter weighs every voter equally and ignores the controller.
    pub fn uniform_voters(n: usize) -> Self {
        let w = Rational::new(BigInt::one(), BigInt::from(n));
        let rows = (0..n)
            .map(|_| {
                let mut row = vec![w.clone(); n + 1];
                row[0] = Rational::zero();
                row
            })
            .collect();
        Self { rows }
    }

    /// Voter `i` weighs the controller by `control_weight` and spreads the
    /// rest evenly over all voters.
    pub fn with_control_weight(n: usize, control_weight: &Rational) -> Result<Self, DynamicsError> {
        let rest = (Rational::one() - control_weight) / Rational::from_integer(BigInt::from(n));
        let rows = (0..n)
            .map(|_| {
                let mut row = vec![rest.clone(); n + 1];
                row[0] = control_weight.clone();
                row
            })
            .collect();
        Self::new(rows)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.rows
    }

    /// Weight voter `i` (1-based) gives agent `j` (0 = control).
    pub fn weight(&self, i: usize, j: usize) -> &Rational {
        &self.rows[i - 1][j]
    }

    /// The smallest control weight over all voters.
    pub fn min_control_weight(&self) -> Rational {
        self.rows
            .iter()
            .map(|r| r[0].clone())
            .min()
            .unwrap_or_else(Rational::zero)
    }

    fn permuted(&self, order: &[usize]) -> Self {
        let rows = order
            .iter()
            .map(|&old| {
                let row = &self.rows[old];
                let mut new_row = Vec::with_capacity(row.len());
                new_row.push(row[0].clone());
                new_row.extend(order.iter().map(|&c| row[c + 1].clone()));
                new_row
            })
            .collect();
        Self { rows }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dynamics {
    BoundedConfidence { epsilon: Rational },
    DeGroot { weights: WeightMatrix },
}

impl Dynamics {
    pub fn epsilon(&self) -> Option<&Rational> {
        match self {
            Dynamics::BoundedConfidence { epsilon } => Some(epsilon),
            Dynamics::DeGroot { .. } => None,
        }
    }

    pub fn weights(&self) -> Option<&WeightMatrix> {
        match self {
            Dynamics::DeGroot { weights } => Some(weights),
            Dynamics::BoundedConfidence { .. } => None,
        }
    }
}

/// The target interval `[left, right]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvictionInterval {
    pub left: Rational,
    pub right: Rational,
}

impl ConvictionInterval {
    pub fn new(left: Rational, right: Rational) -> Result<Self, DynamicsError> {
        if left.is_negative() || left >= right || right > Rational::one() {
            return Err(DynamicsError::BadInterval {
                left: format_ratio(&left),
                right: format_ratio(&right),
            });
        }
        Ok(Self { left, right })
    }

    pub fn contains(&self, x: &Rational) -> bool {
        self.left <= *x && *x <= self.right
    }

    pub fn center(&self) -> Rational {
        (&self.left + &self.right) / Rational::from_integer(BigInt::from(2))
    }

    pub fn width(&self) -> Rational {
        &self.right - &self.left
    }

    /// Distance from `x` to the interval, split into (left gap, right gap).
    pub fn gaps(&self, x: &Rational) -> (Rational, Rational) {
        let left = if *x < self.left {
            &self.left - x
        } else {
            Rational::zero()
        };
        let right = if *x > self.right {
            x - &self.right
        } else {
            Rational::zero()
        };
        (left, right)
    }
}

/// A control problem: dynamics, sorted start opinions, conviction interval
/// and horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    dynamics: Dynamics,
    start: OpinionProfile,
    interval: ConvictionInterval,
    horizon: usize,
}

impl Instance {
    /// Validates the data and sorts the voters by start opinion (permuting
    /// DeGroot weights consistently).
    pub fn new(
        dynamics: Dynamics,
        start: Vec<Rational>,
        interval: ConvictionInterval,
        horizon: usize,
    ) -> Result<Self, DynamicsError> {
        if start.is_empty() {
            return Err(DynamicsError::NoVoters);
        }
        let start = OpinionProfile::new(start)?;
        let n = start.len();
        match &dynamics {
            Dynamics::BoundedConfidence { epsilon } => {
                if !epsilon.is_positive() || *epsilon >= Rational::one() {
                    return Err(DynamicsError::EpsilonOutOfRange(format_ratio(epsilon)));
                }
            }
            Dynamics::DeGroot { weights } => {
                if weights.n() != n {
                    return Err(DynamicsError::WeightShape {
                        n,
                        cols: n + 1,
                        row: 0,
                        found: weights.n(),
                    });
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| start.0[a].cmp(&start.0[b]));
        let (start, dynamics) = if order.iter().enumerate().all(|(k, &o)| k == o) {
            (start, dynamics)
        } else {
            let sorted = order.iter().map(|&k| start.0[k].clone()).collect();
            let dynamics = match dynamics {
                Dynamics::DeGroot { weights } => Dynamics::DeGroot {
                    weights: weights.permuted(&order),
                },
                bc => bc,
            };
            (OpinionProfile(sorted), dynamics)
        };
        Ok(Self {
            dynamics,
            start,
            interval,
            horizon,
        })
    }

    pub fn bounded_confidence(
        epsilon: Rational,
        start: Vec<Rational>,
        left: Rational,
        right: Rational,
        horizon: usize,
    ) -> Result<Self, DynamicsError> {
        Self::new(
            Dynamics::BoundedConfidence { epsilon },
            start,
            ConvictionInterval::new(left, right)?,
            horizon,
        )
    }

    pub fn n(&self) -> usize {
        self.start.len()
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn epsilon(&self) -> Option<&Rational> {
        self.dynamics.epsilon()
    }

    pub fn start(&self) -> &OpinionProfile {
        &self.start
    }

    pub fn interval(&self) -> &ConvictionInterval {
        &self.interval
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `min_i w_i0` for DeGroot instances.
    pub fn control_influence(&self) -> Option<Rational> {
        self.dynamics.weights().map(WeightMatrix::min_control_weight)
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    /// Same dynamics and interval, started from `profile` (which must be
    /// sorted, as every reachable BC state is).
    pub fn restarted(&self, profile: OpinionProfile, horizon: usize) -> Self {
        debug_assert_eq!(profile.len(), self.n());
        Self {
            dynamics: self.dynamics.clone(),
            start: profile,
            interval: self.interval.clone(),
            horizon,
        }
    }

    /// Applies one stage of the instance dynamics.
    pub fn step(&self, profile: &OpinionProfile, control: Option<&Rational>) -> Result<OpinionProfile, DynamicsError> {
        match &self.dynamics {
            Dynamics::BoundedConfidence { epsilon } => Ok(bc_step(profile, control, epsilon)),
            Dynamics::DeGroot { weights } => dg_step(profile, control, weights),
        }
    }
}

/// Controller opinions, one per stage. Empty means an uncontrolled run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ControlSequence(Vec<Rational>);

impl ControlSequence {
    pub fn new(controls: Vec<Rational>) -> Result<Self, DynamicsError> {
        for (t, u) in controls.iter().enumerate() {
            if !is_unit(u) {
                return Err(DynamicsError::ControlOutOfRange {
                    stage: t,
                    value: format_ratio(u),
                });
            }
        }
        Ok(Self(controls))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn values(&self) -> &[Rational] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, stage: usize) -> Option<&Rational> {
        self.0.get(stage)
    }
}

/// States `0..=N` and the controls that produced them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub states: Vec<OpinionProfile>,
    pub controls: ControlSequence,
}

impl Trajectory {
    pub fn stages(&self) -> usize {
        self.states.len() - 1
    }

    pub fn final_state(&self) -> &OpinionProfile {
        self.states.last().expect("trajectory has at least the start state")
    }

    pub fn control_at(&self, stage: usize) -> Option<&Rational> {
        self.controls.get(stage)
    }
}

/// A member of a confidence set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Member {
    Control,
    Voter(usize),
}

impl fmt::Display for Member {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Member::Control => f.write_str("control"),
            Member::Voter(i) => write!(f, "{i}"),
        }
    }
}

/// Everyone within closed distance `epsilon` of voter `i` (1-based).
pub fn confidence_set(
    profile: &OpinionProfile,
    control: Option<&Rational>,
    i: usize,
    epsilon: &Rational,
) -> Result<BTreeSet<Member>, DynamicsError> {
    let n = profile.len();
    if i == 0 || i > n {
        return Err(DynamicsError::VoterOutOfRange { index: i, n });
    }
    let xi = profile.voter(i);
    let within = |y: &Rational| (y - xi).abs() <= *epsilon;
    let mut set: BTreeSet<Member> = profile
        .opinions()
        .iter()
        .enumerate()
        .filter(|(_, y)| within(y))
        .map(|(k, _)| Member::Voter(k + 1))
        .collect();
    if let Some(u) = control {
        if within(u) {
            set.insert(Member::Control);
        }
    }
    Ok(set)
}

/// One bounded-confidence update: every voter moves to the mean of its
/// confidence set, the control included when in reach.
pub fn bc_step(profile: &OpinionProfile, control: Option<&Rational>, epsilon: &Rational) -> OpinionProfile {
    let values = profile.opinions();
    if profile.is_sorted() {
        return OpinionProfile(bc_step_sorted(values, control, epsilon));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].cmp(&values[b]));
    let sorted: Vec<Rational> = order.iter().map(|&k| values[k].clone()).collect();
    let next_sorted = bc_step_sorted(&sorted, control, epsilon);
    let mut next = vec![Rational::zero(); values.len()];
    for (pos, &k) in order.iter().enumerate() {
        next[k] = next_sorted[pos].clone();
    }
    OpinionProfile(next)
}

/// BC update on a sorted slice. Confidence sets of sorted opinions are
/// contiguous windows, found with two monotone pointers; window sums come
/// from prefix sums.
pub(crate) fn bc_step_sorted(values: &[Rational], control: Option<&Rational>, epsilon: &Rational) -> Vec<Rational> {
    let n = values.len();
    let reach: Vec<Rational> = values.iter().map(|v| v + epsilon).collect();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(Rational::zero());
    for v in values {
        let next = prefix.last().unwrap() + v;
        prefix.push(next);
    }
    let control_reach = control.map(|u| (u, u + epsilon));
    let mut out: Vec<Rational> = Vec::with_capacity(n);
    let mut lo = 0;
    let mut hi = 0;
    for p in 0..n {
        if p > 0 && values[p] == values[p - 1] {
            let same = out[p - 1].clone();
            out.push(same);
            continue;
        }
        // values[p] - values[lo] > eps  <=>  values[lo] + eps < values[p]
        while reach[lo] < values[p] {
            lo += 1;
        }
        if hi < p {
            hi = p;
        }
        while hi + 1 < n && values[hi + 1] <= reach[p] {
            hi += 1;
        }
        let mut sum = &prefix[hi + 1] - &prefix[lo];
        let mut count = (hi + 1 - lo) as i64;
        if let Some((u, u_reach)) = &control_reach {
            if *u <= &reach[p] && values[p] <= *u_reach {
                sum += *u;
                count += 1;
            }
        }
        out.push(sum / Rational::from_integer(BigInt::from(count)));
    }
    out
}

/// Convinced counts one BC step ahead of a fixed sorted profile, for any
/// number of candidate controls. Each distinct opinion is reduced to the
/// range of controls it can see and the range of controls that would land it
/// in the interval, so scoring a control only compares rationals.
pub(crate) struct NextCountOracle {
    groups: Vec<Outlook>,
}

struct Outlook {
    multiplicity: usize,
    sees_from: Rational,
    sees_to: Rational,
    convinced_alone: bool,
    lands_from: Rational,
    lands_to: Rational,
}

impl NextCountOracle {
    pub(crate) fn new(values: &[Rational], epsilon: &Rational, interval: &ConvictionInterval) -> Self {
        let n = values.len();
        let reach: Vec<Rational> = values.iter().map(|v| v + epsilon).collect();
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(Rational::zero());
        for v in values {
            let next = prefix.last().unwrap() + v;
            prefix.push(next);
        }
        let mut groups: Vec<Outlook> = Vec::new();
        let (mut lo, mut hi) = (0, 0);
        for p in 0..n {
            if p > 0 && values[p] == values[p - 1] {
                groups.last_mut().unwrap().multiplicity += 1;
                continue;
            }
            while reach[lo] < values[p] {
                lo += 1;
            }
            if hi < p {
                hi = p;
            }
            while hi + 1 < n && values[hi + 1] <= reach[p] {
                hi += 1;
            }
            let sum = &prefix[hi + 1] - &prefix[lo];
            let k = Rational::from_integer(BigInt::from(hi + 1 - lo));
            let k1 = &k + Rational::one();
            groups.push(Outlook {
                multiplicity: 1,
                sees_from: &values[p] - epsilon,
                sees_to: reach[p].clone(),
                convinced_alone: &interval.left * &k <= sum && sum <= &interval.right * &k,
                lands_from: &interval.left * &k1 - &sum,
                lands_to: &interval.right * &k1 - &sum,
            });
        }
        Self { groups }
    }

    pub(crate) fn count(&self, control: &Rational) -> usize {
        self.groups
            .iter()
            .filter(|g| {
                if g.sees_from <= *control && *control <= g.sees_to {
                    g.lands_from <= *control && *control <= g.lands_to
                } else {
                    g.convinced_alone
                }
            })
            .map(|g| g.multiplicity)
            .sum()
    }
}

/// One DeGroot update `x_i' = sum_j w_ij x_j` with `x_0` the control.
pub fn dg_step(
    profile: &OpinionProfile,
    control: Option<&Rational>,
    weights: &WeightMatrix,
) -> Result<OpinionProfile, DynamicsError> {
    let n = profile.len();
    if weights.n() != n {
        return Err(DynamicsError::WeightShape {
            n,
            cols: n + 1,
            row: 0,
            found: weights.n(),
        });
    }
    let mut next = Vec::with_capacity(n);
    for (k, row) in weights.rows().iter().enumerate() {
        let sum: Rational = row.iter().sum();
        if !sum.is_one() {
            return Err(DynamicsError::WeightRowSum {
                row: k + 1,
                sum: format_ratio(&sum),
            });
        }
        let mut acc = match control {
            Some(u) => &row[0] * u,
            None if row[0].is_zero() => Rational::zero(),
            None => {
                return Err(DynamicsError::ControlRequired {
                    row: k + 1,
                    weight: format_ratio(&row[0]),
                })
            }
        };
        for (w, x) in row[1..].iter().zip(profile.opinions()) {
            if !w.is_zero() {
                acc += w * x;
            }
        }
        next.push(acc);
    }
    Ok(OpinionProfile(next))
}

/// Runs the instance dynamics for `instance.horizon()` stages. An empty
/// control sequence runs the system uncontrolled.
pub fn simulate(instance: &Instance, controls: &ControlSequence) -> Result<Trajectory, DynamicsError> {
    let horizon = instance.horizon();
    if !controls.is_empty() && controls.len() != horizon {
        return Err(DynamicsError::ControlLength {
            found: controls.len(),
            horizon,
        });
    }
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(instance.start().clone());
    for t in 0..horizon {
        let next = instance.step(&states[t], controls.get(t))?;
        states.push(next);
    }
    Ok(Trajectory {
        states,
        controls: controls.clone(),
    })
}

/// 1-based indices of voters inside the closed interval.
pub fn conviction_set(profile: &OpinionProfile, interval: &ConvictionInterval) -> Vec<usize> {
    profile
        .opinions()
        .iter()
        .enumerate()
        .filter(|(_, x)| interval.contains(x))
        .map(|(k, _)| k + 1)
        .collect()
}

pub fn convinced_count(profile: &OpinionProfile, interval: &ConvictionInterval) -> usize {
    profile.opinions().iter().filter(|x| interval.contains(x)).count()
}

/// Convinced count at the final stage plus one, minus the normalised average
/// distance of voters to the interval over stages `1..=N`. The fractional
/// part lies in `[0, 1]`.
pub fn perturbed_objective(trajectory: &Trajectory, instance: &Instance) -> Result<Rational, DynamicsError> {
    if instance.epsilon().is_none() {
        return Err(DynamicsError::NotBoundedConfidence);
    }
    let stages = trajectory.stages();
    if stages == 0 {
        return Err(DynamicsError::NoStages);
    }
    let interval = instance.interval();
    let one = Rational::one();
    if interval.left.is_zero() || interval.right == one {
        return Err(DynamicsError::UndefinedPerturbation {
            left: format_ratio(&interval.left),
            right: format_ratio(&interval.right),
        });
    }
    let mut left_total = Rational::zero();
    let mut right_total = Rational::zero();
    for state in &trajectory.states[1..] {
        for x in state.opinions() {
            let (l, r) = interval.gaps(x);
            left_total += l;
            right_total += r;
        }
    }
    let n = Rational::from_integer(BigInt::from(instance.n()));
    let n_stages = Rational::from_integer(BigInt::from(stages));
    let penalty = left_total / (&n_stages * &interval.left * &n)
        + right_total / (&n_stages * (&one - &interval.right) * &n);
    let count = convinced_count(trajectory.final_state(), interval);
    Ok(Rational::from_integer(BigInt::from(count)) + one - penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{int, parse_decimal, ratio};

    fn tenths() -> OpinionProfile {
        OpinionProfile::new((0..=10).map(|k| ratio(k, 10)).collect()).unwrap()
    }

    fn profile(values: &[(i64, i64)]) -> OpinionProfile {
        OpinionProfile::new(values.iter().map(|&(p, q)| ratio(p, q)).collect()).unwrap()
    }

    #[test]
    fn confidence_set_of_benchmark_voter() {
        let set = confidence_set(&tenths(), Some(&ratio(45, 100)), 5, &ratio(3, 20)).unwrap();
        let expected: BTreeSet<Member> = [Member::Voter(4), Member::Voter(5), Member::Voter(6), Member::Control]
            .into_iter()
            .collect();
        assert_eq!(set, expected);
    }

    #[test]
    fn confidence_set_single_voter() {
        let p = profile(&[(1, 3)]);
        let set = confidence_set(&p, None, 1, &ratio(1, 10)).unwrap();
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec![Member::Voter(1)]);
    }

    #[test]
    fn boundary_distance_counts_as_inside() {
        let p = profile(&[(0, 1), (1, 5), (2, 5)]);
        let set = confidence_set(&p, None, 2, &ratio(1, 5)).unwrap();
        assert_eq!(set.len(), 3);
        // the exact check the six-voter example hinges on
        let d = parse_decimal("0.6").unwrap() - parse_decimal("0.4").unwrap();
        assert!(d <= parse_decimal("0.2").unwrap());
    }

    #[test]
    fn confidence_set_rejects_bad_index() {
        assert!(confidence_set(&tenths(), None, 0, &ratio(1, 10)).is_err());
        assert!(confidence_set(&tenths(), None, 12, &ratio(1, 10)).is_err());
    }

    #[test]
    fn bc_step_six_voters() {
        let p = profile(&[(0, 1), (1, 5), (2, 5), (3, 5), (4, 5), (1, 1)]);
        let next = bc_step(&p, None, &ratio(1, 5));
        assert_eq!(next, profile(&[(1, 10), (1, 5), (2, 5), (3, 5), (4, 5), (9, 10)]));
    }

    #[test]
    fn bc_step_all_equal_is_fixed() {
        let p = profile(&[(1, 3), (1, 3), (1, 3)]);
        assert_eq!(bc_step(&p, None, &ratio(1, 10)), p);
    }

    #[test]
    fn bc_step_with_control() {
        let next = bc_step(&tenths(), Some(&ratio(9, 20)), &ratio(3, 20));
        assert_eq!(next.voter(5), &ratio(33, 80));
    }

    #[test]
    fn bc_step_unsorted_matches_sorted() {
        let p = profile(&[(4, 5), (0, 1), (2, 5), (1, 5), (1, 1), (3, 5)]);
        let next = bc_step(&p, Some(&ratio(1, 2)), &ratio(1, 5));
        let q = profile(&[(0, 1), (1, 5), (2, 5), (3, 5), (4, 5), (1, 1)]);
        let sorted_next = bc_step(&q, Some(&ratio(1, 2)), &ratio(1, 5));
        assert_eq!(next.voter(1), sorted_next.voter(5));
        assert_eq!(next.voter(2), sorted_next.voter(1));
        assert_eq!(next.voter(5), sorted_next.voter(6));
    }

    #[test]
    fn dg_uniform_weights_reach_mean() {
        let w = WeightMatrix::uniform_voters(11);
        let next = dg_step(&tenths(), None, &w).unwrap();
        assert!(next.opinions().iter().all(|x| *x == ratio(1, 2)));
    }

    #[test]
    fn dg_convex_combination() {
        let w = WeightMatrix::new(vec![
            vec![ratio(1, 2), ratio(1, 2), int(0)],
            vec![ratio(1, 2), int(0), ratio(1, 2)],
        ])
        .unwrap();
        let next = dg_step(&profile(&[(0, 1), (0, 1)]), Some(&int(1)), &w).unwrap();
        assert_eq!(next, profile(&[(1, 2), (1, 2)]));
    }

    #[test]
    fn dg_halving_toward_control() {
        let w = WeightMatrix::new(vec![vec![ratio(1, 2), ratio(1, 2)]]).unwrap();
        let mut p = profile(&[(1, 2)]);
        for t in 1..=8 {
            p = dg_step(&p, Some(&int(0)), &w).unwrap();
            assert_eq!(p.voter(1), &Rational::new(BigInt::one(), BigInt::from(2).pow(t + 1)));
        }
    }

    #[test]
    fn dg_rejects_missing_control_and_bad_rows() {
        let w = WeightMatrix::new(vec![vec![ratio(1, 2), ratio(1, 2)]]).unwrap();
        assert!(matches!(
            dg_step(&profile(&[(1, 2)]), None, &w),
            Err(DynamicsError::ControlRequired { .. })
        ));
        assert!(matches!(
            WeightMatrix::new(vec![vec![ratio(1, 2), ratio(1, 3)]]),
            Err(DynamicsError::WeightRowSum { row: 1, .. })
        ));
    }

    #[test]
    fn instance_sorts_and_permutes_weights() {
        let w = WeightMatrix::new(vec![
            vec![int(0), int(1), int(0)],
            vec![ratio(1, 2), int(0), ratio(1, 2)],
        ])
        .unwrap();
        let interval = ConvictionInterval::new(ratio(1, 4), ratio(3, 4)).unwrap();
        let inst = Instance::new(Dynamics::DeGroot { weights: w }, vec![ratio(9, 10), ratio(1, 10)], interval, 1).unwrap();
        assert_eq!(inst.start(), &profile(&[(1, 10), (9, 10)]));
        let w = inst.dynamics().weights().unwrap();
        // old voter 2 (opinion 1/10) is new voter 1 and listens to itself and control
        assert_eq!(w.rows()[0], vec![ratio(1, 2), ratio(1, 2), int(0)]);
        assert_eq!(w.rows()[1], vec![int(0), int(0), int(1)]);
    }

    #[test]
    fn conviction_boundaries_inclusive() {
        let interval = ConvictionInterval::new(ratio(3, 8), ratio(5, 8)).unwrap();
        assert_eq!(conviction_set(&tenths(), &interval), vec![5, 6, 7]);
        assert!(interval.contains(&ratio(3, 8)));
        let all_half = profile(&[(1, 2), (1, 2), (1, 2)]);
        assert_eq!(convinced_count(&all_half, &interval), 3);
    }

    #[test]
    fn perturbed_objective_one_stage() {
        let inst = Instance::bounded_confidence(
            ratio(3, 20),
            tenths().into_inner(),
            ratio(3, 8),
            ratio(5, 8),
            1,
        )
        .unwrap();
        let traj = simulate(&inst, &ControlSequence::new(vec![ratio(9, 20)]).unwrap()).unwrap();
        assert_eq!(perturbed_objective(&traj, &inst).unwrap(), int(3) + ratio(197, 330));
    }

    #[test]
    fn perturbed_objective_all_inside() {
        let inst = Instance::bounded_confidence(ratio(1, 5), vec![ratio(1, 2); 3], ratio(1, 4), ratio(3, 4), 2).unwrap();
        let traj = simulate(&inst, &ControlSequence::empty()).unwrap();
        assert_eq!(perturbed_objective(&traj, &inst).unwrap(), int(4));
    }

    #[test]
    fn perturbed_objective_errors() {
        let inst = Instance::bounded_confidence(ratio(1, 5), vec![ratio(1, 2)], int(0), ratio(3, 4), 1).unwrap();
        let traj = simulate(&inst, &ControlSequence::empty()).unwrap();
        assert!(matches!(
            perturbed_objective(&traj, &inst),
            Err(DynamicsError::UndefinedPerturbation { .. })
        ));
    }

    #[test]
    fn simulate_zero_horizon() {
        let inst = Instance::bounded_confidence(ratio(1, 5), vec![ratio(1, 2)], ratio(1, 4), ratio(3, 4), 0).unwrap();
        let traj = simulate(&inst, &ControlSequence::empty()).unwrap();
        assert_eq!(traj.states, vec![inst.start().clone()]);
    }

    #[test]
    fn simulate_rejects_wrong_length() {
        let inst = Instance::bounded_confidence(ratio(1, 5), vec![ratio(1, 2)], ratio(1, 4), ratio(3, 4), 2).unwrap();
        let c = ControlSequence::new(vec![ratio(1, 2)]).unwrap();
        assert!(matches!(simulate(&inst, &c), Err(DynamicsError::ControlLength { .. })));
    }

    #[test]
    fn validation_errors() {
        assert!(OpinionProfile::new(vec![ratio(3, 2)]).is_err());
        assert!(ControlSequence::new(vec![ratio(-1, 2)]).is_err());
        assert!(ConvictionInterval::new(ratio(1, 2), ratio(1, 2)).is_err());
        assert!(Instance::bounded_confidence(int(1), vec![ratio(1, 2)], ratio(1, 4), ratio(3, 4), 1).is_err());
        assert!(Instance::bounded_confidence(ratio(1, 5), vec![], ratio(1, 4), ratio(3, 4), 1).is_err());
    }

    #[test]
    fn six_voter_final_state_is_stable() {
        let mut p = profile(&[(0, 1), (1, 5), (2, 5), (3, 5), (4, 5), (1, 1)]);
        for _ in 0..6 {
            p = bc_step(&p, None, &ratio(1, 5));
        }
        let expected = profile(&[
            (577, 1728),
            (577, 1728),
            (577, 1728),
            (1151, 1728),
            (1151, 1728),
            (1151, 1728),
        ]);
        assert_eq!(p, expected);
        assert_eq!(bc_step(&p, None, &ratio(1, 5)), expected);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        /// Direct O(n^2) evaluation of the BC update.
        fn naive_bc(values: &[Rational], control: Option<&Rational>, eps: &Rational) -> Vec<Rational> {
            values
                .iter()
                .map(|xi| {
                    let mut sum = Rational::zero();
                    let mut count = 0i64;
                    for y in values.iter().chain(control) {
                        if (y - xi).abs() <= *eps {
                            sum += y;
                            count += 1;
                        }
                    }
                    sum / Rational::from_integer(BigInt::from(count))
                })
                .collect()
        }

        fn coarse_unit() -> impl Strategy<Value = Rational> {
            (0i64..=40).prop_map(|k| ratio(k, 40))
        }

        fn fine_unit() -> impl Strategy<Value = Rational> {
            (0i64..=1000).prop_map(|k| ratio(k, 1000))
        }

        fn epsilon() -> impl Strategy<Value = Rational> {
            (1i64..40).prop_map(|k| ratio(k, 40))
        }

        fn controls(len: usize) -> impl Strategy<Value = Vec<Option<Rational>>> {
            proptest::collection::vec(proptest::option::of(coarse_unit()), len)
        }

        proptest! {
            #[test]
            fn kernel_matches_naive_update(
                values in proptest::collection::vec(coarse_unit(), 1..14),
                control in proptest::option::of(coarse_unit()),
                eps in epsilon(),
            ) {
                let p = OpinionProfile::new(values.clone()).unwrap();
                let fast = bc_step(&p, control.as_ref(), &eps);
                prop_assert_eq!(fast.into_inner(), naive_bc(&values, control.as_ref(), &eps));
            }

            #[test]
            fn next_count_oracle_matches_step(
                mut values in proptest::collection::vec(coarse_unit(), 1..14),
                control in coarse_unit(),
                eps in epsilon(),
                left in 0i64..40,
                width in 1i64..40,
            ) {
                values.sort();
                let interval = ConvictionInterval::new(ratio(left, 40), ratio((left + width).min(40), 40));
                prop_assume!(interval.is_ok());
                let interval = interval.unwrap();
                let oracle = NextCountOracle::new(&values, &eps, &interval);
                let next = OpinionProfile::new(naive_bc(&values, Some(&control), &eps)).unwrap();
                prop_assert_eq!(oracle.count(&control), convinced_count(&next, &interval));
            }

            #[test]
            fn confidence_set_contains_self(
                values in proptest::collection::vec(fine_unit(), 1..12),
                eps in epsilon(),
                pick in 0usize..12,
            ) {
                let p = OpinionProfile::new(values).unwrap();
                let i = pick % p.len() + 1;
                let set = confidence_set(&p, None, i, &eps).unwrap();
                prop_assert!(set.contains(&Member::Voter(i)));
            }

            #[test]
            fn order_and_coincidence_are_preserved(
                mut values in proptest::collection::vec(coarse_unit(), 2..12),
                eps in epsilon(),
                ctrl in controls(10),
            ) {
                values.sort();
                let mut p = OpinionProfile::new(values).unwrap();
                for u in &ctrl {
                    let next = bc_step(&p, u.as_ref(), &eps);
                    prop_assert!(next.is_sorted());
                    for a in 0..p.len() {
                        for b in 0..p.len() {
                            if p.opinions()[a] == p.opinions()[b] {
                                prop_assert_eq!(&next.opinions()[a], &next.opinions()[b]);
                            }
                        }
                    }
                    p = next;
                }
            }

            #[test]
            fn bc_output_stays_in_hull(
                values in proptest::collection::vec(fine_unit(), 1..12),
                control in proptest::option::of(fine_unit()),
                eps in epsilon(),
            ) {
                let p = OpinionProfile::new(values.clone()).unwrap();
                let next = bc_step(&p, control.as_ref(), &eps);
                let all: Vec<&Rational> = values.iter().chain(control.as_ref()).collect();
                let lo = *all.iter().min().unwrap();
                let hi = *all.iter().max().unwrap();
                prop_assert!(next.opinions().iter().all(|x| lo <= x && x <= hi));
            }

            #[test]
            fn dg_output_stays_in_hull(
                values in proptest::collection::vec(fine_unit(), 1..6),
                raw in proptest::collection::vec(proptest::collection::vec(0i64..5, 7), 6),
                control in fine_unit(),
            ) {
                let n = values.len();
                let rows: Vec<Vec<Rational>> = raw[..n]
                    .iter()
                    .map(|r| {
                        let mut r: Vec<i64> = r[..=n].to_vec();
                        r[0] += 1;
                        let total: i64 = r.iter().sum();
                        r.iter().map(|&w| ratio(w, total)).collect()
                    })
                    .collect();
                let w = WeightMatrix::new(rows).unwrap();
                let p = OpinionProfile::new(values.clone()).unwrap();
                let next = dg_step(&p, Some(&control), &w).unwrap();
                let all: Vec<&Rational> = values.iter().chain(std::iter::once(&control)).collect();
                let lo = *all.iter().min().unwrap();
                let hi = *all.iter().max().unwrap();
                prop_assert!(next.opinions().iter().all(|x| lo <= x && x <= hi));
            }

            #[test]
            fn perturbation_lies_in_unit_interval(
                values in proptest::collection::vec(coarse_unit(), 1..10),
                ctrl in proptest::collection::vec(coarse_unit(), 1..5),
                eps in epsilon(),
                left in 1i64..20,
                width in 1i64..19,
            ) {
                let right = (left + width).min(39);
                let inst = Instance::bounded_confidence(
                    eps, values, ratio(left, 40), ratio(right, 40), ctrl.len(),
                ).unwrap();
                let traj = simulate(&inst, &ControlSequence::new(ctrl).unwrap()).unwrap();
                let value = perturbed_objective(&traj, &inst).unwrap();
                let count = int(convinced_count(traj.final_state(), inst.interval()) as i64);
                let frac = &value - &count;
                prop_assert!(frac >= Rational::zero() && frac <= Rational::one());
                let all_inside = traj.states[1..]
                    .iter()
                    .all(|s| s.opinions().iter().all(|x| inst.interval().contains(x)));
                prop_assert_eq!(frac == Rational::one(), all_inside);
                prop_assert_eq!(simulate(&inst, &traj.controls).unwrap(), traj);
            }
        }
    }
}
