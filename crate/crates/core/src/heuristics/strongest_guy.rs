use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Bound, HeuristicError, Provenance, SearchResult};
use crate::dynamics::{
    bc_step_sorted, convinced_count, NextCountOracle, perturbed_objective, simulate, ControlSequence, Instance, OpinionProfile, Trajectory,
};
use crate::numeric::Rational;

/// Default cap on exhaustively evaluated sequences; covers 12^6.
pub const DEFAULT_BUDGET: u64 = 5_000_000;

/// Placement indices, one per stage: 0 puts the control at the interval
/// center, `i >= 1` pulls voter `i` with full strength.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct IndexSequence(pub Vec<usize>);

impl IndexSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for IndexSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for IndexSequence {
    type Err = std::num::ParseIntError;

    /// Accepts `3,0,0`, `[3, 0, 0]` and the empty string.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s.trim().trim_start_matches('[').trim_end_matches(']').trim();
        if inner.is_empty() {
            return Ok(Self(Vec::new()));
        }
        inner.split(',').map(|t| t.trim().parse()).collect::<Result<_, _>>().map(Self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Exhaustive,
    /// Best over plain beam runs of every width `1..=w`.
    Beam(usize),
    Random { samples: u64, seed: u64 },
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchMode::Exhaustive => f.write_str("exhaustive"),
            SearchMode::Beam(w) => write!(f, "beam width {w}"),
            SearchMode::Random { samples, seed } => write!(f, "random {samples} samples, seed {seed}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchOptions {
    pub mode: SearchMode,
    pub delta: Rational,
    pub budget: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            mode: SearchMode::Exhaustive,
            delta: Rational::zero(),
            budget: DEFAULT_BUDGET,
        }
    }
}

impl SearchOptions {
    pub fn exhaustive() -> Self {
        Self::default()
    }

    pub fn with_delta(mut self, delta: Rational) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_mode(mut self, mode: SearchMode) -> Self {
        self.mode = mode;
        self
    }
}

fn epsilon_of<'a>(instance: &'a Instance, what: &'static str) -> Result<&'a Rational, HeuristicError> {
    instance.epsilon().ok_or(HeuristicError::NeedsBoundedConfidence(what))
}

fn check_delta(delta: &Rational, epsilon: &Rational) -> Result<(), HeuristicError> {
    if delta.is_negative() || delta >= epsilon {
        return Err(HeuristicError::BadDelta {
            delta: crate::numeric::format_ratio(delta),
        });
    }
    Ok(())
}

/// Control placement for index `i` on `profile`.
pub fn mu(instance: &Instance, profile: &OpinionProfile, i: usize, delta: &Rational) -> Result<Rational, HeuristicError> {
    let eps = epsilon_of(instance, "mu")?;
    if i > profile.len() {
        return Err(HeuristicError::IndexOutOfRange { index: i, n: profile.len() });
    }
    let center = instance.interval().center();
    Ok(place(profile.opinions(), i, &center, &(eps - delta)))
}

/// `reach` is `epsilon - delta`.
fn place(values: &[Rational], i: usize, center: &Rational, reach: &Rational) -> Rational {
    if i == 0 {
        return center.clone();
    }
    let x = &values[i - 1];
    if x <= center {
        (x + reach).min(Rational::one())
    } else {
        (x - reach).max(Rational::zero())
    }
}

/// Controls, trajectory and final count produced by an index sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppliedSequence {
    pub controls: ControlSequence,
    pub trajectory: Trajectory,
    pub count: usize,
}

/// Places the control by `mu` at every stage and simulates exactly.
pub fn apply_index_sequence(
    instance: &Instance,
    seq: &IndexSequence,
    delta: &Rational,
) -> Result<AppliedSequence, HeuristicError> {
    let eps = epsilon_of(instance, "apply_index_sequence")?;
    check_delta(delta, eps)?;
    if seq.len() != instance.horizon() {
        return Err(HeuristicError::SequenceLength {
            found: seq.len(),
            horizon: instance.horizon(),
        });
    }
    let n = instance.n();
    if let Some(&bad) = seq.0.iter().find(|&&i| i > n) {
        return Err(HeuristicError::IndexOutOfRange { index: bad, n });
    }
    let center = instance.interval().center();
    let reach = eps - delta;
    let mut state = instance.start().clone();
    let mut controls = Vec::with_capacity(seq.len());
    for &i in &seq.0 {
        let u = place(state.opinions(), i, &center, &reach);
        state = instance.step(&state, Some(&u))?;
        controls.push(u);
    }
    let controls = ControlSequence::new(controls)?;
    let trajectory = simulate(instance, &controls)?;
    let count = convinced_count(trajectory.final_state(), instance.interval());
    Ok(AppliedSequence {
        controls,
        trajectory,
        count,
    })
}

/// Search state shared by the exhaustive enumeration.
struct Enumerator<'a> {
    center: &'a Rational,
    reach: &'a Rational,
    epsilon: &'a Rational,
    interval: &'a crate::dynamics::ConvictionInterval,
    n: usize,
    horizon: usize,
}

/// Best (count, sequence) below one prefix; lexicographically first among
/// equal counts.
struct Champion {
    count: usize,
    sequence: Vec<usize>,
    evaluations: u64,
}

impl Enumerator<'_> {
    /// Distinct placements in index order. Indices whose placement repeats an
    /// earlier one lead to identical subtrees and can never be a strict
    /// improvement, so they are dropped.
    fn placements(&self, values: &[Rational]) -> Vec<(usize, Rational)> {
        let mut out: Vec<(usize, Rational)> = Vec::with_capacity(self.n + 1);
        for i in 0..=self.n {
            let u = place(values, i, self.center, self.reach);
            if !out.iter().any(|(_, v)| *v == u) {
                out.push((i, u));
            }
        }
        out
    }

    fn descend(&self, values: &[Rational], prefix: &mut Vec<usize>, best: &mut Champion) -> bool {
        if self.horizon - prefix.len() == 1 {
            let oracle = NextCountOracle::new(values, self.epsilon, self.interval);
            for (i, u) in self.placements(values) {
                best.evaluations += 1;
                let count = oracle.count(&u);
                if best.evaluations == 1 || count > best.count {
                    best.count = count;
                    best.sequence = prefix.clone();
                    best.sequence.push(i);
                }
                if best.count == self.n {
                    return true;
                }
            }
            return false;
        }
        for (i, u) in self.placements(values) {
            let next = bc_step_sorted(values, Some(&u), self.epsilon);
            prefix.push(i);
            let done = self.descend(&next, prefix, best);
            prefix.pop();
            if done {
                return true;
            }
        }
        false
    }
}

fn exhaustive(instance: &Instance, delta: &Rational, budget: u64) -> Result<(Vec<usize>, u64, Bound), HeuristicError> {
    let eps = epsilon_of(instance, "strongest_guy_search")?;
    let n = instance.n();
    let horizon = instance.horizon();
    let required = (n as u128 + 1).checked_pow(horizon as u32);
    match required {
        Some(r) if r <= budget as u128 => {}
        _ => {
            return Err(HeuristicError::BudgetExceeded {
                required: required.map_or_else(|| format!("{}^{}", n + 1, horizon), |r| r.to_string()),
                budget,
            })
        }
    }
    let center = instance.interval().center();
    let reach = eps - delta;
    let enumerator = Enumerator {
        center: &center,
        reach: &reach,
        epsilon: eps,
        interval: instance.interval(),
        n,
        horizon,
    };
    let start = instance.start().opinions();
    if horizon == 0 {
        return Ok((Vec::new(), 1, Bound::OptimalInSpace));
    }
    let partitions: Vec<Champion> = (0..=n)
        .into_par_iter()
        .map(|first| {
            let mut best = Champion {
                count: 0,
                sequence: Vec::new(),
                evaluations: 0,
            };
            let u = place(start, first, &center, &reach);
            if (0..first).any(|i| place(start, i, &center, &reach) == u) {
                return best;
            }
            if horizon == 1 {
                best.evaluations = 1;
                best.count = NextCountOracle::new(start, eps, instance.interval()).count(&u);
                best.sequence = vec![first];
            } else {
                let next = bc_step_sorted(start, Some(&u), eps);
                enumerator.descend(&next, &mut vec![first], &mut best);
            }
            best
        })
        .collect();
    let evaluations = partitions.iter().map(|c| c.evaluations).sum();
    let winner = partitions
        .into_iter()
        .filter(|c| c.evaluations > 0)
        .reduce(|a, b| match b.count.cmp(&a.count) {
            Ordering::Greater => b,
            Ordering::Equal if b.sequence < a.sequence => b,
            _ => a,
        })
        .expect("at least one partition");
    Ok((winner.sequence, evaluations, Bound::OptimalInSpace))
}

/// Total distance of all voters to the interval.
fn distance_to_interval(values: &[Rational], interval: &crate::dynamics::ConvictionInterval) -> Rational {
    let mut total = Rational::zero();
    for x in values {
        if *x < interval.left {
            total += &interval.left - x;
        } else if *x > interval.right {
            total += x - &interval.right;
        }
    }
    total
}

struct BeamNode {
    sequence: Vec<usize>,
    values: Vec<Rational>,
    count: usize,
    distance: Rational,
}

fn beam_rank(a: &BeamNode, b: &BeamNode) -> Ordering {
    b.count
        .cmp(&a.count)
        .then_with(|| a.distance.cmp(&b.distance))
        .then_with(|| a.sequence.cmp(&b.sequence))
}

fn plain_beam(instance: &Instance, eps: &Rational, delta: &Rational, width: usize) -> (Vec<usize>, usize, u64) {
    let n = instance.n();
    let interval = instance.interval();
    let center = interval.center();
    let reach = eps - delta;
    let start = instance.start().opinions().to_vec();
    let mut beam = vec![BeamNode {
        sequence: Vec::new(),
        count: convinced_count(instance.start(), interval),
        distance: distance_to_interval(&start, interval),
        values: start,
    }];
    let mut evaluations = 0u64;
    for _ in 0..instance.horizon() {
        let mut children: Vec<BeamNode> = beam
            .par_iter()
            .flat_map_iter(|node| {
                let center = &center;
                let reach = &reach;
                (0..=n).map(move |i| {
                    let u = place(&node.values, i, center, reach);
                    let values = bc_step_sorted(&node.values, Some(&u), eps);
                    let mut sequence = node.sequence.clone();
                    sequence.push(i);
                    BeamNode {
                        count: values.iter().filter(|x| interval.contains(x)).count(),
                        distance: distance_to_interval(&values, interval),
                        sequence,
                        values,
                    }
                })
            })
            .collect();
        evaluations += children.len() as u64;
        children.sort_by(beam_rank);
        children.truncate(width);
        beam = children;
    }
    let best = beam
        .into_iter()
        .min_by(|a, b| b.count.cmp(&a.count).then_with(|| a.sequence.cmp(&b.sequence)))
        .expect("beam is never empty");
    (best.sequence, best.count, evaluations)
}

fn random_sequences(instance: &Instance, eps: &Rational, delta: &Rational, samples: u64, seed: u64) -> (Vec<usize>, u64) {
    let n = instance.n();
    let horizon = instance.horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sequences: Vec<Vec<usize>> = (0..samples.max(1))
        .map(|_| (0..horizon).map(|_| rng.gen_range(0..=n)).collect())
        .collect();
    let center = instance.interval().center();
    let reach = eps - delta;
    let interval = instance.interval();
    let scored: Vec<(usize, &Vec<usize>)> = sequences
        .par_iter()
        .map(|seq| {
            let mut values = instance.start().opinions().to_vec();
            for &i in seq {
                let u = place(&values, i, &center, &reach);
                values = bc_step_sorted(&values, Some(&u), eps);
            }
            (values.iter().filter(|x| interval.contains(x)).count(), seq)
        })
        .collect();
    let best = scored
        .into_iter()
        .min_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)))
        .expect("at least one sample");
    (best.1.clone(), samples.max(1))
}

/// Searches index sequences of length `instance.horizon()`.
///
/// Exhaustive mode returns the lexicographically first sequence with the
/// best count, regardless of worker count. Beam and random modes only give
/// lower bounds.
pub fn strongest_guy_search(instance: &Instance, options: &SearchOptions) -> Result<SearchResult, HeuristicError> {
    let eps = epsilon_of(instance, "strongest_guy_search")?;
    check_delta(&options.delta, eps)?;
    let (sequence, evaluations, bound) = match options.mode {
        SearchMode::Exhaustive => exhaustive(instance, &options.delta, options.budget)?,
        SearchMode::Beam(0) => return Err(HeuristicError::ZeroBeamWidth),
        SearchMode::Beam(width) => {
            let mut best: Option<(Vec<usize>, usize)> = None;
            let mut evaluations = 0;
            for w in 1..=width {
                let (seq, count, evals) = plain_beam(instance, eps, &options.delta, w);
                evaluations += evals;
                let better = match &best {
                    None => true,
                    Some((s, c)) => count > *c || count == *c && seq < *s,
                };
                if better {
                    best = Some((seq, count));
                }
            }
            (best.expect("width >= 1").0, evaluations, Bound::LowerBound)
        }
        SearchMode::Random { samples, seed } => {
            let (seq, evals) = random_sequences(instance, eps, &options.delta, samples, seed);
            (seq, evals, Bound::LowerBound)
        }
    };
    let sequence = IndexSequence(sequence);
    let applied = apply_index_sequence(instance, &sequence, &options.delta)?;
    let perturbed = if instance.horizon() > 0 {
        perturbed_objective(&applied.trajectory, instance).ok()
    } else {
        None
    };
    Ok(SearchResult {
        controls: applied.controls,
        sequence: Some(sequence),
        count: applied.count,
        perturbed_objective: perturbed,
        provenance: Provenance::StrongestGuy {
            mode: options.mode,
            delta: options.delta.clone(),
        },
        bound,
        evaluations,
    })
}

/// Strongest-guy search with placements `delta` short of full strength.
pub fn modified_strongest_guy(
    instance: &Instance,
    delta: &Rational,
    mode: SearchMode,
) -> Result<SearchResult, HeuristicError> {
    strongest_guy_search(instance, &SearchOptions::default().with_mode(mode).with_delta(delta.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::benchmark;
    use crate::numeric::{int, ratio};

    fn seq(v: &[usize]) -> IndexSequence {
        IndexSequence(v.to_vec())
    }

    #[test]
    fn mu_placements() {
        let b = benchmark(1);
        let zero = Rational::zero();
        assert_eq!(mu(&b, b.start(), 0, &zero).unwrap(), ratio(1, 2));
        assert_eq!(mu(&b, b.start(), 4, &zero).unwrap(), ratio(9, 20));
        assert_eq!(mu(&b, b.start(), 11, &zero).unwrap(), ratio(17, 20));
        assert_eq!(mu(&b, b.start(), 1, &zero).unwrap(), ratio(3, 20));
        assert!(mu(&b, b.start(), 12, &zero).is_err());
    }

    #[test]
    fn mu_clamps_to_unit_interval() {
        let inst = Instance::bounded_confidence(ratio(1, 5), vec![ratio(9, 10), ratio(1, 10)], ratio(3, 5), ratio(7, 10), 1)
            .unwrap();
        // center 13/20; voter at 1/10 pulls right, voter at 9/10 pulls left
        assert_eq!(mu(&inst, inst.start(), 1, &Rational::zero()).unwrap(), ratio(3, 10));
        let edge = Instance::bounded_confidence(ratio(1, 5), vec![ratio(19, 20)], ratio(1, 10), ratio(1, 5), 1).unwrap();
        assert_eq!(mu(&edge, edge.start(), 1, &Rational::zero()).unwrap(), ratio(3, 4));
        let edge = Instance::bounded_confidence(ratio(1, 5), vec![ratio(19, 20)], ratio(19, 20), int(1), 1).unwrap();
        // x = 19/20 <= center 39/40, so it is pulled right and clamped to 1
        assert_eq!(mu(&edge, edge.start(), 1, &Rational::zero()).unwrap(), int(1));
    }

    #[test]
    fn reference_sequences() {
        let rows: [(&[usize], usize); 3] = [(&[], 3), (&[3, 8, 1, 0, 1, 1, 1], 8), (&[3, 0, 0, 10, 6, 9, 3, 4, 7, 0], 11)];
        for (s, expected) in rows {
            let b = benchmark(s.len());
            let a = apply_index_sequence(&b, &seq(s), &Rational::zero()).unwrap();
            assert_eq!(a.count, expected, "{s:?}");
        }
    }

    #[test]
    fn sequence_errors() {
        let b = benchmark(2);
        assert!(matches!(
            apply_index_sequence(&b, &seq(&[1]), &Rational::zero()),
            Err(HeuristicError::SequenceLength { .. })
        ));
        assert!(matches!(
            apply_index_sequence(&b, &seq(&[1, 12]), &Rational::zero()),
            Err(HeuristicError::IndexOutOfRange { index: 12, .. })
        ));
        assert!(apply_index_sequence(&b, &seq(&[1, 1]), &ratio(3, 20)).is_err());
    }

    #[test]
    fn exhaustive_small_horizons() {
        let r = strongest_guy_search(&benchmark(0), &SearchOptions::default()).unwrap();
        assert_eq!((r.count, r.bound), (3, Bound::OptimalInSpace));
        let r = strongest_guy_search(&benchmark(1), &SearchOptions::default()).unwrap();
        assert_eq!(r.count, 3);
        assert_eq!(r.sequence, Some(seq(&[0])));
        let r = strongest_guy_search(&benchmark(2), &SearchOptions::default()).unwrap();
        assert_eq!((r.count, r.sequence.clone()), (4, Some(seq(&[4, 4]))));
        let r = strongest_guy_search(&benchmark(3), &SearchOptions::default()).unwrap();
        assert_eq!((r.count, r.sequence.clone()), (5, Some(seq(&[3, 8, 0]))));
    }

    #[test]
    fn exhaustive_beats_every_sequence() {
        let b = benchmark(2);
        let best = strongest_guy_search(&b, &SearchOptions::default()).unwrap().count;
        for i in 0..=11 {
            for j in 0..=11 {
                let a = apply_index_sequence(&b, &seq(&[i, j]), &Rational::zero()).unwrap();
                assert!(a.count <= best);
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let opts = SearchOptions {
            budget: 100,
            ..SearchOptions::default()
        };
        assert!(matches!(
            strongest_guy_search(&benchmark(2), &opts),
            Err(HeuristicError::BudgetExceeded { .. })
        ));
        assert!(matches!(
            strongest_guy_search(&benchmark(40), &SearchOptions::default()),
            Err(HeuristicError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn beam_is_monotone_in_width() {
        let b = benchmark(5);
        let mut last = 0;
        for w in 1..=6 {
            let r = strongest_guy_search(&b, &SearchOptions::default().with_mode(SearchMode::Beam(w))).unwrap();
            assert_eq!(r.bound, Bound::LowerBound);
            assert!(r.count >= last);
            last = r.count;
        }
        assert!(matches!(
            strongest_guy_search(&b, &SearchOptions::default().with_mode(SearchMode::Beam(0))),
            Err(HeuristicError::ZeroBeamWidth)
        ));
    }

    #[test]
    fn random_mode_is_seeded() {
        let b = benchmark(4);
        let mode = SearchMode::Random { samples: 200, seed: 3 };
        let a = strongest_guy_search(&b, &SearchOptions::default().with_mode(mode)).unwrap();
        let c = strongest_guy_search(&b, &SearchOptions::default().with_mode(mode)).unwrap();
        assert_eq!(a, c);
        assert_eq!(a.bound, Bound::LowerBound);
    }

    #[test]
    fn zero_delta_modified_search_is_plain_search() {
        let b = benchmark(3);
        let plain = strongest_guy_search(&b, &SearchOptions::default()).unwrap();
        let modified = modified_strongest_guy(&b, &Rational::zero(), SearchMode::Exhaustive).unwrap();
        assert_eq!(plain, modified);
    }

    #[test]
    fn sequence_text_round_trip() {
        let s: IndexSequence = "3, 0,0,10".parse().unwrap();
        assert_eq!(s, seq(&[3, 0, 0, 10]));
        assert_eq!(s.to_string(), "[3,0,0,10]");
        assert_eq!(s.to_string().parse::<IndexSequence>().unwrap(), s);
        assert!("".parse::<IndexSequence>().unwrap().is_empty());
        assert!("1,x".parse::<IndexSequence>().is_err());
    }

    mod properties {
        use super::*;
        use crate::instances::{random_instance, RandomSpec};
        use proptest::prelude::*;
        use rand_chacha::ChaCha8Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn mu_stays_within_reach(seed in any::<u64>(), i in 0usize..=11) {
                let inst = random_instance(&RandomSpec::default(), &mut ChaCha8Rng::seed_from_u64(seed));
                let u = mu(&inst, inst.start(), i, &Rational::zero()).unwrap();
                prop_assert!(crate::numeric::is_unit(&u));
                if i > 0 {
                    let x = inst.start().voter(i);
                    prop_assert!((&u - x).abs() <= *inst.epsilon().unwrap());
                }
            }
        }
    }
}
