//! Genetic search over control sequences with exact fitness evaluation.
//!
//! A chromosome holds one control opinion per stage. Genes are drawn as
//! `k / 10^6`, so every value stays an exact rational. Randomness is consumed
//! sequentially from one seeded generator; only fitness evaluation runs in
//! parallel, so results do not depend on the number of workers.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{convinced_count, simulate, ControlSequence, DynamicsError, Instance, OpinionProfile};
use crate::numeric::{format_ratio, int, ratio, to_decimal, Rational};

/// Genes are multiples of `1 / GENE_RESOLUTION`.
pub const GENE_RESOLUTION: i64 = 1_000_000;
/// Weight of a voter at the centre of the interval under BD2A/BD2M; the
/// borders weigh 1.
pub const CENTER_WEIGHT: (i64, i64) = (4, 5);
/// Maximum of the spread-based fitness functions.
pub const SPREAD_MAX: i64 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GaError {
    #[error("population must not be empty")]
    EmptyPopulation,
    #[error("survival ratio {0} must lie in (0, 1]")]
    BadSurvival(String),
    #[error("mutation rate {0} must lie in [0, 1]")]
    BadMutationRate(String),
    #[error("chromosome has {found} genes, the horizon is {horizon}")]
    ChromosomeLength { found: usize, horizon: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitnessKind {
    /// Number of convinced voters.
    MaxVoters,
    /// Sum of per-voter weights: 1 inside, decaying linearly outside.
    DistanceToParty,
    /// Like `DistanceToParty`, with inside weights falling from 1 at the
    /// borders to 4/5 at the centre.
    BorderDistanceToAll,
    /// Convinced count plus the border weight of the nearest unconvinced voter.
    BorderDistanceToMin,
    /// Spread of the outermost voters, linear slope.
    MinSpread,
    /// Spread of the outermost voters, quadratic slope.
    MinSpreadSquare,
    /// Squared distances of the outermost voters to the interval centre.
    MinSpreadToCenterSquare,
}

impl FitnessKind {
    pub const ALL: [FitnessKind; 7] = [
        FitnessKind::MaxVoters,
        FitnessKind::DistanceToParty,
        FitnessKind::BorderDistanceToAll,
        FitnessKind::BorderDistanceToMin,
        FitnessKind::MinSpread,
        FitnessKind::MinSpreadSquare,
        FitnessKind::MinSpreadToCenterSquare,
    ];

    pub fn code(self) -> &'static str {
        match self {
            FitnessKind::MaxVoters => "MV",
            FitnessKind::DistanceToParty => "D2P2",
            FitnessKind::BorderDistanceToAll => "BD2A",
            FitnessKind::BorderDistanceToMin => "BD2M",
            FitnessKind::MinSpread => "MDBFL",
            FitnessKind::MinSpreadSquare => "MDBFLS",
            FitnessKind::MinSpreadToCenterSquare => "MDBFL2CS",
        }
    }

    /// The value at which evolution stops early.
    pub fn maximum(self, n: usize) -> Rational {
        match self {
            FitnessKind::MaxVoters
            | FitnessKind::DistanceToParty
            | FitnessKind::BorderDistanceToAll
            | FitnessKind::BorderDistanceToMin => int(n as i64),
            FitnessKind::MinSpread | FitnessKind::MinSpreadSquare | FitnessKind::MinSpreadToCenterSquare => {
                int(SPREAD_MAX)
            }
        }
    }
}

impl fmt::Display for FitnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FitnessKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FitnessKind::ALL
            .into_iter()
            .find(|k| k.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown fitness {s:?}; expected one of MV, D2P2, BD2A, BD2M, MDBFL, MDBFLS, MDBFL2CS"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    /// Fitness-proportional sampling with replacement.
    WeightedRoulette,
    /// Keep the best `ceil(survival * size)`, refill uniformly from them.
    BestChromosomes { survival: Rational },
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::WeightedRoulette => f.write_str("WRS"),
            Selector::BestChromosomes { survival } => write!(f, "BCS({})", format_ratio(survival)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub mutation_rate: Rational,
    pub crossovers_per_generation: usize,
    pub selector: Selector,
    pub fitness: FitnessKind,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 500,
            generations: 250,
            mutation_rate: ratio(1, 15),
            crossovers_per_generation: 2,
            selector: Selector::BestChromosomes {
                survival: ratio(95, 100),
            },
            fitness: FitnessKind::MaxVoters,
            seed: 0,
        }
    }
}

impl GaConfig {
    /// Mutations per generation: `floor(population_size * mutation_rate)`.
    pub fn mutations_per_generation(&self) -> usize {
        (int(self.population_size as i64) * &self.mutation_rate)
            .floor()
            .to_integer()
            .to_usize()
            .unwrap_or(0)
    }

    fn validate(&self) -> Result<(), GaError> {
        if self.population_size == 0 {
            return Err(GaError::EmptyPopulation);
        }
        if self.mutation_rate < Rational::zero() || self.mutation_rate > Rational::one() {
            return Err(GaError::BadMutationRate(format_ratio(&self.mutation_rate)));
        }
        if let Selector::BestChromosomes { survival } = &self.selector {
            if *survival <= Rational::zero() || *survival > Rational::one() {
                return Err(GaError::BadSurvival(format_ratio(survival)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chromosome(pub Vec<Rational>);

impl Chromosome {
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Chromosome((0..len).map(|_| random_gene(rng)).collect())
    }

    pub fn genes(&self) -> &[Rational] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_controls(&self) -> Result<ControlSequence, GaError> {
        Ok(ControlSequence::new(self.0.clone())?)
    }
}

fn random_gene<R: Rng + ?Sized>(rng: &mut R) -> Rational {
    ratio(rng.gen_range(0..=GENE_RESOLUTION), GENE_RESOLUTION)
}

/// Fitness value and exact convinced count of one chromosome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Score {
    pub fitness: Rational,
    pub count: usize,
}

/// Weight of a final opinion outside the interval: 1 at the border,
/// falling linearly to 0 at the end of the opinion space.
fn outside_weight(x: &Rational, left: &Rational, right: &Rational) -> Rational {
    if x < left {
        x / left
    } else if x > right {
        (Rational::one() - x) / (Rational::one() - right)
    } else {
        Rational::one()
    }
}

/// Inside weight falling from 1 at the borders to [`CENTER_WEIGHT`] at the
/// centre.
fn border_weight(x: &Rational, left: &Rational, right: &Rational) -> Rational {
    if x < left || x > right {
        return outside_weight(x, left, right);
    }
    let half = (right - left) / int(2);
    if half.is_zero() {
        return Rational::one();
    }
    let center = (left + right) / int(2);
    let off = if *x > center { x - &center } else { &center - x };
    let low = ratio(CENTER_WEIGHT.0, CENTER_WEIGHT.1);
    &low + (Rational::one() - &low) * off / half
}

fn spread_score(spread: &Rational, width: &Rational, square: bool) -> Rational {
    if spread <= width {
        return int(SPREAD_MAX);
    }
    let rest = Rational::one() - width;
    let excess = (spread - width) / rest;
    let excess = if square { &excess * &excess } else { excess };
    let kept = Rational::one() - excess;
    if kept <= Rational::zero() {
        Rational::zero()
    } else {
        int(SPREAD_MAX) * kept
    }
}

/// Evaluates a final opinion profile.
pub fn profile_fitness(kind: FitnessKind, profile: &OpinionProfile, instance: &Instance) -> Rational {
    let interval = instance.interval();
    let (left, right) = (&interval.left, &interval.right);
    let xs = profile.opinions();
    let count = convinced_count(profile, interval);
    match kind {
        FitnessKind::MaxVoters => int(count as i64),
        FitnessKind::DistanceToParty => xs.iter().map(|x| outside_weight(x, left, right)).sum(),
        FitnessKind::BorderDistanceToAll => xs.iter().map(|x| border_weight(x, left, right)).sum(),
        FitnessKind::BorderDistanceToMin => {
            let nearest = xs
                .iter()
                .filter(|x| !interval.contains(x))
                .map(|x| {
                    let (l, r) = interval.gaps(x);
                    (l + r, x)
                })
                .min_by(|a, b| a.0.cmp(&b.0));
            let extra = nearest.map_or_else(Rational::zero, |(_, x)| border_weight(x, left, right));
            int(count as i64) + extra
        }
        FitnessKind::MinSpread | FitnessKind::MinSpreadSquare => {
            let spread = profile.max().expect("voters") - profile.min().expect("voters");
            spread_score(&spread, &(right - left), kind == FitnessKind::MinSpreadSquare)
        }
        FitnessKind::MinSpreadToCenterSquare => {
            let center = interval.center();
            let lo = profile.min().expect("voters") - &center;
            let hi = profile.max().expect("voters") - &center;
            let reach = if center > ratio(1, 2) { center.clone() } else { Rational::one() - &center };
            let worst = int(2) * &reach * &reach;
            let kept = Rational::one() - (&lo * &lo + &hi * &hi) / worst;
            int(SPREAD_MAX) * kept.max(Rational::zero())
        }
    }
}

/// Simulates the chromosome exactly and scores the final profile.
pub fn fitness(kind: FitnessKind, instance: &Instance, chromosome: &Chromosome) -> Result<Score, GaError> {
    if chromosome.len() != instance.horizon() {
        return Err(GaError::ChromosomeLength {
            found: chromosome.len(),
            horizon: instance.horizon(),
        });
    }
    let trajectory = simulate(instance, &chromosome.to_controls()?)?;
    let last = trajectory.final_state();
    Ok(Score {
        fitness: profile_fitness(kind, last, instance),
        count: convinced_count(last, instance.interval()),
    })
}

/// Indices kept by the best-chromosomes selector, best first; ties keep the
/// lower index.
pub fn best_survivors(scores: &[Rational], survival: &Rational) -> Vec<usize> {
    let keep = (int(scores.len() as i64) * survival)
        .ceil()
        .to_integer()
        .to_usize()
        .unwrap_or(scores.len())
        .clamp(1, scores.len().max(1));
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].cmp(&scores[*a]).then(a.cmp(b)));
    order.truncate(keep);
    order
}

/// Indices of the next population. The flag reports that roulette
/// selection fell back to uniform sampling because every score was zero.
pub fn select_indices<R: Rng + ?Sized>(scores: &[Rational], selector: &Selector, rng: &mut R) -> (Vec<usize>, bool) {
    let size = scores.len();
    match selector {
        Selector::WeightedRoulette => {
            let total: Rational = scores.iter().sum();
            if total <= Rational::zero() {
                return ((0..size).map(|_| rng.gen_range(0..size)).collect(), true);
            }
            let mut cumulative = Vec::with_capacity(size);
            let mut acc = Rational::zero();
            for s in scores {
                acc += s;
                cumulative.push(acc.clone());
            }
            let scale = Rational::from_integer(BigInt::one() << 64);
            let picks = (0..size)
                .map(|_| {
                    let target = &total * Rational::from_integer(BigInt::from(rng.gen::<u64>())) / &scale;
                    cumulative.partition_point(|c| *c <= target).min(size - 1)
                })
                .collect();
            (picks, false)
        }
        Selector::BestChromosomes { survival } => {
            let mut kept = best_survivors(scores, survival);
            let base = kept.len();
            while kept.len() < size {
                kept.push(kept[rng.gen_range(0..base)]);
            }
            (kept, false)
        }
    }
}

/// Swaps the genes at 1-based positions `>= cut` between the two
/// chromosomes. `cut = 1` exchanges everything and `cut = len + 1` nothing.
pub fn crossover_at(a: &Chromosome, b: &Chromosome, cut: usize) -> (Chromosome, Chromosome) {
    assert_eq!(a.len(), b.len(), "crossover needs equal lengths");
    assert!((1..=a.len() + 1).contains(&cut), "cut {cut} out of range");
    let k = cut - 1;
    let mut x = a.0[..k].to_vec();
    x.extend_from_slice(&b.0[k..]);
    let mut y = b.0[..k].to_vec();
    y.extend_from_slice(&a.0[k..]);
    (Chromosome(x), Chromosome(y))
}

/// Crossover at a cut drawn uniformly from `1..=len`.
pub fn crossover<R: Rng + ?Sized>(a: &Chromosome, b: &Chromosome, rng: &mut R) -> (Chromosome, Chromosome) {
    let cut = rng.gen_range(1..=a.len().max(1));
    crossover_at(a, b, cut.min(a.len() + 1))
}

/// Replaces one uniformly chosen gene by a fresh random gene.
pub fn mutate<R: Rng + ?Sized>(chromosome: &Chromosome, rng: &mut R) -> Chromosome {
    let mut out = chromosome.clone();
    if !out.is_empty() {
        let k = rng.gen_range(0..out.len());
        out.0[k] = random_gene(rng);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: Rational,
    pub best_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GaResult {
    pub best: Chromosome,
    pub best_score: Score,
    /// Best-so-far after evaluating each generation; entry 0 is the
    /// initial population.
    pub history: Vec<GenerationRecord>,
    pub evaluations: u64,
    /// Generations in which roulette selection saw only zero scores.
    pub uniform_fallbacks: usize,
}

impl GaResult {
    /// `generation,best_fitness,best_count` with fitness truncated to 12
    /// decimals.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("generation,best_fitness,best_count\n");
        for r in &self.history {
            out.push_str(&format!("{},{},{}\n", r.generation, to_decimal(&r.best_fitness, 12), r.best_count));
        }
        out
    }
}

struct Member {
    chromosome: Chromosome,
    score: Option<Score>,
}

/// Runs the evolution loop. The best chromosome ever evaluated is kept
/// outside the population and returned.
pub fn ga_run(instance: &Instance, config: &GaConfig) -> Result<GaResult, GaError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let len = instance.horizon();
    let size = config.population_size;
    let target = config.fitness.maximum(instance.n());
    let mutations = config.mutations_per_generation();

    let mut population: Vec<Member> = (0..size)
        .map(|_| Member {
            chromosome: Chromosome::random(len, &mut rng),
            score: None,
        })
        .collect();
    let mut best: Option<(Chromosome, Score)> = None;
    let mut history = Vec::with_capacity(config.generations + 1);
    let mut evaluations = 0u64;
    let mut uniform_fallbacks = 0;

    for generation in 0..=config.generations {
        if generation > 0 {
            let scores: Vec<Rational> = population
                .iter()
                .map(|m| m.score.as_ref().expect("evaluated").fitness.clone())
                .collect();
            let (picks, fallback) = select_indices(&scores, &config.selector, &mut rng);
            uniform_fallbacks += usize::from(fallback);
            let mut next: Vec<Member> = picks
                .into_iter()
                .map(|k| Member {
                    chromosome: population[k].chromosome.clone(),
                    score: population[k].score.clone(),
                })
                .collect();
            if size >= 2 {
                for _ in 0..config.crossovers_per_generation {
                    let i = rng.gen_range(0..size);
                    let mut j = rng.gen_range(0..size - 1);
                    if j >= i {
                        j += 1;
                    }
                    let (a, b) = crossover(&next[i].chromosome, &next[j].chromosome, &mut rng);
                    next[i] = Member { chromosome: a, score: None };
                    next[j] = Member { chromosome: b, score: None };
                }
            }
            for _ in 0..mutations {
                let i = rng.gen_range(0..size);
                next[i] = Member {
                    chromosome: mutate(&next[i].chromosome, &mut rng),
                    score: None,
                };
            }
            population = next;
        }

        let pending: Vec<usize> = (0..size).filter(|&k| population[k].score.is_none()).collect();
        let fresh: Vec<Result<Score, GaError>> = pending
            .par_iter()
            .map(|&k| fitness(config.fitness, instance, &population[k].chromosome))
            .collect();
        evaluations += pending.len() as u64;
        for (k, score) in pending.into_iter().zip(fresh) {
            population[k].score = Some(score?);
        }
        for m in &population {
            let s = m.score.as_ref().expect("evaluated");
            if best.as_ref().is_none_or(|(_, b)| s.fitness > b.fitness) {
                best = Some((m.chromosome.clone(), s.clone()));
            }
        }
        let (_, score) = best.as_ref().expect("population is not empty");
        history.push(GenerationRecord {
            generation,
            best_fitness: score.fitness.clone(),
            best_count: score.count,
        });
        if score.fitness >= target {
            break;
        }
    }
    let (best, best_score) = best.expect("population is not empty");
    Ok(GaResult {
        best,
        best_score,
        history,
        evaluations,
        uniform_fallbacks,
    })
}
