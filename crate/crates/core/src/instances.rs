//! Canonical instances, random instance generation and the JSON instance file
//! format.

use std::fs;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ConvictionInterval, Dynamics, DynamicsError, Instance, WeightMatrix};
use crate::numeric::{format_ratio, parse_decimal, parse_rational, quantize_significant, ratio, to_f64, NumericError, Rational};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid instance file: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("field {field}: {source}")]
    Number {
        field: String,
        #[source]
        source: NumericError,
    },
    #[error("field {field}: value {value} out of range {range}")]
    Range {
        field: String,
        value: String,
        range: &'static str,
    },
    #[error(transparent)]
    Invalid(#[from] DynamicsError),
    #[error("favored alternative {favored} is at the boundary of {count} alternatives; no interval rule exists there")]
    BoundaryAlternative { favored: usize, count: usize },
    #[error("alternatives must be sorted and lie in [0, 1]")]
    BadAlternatives,
}

/// The benchmark: 11 voters at 0, 1/10, ..., 1 with confidence radius 3/20 and
/// conviction interval [3/8, 5/8].
pub fn benchmark(horizon: usize) -> Instance {
    Instance::bounded_confidence(
        ratio(3, 20),
        (0..=10).map(|k| ratio(k, 10)).collect(),
        ratio(3, 8),
        ratio(5, 8),
        horizon,
    )
    .expect("benchmark data is valid")
}

/// Six evenly spread voters with radius 1/5. The interval is unused by the
/// example and set to the benchmark's.
pub fn six_voter_example(horizon: usize) -> Instance {
    Instance::bounded_confidence(
        ratio(1, 5),
        (0..=5).map(|k| ratio(k, 5)).collect(),
        ratio(3, 8),
        ratio(5, 8),
        horizon,
    )
    .expect("six-voter data is valid")
}

/// The benchmark voters under DeGroot dynamics where everybody weighs all
/// voters equally and ignores the controller.
pub fn uniform_degroot_benchmark(horizon: usize) -> Instance {
    let start = benchmark(0).start().clone().into_inner();
    Instance::new(
        Dynamics::DeGroot {
            weights: WeightMatrix::uniform_voters(start.len()),
        },
        start,
        ConvictionInterval::new(ratio(3, 8), ratio(5, 8)).expect("valid interval"),
        horizon,
    )
    .expect("uniform DeGroot data is valid")
}

/// Sorted alternatives and the 1-based index of the favored one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlternativesVector {
    alternatives: Vec<Rational>,
    favored: usize,
}

impl AlternativesVector {
    pub fn new(alternatives: Vec<Rational>, favored: usize) -> Result<Self, InstanceError> {
        let sorted = alternatives.windows(2).all(|w| w[0] <= w[1]);
        let in_range = alternatives.iter().all(crate::numeric::is_unit);
        if !sorted || !in_range || favored == 0 || favored > alternatives.len() {
            return Err(InstanceError::BadAlternatives);
        }
        Ok(Self { alternatives, favored })
    }

    pub fn alternatives(&self) -> &[Rational] {
        &self.alternatives
    }

    pub fn favored(&self) -> usize {
        self.favored
    }
}

/// Voters closer to the favored alternative than to its neighbours: the
/// midpoints to the left and right neighbour.
pub fn alternatives_to_interval(alts: &AlternativesVector) -> Result<ConvictionInterval, InstanceError> {
    let m = alts.alternatives.len();
    let j = alts.favored;
    if j <= 1 || j >= m {
        return Err(InstanceError::BoundaryAlternative { favored: j, count: m });
    }
    let a = &alts.alternatives;
    let two = Rational::from_integer(BigInt::from(2));
    let left = (&a[j - 2] + &a[j - 1]) / &two;
    let right = (&a[j - 1] + &a[j]) / &two;
    Ok(ConvictionInterval::new(left, right)?)
}

/// Parameters of the random instance scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomSpec {
    pub n: usize,
    pub epsilon_range: (Rational, Rational),
    pub distance_range: (Rational, Rational),
    pub significant_digits: usize,
    pub horizon: usize,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self {
            n: 11,
            epsilon_range: (ratio(1, 10), ratio(1, 5)),
            distance_range: (ratio(1, 10), ratio(1, 5)),
            significant_digits: 16,
            horizon: 1,
        }
    }
}

/// Interval of all values within `distance` of `party`, cut off at 0 and 1.
pub fn interval_around(party: &Rational, distance: &Rational) -> Result<ConvictionInterval, DynamicsError> {
    let zero = Rational::zero();
    let one = Rational::one();
    let left = (party - distance).max(zero);
    let right = (party + distance).min(one);
    ConvictionInterval::new(left, right)
}

/// Draws a random BC instance: `n` uniform start opinions, then the radius,
/// the party opinion and the conviction distance. Each draw is quantized to
/// `significant_digits` decimal digits before becoming a rational.
pub fn random_instance<R: Rng + ?Sized>(spec: &RandomSpec, rng: &mut R) -> Instance {
    let digits = spec.significant_digits;
    let mut draw_in = |lo: &Rational, hi: &Rational| {
        let (lo, hi) = (to_f64(lo), to_f64(hi));
        let u: f64 = rng.gen();
        quantize_significant(lo + u * (hi - lo), digits)
    };
    let (zero, one) = (Rational::zero(), Rational::one());
    let start: Vec<Rational> = (0..spec.n).map(|_| draw_in(&zero, &one)).collect();
    let epsilon = draw_in(&spec.epsilon_range.0, &spec.epsilon_range.1);
    let party = draw_in(&zero, &one);
    let distance = draw_in(&spec.distance_range.0, &spec.distance_range.1);
    let interval = interval_around(&party, &distance).expect("positive distance gives a proper interval");
    Instance::new(Dynamics::BoundedConfidence { epsilon }, start, interval, spec.horizon)
        .expect("drawn data satisfies the instance invariants")
}

/// One column of the reference random-data table, as decimal text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleData {
    pub start: [&'static str; 11],
    pub epsilon: &'static str,
    pub party: &'static str,
    pub distance: &'static str,
}

pub const STORED_SAMPLES: [SampleData; 5] = [
    SampleData {
        start: [
            "0.0001143810805199624",
            "0.09233859556083068",
            "0.1281244478021107",
            "0.146755892584742",
            "0.2360889763189687",
            "0.3023325678199372",
            "0.417021998534217",
            "0.7203244894557456",
            "0.9325573614175797",
            "0.9971848083653452",
            "0.9990405156274885",
        ],
        epsilon: "0.1387910740307511",
        party: "0.3965807262334462",
        distance: "0.1186260211324845",
    },
    SampleData {
        start: [
            "0.02592622792020585",
            "0.1850820815155939",
            "0.3205364363548663",
            "0.3303348203958791",
            "0.4203678016598261",
            "0.4353223932989226",
            "0.4359949027271929",
            "0.4847490963257731",
            "0.5496624760678183",
            "0.9315408638053435",
            "0.9477306110662712",
        ],
        epsilon: "0.1698862689477127",
        party: "0.1544266755586552",
        distance: "0.1204648636096308",
    },
    SampleData {
        start: [
            "0.0707248803392809",
            "0.121328579290148",
            "0.2909047436646429",
            "0.4370619401887669",
            "0.5108276010748994",
            "0.5507979045041831",
            "0.5693113258037044",
            "0.7081478223456413",
            "0.8399490424990534",
            "0.8929469580512835",
            "0.8962930913307454",
        ],
        epsilon: "0.1040630737561879",
        party: "0.01874801028025057",
        distance: "0.1040630737561879",
    },
    SampleData {
        start: [
            "0.1726953250292445",
            "0.2160895006302953",
            "0.5472322533715591",
            "0.5975562058383497",
            "0.609035598255935",
            "0.6977288244985344",
            "0.7148159946582316",
            "0.8556209450717133",
            "0.9006214549067946",
            "0.9670298385822749",
            "0.9726843540493129",
        ],
        epsilon: "0.1224505926767482",
        party: "0.1414641728954073",
        distance: "0.1976274454960663",
    },
    SampleData {
        start: [
            "0.05518012076038404",
            "0.08982103413199563",
            "0.2067191540744898",
            "0.2219931714287943",
            "0.3637368954633681",
            "0.4884111901019726",
            "0.6117438617189749",
            "0.831327840180911",
            "0.8707323036786941",
            "0.9186109045796587",
            "0.9794449978460197",
        ],
        epsilon: "0.1354138042860231",
        party: "0.3967366065822394",
        distance: "0.1765907860306536",
    },
];

impl SampleData {
    pub fn instance(&self, horizon: usize) -> Instance {
        let parse = |t: &str| parse_decimal(t).expect("stored sample decimals are valid");
        let start = self.start.iter().map(|t| parse(t)).collect();
        let interval = interval_around(&parse(self.party), &parse(self.distance)).expect("stored interval is valid");
        Instance::new(
            Dynamics::BoundedConfidence {
                epsilon: parse(self.epsilon),
            },
            start,
            interval,
            horizon,
        )
        .expect("stored sample data is valid")
    }
}

/// The five reference random samples.
pub fn stored_samples(horizon: usize) -> Vec<Instance> {
    STORED_SAMPLES.iter().map(|s| s.instance(horizon)).collect()
}

/// 1-based sample access.
pub fn stored_sample(index: usize, horizon: usize) -> Option<Instance> {
    STORED_SAMPLES.get(index.checked_sub(1)?).map(|s| s.instance(horizon))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    dynamics: DynamicsFile,
    start: Vec<String>,
    interval: [String; 2],
    horizon: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum DynamicsFile {
    Bc { epsilon: String },
    Dg { weights: Vec<Vec<String>> },
}

/// An instance read from a file together with anything worth telling the
/// user about it.
#[derive(Debug, Clone)]
pub struct LoadedInstance {
    pub instance: Instance,
    pub name: Option<String>,
    pub notices: Vec<String>,
}

fn number(field: String, text: &str) -> Result<Rational, InstanceError> {
    parse_rational(text).map_err(|source| InstanceError::Number { field, source })
}

fn unit(field: String, text: &str) -> Result<Rational, InstanceError> {
    let v = number(field.clone(), text)?;
    if v.is_negative() || v > Rational::one() {
        return Err(InstanceError::Range {
            field,
            value: text.to_string(),
            range: "[0, 1]",
        });
    }
    Ok(v)
}

/// Parses instance JSON text. Values may be `p/q` or decimal strings.
pub fn parse_instance(text: &str, origin: &Path) -> Result<LoadedInstance, InstanceError> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|source| InstanceError::Json {
        path: origin.to_path_buf(),
        source,
    })?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(InstanceError::SchemaVersion(file.schema_version));
    }
    let start = file
        .start
        .iter()
        .enumerate()
        .map(|(k, t)| unit(format!("start[{k}]"), t))
        .collect::<Result<Vec<_>, _>>()?;
    let left = unit("interval[0]".into(), &file.interval[0])?;
    let right = unit("interval[1]".into(), &file.interval[1])?;
    let dynamics = match &file.dynamics {
        DynamicsFile::Bc { epsilon } => {
            let eps = number("dynamics.epsilon".into(), epsilon)?;
            if !eps.is_positive() || eps >= Rational::one() {
                return Err(InstanceError::Range {
                    field: "dynamics.epsilon".into(),
                    value: epsilon.clone(),
                    range: "(0, 1)",
                });
            }
            Dynamics::BoundedConfidence { epsilon: eps }
        }
        DynamicsFile::Dg { weights } => {
            let rows = weights
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(j, t)| unit(format!("dynamics.weights[{i}][{j}]"), t))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            Dynamics::DeGroot {
                weights: WeightMatrix::new(rows)?,
            }
        }
    };
    let mut notices = Vec::new();
    if !start.windows(2).all(|w| w[0] <= w[1]) {
        notices.push("start opinions were not sorted; voters have been renumbered by start opinion".to_string());
    }
    let instance = Instance::new(dynamics, start, ConvictionInterval::new(left, right)?, file.horizon)?;
    Ok(LoadedInstance {
        instance,
        name: file.name,
        notices,
    })
}

pub fn load_instance(path: &Path) -> Result<LoadedInstance, InstanceError> {
    let text = fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_instance(&text, path)
}

/// Pretty JSON with every number as an exact `p/q` string.
pub fn instance_to_json(instance: &Instance, name: Option<&str>) -> String {
    let dynamics = match instance.dynamics() {
        Dynamics::BoundedConfidence { epsilon } => DynamicsFile::Bc {
            epsilon: format_ratio(epsilon),
        },
        Dynamics::DeGroot { weights } => DynamicsFile::Dg {
            weights: weights
                .rows()
                .iter()
                .map(|r| r.iter().map(format_ratio).collect())
                .collect(),
        },
    };
    let file = InstanceFile {
        schema_version: SCHEMA_VERSION,
        name: name.map(str::to_string),
        dynamics,
        start: instance.start().opinions().iter().map(format_ratio).collect(),
        interval: [
            format_ratio(&instance.interval().left),
            format_ratio(&instance.interval().right),
        ],
        horizon: instance.horizon(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("instance serializes");
    text.push('\n');
    text
}

pub fn save_instance(instance: &Instance, name: Option<&str>, path: &Path) -> Result<(), InstanceError> {
    fs::write(path, instance_to_json(instance, name)).map_err(|source| InstanceError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{convinced_count, simulate, ControlSequence};
    use crate::numeric::int;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Constant(u64);

    impl RngCore for Constant {
        fn next_u32(&mut self) -> u32 {
            (self.0 >> 32) as u32
        }
        fn next_u64(&mut self) -> u64 {
            self.0
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            for chunk in dest.chunks_mut(8) {
                let bytes = self.0.to_le_bytes();
                chunk.copy_from_slice(&bytes[..chunk.len()]);
            }
        }
        fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
            self.fill_bytes(dest);
            Ok(())
        }
    }

    #[test]
    fn benchmark_data() {
        let b = benchmark(10);
        assert_eq!(b.epsilon(), Some(&ratio(3, 20)));
        assert_eq!(b.interval().left, ratio(3, 8));
        assert_eq!(b.interval().right, ratio(5, 8));
        assert_eq!(convinced_count(b.start(), b.interval()), 3);
        assert_eq!(b.horizon(), 10);
    }

    #[test]
    fn six_voter_data() {
        let s = six_voter_example(1);
        let expected: Vec<Rational> = ["0", "0.2", "0.4", "0.6", "0.8", "1"]
            .iter()
            .map(|t| parse_decimal(t).unwrap())
            .collect();
        assert_eq!(s.start().opinions(), expected.as_slice());
        let traj = simulate(&s, &ControlSequence::empty()).unwrap();
        let stage1: Vec<Rational> = ["0.1", "0.2", "0.4", "0.6", "0.8", "0.9"]
            .iter()
            .map(|t| parse_decimal(t).unwrap())
            .collect();
        assert_eq!(traj.states[1].opinions(), stage1.as_slice());
    }

    #[test]
    fn alternatives_midpoints() {
        let a = AlternativesVector::new(vec![ratio(1, 4), ratio(1, 2), ratio(3, 4)], 2).unwrap();
        let i = alternatives_to_interval(&a).unwrap();
        assert_eq!((i.left, i.right), (ratio(3, 8), ratio(5, 8)));
        let a = AlternativesVector::new(vec![int(0), ratio(1, 2), int(1)], 2).unwrap();
        let i = alternatives_to_interval(&a).unwrap();
        assert_eq!((i.left, i.right), (ratio(1, 4), ratio(3, 4)));
        let a = AlternativesVector::new(vec![ratio(2, 10), ratio(4, 10), ratio(8, 10)], 2).unwrap();
        let i = alternatives_to_interval(&a).unwrap();
        assert_eq!((i.left, i.right), (ratio(3, 10), ratio(3, 5)));
    }

    #[test]
    fn boundary_alternative_is_rejected() {
        let a = AlternativesVector::new(vec![ratio(1, 4), ratio(1, 2), ratio(3, 4)], 1).unwrap();
        assert!(matches!(
            alternatives_to_interval(&a),
            Err(InstanceError::BoundaryAlternative { favored: 1, count: 3 })
        ));
        let a = AlternativesVector::new(vec![ratio(1, 4), ratio(1, 2), ratio(3, 4)], 3).unwrap();
        assert!(alternatives_to_interval(&a).is_err());
        assert!(AlternativesVector::new(vec![ratio(1, 2), ratio(1, 4)], 1).is_err());
    }

    #[test]
    fn constant_source_gives_midpoints() {
        let mut rng = Constant(1 << 63);
        let inst = random_instance(&RandomSpec::default(), &mut rng);
        assert!(inst.start().opinions().iter().all(|x| *x == ratio(1, 2)));
        assert_eq!(inst.epsilon(), Some(&ratio(3, 20)));
        assert_eq!(inst.interval().left, ratio(35, 100));
        assert_eq!(inst.interval().right, ratio(65, 100));
    }

    #[test]
    fn same_seed_same_instance() {
        let spec = RandomSpec::default();
        let a = random_instance(&spec, &mut ChaCha8Rng::seed_from_u64(7));
        let b = random_instance(&spec, &mut ChaCha8Rng::seed_from_u64(7));
        let c = random_instance(&spec, &mut ChaCha8Rng::seed_from_u64(8));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sample_one_starts_exactly() {
        let s = stored_sample(1, 1).unwrap();
        assert_eq!(s.start().voter(1), &parse_decimal("0.0001143810805199624").unwrap());
        assert_eq!(s.epsilon(), Some(&parse_decimal("0.1387910740307511").unwrap()));
        assert_eq!(stored_samples(1).len(), 5);
        assert!(stored_sample(0, 1).is_none());
        assert!(stored_sample(6, 1).is_none());
    }

    #[test]
    fn sample_intervals() {
        let s5 = stored_sample(5, 1).unwrap();
        // independent oracle: integer arithmetic on the 16-digit mantissas
        let scale = 10i64.pow(16);
        let o = 3_967_366_065_822_394i64;
        let d = 1_765_907_860_306_536i64;
        assert_eq!(s5.interval().left, ratio(o - d, scale));
        assert_eq!(s5.interval().right, ratio(o + d, scale));
        assert_eq!(s5.interval().left, parse_decimal("0.2201458205515858").unwrap());
        assert_eq!(s5.interval().right, parse_decimal("0.573327392612893").unwrap());
        let s3 = stored_sample(3, 1).unwrap();
        assert_eq!(s3.interval().left, Rational::zero());
        assert_eq!(
            parse_decimal("0.01874801028025057").unwrap() - parse_decimal("0.1040630737561879").unwrap(),
            parse_decimal("-0.08531506347593733").unwrap()
        );
    }

    #[test]
    fn json_round_trip() {
        for inst in [benchmark(10), six_voter_example(6), stored_sample(2, 3).unwrap(), uniform_degroot_benchmark(1)] {
            let text = instance_to_json(&inst, Some("x"));
            let loaded = parse_instance(&text, Path::new("mem")).unwrap();
            assert_eq!(loaded.instance, inst);
            assert_eq!(loaded.name.as_deref(), Some("x"));
            assert!(loaded.notices.is_empty());
        }
    }

    #[test]
    fn json_rejects_out_of_range_opinion() {
        let text = r#"{"schema_version":1,"dynamics":{"kind":"bc","epsilon":"0.15"},
            "start":["0.2","1.5"],"interval":["3/8","5/8"],"horizon":1}"#;
        let err = parse_instance(text, Path::new("mem")).unwrap_err();
        assert!(matches!(&err, InstanceError::Range { field, .. } if field == "start[1]"), "{err}");
    }

    #[test]
    fn json_sorts_with_notice() {
        let text = r#"{"schema_version":1,"dynamics":{"kind":"bc","epsilon":"3/20"},
            "start":["0.6","0.2"],"interval":["3/8","5/8"],"horizon":2}"#;
        let loaded = parse_instance(text, Path::new("mem")).unwrap();
        assert_eq!(loaded.instance.start().opinions(), &[ratio(1, 5), ratio(3, 5)]);
        assert_eq!(loaded.notices.len(), 1);
    }

    #[test]
    fn json_errors_name_fields() {
        let text = r#"{"schema_version":1,"dynamics":{"kind":"bc","epsilon":"0.1q"},
            "start":["0.2"],"interval":["3/8","5/8"],"horizon":2}"#;
        let err = parse_instance(text, Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("dynamics.epsilon"));
        let text = r#"{"schema_version":2,"dynamics":{"kind":"bc","epsilon":"0.1"},
            "start":["0.2"],"interval":["3/8","5/8"],"horizon":2}"#;
        assert!(matches!(parse_instance(text, Path::new("mem")), Err(InstanceError::SchemaVersion(2))));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn generated_instances_are_well_formed(seed in any::<u64>()) {
                let spec = RandomSpec::default();
                let inst = random_instance(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
                let i = inst.interval();
                prop_assert!(Rational::zero() <= i.left && i.left < i.right && i.right <= Rational::one());
                prop_assert!(i.width() <= ratio(2, 5));
                prop_assert!(inst.start().is_sorted());
                prop_assert!(inst.start().opinions().iter().all(crate::numeric::is_unit));
                let eps = inst.epsilon().unwrap();
                prop_assert!(*eps >= ratio(1, 10) && *eps <= ratio(1, 5));
            }

            #[test]
            fn interval_width_bounded_by_twice_distance(
                party in 0i64..=1000,
                distance in 100i64..=200,
            ) {
                let d = ratio(distance, 1000);
                let i = interval_around(&ratio(party, 1000), &d).unwrap();
                prop_assert!(i.width() <= &d * int(2));
            }
        }
    }
}
