use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use super::MilpError;
use crate::numeric::{format_ratio, non_decimal_factor, Rational};

/// Structured variable identifier. `Display` gives the LP name and `FromStr`
/// parses it back. Voter indices are 1-based; index 0 is the control.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarName {
    /// Opinion of voter `i` (or the control for `i = 0`) at stage `t`.
    X { t: usize, i: usize },
    Z { i: usize },
    V { t: usize, i: usize, j: usize },
    L { t: usize, i: usize },
    R { t: usize, i: usize },
    C { t: usize, i: usize },
    K { t: usize, i: usize },
    Kappa { t: usize, i: usize, k: usize },
    /// Contribution of member `j` (0 = control) to voter `i`'s next opinion.
    Xbar { t: usize, j: usize, i: usize },
    Conf { t: usize, i: usize, jmin: usize, jmax: usize, cl: u8, cr: u8 },
    Conv { jmin: usize, jmax: usize },
    Dl { t: usize, i: usize },
    Dr { t: usize, i: usize },
    S { t: usize, i: usize, j: usize },
    B { t: usize, i: usize },
    Pen,
    ObjConst,
}

impl VarName {
    /// Stage the variable belongs to, if any.
    pub fn stage(&self) -> Option<usize> {
        use VarName::*;
        match *self {
            X { t, .. } | V { t, .. } | L { t, .. } | R { t, .. } | C { t, .. } | K { t, .. } => Some(t),
            Kappa { t, .. } | Xbar { t, .. } | Conf { t, .. } | Dl { t, .. } | Dr { t, .. } => Some(t),
            S { t, .. } | B { t, .. } => Some(t),
            Z { .. } | Conv { .. } | Pen | ObjConst => None,
        }
    }
}

impl fmt::Display for VarName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use VarName::*;
        match self {
            X { t, i } => write!(f, "x_{t}_{i}"),
            Z { i } => write!(f, "z_{i}"),
            V { t, i, j } => write!(f, "v_{t}_{i}_{j}"),
            L { t, i } => write!(f, "l_{t}_{i}"),
            R { t, i } => write!(f, "r_{t}_{i}"),
            C { t, i } => write!(f, "c_{t}_{i}"),
            K { t, i } => write!(f, "k_{t}_{i}"),
            Kappa { t, i, k } => write!(f, "kappa_{t}_{i}_{k}"),
            Xbar { t, j, i } => write!(f, "xbar_{t}_{j}_{i}"),
            Conf { t, i, jmin, jmax, cl, cr } => write!(f, "conf_{t}_{i}_{jmin}_{jmax}_{cl}_{cr}"),
            Conv { jmin, jmax } => write!(f, "conv_{jmin}_{jmax}"),
            Dl { t, i } => write!(f, "dl_{t}_{i}"),
            Dr { t, i } => write!(f, "dr_{t}_{i}"),
            S { t, i, j } => write!(f, "s_{t}_{i}_{j}"),
            B { t, i } => write!(f, "b_{t}_{i}"),
            Pen => f.write_str("pen"),
            ObjConst => f.write_str("obj_const"),
        }
    }
}

impl FromStr for VarName {
    type Err = MilpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || MilpError::UnknownVariable(s.to_string());
        match s {
            "pen" => return Ok(VarName::Pen),
            "obj_const" => return Ok(VarName::ObjConst),
            _ => {}
        }
        let (kind, rest) = s.split_once('_').ok_or_else(unknown)?;
        let nums: Vec<usize> = rest
            .split('_')
            .map(|p| {
                if p.is_empty() || (p.len() > 1 && p.starts_with('0')) {
                    None
                } else {
                    p.parse().ok()
                }
            })
            .collect::<Option<_>>()
            .ok_or_else(unknown)?;
        let bit = |v: usize| u8::try_from(v).ok().filter(|b| *b <= 1);
        let name = match (kind, nums.as_slice()) {
            ("x", &[t, i]) => VarName::X { t, i },
            ("z", &[i]) => VarName::Z { i },
            ("v", &[t, i, j]) => VarName::V { t, i, j },
            ("l", &[t, i]) => VarName::L { t, i },
            ("r", &[t, i]) => VarName::R { t, i },
            ("c", &[t, i]) => VarName::C { t, i },
            ("k", &[t, i]) => VarName::K { t, i },
            ("kappa", &[t, i, k]) => VarName::Kappa { t, i, k },
            ("xbar", &[t, j, i]) => VarName::Xbar { t, j, i },
            ("conf", &[t, i, jmin, jmax, cl, cr]) => VarName::Conf {
                t,
                i,
                jmin,
                jmax,
                cl: bit(cl).ok_or_else(unknown)?,
                cr: bit(cr).ok_or_else(unknown)?,
            },
            ("conv", &[jmin, jmax]) => VarName::Conv { jmin, jmax },
            ("dl", &[t, i]) => VarName::Dl { t, i },
            ("dr", &[t, i]) => VarName::Dr { t, i },
            ("s", &[t, i, j]) => VarName::S { t, i, j },
            ("b", &[t, i]) => VarName::B { t, i },
            _ => return Err(unknown()),
        };
        Ok(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Domain {
    Continuous { lb: Rational, ub: Rational },
    Binary,
    Integer { lb: Rational, ub: Rational },
}

impl Domain {
    pub fn unit() -> Self {
        Domain::Continuous {
            lb: Rational::zero(),
            ub: Rational::one(),
        }
    }

    pub fn bounds(&self) -> (Rational, Rational) {
        match self {
            Domain::Continuous { lb, ub } | Domain::Integer { lb, ub } => (lb.clone(), ub.clone()),
            Domain::Binary => (Rational::zero(), Rational::one()),
        }
    }

    pub fn is_integral(&self) -> bool {
        !matches!(self, Domain::Continuous { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MilpVar {
    pub name: VarName,
    pub domain: Domain,
    /// Branching priority; larger is branched on first.
    pub priority: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

/// Records that a row was produced by Big-M linearisation. The row is
/// relaxed when the guard variables sum to `off_value`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardInfo {
    pub guards: Vec<usize>,
    pub off_value: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub name: String,
    /// Variable index and coefficient; indices are distinct.
    pub terms: Vec<(usize, Rational)>,
    pub sense: Sense,
    pub rhs: Rational,
    pub guard: Option<GuardInfo>,
}

impl Constraint {
    pub fn lhs(&self, values: &[Rational]) -> Rational {
        self.terms.iter().map(|(v, c)| c * &values[*v]).sum()
    }

    pub fn holds(&self, values: &[Rational]) -> bool {
        let lhs = self.lhs(values);
        match self.sense {
            Sense::Le => lhs <= self.rhs,
            Sense::Eq => lhs == self.rhs,
            Sense::Ge => lhs >= self.rhs,
        }
    }
}

/// A maximisation MILP with rational data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MilpModel {
    pub name: String,
    pub vars: Vec<MilpVar>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, Rational)>,
    index: HashMap<VarName, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Domain { var: String, value: String },
    Row { name: String, lhs: String, sense: Sense, rhs: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Domain { var, value } => write!(f, "{var} = {value} is outside its domain"),
            Violation::Row { name, lhs, sense, rhs } => {
                write!(f, "row {name}: lhs {lhs} {} {rhs} fails", sense.symbol())
            }
        }
    }
}

impl MilpModel {
    pub fn var_index(&self, name: &VarName) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn var(&self, name: &VarName) -> Option<&MilpVar> {
        self.var_index(name).map(|k| &self.vars[k])
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.domain == Domain::Binary).count()
    }

    pub fn num_generals(&self) -> usize {
        self.vars.iter().filter(|v| matches!(v.domain, Domain::Integer { .. })).count()
    }

    /// Orders a name-keyed assignment by variable index. Every model
    /// variable must be present.
    pub fn assignment_vector(&self, values: &HashMap<VarName, Rational>) -> Result<Vec<Rational>, MilpError> {
        self.vars
            .iter()
            .map(|v| {
                values
                    .get(&v.name)
                    .cloned()
                    .ok_or_else(|| MilpError::MissingVariable(v.name.to_string()))
            })
            .collect()
    }

    pub fn objective_value(&self, values: &[Rational]) -> Rational {
        self.objective.iter().map(|(v, c)| c * &values[*v]).sum()
    }

    /// Every domain and row violation of a full assignment.
    pub fn check_assignment(&self, values: &[Rational]) -> Vec<Violation> {
        assert_eq!(values.len(), self.vars.len(), "assignment length");
        let mut out = Vec::new();
        for (var, value) in self.vars.iter().zip(values) {
            let (lb, ub) = var.domain.bounds();
            let integral_ok = !var.domain.is_integral() || value.is_integer();
            if *value < lb || *value > ub || !integral_ok {
                out.push(Violation::Domain {
                    var: var.name.to_string(),
                    value: format_ratio(value),
                });
            }
        }
        for row in &self.constraints {
            if !row.holds(values) {
                out.push(Violation::Row {
                    name: row.name.clone(),
                    lhs: format_ratio(&row.lhs(values)),
                    sense: row.sense,
                    rhs: format_ratio(&row.rhs),
                });
            }
        }
        out
    }

    /// Confirms that every Big-M row is slack in its relaxed state for all
    /// values inside the variable boxes.
    pub fn check_big_m(&self) -> Result<(), MilpError> {
        for row in &self.constraints {
            let Some(guard) = &row.guard else { continue };
            let off = guard.off_value;
            if row.sense != Sense::Le || (off == 1 && guard.guards.len() != 1) {
                return Err(MilpError::BigM(row.name.clone()));
            }
            let mut worst = Rational::zero();
            for (v, c) in &row.terms {
                if guard.guards.contains(v) {
                    if off == 1 {
                        worst += c;
                    }
                } else {
                    worst += max_term(c, &self.vars[*v].domain);
                }
            }
            if worst > row.rhs {
                return Err(MilpError::BigM(row.name.clone()));
            }
        }
        Ok(())
    }
}

fn max_term(c: &Rational, domain: &Domain) -> Rational {
    let (lb, ub) = domain.bounds();
    if c.is_positive() {
        c * ub
    } else {
        c * lb
    }
}

/// Incremental construction with Big-M linearisation of guarded rows.
#[derive(Debug, Default)]
pub(crate) struct ModelBuilder {
    name: String,
    vars: Vec<MilpVar>,
    index: HashMap<VarName, usize>,
    constraints: Vec<Constraint>,
    objective: Vec<(usize, Rational)>,
}

pub(crate) type Terms = Vec<(usize, Rational)>;

impl ModelBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn var(&mut self, name: VarName, domain: Domain, priority: Option<u32>) -> usize {
        assert!(!self.index.contains_key(&name), "duplicate variable {name}");
        let k = self.vars.len();
        self.index.insert(name.clone(), k);
        self.vars.push(MilpVar { name, domain, priority });
        k
    }

    pub fn id(&self, name: &VarName) -> usize {
        *self.index.get(name).unwrap_or_else(|| panic!("undeclared variable {name}"))
    }

    pub fn objective(&mut self, terms: Terms) {
        self.objective = merge(terms);
    }

    /// An unconditional row.
    pub fn row(&mut self, name: String, terms: Terms, sense: Sense, rhs: Rational) {
        self.push(name, merge(terms), sense, rhs, None);
    }

    /// A row enforced only when `sum(guards) == 1` (`active_on_one`) or when
    /// the single guard is 0. Equalities become two inequalities; a side the
    /// variable boxes already imply is dropped.
    pub fn vif(&mut self, name: String, guards: &[usize], active_on_one: bool, terms: Terms, sense: Sense, rhs: Rational) {
        assert!(active_on_one || guards.len() == 1, "else-branch guards are single binaries");
        let terms = merge(terms);
        debug_assert!(terms.iter().all(|(v, _)| !guards.contains(v)));
        let neg = |t: &Terms| t.iter().map(|(v, c)| (*v, -c)).collect::<Terms>();
        let sides: Vec<(String, Terms, Rational)> = match sense {
            Sense::Le => vec![(name, terms, rhs)],
            Sense::Ge => vec![(name, neg(&terms), -rhs)],
            Sense::Eq => vec![
                (format!("{name}_le"), terms.clone(), rhs.clone()),
                (format!("{name}_ge"), neg(&terms), -rhs),
            ],
        };
        for (name, base, rhs) in sides {
            let max: Rational = base.iter().map(|(v, c)| max_term(c, &self.vars[*v].domain)).sum();
            let m = &max - &rhs;
            if !m.is_positive() {
                continue;
            }
            let mut row = base;
            if active_on_one {
                row.extend(guards.iter().map(|g| (*g, m.clone())));
                let rhs = rhs + &m;
                self.push(name, row, Sense::Le, rhs, Some(GuardInfo { guards: guards.to_vec(), off_value: 0 }));
            } else {
                row.push((guards[0], -m));
                self.push(name, row, Sense::Le, rhs, Some(GuardInfo { guards: guards.to_vec(), off_value: 1 }));
            }
        }
    }

    fn push(&mut self, name: String, terms: Terms, sense: Sense, rhs: Rational, guard: Option<GuardInfo>) {
        let scale = decimal_scale(&terms, &rhs);
        let (terms, rhs) = if scale.is_one() {
            (terms, rhs)
        } else {
            let s = Rational::from_integer(scale);
            (terms.into_iter().map(|(v, c)| (v, c * &s)).collect(), rhs * &s)
        };
        self.constraints.push(Constraint {
            name,
            terms,
            sense,
            rhs,
            guard,
        });
    }

    pub fn finish(self) -> MilpModel {
        MilpModel {
            name: self.name,
            vars: self.vars,
            constraints: self.constraints,
            objective: self.objective,
            index: self.index,
        }
    }
}

/// Combines repeated variables and drops zero coefficients, keeping first
/// occurrence order.
fn merge(terms: Terms) -> Terms {
    let mut out: Terms = Vec::with_capacity(terms.len());
    let mut pos: HashMap<usize, usize> = HashMap::new();
    for (v, c) in terms {
        if let Some(&k) = pos.get(&v) {
            out[k].1 += c;
        } else {
            pos.insert(v, out.len());
            out.push((v, c));
        }
    }
    out.retain(|(_, c)| !c.is_zero());
    out
}

/// Smallest integer making every coefficient and the rhs a terminating
/// decimal.
fn decimal_scale(terms: &Terms, rhs: &Rational) -> BigInt {
    terms
        .iter()
        .map(|(_, c)| c)
        .chain(std::iter::once(rhs))
        .fold(BigInt::one(), |acc, c| acc.lcm(&non_decimal_factor(c)))
}
