use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use num_traits::{One, Signed};

use super::model::{Domain, MilpModel, Sense};
use super::MilpError;
use crate::numeric::{parse_scientific, pow10, to_decimal, to_exact_decimal, Rational};

const WRAP: usize = 200;
const MAX_LINE: usize = 510;
/// Digits used for a bound that has no finite decimal expansion.
const BOUND_DIGITS: u32 = 20;

fn exact(value: &Rational) -> String {
    to_exact_decimal(value).expect("rows are scaled to terminating decimals")
}

/// `value` as a decimal, rounded outward (`up` for upper bounds) when it has
/// no finite expansion.
fn bound_text(value: &Rational, up: bool) -> String {
    if let Some(s) = to_exact_decimal(value) {
        return s;
    }
    let scale = Rational::from_integer(pow10(BOUND_DIGITS));
    let scaled = value * &scale;
    let k = if up { scaled.ceil() } else { scaled.floor() };
    let rounded = k / scale;
    to_exact_decimal(&rounded).unwrap_or_else(|| to_decimal(&rounded, BOUND_DIGITS as usize))
}

struct Wrapper {
    out: String,
    line: usize,
}

impl Wrapper {
    fn new(out: String) -> Self {
        let line = out.len() - out.rfind('\n').map_or(0, |k| k + 1);
        Self { out, line }
    }

    fn piece(&mut self, piece: &str) {
        if self.line + piece.len() > WRAP && self.line > 4 {
            self.out.push_str("\n   ");
            self.line = 3;
        }
        self.out.push_str(piece);
        self.line += piece.len();
    }

    fn terms(&mut self, model: &MilpModel, terms: &[(usize, Rational)]) {
        for (k, (v, c)) in terms.iter().enumerate() {
            let name = model.vars[*v].name.to_string();
            let sign = if c.is_negative() { "-" } else { "+" };
            let abs = c.abs();
            let body = if abs.is_one() {
                name
            } else {
                format!("{} {name}", exact(&abs))
            };
            if k == 0 && sign == "+" {
                self.piece(&format!(" {body}"));
            } else {
                self.piece(&format!(" {sign} {body}"));
            }
        }
    }

    fn finish(mut self) -> String {
        self.out.push('\n');
        self.out
    }
}

/// CPLEX-LP text for the model. Output depends only on the model, so equal
/// models give byte-identical files.
pub fn emit_lp(model: &MilpModel) -> String {
    let mut out = format!("\\ {}\nMaximize\n obj:", model.name);
    let mut w = Wrapper::new(std::mem::take(&mut out));
    w.terms(model, &model.objective);
    out = w.finish();
    out.push_str("Subject To\n");
    for row in &model.constraints {
        let mut w = Wrapper::new(std::mem::take(&mut out) + &format!(" {}:", row.name));
        w.terms(model, &row.terms);
        w.piece(&format!(" {} {}", row.sense.symbol(), exact(&row.rhs)));
        out = w.finish();
    }
    out.push_str("Bounds\n");
    for var in &model.vars {
        match &var.domain {
            Domain::Continuous { lb, ub } | Domain::Integer { lb, ub } => {
                if lb == ub && to_exact_decimal(lb).is_some() {
                    let _ = writeln!(out, " {} = {}", var.name, exact(lb));
                } else {
                    let _ = writeln!(out, " {} <= {} <= {}", bound_text(lb, false), var.name, bound_text(ub, true));
                }
            }
            Domain::Binary => {}
        }
    }
    for (title, pick) in [("Binary", true), ("General", false)] {
        let names: Vec<String> = model
            .vars
            .iter()
            .filter(|v| match v.domain {
                Domain::Binary => pick,
                Domain::Integer { .. } => !pick,
                Domain::Continuous { .. } => false,
            })
            .map(|v| v.name.to_string())
            .collect();
        if names.is_empty() {
            continue;
        }
        out.push_str(title);
        out.push('\n');
        let mut w = Wrapper::new(out);
        for name in names {
            w.piece(&format!(" {name}"));
        }
        out = w.finish();
    }
    out.push_str("End\n");
    out
}

/// ORD-format branching priorities; earlier stages get larger values.
pub fn emit_priorities(model: &MilpModel) -> String {
    let mut out = format!("NAME          {}\n", model.name);
    for var in &model.vars {
        if let Some(p) = var.priority {
            let _ = writeln!(out, "    {} {p}", var.name);
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedRow {
    pub name: String,
    pub terms: Vec<(String, Rational)>,
    pub sense: Sense,
    pub rhs: Rational,
}

/// What the linter read back from LP text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LintReport {
    pub objective: Vec<(String, Rational)>,
    pub rows: Vec<ParsedRow>,
    pub bounds: BTreeMap<String, (Rational, Rational)>,
    pub binaries: Vec<String>,
    pub generals: Vec<String>,
}

impl LintReport {
    pub fn variable_count(&self) -> usize {
        let mut all: BTreeSet<&String> = self.bounds.keys().collect();
        all.extend(self.binaries.iter());
        all.extend(self.generals.iter());
        all.len()
    }

    pub fn constraint_count(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Objective,
    Rows,
    Bounds,
    Binary,
    General,
}

fn lint_err(line: usize, message: impl Into<String>) -> MilpError {
    MilpError::Lint {
        line,
        message: message.into(),
    }
}

fn number(token: &str) -> Option<Rational> {
    match token.as_bytes().first() {
        Some(c) if c.is_ascii_digit() || *c == b'.' || *c == b'-' || *c == b'+' => parse_scientific(token).ok(),
        _ => None,
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 255
        && !name.starts_with(|c: char| c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "_!\"#$%&()/,.;?@'`{}|~".contains(c))
}

/// Parses `[sign] [coef] var ...` until a sense token or the end.
fn parse_terms(tokens: &[&str], line: usize) -> Result<(Vec<(String, Rational)>, usize), MilpError> {
    let mut terms = Vec::new();
    let mut k = 0;
    while k < tokens.len() && !matches!(tokens[k], "<=" | ">=" | "=" | "=<" | "=>") {
        let mut coef = Rational::one();
        if tokens[k] == "+" || tokens[k] == "-" {
            if tokens[k] == "-" {
                coef = -coef;
            }
            k += 1;
        }
        let Some(tok) = tokens.get(k) else {
            return Err(lint_err(line, "dangling sign"));
        };
        if let Some(c) = number(tok) {
            coef *= c;
            k += 1;
        }
        let Some(name) = tokens.get(k) else {
            return Err(lint_err(line, "coefficient without variable"));
        };
        if !valid_name(name) {
            return Err(lint_err(line, format!("bad variable name {name:?}")));
        }
        terms.push((name.to_string(), coef));
        k += 1;
    }
    Ok((terms, k))
}

/// Reads LP text in the dialect [`emit_lp`] writes and checks that it is
/// well formed: known sections in order, unique row names, every variable
/// declared, no variable both binary and bounded.
pub fn lint_lp(text: &str) -> Result<LintReport, MilpError> {
    let mut report = LintReport::default();
    let mut section: Option<Section> = None;
    let mut saw_end = false;
    // Statement text (joined continuation lines) with its first line number.
    let mut statements: Vec<(Section, usize, String)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.len() > MAX_LINE {
            return Err(lint_err(line, "line too long"));
        }
        if saw_end {
            if raw.trim().is_empty() {
                continue;
            }
            return Err(lint_err(line, "text after End"));
        }
        if raw.starts_with('\\') || raw.trim().is_empty() {
            continue;
        }
        if !raw.starts_with(' ') {
            let next = match raw.trim().to_ascii_lowercase().as_str() {
                "maximize" | "maximum" | "max" => Section::Objective,
                "subject to" | "st" | "s.t." => Section::Rows,
                "bounds" => Section::Bounds,
                "binary" | "binaries" => Section::Binary,
                "general" | "generals" => Section::General,
                "end" => {
                    saw_end = true;
                    continue;
                }
                other => return Err(lint_err(line, format!("unknown section {other:?}"))),
            };
            if section.is_some_and(|s| s >= next) {
                return Err(lint_err(line, "section out of order"));
            }
            section = Some(next);
            continue;
        }
        let Some(sec) = section else {
            return Err(lint_err(line, "text before the objective section"));
        };
        let continues = raw.starts_with("   ") && matches!(sec, Section::Objective | Section::Rows | Section::Binary | Section::General);
        match statements.last_mut() {
            Some((s, _, body)) if continues && *s == sec => {
                body.push(' ');
                body.push_str(raw.trim());
            }
            _ => statements.push((sec, line, raw.trim().to_string())),
        }
    }
    if !saw_end {
        return Err(lint_err(text.lines().count(), "missing End"));
    }
    if section.is_none_or(|s| s < Section::Rows) {
        return Err(lint_err(1, "missing Subject To section"));
    }

    let mut row_names = BTreeSet::new();
    for (sec, line, body) in &statements {
        let tokens: Vec<&str> = body.split_whitespace().collect();
        match sec {
            Section::Objective => {
                if !report.objective.is_empty() {
                    return Err(lint_err(*line, "second objective"));
                }
                let rest = match tokens.first() {
                    Some(t) if t.ends_with(':') => &tokens[1..],
                    _ => &tokens[..],
                };
                let (terms, used) = parse_terms(rest, *line)?;
                if used != rest.len() {
                    return Err(lint_err(*line, "relation in objective"));
                }
                report.objective = terms;
            }
            Section::Rows => {
                let Some(name) = tokens.first().and_then(|t| t.strip_suffix(':')) else {
                    return Err(lint_err(*line, "row without a name"));
                };
                if !valid_name(name) || !row_names.insert(name.to_string()) {
                    return Err(lint_err(*line, format!("bad or duplicate row name {name:?}")));
                }
                let (terms, used) = parse_terms(&tokens[1..], *line)?;
                let rest = &tokens[1 + used..];
                let (sense, rhs) = match rest {
                    [s, r] => {
                        let sense = match *s {
                            "<=" | "=<" => Sense::Le,
                            ">=" | "=>" => Sense::Ge,
                            _ => Sense::Eq,
                        };
                        let rhs = number(r).ok_or_else(|| lint_err(*line, format!("bad right-hand side {r:?}")))?;
                        (sense, rhs)
                    }
                    _ => return Err(lint_err(*line, "expected `sense rhs` at the end of the row")),
                };
                if terms.is_empty() {
                    return Err(lint_err(*line, "empty row"));
                }
                report.rows.push(ParsedRow {
                    name: name.to_string(),
                    terms,
                    sense,
                    rhs,
                });
            }
            Section::Bounds => {
                let (name, lb, ub) = match tokens.as_slice() {
                    [name, "=", v] => {
                        let v = number(v).ok_or_else(|| lint_err(*line, "bad fixed value"))?;
                        (name.to_string(), v.clone(), v)
                    }
                    [lb, "<=", name, "<=", ub] => {
                        let lb = number(lb).ok_or_else(|| lint_err(*line, "bad lower bound"))?;
                        let ub = number(ub).ok_or_else(|| lint_err(*line, "bad upper bound"))?;
                        (name.to_string(), lb, ub)
                    }
                    _ => return Err(lint_err(*line, "unsupported bound form")),
                };
                if !valid_name(&name) || lb > ub {
                    return Err(lint_err(*line, format!("bad bound for {name}")));
                }
                if report.bounds.insert(name.clone(), (lb, ub)).is_some() {
                    return Err(lint_err(*line, format!("{name} bounded twice")));
                }
            }
            Section::Binary | Section::General => {
                for t in tokens {
                    if !valid_name(t) {
                        return Err(lint_err(*line, format!("bad variable name {t:?}")));
                    }
                    if *sec == Section::Binary {
                        report.binaries.push(t.to_string());
                    } else {
                        report.generals.push(t.to_string());
                    }
                }
            }
        }
    }

    let binaries: BTreeSet<&String> = report.binaries.iter().collect();
    let generals: BTreeSet<&String> = report.generals.iter().collect();
    if binaries.len() != report.binaries.len() || generals.len() != report.generals.len() {
        return Err(lint_err(0, "variable declared twice in an integrality section"));
    }
    if let Some(v) = binaries.iter().find(|v| report.bounds.contains_key(**v) || generals.contains(*v)) {
        return Err(lint_err(0, format!("binary {v} also bounded or general")));
    }
    let declared = |v: &String| report.bounds.contains_key(v) || binaries.contains(v) || generals.contains(v);
    for (v, _) in report.objective.iter().chain(report.rows.iter().flat_map(|r| r.terms.iter())) {
        if !declared(v) {
            return Err(lint_err(0, format!("undeclared variable {v}")));
        }
    }
    Ok(report)
}
