use std::path::PathBuf;

use campaign_core::instances::{benchmark, load_instance, six_voter_example, stored_sample, uniform_degroot_benchmark};
use campaign_core::numeric::{parse_rational, parse_scientific, DecimalStyle};
use campaign_core::{ControlSequence, Instance, Rational};
use clap::Args;

use crate::Failure;

pub const BUILTINS: &str = "benchmark, six-voter, uniform-degroot, sample1..sample5";

/// Where the instance comes from.
#[derive(Debug, Args)]
pub struct InstanceArgs {
    /// Instance JSON file
    #[arg(long, value_name = "FILE", conflicts_with = "builtin")]
    pub instance: Option<PathBuf>,
    /// Built-in instance: benchmark, six-voter, uniform-degroot, sample1..sample5
    #[arg(long, value_name = "NAME")]
    pub builtin: Option<String>,
    /// Override the number of stages
    #[arg(long)]
    pub stages: Option<usize>,
}

pub struct Selected {
    pub instance: Instance,
    pub name: String,
}

impl InstanceArgs {
    pub fn load(&self) -> Result<Selected, Failure> {
        let (instance, name) = match (&self.instance, &self.builtin) {
            (Some(path), _) => {
                let loaded = load_instance(path).map_err(|e| Failure::Input(e.to_string()))?;
                for notice in &loaded.notices {
                    eprintln!("note: {notice}");
                }
                let name = loaded.name.unwrap_or_else(|| path.display().to_string());
                (loaded.instance, name)
            }
            (None, Some(name)) => (builtin(name, 0)?, name.clone()),
            (None, None) => return Err(Failure::Input("give --instance FILE or --builtin NAME".into())),
        };
        let instance = match (self.stages, &self.builtin, &self.instance) {
            (Some(n), _, _) => instance.with_horizon(n),
            // built-ins default to the stage count of their source
            (None, Some(name), None) => instance.with_horizon(default_stages(name)),
            _ => instance,
        };
        Ok(Selected { instance, name })
    }
}

fn default_stages(name: &str) -> usize {
    match name {
        "six-voter" => 6,
        "uniform-degroot" => 1,
        _ => 10,
    }
}

pub fn builtin(name: &str, horizon: usize) -> Result<Instance, Failure> {
    let found = match name {
        "benchmark" => Some(benchmark(horizon)),
        "six-voter" => Some(six_voter_example(horizon)),
        "uniform-degroot" => Some(uniform_degroot_benchmark(horizon)),
        _ => name
            .strip_prefix("sample")
            .and_then(|k| k.parse().ok())
            .and_then(|k| stored_sample(k, horizon)),
    };
    found.ok_or_else(|| Failure::Input(format!("unknown built-in instance {name:?}; expected one of {BUILTINS}")))
}

/// Output formatting of opinions.
#[derive(Debug, Args, Clone, Copy)]
pub struct FormatArgs {
    /// Fractional digits of decimal output (truncated)
    #[arg(long, default_value_t = 12)]
    pub digits: usize,
    /// Write exact p/q values instead of decimals
    #[arg(long)]
    pub exact: bool,
}

impl FormatArgs {
    pub fn style(&self) -> DecimalStyle {
        if self.exact {
            DecimalStyle::Exact
        } else {
            DecimalStyle::Truncated(self.digits)
        }
    }
}

/// `p/q`, decimal or scientific notation.
pub fn number(text: &str) -> Result<Rational, Failure> {
    parse_rational(text)
        .or_else(|_| parse_scientific(text.trim()))
        .map_err(|e| Failure::Input(format!("invalid number {text:?}: {e}")))
}

pub fn controls(text: &str) -> Result<ControlSequence, Failure> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(number)
        .collect::<Result<Vec<_>, _>>()?;
    ControlSequence::new(values).map_err(|e| Failure::Input(e.to_string()))
}
