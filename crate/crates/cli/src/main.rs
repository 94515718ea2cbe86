mod args;
mod csv;
mod plot;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use campaign_core::ga::{ga_run, FitnessKind, GaConfig, Selector};
use campaign_core::heuristics::{
    apply_index_sequence, mpc, strongest_guy_search, HeuristicError, IndexSequence, MpcMode, SearchMode,
    SearchOptions, StrongestGuyInner,
};
use campaign_core::instances::{instance_to_json, save_instance};
use campaign_core::milp::{
    build_model, emit_lp, emit_priorities, extract_control, lint_lp, parse_solution, snap_controls,
    solver_parameters, verify_control, MilpBuildOptions, MilpError, ModelKind, VarName,
};
use campaign_core::numeric::{DecimalStyle, Formatted};
use campaign_core::{convinced_count, perturbed_objective, simulate, ControlSequence, Instance, Rational, Trajectory};
use clap::{Parser, Subcommand, ValueEnum};
use num_traits::{One, Zero};

use args::{FormatArgs, InstanceArgs};

/// Environment variable capping the number of worker threads.
const THREADS_ENV: &str = "CAMPAIGN_CONTROL_THREADS";

#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or input files (exit 2).
    Input(String),
    /// Unexpected internal error (exit 1).
    Internal(String),
    /// Search budget exhausted or inner solver failure (exit 3).
    Solver(String),
    /// Solution does not belong to the model (exit 4).
    Mismatch(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => 1,
            Failure::Input(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Mismatch(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Internal(m) | Failure::Solver(m) | Failure::Mismatch(m) => m,
        }
    }
}

impl From<HeuristicError> for Failure {
    fn from(e: HeuristicError) -> Self {
        match e {
            HeuristicError::BudgetExceeded { .. }
            | HeuristicError::InnerFailure { .. }
            | HeuristicError::InnerLength { .. }
            | HeuristicError::BoundExceeded { .. } => Failure::Solver(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "campaign", version, about = "Optimal control of opinion dynamics with exact arithmetic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate an instance under a control or index sequence
    Simulate {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Comma-separated control opinions (p/q or decimals)
        #[arg(long, conflicts_with = "sequence")]
        controls: Option<String>,
        /// Comma-separated strongest-guy indices (0 = interval centre)
        #[arg(long)]
        sequence: Option<String>,
        /// Placement slack for --sequence
        #[arg(long, default_value = "0")]
        delta: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Strongest-guy search
    Search {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, value_enum, default_value_t = Mode::Exhaustive)]
        mode: Mode,
        /// Largest beam width
        #[arg(long, default_value_t = 3)]
        width: usize,
        /// Sequences drawn in random mode
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Placement slack short of full strength
        #[arg(long, default_value = "0")]
        delta: String,
        /// Maximum number of exhaustively evaluated sequences
        #[arg(long, default_value_t = campaign_core::heuristics::DEFAULT_BUDGET)]
        budget: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Genetic algorithm over control sequences
    Ga {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value_t = 500)]
        population: usize,
        #[arg(long, default_value_t = 250)]
        generations: usize,
        /// Mutations per generation as a fraction of the population
        #[arg(long, default_value = "1/15")]
        mutation_rate: String,
        #[arg(long, default_value_t = 2)]
        crossovers: usize,
        #[arg(long, value_enum, default_value_t = SelectorKind::Bcs)]
        selector: SelectorKind,
        /// Surviving fraction for the best-chromosomes selector
        #[arg(long, default_value = "0.95")]
        survival: String,
        /// MV, D2P2, BD2A, BD2M, MDBFL, MDBFLS or MDBFL2CS
        #[arg(long, default_value = "MV")]
        fitness: FitnessKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the best-so-far history CSV here
        #[arg(long, value_name = "FILE")]
        history: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Receding-horizon control with a strongest-guy inner solver
    Mpc {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Window length of each inner problem
        #[arg(long)]
        horizon: usize,
        #[arg(long, value_enum, default_value_t = Inner::StrongestGuy)]
        inner: Inner,
        /// Search mode of the inner solver
        #[arg(long, value_enum, default_value_t = Mode::Exhaustive)]
        inner_mode: Mode,
        #[arg(long, default_value_t = 3)]
        width: usize,
        /// Re-solve from the start with all fixed controls, nudging on failure
        #[arg(long)]
        growing_prefix: bool,
        #[arg(long, default_value = "1/1000000")]
        nudge: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write an MILP model as LP, branching priorities and solver settings
    EmitMilp {
        #[command(flatten)]
        instance: InstanceArgs,
        /// dg, bc-basic or bc-advanced
        #[arg(long)]
        model: ModelKind,
        /// Safety margin; positive gives a lower bound, non-positive a relaxation
        #[arg(long, default_value = "1e-5", allow_hyphen_values = true)]
        eps_hat: String,
        /// Add the symmetry-breaking cut x_0_0 <= 1/2
        #[arg(long)]
        symmetry_break: bool,
        /// Output prefix; writes PREFIX.lp, PREFIX.ord and PREFIX.prm
        #[arg(long, value_name = "PREFIX")]
        out: PathBuf,
    },
    /// Check a solver solution by exact re-simulation
    Verify {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Solution file (name/value text, HiGHS, CBC or CPLEX XML)
        #[arg(long, value_name = "FILE")]
        solution: PathBuf,
        #[arg(long, default_value = "bc-advanced")]
        model: ModelKind,
        #[arg(long, default_value = "1e-5", allow_hyphen_values = true)]
        eps_hat: String,
        /// Replace each control by the simplest rational this close; 0 keeps raw values
        #[arg(long, default_value = "1e-9")]
        snap: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Render a trajectory CSV as SVG
    Plot {
        /// Trajectory CSV written by simulate, search, ga or mpc
        #[arg(long, value_name = "FILE")]
        csv: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Instance for shading the conviction interval and confidence reach
        #[command(flatten)]
        instance: PlotInstance,
    },
    /// Write an instance as JSON
    Instance {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Output file; prints to stdout when omitted
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct PlotInstance {
    #[arg(long = "instance", value_name = "FILE", conflicts_with = "plot_builtin")]
    plot_instance: Option<PathBuf>,
    #[arg(long = "builtin", value_name = "NAME")]
    plot_builtin: Option<String>,
}

#[derive(Debug, clap::Args)]
struct OutputArgs {
    /// Write the trajectory CSV here
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Also write the summary here
    #[arg(long, value_name = "FILE")]
    summary: Option<PathBuf>,
    #[command(flatten)]
    format: FormatArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exhaustive,
    Beam,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SelectorKind {
    /// Weighted roulette
    Wrs,
    /// Best chromosomes
    Bcs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Inner {
    StrongestGuy,
}

fn search_mode(mode: Mode, width: usize, samples: u64, seed: u64) -> SearchMode {
    match mode {
        Mode::Exhaustive => SearchMode::Exhaustive,
        Mode::Beam => SearchMode::Beam(width),
        Mode::Random => SearchMode::Random { samples, seed },
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

struct Summary {
    text: String,
    style: DecimalStyle,
}

impl Summary {
    fn new(style: DecimalStyle) -> Self {
        Self {
            text: String::new(),
            style,
        }
    }

    fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        writeln!(self.text, "{key}: {value}").unwrap();
    }

    fn number(&mut self, key: &str, value: &Rational) {
        let shown = Formatted(value, self.style).to_string();
        self.line(key, shown);
    }

    fn controls(&mut self, controls: &ControlSequence) {
        let shown: Vec<String> = controls.values().iter().map(|u| Formatted(u, self.style).to_string()).collect();
        self.line("controls", shown.join(","));
    }

    fn outcome(&mut self, instance: &Instance, trajectory: &Trajectory) {
        let count = convinced_count(trajectory.final_state(), instance.interval());
        self.line("convinced", format!("{count}/{}", instance.n()));
        if instance.epsilon().is_some() && trajectory.stages() > 0 {
            if let Ok(p) = perturbed_objective(trajectory, instance) {
                self.number("perturbed objective", &p);
            }
        }
    }
}

fn finish(
    output: &OutputArgs,
    instance: &Instance,
    trajectory: &Trajectory,
    summary: Summary,
) -> Result<(), Failure> {
    if let Some(path) = &output.csv {
        write_file(path, &csv::write(trajectory, instance.interval(), output.format.style()))?;
    }
    if let Some(path) = &output.summary {
        write_file(path, &summary.text)?;
    }
    print!("{}", summary.text);
    Ok(())
}

fn header(summary: &mut Summary, name: &str, instance: &Instance) {
    summary.line("instance", name);
    summary.line("stages", instance.horizon());
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            instance,
            controls,
            sequence,
            delta,
            output,
        } => {
            let sel = instance.load()?;
            let mut inst = sel.instance;
            let mut summary = Summary::new(output.format.style());
            let trajectory = match (controls, sequence) {
                (Some(text), _) => {
                    let c = args::controls(&text)?;
                    if instance.stages.is_none() && !c.is_empty() {
                        inst = inst.with_horizon(c.len());
                    }
                    simulate(&inst, &c).map_err(|e| Failure::Input(e.to_string()))?
                }
                (None, Some(text)) => {
                    let seq: IndexSequence =
                        text.parse().map_err(|e| Failure::Input(format!("invalid sequence {text:?}: {e}")))?;
                    if instance.stages.is_none() {
                        inst = inst.with_horizon(seq.len());
                    }
                    let applied = apply_index_sequence(&inst, &seq, &args::number(&delta)?)?;
                    summary.line("sequence", &seq);
                    applied.trajectory
                }
                (None, None) => simulate(&inst, &ControlSequence::empty()).map_err(|e| Failure::Input(e.to_string()))?,
            };
            let mut full = Summary::new(summary.style);
            header(&mut full, &sel.name, &inst);
            full.text.push_str(&summary.text);
            full.controls(&trajectory.controls);
            full.outcome(&inst, &trajectory);
            finish(&output, &inst, &trajectory, full)
        }
        Command::Search {
            instance,
            mode,
            width,
            samples,
            seed,
            delta,
            budget,
            output,
        } => {
            let sel = instance.load()?;
            let options = SearchOptions {
                mode: search_mode(mode, width, samples, seed),
                delta: args::number(&delta)?,
                budget,
            };
            let r = strongest_guy_search(&sel.instance, &options)?;
            let trajectory = simulate(&sel.instance, &r.controls).map_err(|e| Failure::Internal(e.to_string()))?;
            let mut s = Summary::new(output.format.style());
            header(&mut s, &sel.name, &sel.instance);
            s.line("method", &r.provenance);
            if let Some(seq) = &r.sequence {
                s.line("sequence", seq);
            }
            s.controls(&r.controls);
            s.outcome(&sel.instance, &trajectory);
            s.line("bound", r.bound);
            s.line("evaluations", r.evaluations);
            finish(&output, &sel.instance, &trajectory, s)
        }
        Command::Ga {
            instance,
            population,
            generations,
            mutation_rate,
            crossovers,
            selector,
            survival,
            fitness,
            seed,
            history,
            output,
        } => {
            let sel = instance.load()?;
            let config = GaConfig {
                population_size: population,
                generations,
                mutation_rate: args::number(&mutation_rate)?,
                crossovers_per_generation: crossovers,
                selector: match selector {
                    SelectorKind::Wrs => Selector::WeightedRoulette,
                    SelectorKind::Bcs => Selector::BestChromosomes {
                        survival: args::number(&survival)?,
                    },
                },
                fitness,
                seed,
            };
            let r = ga_run(&sel.instance, &config).map_err(|e| Failure::Input(e.to_string()))?;
            let controls = r.best.to_controls().map_err(|e| Failure::Internal(e.to_string()))?;
            let trajectory = simulate(&sel.instance, &controls).map_err(|e| Failure::Internal(e.to_string()))?;
            if let Some(path) = &history {
                write_file(path, &r.history_csv())?;
            }
            let mut s = Summary::new(output.format.style());
            header(&mut s, &sel.name, &sel.instance);
            s.line("method", format!("genetic algorithm (seed {seed}, fitness {fitness}, selector {})", config.selector));
            s.controls(&controls);
            s.number("fitness", &r.best_score.fitness);
            s.outcome(&sel.instance, &trajectory);
            s.line("generations", r.history.len().saturating_sub(1));
            s.line("evaluations", r.evaluations);
            if r.uniform_fallbacks > 0 {
                s.line("uniform selection fallbacks", r.uniform_fallbacks);
            }
            finish(&output, &sel.instance, &trajectory, s)
        }
        Command::Mpc {
            instance,
            horizon,
            inner: Inner::StrongestGuy,
            inner_mode,
            width,
            growing_prefix,
            nudge,
            output,
        } => {
            let sel = instance.load()?;
            let inner = StrongestGuyInner {
                options: SearchOptions::default().with_mode(search_mode(inner_mode, width, 10_000, 0)),
            };
            let mode = if growing_prefix {
                MpcMode::GrowingPrefix {
                    nudge: args::number(&nudge)?,
                }
            } else {
                MpcMode::SlidingWindow
            };
            let r = mpc(&sel.instance, horizon, &inner, &mode)?;
            let mut s = Summary::new(output.format.style());
            header(&mut s, &sel.name, &sel.instance);
            s.line("method", format!("mpc (window {horizon}, {mode}, inner {})", campaign_core::heuristics::InnerSolver::name(&inner)));
            s.controls(&r.controls);
            s.outcome(&sel.instance, &r.trajectory);
            s.line("inner calls", r.inner_calls);
            finish(&output, &sel.instance, &r.trajectory, s)
        }
        Command::EmitMilp {
            instance,
            model,
            eps_hat,
            symmetry_break,
            out,
        } => {
            let sel = instance.load()?;
            let options = MilpBuildOptions::default()
                .with_eps_hat(args::number(&eps_hat)?)
                .with_symmetry_break(symmetry_break);
            let m = build_model(model, &sel.instance, sel.instance.horizon(), &options)
                .map_err(|e| Failure::Input(e.to_string()))?;
            let lp = emit_lp(&m);
            let lint = lint_lp(&lp).map_err(|e| Failure::Internal(format!("emitted LP fails the linter: {e}")))?;
            let with_ext = |ext: &str| {
                let mut p = out.clone().into_os_string();
                p.push(ext);
                PathBuf::from(p)
            };
            let (lp_path, ord_path, prm_path) = (with_ext(".lp"), with_ext(".ord"), with_ext(".prm"));
            write_file(&lp_path, &lp)?;
            write_file(&ord_path, &emit_priorities(&m))?;
            write_file(&prm_path, &solver_parameters(&m.name))?;
            println!("model: {}", m.name);
            println!("variables: {} ({} binary, {} general)", lint.variable_count(), m.num_binaries(), m.num_generals());
            println!("constraints: {}", lint.constraint_count());
            for p in [lp_path, ord_path, prm_path] {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Verify {
            instance,
            solution,
            model,
            eps_hat,
            snap,
            output,
        } => {
            let sel = instance.load()?;
            let inst = &sel.instance;
            let stages = inst.horizon();
            let eps_hat = args::number(&eps_hat)?;
            let options = MilpBuildOptions::default().with_eps_hat(eps_hat.clone());
            let m = build_model(model, inst, stages, &options).map_err(|e| Failure::Input(e.to_string()))?;
            let sol = parse_solution(&read_file(&solution)?).map_err(|e| Failure::Input(e.to_string()))?;
            sol.check_names(&m).map_err(|e| match e {
                MilpError::UnknownVariable(name) => {
                    Failure::Mismatch(format!("solution variable {name} is not part of model {}", m.name))
                }
                e => Failure::Input(e.to_string()),
            })?;
            let raw = extract_control(&sol, stages).map_err(|e| Failure::Input(e.to_string()))?;
            let tol = args::number(&snap)?;
            let controls = if tol.is_zero() { raw.clone() } else { snap_controls(&raw, &tol) };
            let report = verify_control(inst, &controls, &eps_hat).map_err(|e| Failure::Input(e.to_string()))?;

            let mut s = Summary::new(output.format.style());
            header(&mut s, &sel.name, inst);
            s.line("model", &m.name);
            if let Some(obj) = &sol.objective {
                s.number("model objective", obj);
            }
            if let Some(claimed) = claimed_count(&sol, model) {
                s.line("model convinced", claimed);
            }
            s.controls(&controls);
            if controls != raw {
                let raw_count = verify_control(inst, &raw, &eps_hat)
                    .map_err(|e| Failure::Input(e.to_string()))?
                    .count;
                s.line("snapped", format!("yes (unsnapped controls convince {raw_count})"));
            }
            s.outcome(inst, &report.trajectory);
            if report.band_hits.is_empty() {
                s.line("safety band", "clear");
            } else {
                s.line("safety band", format!("{} hits", report.band_hits.len()));
                for hit in &report.band_hits {
                    let d = Formatted(&hit.distance, s.style).to_string();
                    s.line("band hit", format!("stage {} between {} and {} at distance {d}", hit.stage, hit.a, hit.b));
                }
            }
            finish(&output, inst, &report.trajectory, s)
        }
        Command::Plot { csv: path, out, instance } => {
            let records = csv::read(&read_file(&path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            let mut deco = plot::Decorations {
                title: Some(path.display().to_string()),
                ..Default::default()
            };
            let source = InstanceArgs {
                instance: instance.plot_instance,
                builtin: instance.plot_builtin,
                stages: None,
            };
            if source.instance.is_some() || source.builtin.is_some() {
                let inst = source.load()?.instance;
                deco.interval = Some((inst.interval().left.clone(), inst.interval().right.clone()));
                deco.epsilon = inst.epsilon().cloned();
            }
            write_file(&out, &plot::render(&records, &deco))?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Instance { instance, out } => {
            let sel = instance.load()?;
            match out {
                Some(path) => {
                    save_instance(&sel.instance, Some(&sel.name), &path).map_err(|e| Failure::Input(e.to_string()))?;
                    println!("wrote {}", path.display());
                }
                None => print!("{}", instance_to_json(&sel.instance, Some(&sel.name))),
            }
            Ok(())
        }
    }
}

/// Convinced voters according to the solution's own indicator variables.
fn claimed_count(sol: &campaign_core::milp::SolutionMap, model: ModelKind) -> Option<usize> {
    let one = Rational::one();
    let names = sol.values.iter().filter(|(_, v)| **v == one).filter_map(|(k, _)| k.parse::<VarName>().ok());
    match model {
        ModelKind::DeGroot | ModelKind::BcBasic => Some(names.filter(|n| matches!(n, VarName::Z { .. })).count()),
        ModelKind::BcAdvanced => names
            .filter_map(|n| match n {
                VarName::Conv { jmin, jmax } if jmin >= 1 => Some(jmax + 1 - jmin),
                _ => None,
            })
            .max(),
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(text) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Failure::Input(format!("{THREADS_ENV} must be a positive integer, found {text:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Internal(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
