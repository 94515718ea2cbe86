use std::fmt;

use num_traits::{One, Zero};

use super::{strongest_guy_search, HeuristicError, SearchOptions};
use crate::dynamics::{convinced_count, perturbed_objective, simulate, ControlSequence, Instance, Trajectory};
use crate::numeric::{format_ratio, Rational};

/// Solves the auxiliary problem: `instance.start()` is the current state and
/// `instance.horizon()` the window length. Must return one control per stage
/// of the window.
pub trait InnerSolver: Sync {
    fn name(&self) -> String;
    fn solve(&self, instance: &Instance) -> Result<ControlSequence, String>;
}

/// Strongest-guy search as the inner solver.
#[derive(Debug, Clone, Default)]
pub struct StrongestGuyInner {
    pub options: SearchOptions,
}

impl InnerSolver for StrongestGuyInner {
    fn name(&self) -> String {
        format!("strongest-guy {}", self.options.mode)
    }

    fn solve(&self, instance: &Instance) -> Result<ControlSequence, String> {
        strongest_guy_search(instance, &self.options)
            .map(|r| r.controls)
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum MpcMode {
    /// Solve a window from the current state and apply its first control.
    #[default]
    SlidingWindow,
    /// Re-simulate from the start with all fixed controls and solve the next
    /// window. A failed solve is retried with the latest fixed control moved
    /// up, then down, by `nudge`.
    GrowingPrefix { nudge: Rational },
}

impl fmt::Display for MpcMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MpcMode::SlidingWindow => f.write_str("sliding window"),
            MpcMode::GrowingPrefix { nudge } => write!(f, "growing prefix, nudge {}", format_ratio(nudge)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MpcResult {
    pub controls: ControlSequence,
    pub trajectory: Trajectory,
    pub count: usize,
    pub perturbed_objective: Option<Rational>,
    pub inner_calls: usize,
}

/// Receding-horizon control over `instance.horizon()` stages with windows of
/// at most `window` stages.
pub fn mpc(
    instance: &Instance,
    window: usize,
    inner: &dyn InnerSolver,
    mode: &MpcMode,
) -> Result<MpcResult, HeuristicError> {
    if window == 0 {
        return Err(HeuristicError::ZeroMpcHorizon);
    }
    let horizon = instance.horizon();
    let mut fixed: Vec<Rational> = Vec::with_capacity(horizon);
    let mut state = instance.start().clone();
    let mut inner_calls = 0;
    for t in 0..horizon {
        let len = window.min(horizon - t);
        let solved = match mode {
            MpcMode::SlidingWindow => {
                inner_calls += 1;
                solve_window(inner, &instance.restarted(state.clone(), len), t, len)
            }
            MpcMode::GrowingPrefix { nudge } => {
                let mut attempt = solve_prefixed(instance, &fixed, inner, len, t);
                inner_calls += 1;
                if attempt.is_err() && t > 0 {
                    let original = fixed[t - 1].clone();
                    for shifted in [&original + nudge, &original - nudge] {
                        if shifted < Rational::zero() || shifted > Rational::one() {
                            continue;
                        }
                        fixed[t - 1] = shifted;
                        inner_calls += 1;
                        attempt = solve_prefixed(instance, &fixed, inner, len, t);
                        if attempt.is_ok() {
                            break;
                        }
                    }
                    if attempt.is_err() {
                        fixed[t - 1] = original;
                    }
                }
                attempt
            }
        }?;
        let u = solved.values()[0].clone();
        state = instance.step(&state_for(instance, &fixed, &state, mode)?, Some(&u))?;
        fixed.push(u);
    }
    let controls = ControlSequence::new(fixed)?;
    let trajectory = simulate(instance, &controls)?;
    debug_assert_eq!(trajectory.final_state(), &state);
    let count = convinced_count(trajectory.final_state(), instance.interval());
    let perturbed = if horizon > 0 {
        perturbed_objective(&trajectory, instance).ok()
    } else {
        None
    };
    Ok(MpcResult {
        controls,
        trajectory,
        count,
        perturbed_objective: perturbed,
        inner_calls,
    })
}

/// The state the next control acts on. Growing-prefix mode may have nudged
/// an earlier control, so it re-simulates.
fn state_for(
    instance: &Instance,
    fixed: &[Rational],
    current: &crate::dynamics::OpinionProfile,
    mode: &MpcMode,
) -> Result<crate::dynamics::OpinionProfile, HeuristicError> {
    match mode {
        MpcMode::SlidingWindow => Ok(current.clone()),
        MpcMode::GrowingPrefix { .. } => prefix_state(instance, fixed),
    }
}

fn prefix_state(instance: &Instance, fixed: &[Rational]) -> Result<crate::dynamics::OpinionProfile, HeuristicError> {
    let mut state = instance.start().clone();
    for u in fixed {
        state = instance.step(&state, Some(u))?;
    }
    Ok(state)
}

fn solve_prefixed(
    instance: &Instance,
    fixed: &[Rational],
    inner: &dyn InnerSolver,
    len: usize,
    stage: usize,
) -> Result<ControlSequence, HeuristicError> {
    let state = prefix_state(instance, fixed)?;
    solve_window(inner, &instance.restarted(state, len), stage, len)
}

fn solve_window(inner: &dyn InnerSolver, window: &Instance, stage: usize, len: usize) -> Result<ControlSequence, HeuristicError> {
    let controls = inner
        .solve(window)
        .map_err(|message| HeuristicError::InnerFailure { stage, message })?;
    if controls.len() != len {
        return Err(HeuristicError::InnerLength {
            stage,
            found: controls.len(),
            window: len,
        });
    }
    Ok(controls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristics::{Bound, SearchMode};
    use crate::instances::benchmark;
    use crate::numeric::ratio;

    struct Failing {
        at: usize,
    }

    impl InnerSolver for Failing {
        fn name(&self) -> String {
            "failing".into()
        }
        fn solve(&self, instance: &Instance) -> Result<ControlSequence, String> {
            if instance.horizon() <= self.at {
                Err("no solution".into())
            } else {
                Ok(ControlSequence::new(vec![ratio(1, 2); instance.horizon()]).unwrap())
            }
        }
    }

    #[test]
    fn full_window_matches_one_shot_search() {
        for horizon in 1..=3 {
            let b = benchmark(horizon);
            let one_shot = strongest_guy_search(&b, &SearchOptions::default()).unwrap();
            assert_eq!(one_shot.bound, Bound::OptimalInSpace);
            let r = mpc(&b, horizon + 1, &StrongestGuyInner::default(), &MpcMode::SlidingWindow).unwrap();
            assert_eq!(r.count, one_shot.count);
            assert_eq!(r.controls, one_shot.controls);
        }
    }

    #[test]
    fn window_one_is_greedy() {
        let b = benchmark(3);
        let r = mpc(&b, 1, &StrongestGuyInner::default(), &MpcMode::SlidingWindow).unwrap();
        assert_eq!(r.inner_calls, 3);
        assert_eq!(r.controls.len(), 3);
        assert!((3..=11).contains(&r.count));
    }

    #[test]
    fn growing_prefix_agrees_with_sliding_window_on_exact_inner() {
        let b = benchmark(4);
        let inner = StrongestGuyInner::default();
        let a = mpc(&b, 2, &inner, &MpcMode::SlidingWindow).unwrap();
        let g = mpc(&b, 2, &inner, &MpcMode::GrowingPrefix { nudge: ratio(1, 1_000_000) }).unwrap();
        assert_eq!(a.controls, g.controls);
    }

    #[test]
    fn inner_failure_reports_stage() {
        let b = benchmark(5);
        // windows shrink to 2 at stage 3
        let err = mpc(&b, 3, &Failing { at: 2 }, &MpcMode::SlidingWindow).unwrap_err();
        assert!(matches!(err, HeuristicError::InnerFailure { stage: 3, .. }), "{err}");
        let err = mpc(&b, 3, &Failing { at: 2 }, &MpcMode::GrowingPrefix { nudge: ratio(1, 1000) }).unwrap_err();
        assert!(matches!(err, HeuristicError::InnerFailure { stage: 3, .. }), "{err}");
    }

    #[test]
    fn zero_window_rejected() {
        assert!(matches!(
            mpc(&benchmark(2), 0, &StrongestGuyInner::default(), &MpcMode::SlidingWindow),
            Err(HeuristicError::ZeroMpcHorizon)
        ));
    }

    #[test]
    fn inner_name_mentions_mode() {
        let inner = StrongestGuyInner {
            options: SearchOptions::default().with_mode(SearchMode::Beam(3)),
        };
        assert!(inner.name().contains("beam"));
    }
}
