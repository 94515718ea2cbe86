/// Solver settings used for the reference computations, as CPLEX
/// interactive commands.
pub const SOLVER_PARAMETERS: &str = "\
set simplex tolerances feasibility 1e-09
set simplex tolerances optimality 1e-3
set mip strategy variableselect 3
set mip tolerances absmipgap 1e-3
set emphasis numerical yes
set timelimit 3600
";

/// The parameter file with a short header naming the model it belongs to.
pub fn solver_parameters(model_name: &str) -> String {
    format!(
        "# CPLEX settings for {model_name}\n\
         # variableselect 3 is strong branching; the time limit applies where a run was capped\n\
         {SOLVER_PARAMETERS}"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_every_setting() {
        let text = solver_parameters("m");
        for needle in ["feasibility 1e-09", "optimality 1e-3", "variableselect 3", "absmipgap 1e-3", "numerical yes", "timelimit 3600"] {
            assert!(text.contains(needle), "{needle}");
        }
    }
}
