use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde_json::{json, Value};
use twotime_core::equilibrium::{
    certify_no_measure, hardy_constraints, rational_string, verify_witness, FeasibilityProblem, Verdict,
};

use crate::config::{Command, RunConfig};
use crate::error::{CliError, Context};
use crate::output::{json_bytes, Check, Outcome, RunSummary, SCHEMA_VERSION};

fn rationals(values: &[BigRational]) -> Vec<String> {
    values.iter().map(rational_string).collect()
}

/// Verdict as JSON plus whether its evidence checks out.
fn describe(problem: &FeasibilityProblem, verdict: &Verdict) -> (Value, bool) {
    match verdict {
        Verdict::Feasible { witness } => {
            let ok = verify_witness(problem, witness);
            (json!({ "verdict": "feasible", "witness": rationals(witness), "verified": ok }), ok)
        }
        Verdict::Infeasible { certificate } => {
            let margin = certificate.verify(problem);
            let value = json!({
                "verdict": "infeasible",
                "multipliers": rationals(&certificate.multipliers),
                "margin": margin.as_ref().map(rational_string),
                "verified": margin.is_some(),
            });
            (value, margin.is_some())
        }
    }
}

/// Decides whether one distribution satisfies the constraints, then drops
/// `bound_row` and decides again.
pub fn run(config: &RunConfig) -> Result<Outcome, CliError> {
    let (problem, hardy) = match &config.nogo.constraints {
        Some(text) => (FeasibilityProblem::parse(text).context("parsing nogo.constraints")?, false),
        None => (hardy_constraints(), true),
    };
    let row = config.nogo.bound_row;
    if row >= problem.constraints.len() {
        return Err(CliError::Validation {
            field: "nogo.bound_row".into(),
            message: format!("row {row} does not exist in {} constraints", problem.constraints.len()),
        });
    }
    let verdict = certify_no_measure(&problem).context("solving the full system")?;
    let (mut full, full_ok) = describe(&problem, &verdict);
    let relaxed_problem = problem.without(row);
    let relaxed_verdict = certify_no_measure(&relaxed_problem).context("solving the relaxed system")?;
    let (relaxed, relaxed_ok) = describe(&relaxed_problem, &relaxed_verdict);

    let mut checks = vec![
        Check::flag("full system infeasible", !verdict.is_feasible()),
        Check::flag("full system evidence verified", full_ok),
    ];
    if let Verdict::Infeasible { certificate } = &verdict {
        let bound = certificate.implied_lower_bound(&problem, row);
        full["implied_lower_bound"] = json!(bound.as_ref().map(rational_string));
        let rhs = &problem.constraints[row].rhs;
        let target = if hardy { BigRational::new(1.into(), 12.into()) } else { rhs.clone() };
        let ok = bound.as_ref().is_some_and(|b| if hardy { b >= &target } else { b > rhs });
        let value = bound.as_ref().map_or(f64::NAN, |b| b.to_f64().unwrap_or(f64::NAN));
        let relation = if hardy { ">=" } else { ">" };
        checks.push(Check {
            name: format!("implied lower bound on row {row}"),
            value,
            sigma: None,
            bound: format!("{relation} {}", rational_string(&target)),
            passed: ok,
        });
    }
    checks.push(Check::flag(format!("system without row {row} feasible"), relaxed_verdict.is_feasible()));
    checks.push(Check::flag(format!("system without row {row} evidence verified"), relaxed_ok));

    let certificate = json!({
        "schema_version": SCHEMA_VERSION,
        "constraints": problem.to_string().lines().collect::<Vec<_>>(),
        "bound_row": row,
        "full": full,
        "relaxed": relaxed,
    });
    let summary = RunSummary::new(config, Command::Nogo, checks, certificate.clone());
    Ok(Outcome { summary, files: vec![("certificate.json".into(), json_bytes(&certificate)?)] })
}
