use serde_json::json;
use twotime_core::hardy::{build_scenario, RunOptions};
use twotime_core::parallel::Execution;

use crate::config::{Command, RunConfig};
use crate::error::{CliError, Context};
use crate::output::{csv_bytes, Check, Outcome, RunSummary};

const TV_LIMIT: f64 = 0.02;

/// Transports `|ψ^h(0)|²` samples and compares positions with `|ψ^h(s)|²`.
pub fn run(config: &RunConfig, execution: Execution) -> Result<Outcome, CliError> {
    let scenario = build_scenario(config.geometry()).context("building the scenario")?;
    let opts = RunOptions { execution, ..RunOptions::default() };
    let eq = &config.equilibrium;
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut per_h = Vec::new();
    let mut aborted = 0;
    for &h in &eq.h_values {
        let s_end = scenario.runner(h, &[], &opts).context(format!("field for h = {h}"))?.field().s_end();
        let s_values: Vec<f64> = eq.s_fractions.iter().map(|f| f * s_end).collect();
        let report = scenario
            .equivariance(h, config.n, config.seed, &s_values, (eq.cells_a, eq.cells_b), &opts)
            .context(format!("equivariance at h = {h}"))?;
        aborted += report.aborted;
        for c in &report.checks {
            checks.push(Check::below(format!("total variation h = {h} s = {:.4}", c.s), c.tv, TV_LIMIT));
            for (cell, (count, p)) in c.counts.iter().zip(&c.probabilities).enumerate() {
                rows.push(vec![h.to_string(), c.s.to_string(), cell.to_string(), count.to_string(), p.to_string()]);
            }
        }
        per_h.push(json!({
            "h": h,
            "s_end": s_end,
            "aborted": report.aborted,
            "checks": report.checks.iter().map(|c| json!({"s": c.s, "tv": c.tv, "max_z": c.max_z})).collect::<Vec<_>>(),
        }));
    }
    let mut summary = RunSummary::new(config, Command::Equilibrium, checks, json!({ "runs": per_h }));
    summary.flagged.insert("aborted".into(), aborted);
    Ok(Outcome {
        summary,
        files: vec![("equivariance.csv".into(), csv_bytes(&["h", "s", "cell", "count", "probability"], rows)?)],
    })
}
