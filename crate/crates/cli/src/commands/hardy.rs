use std::collections::BTreeMap;

use serde_json::json;
use twotime_core::hardy::{build_scenario, Frame, HardyReport, RunOptions, Scenario, TrackLabel};
use twotime_core::parallel::Execution;
use twotime_core::state::Subsystem;

use crate::config::{Command, RunConfig};
use crate::error::{CliError, Context};
use crate::output::{csv_bytes, Check, Outcome, RunSummary};

const EARLY_TOLERANCE: f64 = 0.008;
const COURSE_FRACTION: f64 = 0.99;
const FLAGGED_FRACTION: f64 = 0.001;

fn label(s: &str) -> TrackLabel {
    s.parse().expect("static track label")
}

pub fn run(config: &RunConfig, execution: Execution) -> Result<Outcome, CliError> {
    let scenario = build_scenario(config.geometry()).context("building the scenario")?;
    let detectors = config.detector_specs()?;
    let opts = RunOptions { grid_points: config.grid_points, execution, ..RunOptions::default() };
    let report = scenario.run(config.h, config.n, config.seed, &detectors, &opts).context("running the ensemble")?;

    let mut checks = Vec::new();
    if let Some(cell) = report.table(Frame::IEarly.label()).and_then(|t| t.cell("a:+x", "b:+x")) {
        checks.push(Check {
            name: "early-slice (a:+x, b:+x) fraction".into(),
            value: cell.fraction,
            sigma: Some(cell.sigma),
            bound: format!("within {EARLY_TOLERANCE} of 1/12"),
            passed: (cell.fraction - 1.0 / 12.0).abs() <= EARLY_TOLERANCE,
        });
    }
    let theta = config.theta;
    let expectations = if (config.h + theta).abs() < 1e-12 {
        Some((Frame::III, ["a:+x", "b:+z"], ["a:-z", "b:+z"]))
    } else if (config.h - theta).abs() < 1e-12 {
        Some((Frame::II, ["a:+z", "b:+x"], ["a:+z", "b:-z"]))
    } else {
        None
    };
    // detections collapse the state, so these hold for undisturbed runs only
    if let Some((frame, cell, exits)) = expectations.filter(|_| detectors.is_empty()) {
        checks.extend(tilted_slice_checks(&scenario, &report, frame, cell)?);
        checks.push(course_check(&report, exits));
    }
    let flagged_fraction = report.flagged as f64 / report.n as f64;
    checks.push(Check::below("flagged trajectory fraction", flagged_fraction, FLAGGED_FRACTION));

    let mut results = json!({
        "h": report.h,
        "start_times": [report.start_times.0, report.start_times.1],
        "s_end": report.s_end,
        "n": report.n,
        "acceptance_rate": report.acceptance_rate,
        "sampler_warning": report.sampler_warning,
        "exit_channels_of_xx_starters": exit_counts(&report),
    });
    if !detectors.is_empty() {
        let cmp = scenario.compare_detectors(config.h, config.n, config.seed, &detectors, &opts).context("detector-free rerun")?;
        checks.push(Check::flag("pre-detection segments identical to the detector-free run", cmp.identical == cmp.n));
        let (t_a0, t_b0) = report.start_times;
        let first = detectors
            .iter()
            .min_by(|x, y| {
                let s = |d: &twotime_core::hardy::DetectorSpec| d.time - if d.track.sub == Subsystem::A { t_a0 } else { t_b0 };
                s(x).total_cmp(&s(y))
            })
            .expect("non-empty");
        // a positive x detection forbids the partner's +z exit
        let partner = match first.track.to_string().as_str() {
            "a:+x" => Some((1, label("b:-z"))),
            "b:+x" => Some((0, label("a:-z"))),
            _ => None,
        };
        if let Some((k, expected)) = partner {
            let good = cmp.fired_exits.iter().filter(|e| e[k] == Some(expected)).count();
            let fraction = good as f64 / cmp.fired_exits.len().max(1) as f64;
            let ok = !cmp.fired_exits.is_empty() && fraction >= COURSE_FRACTION;
            checks.push(Check {
                passed: ok,
                ..Check::at_least(format!("detected {} with partner exit {expected}", first.track), fraction, COURSE_FRACTION)
            });
        }
        results["detectors"] = json!({
            "first": first.track.to_string(),
            "identical_prefixes": cmp.identical,
            "fired": cmp.fired_exits.len(),
        });
    }

    let mut summary = RunSummary::new(config, Command::Hardy, checks, results);
    summary.flagged = flag_counts(&report);
    let frames = config.frames()?;
    Ok(Outcome {
        summary,
        files: vec![
            ("trajectories.csv".into(), trajectory_table(&report)?),
            ("crossings.csv".into(), crossing_table(&report, &frames)?),
        ],
    })
}

/// The empirical crossing weight of a cell whose quantum probability vanishes.
fn tilted_slice_checks(scenario: &Scenario, report: &HardyReport, frame: Frame, cell: [&str; 2]) -> Result<Vec<Check>, CliError> {
    let slice = scenario.slice(frame);
    let at_slice = scenario.initial.evolve_to(slice.t_a, slice.t_b);
    let g = &scenario.geometry;
    let quantum = at_slice.region_probability(
        g.track_region(label(cell[0]), slice.t_a).interval,
        g.track_region(label(cell[1]), slice.t_b).interval,
    );
    let table = report.table(frame.label()).ok_or_else(|| CliError::Missing(format!("table {}", frame.label())))?;
    let c = table.cell(cell[0], cell[1]).ok_or_else(|| CliError::Missing(format!("cell {cell:?}")))?;
    // binomial error with the observed fraction floored at one count
    let n = table.total.max(1) as f64;
    let p = c.fraction.max(1.0 / n);
    let sigma = (p * (1.0 - p) / n).sqrt();
    let z = (c.fraction - quantum) / sigma;
    let name = format!("{} ({}, {})", frame.label(), cell[0], cell[1]);
    Ok(vec![
        Check::at_least(format!("{name} crossing fraction"), c.fraction, 0.07).with_sigma(sigma),
        Check::below(format!("{name} quantum probability"), quantum, 1e-6),
        Check::at_least(format!("{name} deviation in sigmas"), z, 10.0),
    ])
}

fn course_check(report: &HardyReport, exits: [&str; 2]) -> Check {
    let sub: Vec<_> = report.started_in(label("a:+x"), label("b:+x")).collect();
    let good = sub.iter().filter(|r| r.exit_channels == [Some(label(exits[0])), Some(label(exits[1]))]).count();
    let fraction = good as f64 / sub.len().max(1) as f64;
    Check {
        passed: !sub.is_empty() && fraction >= COURSE_FRACTION,
        ..Check::at_least(format!("(a:+x, b:+x) starters exiting ({}, {})", exits[0], exits[1]), fraction, COURSE_FRACTION)
    }
}

fn exit_counts(report: &HardyReport) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in report.started_in(label("a:+x"), label("b:+x")) {
        let name = |c: Option<TrackLabel>| c.map_or_else(|| "none".to_string(), |l| l.to_string());
        *counts.entry(format!("{} {}", name(r.exit_channels[0]), name(r.exit_channels[1]))).or_insert(0) += 1;
    }
    counts
}

fn flag_counts(report: &HardyReport) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> =
        ["node", "underflow", "hop", "null-collapse", "any"].iter().map(|k| (k.to_string(), 0)).collect();
    for f in report.records.iter().map(|r| r.flags) {
        for (on, key) in [
            (f.node_abort, "node"),
            (f.step_underflow, "underflow"),
            (f.track_hop, "hop"),
            (f.null_collapse, "null-collapse"),
            (f.any(), "any"),
        ] {
            if on {
                *counts.get_mut(key).expect("preset key") += 1;
            }
        }
    }
    counts
}

fn trajectory_table(report: &HardyReport) -> Result<Vec<u8>, CliError> {
    let rows = report.records.iter().flat_map(|r| {
        r.grid.iter().map(move |(s, p)| {
            vec![
                r.id.to_string(),
                s.to_string(),
                p.t_a.to_string(),
                p.q_a.to_string(),
                p.t_b.to_string(),
                p.q_b.to_string(),
                r.flags.to_string(),
            ]
        })
    });
    csv_bytes(&["id", "s", "t_a", "q_a", "t_b", "q_b", "flags"], rows)
}

fn crossing_table(report: &HardyReport, frames: &[Frame]) -> Result<Vec<u8>, CliError> {
    let rows = report
        .tables
        .iter()
        .filter(|t| frames.iter().any(|f| f.label() == t.slice.label))
        .flat_map(|t| {
            t.cells.iter().map(move |c| {
                vec![
                    t.slice.label.clone(),
                    t.slice.t_a.to_string(),
                    t.slice.t_b.to_string(),
                    c.region_a.clone(),
                    c.region_b.clone(),
                    c.count.to_string(),
                    c.fraction.to_string(),
                    c.sigma.to_string(),
                ]
            })
        });
    csv_bytes(&["slice", "t_a", "t_b", "region_a", "region_b", "count", "fraction", "sigma"], rows)
}
