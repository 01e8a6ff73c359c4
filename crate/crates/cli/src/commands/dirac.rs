use num_complex::Complex64 as C64;
use serde_json::json;
use twotime_core::dirac::{
    dirac_current, dirac_equivariance, dirac_evolve, integrate_dirac_path, integrate_multitime_paths, multitime_velocity,
    path_set_distance, DiracBranch, DiracGrid, DiracGridState, EquivarianceConfig, GuidanceLaw, MultitimeDiracState,
    MultitimePaths, SpectralField,
};
use twotime_core::ode::OdeConfig;
use twotime_core::parallel::Execution;

use crate::config::{Command, DiracSection, PacketSpec, RunConfig};
use crate::error::{CliError, Context};
use crate::output::{csv_bytes, Check, Outcome, RunSummary};

const DRIFT_LIMIT: f64 = 1e-8;
const DEFECT_FLOOR: f64 = -1e-12;
const SPEED_LIMIT: f64 = 1.0 + 1e-9;
const TV_LIMIT: f64 = 0.02;
const PATH_LIMIT: f64 = 1e-6;
/// Step of the fixed-step single-particle reference path.
const REFERENCE_STEP: f64 = 0.005;

fn tight() -> OdeConfig {
    OdeConfig { rel_tol: 1e-11, abs_tol: 1e-11, max_step: 0.1 }
}

fn packet(grid: DiracGrid, p: &PacketSpec) -> Result<DiracGridState, CliError> {
    DiracGridState::gaussian(grid, p.center, p.width, p.momentum, 0.0).context("building a packet")
}

/// Equal-amplitude superposition of the configured packets.
fn ensemble_state(d: &DiracSection) -> Result<DiracGridState, CliError> {
    let grid = DiracGrid::new(d.length, d.points, d.mass).context("dirac grid")?;
    let packets = d.packets.iter().map(|p| packet(grid, p)).collect::<Result<Vec<_>, _>>()?;
    let psi = (0..grid.points())
        .map(|j| packets.iter().fold([C64::new(0.0, 0.0); 2], |acc, s| [acc[0] + s.spinors()[j][0], acc[1] + s.spinors()[j][1]]))
        .collect();
    DiracGridState::normalized(grid, psi, 0.0).context("normalizing the ensemble state")
}

fn pair_state(d: &DiracSection) -> Result<MultitimeDiracState, CliError> {
    let grid = DiracGrid::new(d.pair_length, d.pair_points, d.mass).context("pair grid")?;
    let branches = d
        .branches
        .iter()
        .map(|b| Ok(DiracBranch { coeff: C64::new(b.re, b.im), factors: vec![packet(grid, &b.first)?, packet(grid, &b.second)?] }))
        .collect::<Result<Vec<_>, CliError>>()?;
    MultitimeDiracState::normalized(branches).context("normalizing the pair state")
}

/// Integrates `law` until the first clock has advanced by `span`, doubling the
/// parameter range when the density clock runs slow.
fn paths_to_span(state: &MultitimeDiracState, law: GuidanceLaw, start: &[(f64, f64)], span: f64) -> Result<MultitimePaths, CliError> {
    let rate = multitime_velocity(state, law, start).context("starting velocity")?[0].0;
    let mut s_end = 1.2 * span / rate;
    for _ in 0..6 {
        let paths = integrate_multitime_paths(state, law, start, s_end, &tight()).context(format!("{law} paths"))?;
        if paths.point(paths.len() - 1)[0] - start[0].0 >= span {
            return Ok(paths);
        }
        s_end *= 2.0;
    }
    Err(CliError::Missing(format!("{law} clock did not reach the span {span}")))
}

fn path_rows(paths: &MultitimePaths, start: usize, rows: &mut Vec<Vec<String>>) {
    for (i, s) in paths.parameters().iter().enumerate() {
        let mut row = vec![paths.law().to_string(), start.to_string(), s.to_string()];
        row.extend(paths.point(i).iter().map(|v| v.to_string()));
        row.resize(7, String::new());
        rows.push(row);
    }
}

pub fn run(config: &RunConfig, execution: Execution) -> Result<Outcome, CliError> {
    let d = &config.dirac;
    let state = ensemble_state(d)?;

    let mut evolved = state.clone();
    let mut defect = dirac_current(&state).timelike_defect();
    for step in 1..=d.drift_steps {
        evolved = dirac_evolve(&evolved, d.drift_dt);
        if step % 100 == 0 {
            defect = defect.min(dirac_current(&evolved).timelike_defect());
        }
    }
    let drift = (evolved.norm_sqr() - 1.0).abs();

    let cfg = EquivarianceConfig { n: config.n, seed: config.seed, duration: d.duration, step: d.step, cells: d.cells };
    let eq = dirac_equivariance(&state, &cfg, execution).context("ensemble transport")?;
    let tv_sigma = (d.cells as f64 / (2.0 * std::f64::consts::PI * config.n as f64)).sqrt();

    let pair = pair_state(d)?;
    let single = MultitimeDiracState::product(vec![pair.branches()[0].factors[0].clone()]).context("single-particle state")?;
    let single_field = SpectralField::new(&single.branches()[0].factors[0]);
    let mut rows = Vec::new();
    let (mut clock_distance, mut covariant_distance, mut speed) = (0.0f64, 0.0f64, eq.max_speed);
    let mut offsets = Vec::new();
    for (i, &[x1, x2]) in d.starts.iter().enumerate() {
        let start = [(0.0, x1), (0.0, x2)];
        let unit = paths_to_span(&pair, GuidanceLaw::UnitTime, &start, d.span)?;
        let density = paths_to_span(&pair, GuidanceLaw::DensityTime, &start, d.span)?;
        let covariant = paths_to_span(&pair, GuidanceLaw::Covariant, &start, d.span)?;
        clock_distance = clock_distance.max(path_set_distance(&unit, &density).context("path-set distance")?);
        for p in [&unit, &density, &covariant] {
            speed = speed.max((0..2).map(|k| p.particle_path(k).max_segment_speed()).fold(0.0, f64::max));
            path_rows(p, i, &mut rows);
        }
        let (lo, hi) = covariant.time_offset_range(0, 1);
        offsets.push(json!({ "start": i, "unit_time": unit.time_offset_range(0, 1), "covariant": [lo, hi] }));

        let one = paths_to_span(&single, GuidanceLaw::Covariant, &[(0.0, x1)], d.span)?;
        let t_end = one.point(one.len() - 1)[0];
        let reference = integrate_dirac_path(&single_field, x1, 0.0, t_end, REFERENCE_STEP).context("reference path")?;
        for k in 0..one.len() {
            let p = one.point(k);
            let x = reference.position_at(p[0]).ok_or_else(|| CliError::Missing(format!("reference at t = {}", p[0])))?;
            covariant_distance = covariant_distance.max((p[1] - x).abs());
        }
        path_rows(&one, i, &mut rows);
    }

    let checks = vec![
        Check::below(format!("norm drift over {} steps", d.drift_steps), drift, DRIFT_LIMIT),
        Check::at_least("smallest (j0)^2 - (j1)^2", defect, DEFECT_FLOOR),
        Check::below("largest path speed", speed, SPEED_LIMIT),
        Check::below("ensemble total variation against j0", eq.tv, TV_LIMIT).with_sigma(tv_sigma),
        Check::below("unit-time vs density-time path-set distance", clock_distance, PATH_LIMIT),
        Check::below("single-particle covariant vs current-guided path", covariant_distance, PATH_LIMIT),
    ];
    let results = json!({
        "norm_drift": drift,
        "timelike_defect": defect,
        "equivariance": { "tv": eq.tv, "max_speed": eq.max_speed, "node_aborts": eq.node_aborts },
        "clock_offsets": offsets,
    });
    let mut summary = RunSummary::new(config, Command::Dirac, checks, results);
    summary.flagged.insert("node".into(), eq.node_aborts);
    let cells = eq
        .counts
        .iter()
        .zip(&eq.probabilities)
        .enumerate()
        .map(|(c, (n, p))| vec![c.to_string(), n.to_string(), p.to_string()]);
    Ok(Outcome {
        summary,
        files: vec![
            ("equivariance.csv".into(), csv_bytes(&["cell", "count", "probability"], cells)?),
            ("dirac_paths.csv".into(), csv_bytes(&["law", "start", "s", "t1", "x1", "t2", "x2"], rows)?),
        ],
    })
}
