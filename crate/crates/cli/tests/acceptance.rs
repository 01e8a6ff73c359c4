//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use num_rational::BigRational;
use rand::Rng;
use twotime_core::dirac::{
    dirac_current, dirac_equivariance, dirac_evolve, integrate_dirac_path, integrate_multitime_paths, path_set_distance,
    DiracBranch, DiracGrid, DiracGridState, EquivarianceConfig, GuidanceLaw, MultitimeDiracState, SpectralField,
};
use twotime_core::equilibrium::{certify_no_measure, hardy_constraints, verify_witness, Verdict, HARDY_BOTH_MINUS_Z};
use twotime_core::hardy::{build_scenario, DetectorSpec, Frame, HardyGeometry, HardyReport, RunOptions, Scenario, TrackLabel};
use twotime_core::measurement::{joint_probability, no_signaling_gap, shift_events, HeisenbergModel, MeasurementEvent};
use twotime_core::ode::OdeConfig;
use twotime_core::parallel::{stream_rng, Execution};
use twotime_core::spin::{Axis, Sign};
use twotime_core::state::Subsystem;

type C64 = num_complex::Complex64;

const SEED: u64 = 20_240_601;

struct Verdicts {
    failed: usize,
}

impl Verdicts {
    fn report(&mut self, id: u32, name: &str, elapsed: Duration, budget: Option<Duration>, result: Result<String, String>) {
        let over = budget.filter(|b| elapsed > *b);
        let (ok, detail) = match (result, over) {
            (Ok(d), None) => (true, d),
            (Ok(d), Some(b)) => (false, format!("{d}; took {:.2} s, budget {:.0} s", elapsed.as_secs_f64(), b.as_secs_f64())),
            (Err(d), _) => (false, d),
        };
        if !ok {
            self.failed += 1;
        }
        println!("{} {id:>2} {name}: {detail} [{:.2} s]", if ok { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
    }

    fn run(&mut self, id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Result<String, String>) {
        let start = Instant::now();
        let result = f();
        self.report(id, name, start.elapsed(), budget, result);
    }
}

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn label(s: &str) -> TrackLabel {
    s.parse().unwrap()
}

fn event(sub: Subsystem, axis: Axis, outcome: Sign) -> MeasurementEvent {
    MeasurementEvent::new(sub, 0.0, axis, outcome)
}

fn hardy_probabilities() -> Result<String, String> {
    let m = HeisenbergModel::hardy();
    let p = |a: (Axis, Sign), b: (Axis, Sign)| {
        joint_probability(&m, &[event(Subsystem::A, a.0, a.1), event(Subsystem::B, b.0, b.1)]).map_err(|e| e.to_string())
    };
    let xx = p((Axis::X, Sign::Plus), (Axis::X, Sign::Plus))?;
    let zeros = [
        p((Axis::X, Sign::Plus), (Axis::Z, Sign::Plus))?,
        p((Axis::Z, Sign::Plus), (Axis::X, Sign::Plus))?,
        p((Axis::Z, Sign::Minus), (Axis::Z, Sign::Minus))?,
    ];
    let dev = (xx - 1.0 / 12.0).abs();
    let worst_zero = zeros.iter().copied().fold(0.0, f64::max);
    ensure(dev <= 1e-12 && worst_zero <= 1e-12, format!("|P(+x,+x) - 1/12| = {dev:.1e}, largest forbidden = {worst_zero:.1e}"))
}

fn early_fraction(report: &HardyReport) -> Result<String, String> {
    let cell = report.table(Frame::IEarly.label()).and_then(|t| t.cell("a:+x", "b:+x")).ok_or("missing I(t1) table")?;
    let dev = (cell.fraction - 1.0 / 12.0).abs();
    ensure(dev <= 0.008, format!("fraction {:.5} ± {:.5}, |dev| = {dev:.5} (limit 0.008)", cell.fraction, cell.sigma))
}

fn equivariance(scenario: &Scenario) -> Result<String, String> {
    let opts = RunOptions::default();
    let mut worst = 0.0f64;
    let mut aborted = 0;
    for h in [-1.0, 0.0, 1.0] {
        let s_end = scenario.runner(h, &[], &opts).map_err(|e| e.to_string())?.field().s_end();
        let s: Vec<f64> = [0.3, 0.55, 0.8].iter().map(|f| f * s_end).collect();
        let rep = scenario.equivariance(h, 100_000, SEED, &s, (8, 4), &opts).map_err(|e| e.to_string())?;
        aborted += rep.aborted;
        for c in &rep.checks {
            if c.counts.len() != 32 {
                return Err(format!("{} cells instead of 32", c.counts.len()));
            }
            worst = worst.max(c.tv);
        }
    }
    ensure(worst < 0.02, format!("largest TV over 3 offsets x 3 parameters = {worst:.4} (limit 0.02), aborted {aborted}"))
}

/// Empirical weight of a cell the wave function leaves empty.
fn statement(scenario: &Scenario, report: &HardyReport, frame: Frame, a: &str, b: &str) -> Result<(f64, f64, f64), String> {
    let slice = scenario.slice(frame);
    let state = scenario.initial.evolve_to(slice.t_a, slice.t_b);
    let g = &scenario.geometry;
    let quantum = state.region_probability(g.track_region(label(a), slice.t_a).interval, g.track_region(label(b), slice.t_b).interval);
    let cell = report.table(frame.label()).and_then(|t| t.cell(a, b)).ok_or("missing cell")?;
    let n = report.n as f64;
    let sigma = (cell.fraction.max(1.0 / n) * (1.0 - cell.fraction) / n).sqrt();
    Ok((cell.fraction, quantum, (cell.fraction - quantum) / sigma))
}

fn statement_exhibits(scenario: &Scenario, minus: &HardyReport, plus: &HardyReport) -> Result<String, String> {
    let (f3, q3, z3) = statement(scenario, minus, Frame::III, "a:+x", "b:+z")?;
    let (f2, q2, z2) = statement(scenario, plus, Frame::II, "a:+z", "b:+x")?;
    let ok = [(f3, q3, z3), (f2, q2, z2)].iter().all(|&(f, q, z)| f >= 0.07 && q < 1e-6 && z > 10.0);
    ensure(
        ok,
        format!("h=-1 III(0): {f3:.4} vs {q3:.1e} ({z3:.0} sigma); h=+1 II(0): {f2:.4} vs {q2:.1e} ({z2:.0} sigma)"),
    )
}

fn courses(minus: &HardyReport, plus: &HardyReport) -> Result<String, String> {
    let fraction = |r: &HardyReport, exits: [&str; 2]| {
        let sub: Vec<_> = r.started_in(label("a:+x"), label("b:+x")).collect();
        let good = sub.iter().filter(|t| t.exit_channels == [Some(label(exits[0])), Some(label(exits[1]))]).count();
        (good as f64 / sub.len().max(1) as f64, sub.len())
    };
    let (fm, nm) = fraction(minus, ["a:-z", "b:+z"]);
    let (fp, np) = fraction(plus, ["a:+z", "b:-z"]);
    let flagged = minus.flagged.max(plus.flagged) as f64 / minus.n as f64;
    ensure(
        fm >= 0.99 && fp >= 0.99 && flagged < 1e-3,
        format!("h=-1 {fm:.4} of {nm}, h=+1 {fp:.4} of {np}, flagged fraction {flagged:.1e}"),
    )
}

fn detectors(scenario: &Scenario) -> Result<String, String> {
    let d = [DetectorSpec { track: label("a:+x"), time: -0.5 }];
    let cmp = scenario.compare_detectors(-1.0, 20_000, SEED, &d, &RunOptions::default()).map_err(|e| e.to_string())?;
    let good = cmp.fired_exits.iter().filter(|e| e[1] == Some(label("b:-z"))).count();
    let fraction = good as f64 / cmp.fired_exits.len().max(1) as f64;
    ensure(
        fraction >= 0.99 && cmp.identical == cmp.n && !cmp.fired_exits.is_empty(),
        format!("{good}/{} detections exit b:-z; identical prefixes {}/{}", cmp.fired_exits.len(), cmp.identical, cmp.n),
    )
}

fn certificate() -> Result<String, String> {
    let p = hardy_constraints();
    let Verdict::Infeasible { certificate } = certify_no_measure(&p).map_err(|e| e.to_string())? else {
        return Err("Hardy constraints reported feasible".into());
    };
    let bound = certificate.implied_lower_bound(&p, HARDY_BOTH_MINUS_Z).ok_or("certificate does not verify")?;
    let relaxed = p.without(HARDY_BOTH_MINUS_Z);
    let witness_ok = match certify_no_measure(&relaxed).map_err(|e| e.to_string())? {
        Verdict::Feasible { witness } => verify_witness(&relaxed, &witness),
        Verdict::Infeasible { .. } => false,
    };
    ensure(
        bound >= BigRational::new(1.into(), 12.into()) && witness_ok,
        format!("implied P(a_z=-1, b_z=-1) >= {bound}; relaxed system witness verified: {witness_ok}"),
    )
}

fn random_events<R: Rng>(rng: &mut R) -> Vec<MeasurementEvent> {
    let mut t = [rng.random_range(-2.0..0.0), rng.random_range(-2.0..0.0)];
    (0..4)
        .map(|_| {
            let k = rng.random_range(0..2);
            t[k] += rng.random_range(0.1..1.0);
            let sub = if k == 0 { Subsystem::A } else { Subsystem::B };
            MeasurementEvent::new(sub, t[k], axis(rng), if rng.random() { Sign::Plus } else { Sign::Minus })
        })
        .collect()
}

fn axis<R: Rng>(rng: &mut R) -> Axis {
    if rng.random() {
        Axis::X
    } else {
        Axis::Z
    }
}

fn multitime_invariance() -> Result<String, String> {
    let (mut shift, mut gap) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let mut rng = stream_rng(SEED, i);
        let model = HeisenbergModel::random(&mut rng);
        let events = random_events(&mut rng);
        let tau = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let p = joint_probability(&model, &events).map_err(|e| e.to_string())?;
        let (m2, e2) = shift_events(&model, &events, tau);
        shift = shift.max((p - joint_probability(&m2, &e2).map_err(|e| e.to_string())?).abs());
        let a = [(rng.random_range(-1.0..1.0), axis(&mut rng))];
        let b1 = [(rng.random_range(-1.0..1.0), axis(&mut rng))];
        let b2 = [(rng.random_range(-1.0..0.0), axis(&mut rng)), (0.5, axis(&mut rng))];
        gap = gap.max(no_signaling_gap(&model, &a, &b1, &b2).map_err(|e| e.to_string())?);
    }
    ensure(shift <= 1e-12 && gap <= 1e-12, format!("largest shift change {shift:.1e}, largest signaling gap {gap:.1e}"))
}

fn bohm_dirac() -> Result<String, String> {
    let err = |e: twotime_core::Error| e.to_string();
    let g = DiracGrid::new(64.0, 512, 1.0).map_err(err)?;
    let a = DiracGridState::gaussian(g, -3.0, 1.0, 1.0, 0.0).map_err(err)?;
    let b = DiracGridState::gaussian(g, 3.0, 1.0, -1.0, 0.0).map_err(err)?;
    let psi = a.spinors().iter().zip(b.spinors()).map(|(u, v)| [u[0] + v[0], u[1] + v[1]]).collect();
    let state = DiracGridState::normalized(g, psi, 0.0).map_err(err)?;

    let mut evolved = state.clone();
    let mut defect = dirac_current(&state).timelike_defect();
    for k in 1..=1000 {
        evolved = dirac_evolve(&evolved, 0.01);
        if k % 50 == 0 {
            defect = defect.min(dirac_current(&evolved).timelike_defect());
        }
    }
    let drift = (evolved.norm_sqr() - 1.0).abs();

    let cfg = EquivarianceConfig { n: 100_000, seed: SEED, duration: 3.0, step: 0.02, cells: 32 };
    let eq = dirac_equivariance(&state, &cfg, Execution::Parallel).map_err(err)?;

    let tight = OdeConfig { rel_tol: 1e-11, abs_tol: 1e-11, max_step: 0.1 };
    let pg = DiracGrid::new(40.0, 128, 1.0).map_err(err)?;
    let pk = |c, w, p| DiracGridState::gaussian(pg, c, w, p, 0.0);
    let pair = MultitimeDiracState::normalized(vec![
        DiracBranch { coeff: C64::new(1.0, 0.0), factors: vec![pk(-2.0, 1.0, 0.8).map_err(err)?, pk(2.0, 1.0, -0.5).map_err(err)?] },
        DiracBranch { coeff: C64::new(0.0, 0.7), factors: vec![pk(1.0, 0.8, -0.4).map_err(err)?, pk(-1.0, 1.2, 0.6).map_err(err)?] },
    ])
    .map_err(err)?;
    let start = [(0.0, -1.5), (0.0, 1.0)];
    let unit = integrate_multitime_paths(&pair, GuidanceLaw::UnitTime, &start, 2.0, &tight).map_err(err)?;
    let dens = integrate_multitime_paths(&pair, GuidanceLaw::DensityTime, &start, 60.0, &tight).map_err(err)?;
    let clocks = path_set_distance(&unit, &dens).map_err(err)?;
    let mut speed = eq.max_speed;
    for p in [&unit, &dens] {
        speed = speed.max(p.particle_path(0).max_segment_speed()).max(p.particle_path(1).max_segment_speed());
    }

    let single = pk(-1.0, 1.0, 0.7).map_err(err)?;
    let one = MultitimeDiracState::product(vec![single.clone()]).map_err(err)?;
    let cov = integrate_multitime_paths(&one, GuidanceLaw::Covariant, &[(0.0, -0.4)], 20.0, &tight).map_err(err)?;
    let t_end = cov.point(cov.len() - 1)[0];
    let reference = integrate_dirac_path(&SpectralField::new(&single), -0.4, 0.0, t_end, 0.005).map_err(err)?;
    let covariant = (0..cov.len())
        .map(|i| {
            let p = cov.point(i);
            reference.position_at(p[0]).map_or(f64::INFINITY, |x| (p[1] - x).abs())
        })
        .fold(0.0, f64::max);

    let ok = drift < 1e-8 && defect >= -1e-12 && speed <= 1.0 + 1e-9 && eq.tv < 0.02 && clocks < 1e-6 && covariant < 1e-6;
    ensure(
        ok,
        format!(
            "drift {drift:.1e}, defect {defect:.1e}, speed {speed:.6}, TV {:.4} (aborts {}), clocks {clocks:.1e}, N=1 {covariant:.1e}",
            eq.tv, eq.node_aborts
        ),
    )
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map(|entries| {
            entries
                .flatten()
                .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

fn determinism(scenario: &Scenario) -> Result<String, String> {
    let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-determinism");
    let _ = fs::remove_dir_all(&root);
    fs::create_dir_all(&root).map_err(|e| e.to_string())?;
    let config = root.join("run.toml");
    fs::write(&config, "n = 2000\nseed = 5\n[[detectors]]\ntrack = \"a:+x\"\ntime = -0.5\n").map_err(|e| e.to_string())?;
    let mut compared = 0;
    for command in ["hardy", "dirac", "nogo", "measure"] {
        let mut outputs = Vec::new();
        for run in ["first", "second"] {
            let out = root.join(format!("{command}-{run}"));
            let status = Command::new(env!("CARGO_BIN_EXE_twotime"))
                .args([command, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{command} exited with {}", status.status));
            }
            outputs.push(read_dir(&out));
        }
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            return Err(format!("{command} outputs differ between runs"));
        }
        compared += outputs[0].len();
    }
    // thread scheduling must not leak into results
    let opts = |execution| RunOptions { execution, ..RunOptions::default() };
    let par = scenario.run(-1.0, 500, 3, &[], &opts(Execution::Parallel)).map_err(|e| e.to_string())?;
    let seq = scenario.run(-1.0, 500, 3, &[], &opts(Execution::Sequential)).map_err(|e| e.to_string())?;
    let same = par.records.iter().zip(&seq.records).all(|(p, s)| {
        p.grid.len() == s.grid.len()
            && p.grid.iter().zip(&s.grid).all(|(x, y)| {
                x.0.to_bits() == y.0.to_bits() && x.1.q_a.to_bits() == y.1.q_a.to_bits() && x.1.q_b.to_bits() == y.1.q_b.to_bits()
            })
    });
    ensure(same, format!("{compared} files byte-identical across repeated runs; parallel and sequential ensembles agree: {same}"))
}

fn main() -> ExitCode {
    let mut v = Verdicts { failed: 0 };
    let secs = |s: u64| Some(Duration::from_secs(s));
    let scenario = build_scenario(HardyGeometry::default()).expect("default geometry is valid");

    v.run(1, "Hardy joint probabilities", secs(1), hardy_probabilities);

    let start = Instant::now();
    let minus = scenario.run(-1.0, 20_000, SEED, &[], &RunOptions::default()).map_err(|e| e.to_string());
    let elapsed = start.elapsed();
    let plus = scenario.run(1.0, 20_000, SEED, &[], &RunOptions::default()).map_err(|e| e.to_string());
    v.report(2, "early-slice 1/12 from trajectories", elapsed, secs(60), minus.as_ref().map_err(Clone::clone).and_then(early_fraction));
    v.run(3, "equivariance on 32 cells", secs(600), || equivariance(&scenario));
    match (&minus, &plus) {
        (Ok(minus), Ok(plus)) => {
            v.run(4, "tilted-slice crossings against quantum zeros", None, || statement_exhibits(&scenario, minus, plus));
            v.run(5, "courses of the (+x,+x) sub-ensemble", None, || courses(minus, plus));
        }
        (Err(e), _) | (_, Err(e)) => {
            v.report(4, "tilted-slice crossings against quantum zeros", elapsed, None, Err(e.clone()));
            v.report(5, "courses of the (+x,+x) sub-ensemble", elapsed, None, Err(e.clone()));
        }
    }
    v.run(6, "detector counterfactual", None, || detectors(&scenario));
    v.run(7, "exact no-go certificate", secs(1), certificate);
    v.run(8, "multitime translation invariance", None, multitime_invariance);
    v.run(9, "Bohm-Dirac dynamics", None, bohm_dirac);
    v.run(10, "determinism", None, || determinism(&scenario));

    println!("{} of 10 criteria failed", v.failed);
    if v.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
