use rand::Rng;
use serde_json::json;
use twotime_core::measurement::{joint_probability, no_signaling_gap, shift_events, HeisenbergModel, MeasurementEvent};
use twotime_core::parallel::stream_rng;
use twotime_core::spin::{Axis, Sign};
use twotime_core::state::Subsystem;

use crate::config::{Command, RunConfig};
use crate::error::{CliError, Context};
use crate::output::{csv_bytes, Check, Outcome, RunSummary};

const EXACT: f64 = 1e-12;

fn axis<R: Rng>(rng: &mut R) -> Axis {
    if rng.random() { Axis::X } else { Axis::Z }
}

/// Three events over both subsystems, times increasing per subsystem.
fn events<R: Rng>(rng: &mut R) -> Vec<MeasurementEvent> {
    let mut t = [rng.random_range(-2.0..0.0), rng.random_range(-2.0..0.0)];
    (0..3)
        .map(|_| {
            let k = rng.random_range(0..2);
            t[k] += rng.random_range(0.1..1.0);
            let sub = if k == 0 { Subsystem::A } else { Subsystem::B };
            let outcome = if rng.random() { Sign::Plus } else { Sign::Minus };
            MeasurementEvent::new(sub, t[k], axis(rng), outcome)
        })
        .collect()
}

struct Trial {
    p: f64,
    shifted: f64,
    tau: (f64, f64),
    gap: f64,
}

fn trial(seed: u64, index: u64) -> Result<Trial, CliError> {
    let mut rng = stream_rng(seed, index);
    let model = HeisenbergModel::random(&mut rng);
    let ev = events(&mut rng);
    let tau = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    let p = joint_probability(&model, &ev).context("joint probability")?;
    let (m2, e2) = shift_events(&model, &ev, tau);
    let shifted = joint_probability(&m2, &e2).context("shifted joint probability")?;
    let a = [(rng.random_range(-1.0..1.0), axis(&mut rng)), (1.5, axis(&mut rng))];
    let b1 = [(rng.random_range(-1.0..1.0), axis(&mut rng))];
    let b2 = [(rng.random_range(-1.0..0.0), axis(&mut rng)), (0.5, axis(&mut rng))];
    let gap = no_signaling_gap(&model, &a, &b1, &b2).context("no-signaling gap")?;
    Ok(Trial { p, shifted, tau, gap })
}

/// Hardy probabilities plus random multitime-translation and no-signaling trials.
pub fn run(config: &RunConfig) -> Result<Outcome, CliError> {
    let hardy = HeisenbergModel::hardy();
    let pair = |a: (Axis, Sign), b: (Axis, Sign)| {
        joint_probability(
            &hardy,
            &[MeasurementEvent::new(Subsystem::A, 0.0, a.0, a.1), MeasurementEvent::new(Subsystem::B, 0.0, b.0, b.1)],
        )
        .context("Hardy probability")
    };
    let (plus, minus) = (Sign::Plus, Sign::Minus);
    let xx = pair((Axis::X, plus), (Axis::X, plus))?;
    let mut checks = vec![Check::below("Hardy P(a_x=+1, b_x=+1) − 1/12", (xx - 1.0 / 12.0).abs(), EXACT)];
    for (name, a, b) in [
        ("Hardy P(a_x=+1, b_z=+1)", (Axis::X, plus), (Axis::Z, plus)),
        ("Hardy P(a_z=+1, b_x=+1)", (Axis::Z, plus), (Axis::X, plus)),
        ("Hardy P(a_z=−1, b_z=−1)", (Axis::Z, minus), (Axis::Z, minus)),
    ] {
        checks.push(Check::below(name, pair(a, b)?, EXACT));
    }

    let trials = (0..config.measure.trials as u64).map(|i| trial(config.seed, i)).collect::<Result<Vec<_>, _>>()?;
    let worst_shift = trials.iter().map(|t| (t.p - t.shifted).abs()).fold(0.0, f64::max);
    let worst_gap = trials.iter().map(|t| t.gap).fold(0.0, f64::max);
    checks.push(Check::below("largest change under multitime translation", worst_shift, EXACT));
    checks.push(Check::below("largest no-signaling gap", worst_gap, EXACT));

    let rows = trials.iter().enumerate().map(|(i, t)| {
        vec![
            i.to_string(),
            t.p.to_string(),
            t.shifted.to_string(),
            (t.p - t.shifted).abs().to_string(),
            t.tau.0.to_string(),
            t.tau.1.to_string(),
            t.gap.to_string(),
        ]
    });
    let table = csv_bytes(&["trial", "probability", "shifted_probability", "difference", "tau_a", "tau_b", "signaling_gap"], rows)?;
    let results = json!({ "hardy_xx": xx, "trials": trials.len(), "worst_shift": worst_shift, "worst_gap": worst_gap });
    let summary = RunSummary::new(config, Command::Measure, checks, results);
    Ok(Outcome { summary, files: vec![("measurement.csv".into(), table)] })
}
