//! Run configuration: TOML in, validated [`RunConfig`] out.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use twotime_core::hardy::{build_scenario, DetectorSpec, Frame, HardyGeometry, TrackLabel};
use twotime_core::Error as CoreError;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Hardy,
    Equilibrium,
    Nogo,
    Dirac,
    Measure,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Command::Hardy => "hardy",
            Command::Equilibrium => "equilibrium",
            Command::Nogo => "nogo",
            Command::Dirac => "dirac",
            Command::Measure => "measure",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detector {
    pub track: String,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumSection {
    pub h_values: Vec<f64>,
    /// Fractions of the run's parameter span at which positions are compared.
    pub s_fractions: Vec<f64>,
    pub cells_a: usize,
    pub cells_b: usize,
}

impl Default for EquilibriumSection {
    fn default() -> Self {
        EquilibriumSection { h_values: vec![-1.0, 0.0, 1.0], s_fractions: vec![0.3, 0.55, 0.8], cells_a: 8, cells_b: 4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    pub center: f64,
    pub width: f64,
    pub momentum: f64,
}

/// `(re + i·im) · first ⊗ second`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub re: f64,
    pub im: f64,
    pub first: PacketSpec,
    pub second: PacketSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiracSection {
    pub length: f64,
    pub points: usize,
    pub mass: f64,
    /// Superposed with equal amplitudes into the ensemble state.
    pub packets: Vec<PacketSpec>,
    pub duration: f64,
    pub step: f64,
    pub cells: usize,
    pub drift_steps: usize,
    pub drift_dt: f64,
    pub pair_length: f64,
    pub pair_points: usize,
    pub branches: Vec<BranchSpec>,
    /// Start positions `[x₁, x₂]` at `t₁ = t₂ = 0`.
    pub starts: Vec<[f64; 2]>,
    /// Time span covered by each two-particle path.
    pub span: f64,
}

impl Default for DiracSection {
    fn default() -> Self {
        let p = |center, width, momentum| PacketSpec { center, width, momentum };
        DiracSection {
            length: 64.0,
            points: 512,
            mass: 1.0,
            packets: vec![p(-3.0, 1.0, 1.0), p(3.0, 1.0, -1.0)],
            duration: 3.0,
            step: 0.02,
            cells: 32,
            drift_steps: 1000,
            drift_dt: 0.01,
            pair_length: 40.0,
            pair_points: 128,
            branches: vec![
                BranchSpec { re: 1.0, im: 0.0, first: p(-2.0, 1.0, 0.8), second: p(2.0, 1.0, -0.5) },
                BranchSpec { re: 0.0, im: 0.7, first: p(1.0, 0.8, -0.4), second: p(-1.0, 1.2, 0.6) },
            ],
            starts: vec![[-1.5, 1.0], [-0.5, 0.3], [0.4, -1.2]],
            span: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NogoSection {
    /// Constraint text; the Hardy system when absent.
    pub constraints: Option<String>,
    /// Row whose implied bound is reported and which is dropped for the relaxed problem.
    pub bound_row: usize,
}

impl Default for NogoSection {
    fn default() -> Self {
        NogoSection { constraints: None, bound_row: twotime_core::equilibrium::HARDY_BOTH_MINUS_Z }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureSection {
    pub trials: usize,
}

impl Default for MeasureSection {
    fn default() -> Self {
        MeasureSection { trials: 100 }
    }
}

/// Everything a run depends on. Tables come last so the canonical TOML
/// form is always writable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub theta: f64,
    pub sigma: f64,
    pub separation: f64,
    pub kick_duration: f64,
    pub h: f64,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub check: bool,
    /// Parameter samples per trajectory in the trajectory table.
    pub grid_points: usize,
    /// Slice labels tabulated in the crossing table; all when empty.
    pub slices: Vec<String>,
    pub detectors: Vec<Detector>,
    pub equilibrium: EquilibriumSection,
    pub dirac: DiracSection,
    pub nogo: NogoSection,
    pub measure: MeasureSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = HardyGeometry::default();
        RunConfig {
            command: None,
            theta: g.theta,
            sigma: g.sigma,
            separation: g.separation,
            kick_duration: g.kick_duration,
            h: -g.theta,
            n: 20_000,
            seed: 1,
            out: PathBuf::from("out"),
            check: false,
            grid_points: 9,
            slices: Vec::new(),
            detectors: Vec::new(),
            equilibrium: EquilibriumSection::default(),
            dirac: DiracSection::default(),
            nogo: NogoSection::default(),
            measure: MeasureSection::default(),
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::Validation { field: field.to_string(), message: message.into() }
}

/// Parses and validates `text`; missing keys take their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |span| text[..span.start.min(text.len())].matches('\n').count() + 1);
        CliError::Parse { line, message: e.message().to_string() }
    })?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn geometry(&self) -> HardyGeometry {
        HardyGeometry { theta: self.theta, sigma: self.sigma, separation: self.separation, kick_duration: self.kick_duration }
    }

    /// Canonical TOML form; [`parse_config`] reads it back to an equal config.
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Serialize(e.to_string()))
    }

    pub fn detector_specs(&self) -> Result<Vec<DetectorSpec>, CliError> {
        self.detectors
            .iter()
            .map(|d| {
                let track: TrackLabel = d.track.parse().map_err(|e: CoreError| invalid("detectors", e.to_string()))?;
                Ok(DetectorSpec { track, time: d.time })
            })
            .collect()
    }

    pub fn frames(&self) -> Result<Vec<Frame>, CliError> {
        if self.slices.is_empty() {
            return Ok(Frame::ALL.to_vec());
        }
        self.slices.iter().map(|s| s.parse().map_err(|e: CoreError| invalid("slices", e.to_string()))).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (field, v) in [("theta", self.theta), ("sigma", self.sigma), ("kick_duration", self.kick_duration)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(field, format!("must be positive, got {v}")));
            }
        }
        if let Err(e) = build_scenario(self.geometry()) {
            let field = match e {
                CoreError::TrackSeparation { .. } => "separation",
                _ => "geometry",
            };
            return Err(invalid(field, e.to_string()));
        }
        if !(self.h.abs() <= 1.5 * self.theta) {
            return Err(invalid("h", format!("|h| must not exceed 1.5·theta, got {}", self.h)));
        }
        if self.n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        if self.grid_points < 2 {
            return Err(invalid("grid_points", "must be at least 2"));
        }
        self.frames()?;
        self.detector_specs()?;
        self.validate_equilibrium()?;
        self.validate_dirac()?;
        if self.measure.trials == 0 {
            return Err(invalid("measure.trials", "must be at least 1"));
        }
        Ok(())
    }

    fn validate_equilibrium(&self) -> Result<(), CliError> {
        let eq = &self.equilibrium;
        if eq.h_values.is_empty() || eq.h_values.iter().any(|h| !(h.abs() <= 1.5 * self.theta)) {
            return Err(invalid("equilibrium.h_values", "need at least one value with |h| ≤ 1.5·theta"));
        }
        if eq.s_fractions.is_empty() || eq.s_fractions.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(invalid("equilibrium.s_fractions", "need at least one value in [0, 1]"));
        }
        if eq.cells_a == 0 || eq.cells_b == 0 {
            return Err(invalid("equilibrium.cells_a", "cell counts must be positive"));
        }
        Ok(())
    }

    fn validate_dirac(&self) -> Result<(), CliError> {
        let d = &self.dirac;
        for (field, points) in [("dirac.points", d.points), ("dirac.pair_points", d.pair_points)] {
            if points < 8 || !points.is_power_of_two() {
                return Err(invalid(field, format!("must be a power of two ≥ 8, got {points}")));
            }
        }
        let positive = [
            ("dirac.length", d.length),
            ("dirac.pair_length", d.pair_length),
            ("dirac.duration", d.duration),
            ("dirac.step", d.step),
            ("dirac.drift_dt", d.drift_dt),
            ("dirac.span", d.span),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(field, format!("must be positive, got {v}")));
            }
        }
        if !(d.mass >= 0.0) {
            return Err(invalid("dirac.mass", "must be non-negative"));
        }
        if d.cells < 2 {
            return Err(invalid("dirac.cells", "need at least 2 cells"));
        }
        if d.packets.is_empty() || d.branches.is_empty() || d.starts.is_empty() {
            return Err(invalid("dirac", "packets, branches and starts must be non-empty"));
        }
        let widths = d.packets.iter().chain(d.branches.iter().flat_map(|b| [&b.first, &b.second]));
        if widths.into_iter().any(|p| !(p.width > 0.0)) {
            return Err(invalid("dirac.packets", "packet widths must be positive"));
        }
        Ok(())
    }
}
