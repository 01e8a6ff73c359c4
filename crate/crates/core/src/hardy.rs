//! The Hardy experiment: x-splitters with recombiners followed by z-splitters
//! on both particles, frames realized as time offsets, detectors as collapse.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{total_variation, CrossingTable, EquilibriumSampler, RegionPartition, SliceSpec, TrackRegion};
use crate::error::{Error, Result};
use crate::guidance::{IntegratorConfig, SynchronizedField, SynchronizedPath, SynchronizedPoint};
use crate::packet::GaussianPacket;
use crate::parallel::{map_indexed, Execution};
use crate::schedule::{PotentialSchedule, Window};
use crate::spin::{Axis, Sign};
use crate::state::{hardy_state, Interval, Subsystem, TwoTimeState};

/// Apparatus timing and scales. The x-splitter fires at `−3ϑ`, each particle
/// is recombined at `0` and z-split right after; tracks leave at `±d/ϑ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardyGeometry {
    pub theta: f64,
    pub sigma: f64,
    pub separation: f64,
    pub kick_duration: f64,
}

impl Default for HardyGeometry {
    fn default() -> Self {
        HardyGeometry { theta: 1.0, sigma: 1.0, separation: 40.0, kick_duration: 0.02 }
    }
}

impl HardyGeometry {
    pub fn split_time(&self) -> f64 {
        -3.0 * self.theta
    }

    pub fn recombination_time(&self) -> f64 {
        0.0
    }

    pub fn exit_time(&self) -> f64 {
        2.0 * self.theta
    }

    pub fn track_speed(&self) -> f64 {
        self.separation / self.theta
    }

    pub fn force(&self) -> f64 {
        self.track_speed() / self.kick_duration
    }

    /// Free-spreading packet width `t` after preparation at the split time.
    pub fn width_at(&self, t: f64) -> f64 {
        let elapsed = t - self.split_time();
        self.sigma * (1.0 + (elapsed / (2.0 * self.sigma * self.sigma)).powi(2)).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("theta", self.theta),
            ("sigma", self.sigma),
            ("separation", self.separation),
            ("kick_duration", self.kick_duration),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Geometry(format!("{name} must be positive and finite")));
            }
        }
        if self.kick_duration > self.theta / 20.0 {
            return Err(Error::Geometry("kick_duration must not exceed theta/20".into()));
        }
        let min_required = 8.0 * self.width_at(self.exit_time());
        if self.separation < min_required {
            return Err(Error::TrackSeparation { separation: self.separation, min_required });
        }
        Ok(())
    }

    /// Splitter, recombiner and z-splitter windows (identical for both particles).
    pub fn schedule(&self) -> PotentialSchedule {
        let (ts, tm, d, f) = (self.split_time(), self.recombination_time(), self.kick_duration, self.force());
        let tr = 0.5 * (ts + tm);
        PotentialSchedule::new(vec![
            Window { start: ts, end: ts + d, axis: Axis::X, force: f },
            Window { start: tr - d, end: tr + d, axis: Axis::X, force: -f },
            Window { start: tm - d, end: tm, axis: Axis::X, force: f },
            Window { start: tm, end: tm + d, axis: Axis::Z, force: f },
        ])
        .expect("geometry windows are ordered")
    }

    /// Which spin axis separates the tracks at time `t`, if any.
    pub fn phase(&self, t: f64) -> Option<Axis> {
        let d = self.kick_duration;
        let ts = self.split_time();
        let tm = self.recombination_time();
        let margin = 0.1 * self.theta;
        if t >= ts + d + margin && t <= tm - d - margin {
            Some(Axis::X)
        } else if t >= tm + d + margin {
            Some(Axis::Z)
        } else {
            None
        }
    }

    /// Classical center of the track `(axis, sign)` at time `t`.
    pub fn track_center(&self, axis: Axis, sign: Sign, t: f64) -> f64 {
        let mut p = GaussianPacket::from_width(0.0, 0.0, self.sigma).expect("validated width");
        let mut now = self.split_time();
        for w in self.schedule().windows() {
            if w.start >= t {
                break;
            }
            p = p.propagated(w.start - now, 0.0);
            let s = if w.axis == axis { sign.value() } else { 1.0 };
            let end = w.end.min(t);
            p = p.propagated(end - w.start, s * w.force);
            now = end;
        }
        p.propagated(t - now, 0.0).center
    }

    /// Center ± 4σ(t) window of a named track.
    pub fn track_region(&self, label: TrackLabel, t: f64) -> TrackRegion {
        let c = self.track_center(label.axis, label.sign, t);
        let w = 4.0 * self.width_at(t);
        TrackRegion { label: label.to_string(), interval: Interval { lo: c - w, hi: c + w } }
    }

    /// Both track regions of `sub` at `t`, or an error outside the separated phases.
    pub fn tracks(&self, sub: Subsystem, t: f64) -> Result<[TrackRegion; 2]> {
        let axis = self
            .phase(t)
            .ok_or_else(|| Error::Geometry(format!("tracks of {} are not separated at t = {t}", sub.letter())))?;
        Ok(Sign::BOTH.map(|sign| self.track_region(TrackLabel { sub, axis, sign }, t)))
    }

    /// The label of the track containing `q` at time `t`.
    pub fn locate(&self, sub: Subsystem, t: f64, q: f64) -> Option<TrackLabel> {
        let axis = self.phase(t)?;
        Sign::BOTH
            .into_iter()
            .map(|sign| TrackLabel { sub, axis, sign })
            .find(|&l| self.track_region(l, t).interval.contains(q))
    }
}

/// A Stern–Gerlach output channel such as `a:+x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrackLabel {
    pub sub: Subsystem,
    pub axis: Axis,
    pub sign: Sign,
}

impl fmt::Display for TrackLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}{}", self.sub.letter(), self.sign.symbol(), self.axis.name())
    }
}

impl FromStr for TrackLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownTrack(s.to_string());
        let (sub, rest) = s.split_once(':').ok_or_else(bad)?;
        let sub = match sub {
            "a" => Subsystem::A,
            "b" => Subsystem::B,
            _ => return Err(bad()),
        };
        let mut chars = rest.chars();
        let sign = match chars.next() {
            Some('+') => Sign::Plus,
            Some('-') => Sign::Minus,
            _ => return Err(bad()),
        };
        let axis = match chars.as_str() {
            "x" => Axis::X,
            "z" => Axis::Z,
            _ => return Err(bad()),
        };
        Ok(TrackLabel { sub, axis, sign })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frame {
    /// Untilted slice before the z-splitters.
    IEarly,
    /// `t_b* − t_a* = −ϑ`.
    II,
    /// `t_b* − t_a* = +ϑ`.
    III,
    /// Untilted slice after the z-splitters.
    ILate,
}

impl Frame {
    pub const ALL: [Frame; 4] = [Frame::IEarly, Frame::II, Frame::III, Frame::ILate];

    pub fn label(self) -> &'static str {
        match self {
            Frame::IEarly => "I(t1)",
            Frame::II => "II(0)",
            Frame::III => "III(0)",
            Frame::ILate => "I(t2)",
        }
    }
}

impl FromStr for Frame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I(t1)" | "I1" => Ok(Frame::IEarly),
            "II(0)" | "II" => Ok(Frame::II),
            "III(0)" | "III" => Ok(Frame::III),
            "I(t2)" | "I2" => Ok(Frame::ILate),
            _ => Err(Error::UnknownFrame(s.to_string())),
        }
    }
}

pub fn frame_slices(geometry: &HardyGeometry, frame: Frame) -> SliceSpec {
    let th = geometry.theta;
    let (ta, tb) = match frame {
        Frame::IEarly => (-th, -th),
        Frame::II => (0.5 * th, -0.5 * th),
        Frame::III => (-0.5 * th, 0.5 * th),
        Frame::ILate => (th, th),
    };
    SliceSpec::new(frame.label(), ta, tb)
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub geometry: HardyGeometry,
    pub initial: TwoTimeState,
    pub slices: Vec<SliceSpec>,
}

pub fn build_scenario(geometry: HardyGeometry) -> Result<Scenario> {
    geometry.validate()?;
    let ts = geometry.split_time();
    let schedule = geometry.schedule();
    let initial = hardy_state(geometry.sigma, (0.0, 0.0))?
        .with_schedules(schedule.clone(), schedule)
        .with_times(ts, ts);
    let slices = Frame::ALL.iter().map(|&f| frame_slices(&geometry, f)).collect();
    Ok(Scenario { geometry, initial, slices })
}

/// An idealized position measurement on one track at a subsystem time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub track: TrackLabel,
    pub time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorFiring {
    pub track: TrackLabel,
    pub s: f64,
    pub fired: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryFlags {
    pub node_abort: bool,
    pub step_underflow: bool,
    pub track_hop: bool,
    pub null_collapse: bool,
}

impl TrajectoryFlags {
    pub fn any(&self) -> bool {
        self.node_abort || self.step_underflow || self.track_hop || self.null_collapse
    }
}

impl fmt::Display for TrajectoryFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.node_abort, "node"),
            (self.step_underflow, "underflow"),
            (self.track_hop, "hop"),
            (self.null_collapse, "null-collapse"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        if names.is_empty() {
            f.write_str("ok")
        } else {
            f.write_str(&names.join("|"))
        }
    }
}

/// Everything kept about one trajectory of a run.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub id: usize,
    pub start: (f64, f64),
    /// Track of each particle at `s = 0` (x phase) and at exit (z phase).
    pub start_channels: [Option<TrackLabel>; 2],
    pub exit_channels: [Option<TrackLabel>; 2],
    /// Crossing point per scenario slice; `None` if the path ended early.
    pub crossings: Vec<Option<(f64, f64)>>,
    pub flags: TrajectoryFlags,
    pub firings: Vec<DetectorFiring>,
    /// Path sampled on an even parameter grid.
    pub grid: Vec<(f64, SynchronizedPoint)>,
    pub path: Option<SynchronizedPath>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub integrator: IntegratorConfig,
    pub execution: Execution,
    /// Number of evenly spaced parameter values kept per trajectory.
    pub grid_points: usize,
    pub keep_paths: bool,
    /// Overrides `(T_a(0), T_b(0))`; the offset must equal `h`.
    pub start_times: Option<(f64, f64)>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            integrator: IntegratorConfig::default(),
            execution: Execution::Parallel,
            grid_points: 9,
            keep_paths: false,
            start_times: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HardyReport {
    pub h: f64,
    pub start_times: (f64, f64),
    pub s_end: f64,
    pub n: usize,
    pub acceptance_rate: f64,
    pub sampler_warning: Option<String>,
    pub tables: Vec<CrossingTable>,
    pub records: Vec<TrajectoryRecord>,
    pub flagged: usize,
}

impl HardyReport {
    pub fn table(&self, label: &str) -> Option<&CrossingTable> {
        self.tables.iter().find(|t| t.slice.label == label)
    }

    /// Trajectories that started in the given pair of tracks.
    pub fn started_in(&self, a: TrackLabel, b: TrackLabel) -> impl Iterator<Item = &TrajectoryRecord> {
        self.records.iter().filter(move |r| r.start_channels == [Some(a), Some(b)])
    }
}

impl Scenario {
    /// `(T_a(0), T_b(0))` with the later particle at `−ϑ`.
    pub fn start_times(&self, h: f64) -> (f64, f64) {
        let t_a = -self.geometry.theta - h.max(0.0);
        (t_a, t_a + h)
    }

    pub fn slice(&self, frame: Frame) -> SliceSpec {
        frame_slices(&self.geometry, frame)
    }

    /// Own times at which a particle starting at `t0` must sit inside a track.
    fn check_times(&self, t0: f64) -> Vec<f64> {
        let th = self.geometry.theta;
        let mut times: Vec<f64> = [-2.5, -2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0]
            .iter()
            .map(|k| k * th)
            .filter(|&t| t >= t0 && self.geometry.phase(t).is_some())
            .collect();
        if self.geometry.phase(t0).is_some() && !times.contains(&t0) {
            times.insert(0, t0);
        }
        times
    }

    /// Runs `n` trajectories with offset `h` from equilibrium at `s = 0`.
    pub fn run(&self, h: f64, n: usize, seed: u64, detectors: &[DetectorSpec], opts: &RunOptions) -> Result<HardyReport> {
        let runner = HardyRunner::new(self, h, detectors, opts)?;
        let at_start = runner.field.state_at(0.0);
        let sampler = EquilibriumSampler::new(&at_start)?;
        let samples = sampler.sample(n, seed, opts.execution);
        let records = map_indexed(n, opts.execution, |i| runner.trajectory(i, samples.points[i]));
        let tables = self
            .slices
            .iter()
            .enumerate()
            .map(|(k, slice)| -> Result<CrossingTable> {
                let ra = self.geometry.tracks(Subsystem::A, slice.t_a)?;
                let rb = self.geometry.tracks(Subsystem::B, slice.t_b)?;
                let points: Vec<(f64, f64)> = records.iter().filter_map(|r| r.crossings[k]).collect();
                Ok(CrossingTable::from_points(slice, &points, n as u64, &ra, &rb))
            })
            .collect::<Result<Vec<_>>>()?;
        let flagged = records.iter().filter(|r| r.flags.any()).count();
        Ok(HardyReport {
            h,
            start_times: runner.field.start_times(),
            s_end: runner.field.s_end(),
            n,
            acceptance_rate: samples.acceptance_rate,
            sampler_warning: samples.warning,
            tables,
            records,
            flagged,
        })
    }

    /// Prepares a single-trajectory runner (shared by [`Scenario::run`]).
    pub fn runner<'s>(&'s self, h: f64, detectors: &[DetectorSpec], opts: &RunOptions) -> Result<HardyRunner<'s>> {
        HardyRunner::new(self, h, detectors, opts)
    }
}

/// Crossing histogram against `|ψ^h(s)|²` on one parameter value.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivarianceCheck {
    pub s: f64,
    pub tv: f64,
    /// Largest binomial z-score over cells with positive probability.
    pub max_z: f64,
    pub counts: Vec<u64>,
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivarianceReport {
    pub h: f64,
    pub n: usize,
    pub aborted: usize,
    pub checks: Vec<EquivarianceCheck>,
}

impl Scenario {
    /// Samples `|ψ^h(0)|²`, transports the ensemble and compares positions at
    /// each `s` with the analytic density on a marginal-quantile partition.
    pub fn equivariance(
        &self,
        h: f64,
        n: usize,
        seed: u64,
        s_values: &[f64],
        cells: (usize, usize),
        opts: &RunOptions,
    ) -> Result<EquivarianceReport> {
        if n == 0 {
            return Err(Error::InvalidCount(n));
        }
        let runner = self.runner(h, &[], opts)?;
        let field = runner.field();
        if let Some(&s) = s_values.iter().find(|&&s| !(s >= 0.0 && s <= field.s_end())) {
            return Err(Error::InvalidArgument(format!("s = {s} outside [0, {}]", field.s_end())));
        }
        let samples = EquilibriumSampler::new(&field.state_at(0.0))?.sample(n, seed, opts.execution);
        let cfg = &opts.integrator;
        let positions: Vec<Option<Vec<(f64, f64)>>> = map_indexed(n, opts.execution, |i| {
            let (qa, qb) = samples.points[i];
            let run = field.trace(qa, qb, cfg, None);
            if run.failure.is_some() {
                return None;
            }
            s_values.iter().map(|&s| run.path.point(s).map(|p| (p.q_a, p.q_b))).collect()
        });
        let aborted = positions.iter().filter(|p| p.is_none()).count();
        let checks = s_values
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let state = field.state_at(s);
                let partition = RegionPartition::marginal_quantiles(&state, cells.0, cells.1);
                let probabilities = partition.analytic(&state);
                let points: Vec<(f64, f64)> = positions.iter().flatten().map(|p| p[k]).collect();
                let counts = partition.histogram(&points);
                let m = points.len() as f64;
                let max_z = counts
                    .iter()
                    .zip(&probabilities)
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(&c, &p)| (c as f64 - m * p).abs() / (m * p * (1.0 - p)).sqrt())
                    .fold(0.0, f64::max);
                EquivarianceCheck { s, tv: total_variation(&counts, &probabilities), max_z, counts, probabilities }
            })
            .collect();
        Ok(EquivarianceReport { h, n, aborted, checks })
    }
}

/// Detector run against the detector-free run from the same starts.
#[derive(Clone, Debug, PartialEq)]
pub struct PrefixComparison {
    pub n: usize,
    /// Trajectories whose steps up to the first detector agree bit for bit.
    pub identical: usize,
    /// Exit channels of the trajectories on which the first detector fired.
    pub fired_exits: Vec<[Option<TrackLabel>; 2]>,
}

impl Scenario {
    /// Traces every start twice, with and without `detectors`, keeping only
    /// the comparison so large ensembles need no stored paths.
    pub fn compare_detectors(
        &self,
        h: f64,
        n: usize,
        seed: u64,
        detectors: &[DetectorSpec],
        opts: &RunOptions,
    ) -> Result<PrefixComparison> {
        let opts = RunOptions { keep_paths: true, ..*opts };
        let plain = self.runner(h, &[], &opts)?;
        let watched = self.runner(h, detectors, &opts)?;
        let samples = EquilibriumSampler::new(&plain.field().state_at(0.0))?.sample(n, seed, opts.execution);
        let outcomes = map_indexed(n, opts.execution, |i| {
            let p = plain.trajectory(i, samples.points[i]);
            let w = watched.trajectory(i, samples.points[i]);
            let (Some(pp), Some(wp)) = (&p.path, &w.path) else { return (false, None) };
            let (pp, wp) = (pp.solution(), wp.solution());
            let first = w.firings.first();
            let k = first.map_or(wp.s.len(), |f| wp.s.iter().position(|&s| s >= f.s).unwrap_or(wp.s.len()));
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            let same = pp.s.len() >= k
                && bits(&pp.s[..k]) == bits(&wp.s[..k])
                && pp.y[..k].iter().zip(&wp.y[..k]).all(|(a, b)| bits(a) == bits(b));
            (same, first.filter(|f| f.fired).map(|_| w.exit_channels))
        });
        Ok(PrefixComparison {
            n,
            identical: outcomes.iter().filter(|o| o.0).count(),
            fired_exits: outcomes.into_iter().filter_map(|o| o.1).collect(),
        })
    }
}

/// Fields after each detector, keyed by the outcomes so far.
#[derive(Clone, Debug)]
struct CollapseNode {
    detector: DetectorSpec,
    s: f64,
    region: Interval,
    /// Indexed by `fired as usize`; `None` when that outcome has zero weight.
    outcomes: [Option<(SynchronizedField, Option<Box<CollapseNode>>)>; 2],
}

/// Integrates individual trajectories of one `(h, detectors)` configuration.
#[derive(Clone, Debug)]
pub struct HardyRunner<'s> {
    scenario: &'s Scenario,
    field: SynchronizedField,
    collapse: Option<Box<CollapseNode>>,
    opts: RunOptions,
}

impl<'s> HardyRunner<'s> {
    fn new(scenario: &'s Scenario, h: f64, detectors: &[DetectorSpec], opts: &RunOptions) -> Result<Self> {
        let g = &scenario.geometry;
        if !(h.abs() <= 1.5 * g.theta) {
            return Err(Error::InvalidArgument(format!("|h| = {} exceeds the schedule span 1.5ϑ", h.abs())));
        }
        let (t_a0, t_b0) = match opts.start_times {
            Some((a, b)) => {
                if ((b - a) - h).abs() > 1e-12 {
                    return Err(Error::InvalidArgument("start times disagree with h".into()));
                }
                (a, b)
            }
            None => scenario.start_times(h),
        };
        if t_a0.min(t_b0) <= g.split_time() {
            return Err(Error::InvalidArgument("start times precede the x-splitters".into()));
        }
        let s_end = g.exit_time() - t_a0.min(t_b0);
        let field = SynchronizedField::new(&scenario.initial, t_a0, t_b0, s_end, &opts.integrator)?;

        let mut detectors = detectors.to_vec();
        for sub in [Subsystem::A, Subsystem::B] {
            if detectors.iter().filter(|d| d.track.sub == sub).count() > 1 {
                return Err(Error::InvalidArgument(format!("more than one detector on {}", sub.letter())));
            }
        }
        let s_of = |d: &DetectorSpec| d.time - if d.track.sub == Subsystem::A { t_a0 } else { t_b0 };
        detectors.sort_by(|x, y| s_of(x).total_cmp(&s_of(y)));
        for d in &detectors {
            let s = s_of(d);
            if !(s > 0.0 && s < s_end) {
                return Err(Error::InvalidArgument(format!("detector {} at t = {} is outside the run", d.track, d.time)));
            }
            if g.phase(d.time) != Some(d.track.axis) {
                return Err(Error::UnknownTrack(format!("{} does not exist at t = {}", d.track, d.time)));
            }
        }
        let collapse = Self::collapse_tree(g, &field, &detectors, (t_a0, t_b0), s_end, &opts.integrator, &s_of)?;
        Ok(HardyRunner { scenario, field, collapse, opts: *opts })
    }

    fn collapse_tree(
        g: &HardyGeometry,
        parent: &SynchronizedField,
        detectors: &[DetectorSpec],
        starts: (f64, f64),
        s_end: f64,
        cfg: &IntegratorConfig,
        s_of: &dyn Fn(&DetectorSpec) -> f64,
    ) -> Result<Option<Box<CollapseNode>>> {
        let Some((first, rest)) = detectors.split_first() else { return Ok(None) };
        let s = s_of(first);
        let region = g.track_region(first.track, first.time).interval;
        let before = parent.state_at(s);
        let mut outcomes = [None, None];
        for fired in [false, true] {
            if let Ok(state) = before.project(first.track.sub, region, fired) {
                let field = SynchronizedField::from_state_at(&state, s, starts.0, starts.1, s_end, cfg)?;
                let next = Self::collapse_tree(g, &field, rest, starts, s_end, cfg, s_of)?;
                outcomes[usize::from(fired)] = Some((field, next));
            }
        }
        Ok(Some(Box::new(CollapseNode { detector: *first, s, region, outcomes })))
    }

    pub fn field(&self) -> &SynchronizedField {
        &self.field
    }

    /// Integrates trajectory `id` from `start` at `s = 0`.
    pub fn trajectory(&self, id: usize, start: (f64, f64)) -> TrajectoryRecord {
        let cfg = &self.opts.integrator;
        let mut flags = TrajectoryFlags::default();
        let mut firings = Vec::new();
        let mut field = &self.field;
        let mut node = self.collapse.as_deref();
        let mut q = start;
        let mut path: Option<SynchronizedPath> = None;
        loop {
            let stop = node.map(|n| n.s);
            let run = field.trace(q.0, q.1, cfg, stop);
            let mut piece = run.path;
            if let Some(err) = run.failure {
                match err {
                    Error::StepUnderflow(_) => flags.step_underflow = true,
                    _ => flags.node_abort = true,
                }
                path = Some(join(path, piece));
                break;
            }
            let Some(n) = node else {
                path = Some(join(path, piece));
                break;
            };
            let at = piece.point(n.s).expect("detector inside traced range");
            let v = field.velocity(n.s, at.q_a, at.q_b).map(|v| (v.v_a, v.v_b)).unwrap_or((0.0, 0.0));
            piece.cut_at(n.s, v);
            path = Some(join(path, piece));
            let qk = if n.detector.track.sub == Subsystem::A { at.q_a } else { at.q_b };
            let fired = n.region.contains(qk);
            firings.push(DetectorFiring { track: n.detector.track, s: n.s, fired });
            q = (at.q_a, at.q_b);
            match &n.outcomes[usize::from(fired)] {
                Some((next_field, next_node)) => {
                    field = next_field;
                    node = next_node.as_deref();
                }
                None => {
                    flags.null_collapse = true;
                    node = None;
                }
            }
        }
        let path = path.expect("at least one traced piece");
        self.summarize(id, start, path, flags, firings)
    }

    fn summarize(
        &self,
        id: usize,
        start: (f64, f64),
        path: SynchronizedPath,
        mut flags: TrajectoryFlags,
        firings: Vec<DetectorFiring>,
    ) -> TrajectoryRecord {
        let g = &self.scenario.geometry;
        let (t_a0, t_b0) = self.field.start_times();
        let mut start_channels = [None, None];
        let mut exit_channels = [None, None];
        for (k, (sub, t0)) in [(Subsystem::A, t_a0), (Subsystem::B, t_b0)].into_iter().enumerate() {
            let mut seen: Vec<TrackLabel> = Vec::new();
            for t in self.scenario.check_times(t0) {
                let Ok(q) = path.position_at_time(sub, t) else { continue };
                match g.locate(sub, t, q) {
                    Some(label) => {
                        if seen.iter().any(|l| l.axis == label.axis && l.sign != label.sign) {
                            flags.track_hop = true;
                        }
                        seen.push(label);
                    }
                    None => flags.track_hop = true,
                }
            }
            start_channels[k] = path.position_at_time(sub, t0).ok().and_then(|q| g.locate(sub, t0, q));
            let exit = g.exit_time();
            exit_channels[k] = path.position_at_time(sub, exit).ok().and_then(|q| g.locate(sub, exit, q));
        }
        let crossings = self
            .scenario
            .slices
            .iter()
            .map(|sl| crate::equilibrium::crossing(&path, sl).ok())
            .collect();
        let (s0, s1) = path.s_range();
        let m = self.opts.grid_points.max(2);
        let s_end = self.field.s_end();
        let grid = (0..m)
            .map(|i| s_end * i as f64 / (m - 1) as f64)
            .filter(|&s| s >= s0 && s <= s1)
            .filter_map(|s| path.point(s).map(|p| (s, p)))
            .collect();
        TrajectoryRecord {
            id,
            start,
            start_channels,
            exit_channels,
            crossings,
            flags,
            firings,
            grid,
            path: self.opts.keep_paths.then_some(path),
        }
    }
}

fn join(prefix: Option<SynchronizedPath>, piece: SynchronizedPath) -> SynchronizedPath {
    match prefix {
        None => piece,
        Some(mut p) => {
            p.join(piece);
            p
        }
    }
}
