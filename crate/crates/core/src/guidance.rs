//! Velocity fields and synchronized two-paths.
//!
//! Along a synchronized path both subsystem times advance with the parameter:
//! `T_a(s) = T_a(0) + s`, `T_b(s) = T_b(0) + s`, and `dQ_k/ds = v_k`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{dormand_prince, DenseSolution, OdeConfig, OdeFailure};
use crate::packet::GaussianPacket;
use crate::state::{Subsystem, TwoTimeState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynchronizedPoint {
    pub t_a: f64,
    pub q_a: f64,
    pub t_b: f64,
    pub q_b: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Abort threshold as a fraction of the peak density of the current segment.
    pub node_floor: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rel_tol: 1e-8, abs_tol: 1e-8, max_step: 0.25, node_floor: 1e-12 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.rel_tol, self.abs_tol, self.max_step, self.node_floor].iter().all(|v| *v > 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("integrator tolerances must be positive".into()))
        }
    }

    fn ode(&self) -> OdeConfig {
        OdeConfig { rel_tol: self.rel_tol, abs_tol: self.abs_tol, max_step: self.max_step }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Velocity {
    pub v_a: f64,
    pub v_b: f64,
    pub density: f64,
}

/// Spin-contracted velocities `v_k = Im(ψ†∂_kψ)/ψ†ψ` of `state` at its own times.
pub fn velocity(state: &TwoTimeState, q_a: f64, q_b: f64) -> Result<Velocity> {
    let branches = compile(state, &vec![0.0; state.branches().len()], &vec![0.0; state.branches().len()]);
    let floor = IntegratorConfig::default().node_floor * peak_density(&branches);
    evaluate(&branches, 0.0, 0.0, q_a, q_b, floor).map_err(|(density, floor)| Error::NodeProximity {
        s: 0.0,
        density,
        floor,
    })
}

#[derive(Clone, Copy, Debug)]
struct CompiledBranch {
    coeff: C64,
    spin: [C64; 4],
    packet_a: GaussianPacket,
    force_a: f64,
    packet_b: GaussianPacket,
    force_b: f64,
}

fn compile(state: &TwoTimeState, forces_a: &[f64], forces_b: &[f64]) -> Vec<CompiledBranch> {
    state
        .branches()
        .iter()
        .zip(forces_a.iter().zip(forces_b))
        .map(|(b, (&fa, &fb))| CompiledBranch {
            coeff: b.coeff,
            spin: b.spin_tensor(),
            packet_a: b.packet_a,
            force_a: fa,
            packet_b: b.packet_b,
            force_b: fb,
        })
        .collect()
}

fn peak_density(branches: &[CompiledBranch]) -> f64 {
    branches
        .iter()
        .map(|b| b.coeff.norm_sqr() * b.packet_a.peak_density() * b.packet_b.peak_density())
        .fold(0.0, f64::max)
}

/// Velocities after propagating every branch by `tau_a`, `tau_b` inside one
/// segment. Err carries `(density, floor)` on node proximity.
#[inline]
fn evaluate(
    branches: &[CompiledBranch],
    tau_a: f64,
    tau_b: f64,
    q_a: f64,
    q_b: f64,
    floor: f64,
) -> std::result::Result<Velocity, (f64, f64)> {
    let zero = C64::new(0.0, 0.0);
    let mut psi = [zero; 4];
    let mut da = [zero; 4];
    let mut db = [zero; 4];
    for b in branches {
        let pa = b.packet_a.propagated(tau_a, b.force_a);
        let pb = b.packet_b.propagated(tau_b, b.force_b);
        let w = b.coeff * (pa.log_value(q_a) + pb.log_value(q_b)).exp();
        let wa = w * pa.log_derivative(q_a);
        let wb = w * pb.log_derivative(q_b);
        for k in 0..4 {
            psi[k] += w * b.spin[k];
            da[k] += wa * b.spin[k];
            db[k] += wb * b.spin[k];
        }
    }
    let density: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
    if !(density > floor) {
        return Err((density, floor));
    }
    let im = |d: &[C64; 4]| psi.iter().zip(d).map(|(p, x)| (p.conj() * x).im).sum::<f64>();
    Ok(Velocity { v_a: im(&da) / density, v_b: im(&db) / density, density })
}

#[derive(Clone, Debug)]
struct Segment {
    s0: f64,
    s1: f64,
    start: TwoTimeState,
    branches: Vec<CompiledBranch>,
    floor: f64,
}

/// A two-time state prepared for fast evaluation along one synchronization
/// `t_b − t_a = h`: the parameter range is cut wherever either subsystem
/// crosses a window edge, and within a piece every branch moves analytically.
#[derive(Clone, Debug)]
pub struct SynchronizedField {
    t_a0: f64,
    t_b0: f64,
    segments: Vec<Segment>,
    breakpoints: Vec<f64>,
}

impl SynchronizedField {
    /// Field for `s ∈ [0, s_end]` with `T_a(0) = t_a0`, `T_b(0) = t_b0`.
    pub fn new(state: &TwoTimeState, t_a0: f64, t_b0: f64, s_end: f64, cfg: &IntegratorConfig) -> Result<Self> {
        let at_start = state.evolve_to(t_a0, t_b0);
        Self::from_state_at(&at_start, 0.0, t_a0, t_b0, s_end, cfg)
    }

    /// Field for `s ∈ [s_start, s_end]` from a state already at
    /// `(t_a0 + s_start, t_b0 + s_start)`.
    pub fn from_state_at(
        state: &TwoTimeState,
        s_start: f64,
        t_a0: f64,
        t_b0: f64,
        s_end: f64,
        cfg: &IntegratorConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(s_end > s_start) {
            return Err(Error::InvalidArgument(format!("empty parameter range [{s_start}, {s_end}]")));
        }
        let (ta, tb) = state.times();
        if (ta - (t_a0 + s_start)).abs() > 1e-12 * (1.0 + ta.abs()) || (tb - (t_b0 + s_start)).abs() > 1e-12 * (1.0 + tb.abs()) {
            return Err(Error::InvalidArgument("state times do not match the synchronization".into()));
        }
        let mut cuts: Vec<f64> = state
            .schedule(Subsystem::A)
            .boundaries()
            .into_iter()
            .map(|b| b - t_a0)
            .chain(state.schedule(Subsystem::B).boundaries().into_iter().map(|b| b - t_b0))
            .filter(|&s| s > s_start && s < s_end)
            .collect();
        cuts.sort_by(f64::total_cmp);
        // edges of the two schedules that coincide up to rounding become one cut
        cuts.dedup_by(|b, a| *b - *a <= 1e-12 * (1.0 + a.abs()));
        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(s_start);
        edges.extend_from_slice(&cuts);
        edges.push(s_end);

        let mut current = state.clone();
        let mut segments = Vec::with_capacity(edges.len() - 1);
        for pair in edges.windows(2) {
            let (s0, s1) = (pair[0], pair[1]);
            let wa = current.enter_window(Subsystem::A, t_a0 + s0, t_a0 + s1);
            let wb = current.enter_window(Subsystem::B, t_b0 + s0, t_b0 + s1);
            let fa = current.window_forces(Subsystem::A, wa);
            let fb = current.window_forces(Subsystem::B, wb);
            let branches = compile(&current, &fa, &fb);
            let floor = cfg.node_floor * peak_density(&branches);
            let next = current.evolve_to(t_a0 + s1, t_b0 + s1);
            segments.push(Segment { s0, s1, start: current, branches, floor });
            current = next;
        }
        Ok(SynchronizedField { t_a0, t_b0, segments, breakpoints: cuts })
    }

    pub fn h(&self) -> f64 {
        self.t_b0 - self.t_a0
    }

    pub fn start_times(&self) -> (f64, f64) {
        (self.t_a0, self.t_b0)
    }

    pub fn s_start(&self) -> f64 {
        self.segments[0].s0
    }

    pub fn s_end(&self) -> f64 {
        self.segments.last().expect("at least one segment").s1
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    fn segment(&self, s: f64) -> &Segment {
        let i = self.segments.partition_point(|seg| seg.s1 <= s);
        &self.segments[i.min(self.segments.len() - 1)]
    }

    /// The wave function at `(t_a0 + s, t_b0 + s)`.
    pub fn state_at(&self, s: f64) -> TwoTimeState {
        let seg = self.segment(s);
        seg.start.evolve_to(self.t_a0 + s, self.t_b0 + s)
    }

    pub fn velocity(&self, s: f64, q_a: f64, q_b: f64) -> Result<Velocity> {
        let seg = self.segment(s);
        let tau = s - seg.s0;
        evaluate(&seg.branches, tau, tau, q_a, q_b, seg.floor)
            .map_err(|(density, floor)| Error::NodeProximity { s, density, floor })
    }

    /// Integrates from `(q_a, q_b)` at the field's first parameter value.
    pub fn trace(&self, q_a: f64, q_b: f64, cfg: &IntegratorConfig, stop_after: Option<f64>) -> PathRun {
        let run = dormand_prince(
            |s, y: &[f64; 2]| self.velocity(s, y[0], y[1]).map(|v| [v.v_a, v.v_b]),
            self.s_start(),
            [q_a, q_b],
            self.s_end(),
            &self.breakpoints,
            &cfg.ode(),
            stop_after,
        );
        let failure = run.failure.map(|f| match f {
            OdeFailure::Rhs { error, .. } => error,
            OdeFailure::StepUnderflow { s } => Error::StepUnderflow(s),
        });
        PathRun {
            path: SynchronizedPath { t_a0: self.t_a0, h: self.h(), solution: run.solution },
            failure,
        }
    }
}

/// Outcome of one integration: the path so far and the reason it stopped early.
#[derive(Clone, Debug)]
pub struct PathRun {
    pub path: SynchronizedPath,
    pub failure: Option<Error>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynchronizedPath {
    t_a0: f64,
    h: f64,
    solution: DenseSolution<2>,
}

impl SynchronizedPath {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn t_a(&self, s: f64) -> f64 {
        self.t_a0 + s
    }

    pub fn t_b(&self, s: f64) -> f64 {
        self.t_a0 + self.h + s
    }

    pub fn s_range(&self) -> (f64, f64) {
        (self.solution.first(), self.solution.last())
    }

    pub fn solution(&self) -> &DenseSolution<2> {
        &self.solution
    }

    pub fn len(&self) -> usize {
        self.solution.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solution.is_empty()
    }

    /// Samples as `(s, point)` pairs.
    pub fn samples(&self) -> impl Iterator<Item = (f64, SynchronizedPoint)> + '_ {
        self.solution.s.iter().zip(&self.solution.y).map(|(&s, y)| (s, self.make_point(s, y)))
    }

    fn make_point(&self, s: f64, y: &[f64; 2]) -> SynchronizedPoint {
        SynchronizedPoint { t_a: self.t_a(s), q_a: y[0], t_b: self.t_b(s), q_b: y[1] }
    }

    pub fn point(&self, s: f64) -> Option<SynchronizedPoint> {
        self.solution.interpolate(s).map(|y| self.make_point(s, &y))
    }

    /// Position of particle `sub` when its own time equals `t`.
    pub fn position_at_time(&self, sub: Subsystem, t: f64) -> Result<f64> {
        let (lo, hi) = self.s_range();
        let s = match sub {
            Subsystem::A => t - self.t_a0,
            Subsystem::B => t - self.t_a0 - self.h,
        };
        let tol = 1e-12 * (1.0 + s.abs());
        let s = if (s - lo).abs() <= tol {
            lo
        } else if (s - hi).abs() <= tol {
            hi
        } else {
            s
        };
        let y = self.solution.interpolate(s).ok_or_else(|| {
            let base = if sub == Subsystem::A { self.t_a0 } else { self.t_a0 + self.h };
            Error::SliceOutsideSpan { time: t, lo: base + lo, hi: base + hi }
        })?;
        Ok(match sub {
            Subsystem::A => y[0],
            Subsystem::B => y[1],
        })
    }

    /// Joins a continuation that starts where this path was cut.
    pub fn join(&mut self, continuation: SynchronizedPath) {
        self.solution.extend_from(continuation.solution);
    }

    /// Cuts the path at `s`, keeping an interpolated end point there.
    pub fn cut_at(&mut self, s: f64, velocity: (f64, f64)) {
        self.solution.truncate_at(s, [velocity.0, velocity.1]);
    }
}

/// Integrates the guiding equations from `start` for parameter values `[0, s_end]`.
pub fn integrate(
    state: &TwoTimeState,
    start: SynchronizedPoint,
    s_end: f64,
    cfg: &IntegratorConfig,
) -> Result<SynchronizedPath> {
    let field = SynchronizedField::new(state, start.t_a, start.t_b, s_end, cfg)?;
    let run = field.trace(start.q_a, start.q_b, cfg, None);
    match run.failure {
        Some(e) => Err(e),
        None => Ok(run.path),
    }
}
