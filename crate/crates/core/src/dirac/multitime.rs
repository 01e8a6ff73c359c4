//! Two-particle (or single-particle) multitime Dirac waves and their guidance laws.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{DiracGridState, DiracPath, SpectralField, SpinorField, Spinor};
use crate::error::{Error, Result};
use crate::ode::{dormand_prince, OdeConfig, OdeFailure};

const NODE_FLOOR: f64 = 1e-30;

/// How each particle's time and position advance with the path parameter `s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuidanceLaw {
    /// `(ψ̄ γ_k⁰ ψ, ψ̄ γ_k¹ ψ)` with `ψ̄ = ψ†(γ⁰ ⊗ γ⁰)`.
    Covariant,
    /// `(ψ†ψ, ψ† α_k ψ)`: all clocks run at the density.
    DensityTime,
    /// `(1, ψ† α_k ψ / ψ†ψ)`: all clocks run at unit rate.
    UnitTime,
}

impl GuidanceLaw {
    pub const ALL: [GuidanceLaw; 3] = [GuidanceLaw::Covariant, GuidanceLaw::DensityTime, GuidanceLaw::UnitTime];

    pub fn name(self) -> &'static str {
        match self {
            GuidanceLaw::Covariant => "covariant",
            GuidanceLaw::DensityTime => "density-time",
            GuidanceLaw::UnitTime => "unit-time",
        }
    }
}

impl fmt::Display for GuidanceLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GuidanceLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GuidanceLaw::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown guidance law `{s}`")))
    }
}

/// One product term `coeff · φ₁ ⊗ φ₂ ⊗ …`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracBranch {
    pub coeff: C64,
    pub factors: Vec<DiracGridState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultitimeDiracState {
    branches: Vec<DiracBranch>,
    times: Vec<f64>,
}

impl MultitimeDiracState {
    fn checked(branches: Vec<DiracBranch>) -> Result<Self> {
        let first = branches.first().ok_or(Error::InvalidCount(0))?;
        let particles = first.factors.len();
        if particles == 0 {
            return Err(Error::InvalidCount(0));
        }
        let times: Vec<f64> = first.factors.iter().map(|f| f.time()).collect();
        for b in &branches {
            if b.factors.len() != particles {
                return Err(Error::InvalidArgument("branches differ in particle count".into()));
            }
            for (k, f) in b.factors.iter().enumerate() {
                if f.grid() != first.factors[k].grid() || (f.time() - times[k]).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!("particle {k} factors disagree on grid or time")));
                }
            }
        }
        Ok(MultitimeDiracState { branches, times })
    }

    pub fn new(branches: Vec<DiracBranch>) -> Result<Self> {
        let state = Self::checked(branches)?;
        let norm = state.norm_sqr().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::UnnormalizedState(norm));
        }
        Ok(state)
    }

    pub fn normalized(branches: Vec<DiracBranch>) -> Result<Self> {
        let mut state = Self::checked(branches)?;
        let norm = state.norm_sqr().sqrt();
        if !(norm > 0.0) {
            return Err(Error::UnnormalizedState(norm));
        }
        state.branches.iter_mut().for_each(|b| b.coeff /= norm);
        Ok(state)
    }

    pub fn product(factors: Vec<DiracGridState>) -> Result<Self> {
        Self::new(vec![DiracBranch { coeff: C64::new(1.0, 0.0), factors }])
    }

    pub fn particles(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn branches(&self) -> &[DiracBranch] {
        &self.branches
    }

    pub fn norm_sqr(&self) -> f64 {
        let mut total = C64::new(0.0, 0.0);
        for b in &self.branches {
            for b2 in &self.branches {
                let overlap: C64 = b.factors.iter().zip(&b2.factors).map(|(f, g)| f.inner(g)).product();
                total += b.coeff.conj() * b2.coeff * overlap;
            }
        }
        total.re
    }
}

#[derive(Clone, Copy)]
enum Op {
    Identity,
    Alpha,
    Beta,
}

fn apply(op: Op, s: &Spinor) -> Spinor {
    match op {
        Op::Identity => *s,
        Op::Alpha => [s[1], s[0]],
        Op::Beta => [s[0], -s[1]],
    }
}

struct CompiledState {
    coeffs: Vec<C64>,
    fields: Vec<Vec<SpectralField>>,
}

impl CompiledState {
    fn new(state: &MultitimeDiracState) -> Self {
        CompiledState {
            coeffs: state.branches.iter().map(|b| b.coeff).collect(),
            fields: state.branches.iter().map(|b| b.factors.iter().map(SpectralField::new).collect()).collect(),
        }
    }

    fn values(&self, point: &[(f64, f64)]) -> Vec<Vec<Spinor>> {
        self.fields
            .iter()
            .map(|fs| fs.iter().zip(point).map(|(f, &(t, x))| f.spinor(t, x)).collect())
            .collect()
    }

    /// `ψ† (O₁ ⊗ O₂ ⊗ …) ψ` for Hermitian factors.
    fn form(&self, values: &[Vec<Spinor>], ops: &[Op]) -> f64 {
        let mut total = C64::new(0.0, 0.0);
        for (c, v) in self.coeffs.iter().zip(values) {
            for (c2, v2) in self.coeffs.iter().zip(values) {
                let prod: C64 = v
                    .iter()
                    .zip(v2)
                    .zip(ops)
                    .map(|((a, b), &op)| {
                        let ob = apply(op, b);
                        a[0].conj() * ob[0] + a[1].conj() * ob[1]
                    })
                    .product();
                total += c.conj() * c2 * prod;
            }
        }
        total.re
    }

    fn velocity(&self, law: GuidanceLaw, point: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
        let n = point.len();
        let values = self.values(point);
        let density = self.form(&values, &vec![Op::Identity; n]);
        if !(density > NODE_FLOOR) {
            return Err(Error::NodeProximity { s: point[0].0, density, floor: NODE_FLOOR });
        }
        let ops_for = |k: usize, own: Op, other: Op| -> Vec<Op> {
            (0..n).map(|j| if j == k { own } else { other }).collect()
        };
        Ok((0..n)
            .map(|k| match law {
                GuidanceLaw::Covariant => (
                    self.form(&values, &ops_for(k, Op::Identity, Op::Beta)),
                    self.form(&values, &ops_for(k, Op::Alpha, Op::Beta)),
                ),
                GuidanceLaw::DensityTime => (density, self.form(&values, &ops_for(k, Op::Alpha, Op::Identity))),
                GuidanceLaw::UnitTime => (1.0, self.form(&values, &ops_for(k, Op::Alpha, Op::Identity)) / density),
            })
            .collect())
    }
}

/// `(dT_k/ds, dX_k/ds)` for every particle at `point = [(t_k, x_k)]`.
pub fn multitime_velocity(
    state: &MultitimeDiracState,
    law: GuidanceLaw,
    point: &[(f64, f64)],
) -> Result<Vec<(f64, f64)>> {
    if point.len() != state.particles() {
        return Err(Error::InvalidArgument(format!(
            "{} coordinates for {} particles",
            point.len(),
            state.particles()
        )));
    }
    CompiledState::new(state).velocity(law, point)
}

/// Synchronized path `s ↦ (T₁, X₁, T₂, X₂, …)` with Hermite dense output.
#[derive(Clone, Debug, PartialEq)]
pub struct MultitimePaths {
    law: GuidanceLaw,
    s: Vec<f64>,
    y: Vec<Vec<f64>>,
    dy: Vec<Vec<f64>>,
}

impl MultitimePaths {
    pub fn law(&self) -> GuidanceLaw {
        self.law
    }

    pub fn particles(&self) -> usize {
        self.y[0].len() / 2
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.s
    }

    /// Coordinates `(T₁, X₁, …)` at sample `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.y[i]
    }

    pub fn interpolate(&self, s: f64) -> Option<Vec<f64>> {
        let (lo, hi) = (self.s[0], *self.s.last()?);
        if s < lo || s > hi {
            return None;
        }
        let i = self.s.partition_point(|&v| v <= s).clamp(1, self.s.len() - 1);
        Some(hermite(self.s[i - 1], self.s[i], &self.y[i - 1], &self.y[i], &self.dy[i - 1], &self.dy[i], s))
    }

    /// World line of particle `k` as `(T_k, X_k)` samples.
    pub fn particle_path(&self, k: usize) -> DiracPath {
        let t = self.y.iter().map(|p| p[2 * k]).collect();
        let x = self.y.iter().map(|p| p[2 * k + 1]).collect();
        let v = self.dy.iter().map(|d| d[2 * k + 1] / d[2 * k]).collect();
        DiracPath::from_parts(t, x, v)
    }

    /// Extremes of `T_b − T_a` over the samples.
    pub fn time_offset_range(&self, a: usize, b: usize) -> (f64, f64) {
        self.y.iter().map(|p| p[2 * b] - p[2 * a]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
            (lo.min(d), hi.max(d))
        })
    }

    /// Parameter where `T₁ = t`, assuming `T₁` increases along the path.
    fn parameter_at_first_time(&self, t: f64) -> Option<f64> {
        let times: Vec<f64> = self.y.iter().map(|p| p[0]).collect();
        if t < times[0] || t > *times.last()? {
            return None;
        }
        let i = times.partition_point(|&v| v <= t).clamp(1, times.len() - 1);
        let (mut lo, mut hi) = (self.s[i - 1], self.s[i]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.interpolate(mid)?[0] < t {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

fn hermite(s0: f64, s1: f64, y0: &[f64], y1: &[f64], d0: &[f64], d1: &[f64], s: f64) -> Vec<f64> {
    let h = s1 - s0;
    let r = (s - s0) / h;
    let (r2, r3) = (r * r, r * r * r);
    let (h00, h10, h01, h11) = (2.0 * r3 - 3.0 * r2 + 1.0, r3 - 2.0 * r2 + r, -2.0 * r3 + 3.0 * r2, r3 - r2);
    (0..y0.len()).map(|i| h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i]).collect()
}

fn run<const D: usize>(
    compiled: &CompiledState,
    law: GuidanceLaw,
    start: &[(f64, f64)],
    s_end: f64,
    cfg: &OdeConfig,
) -> Result<MultitimePaths> {
    let mut y0 = [0.0; D];
    for (k, &(t, x)) in start.iter().enumerate() {
        y0[2 * k] = t;
        y0[2 * k + 1] = x;
    }
    let rhs = |_s: f64, y: &[f64; D]| -> Result<[f64; D]> {
        let point: Vec<(f64, f64)> = (0..D / 2).map(|k| (y[2 * k], y[2 * k + 1])).collect();
        let v = compiled.velocity(law, &point)?;
        let mut out = [0.0; D];
        for (k, (vt, vx)) in v.into_iter().enumerate() {
            out[2 * k] = vt;
            out[2 * k + 1] = vx;
        }
        Ok(out)
    };
    let run = dormand_prince(rhs, 0.0, y0, s_end, &[], cfg, None);
    match run.failure {
        Some(OdeFailure::Rhs { error, .. }) => return Err(error),
        Some(OdeFailure::StepUnderflow { s }) => return Err(Error::StepUnderflow(s)),
        None => {}
    }
    let sol = run.solution;
    Ok(MultitimePaths {
        law,
        s: sol.s,
        y: sol.y.iter().map(|v| v.to_vec()).collect(),
        dy: sol.dy.iter().map(|v| v.to_vec()).collect(),
    })
}

/// Integral curve of `law` from `start = [(t_k, x_k)]` over `s ∈ [0, s_end]`.
pub fn integrate_multitime_paths(
    state: &MultitimeDiracState,
    law: GuidanceLaw,
    start: &[(f64, f64)],
    s_end: f64,
    cfg: &OdeConfig,
) -> Result<MultitimePaths> {
    if start.len() != state.particles() {
        return Err(Error::InvalidArgument(format!("{} starts for {} particles", start.len(), state.particles())));
    }
    if !(s_end > 0.0) {
        return Err(Error::NegativeDuration(s_end));
    }
    let compiled = CompiledState::new(state);
    match state.particles() {
        1 => run::<2>(&compiled, law, start, s_end, cfg),
        2 => run::<4>(&compiled, law, start, s_end, cfg),
        n => Err(Error::InvalidArgument(format!("path integration supports one or two particles, got {n}"))),
    }
}

/// Largest coordinate distance between corresponding points of two synchronized
/// paths, matched by equal `T₁` over the common range. This bounds the Hausdorff
/// distance of the point sets from above. Both paths need increasing `T₁`.
pub fn path_set_distance(a: &MultitimePaths, b: &MultitimePaths) -> Result<f64> {
    let one_way = |p: &MultitimePaths, q: &MultitimePaths| -> Result<f64> {
        if q.dy.iter().any(|d| !(d[0] > 0.0)) {
            return Err(Error::InvalidArgument("first clock is not increasing".into()));
        }
        let mut worst = 0.0f64;
        for y in &p.y {
            let Some(s) = q.parameter_at_first_time(y[0]) else { continue };
            let z = q.interpolate(s).expect("parameter lies inside the path");
            let d = y.iter().zip(&z).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(d);
        }
        Ok(worst)
    };
    Ok(one_way(a, b)?.max(one_way(b, a)?))
}
