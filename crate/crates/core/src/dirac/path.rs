//! Single-particle trajectories along the Dirac current.

use rand::Rng;

use super::{dirac_current, dirac_evolve, spinor_current, DiracGrid, DiracGridState, SnapshotField, SpinorField};
use crate::equilibrium::total_variation;
use crate::error::{Error, Result};
use crate::parallel::{map_indexed, stream_rng, Execution};

/// Densities below this are treated as nodes.
const NODE_FLOOR: f64 = 1e-30;

/// `dx/dt = j¹/j⁰`; always within `[−1, 1]`.
pub fn guidance_velocity<F: SpinorField + ?Sized>(field: &F, t: f64, x: f64) -> Result<f64> {
    let (j0, j1) = spinor_current(&field.spinor(t, x));
    if !(j0 > NODE_FLOOR) {
        return Err(Error::NodeProximity { s: t, density: j0, floor: NODE_FLOOR });
    }
    Ok(j1 / j0)
}

/// Samples `(t, x)` with the guidance velocity at each.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracPath {
    t: Vec<f64>,
    x: Vec<f64>,
    v: Vec<f64>,
}

impl DiracPath {
    pub(crate) fn from_parts(t: Vec<f64>, x: Vec<f64>, v: Vec<f64>) -> Self {
        DiracPath { t, x, v }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.t.iter().copied().zip(self.x.iter().copied())
    }

    pub fn final_position(&self) -> f64 {
        *self.x.last().expect("path has a start point")
    }

    /// Largest `|Δx/Δt|` over consecutive samples.
    pub fn max_segment_speed(&self) -> f64 {
        self.t
            .windows(2)
            .zip(self.x.windows(2))
            .map(|(t, x)| ((x[1] - x[0]) / (t[1] - t[0])).abs())
            .fold(0.0, f64::max)
    }

    /// Cubic Hermite interpolation in `t`.
    pub fn position_at(&self, t: f64) -> Option<f64> {
        let (lo, hi) = (self.t[0], *self.t.last()?);
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if t < lo.min(hi) - slack || t > lo.max(hi) + slack {
            return None;
        }
        let t = t.clamp(lo.min(hi), lo.max(hi));
        let forward = hi >= lo;
        let i = self
            .t
            .partition_point(|&ti| if forward { ti <= t } else { ti >= t })
            .clamp(1, self.t.len() - 1);
        let h = self.t[i] - self.t[i - 1];
        if h == 0.0 {
            return Some(self.x[i]);
        }
        let r = (t - self.t[i - 1]) / h;
        let (r2, r3) = (r * r, r * r * r);
        Some(
            (2.0 * r3 - 3.0 * r2 + 1.0) * self.x[i - 1]
                + (r3 - 2.0 * r2 + r) * h * self.v[i - 1]
                + (-2.0 * r3 + 3.0 * r2) * self.x[i]
                + (r3 - r2) * h * self.v[i],
        )
    }
}

fn rk4_step<F: SpinorField + ?Sized>(field: &F, t: f64, x: f64, v0: f64, h: f64) -> Result<(f64, f64)> {
    let k2 = guidance_velocity(field, t + 0.5 * h, x + 0.5 * h * v0)?;
    let k3 = guidance_velocity(field, t + 0.5 * h, x + 0.5 * h * k2)?;
    let k4 = guidance_velocity(field, t + h, x + h * k3)?;
    let x1 = x + h * (v0 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
    Ok((x1, guidance_velocity(field, t + h, x1)?))
}

/// Integrates `dx/dt = j¹/j⁰` from `(t0, x0)` to `t1` with fixed RK4 steps of at
/// most `step`. The RK4 weights are positive and sum to one, so every segment
/// inherits the pointwise speed bound.
pub fn integrate_dirac_path<F: SpinorField + ?Sized>(
    field: &F,
    x0: f64,
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<DiracPath> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step {step}")));
    }
    let steps = ((t1 - t0).abs() / step).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let mut path = DiracPath { t: Vec::with_capacity(steps + 1), x: Vec::new(), v: Vec::new() };
    let (mut x, mut v) = (x0, guidance_velocity(field, t0, x0)?);
    path.t.push(t0);
    path.x.push(x);
    path.v.push(v);
    for i in 0..steps {
        let t = t0 + i as f64 * h;
        (x, v) = rk4_step(field, t, x, v, h)?;
        path.t.push(if i + 1 == steps { t1 } else { t + h });
        path.x.push(x);
        path.v.push(v);
    }
    Ok(path)
}

/// Inverse-CDF sampling of the piecewise-linear interpolant of `j⁰`.
#[derive(Clone, Debug)]
pub struct DensitySampler {
    grid: DiracGrid,
    density: Vec<f64>,
    cdf: Vec<f64>,
}

impl DensitySampler {
    pub fn new(state: &DiracGridState) -> Self {
        let density = dirac_current(state).j0;
        let n = density.len();
        let dx = state.grid().spacing();
        let mut cdf = Vec::with_capacity(n + 1);
        cdf.push(0.0);
        for j in 0..n {
            let mass = 0.5 * dx * (density[j] + density[(j + 1) % n]);
            cdf.push(cdf[j] + mass);
        }
        let total = cdf[n];
        cdf.iter_mut().for_each(|c| *c /= total);
        DensitySampler { grid: *state.grid(), density, cdf }
    }

    /// Position below which a fraction `p` of the mass lies.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.density.len();
        let j = (self.cdf.partition_point(|&c| c <= p).max(1) - 1).min(n - 1);
        let cell = self.cdf[j + 1] - self.cdf[j];
        let (a, b) = (self.density[j], self.density[(j + 1) % n]);
        let f = if cell > 0.0 {
            // mass fraction inside the cell, in units of the mean density
            let target = ((p - self.cdf[j]) / cell).clamp(0.0, 1.0) * 0.5 * (a + b);
            let disc = (a * a + 2.0 * (b - a) * target).max(0.0);
            let denom = a + disc.sqrt();
            if denom > 0.0 { (2.0 * target / denom).clamp(0.0, 1.0) } else { 0.0 }
        } else {
            0.0
        };
        self.grid.x(j) + f * self.grid.spacing()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquivarianceConfig {
    pub n: usize,
    pub seed: u64,
    pub duration: f64,
    pub step: f64,
    pub cells: usize,
}

impl Default for EquivarianceConfig {
    fn default() -> Self {
        EquivarianceConfig { n: 100_000, seed: 1, duration: 4.0, step: 0.02, cells: 32 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivarianceReport {
    pub tv: f64,
    pub counts: Vec<u64>,
    pub probabilities: Vec<f64>,
    pub max_speed: f64,
    pub node_aborts: usize,
}

/// Transports a `j⁰`-distributed ensemble for `duration` and compares the final
/// positions with `j⁰` at the final time on equal-mass cells.
pub fn dirac_equivariance(
    state: &DiracGridState,
    cfg: &EquivarianceConfig,
    mode: Execution,
) -> Result<EquivarianceReport> {
    if cfg.n == 0 || cfg.cells < 2 {
        return Err(Error::InvalidCount(cfg.n.min(cfg.cells)));
    }
    if !(cfg.duration > 0.0 && cfg.step > 0.0) {
        return Err(Error::InvalidArgument("duration and step must be positive".into()));
    }
    let steps = (cfg.duration / cfg.step).ceil() as usize;
    let h = cfg.duration / steps as f64;
    let field = SnapshotField::record(state, 0.5 * h, 2 * steps);
    let initial = DensitySampler::new(state);
    let t0 = state.time();
    let finals = map_indexed(cfg.n, mode, |i| {
        let mut rng = stream_rng(cfg.seed, i as u64);
        let x0 = initial.sample(&mut rng);
        integrate_dirac_path(&field, x0, t0, t0 + cfg.duration, h)
            .map(|p| (p.final_position(), p.max_segment_speed()))
    });
    let grid = *state.grid();
    let target = DensitySampler::new(&dirac_evolve(state, cfg.duration));
    let edges: Vec<f64> = (1..cfg.cells).map(|c| target.quantile(c as f64 / cfg.cells as f64)).collect();
    let mut counts = vec![0u64; cfg.cells];
    let (mut max_speed, mut node_aborts) = (0.0f64, 0);
    for r in finals {
        match r {
            Ok((x, speed)) => {
                counts[edges.partition_point(|&e| e <= grid.wrap(x))] += 1;
                max_speed = max_speed.max(speed);
            }
            Err(_) => node_aborts += 1,
        }
    }
    let probabilities = vec![1.0 / cfg.cells as f64; cfg.cells];
    Ok(EquivarianceReport {
        tv: total_variation(&counts, &probabilities),
        counts,
        probabilities,
        max_speed,
        node_aborts,
    })
}
