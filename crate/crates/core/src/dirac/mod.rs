//! Free 1+1 dimensional Dirac waves and current-guided trajectories.
//!
//! Representation: γ⁰ = σz and γ⁰γ¹ = σx, so the mode Hamiltonian is
//! `H(k) = k σx + m σz` and the current is `(ψ†ψ, ψ†σxψ)`.

mod field;
mod multitime;
mod path;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub use field::{SnapshotField, SpectralField, SpinorField};
pub use multitime::{
    integrate_multitime_paths, multitime_velocity, path_set_distance, DiracBranch, GuidanceLaw,
    MultitimeDiracState, MultitimePaths,
};
pub use path::{
    
    dirac_equivariance, guidance_velocity, integrate_dirac_path, DensitySampler, DiracPath,
    EquivarianceConfig, EquivarianceReport,
};

pub type Spinor = [C64; 2];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiracGrid {
    length: f64,
    points: usize,
    mass: f64,
}

impl DiracGrid {
    /// Periodic grid on `[−L/2, L/2)` with `points` nodes, a power of two.
    pub fn new(length: f64, points: usize, mass: f64) -> Result<Self> {
        if !points.is_power_of_two() || points < 8 {
            return Err(Error::GridSize(points));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidArgument(format!("domain length {length}")));
        }
        if !(mass >= 0.0 && mass.is_finite()) {
            return Err(Error::InvalidArgument(format!("mass {mass}")));
        }
        Ok(DiracGrid { length, points, mass })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }

    pub fn x_min(&self) -> f64 {
        -0.5 * self.length
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min() + j as f64 * self.spacing()
    }

    /// Wavenumber of FFT slot `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        let n = self.points as i64;
        let j = j as i64;
        let signed = if j < n / 2 { j } else { j - n };
        std::f64::consts::TAU * signed as f64 / self.length
    }

    pub fn energy(&self, k: f64) -> f64 {
        k.hypot(self.mass)
    }

    /// Maps `x` into `[−L/2, L/2)`.
    pub fn wrap(&self, x: f64) -> f64 {
        (x - self.x_min()).rem_euclid(self.length) + self.x_min()
    }
}

/// Applies `exp(−i H(k) τ)` to one Fourier mode.
pub(crate) fn evolve_mode(k: f64, m: f64, tau: f64, s: Spinor) -> Spinor {
    let e = k.hypot(m);
    if e == 0.0 {
        return s;
    }
    let (sin, cos) = (e * tau).sin_cos();
    let f = C64::new(0.0, -sin / e);
    [s[0] * cos + f * (s[0] * m + s[1] * k), s[1] * cos + f * (s[0] * k - s[1] * m)]
}

/// Normalized positive-energy eigenvector of `H(k)`.
pub fn positive_energy_spinor(k: f64, m: f64) -> Spinor {
    let e = k.hypot(m);
    if e == 0.0 {
        return [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    }
    let (a, b) = (e + m, k);
    let n = a.hypot(b);
    [C64::new(a / n, 0.0), C64::new(b / n, 0.0)]
}

fn transform(data: &[Spinor], inverse: bool) -> Vec<Spinor> {
    let n = data.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut comps: [Vec<C64>; 2] = [0, 1].map(|c| data.iter().map(|s| s[c]).collect());
    for comp in comps.iter_mut() {
        fft.process(comp);
    }
    let scale = if inverse { 1.0 / n as f64 } else { 1.0 };
    (0..n).map(|j| [comps[0][j] * scale, comps[1][j] * scale]).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiracGridState {
    grid: DiracGrid,
    psi: Vec<Spinor>,
    t: f64,
}

impl DiracGridState {
    pub fn new(grid: DiracGrid, psi: Vec<Spinor>, t: f64) -> Result<Self> {
        if psi.len() != grid.points {
            return Err(Error::GridSize(psi.len()));
        }
        let state = DiracGridState { grid, psi, t };
        let norm = state.norm_sqr().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::UnnormalizedState(norm));
        }
        Ok(state)
    }

    pub fn normalized(grid: DiracGrid, mut psi: Vec<Spinor>, t: f64) -> Result<Self> {
        if psi.len() != grid.points {
            return Err(Error::GridSize(psi.len()));
        }
        let norm = (psi.iter().map(spinor_norm_sqr).sum::<f64>() * grid.spacing()).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::UnnormalizedState(norm));
        }
        psi.iter_mut().flatten().for_each(|c| *c /= norm);
        Ok(DiracGridState { grid, psi, t })
    }

    fn from_spectrum(grid: DiracGrid, hat: &[Spinor], t: f64) -> Result<Self> {
        Self::normalized(grid, transform(hat, true), t)
    }

    /// Positive-energy packet with position spread `width` and mean momentum `momentum`.
    pub fn gaussian(grid: DiracGrid, center: f64, width: f64, momentum: f64, t: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::NonPositiveWidth(width));
        }
        let hat: Vec<Spinor> = (0..grid.points)
            .map(|j| {
                let k = grid.wavenumber(j);
                let amp = (-(k - momentum).powi(2) * width * width).exp();
                let phase = C64::from_polar(amp, -k * (center - grid.x_min()));
                positive_energy_spinor(k, grid.mass).map(|c| c * phase)
            })
            .collect();
        Self::from_spectrum(grid, &hat, t)
    }

    /// Positive-energy plane wave `e^{ikx} u₊(k)` with `k = 2π mode / L`.
    pub fn plane_wave(grid: DiracGrid, mode: i64, t: f64) -> Result<Self> {
        let k = std::f64::consts::TAU * mode as f64 / grid.length;
        let u = positive_energy_spinor(k, grid.mass);
        let psi = (0..grid.points)
            .map(|j| {
                let w = C64::from_polar(1.0, k * (grid.x(j) - grid.x_min()));
                u.map(|c| c * w)
            })
            .collect();
        Self::normalized(grid, psi, t)
    }

    pub fn grid(&self) -> &DiracGrid {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn spinors(&self) -> &[Spinor] {
        &self.psi
    }

    pub fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(spinor_norm_sqr).sum::<f64>() * self.grid.spacing()
    }

    /// Discrete `⟨self|other⟩` with the grid measure.
    pub fn inner(&self, other: &DiracGridState) -> C64 {
        self.psi
            .iter()
            .zip(&other.psi)
            .map(|(a, b)| a[0].conj() * b[0] + a[1].conj() * b[1])
            .sum::<C64>()
            * self.grid.spacing()
    }

    pub fn spectrum(&self) -> Vec<Spinor> {
        transform(&self.psi, false)
    }

    /// The same wave sampled on a grid of `points` nodes by trigonometric interpolation.
    pub fn resampled(&self, points: usize) -> Result<Self> {
        let grid = DiracGrid::new(self.grid.length, points, self.grid.mass)?;
        let field = SpectralField::new(self);
        let psi = (0..points).map(|j| field.spinor(self.t, grid.x(j))).collect();
        Ok(DiracGridState { grid, psi, t: self.t })
    }
}

pub(crate) fn spinor_norm_sqr(s: &Spinor) -> f64 {
    s[0].norm_sqr() + s[1].norm_sqr()
}

/// Exact free evolution by `dt`, diagonalized per Fourier mode.
pub fn dirac_evolve(state: &DiracGridState, dt: f64) -> DiracGridState {
    let grid = state.grid;
    let hat: Vec<Spinor> = state
        .spectrum()
        .into_iter()
        .enumerate()
        .map(|(j, s)| evolve_mode(grid.wavenumber(j), grid.mass, dt, s))
        .collect();
    DiracGridState { grid, psi: transform(&hat, true), t: state.t + dt }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Current {
    pub j0: Vec<f64>,
    pub j1: Vec<f64>,
}

impl Current {
    /// Smallest `(j⁰)² − (j¹)²` on the grid.
    pub fn timelike_defect(&self) -> f64 {
        self.j0.iter().zip(&self.j1).map(|(a, b)| a * a - b * b).fold(f64::INFINITY, f64::min)
    }
}

pub fn spinor_current(s: &Spinor) -> (f64, f64) {
    (spinor_norm_sqr(s), 2.0 * (s[0].conj() * s[1]).re)
}

pub fn dirac_current(state: &DiracGridState) -> Current {
    let (j0, j1) = state.psi.iter().map(spinor_current).unzip();
    Current { j0, j1 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> DiracGrid {
        DiracGrid::new(40.0, 256, 1.0).unwrap()
    }

    #[test]
    fn plane_wave_rotates_by_energy() {
        let g = grid();
        let s = DiracGridState::plane_wave(g, 3, 0.0).unwrap();
        let k = std::f64::consts::TAU * 3.0 / 40.0;
        let e = g.energy(k);
        let t = 2.7;
        let out = dirac_evolve(&s, t);
        let phase = C64::from_polar(1.0, -e * t);
        for (a, b) in s.spinors().iter().zip(out.spinors()) {
            assert!((a[0] * phase - b[0]).norm() < 1e-12);
            assert!((a[1] * phase - b[1]).norm() < 1e-12);
        }
        let cur = dirac_current(&s);
        for (a, b) in cur.j0.iter().zip(&cur.j1) {
            assert!((b / a - k / e).abs() < 1e-12);
        }
    }

    #[test]
    fn evolution_composes_and_reverses() {
        let s = DiracGridState::gaussian(grid(), -2.0, 1.0, 0.8, 0.0).unwrap();
        let a = dirac_evolve(&dirac_evolve(&s, 0.4), 0.6);
        let b = dirac_evolve(&s, 1.0);
        let back = dirac_evolve(&b, -1.0);
        for j in 0..s.grid().points() {
            for c in 0..2 {
                assert!((a.spinors()[j][c] - b.spinors()[j][c]).norm() < 1e-12);
                assert!((back.spinors()[j][c] - s.spinors()[j][c]).norm() < 1e-12);
            }
        }
        assert!((b.time() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_has_requested_moments() {
        let g = grid();
        let s = DiracGridState::gaussian(g, 1.5, 1.2, 0.0, 0.0).unwrap();
        let cur = dirac_current(&s);
        let dx = g.spacing();
        let mean: f64 = cur.j0.iter().enumerate().map(|(j, r)| g.x(j) * r * dx).sum();
        let var: f64 = cur.j0.iter().enumerate().map(|(j, r)| (g.x(j) - mean).powi(2) * r * dx).sum();
        assert!((mean - 1.5).abs() < 1e-9);
        // the spinor factor broadens the scalar Gaussian slightly
        assert!((var.sqrt() - 1.2).abs() < 0.1, "{}", var.sqrt());
    }

    #[test]
    fn rejects_bad_grids() {
        assert_eq!(DiracGrid::new(10.0, 100, 1.0), Err(Error::GridSize(100)));
        assert!(DiracGrid::new(-1.0, 64, 1.0).is_err());
        let g = grid();
        assert!(matches!(
            DiracGridState::new(g, vec![[C64::new(1.0, 0.0); 2]; 256], 0.0),
            Err(Error::UnnormalizedState(_))
        ));
    }
}
