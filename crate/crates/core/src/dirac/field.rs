//! Pointwise access to an evolving Dirac wave.

use num_complex::Complex64 as C64;

use super::{evolve_mode, DiracGrid, DiracGridState, Spinor};

pub trait SpinorField: Sync {
    fn grid(&self) -> &DiracGrid;

    fn spinor(&self, t: f64, x: f64) -> Spinor;
}

/// Exact evaluation at any `(t, x)` from the Fourier coefficients.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: DiracGrid,
    t_ref: f64,
    hat: Vec<Spinor>,
    wavenumbers: Vec<f64>,
}

impl SpectralField {
    pub fn new(state: &DiracGridState) -> Self {
        let grid = *state.grid();
        let n = grid.points() as f64;
        let hat = state.spectrum().into_iter().map(|s| s.map(|c| c / n)).collect();
        let wavenumbers = (0..grid.points()).map(|j| grid.wavenumber(j)).collect();
        SpectralField { grid, t_ref: state.time(), hat, wavenumbers }
    }

    pub fn reference_time(&self) -> f64 {
        self.t_ref
    }
}

impl SpinorField for SpectralField {
    fn grid(&self) -> &DiracGrid {
        &self.grid
    }

    fn spinor(&self, t: f64, x: f64) -> Spinor {
        let tau = t - self.t_ref;
        let u = x - self.grid.x_min();
        let n = self.grid.points();
        let step = C64::from_polar(1.0, std::f64::consts::TAU * u / self.grid.length());
        let wrap = C64::from_polar(1.0, -std::f64::consts::TAU * u * n as f64 / self.grid.length());
        let mut w = C64::new(1.0, 0.0);
        let mut acc = [C64::new(0.0, 0.0); 2];
        for (j, (&k, s)) in self.wavenumbers.iter().zip(&self.hat).enumerate() {
            let phase = if j < n / 2 { w } else { w * wrap };
            let s = evolve_mode(k, self.grid.mass(), tau, *s);
            acc[0] += s[0] * phase;
            acc[1] += s[1] * phase;
            w *= step;
        }
        acc
    }
}

/// Grid snapshots at `t0 + i·dt`, cubic in space and linear in time.
///
/// Stage times of a Runge–Kutta step of length `2·dt` started on a frame hit
/// frames exactly, so only the spatial interpolation is approximate.
#[derive(Clone, Debug)]
pub struct SnapshotField {
    grid: DiracGrid,
    t0: f64,
    dt: f64,
    frames: Vec<Vec<Spinor>>,
}

impl SnapshotField {
    pub fn record(state: &DiracGridState, dt: f64, count: usize) -> Self {
        let frames = (0..=count)
            .map(|i| super::dirac_evolve(state, i as f64 * dt).spinors().to_vec())
            .collect();
        SnapshotField { grid: *state.grid(), t0: state.time(), dt, frames }
    }

    pub fn start(&self) -> f64 {
        self.t0
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.dt * (self.frames.len() - 1) as f64
    }

    fn at_frame(&self, frame: usize, x: f64) -> Spinor {
        let n = self.grid.points() as i64;
        let u = (x - self.grid.x_min()) / self.grid.spacing();
        let i = u.floor();
        let f = u - i;
        let i = i as i64;
        let w = [
            -f * (f - 1.0) * (f - 2.0) / 6.0,
            (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
            -(f + 1.0) * f * (f - 2.0) / 2.0,
            (f + 1.0) * f * (f - 1.0) / 6.0,
        ];
        let data = &self.frames[frame];
        let mut acc = [C64::new(0.0, 0.0); 2];
        for (o, wo) in w.iter().enumerate() {
            let s = &data[(i - 1 + o as i64).rem_euclid(n) as usize];
            acc[0] += s[0] * wo;
            acc[1] += s[1] * wo;
        }
        acc
    }
}

impl SpinorField for SnapshotField {
    fn grid(&self) -> &DiracGrid {
        &self.grid
    }

    fn spinor(&self, t: f64, x: f64) -> Spinor {
        let last = self.frames.len() - 1;
        let r = ((t - self.t0) / self.dt).clamp(0.0, last as f64);
        let i = (r.floor() as usize).min(last);
        let w = r - i as f64;
        if w < 1e-9 {
            return self.at_frame(i, x);
        }
        if w > 1.0 - 1e-9 {
            return self.at_frame(i + 1, x);
        }
        let (a, b) = (self.at_frame(i, x), self.at_frame(i + 1, x));
        [a[0] * (1.0 - w) + b[0] * w, a[1] * (1.0 - w) + b[1] * w]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_field_reproduces_grid_and_evolution() {
        let g = DiracGrid::new(30.0, 128, 0.7).unwrap();
        let s = DiracGridState::gaussian(g, 0.5, 1.0, -0.6, 0.25).unwrap();
        let f = SpectralField::new(&s);
        for j in [0, 17, 64, 127] {
            let v = f.spinor(0.25, g.x(j));
            assert!((v[0] - s.spinors()[j][0]).norm() < 1e-12);
        }
        let later = super::super::dirac_evolve(&s, 1.3);
        let v = f.spinor(1.55, g.x(70));
        assert!((v[1] - later.spinors()[70][1]).norm() < 1e-12);
    }

    #[test]
    fn snapshot_field_is_close_to_spectral() {
        let g = DiracGrid::new(30.0, 256, 1.0).unwrap();
        let s = DiracGridState::gaussian(g, 0.0, 1.0, 0.5, 0.0).unwrap();
        let snap = SnapshotField::record(&s, 0.1, 10);
        let exact = SpectralField::new(&s);
        for &(t, x) in &[(0.0, 0.33), (0.5, -1.07), (1.0, 2.2)] {
            let a = snap.spinor(t, x);
            let b = exact.spinor(t, x);
            assert!((a[0] - b[0]).norm() < 1e-4, "{a:?} {b:?}");
        }
    }
}
