//! Analytic one-dimensional Gaussian wave packets (ħ = m = 1).
//!
//! A packet is `ψ(q) = N(α) exp(−α u² + i k u + i θ)` with `u = q − x₀` and
//! `N(α) = (2 Re α / π)^{1/4}`. Evolution under a potential `V = −f q` that is
//! constant in time keeps this form exactly.

use errorfunctions::erfcx_with_relerror;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPacket {
    pub center: f64,
    pub momentum: f64,
    pub alpha: C64,
    pub phase: f64,
}

impl GaussianPacket {
    pub fn new(center: f64, momentum: f64, alpha: C64, phase: f64) -> Result<Self> {
        if !(alpha.re > 0.0) || !alpha.im.is_finite() || !center.is_finite() || !momentum.is_finite() {
            return Err(Error::NonPositiveWidth(alpha.re));
        }
        Ok(GaussianPacket { center, momentum, alpha, phase })
    }

    /// Minimum-uncertainty packet with position spread `sigma`.
    pub fn from_width(center: f64, momentum: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::NonPositiveWidth(sigma));
        }
        Self::new(center, momentum, C64::new(1.0 / (4.0 * sigma * sigma), 0.0), 0.0)
    }

    /// Position standard deviation of `|ψ|²`.
    pub fn width(&self) -> f64 {
        0.5 / self.alpha.re.sqrt()
    }

    pub fn log_norm(&self) -> f64 {
        0.25 * (2.0 * self.alpha.re / std::f64::consts::PI).ln()
    }

    /// Peak of `|ψ|²`.
    pub fn peak_density(&self) -> f64 {
        (2.0 * self.alpha.re / std::f64::consts::PI).sqrt()
    }

    /// Complex exponent `ln ψ(q)`.
    #[inline]
    pub fn log_value(&self, q: f64) -> C64 {
        let u = q - self.center;
        let e = -self.alpha * (u * u) + I * (self.momentum * u + self.phase);
        e + self.log_norm()
    }

    pub fn value(&self, q: f64) -> C64 {
        self.log_value(q).exp()
    }

    /// `∂_q ln ψ(q)`.
    #[inline]
    pub fn log_derivative(&self, q: f64) -> C64 {
        -2.0 * self.alpha * (q - self.center) + I * self.momentum
    }

    /// Exact evolution for duration `dt` (either sign) under constant force `force`.
    pub fn propagated(&self, dt: f64, force: f64) -> GaussianPacket {
        if dt == 0.0 {
            return *self;
        }
        let denom = C64::new(1.0, 0.0) + 2.0 * I * self.alpha * dt;
        let (x0, k0, f) = (self.center, self.momentum, force);
        let action = 0.5 * k0 * k0 * dt + f * k0 * dt * dt + f * f * dt * dt * dt / 3.0 + f * x0 * dt;
        GaussianPacket {
            center: x0 + k0 * dt + 0.5 * f * dt * dt,
            momentum: k0 + f * dt,
            alpha: self.alpha / denom,
            phase: self.phase + action - 0.5 * denom.arg(),
        }
    }

    /// Same packet up to a global phase, within relative tolerance `tol`.
    pub fn same_shape(&self, other: &GaussianPacket, tol: f64) -> bool {
        (self.center - other.center).abs() <= tol * (1.0 + self.center.abs())
            && (self.momentum - other.momentum).abs() <= tol * (1.0 + self.momentum.abs())
            && (self.alpha - other.alpha).norm() <= tol * self.alpha.norm()
    }

    /// `⟨self|other⟩` over the whole line.
    pub fn overlap(&self, other: &GaussianPacket) -> C64 {
        self.interval_overlap(other, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// `∫_lo^hi conj(self) other dq`, evaluated with complex error functions.
    pub fn interval_overlap(&self, other: &GaussianPacket, lo: f64, hi: f64) -> C64 {
        if !(hi > lo) {
            return C64::new(0.0, 0.0);
        }
        let product = ProductGaussian::new(self, other);
        product.integral(lo, hi)
    }
}

/// `conj(φ_i) φ_j` written as `exp(E0 − A (q − q0)²)`, in coordinates centered at `m`.
struct ProductGaussian<'a> {
    left: &'a GaussianPacket,
    right: &'a GaussianPacket,
    root_a: C64,
    q0: C64,
    e0: C64,
}

impl<'a> ProductGaussian<'a> {
    fn new(left: &'a GaussianPacket, right: &'a GaussianPacket) -> Self {
        let m = 0.5 * (left.center + right.center);
        let (xi, xj) = (left.center - m, right.center - m);
        let (ai, aj) = (left.alpha.conj(), right.alpha);
        let (ki, kj) = (left.momentum, right.momentum);
        let a = ai + aj;
        let b = 2.0 * ai * xi + 2.0 * aj * xj + I * (kj - ki);
        let c = -ai * (xi * xi) - aj * (xj * xj)
            + I * (ki * xi - kj * xj + right.phase - left.phase)
            + (left.log_norm() + right.log_norm());
        let q0 = b / (2.0 * a) + m;
        let e0 = c + b * b / (4.0 * a);
        ProductGaussian { left, right, root_a: a.sqrt(), q0, e0 }
    }

    /// Integrand value at a finite point, computed from the packets directly.
    fn value_at(&self, q: f64) -> C64 {
        (self.left.log_value(q).conj() + self.right.log_value(q)).exp()
    }

    /// Antiderivative `√π/(2√A) exp(E0) erf(√A (q − q0))`, returned as
    /// `(n, t)` meaning `n·K + t` with `K = √π/(2√A) exp(E0)`. Written through
    /// `erfcx` so nothing overflows in the tails, and split so the `K` parts
    /// cancel exactly.
    fn antiderivative(&self, q: f64, scale: C64) -> (i32, C64) {
        if q == f64::INFINITY {
            return (1, C64::new(0.0, 0.0));
        }
        if q == f64::NEG_INFINITY {
            return (-1, C64::new(0.0, 0.0));
        }
        let z = self.root_a * (q - self.q0);
        let tail = scale * self.value_at(q);
        if z.re >= 0.0 {
            (1, -tail * erfcx_with_relerror(z, 0.0))
        } else {
            (-1, tail * erfcx_with_relerror(-z, 0.0))
        }
    }

    fn integral(&self, lo: f64, hi: f64) -> C64 {
        let scale = C64::new(std::f64::consts::PI.sqrt() / 2.0, 0.0) / self.root_a;
        let (n_hi, t_hi) = self.antiderivative(hi, scale);
        let (n_lo, t_lo) = self.antiderivative(lo, scale);
        let bulk = match n_hi - n_lo {
            0 => C64::new(0.0, 0.0),
            n => self.e0.exp() * scale * n as f64,
        };
        bulk + (t_hi - t_lo)
    }
}
