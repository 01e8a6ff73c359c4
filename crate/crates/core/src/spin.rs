//! Spin-1/2 states in the z basis.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Z,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Z => "z",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn from_value(v: i32) -> Option<Sign> {
        match v {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Unit spinor stored by its z-basis components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spinor2([C64; 2]);

impl Spinor2 {
    pub fn new(up: C64, down: C64) -> Result<Self> {
        let norm = (up.norm_sqr() + down.norm_sqr()).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
            return Err(Error::UnnormalizedSpinor(norm));
        }
        Ok(Spinor2([up, down]))
    }

    /// Normalizes an arbitrary nonzero pair.
    pub fn normalized(up: C64, down: C64) -> Result<Self> {
        let norm = (up.norm_sqr() + down.norm_sqr()).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::UnnormalizedSpinor(norm));
        }
        Ok(Spinor2([up / norm, down / norm]))
    }

    pub fn eigen(axis: Axis, sign: Sign) -> Self {
        let r = C64::new(FRAC_1_SQRT_2, 0.0);
        match (axis, sign) {
            (Axis::Z, Sign::Plus) => Spinor2([C64::new(1.0, 0.0), C64::new(0.0, 0.0)]),
            (Axis::Z, Sign::Minus) => Spinor2([C64::new(0.0, 0.0), C64::new(1.0, 0.0)]),
            (Axis::X, Sign::Plus) => Spinor2([r, r]),
            (Axis::X, Sign::Minus) => Spinor2([r, -r]),
        }
    }

    pub fn components(&self) -> [C64; 2] {
        self.0
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &Spinor2) -> C64 {
        self.0[0].conj() * other.0[0] + self.0[1].conj() * other.0[1]
    }

    pub fn expectation(&self, axis: Axis) -> f64 {
        let [u, d] = self.0;
        match axis {
            Axis::Z => u.norm_sqr() - d.norm_sqr(),
            Axis::X => 2.0 * (u.conj() * d).re,
        }
    }

    /// The eigenvalue sign if this spinor is an eigenstate of `σ_axis`.
    pub fn eigen_sign(&self, axis: Axis) -> Option<Sign> {
        let e = self.expectation(axis);
        if e > 1.0 - 1e-10 {
            Some(Sign::Plus)
        } else if e < -1.0 + 1e-10 {
            Some(Sign::Minus)
        } else {
            None
        }
    }

    /// Amplitudes of this spinor along the two eigenvectors of `σ_axis`.
    pub fn decompose(&self, axis: Axis) -> [(Sign, C64); 2] {
        Sign::BOTH.map(|s| (s, Spinor2::eigen(axis, s).inner(self)))
    }

    /// Tensor product with a second spinor in z⊗z order (++, +-, -+, --).
    pub fn kron(&self, other: &Spinor2) -> [C64; 4] {
        let [a0, a1] = self.0;
        let [b0, b1] = other.0;
        [a0 * b0, a0 * b1, a1 * b0, a1 * b1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plus_x_decomposes_into_equal_z_amplitudes() {
        let s = Spinor2::eigen(Axis::X, Sign::Plus);
        let d = s.decompose(Axis::Z);
        for (_, c) in d {
            assert!((c - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn eigenstates_report_their_sign() {
        for axis in [Axis::X, Axis::Z] {
            for sign in Sign::BOTH {
                assert_eq!(Spinor2::eigen(axis, sign).eigen_sign(axis), Some(sign));
            }
        }
        assert_eq!(Spinor2::eigen(Axis::X, Sign::Plus).eigen_sign(Axis::Z), None);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(Spinor2::new(C64::new(1.0, 0.0), C64::new(1.0, 0.0)).is_err());
    }
}
