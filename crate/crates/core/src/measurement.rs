//! Multitime Heisenberg-picture measurement statistics on two spin-1/2 systems.
//!
//! Vectors use the z⊗z order `(++, +−, −+, −−)`; subsystem `a` is the left factor.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{Axis, Sign, Spinor2};
use crate::state::Subsystem;

pub type Operator2 = Matrix2<C64>;
pub type Operator4 = Matrix4<C64>;
pub type State4 = Vector4<C64>;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn pauli(axis: Axis) -> Operator2 {
    match axis {
        Axis::X => Matrix2::new(c(0.0), c(1.0), c(1.0), c(0.0)),
        Axis::Z => Matrix2::new(c(1.0), c(0.0), c(0.0), c(-1.0)),
    }
}

fn hermiticity_defect(m: &Operator2) -> f64 {
    (m - m.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// `(h0, hx, hy, hz)` with `H = h0 I + h⃗·σ⃗`.
fn bloch(h: &Operator2) -> (f64, [f64; 3]) {
    let h0 = 0.5 * (h[(0, 0)].re + h[(1, 1)].re);
    let hz = 0.5 * (h[(0, 0)].re - h[(1, 1)].re);
    let off = h[(1, 0)];
    (h0, [off.re, off.im, hz])
}

fn sigma_dot(n: [f64; 3]) -> Operator2 {
    Matrix2::new(c(n[2]), C64::new(n[0], -n[1]), C64::new(n[0], n[1]), c(-n[2]))
}

/// `exp(−i H t)` in closed form for a 2×2 Hermitian `H`.
pub fn propagator(h: &Operator2, t: f64) -> Operator2 {
    let (h0, v) = bloch(h);
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let global = C64::from_polar(1.0, -h0 * t);
    let id = Operator2::identity();
    if norm == 0.0 {
        return id * global;
    }
    let n = v.map(|x| x / norm);
    (id * c((norm * t).cos()) - sigma_dot(n) * C64::new(0.0, (norm * t).sin())) * global
}

/// Projector onto the eigenspace of Hermitian `m` with eigenvalue nearest `value`.
pub fn eigenspace_projector(m: &Operator2, value: f64) -> Operator2 {
    let (h0, v) = bloch(m);
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if norm < 1e-14 {
        return Operator2::identity();
    }
    let sign = if value >= h0 { 1.0 } else { -1.0 };
    let n = v.map(|x| sign * x / norm);
    (Operator2::identity() + sigma_dot(n)) * c(0.5)
}

pub fn lift(op: &Operator2, sub: Subsystem) -> Operator4 {
    let id = Operator2::identity();
    match sub {
        Subsystem::A => op.kronecker(&id),
        Subsystem::B => id.kronecker(op),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeisenbergModel {
    pub psi0: State4,
    pub h_a: Operator2,
    pub h_b: Operator2,
}

impl HeisenbergModel {
    pub fn new(psi0: State4, h_a: Operator2, h_b: Operator2) -> Result<Self> {
        let norm = psi0.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::UnnormalizedState(norm));
        }
        for h in [&h_a, &h_b] {
            let d = hermiticity_defect(h);
            if d > 1e-12 {
                return Err(Error::NotHermitian(d));
            }
        }
        Ok(HeisenbergModel { psi0, h_a, h_b })
    }

    /// The Hardy spin state with trivial dynamics.
    pub fn hardy() -> Self {
        let up = Spinor2::eigen(Axis::Z, Sign::Plus);
        let down = Spinor2::eigen(Axis::Z, Sign::Minus);
        let minus_x = Spinor2::eigen(Axis::X, Sign::Minus);
        let s3 = 3f64.sqrt();
        let t1 = up.kron(&down);
        let t2 = minus_x.kron(&up);
        let psi = State4::from_fn(|i, _| t1[i] / s3 - t2[i] * (2f64.sqrt() / s3));
        HeisenbergModel { psi0: psi, h_a: Operator2::zeros(), h_b: Operator2::zeros() }
    }

    /// Gaussian-random Hermitian Hamiltonians and a uniformly random state.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let mut g = || C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let mut herm = || {
            let m = Operator2::from_fn(|_, _| g());
            (m + m.adjoint()) * c(0.5)
        };
        let (h_a, h_b) = (herm(), herm());
        let psi = State4::from_fn(|_, _| g());
        HeisenbergModel { psi0: psi / c(psi.norm()), h_a, h_b }
    }

    pub fn product(a: Spinor2, b: Spinor2, h_a: Operator2, h_b: Operator2) -> Result<Self> {
        let t = a.kron(&b);
        Self::new(State4::from_fn(|i, _| t[i]), h_a, h_b)
    }

    fn hamiltonian(&self, sub: Subsystem) -> &Operator2 {
        match sub {
            Subsystem::A => &self.h_a,
            Subsystem::B => &self.h_b,
        }
    }

    /// `U^a_{τ_a} U^b_{τ_b}` on the joint space.
    pub fn translation(&self, tau: (f64, f64)) -> Operator4 {
        propagator(&self.h_a, tau.0).kronecker(&propagator(&self.h_b, tau.1))
    }

    /// Heisenberg projector `U_{−t} π U_t` of an event, lifted to the joint space.
    pub fn projector(&self, e: &MeasurementEvent) -> Operator4 {
        let h = self.hamiltonian(e.subsystem);
        let u = propagator(h, e.time);
        let pi = eigenspace_projector(&pauli(e.axis), e.outcome.value());
        lift(&(u.adjoint() * pi * u), e.subsystem)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEvent {
    pub subsystem: Subsystem,
    pub time: f64,
    pub axis: Axis,
    pub outcome: Sign,
}

impl MeasurementEvent {
    pub fn new(subsystem: Subsystem, time: f64, axis: Axis, outcome: Sign) -> Self {
        MeasurementEvent { subsystem, time, axis, outcome }
    }
}

fn check_order(events: &[MeasurementEvent]) -> Result<()> {
    for sub in [Subsystem::A, Subsystem::B] {
        let times: Vec<f64> = events.iter().filter(|e| e.subsystem == sub).map(|e| e.time).collect();
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::EventOrder(sub.letter()));
        }
    }
    Ok(())
}

/// `π^b_ℓ … π^b_1 π^a_k … π^a_1 ψ`, unnormalized.
fn project(model: &HeisenbergModel, events: &[MeasurementEvent]) -> Result<State4> {
    check_order(events)?;
    let mut psi = model.psi0;
    for sub in [Subsystem::A, Subsystem::B] {
        for e in events.iter().filter(|e| e.subsystem == sub) {
            psi = model.projector(e) * psi;
        }
    }
    Ok(psi)
}

pub fn joint_probability(model: &HeisenbergModel, events: &[MeasurementEvent]) -> Result<f64> {
    Ok(project(model, events)?.norm_squared())
}

/// The translated description: `ψ₀′ = U^a_{τ_a} U^b_{τ_b} ψ₀` with every event
/// time reduced by its subsystem's shift.
pub fn shift_events(
    model: &HeisenbergModel,
    events: &[MeasurementEvent],
    tau: (f64, f64),
) -> (HeisenbergModel, Vec<MeasurementEvent>) {
    let psi0 = model.translation(tau) * model.psi0;
    let shifted = events
        .iter()
        .map(|e| {
            let t = match e.subsystem {
                Subsystem::A => tau.0,
                Subsystem::B => tau.1,
            };
            MeasurementEvent { time: e.time - t, ..*e }
        })
        .collect();
    (HeisenbergModel { psi0, ..model.clone() }, shifted)
}

/// Normalized state after conditioning on `prior`.
pub fn collapse(model: &HeisenbergModel, prior: &[MeasurementEvent]) -> Result<State4> {
    if prior.is_empty() {
        return Err(Error::InvalidArgument("collapse needs at least one prior event".into()));
    }
    let psi = project(model, prior)?;
    let norm = psi.norm();
    if norm < 1e-15 {
        return Err(Error::ZeroProbability);
    }
    Ok(psi / c(norm))
}

/// Probability of `further` given `prior`, evaluated on the collapsed state.
pub fn conditional_probability(
    model: &HeisenbergModel,
    prior: &[MeasurementEvent],
    further: &[MeasurementEvent],
) -> Result<f64> {
    let mut all = prior.to_vec();
    all.extend_from_slice(further);
    check_order(&all)?;
    let eff = HeisenbergModel { psi0: collapse(model, prior)?, ..model.clone() };
    joint_probability(&eff, further)
}

/// Every outcome assignment for a sequence of `(time, axis)` settings.
pub fn outcome_patterns(sub: Subsystem, settings: &[(f64, Axis)]) -> Vec<Vec<MeasurementEvent>> {
    (0..1usize << settings.len())
        .map(|bits| {
            settings
                .iter()
                .enumerate()
                .map(|(i, &(t, axis))| {
                    let outcome = if bits >> i & 1 == 1 { Sign::Minus } else { Sign::Plus };
                    MeasurementEvent::new(sub, t, axis, outcome)
                })
                .collect()
        })
        .collect()
}

/// Largest change of any `a`-outcome probability when `b` switches settings.
pub fn no_signaling_gap(
    model: &HeisenbergModel,
    a_settings: &[(f64, Axis)],
    b_setting_1: &[(f64, Axis)],
    b_setting_2: &[(f64, Axis)],
) -> Result<f64> {
    let marginal = |a: &[MeasurementEvent], b: &[(f64, Axis)]| -> Result<f64> {
        outcome_patterns(Subsystem::B, b).iter().try_fold(0.0, |acc, bp| {
            let mut ev = a.to_vec();
            ev.extend_from_slice(bp);
            Ok(acc + joint_probability(model, &ev)?)
        })
    };
    outcome_patterns(Subsystem::A, a_settings).iter().try_fold(0.0f64, |gap, a| {
        Ok(gap.max((marginal(a, b_setting_1)? - marginal(a, b_setting_2)?).abs()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(sub: Subsystem, axis: Axis, outcome: Sign) -> MeasurementEvent {
        MeasurementEvent::new(sub, 0.0, axis, outcome)
    }

    #[test]
    fn hardy_probabilities() {
        let m = HeisenbergModel::hardy();
        let p = |a: (Axis, Sign), b: (Axis, Sign)| {
            joint_probability(&m, &[ev(Subsystem::A, a.0, a.1), ev(Subsystem::B, b.0, b.1)]).unwrap()
        };
        assert!((p((Axis::X, Sign::Plus), (Axis::X, Sign::Plus)) - 1.0 / 12.0).abs() < 1e-15);
        assert!(p((Axis::X, Sign::Plus), (Axis::Z, Sign::Plus)) < 1e-30);
        assert!(p((Axis::Z, Sign::Plus), (Axis::X, Sign::Plus)) < 1e-30);
        assert!(p((Axis::Z, Sign::Minus), (Axis::Z, Sign::Minus)) < 1e-30);
    }

    #[test]
    fn propagator_is_unitary_and_composes() {
        let mut rng = crate::parallel::stream_rng(3, 0);
        let h = HeisenbergModel::random(&mut rng).h_a;
        let u = propagator(&h, 0.7);
        assert!((u.adjoint() * u - Operator2::identity()).norm() < 1e-14);
        assert!((propagator(&h, 0.3) * propagator(&h, 0.4) - u).norm() < 1e-14);
        // derivative check: (U(t+ε) − U(t−ε))/2ε ≈ −iHU
        let e = 1e-6;
        let d = (propagator(&h, 0.7 + e) - propagator(&h, 0.7 - e)) / c(2.0 * e);
        assert!((d + h * u * C64::new(0.0, 1.0)).norm() < 1e-8);
    }

    #[test]
    fn rejects_bad_order() {
        let m = HeisenbergModel::hardy();
        let e1 = MeasurementEvent::new(Subsystem::A, 1.0, Axis::X, Sign::Plus);
        let e2 = MeasurementEvent::new(Subsystem::A, 0.5, Axis::Z, Sign::Plus);
        assert_eq!(joint_probability(&m, &[e1, e2]), Err(Error::EventOrder('a')));
    }

    #[test]
    fn hardy_collapse_on_plus_x() {
        let m = HeisenbergModel::hardy();
        let eff = collapse(&m, &[ev(Subsystem::A, Axis::X, Sign::Plus)]).unwrap();
        let px = Spinor2::eigen(Axis::X, Sign::Plus);
        let mx = Spinor2::eigen(Axis::X, Sign::Minus);
        let (t1, t2) = (px.kron(&px), px.kron(&mx));
        let expected = State4::from_fn(|i, _| (t1[i] - t2[i]) / c(2f64.sqrt()));
        let overlap = expected.dotc(&eff);
        assert!((overlap.norm() - 1.0).abs() < 1e-14);
        // b's part (|+x⟩ − |−x⟩)/√2 is |−z⟩
        let mz = Spinor2::eigen(Axis::Z, Sign::Minus);
        let t3 = px.kron(&mz);
        assert!((State4::from_fn(|i, _| t3[i]).dotc(&eff).norm() - 1.0).abs() < 1e-14);
    }
}
