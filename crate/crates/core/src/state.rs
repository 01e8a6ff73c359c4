//! Two-time wave functions as finite sums of product branches.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packet::GaussianPacket;
use crate::schedule::{PotentialSchedule, Window};
use crate::spin::{Axis, Sign, Spinor2};

const MERGE_TOL: f64 = 1e-10;
const DROP_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subsystem {
    A,
    B,
}

impl Subsystem {
    pub fn letter(self) -> char {
        match self {
            Subsystem::A => 'a',
            Subsystem::B => 'b',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const ALL: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, q: f64) -> bool {
        self.lo <= q && q < self.hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branch {
    pub coeff: C64,
    pub spin_a: Spinor2,
    pub spin_b: Spinor2,
    pub packet_a: GaussianPacket,
    pub packet_b: GaussianPacket,
}

impl Branch {
    pub fn spin(&self, sub: Subsystem) -> &Spinor2 {
        match sub {
            Subsystem::A => &self.spin_a,
            Subsystem::B => &self.spin_b,
        }
    }

    pub fn packet(&self, sub: Subsystem) -> &GaussianPacket {
        match sub {
            Subsystem::A => &self.packet_a,
            Subsystem::B => &self.packet_b,
        }
    }

    fn spin_mut(&mut self, sub: Subsystem) -> &mut Spinor2 {
        match sub {
            Subsystem::A => &mut self.spin_a,
            Subsystem::B => &mut self.spin_b,
        }
    }

    fn packet_mut(&mut self, sub: Subsystem) -> &mut GaussianPacket {
        match sub {
            Subsystem::A => &mut self.packet_a,
            Subsystem::B => &mut self.packet_b,
        }
    }

    /// Spin tensor in z⊗z order.
    pub fn spin_tensor(&self) -> [C64; 4] {
        self.spin_a.kron(&self.spin_b)
    }

    /// The factor by which `other` equals this branch, if both describe the
    /// same product function up to normalization.
    fn proportionality(&self, other: &Branch) -> Option<C64> {
        let sa = self.spin_a.inner(&other.spin_a);
        let sb = self.spin_b.inner(&other.spin_b);
        if sa.norm() < 1.0 - MERGE_TOL || sb.norm() < 1.0 - MERGE_TOL {
            return None;
        }
        if !self.packet_a.same_shape(&other.packet_a, MERGE_TOL) || !self.packet_b.same_shape(&other.packet_b, MERGE_TOL) {
            return None;
        }
        let phase = (other.packet_a.phase - self.packet_a.phase) + (other.packet_b.phase - self.packet_b.phase);
        Some(sa * sb * C64::from_polar(1.0, phase))
    }
}

#[derive(Clone, Debug)]
pub struct TwoTimeState {
    branches: Vec<Branch>,
    t_a: f64,
    t_b: f64,
    schedule_a: Arc<PotentialSchedule>,
    schedule_b: Arc<PotentialSchedule>,
}

/// The entangled spin state `(|+z⟩|−z⟩ − √2 |−x⟩|+z⟩)/√3` carried by two
/// minimum-uncertainty packets of width `sigma` at rest.
pub fn hardy_state(sigma: f64, centers: (f64, f64)) -> Result<TwoTimeState> {
    let pa = GaussianPacket::from_width(centers.0, 0.0, sigma)?;
    let pb = GaussianPacket::from_width(centers.1, 0.0, sigma)?;
    let s3 = 3f64.sqrt();
    let branches = vec![
        Branch {
            coeff: C64::new(1.0 / s3, 0.0),
            spin_a: Spinor2::eigen(Axis::Z, Sign::Plus),
            spin_b: Spinor2::eigen(Axis::Z, Sign::Minus),
            packet_a: pa,
            packet_b: pb,
        },
        Branch {
            coeff: C64::new(-(2f64.sqrt()) / s3, 0.0),
            spin_a: Spinor2::eigen(Axis::X, Sign::Minus),
            spin_b: Spinor2::eigen(Axis::Z, Sign::Plus),
            packet_a: pa,
            packet_b: pb,
        },
    ];
    Ok(TwoTimeState::new(branches, 0.0, 0.0, PotentialSchedule::free(), PotentialSchedule::free()))
}

impl TwoTimeState {
    pub fn new(
        branches: Vec<Branch>,
        t_a: f64,
        t_b: f64,
        schedule_a: PotentialSchedule,
        schedule_b: PotentialSchedule,
    ) -> Self {
        TwoTimeState { branches, t_a, t_b, schedule_a: Arc::new(schedule_a), schedule_b: Arc::new(schedule_b) }
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn time(&self, sub: Subsystem) -> f64 {
        match sub {
            Subsystem::A => self.t_a,
            Subsystem::B => self.t_b,
        }
    }

    pub fn times(&self) -> (f64, f64) {
        (self.t_a, self.t_b)
    }

    pub fn schedule(&self, sub: Subsystem) -> &PotentialSchedule {
        match sub {
            Subsystem::A => &self.schedule_a,
            Subsystem::B => &self.schedule_b,
        }
    }

    pub fn with_schedules(mut self, a: PotentialSchedule, b: PotentialSchedule) -> Self {
        self.schedule_a = Arc::new(a);
        self.schedule_b = Arc::new(b);
        self
    }

    /// Relabels the current subsystem times without evolving.
    pub fn with_times(mut self, t_a: f64, t_b: f64) -> Self {
        self.t_a = t_a;
        self.t_b = t_b;
        self
    }

    /// `ψ ∘ L_τ⁻¹`: the same function of positions, with every time
    /// coordinate (state times and window times) advanced by `τ`.
    pub fn translated(&self, tau: (f64, f64)) -> TwoTimeState {
        TwoTimeState {
            branches: self.branches.clone(),
            t_a: self.t_a + tau.0,
            t_b: self.t_b + tau.1,
            schedule_a: Arc::new(self.schedule_a.shifted(-tau.0)),
            schedule_b: Arc::new(self.schedule_b.shifted(-tau.1)),
        }
    }

    pub fn scaled(&self, factor: C64) -> TwoTimeState {
        let mut out = self.clone();
        out.branches.iter_mut().for_each(|b| b.coeff *= factor);
        out
    }

    /// `self + other` as a branch sum; both must share times and schedules.
    pub fn superposed(&self, other: &TwoTimeState) -> Result<TwoTimeState> {
        if self.times() != other.times() || self.schedule_a != other.schedule_a || self.schedule_b != other.schedule_b {
            return Err(Error::InvalidArgument("superposed states must share times and schedules".into()));
        }
        let mut out = self.clone();
        out.branches.extend_from_slice(&other.branches);
        out.merge();
        Ok(out)
    }

    /// Re-expresses every branch's spin factor for `sub` in the eigenbasis of `σ_axis`.
    pub fn rebasis(&self, sub: Subsystem, axis: Axis) -> TwoTimeState {
        let mut out = self.clone();
        out.rebase_in_place(sub, axis);
        out
    }

    fn rebase_in_place(&mut self, sub: Subsystem, axis: Axis) {
        let mut next = Vec::with_capacity(self.branches.len() * 2);
        for branch in &self.branches {
            for (sign, amp) in branch.spin(sub).decompose(axis) {
                if amp.norm() < DROP_TOL {
                    continue;
                }
                let mut b = *branch;
                b.coeff *= amp;
                *b.spin_mut(sub) = Spinor2::eigen(axis, sign);
                next.push(b);
            }
        }
        self.branches = next;
        self.merge();
    }

    fn merge(&mut self) {
        let mut merged: Vec<Branch> = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            match merged.iter_mut().find_map(|m| m.proportionality(b).map(|f| (m, f))) {
                Some((m, factor)) => m.coeff += b.coeff * factor,
                None => merged.push(*b),
            }
        }
        merged.retain(|b| b.coeff.norm() >= DROP_TOL);
        self.branches = merged;
    }

    /// Evolves one subsystem forward by `dt ≥ 0`.
    pub fn evolve_subsystem(&self, sub: Subsystem, dt: f64) -> Result<TwoTimeState> {
        if dt < 0.0 || !dt.is_finite() {
            return Err(Error::NegativeDuration(dt));
        }
        Ok(self.evolve_subsystem_signed(sub, dt))
    }

    /// Evolves one subsystem by `dt` of either sign (backward steps apply the
    /// inverse unitary).
    pub fn evolve_subsystem_signed(&self, sub: Subsystem, dt: f64) -> TwoTimeState {
        let mut out = self.clone();
        out.advance(sub, dt);
        out
    }

    pub fn evolve_to(&self, t_a: f64, t_b: f64) -> TwoTimeState {
        let mut out = self.clone();
        out.advance(Subsystem::A, t_a - self.t_a);
        out.advance(Subsystem::B, t_b - self.t_b);
        out
    }

    /// `U^a_{τ_a} U^b_{τ_b} ψ`.
    pub fn multitime_shift(&self, tau: (f64, f64)) -> TwoTimeState {
        self.evolve_to(self.t_a + tau.0, self.t_b + tau.1)
    }

    fn advance(&mut self, sub: Subsystem, dt: f64) {
        let schedule = Arc::clone(match sub {
            Subsystem::A => &self.schedule_a,
            Subsystem::B => &self.schedule_b,
        });
        let target = self.time(sub) + dt;
        let forward = dt > 0.0;
        let mut t = self.time(sub);
        while t != target {
            let next = if forward {
                schedule.next_boundary_after(t).map_or(target, |b| b.min(target))
            } else {
                schedule.last_boundary_before(t).map_or(target, |b| b.max(target))
            };
            let window = self.enter_window(sub, t.min(next), t.max(next));
            let forces = self.window_forces(sub, window);
            for (branch, force) in self.branches.iter_mut().zip(forces) {
                let p = branch.packet_mut(sub);
                *p = p.propagated(next - t, force);
            }
            t = next;
        }
        match sub {
            Subsystem::A => self.t_a = target,
            Subsystem::B => self.t_b = target,
        }
    }

    /// Rebases `sub` to the axis of the window acting on `(lo, hi)`, if any.
    pub(crate) fn enter_window(&mut self, sub: Subsystem, lo: f64, hi: f64) -> Option<Window> {
        let window = self.schedule(sub).window_over(lo, hi).copied()?;
        if self.branches.iter().any(|b| b.spin(sub).eigen_sign(window.axis).is_none()) {
            self.rebase_in_place(sub, window.axis);
        }
        Some(window)
    }

    /// Per-branch force on `sub` for an entered window.
    pub(crate) fn window_forces(&self, sub: Subsystem, window: Option<Window>) -> Vec<f64> {
        self.branches
            .iter()
            .map(|b| match window {
                Some(w) => b.spin(sub).eigen_sign(w.axis).map_or(0.0, |s| s.value() * w.force),
                None => 0.0,
            })
            .collect()
    }

    /// `ψ(t_a, q_a, t_b, q_b)` in z⊗z spin components.
    pub fn amplitude(&self, q_a: f64, q_b: f64) -> [C64; 4] {
        let mut out = [C64::new(0.0, 0.0); 4];
        for b in &self.branches {
            let w = b.coeff * (b.packet_a.log_value(q_a) + b.packet_b.log_value(q_b)).exp();
            for (o, s) in out.iter_mut().zip(b.spin_tensor()) {
                *o += w * s;
            }
        }
        out
    }

    pub fn density(&self, q_a: f64, q_b: f64) -> f64 {
        self.amplitude(q_a, q_b).iter().map(|c| c.norm_sqr()).sum()
    }

    /// `∫∫ |ψ|²` over a product of intervals, cross terms included.
    pub fn region_probability(&self, region_a: Interval, region_b: Interval) -> f64 {
        let mut total = 0.0;
        for (i, bi) in self.branches.iter().enumerate() {
            for bj in &self.branches[i..] {
                let spin = bi.spin_a.inner(&bj.spin_a) * bi.spin_b.inner(&bj.spin_b);
                if spin.norm() < 1e-15 {
                    continue;
                }
                let ia = bi.packet_a.interval_overlap(&bj.packet_a, region_a.lo, region_a.hi);
                let ib = bi.packet_b.interval_overlap(&bj.packet_b, region_b.lo, region_b.hi);
                let term = bi.coeff.conj() * bj.coeff * spin * ia * ib;
                total += if std::ptr::eq(bi, bj) { term.re } else { 2.0 * term.re };
            }
        }
        total
    }

    /// Total norm from the branch Gram matrix.
    pub fn norm_sqr(&self) -> f64 {
        self.region_probability(Interval::ALL, Interval::ALL)
    }

    pub fn normalized(&self) -> Result<TwoTimeState> {
        let n = self.norm_sqr();
        if !(n > 0.0) {
            return Err(Error::ZeroProbability);
        }
        Ok(self.scaled(C64::new(1.0 / n.sqrt(), 0.0)))
    }

    /// Keeps the branches whose `sub` packet center lies inside (or outside)
    /// `region`, renormalized.
    pub fn project(&self, sub: Subsystem, region: Interval, inside: bool) -> Result<TwoTimeState> {
        let mut out = self.clone();
        out.branches.retain(|b| region.contains(b.packet(sub).center) == inside);
        out.normalized()
    }
}
