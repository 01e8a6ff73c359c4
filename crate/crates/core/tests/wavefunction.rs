use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rustfft::FftPlanner;
use twotime_core::packet::GaussianPacket;
use twotime_core::schedule::{PotentialSchedule, Window};
use twotime_core::spin::{Axis, Sign, Spinor2};
use twotime_core::state::{hardy_state, Branch, Interval, Subsystem, TwoTimeState};

/// Split-step spectral solver for `i∂ψ/∂t = −½∂²ψ − q·M(t)ψ` on a periodic
/// grid, with `M` a 2×2 spin matrix piecewise constant in time. Fourth-order
/// Yoshida composition of Strang steps.
struct SplitStep {
    xs: Vec<f64>,
    ks: Vec<f64>,
}

type Spinor = [C64; 2];

impl SplitStep {
    fn new(length: f64, n: usize) -> Self {
        let dx = length / n as f64;
        let xs = (0..n).map(|j| -0.5 * length + j as f64 * dx).collect();
        let ks = (0..n)
            .map(|j| {
                let s = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                std::f64::consts::TAU * s / length
            })
            .collect();
        SplitStep { xs, ks }
    }

    fn kinetic(&self, psi: &mut [Spinor], h: f64) {
        let n = psi.len();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        for c in 0..2 {
            let mut buf: Vec<C64> = psi.iter().map(|s| s[c]).collect();
            fwd.process(&mut buf);
            for (b, k) in buf.iter_mut().zip(&self.ks) {
                *b *= C64::from_polar(1.0 / n as f64, -0.5 * k * k * h);
            }
            inv.process(&mut buf);
            for (s, b) in psi.iter_mut().zip(buf) {
                s[c] = b;
            }
        }
    }

    /// `exp(i h q F σ)` for the spin axis `σ`.
    fn potential(&self, psi: &mut [Spinor], h: f64, force: f64, axis: Option<Axis>) {
        let Some(axis) = axis else { return };
        for (s, &q) in psi.iter_mut().zip(&self.xs) {
            let (sin, cos) = (h * q * force).sin_cos();
            let i_sin = C64::new(0.0, sin);
            *s = match axis {
                Axis::Z => [s[0] * C64::from_polar(1.0, h * q * force), s[1] * C64::from_polar(1.0, -h * q * force)],
                Axis::X => [s[0] * cos + s[1] * i_sin, s[1] * cos + s[0] * i_sin],
            };
        }
    }

    fn strang(&self, psi: &mut [Spinor], h: f64, force: f64, axis: Option<Axis>) {
        self.kinetic(psi, 0.5 * h);
        self.potential(psi, h, force, axis);
        self.kinetic(psi, 0.5 * h);
    }

    fn run(&self, psi: &mut [Spinor], duration: f64, steps: usize, force: f64, axis: Option<Axis>) {
        let c = 2f64.powf(1.0 / 3.0);
        let w1 = 1.0 / (2.0 - c);
        let w0 = -c / (2.0 - c);
        let h = duration / steps as f64;
        for _ in 0..steps {
            self.strang(psi, w1 * h, force, axis);
            self.strang(psi, w0 * h, force, axis);
            self.strang(psi, w1 * h, force, axis);
        }
    }
}

#[test]
fn packet_through_force_window_matches_split_step() {
    let force = 2.0;
    let p0 = GaussianPacket::from_width(-1.0, 1.0, 1.0).unwrap();
    let solver = SplitStep::new(60.0, 2048);
    let mut psi: Vec<Spinor> = solver.xs.iter().map(|&q| [p0.value(q), C64::new(0.0, 0.0)]).collect();
    solver.run(&mut psi, 0.8, 400, force, Some(Axis::Z));
    let p1 = p0.propagated(0.8, force);
    let worst = solver.xs.iter().zip(&psi).map(|(&q, s)| (p1.value(q) - s[0]).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn spin_split_window_matches_split_step() {
    // a particle in +z passes an x-axis magnet: the state splits into ±x packets
    let pa = GaussianPacket::from_width(0.0, 0.0, 1.0).unwrap();
    let pb = GaussianPacket::from_width(0.5, 0.0, 1.0).unwrap();
    let up = Spinor2::eigen(Axis::Z, Sign::Plus);
    let branch = Branch { coeff: C64::new(1.0, 0.0), spin_a: up, spin_b: up, packet_a: pa, packet_b: pb };
    let sched = PotentialSchedule::new(vec![Window { start: 0.2, end: 0.7, axis: Axis::X, force: 3.0 }]).unwrap();
    let state = TwoTimeState::new(vec![branch], 0.0, 0.0, sched, PotentialSchedule::free());
    let evolved = state.evolve_subsystem(Subsystem::A, 1.0).unwrap();

    let solver = SplitStep::new(60.0, 2048);
    let mut psi: Vec<Spinor> = solver.xs.iter().map(|&q| [pa.value(q), C64::new(0.0, 0.0)]).collect();
    solver.run(&mut psi, 0.2, 100, 0.0, None);
    solver.run(&mut psi, 0.5, 250, 3.0, Some(Axis::X));
    solver.run(&mut psi, 0.3, 150, 0.0, None);

    let qb = 0.3;
    let b_val = pb.value(qb);
    let mut worst = 0.0f64;
    for (j, &q) in solver.xs.iter().enumerate().step_by(3) {
        let amp = evolved.amplitude(q, qb);
        // b stays in +z: components (a+, b+) and (a−, b+)
        worst = worst.max((amp[0] - psi[j][0] * b_val).norm()).max((amp[2] - psi[j][1] * b_val).norm());
        worst = worst.max(amp[1].norm()).max(amp[3].norm());
    }
    assert!(worst < 1e-6, "{worst}");
}

/// Independent evaluation of the Hardy amplitude from its defining formula.
fn hardy_oracle(sigma: f64, centers: (f64, f64), qa: f64, qb: f64) -> [C64; 4] {
    let g = |q: f64, c: f64| (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25) * (-(q - c).powi(2) / (4.0 * sigma * sigma)).exp();
    let env = g(qa, centers.0) * g(qb, centers.1);
    let r2 = 2f64.sqrt();
    let s3 = 3f64.sqrt();
    // |+z⟩|−z⟩/√3 − √2/√3 · (|+z⟩ − |−z⟩)/√2 ⊗ |+z⟩
    let pp = -r2 / s3 / r2;
    let pm = 1.0 / s3;
    let mp = r2 / s3 / r2;
    [pp, pm, mp, 0.0].map(|c| C64::new(c * env, 0.0))
}

#[test]
fn hardy_amplitude_matches_direct_sum() {
    let st = hardy_state(0.7, (0.2, -0.4)).unwrap();
    for &(qa, qb) in &[(0.0, 0.0), (0.31, -1.2), (-0.9, 0.77)] {
        let a = st.amplitude(qa, qb);
        let o = hardy_oracle(0.7, (0.2, -0.4), qa, qb);
        for i in 0..4 {
            assert!((a[i] - o[i]).norm() < 1e-14);
        }
    }
    assert!((st.norm_sqr() - 1.0).abs() < 1e-12);
    let whole = st.region_probability(Interval::ALL, Interval::ALL);
    assert!((whole - 1.0).abs() < 1e-12);
}

fn scenario_schedule() -> PotentialSchedule {
    PotentialSchedule::new(vec![
        Window { start: 0.1, end: 0.3, axis: Axis::X, force: 4.0 },
        Window { start: 0.6, end: 0.8, axis: Axis::X, force: -4.0 },
        Window { start: 1.0, end: 1.2, axis: Axis::Z, force: 4.0 },
    ])
    .unwrap()
}

fn scheduled_hardy() -> TwoTimeState {
    hardy_state(1.0, (0.0, 0.0)).unwrap().with_schedules(scenario_schedule(), scenario_schedule())
}

fn close(a: &TwoTimeState, b: &TwoTimeState, points: &[(f64, f64)], tol: f64) -> bool {
    points.iter().all(|&(qa, qb)| {
        let (x, y) = (a.amplitude(qa, qb), b.amplitude(qa, qb));
        (0..4).all(|i| (x[i] - y[i]).norm() < tol)
    })
}

fn arb_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rebasis_keeps_the_function(ta in 0.0..1.5f64, tb in 0.0..1.5f64, b in any::<bool>(), x in any::<bool>(), pts in arb_points()) {
        let st = scheduled_hardy().evolve_to(ta, tb);
        let sub = if b { Subsystem::B } else { Subsystem::A };
        let axis = if x { Axis::X } else { Axis::Z };
        prop_assert!(close(&st, &st.rebasis(sub, axis), &pts, 1e-12));
    }

    #[test]
    fn subsystem_evolutions_commute(da in 0.0..1.5f64, db in 0.0..1.5f64, pts in arb_points()) {
        let st = scheduled_hardy();
        let ab = st.evolve_subsystem(Subsystem::A, da).unwrap().evolve_subsystem(Subsystem::B, db).unwrap();
        let ba = st.evolve_subsystem(Subsystem::B, db).unwrap().evolve_subsystem(Subsystem::A, da).unwrap();
        prop_assert!(close(&ab, &ba, &pts, 1e-12));
        prop_assert!((ab.norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shifts_compose(t1 in (0.0..0.7f64, 0.0..0.7f64), t2 in (0.0..0.7f64, 0.0..0.7f64), pts in arb_points()) {
        let st = scheduled_hardy();
        let two = st.multitime_shift(t1).multitime_shift(t2);
        let one = st.multitime_shift((t1.0 + t2.0, t1.1 + t2.1));
        prop_assert!(close(&two, &one, &pts, 1e-12));
        prop_assert!((one.norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn superposition_is_linear(
        re in -1.0..1.0f64, im in -1.0..1.0f64, t in 0.0..1.5f64, pts in arb_points()
    ) {
        let a = scheduled_hardy();
        let b = scheduled_hardy().rebasis(Subsystem::A, Axis::X).scaled(C64::new(0.0, 1.0));
        let c = C64::new(re, im);
        let sum = a.scaled(c).superposed(&b).unwrap().evolve_to(t, t);
        let (ea, eb) = (a.evolve_to(t, t), b.evolve_to(t, t));
        for &(qa, qb) in &pts {
            let (s, x, y) = (sum.amplitude(qa, qb), ea.amplitude(qa, qb), eb.amplitude(qa, qb));
            for i in 0..4 {
                prop_assert!((s[i] - (c * x[i] + y[i])).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn zero_shift_is_identity() {
    let st = scheduled_hardy();
    let pts = [(0.1, -0.2), (1.0, 0.5)];
    assert!(close(&st, &st.multitime_shift((0.0, 0.0)), &pts, 1e-15));
}
