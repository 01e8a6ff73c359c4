use num_complex::Complex64 as C64;
use proptest::prelude::*;
use twotime_core::equilibrium::{crossing, SliceSpec};
use twotime_core::guidance::{integrate, velocity, IntegratorConfig, SynchronizedField, SynchronizedPoint};
use twotime_core::ode::{dormand_prince, OdeConfig};
use twotime_core::packet::GaussianPacket;
use twotime_core::schedule::{PotentialSchedule, Window};
use twotime_core::spin::{Axis, Sign, Spinor2};
use twotime_core::state::{hardy_state, Branch, Subsystem, TwoTimeState};

fn schedule() -> PotentialSchedule {
    PotentialSchedule::new(vec![
        Window { start: 0.1, end: 0.3, axis: Axis::X, force: 4.0 },
        Window { start: 0.6, end: 0.8, axis: Axis::X, force: -4.0 },
    ])
    .unwrap()
}

fn state() -> TwoTimeState {
    hardy_state(1.0, (0.0, 0.0)).unwrap().with_schedules(schedule(), schedule())
}

fn tight() -> IntegratorConfig {
    IntegratorConfig { rel_tol: 1e-11, abs_tol: 1e-11, ..IntegratorConfig::default() }
}

#[test]
fn velocity_matches_finite_differences() {
    let st = state().evolve_to(0.45, 0.25);
    let dens = |qa: f64, qb: f64| st.amplitude(qa, qb);
    let eps = 1e-5;
    for &(qa, qb) in &[(0.3, -0.2), (-0.8, 0.9), (1.1, 0.4)] {
        let psi = dens(qa, qb);
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        let deriv = |d: (f64, f64)| -> f64 {
            let (p, m) = (dens(qa + d.0, qb + d.1), dens(qa - d.0, qb - d.1));
            let s: C64 = (0..4).map(|i| psi[i].conj() * (p[i] - m[i]) / (2.0 * eps)).sum();
            s.im / norm
        };
        let (fa, fb) = (deriv((eps, 0.0)), deriv((0.0, eps)));
        let v = velocity(&st, qa, qb).unwrap();
        assert!((v.v_a - fa).abs() <= 1e-6 * fa.abs().max(1.0), "{} vs {fa}", v.v_a);
        assert!((v.v_b - fb).abs() <= 1e-6 * fb.abs().max(1.0), "{} vs {fb}", v.v_b);
    }
}

fn product() -> TwoTimeState {
    let b = Branch {
        coeff: C64::new(1.0, 0.0),
        spin_a: Spinor2::eigen(Axis::X, Sign::Plus),
        spin_b: Spinor2::eigen(Axis::Z, Sign::Minus),
        packet_a: GaussianPacket::from_width(0.0, 0.6, 0.8).unwrap(),
        packet_b: GaussianPacket::from_width(1.0, -0.3, 1.1).unwrap(),
    };
    TwoTimeState::new(vec![b], 0.0, 0.0, schedule(), PotentialSchedule::free())
}

#[test]
fn product_state_particles_ignore_each_other() {
    let st = product();
    let reference = integrate(&st, SynchronizedPoint { t_a: 0.0, q_a: 0.4, t_b: 0.0, q_b: 0.0 }, 1.5, &tight()).unwrap();
    for &(tb, qb) in &[(0.5, 2.0), (-0.3, -1.0)] {
        let other = integrate(&st, SynchronizedPoint { t_a: 0.0, q_a: 0.4, t_b: tb, q_b: qb }, 1.5, &tight()).unwrap();
        for s in [0.2, 0.7, 1.5] {
            let (x, y) = (reference.point(s).unwrap(), other.point(s).unwrap());
            assert!((x.q_a - y.q_a).abs() < 1e-8, "s = {s}");
        }
    }
}

#[test]
fn crossing_at_start_slice_returns_start() {
    let st = state();
    let start = SynchronizedPoint { t_a: 0.0, q_a: 0.3, t_b: 0.2, q_b: -0.5 };
    let path = integrate(&st, start, 1.0, &IntegratorConfig::default()).unwrap();
    let c = crossing(&path, &SliceSpec::new("start", 0.0, 0.2)).unwrap();
    assert_eq!(c, (0.3, -0.5));
    assert!(crossing(&path, &SliceSpec::new("late", 5.0, 0.2)).is_err());
}

#[test]
fn static_state_paths_stand_still() {
    let b = Branch {
        coeff: C64::new(1.0, 0.0),
        spin_a: Spinor2::eigen(Axis::Z, Sign::Plus),
        spin_b: Spinor2::eigen(Axis::Z, Sign::Plus),
        packet_a: GaussianPacket::from_width(0.0, 0.0, 1.0).unwrap(),
        packet_b: GaussianPacket::from_width(0.0, 0.0, 1.0).unwrap(),
    };
    let st = TwoTimeState::new(vec![b], 0.0, 0.0, PotentialSchedule::free(), PotentialSchedule::free());
    // a centered start in a symmetric spreading packet only sees v = 0
    let path = integrate(&st, SynchronizedPoint { t_a: 0.0, q_a: 0.0, t_b: 0.0, q_b: 0.0 }, 2.0, &tight()).unwrap();
    for (t_a, t_b) in [(0.5, 1.5), (2.0, 0.0), (1.0, 1.0)] {
        assert_eq!(crossing(&path, &SliceSpec::new("s", t_a, t_b)).unwrap(), (0.0, 0.0));
    }
}

#[test]
fn positive_rescaling_traces_the_same_curve() {
    let st = state();
    let (t_a0, t_b0, s_end) = (0.0, -0.2, 1.2);
    let cfg = tight();
    let field = SynchronizedField::new(&st, t_a0, t_b0, s_end, &cfg).unwrap();
    let path = field.trace(0.4, -0.3, &cfg, None).path;
    // y = (T_a, Q_a, Q_b); dZ/dσ = A(Z)(1, v_a, 1, v_b)
    let rhs = |_: f64, y: &[f64; 3]| -> Result<[f64; 3], twotime_core::Error> {
        let a = 1.0 + 0.5 * (y[1] + 2.0 * y[0]).sin();
        let v = field.velocity((y[0] - t_a0).clamp(0.0, s_end), y[1], y[2])?;
        Ok([a, a * v.v_a, a * v.v_b])
    };
    let ode = OdeConfig { rel_tol: 1e-11, abs_tol: 1e-11, max_step: 0.05 };
    let run = dormand_prince(rhs, 0.0, [t_a0, 0.4, -0.3], 0.7, &[], &ode, None);
    assert!(run.failure.is_none());
    let sol = run.solution;
    let reached = sol.y.last().unwrap()[0];
    assert!(reached > 0.5 && reached < s_end);
    let forward = sol
        .y
        .iter()
        .map(|y| {
            let p = path.point(y[0] - t_a0).unwrap();
            (p.q_a - y[1]).hypot(p.q_b - y[2])
        })
        .fold(0.0, f64::max);
    // reverse direction: each path sample against the rescaled curve at equal T_a
    let backward = path
        .samples()
        .filter(|(_, p)| p.t_a <= reached)
        .map(|(_, p)| {
            let (mut lo, mut hi) = (0.0, 0.7);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if sol.interpolate(mid).unwrap()[0] < p.t_a {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let y = sol.interpolate(0.5 * (lo + hi)).unwrap();
            (p.q_a - y[1]).hypot(p.q_b - y[2])
        })
        .fold(0.0, f64::max);
    assert!(forward.max(backward) < 1e-6, "{forward} {backward}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn shifted_state_carries_shifted_paths(tau_a in -0.5..0.5f64, tau_b in -0.5..0.5f64, qa in -1.0..1.0f64, qb in -1.0..1.0f64) {
        let st = state();
        let cfg = tight();
        let start = SynchronizedPoint { t_a: 0.0, q_a: qa, t_b: 0.1, q_b: qb };
        let p = integrate(&st, start, 1.0, &cfg).unwrap();
        let moved = st.translated((tau_a, tau_b));
        let start2 = SynchronizedPoint { t_a: tau_a, q_a: qa, t_b: 0.1 + tau_b, q_b: qb };
        let p2 = integrate(&moved, start2, 1.0, &cfg).unwrap();
        prop_assert!((p2.h() - (p.h() + tau_b - tau_a)).abs() < 1e-15);
        for s in [0.25, 0.5, 0.75, 1.0] {
            let (x, y) = (p.point(s).unwrap(), p2.point(s).unwrap());
            prop_assert!((x.q_a - y.q_a).abs() < 1e-8 && (x.q_b - y.q_b).abs() < 1e-8);
            prop_assert!((y.t_a - x.t_a - tau_a).abs() < 1e-12);
        }
    }
}

#[test]
fn node_floor_is_enforced() {
    let cfg = IntegratorConfig { node_floor: 0.0, ..IntegratorConfig::default() };
    assert!(cfg.validate().is_err());
    let st = state();
    let err = integrate(&st, SynchronizedPoint { t_a: 0.0, q_a: 60.0, t_b: 0.0, q_b: 0.0 }, 1.0, &IntegratorConfig::default());
    assert!(matches!(err, Err(twotime_core::Error::NodeProximity { .. })));
    let _ = Subsystem::A;
}
