//! Dormand–Prince 5(4) with cubic Hermite dense output.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig { rel_tol: 1e-8, abs_tol: 1e-8, max_step: 0.25 }
    }
}

/// Accepted step ends with state and derivative, enough for Hermite interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSolution<const N: usize> {
    pub s: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub dy: Vec<[f64; N]>,
}

impl<const N: usize> DenseSolution<N> {
    fn with_start(s0: f64, y0: [f64; N], dy0: [f64; N]) -> Self {
        DenseSolution { s: vec![s0], y: vec![y0], dy: vec![dy0] }
    }

    fn push(&mut self, s: f64, y: [f64; N], dy: [f64; N]) {
        self.s.push(s);
        self.y.push(y);
        self.dy.push(dy);
    }

    pub fn first(&self) -> f64 {
        self.s[0]
    }

    pub fn last(&self) -> f64 {
        *self.s.last().expect("solution has a start point")
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Cubic Hermite interpolation inside the covering step; `None` outside the span.
    pub fn interpolate(&self, s: f64) -> Option<[f64; N]> {
        if !(s >= self.first() && s <= self.last()) {
            return None;
        }
        let j = self.s.partition_point(|&x| x <= s);
        if j == 0 {
            return Some(self.y[0]);
        }
        if j >= self.s.len() {
            return Some(*self.y.last().unwrap());
        }
        let i = j - 1;
        let (s0, s1) = (self.s[i], self.s[j]);
        if s == s0 {
            return Some(self.y[i]);
        }
        let h = s1 - s0;
        let t = (s - s0) / h;
        let (h00, h10, h01, h11) = hermite_basis(t);
        let mut out = [0.0; N];
        for (k, o) in out.iter_mut().enumerate() {
            *o = h00 * self.y[i][k] + h10 * h * self.dy[i][k] + h01 * self.y[j][k] + h11 * h * self.dy[j][k];
        }
        Some(out)
    }

    /// Drops everything after `s` and appends the interpolated point at `s`.
    pub fn truncate_at(&mut self, s: f64, dy_at_s: [f64; N]) {
        let y = self.interpolate(s).expect("truncation point inside span");
        let keep = self.s.partition_point(|&x| x < s);
        self.s.truncate(keep);
        self.y.truncate(keep);
        self.dy.truncate(keep);
        self.push(s, y, dy_at_s);
    }

    /// Appends a continuation whose first point coincides with this solution's last.
    pub fn extend_from(&mut self, other: DenseSolution<N>) {
        let skip = usize::from(other.s.first() == self.s.last());
        self.s.extend_from_slice(&other.s[skip..]);
        self.y.extend_from_slice(&other.y[skip..]);
        self.dy.extend_from_slice(&other.dy[skip..]);
    }
}

fn hermite_basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2)
}

#[derive(Clone, Debug, PartialEq)]
pub enum OdeFailure<E> {
    Rhs { s: f64, error: E },
    StepUnderflow { s: f64 },
}

#[derive(Clone, Debug)]
pub struct OdeRun<const N: usize, E> {
    pub solution: DenseSolution<N>,
    pub failure: Option<OdeFailure<E>>,
}

const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn combine<const N: usize>(y: &[f64; N], h: f64, weights: &[f64], ks: &[[f64; N]]) -> [f64; N] {
    let mut out = *y;
    for (w, k) in weights.iter().zip(ks) {
        if *w != 0.0 {
            for (o, kv) in out.iter_mut().zip(k) {
                *o += h * w * kv;
            }
        }
    }
    out
}

/// Integrates `dy/ds = rhs(s, y)` from `s0` to `s_end > s0`.
///
/// Steps never cross an entry of `breakpoints`. With `stop_after`, the run
/// ends after the first accepted step reaching that parameter; the steps
/// taken up to there are exactly those of the unstopped run.
pub fn dormand_prince<const N: usize, E, F>(
    mut rhs: F,
    s0: f64,
    y0: [f64; N],
    s_end: f64,
    breakpoints: &[f64],
    cfg: &OdeConfig,
    stop_after: Option<f64>,
) -> OdeRun<N, E>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
{
    let k1 = match rhs(s0, &y0) {
        Ok(k) => k,
        Err(error) => {
            return OdeRun {
                solution: DenseSolution::with_start(s0, y0, [0.0; N]),
                failure: Some(OdeFailure::Rhs { s: s0, error }),
            }
        }
    };
    let mut sol = DenseSolution::with_start(s0, y0, k1);
    let mut s = s0;
    let mut y = y0;
    let mut k1 = k1;
    let mut h = initial_step(&y, &k1, s_end - s0, cfg);
    let mut bp = breakpoints.iter().copied().filter(|&b| b > s0 && b < s_end).peekable();

    while s < s_end {
        while bp.peek().is_some_and(|&b| b <= s) {
            bp.next();
        }
        let limit = bp.peek().copied().unwrap_or(s_end);
        let mut step = h.min(cfg.max_step);
        let mut lands = false;
        if s + step >= limit || limit - (s + step) < 1e-9 * step {
            step = limit - s;
            lands = true;
        }
        if step <= 1e-13 * s.abs().max(1.0) {
            return OdeRun { solution: sol, failure: Some(OdeFailure::StepUnderflow { s }) };
        }

        let mut ks = [[0.0; N]; 7];
        ks[0] = k1;
        let stages: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        let mut failed = None;
        for (i, a) in stages.iter().enumerate() {
            let yi = combine(&y, step, a, &ks[..=i]);
            match rhs(s + C[i] * step, &yi) {
                Ok(k) => ks[i + 1] = k,
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        if let Some(error) = failed {
            // a stage probed a node; retry smaller before giving up
            if step > 1e-6 * cfg.max_step {
                h = step * 0.25;
                continue;
            }
            return OdeRun { solution: sol, failure: Some(OdeFailure::Rhs { s, error }) };
        }
        let y_new = combine(&y, step, &B, &ks[..6]);
        let s_new = if lands { limit } else { s + step };
        let k7 = match rhs(s_new, &y_new) {
            Ok(k) => k,
            Err(error) => {
                if step > 1e-6 * cfg.max_step {
                    h = step * 0.25;
                    continue;
                }
                return OdeRun { solution: sol, failure: Some(OdeFailure::Rhs { s, error }) };
            }
        };
        ks[6] = k7;

        let mut acc = 0.0;
        for i in 0..N {
            let mut e = 0.0;
            for (w, k) in E.iter().zip(&ks) {
                e += w * k[i];
            }
            let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
            acc += (step * e / scale).powi(2);
        }
        let err = (acc / N as f64).sqrt();
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if err <= 1.0 {
            s = s_new;
            y = y_new;
            k1 = k7;
            sol.push(s, y, k1);
            h = if lands { h.max(step) } else { step * factor };
            if stop_after.is_some_and(|stop| s >= stop) {
                break;
            }
        } else {
            h = step * factor.min(1.0);
        }
    }
    OdeRun { solution: sol, failure: None }
}

fn initial_step<const N: usize>(y: &[f64; N], dy: &[f64; N], span: f64, cfg: &OdeConfig) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (dy[i] / sc).powi(2);
    }
    let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(cfg.max_step).min(span).max(1e-10 * span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn exponential_decay_is_accurate() {
        let run = dormand_prince(
            |_, y: &[f64; 1]| Ok::<_, Infallible>([-y[0]]),
            0.0,
            [1.0],
            3.0,
            &[],
            &OdeConfig { rel_tol: 1e-10, abs_tol: 1e-12, max_step: 1.0 },
            None,
        );
        assert!(run.failure.is_none());
        let last = run.solution.y.last().unwrap()[0];
        assert!((last - (-3f64).exp()).abs() < 1e-9);
        let mid = run.solution.interpolate(1.234).unwrap()[0];
        assert!((mid - (-1.234f64).exp()).abs() < 1e-5);
    }

    #[test]
    fn steps_land_on_breakpoints() {
        let run = dormand_prince(
            |s, _: &[f64; 1]| Ok::<_, Infallible>([(s - 0.7).abs()]),
            0.0,
            [0.0],
            2.0,
            &[0.7, 1.3],
            &OdeConfig::default(),
            None,
        );
        assert!(run.solution.s.contains(&0.7));
        assert!(run.solution.s.contains(&1.3));
        assert_eq!(*run.solution.s.last().unwrap(), 2.0);
        assert!((run.solution.y.last().unwrap()[0] - 1.09).abs() < 1e-12);
    }

    #[test]
    fn stopping_keeps_the_step_sequence() {
        let f = |s: f64, y: &[f64; 2]| Ok::<_, Infallible>([y[1], -y[0] * (1.0 + 0.3 * s.sin())]);
        let cfg = OdeConfig::default();
        let full = dormand_prince(f, 0.0, [1.0, 0.0], 10.0, &[4.0], &cfg, None);
        let cut = dormand_prince(f, 0.0, [1.0, 0.0], 10.0, &[4.0], &cfg, Some(5.5));
        let n = cut.solution.len();
        assert!(n < full.solution.len());
        assert_eq!(&full.solution.s[..n], &cut.solution.s[..]);
        assert_eq!(&full.solution.y[..n], &cut.solution.y[..]);
    }
}
