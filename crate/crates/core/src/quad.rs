//! Adaptive Simpson quadrature.

use std::cell::Cell;

const MAX_DEPTH: u32 = 48;
const MAX_EVALS: usize = 4_000_000;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Returns `None` when the integrand produces a non-finite value or the
/// evaluation budget runs out.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Option<f64> {
    if a == b {
        return Some(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    if !(fa.is_finite() && fb.is_finite() && fm.is_finite()) {
        return None;
    }
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let budget = Cell::new(MAX_EVALS);
    step(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH, &budget)
}

#[allow(clippy::too_many_arguments)]
fn step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &Cell<usize>,
) -> Option<f64> {
    if budget.get() < 2 {
        return None;
    }
    budget.set(budget.get() - 2);
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    if !(flm.is_finite() && frm.is_finite()) {
        return None;
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || delta.abs() <= 1e-15 * (left.abs() + right.abs()) {
        return Some(left + right + delta / 15.0);
    }
    Some(
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, budget)?
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, budget)?,
    )
}

/// Cubic Hermite interpolation on a uniform table with known slopes.
#[derive(Debug, Clone)]
pub struct Hermite {
    x0: f64,
    dx: f64,
    y: Vec<f64>,
    dy: Vec<f64>,
}

impl Hermite {
    pub fn new(x0: f64, dx: f64, y: Vec<f64>, dy: Vec<f64>) -> Self {
        assert_eq!(y.len(), dy.len());
        assert!(y.len() >= 2);
        Self { x0, dx, y, dy }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len() - 1;
        let s = ((x - self.x0) / self.dx).clamp(0.0, n as f64);
        let k = (s.floor() as usize).min(n - 1);
        let t = s - k as f64;
        let (y0, y1) = (self.y[k], self.y[k + 1]);
        let (m0, m1) = (self.dy[k] * self.dx, self.dy[k + 1] * self.dx);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }
}

/// Monotone piecewise-cubic interpolation on an increasing, non-uniform table.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneCubic {
    /// Builds the interpolant with the supplied nodal slopes, clipped by the
    /// Fritsch–Carlson condition so the result stays monotone.
    pub fn with_slopes(x: Vec<f64>, y: Vec<f64>, mut m: Vec<f64>) -> Self {
        let n = x.len();
        for k in 0..n - 1 {
            let delta = (y[k + 1] - y[k]) / (x[k + 1] - x[k]);
            if delta == 0.0 {
                m[k] = 0.0;
                m[k + 1] = 0.0;
                continue;
            }
            let a = m[k] / delta;
            let b = m[k + 1] / delta;
            let r = a * a + b * b;
            if r > 9.0 {
                let t = 3.0 / r.sqrt();
                m[k] = t * a * delta;
                m[k + 1] = t * b * delta;
            }
        }
        Self { x, y, m }
    }

    pub fn eval(&self, xv: f64) -> f64 {
        let n = self.x.len();
        let k = match self.x.partition_point(|&v| v <= xv) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let t = ((xv - self.x[k]) / h).clamp(0.0, 1.0);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.y[k]
            + (t3 - 2.0 * t2 + t) * h * self.m[k]
            + (-2.0 * t3 + 3.0 * t2) * self.y[k + 1]
            + (t3 - t2) * h * self.m[k + 1]
    }
}

/// Golden-section search for a minimizer of a unimodal function on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Bisection on a sign change; `fa` and `fb` must differ in sign.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
