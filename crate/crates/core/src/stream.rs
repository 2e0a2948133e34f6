//! Vorticity models and uniform (shear-flow) stream solutions.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{golden_min, simpson, Hermite, MonotoneCubic};

const QUAD_TOL: f64 = 1e-14;
const OMEGA_TABLE: usize = 256;
const STREAM_TABLE: usize = 2048;
/// Strict margin above `s₀` required of every admissible slope.
pub const SLOPE_MARGIN: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("vorticity derivative is not usable near p = {p}")]
    NonSmoothVorticity { p: f64 },
    #[error("invalid vorticity table: {0}")]
    InvalidTable(String),
    #[error("slope s = {s} does not exceed s0 = {s0}")]
    SubcriticalSlope { s: f64, s0: f64 },
    #[error("R = {r} does not exceed the critical value R_c = {r_c} (s_c = {s_c})")]
    NoWavesForR { r: f64, r_c: f64, s_c: f64 },
    #[error("quadrature failed")]
    Quadrature,
}

/// Built-in vorticity families plus tabulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VorticitySpec {
    /// ω(p) = value
    Constant { value: f64 },
    /// ω(p) = a + b·p
    Affine { a: f64, b: f64 },
    /// ω(p) = amplitude·sin(πp)
    Sine { amplitude: f64 },
    /// Natural cubic spline through the points (p, ω).
    Spline { p: Vec<f64>, omega: Vec<f64> },
}

impl Default for VorticitySpec {
    fn default() -> Self {
        VorticitySpec::Constant { value: 0.0 }
    }
}

#[derive(Debug, Clone)]
struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    fn natural(x: &[f64], y: &[f64]) -> Result<Self, StreamError> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(StreamError::InvalidTable("need at least 3 matching (p, omega) rows".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(StreamError::InvalidTable("p must be strictly increasing".into()));
        }
        if x[0] > 0.0 || x[n - 1] < 1.0 {
            return Err(StreamError::InvalidTable("p must cover [0, 1]".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(StreamError::InvalidTable("non-finite omega value".into()));
        }
        // Tridiagonal system for second derivatives, natural end conditions.
        let mut sub = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for k in 1..n - 1 {
            let h0 = x[k] - x[k - 1];
            let h1 = x[k + 1] - x[k];
            sub[k] = h0 / 6.0;
            diag[k] = (h0 + h1) / 3.0;
            sup[k] = h1 / 6.0;
            rhs[k] = (y[k + 1] - y[k]) / h1 - (y[k] - y[k - 1]) / h0;
        }
        for k in 1..n {
            let w = sub[k] / diag[k - 1];
            diag[k] -= w * sup[k - 1];
            rhs[k] -= w * rhs[k - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = rhs[n - 1] / diag[n - 1];
        for k in (0..n - 1).rev() {
            m[k] = (rhs[k] - sup[k] * m[k + 1]) / diag[k];
        }
        Ok(Self { x: x.to_vec(), y: y.to_vec(), m })
    }

    fn segment(&self, p: f64) -> (usize, f64, f64, f64) {
        let n = self.x.len();
        let k = self.x.partition_point(|&v| v <= p).clamp(1, n - 1) - 1;
        let h = self.x[k + 1] - self.x[k];
        let a = (self.x[k + 1] - p) / h;
        let b = (p - self.x[k]) / h;
        (k, h, a, b)
    }

    fn eval(&self, p: f64) -> f64 {
        let (k, h, a, b) = self.segment(p);
        a * self.y[k]
            + b * self.y[k + 1]
            + ((a * a * a - a) * self.m[k] + (b * b * b - b) * self.m[k + 1]) * h * h / 6.0
    }

    fn deriv(&self, p: f64) -> f64 {
        let (k, h, a, b) = self.segment(p);
        (self.y[k + 1] - self.y[k]) / h
            + ((1.0 - 3.0 * a * a) * self.m[k] + (3.0 * b * b - 1.0) * self.m[k + 1]) * h / 6.0
    }
}

/// ω(p), ω′(p) and the primitive Ω(p) = ∫₀ᵖ ω.
#[derive(Debug, Clone)]
pub struct VorticityModel {
    spec: VorticitySpec,
    spline: Option<CubicSpline>,
    nodes: Vec<f64>,
    max_primitive: f64,
}

/// Builds a [`VorticityModel`], tabulating Ω by adaptive quadrature.
pub fn primitive(spec: VorticitySpec) -> Result<VorticityModel, StreamError> {
    let spline = match &spec {
        VorticitySpec::Spline { p, omega } => Some(CubicSpline::natural(p, omega)?),
        _ => None,
    };
    let mut vm = VorticityModel { spec, spline, nodes: vec![0.0], max_primitive: 0.0 };
    vm.check_smooth()?;
    let dp = 1.0 / OMEGA_TABLE as f64;
    let mut acc = 0.0;
    for k in 0..OMEGA_TABLE {
        let a = k as f64 * dp;
        acc += simpson(&|p| vm.omega(p), a, a + dp, QUAD_TOL).ok_or(StreamError::Quadrature)?;
        vm.nodes.push(acc);
    }
    // max Ω over [0,1]: table maximum refined by the sign change of ω.
    let mut best = 0.0f64;
    for k in 0..=OMEGA_TABLE {
        best = best.max(vm.nodes[k]);
        if k < OMEGA_TABLE {
            let a = k as f64 * dp;
            if vm.omega(a) > 0.0 && vm.omega(a + dp) < 0.0 {
                let pk = crate::quad::bisect(|p| vm.omega(p), a, a + dp, 1e-15);
                best = best.max(vm.big_omega(pk));
            }
        }
    }
    vm.max_primitive = best;
    Ok(vm)
}

impl VorticityModel {
    pub fn spec(&self) -> &VorticitySpec {
        &self.spec
    }

    pub fn omega(&self, p: f64) -> f64 {
        match &self.spec {
            VorticitySpec::Constant { value } => *value,
            VorticitySpec::Affine { a, b } => a + b * p,
            VorticitySpec::Sine { amplitude } => amplitude * (std::f64::consts::PI * p).sin(),
            VorticitySpec::Spline { .. } => self.spline.as_ref().map_or(0.0, |s| s.eval(p)),
        }
    }

    pub fn omega_prime(&self, p: f64) -> f64 {
        match &self.spec {
            VorticitySpec::Constant { .. } => 0.0,
            VorticitySpec::Affine { b, .. } => *b,
            VorticitySpec::Sine { amplitude } => {
                amplitude * std::f64::consts::PI * (std::f64::consts::PI * p).cos()
            }
            VorticitySpec::Spline { .. } => self.spline.as_ref().map_or(0.0, |s| s.deriv(p)),
        }
    }

    /// Ω(p), accurate to quadrature tolerance.
    pub fn big_omega(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let dp = 1.0 / OMEGA_TABLE as f64;
        let k = ((p / dp).floor() as usize).min(OMEGA_TABLE - 1);
        let a = k as f64 * dp;
        self.nodes[k] + simpson(&|x| self.omega(x), a, p, QUAD_TOL).unwrap_or(f64::NAN)
    }

    pub fn is_irrotational(&self) -> bool {
        matches!(self.spec, VorticitySpec::Constant { value } if value == 0.0)
    }

    /// Lower bound for admissible slopes.
    pub fn s0(&self) -> f64 {
        let m = self.max_primitive.max(0.0);
        (2.0 * m).max((2.0 * m).sqrt())
    }

    fn check_smooth(&self) -> Result<(), StreamError> {
        let n = 2000;
        let scale = (0..=n)
            .map(|k| self.omega_prime(k as f64 / n as f64).abs())
            .fold(1.0f64, f64::max);
        for k in 0..=n {
            let p = k as f64 / n as f64;
            let (w, dw) = (self.omega(p), self.omega_prime(p));
            if !w.is_finite() || !dw.is_finite() {
                return Err(StreamError::NonSmoothVorticity { p });
            }
            let e = 1e-6;
            let (a, b) = ((p - e).max(0.0), (p + e).min(1.0));
            let fd = (self.omega(b) - self.omega(a)) / (b - a);
            if (fd - dw).abs() > 1e-3 * scale {
                return Err(StreamError::NonSmoothVorticity { p });
            }
        }
        Ok(())
    }
}

/// Uniform stream (U, d) together with its hodograph height H(p).
#[derive(Debug, Clone)]
pub struct UniformStream {
    pub s: f64,
    pub d: f64,
    pub r: f64,
    vm: Arc<VorticityModel>,
    h_table: Hermite,
    u_of_y: MonotoneCubic,
}

/// Solves the uniform-stream problem for bottom slope `s`.
pub fn solve_uniform_stream(vm: Arc<VorticityModel>, s: f64) -> Result<UniformStream, StreamError> {
    let s0 = vm.s0();
    if !(s >= s0 + SLOPE_MARGIN) {
        return Err(StreamError::SubcriticalSlope { s, s0 });
    }
    let hp = |p: f64| 1.0 / (s * s - 2.0 * vm.big_omega(p)).sqrt();
    let n = STREAM_TABLE;
    let dp = 1.0 / n as f64;
    let mut h = vec![0.0; n + 1];
    let mut slopes = vec![hp(0.0); n + 1];
    for k in 0..n {
        let a = k as f64 * dp;
        h[k + 1] = h[k] + simpson(&hp, a, a + dp, QUAD_TOL).ok_or(StreamError::Quadrature)?;
        slopes[k + 1] = hp(a + dp);
    }
    if h.windows(2).any(|w| w[1] <= w[0]) {
        return Err(StreamError::Quadrature);
    }
    let d = h[n];
    let r = 0.5 * s * s + d - vm.big_omega(1.0);
    let ps: Vec<f64> = (0..=n).map(|k| k as f64 * dp).collect();
    let inv: Vec<f64> = slopes.iter().map(|v| 1.0 / v).collect();
    let u_of_y = MonotoneCubic::with_slopes(h.clone(), ps, inv);
    Ok(UniformStream { s, d, r, vm, h_table: Hermite::new(0.0, dp, h, slopes), u_of_y })
}

impl UniformStream {
    pub fn vorticity(&self) -> &Arc<VorticityModel> {
        &self.vm
    }

    /// Height H(p) of the streamline ψ = p.
    pub fn h(&self, p: f64) -> f64 {
        self.h_table.eval(p)
    }

    pub fn hp(&self, p: f64) -> f64 {
        1.0 / (self.s * self.s - 2.0 * self.vm.big_omega(p)).sqrt()
    }

    /// Velocity profile U(y).
    pub fn u(&self, y: f64) -> f64 {
        self.u_of_y.eval(y)
    }

    pub fn u_prime(&self, y: f64) -> f64 {
        1.0 / self.hp(self.u(y))
    }

    /// κ = U′(d).
    pub fn kappa(&self) -> f64 {
        1.0 / self.hp(1.0)
    }

    /// Bernoulli surface value ½H_p(1)⁻² + H(1).
    pub fn surface_bernoulli(&self) -> f64 {
        let hp = self.hp(1.0);
        0.5 / (hp * hp) + self.d
    }
}

/// 𝓡(s) = ½s² + d(s) − Ω(1).
pub fn bernoulli_of_slope(vm: &VorticityModel, s: f64) -> Result<f64, StreamError> {
    // t = (1 − cos πv)/2 absorbs inverse square-root endpoint behaviour near s₀
    let f = |v: f64| {
        let t = 0.5 - 0.5 * (PI * v).cos();
        0.5 * PI * (PI * v).sin() / (s * s - 2.0 * vm.big_omega(t)).sqrt()
    };
    let d = simpson(&f, 0.0, 1.0, 1e-13).ok_or(StreamError::Quadrature)?;
    Ok(0.5 * s * s + d - vm.big_omega(1.0))
}

fn bernoulli_slope_derivative(vm: &VorticityModel, s: f64) -> f64 {
    let i = simpson(&|t| (s * s - 2.0 * vm.big_omega(t)).powf(-1.5), 0.0, 1.0, 1e-13).unwrap_or(f64::NAN);
    s * (1.0 - i)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalData {
    pub s_c: f64,
    pub r_c: f64,
    pub s_plus: Option<f64>,
    pub s_minus: Option<f64>,
}

/// Minimizes 𝓡 and solves 𝓡(s) = R on both sides of the minimizer.
pub fn critical_data(vm: &VorticityModel, r: f64) -> Result<CriticalData, StreamError> {
    let (s_c, r_c) = critical_point(vm)?;
    if r <= r_c {
        return Err(StreamError::NoWavesForR { r, r_c, s_c });
    }
    let lo = vm.s0() + SLOPE_MARGIN;
    let f = |s: f64| bernoulli_of_slope(vm, s).map(|v| v - r).unwrap_or(f64::NAN);
    let mut s_plus = None;
    let mut gap = s_c - lo;
    for _ in 0..60 {
        gap *= 0.5;
        let v = f(lo + gap);
        if v.is_nan() {
            break;
        }
        if v > 0.0 {
            s_plus = brent(&f, lo + gap, s_c);
            break;
        }
    }
    let mut hi = 2.0 * s_c.max(1.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e8 {
            break;
        }
    }
    let s_minus = brent(&f, s_c, hi);
    Ok(CriticalData { s_c, r_c, s_plus, s_minus })
}

fn critical_point(vm: &VorticityModel) -> Result<(f64, f64), StreamError> {
    let lo = vm.s0() + SLOPE_MARGIN;
    let mut hi = 2.0 * lo.max(1.0);
    while bernoulli_slope_derivative(vm, hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e8 {
            return Err(StreamError::Quadrature);
        }
    }
    let rr = |s: f64| bernoulli_of_slope(vm, s).unwrap_or(f64::INFINITY);
    let guess = golden_min(rr, lo, hi, 1e-7);
    let dr = |s: f64| bernoulli_slope_derivative(vm, s);
    let s_c = if dr(lo) >= 0.0 {
        lo
    } else {
        let w = 1e-4 * guess.max(1e-3);
        let (a, b) = ((guess - w).max(lo), (guess + w).min(hi));
        if dr(a) < 0.0 && dr(b) > 0.0 {
            brent(&dr, a, b).unwrap_or(guess)
        } else {
            brent(&dr, lo, hi).unwrap_or(guess)
        }
    };
    Ok((s_c, bernoulli_of_slope(vm, s_c)?))
}

fn brent<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Option<f64> {
    let mut conv = roots::SimpleConvergency { eps: 1e-14, max_iter: 200 };
    roots::find_root_brent(a, b, f, &mut conv).ok()
}

/// Froude diagnostic ∫₀ᵈ dy / U′(y)² = ∫₀¹ H_p³ dp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FroudeCheck {
    pub froude_sq_inv: f64,
    pub subcritical: bool,
}

pub fn froude_check(stream: &UniformStream) -> FroudeCheck {
    let v = simpson(&|p| stream.hp(p).powi(3), 0.0, 1.0, 1e-13).unwrap_or(f64::NAN);
    FroudeCheck { froude_sq_inv: v, subcritical: v > 1.0 }
}
