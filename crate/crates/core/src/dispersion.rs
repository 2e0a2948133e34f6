//! Transversal boundary-value problem and the dispersion function σ(τ).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stream::UniformStream;

/// Default number of finite-difference intervals (doubled once for Richardson).
pub const GAMMA_NODES: usize = 400;
/// Streams with σ(0) above this are treated as numerically critical.
pub const CRITICAL_MARGIN: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispersionError {
    #[error("transversal problem is numerically singular at tau = {tau}")]
    SingularBvp { tau: f64 },
    #[error("stream is not subcritical: sigma(0) = {sigma0}")]
    SupercriticalStream { sigma0: f64 },
    #[error("root search for tau* did not converge")]
    NoConvergence,
}

/// Solution of γ″ + ω′(U)γ − τ²γ = 0, γ(0) = 0, γ(d) = 1.
#[derive(Debug, Clone)]
pub struct Gamma {
    pub tau: f64,
    pub y: Vec<f64>,
    pub values: Vec<f64>,
    /// γ′(d, τ), Richardson-extrapolated.
    pub gamma_prime_at_d: f64,
}

impl Gamma {
    /// Linear interpolation of the fine-grid solution.
    pub fn eval(&self, y: f64) -> f64 {
        let n = self.y.len() - 1;
        let h = self.y[1] - self.y[0];
        let s = (y / h).clamp(0.0, n as f64);
        let k = (s.floor() as usize).min(n - 1);
        let t = s - k as f64;
        (1.0 - t) * self.values[k] + t * self.values[k + 1]
    }
}

fn fd_gamma(stream: &UniformStream, tau: f64, n: usize) -> Result<(Vec<f64>, f64), DispersionError> {
    let vm = stream.vorticity();
    let h = stream.d / n as f64;
    let t2 = tau * tau;
    // Thomas sweep on interior nodes 1..n-1; row k: g[k-1] + (-2 + h²c_k) g[k] + g[k+1] = 0
    let m = n - 1;
    let mut diag = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for (k, dk) in diag.iter_mut().enumerate() {
        let y = (k + 1) as f64 * h;
        *dk = -2.0 + h * h * (vm.omega_prime(stream.u(y)) - t2);
    }
    rhs[m - 1] = -1.0;
    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    let mut piv = diag[0];
    for k in 0..m {
        if k > 0 {
            piv = diag[k] - cp[k - 1];
        }
        if piv.abs() < 1e-12 {
            return Err(DispersionError::SingularBvp { tau });
        }
        cp[k] = 1.0 / piv;
        dp[k] = (rhs[k] - if k > 0 { dp[k - 1] } else { 0.0 }) / piv;
    }
    let mut g = vec![0.0; n + 1];
    g[n] = 1.0;
    g[m] = dp[m - 1];
    for k in (0..m - 1).rev() {
        g[k + 1] = dp[k] - cp[k] * g[k + 2];
    }
    let c_d = t2 - vm.omega_prime(1.0);
    let slope = (1.0 - g[n - 1]) / h + 0.5 * h * c_d;
    Ok((g, slope))
}

/// Solves the transversal problem with `n ≥ 200` intervals and one Richardson step.
pub fn solve_gamma_with(stream: &UniformStream, tau: f64, n: usize) -> Result<Gamma, DispersionError> {
    let n = n.max(200);
    let (_, coarse) = fd_gamma(stream, tau, n)?;
    let (values, fine) = fd_gamma(stream, tau, 2 * n)?;
    let h = stream.d / (2 * n) as f64;
    let y = (0..=2 * n).map(|k| k as f64 * h).collect();
    Ok(Gamma { tau, y, values, gamma_prime_at_d: (4.0 * fine - coarse) / 3.0 })
}

pub fn solve_gamma(stream: &UniformStream, tau: f64) -> Result<Gamma, DispersionError> {
    solve_gamma_with(stream, tau, GAMMA_NODES)
}

/// Dispersion data of a uniform stream.
#[derive(Debug, Clone)]
pub struct DispersionCurve {
    pub stream: UniformStream,
    pub kappa: f64,
    pub rho0: f64,
    pub sigma0: f64,
    pub tau_star: f64,
}

impl DispersionCurve {
    pub fn lambda0(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.tau_star
    }
}

/// Both forms of σ(τ), returned as (κγ′ − κ⁻¹ + ω(1), κγ′ − κρ₀).
pub fn sigma_forms(stream: &UniformStream, tau: f64) -> Result<(f64, f64), DispersionError> {
    let g = solve_gamma(stream, tau)?;
    let kappa = stream.kappa();
    let w1 = stream.vorticity().omega(1.0);
    let direct = kappa * g.gamma_prime_at_d - 1.0 / kappa + w1;
    let psi2 = -stream.vorticity().omega(stream.u(stream.d));
    let rho0 = (1.0 + kappa * psi2) / (kappa * kappa);
    Ok((direct, kappa * g.gamma_prime_at_d - kappa * rho0))
}

pub fn sigma(stream: &UniformStream, tau: f64) -> Result<f64, DispersionError> {
    sigma_forms(stream, tau).map(|v| v.0)
}

/// ρ₀ = κ⁻² − ω(1)/κ.
pub fn rho0(stream: &UniformStream) -> f64 {
    let k = stream.kappa();
    1.0 / (k * k) - stream.vorticity().omega(1.0) / k
}

/// Unique positive root τ* of σ, by bisection followed by Newton.
pub fn find_tau_star(stream: &UniformStream) -> Result<DispersionCurve, DispersionError> {
    let sigma0 = sigma(stream, 0.0)?;
    if sigma0 >= -CRITICAL_MARGIN {
        return Err(DispersionError::SupercriticalStream { sigma0 });
    }
    let f = |t: f64| sigma(stream, t);
    let mut hi = 1.0;
    while f(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(DispersionError::NoConvergence);
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-6 * hi {
        let m = 0.5 * (lo + hi);
        if f(m)? < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    let mut t = 0.5 * (lo + hi);
    let mut val = f(t)?;
    for _ in 0..30 {
        if val.abs() < 1e-12 {
            break;
        }
        let e = 1e-5 * t;
        let slope = (f(t + e)? - f(t - e)?) / (2.0 * e);
        let next = t - val / slope;
        t = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        val = f(t)?;
        if val < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
    }
    if val.abs() >= 1e-10 {
        return Err(DispersionError::NoConvergence);
    }
    Ok(DispersionCurve { stream: stream.clone(), kappa: stream.kappa(), rho0: rho0(stream), sigma0, tau_star: t })
}

/// σ sampled on a τ grid, for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaTable {
    pub tau: Vec<f64>,
    pub sigma: Vec<f64>,
}

pub fn sigma_table(stream: &UniformStream, tau: &[f64]) -> Result<SigmaTable, DispersionError> {
    let sigma = tau.iter().map(|&t| sigma(stream, t)).collect::<Result<Vec<_>, _>>()?;
    Ok(SigmaTable { tau: tau.to_vec(), sigma })
}
