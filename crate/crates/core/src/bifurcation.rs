//! First Stokes bifurcation t₀, τ-root curves of μ̂₂, subharmonic points t_M,
//! branch switching and the small-τ classification at t₀.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continuation::{Branch, ContinuationError, Tracer};
use crate::hodograph::{triplets, HeightField, Hodograph, HodographError};
use crate::linalg::LinalgError;
use crate::mesh::unfold;
use crate::spectra::{
    assemble_forms, bloch_sweep, family_values, morse_counts, nodal_domains, solve_family, subharmonic_spectrum, zero_band, BlochCurves,
    Family, Layout, NodalDomains, SpectraError,
};
use crate::stream::UniformStream;

const T_TOL: f64 = 1e-10;
const ROOT_TOL: f64 = 1e-9;
const MAX_JUMP: f64 = 0.1;
const NEWTON_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BifurcationError {
    #[error("mu_1 does not change sign on the branch (last t = {t_last}, mu_1 = {mu1_last:.3e})")]
    NotReached { t_last: f64, mu1_last: f64 },
    #[error("kernel is not simple: gap {gap:.3e} to the next eigenvalue, band {band:.3e}")]
    KernelNotSimple { gap: f64, band: f64 },
    #[error("hypothesis violated: {what} (t = {t}, value {value:.3e})")]
    HypothesisViolated { what: String, t: f64, value: f64 },
    #[error("root threading failed at t = {t}; raw roots {raw:?}")]
    CurveBroken { t: f64, raw: Vec<f64> },
    #[error("1/{m} = {target:.4} lies outside the sampled root range [{lo:.4}, {hi:.4}]")]
    OutOfRange { m: usize, target: f64, lo: f64, hi: f64 },
    #[error("no root curve of mu_2 increasing through zero is available for M = {m}")]
    NoRootCurve { m: usize },
    #[error("kernel check failed for M = {m} at t = {t}: {detail}")]
    KernelCheckFailed { m: usize, t: f64, detail: String },
    #[error("no kernel in the {m}-periodic space: smallest |mu| = {smallest:.3e}, band {band:.3e}")]
    NoKernel { m: usize, smallest: f64, band: f64 },
    #[error("corrector returned to the Stokes wave (deviation {deviation:.3e})")]
    FellBackToStokes { m: usize, deviation: f64 },
    #[error("exponent fit is ambiguous: {e1:.3}, {e2:.3}")]
    FitAmbiguous { e1: f64, e2: f64 },
    #[error("{0}")]
    Root(String),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Continuation(#[from] ContinuationError),
    #[error(transparent)]
    Hodograph(#[from] HodographError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Re-solves the branch at arbitrary t from the nearest stored point below.
pub struct BranchSampler<'a> {
    pub branch: &'a Branch,
    pub tracer: Tracer,
}

impl<'a> BranchSampler<'a> {
    pub fn new(stream: &UniformStream, branch: &'a Branch) -> Result<Self, BifurcationError> {
        let first = branch.points.first().ok_or(ContinuationError::Empty)?;
        Ok(Self { branch, tracer: Tracer::new(stream.vorticity().clone(), &first.hf) })
    }

    pub fn at(&self, t: f64) -> Result<HeightField, BifurcationError> {
        let pts = &self.branch.points;
        let k = pts.iter().rposition(|p| p.arclength <= t).unwrap_or(0);
        if pts[k].arclength == t {
            let mut hf = pts[k].hf.clone();
            hf.t_label = t;
            return Ok(hf);
        }
        let mut p = self.tracer.point_at(&pts[k], t)?;
        p.hf.t_label = t;
        Ok(p.hf)
    }
}

/// Lowest half-period eigenvalues with their zero band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub mu: Vec<f64>,
    pub band: f64,
}

pub fn half_probe(hf: &HeightField) -> Result<Probe, BifurcationError> {
    let mu = family_values(&assemble_forms(hf, Layout::Half)?, Family::HalfEven, 5)?;
    let band = zero_band(&mu, hf.nq, hf.np);
    Ok(Probe { mu, band })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t0: f64,
    pub bracket: (f64, f64),
    /// Sign of dμ₁/dt at the crossing.
    pub mu1_slope: f64,
    pub probe: Probe,
    /// (t, μ₁) at the coarse samples.
    pub samples: Vec<(f64, f64)>,
}

/// First +/− sign change of μ₁ over the samples `ts`, refined by Brent's method.
pub fn locate_crossing<F>(ts: &[f64], mut probe: F) -> Result<Crossing, BifurcationError>
where
    F: FnMut(f64) -> Result<Probe, BifurcationError>,
{
    let mut samples = Vec::with_capacity(ts.len());
    let mut bracket = None;
    for (k, &t) in ts.iter().enumerate() {
        let p = probe(t)?;
        let mu1 = p.mu[1];
        if k == 0 && mu1 <= 0.0 {
            return Err(BifurcationError::HypothesisViolated { what: "mu_1 > 0 for small t".into(), t, value: mu1 });
        }
        samples.push((t, mu1));
        if k > 0 && samples[k - 1].1 > 0.0 && mu1 < 0.0 {
            bracket = Some((ts[k - 1], t));
            break;
        }
    }
    let (lo, hi) = match bracket {
        Some(b) => b,
        None => {
            let &(t_last, mu1_last) = samples.last().ok_or(BifurcationError::NotReached { t_last: 0.0, mu1_last: 0.0 })?;
            return Err(BifurcationError::NotReached { t_last, mu1_last });
        }
    };
    let mut failure = None;
    let mut conv = roots::SimpleConvergency { eps: T_TOL, max_iter: 100 };
    let found = roots::find_root_brent(
        lo,
        hi,
        |t| match probe(t) {
            Ok(p) => p.mu[1],
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        &mut conv,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let t0 = found.map_err(|e| BifurcationError::Root(format!("{e:?}")))?;
    let best = probe(t0)?;
    Ok(Crossing { t0, bracket: (lo, hi), mu1_slope: -1.0, probe: best, samples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesBifurcation {
    pub t0: f64,
    pub bracket: (f64, f64),
    pub mu1_slope: f64,
    pub kernel_dim: usize,
    pub mu: Vec<f64>,
    pub band: f64,
    pub nodal: NodalDomains,
    /// μ₁ > 0 before and μ₁ < 0 after t₀ on the coarse samples.
    pub pattern_ok: bool,
    pub samples: Vec<(f64, f64)>,
    pub hf: HeightField,
}

pub fn detect_t0(stream: &UniformStream, branch: &Branch) -> Result<StokesBifurcation, BifurcationError> {
    let sampler = BranchSampler::new(stream, branch)?;
    let ts: Vec<f64> = branch.points.iter().skip(1).map(|p| p.arclength).collect();
    let c = locate_crossing(&ts, |t| half_probe(&sampler.at(t)?))?;
    let hf = sampler.at(c.t0)?;
    let mu = &c.probe.mu;
    let band = c.probe.band;
    if mu[0] >= 0.0 {
        return Err(BifurcationError::HypothesisViolated { what: "mu_0 < 0 at t0".into(), t: c.t0, value: mu[0] });
    }
    let gap = mu[2] - mu[1];
    if gap <= 10.0 * band {
        return Err(BifurcationError::KernelNotSimple { gap, band });
    }
    let ft = assemble_forms(&hf, Layout::Half)?;
    let modes = solve_family(&ft, Family::HalfEven, 2)?;
    let nodal = nodal_domains(modes.real_mode(1).expect("real family"), hf.nq, hf.np)?;
    let pattern_ok = c.samples.iter().all(|&(t, m)| if t < c.t0 { m > 0.0 } else { m < 0.0 });
    Ok(StokesBifurcation {
        t0: c.t0,
        bracket: c.bracket,
        mu1_slope: c.mu1_slope,
        kernel_dim: mu.iter().filter(|v| v.abs() < band).count(),
        mu: mu.clone(),
        band,
        nodal,
        pattern_ok,
        samples: c.samples,
        hf,
    })
}

/// Roots of f ↦ μ̂₂(t, f) on (0, 1/2] at one t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSample {
    pub t: f64,
    /// Roots as quasi-momentum fractions f = τ/τ_*(t).
    pub fractions: Vec<f64>,
    /// Physical quasi-momenta.
    pub taus: Vec<f64>,
    /// +1 where μ̂₂ goes from negative to positive with increasing τ, −1 otherwise.
    pub directions: Vec<i32>,
    /// 1 for a sign-changing root, 2 where the ±δ probe shows no sign change.
    pub orders: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRootCurve {
    pub j: usize,
    /// (t, f̂_j(t), τ̂_j(t))
    pub samples: Vec<(f64, f64, f64)>,
    pub slope_sign: i32,
    pub direction: i32,
    pub crossing_order: u32,
}

fn mu2_at(full: &crate::spectra::FormTriple, f: f64) -> Result<f64, BifurcationError> {
    Ok(family_values(full, Family::Bloch(f), 3)?[2])
}

fn brent<F: Fn(f64) -> f64>(a: f64, b: f64, f: F, tol: f64) -> Result<f64, BifurcationError> {
    let mut conv = roots::SimpleConvergency { eps: tol, max_iter: 200 };
    roots::find_root_brent(a, b, &f, &mut conv).map_err(|e| BifurcationError::Root(format!("{e:?}")))
}

/// μ̂₂ roots on `n` uniform fractions in (0, 1/2] at one branch point.
pub fn roots_at(hf: &HeightField, n: usize) -> Result<RootSample, BifurcationError> {
    let fr: Vec<f64> = (1..=n).map(|k| 0.5 * k as f64 / n as f64).collect();
    roots_from_sweep(hf, &bloch_sweep(hf, &fr, 3)?)
}

/// μ̂₂ roots bracketed on an existing sweep (at least three curves) and refined by Brent.
pub fn roots_from_sweep(hf: &HeightField, sweep: &BlochCurves) -> Result<RootSample, BifurcationError> {
    let full = assemble_forms(hf, Layout::Full)?;
    let fr = &sweep.fractions;
    let vals = sweep.curves.get(2).ok_or(SpectraError::Shape { got: sweep.curves.len(), expected: 3 })?;
    let g = |f: f64| mu2_at(&full, f).unwrap_or(f64::NAN);
    let mut out = RootSample { t: hf.t_label, fractions: vec![], taus: vec![], directions: vec![], orders: vec![] };
    let scale = 2.0 * std::f64::consts::PI * hf.lambda / hf.period;
    for k in 0..fr.len().saturating_sub(1) {
        if vals[k] == 0.0 || vals[k].signum() != vals[k + 1].signum() {
            let r = if vals[k] == 0.0 { fr[k] } else { brent(fr[k], fr[k + 1], g, ROOT_TOL)? };
            let d = 1e-4;
            let (left, right) = (g((r - d).max(1e-6)), g((r + d).min(0.5)));
            out.fractions.push(r);
            out.taus.push(r * scale);
            out.directions.push(if left < 0.0 { 1 } else { -1 });
            out.orders.push(if left.signum() != right.signum() { 1 } else { 2 });
        }
    }
    Ok(out)
}

/// Threads per-t roots into curves by nearest-neighbour matching.
pub fn thread_roots(samples: &[RootSample]) -> Result<Vec<TauRootCurve>, BifurcationError> {
    let mut curves: Vec<TauRootCurve> = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    for s in samples {
        let mut taken = vec![false; open.len()];
        let mut next_open = Vec::new();
        for (r, &f) in s.fractions.iter().enumerate() {
            let best = open
                .iter()
                .enumerate()
                .map(|(slot, &c)| (slot, (curves[c].samples.last().expect("nonempty").1 - f).abs()))
                .filter(|&(_, d)| d < MAX_JUMP)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let entry = (s.t, f, s.taus[r]);
            match best {
                Some((slot, _)) if taken[slot] => {
                    return Err(BifurcationError::CurveBroken { t: s.t, raw: s.fractions.clone() });
                }
                Some((slot, _)) => {
                    taken[slot] = true;
                    let c = open[slot];
                    curves[c].samples.push(entry);
                    curves[c].crossing_order = curves[c].crossing_order.max(s.orders[r]);
                    next_open.push(c);
                }
                None => {
                    curves.push(TauRootCurve {
                        j: 0,
                        samples: vec![entry],
                        slope_sign: 0,
                        direction: s.directions[r],
                        crossing_order: s.orders[r],
                    });
                    next_open.push(curves.len() - 1);
                }
            }
        }
        open = next_open;
    }
    curves.sort_by(|a, b| a.samples[0].1.total_cmp(&b.samples[0].1));
    for (j, c) in curves.iter_mut().enumerate() {
        c.j = j + 1;
        let d: f64 = c.samples.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).sum();
        c.slope_sign = if c.samples.len() < 2 || d == 0.0 { 0 } else { d.signum() as i32 };
    }
    Ok(curves)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRoots {
    pub samples: Vec<RootSample>,
    pub curves: Vec<TauRootCurve>,
}

pub fn tau_roots(sampler: &BranchSampler, ts: &[f64], n: usize) -> Result<TauRoots, BifurcationError> {
    let samples: Vec<RootSample> = ts.iter().map(|&t| roots_at(&sampler.at(t)?, n)).collect::<Result<_, _>>()?;
    let curves = thread_roots(&samples)?;
    Ok(TauRoots { samples, curves })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubharmonicPoint {
    pub m: usize,
    pub t_m: f64,
    pub n_star: usize,
    pub morse_before: usize,
    pub morse_after: usize,
    pub crossing_number: i64,
    /// Eigenvalue of the M-period problem nearest zero at t_M and at t_M ± δ.
    pub kernel_value: f64,
    pub off_values: (f64, f64),
    pub band: f64,
    pub delta: f64,
}

fn smallest_abs(v: &[f64]) -> f64 {
    v.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()))
}

pub fn solve_tm(
    sampler: &BranchSampler,
    curves: &[TauRootCurve],
    m: usize,
    delta: f64,
) -> Result<SubharmonicPoint, BifurcationError> {
    let target = 1.0 / m as f64;
    let curve = curves
        .iter()
        .filter(|c| c.direction > 0)
        .max_by_key(|c| c.j)
        .ok_or(BifurcationError::NoRootCurve { m })?;
    let lo = curve.samples.iter().fold(f64::INFINITY, |a, s| a.min(s.1));
    let hi = curve.samples.iter().fold(f64::NEG_INFINITY, |a, s| a.max(s.1));
    let seg = curve
        .samples
        .windows(2)
        .find(|w| (w[0].1 - target) * (w[1].1 - target) <= 0.0)
        .ok_or(BifurcationError::OutOfRange { m, target, lo, hi })?;
    let g = |t: f64| -> f64 {
        sampler
            .at(t)
            .ok()
            .and_then(|hf| assemble_forms(&hf, Layout::Full).ok())
            .and_then(|ft| mu2_at(&ft, target).ok())
            .unwrap_or(f64::NAN)
    };
    let t_m = brent(seg[0].0, seg[1].0, g, T_TOL)?;
    let hf = sampler.at(t_m)?;
    let band = half_probe(&hf)?.band;
    let spec = |t: f64| -> Result<Vec<f64>, BifurcationError> {
        Ok(subharmonic_spectrum(&sampler.at(t)?, m, 3 * m + 3)?.eigenvalues)
    };
    let kernel_value = smallest_abs(&spec(t_m)?);
    let off = (smallest_abs(&spec(t_m - delta)?), smallest_abs(&spec(t_m + delta)?));
    if kernel_value >= band {
        return Err(BifurcationError::KernelCheckFailed { m, t: t_m, detail: format!("no eigenvalue in band ({kernel_value:.3e})") });
    }
    if off.0 < band || off.1 < band {
        return Err(BifurcationError::KernelCheckFailed { m, t: t_m, detail: format!("kernel persists at t_M ± delta {off:?}") });
    }
    let before = morse_counts(&sampler.at(t_m - delta)?, m)?.n0;
    let after = morse_counts(&sampler.at(t_m + delta)?, m)?.n0;
    Ok(SubharmonicPoint {
        m,
        t_m,
        n_star: curve.j,
        morse_before: before,
        morse_after: after,
        crossing_number: after as i64 - before as i64,
        kernel_value,
        off_values: off,
        band,
        delta,
    })
}

/// An M-periodic solution obtained by leaving the Stokes wave along the kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Switched {
    /// Solution on the half M-period strip.
    pub hf: HeightField,
    pub eps: f64,
    pub residual: f64,
    /// max |Ξ(q + Λ₀) − Ξ(q)| over the surface.
    pub deviation: f64,
    /// Surface heights at the M base-period crests q = kΛ₀, k = 0..M−1.
    pub crests: Vec<f64>,
    pub newton_history: Vec<f64>,
}

fn stretched(base: &HeightField, m: usize) -> HeightField {
    HeightField {
        nq: m * base.nq,
        np: base.np,
        period: m as f64 * base.period,
        lambda: base.lambda,
        r: base.r,
        t_label: base.t_label,
        h: unfold(&base.h, base.nq, base.np, m * base.nq, 0),
    }
}

fn translate_deviation(hf: &HeightField, m: usize) -> (f64, Vec<f64>) {
    let nc = hf.nq;
    let np = hf.np;
    let shift = 2 * nc / m;
    let full = unfold(&hf.h, nc, np, 2 * nc, 0);
    let top = |i: usize| full[i * (np + 1) + np];
    let dev = (0..=2 * nc - shift).fold(0.0f64, |a, i| a.max((top(i + shift) - top(i)).abs()));
    (dev, (0..m).map(|k| top(k * shift)).collect())
}

/// Solves on the M-period strip with ⟨k, h − h_S⟩ = ε and λ free, trying ±ε, ±2ε.
pub fn branch_switch(stream: &UniformStream, base: &HeightField, m: usize, eps: f64) -> Result<Switched, BifurcationError> {
    let spec = subharmonic_spectrum(base, m, 3 * m + 3)?;
    let band = half_probe(base)?.band;
    let (idx, smallest) = spec
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, v)| (k, v.abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty spectrum");
    if smallest > band {
        return Err(BifurcationError::NoKernel { m, smallest, band });
    }
    let stokes = stretched(base, m);
    let ctx = Hodograph::new(stream.vorticity().clone(), base.np);
    let kernel = spec.real_mode(idx).expect("real family").to_vec();
    let ft = assemble_forms(&stokes, Layout::Half)?;
    let mk = crate::hodograph::spmv(&ft.m, &pick(&stokes, &kernel));
    if eps == 0.0 {
        let r = ctx.residual(&stokes)?;
        let (deviation, crests) = translate_deviation(&stokes, m);
        return Ok(Switched { residual: r.f_max().max(r.g_max()), hf: stokes, eps, deviation, crests, newton_history: vec![] });
    }
    let amplitude = {
        let s = stokes.surface();
        0.5 * (s.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - s.iter().cloned().fold(f64::INFINITY, f64::min))
    };
    let mut last = 0.0;
    for e in [eps, -eps, 2.0 * eps, -2.0 * eps] {
        let Ok(sol) = switch_newton(&ctx, &stokes, &kernel, &mk, e) else { continue };
        let (deviation, crests) = translate_deviation(&sol.0, m);
        last = deviation;
        if deviation > 1e-3 * amplitude.max(e.abs()) {
            return Ok(Switched { hf: sol.0, eps: e, residual: sol.1, deviation, crests, newton_history: sol.2 });
        }
    }
    Err(BifurcationError::FellBackToStokes { m, deviation: last })
}

fn pick(hf: &HeightField, v: &[f64]) -> Vec<f64> {
    let np = hf.np;
    (0..=hf.nq).flat_map(|i| (1..=np).map(move |j| v[i * (np + 1) + j])).collect()
}

fn switch_newton(
    ctx: &Hodograph,
    stokes: &HeightField,
    kernel: &[f64],
    mk: &[f64],
    eps: f64,
) -> Result<(HeightField, f64, Vec<f64>), BifurcationError> {
    let mut hf = stokes.clone();
    for (h, k) in hf.h.iter_mut().zip(kernel) {
        *h += eps * k;
    }
    let base = stokes.unknowns();
    let mut history = Vec::new();
    for _ in 0..30 {
        let r = ctx.residual(&hf)?;
        let res = r.f_max().max(r.g_max());
        history.push(res);
        if res < NEWTON_TOL {
            return Ok((hf, res, history));
        }
        if !res.is_finite() || res > 1e3 * history[0].max(1e-6) {
            break;
        }
        let nl = ctx.nonlinear(&hf, true)?;
        let n = nl.grad.len();
        let jac = nl.hessian.expect("hessian requested");
        let mut trips: Vec<Triplet<usize, usize, f64>> =
            triplets(&jac).into_iter().map(|(c, r, v)| Triplet::new(r, c, v)).collect();
        for (k, &g) in nl.grad_lam.iter().enumerate() {
            trips.push(Triplet::new(k, n, g));
        }
        for (k, &w) in mk.iter().enumerate() {
            trips.push(Triplet::new(n, k, w));
        }
        let a = SparseColMat::try_new_from_triplets(n + 1, n + 1, &trips).map_err(|_| LinalgError::Factorization)?;
        let x = hf.unknowns();
        let proj: f64 = mk.iter().zip(x.iter().zip(&base)).map(|(w, (a, b))| w * (a - b)).sum();
        let mut rhs = Mat::<f64>::zeros(n + 1, 1);
        for k in 0..n {
            rhs[(k, 0)] = -nl.grad[k];
        }
        rhs[(n, 0)] = eps - proj;
        let lu = a.sp_lu().map_err(|_| LinalgError::Factorization)?;
        let dx = lu.solve(&rhs);
        let next: Vec<f64> = (0..n).map(|k| x[k] + dx[(k, 0)]).collect();
        hf.set_unknowns(&next);
        hf.lambda += dx[(n, 0)];
    }
    Err(BifurcationError::Hodograph(HodographError::NewtonDiverged {
        iterations: history.len(),
        residual: *history.last().unwrap_or(&f64::NAN),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AsymptoticOption {
    /// μ̂₁ ≈ −κτ^{2n−1}, μ̂₂ ≈ +κτ^{2n−1}
    I { n: u32 },
    /// μ̂₁ ≈ Aτ^{2n} (A < 0), μ̂₂ ≈ Bτ^{2m} (B > 0)
    II { n: u32, m: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub option: AsymptoticOption,
    pub exponents: (f64, f64),
    pub coefficients: (f64, f64),
    /// Max relative deviation of the power-law fits from the data.
    pub residual: f64,
}

fn power_fit(tau: &[f64], mu: &[f64]) -> (f64, f64, f64) {
    let xs: Vec<f64> = tau.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = mu.iter().map(|m| m.abs().ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let e = sxy / sxx;
    let c = (my - e * mx).exp();
    let res = tau.iter().zip(mu).fold(0.0f64, |a, (t, m)| a.max((c * t.powf(e) - m.abs()).abs() / m.abs()));
    (e, c, res)
}

/// Power-law classification of μ̂₁, μ̂₂ at small τ.
pub fn asymptotic_classify(tau: &[f64], mu1: &[f64], mu2: &[f64]) -> Result<Classification, BifurcationError> {
    let (e1, c1, r1) = power_fit(tau, mu1);
    let (e2, c2, r2) = power_fit(tau, mu2);
    let s1 = mu1.iter().sum::<f64>().signum();
    let s2 = mu2.iter().sum::<f64>().signum();
    let (n1, n2) = (e1.round(), e2.round());
    if (e1 - n1).abs() > 0.2 || (e2 - n2).abs() > 0.2 || n1 < 1.0 || n2 < 1.0 {
        return Err(BifurcationError::FitAmbiguous { e1, e2 });
    }
    let (k1, k2) = (n1 as u32, n2 as u32);
    let option = if k1 == k2 && k1 % 2 == 1 && s1 != s2 {
        AsymptoticOption::I { n: (k1 + 1) / 2 }
    } else if k1 != k2 && k1 % 2 == 0 && k2 % 2 == 0 && s1 < 0.0 && s2 > 0.0 {
        AsymptoticOption::II { n: k1 / 2, m: k2 / 2 }
    } else {
        return Err(BifurcationError::FitAmbiguous { e1, e2 });
    };
    Ok(Classification { option, exponents: (e1, e2), coefficients: (s1 * c1, s2 * c2), residual: r1.max(r2) })
}
