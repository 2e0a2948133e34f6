//! Pseudo-arclength continuation of the Stokes branch from the uniform stream.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispersion::solve_gamma;
use crate::hodograph::{
    column_forms, column_hp, discrete_uniform, flat_field, grid_tau_star, q1_symbol, triplets, HeightField,
    Hodograph, HodographError,
};
use crate::linalg::{gen_eigh, LinalgError};
use crate::spectra::zero_band;
use crate::stream::{UniformStream, VorticityModel};

/// Monitor threshold for the period lower bound, as a fraction of Λ₀.
pub const PERIOD_BOUND_FRACTION: f64 = 0.5;

const MAX_NEWTON: usize = 30;
const NEWTON_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ContinuationError {
    #[error("no flat kernel at tau = {tau}: smallest |mu| = {smallest:.3e} exceeds band {band:.3e}")]
    KernelNotFound { tau: f64, smallest: f64, band: f64 },
    #[error("corrector failed at t = {t} after {attempts} attempts (residual {residual:.3e})")]
    StepFailure { t: f64, attempts: usize, residual: f64 },
    #[error("branch is empty")]
    Empty,
    #[error(transparent)]
    Hodograph(#[from] HodographError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Dispersion(#[from] crate::dispersion::DispersionError),
    #[error("branch i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("branch format: {0}")]
    Format(#[from] serde_json::Error),
}

/// Kernel of the flat Frechet pair in the separable mode cos(τq)·f(p).
#[derive(Debug, Clone)]
pub struct FlatMode {
    pub tau: f64,
    pub eigenvalue: f64,
    pub band: f64,
    /// f(p) at p-nodes 0..=np with f(1) = 1.
    pub column: Vec<f64>,
    /// Nodal field on the half strip.
    pub field: Vec<f64>,
    /// |correlation| of the column with −γ(H(p); τ)·H_p(p).
    pub correlation: f64,
}

/// Computes the flat kernel mode at q-wavenumber `tau` on the grid of `flat`.
pub fn initial_tangent(stream: &UniformStream, flat: &HeightField, tau: f64) -> Result<FlatMode, ContinuationError> {
    let np = flat.np;
    let col: Vec<f64> = (0..=np).map(|j| flat.at(0, j)).collect();
    let (pa, pb, mp) = column_forms(&col);
    let k2 = q1_symbol(tau, flat.strip().dq);
    let op = Mat::<f64>::from_fn(np, np, |r, c| k2 * pa[(r, c)] + pb[(r, c)]);
    let eig = gen_eigh(&op, &mp, true)?;
    let band = zero_band(&eig.values, flat.nq, np);
    let (idx, &mu) = eig
        .values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .ok_or(ContinuationError::Empty)?;
    if mu.abs() > band {
        return Err(ContinuationError::KernelNotFound { tau, smallest: mu.abs(), band });
    }
    let v = eig.vectors.as_ref().expect("vectors requested");
    let top = v[(np - 1, idx)];
    let mut column = vec![0.0; np + 1];
    for j in 1..=np {
        column[j] = v[(j - 1, idx)] / top;
    }
    let dq = flat.strip().dq;
    let mut field = vec![0.0; flat.h.len()];
    for i in 0..=flat.nq {
        let c = (tau * i as f64 * dq).cos();
        for j in 0..=np {
            field[i * (np + 1) + j] = c * column[j];
        }
    }
    let gamma = solve_gamma(stream, tau)?;
    let dp = 1.0 / np as f64;
    let image: Vec<f64> = (0..=np)
        .map(|j| {
            let hp = column_hp(&col, j, dp);
            -gamma.eval(col[j]) * hp
        })
        .collect();
    let ip = |a: &[f64], b: &[f64]| {
        let mut s = 0.0;
        for r in 0..np {
            for c in 0..np {
                s += a[r + 1] * mp[(r, c)] * b[c + 1];
            }
        }
        s
    };
    let correlation = ip(&column, &image).abs() / (ip(&column, &column) * ip(&image, &image)).sqrt();
    Ok(FlatMode { tau, eigenvalue: mu, band, column, field, correlation })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub nq: usize,
    pub np: usize,
    pub steps: usize,
    /// Arclength step in the weighted norm.
    pub step: f64,
    pub max_halvings: usize,
    /// Stop once R − Ξ(0) falls below this gap.
    pub min_crest_gap: f64,
}

impl ContinuationOptions {
    pub fn new(nq: usize, np: usize, steps: usize, step: f64) -> Self {
        Self { nq, np, steps, step, max_halvings: 6, min_crest_gap: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub hf: HeightField,
    /// Unit tangent (unknowns then λ) in the weighted norm.
    pub tangent: Vec<f64>,
    pub amplitude: f64,
    pub arclength: f64,
    pub newton_residual: f64,
    pub newton_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Completed,
    CrestGap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub slope: f64,
    pub depth: f64,
    #[serde(rename = "R")]
    pub r: f64,
    /// Continuum dispersion root.
    pub tau_star: f64,
    /// Root of the discrete flat operator; Λ₀ = 2π/τ_grid.
    pub tau_grid: f64,
    pub period: f64,
    pub stop: StopReason,
}

/// Newton corrector and tangent updates for a fixed grid and Bernoulli constant.
#[derive(Debug, Clone)]
pub struct Tracer {
    pub ctx: Hodograph,
    pub nq: usize,
    pub np: usize,
    pub period: f64,
    pub r: f64,
    weight: f64,
}

impl Tracer {
    pub fn new(vm: Arc<VorticityModel>, template: &HeightField) -> Self {
        let s = template.strip();
        Self {
            ctx: Hodograph::new(vm, template.np),
            nq: template.nq,
            np: template.np,
            period: template.period,
            r: template.r,
            weight: s.dq * s.dp / (0.5 * template.period),
        }
    }

    pub fn dim(&self) -> usize {
        (self.nq + 1) * self.np + 1
    }

    fn w(&self, k: usize) -> f64 {
        if k + 1 == self.dim() {
            1.0
        } else {
            self.weight
        }
    }

    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).enumerate().map(|(k, (x, y))| self.w(k) * x * y).sum()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.dot(a, a).sqrt()
    }

    pub fn state(&self, hf: &HeightField) -> Vec<f64> {
        let mut x = hf.unknowns();
        x.push(hf.lambda);
        x
    }

    pub fn field(&self, x: &[f64], t_label: f64) -> HeightField {
        let mut hf = HeightField {
            nq: self.nq,
            np: self.np,
            period: self.period,
            lambda: x[x.len() - 1],
            r: self.r,
            t_label,
            h: vec![0.0; (self.nq + 1) * (self.np + 1)],
        };
        hf.set_unknowns(&x[..x.len() - 1]);
        hf
    }

    fn bordered(&self, hf: &HeightField, tan: &[f64]) -> Result<(SparseColMat<usize, f64>, Vec<f64>), ContinuationError> {
        let nl = self.ctx.nonlinear(hf, true)?;
        let n = nl.grad.len();
        let jac = nl.hessian.expect("hessian requested");
        let mut trips: Vec<Triplet<usize, usize, f64>> =
            triplets(&jac).into_iter().map(|(c, r, v)| Triplet::new(r, c, v)).collect();
        for (k, &g) in nl.grad_lam.iter().enumerate() {
            trips.push(Triplet::new(k, n, g));
        }
        for (k, &t) in tan.iter().enumerate() {
            trips.push(Triplet::new(n, k, self.w(k) * t));
        }
        let a = SparseColMat::try_new_from_triplets(n + 1, n + 1, &trips).map_err(|_| LinalgError::Factorization)?;
        Ok((a, nl.grad))
    }

    fn solve(a: &SparseColMat<usize, f64>, rhs: &[f64]) -> Result<Vec<f64>, ContinuationError> {
        let lu = a.sp_lu().map_err(|_| LinalgError::Factorization)?;
        let x = lu.solve(&Mat::<f64>::from_fn(rhs.len(), 1, |r, _| rhs[r]));
        let out: Vec<f64> = (0..rhs.len()).map(|r| x[(r, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::Factorization.into());
        }
        Ok(out)
    }

    fn nodal_residual(&self, hf: &HeightField) -> Result<f64, ContinuationError> {
        let r = self.ctx.residual(hf)?;
        Ok(r.f_max().max(r.g_max()))
    }

    /// Predictor–corrector step of arclength `ds` from `base`.
    pub fn correct(&self, base: &BranchPoint, ds: f64) -> Result<BranchPoint, ContinuationError> {
        let x0 = self.state(&base.hf);
        let tan = &base.tangent;
        let t = base.arclength + ds;
        let mut x: Vec<f64> = x0.iter().zip(tan).map(|(a, b)| a + ds * b).collect();
        let mut history = vec![self.nodal_residual(&self.field(&x, t))?];
        let mut converged = history[0] < NEWTON_TOL;
        let mut it = 0;
        while !converged && it < MAX_NEWTON {
            let hf = self.field(&x, t);
            let (a, grad) = self.bordered(&hf, tan)?;
            let g: f64 = x.iter().zip(&x0).enumerate().map(|(k, (a, b))| self.w(k) * tan[k] * (a - b)).sum::<f64>() - ds;
            let mut rhs: Vec<f64> = grad.iter().map(|v| -v).collect();
            rhs.push(-g);
            let dx = Self::solve(&a, &rhs)?;
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
            let res = self.nodal_residual(&self.field(&x, t))?;
            history.push(res);
            it += 1;
            if !res.is_finite() || res > 1e3 * history[0].max(1e-6) {
                break;
            }
            converged = res < NEWTON_TOL;
        }
        let last = *history.last().expect("nonempty");
        if !converged {
            return Err(ContinuationError::StepFailure { t, attempts: 1, residual: last });
        }
        let hf = self.field(&x, t);
        let (a, _) = self.bordered(&hf, tan)?;
        let mut rhs = vec![0.0; x.len()];
        rhs[x.len() - 1] = 1.0;
        let mut nt = Self::solve(&a, &rhs)?;
        let nn = self.norm(&nt);
        let sign = if self.dot(&nt, tan) < 0.0 { -1.0 } else { 1.0 };
        for v in nt.iter_mut() {
            *v *= sign / nn;
        }
        Ok(BranchPoint { amplitude: hf.amplitude(), hf, tangent: nt, arclength: t, newton_residual: last, newton_history: history })
    }

    /// Re-solves the branch at arclength `t`, starting from the stored point `base`.
    pub fn point_at(&self, base: &BranchPoint, t: f64) -> Result<BranchPoint, ContinuationError> {
        self.correct(base, t - base.arclength)
    }
}

/// Flat starting point, kernel mode and tracer for a stream on an (nq, np) grid.
pub fn branch_start(
    stream: &UniformStream,
    tau_star: f64,
    nq: usize,
    np: usize,
) -> Result<(Tracer, BranchPoint, FlatMode, f64), ContinuationError> {
    let col = discrete_uniform(stream, np)?;
    let (_, tau_grid) = grid_tau_star(&col, nq)?;
    let flat = flat_field(stream, nq, np, 2.0 * std::f64::consts::PI / tau_grid)?;
    let mode = initial_tangent(stream, &flat, tau_grid)?;
    let tracer = Tracer::new(stream.vorticity().clone(), &flat);
    let mut tangent = flat.clone();
    tangent.h = mode.field.clone();
    let mut tan = tangent.unknowns();
    tan.push(0.0);
    let n = tracer.norm(&tan);
    tan.iter_mut().for_each(|v| *v /= n);
    let res = tracer.nodal_residual(&flat)?;
    let start = BranchPoint { hf: flat, tangent: tan, amplitude: 0.0, arclength: 0.0, newton_residual: res, newton_history: vec![res] };
    log::debug!("branch_start: tau* = {tau_star}, grid tau = {tau_grid}");
    Ok((tracer, start, mode, tau_grid))
}

/// Traces the branch with pseudo-arclength steps, halving on corrector failure.
pub fn continue_branch(stream: &UniformStream, tau_star: f64, opts: &ContinuationOptions) -> Result<Branch, ContinuationError> {
    let (tracer, start, _, tau_grid) = branch_start(stream, tau_star, opts.nq, opts.np)?;
    let period = tracer.period;
    let mut points = vec![start];
    let mut stop = StopReason::Completed;
    for _ in 0..opts.steps {
        let base = points.last().expect("nonempty");
        let mut ds = opts.step;
        let mut attempt = 0;
        let next = loop {
            match tracer.correct(base, ds) {
                Ok(p) => break p,
                Err(ContinuationError::StepFailure { residual, .. })
                | Err(ContinuationError::Hodograph(HodographError::DegenerateHp { min_hp: residual, .. })) => {
                    attempt += 1;
                    if attempt > opts.max_halvings {
                        return Err(ContinuationError::StepFailure { t: base.arclength + ds, attempts: attempt, residual });
                    }
                    log::info!("continue_branch: halving step at t = {:.4}", base.arclength);
                    ds *= 0.5;
                }
                Err(e) => return Err(e),
            }
        };
        let crest = next.hf.at(0, opts.np);
        points.push(next);
        if opts.min_crest_gap > 0.0 && stream.r - crest < opts.min_crest_gap {
            stop = StopReason::CrestGap;
            break;
        }
    }
    Ok(Branch { points, slope: stream.s, depth: stream.d, r: stream.r, tau_star, tau_grid, period, stop })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monitor {
    pub t: f64,
    /// max_X |Ξ′(X)|
    pub max_slope: f64,
    /// min_X (R − Ξ(X))
    pub min_r_minus_xi: f64,
    /// min_X Ψ_Y(X, 0)
    pub min_bottom_velocity: f64,
    /// Physical period Λ(t) = Λ₀/λ.
    pub lambda_t: f64,
    /// Λ(t) ≥ c₀ with c₀ = PERIOD_BOUND_FRACTION·Λ₀.
    pub period_bound_ok: bool,
}

pub fn point_monitor(hf: &HeightField) -> Monitor {
    let s = hf.strip();
    let np = hf.np;
    let xi = hf.surface();
    let mut max_slope = 0.0f64;
    for i in 0..hf.nq {
        max_slope = max_slope.max((hf.lambda * (xi[i + 1] - xi[i]) / s.dq).abs());
    }
    let top = xi.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut vel = f64::INFINITY;
    for i in 0..=hf.nq {
        let col: Vec<f64> = (0..=np).map(|j| hf.at(i, j)).collect();
        vel = vel.min(1.0 / column_hp(&col, 0, s.dp));
    }
    let lambda_t = hf.period / hf.lambda;
    Monitor {
        t: hf.t_label,
        max_slope,
        min_r_minus_xi: hf.r - top,
        min_bottom_velocity: vel,
        lambda_t,
        period_bound_ok: lambda_t >= PERIOD_BOUND_FRACTION * hf.period,
    }
}

pub fn branch_monitors(b: &Branch) -> Result<Vec<Monitor>, ContinuationError> {
    if b.points.is_empty() {
        return Err(ContinuationError::Empty);
    }
    Ok(b.points.iter().map(|p| point_monitor(&p.hf)).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    slope: f64,
    depth: f64,
    #[serde(rename = "R")]
    r: f64,
    tau_star: f64,
    tau_grid: f64,
    period: f64,
    stop: StopReason,
    files: Vec<String>,
    t_labels: Vec<f64>,
    amplitudes: Vec<f64>,
    lambdas: Vec<f64>,
    monitors: Vec<Monitor>,
}

impl Branch {
    /// Writes one checkpoint per point plus `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<(), ContinuationError> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (k, p) in self.points.iter().enumerate() {
            let name = format!("point_{k:04}.json");
            let mut w = BufWriter::new(File::create(dir.join(&name))?);
            serde_json::to_writer(&mut w, p)?;
            w.flush()?;
            files.push(name);
        }
        let m = Manifest {
            slope: self.slope,
            depth: self.depth,
            r: self.r,
            tau_star: self.tau_star,
            tau_grid: self.tau_grid,
            period: self.period,
            stop: self.stop,
            files,
            t_labels: self.points.iter().map(|p| p.arclength).collect(),
            amplitudes: self.points.iter().map(|p| p.amplitude).collect(),
            lambdas: self.points.iter().map(|p| p.hf.lambda).collect(),
            monitors: branch_monitors(self)?,
        };
        let mut w = BufWriter::new(File::create(dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut w, &m)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ContinuationError> {
        let m: Manifest = serde_json::from_reader(BufReader::new(File::open(dir.join("manifest.json"))?))?;
        let mut points = Vec::with_capacity(m.files.len());
        for f in &m.files {
            let p: BranchPoint = serde_json::from_reader(BufReader::new(File::open(dir.join(f))?))?;
            p.hf.check_shape()?;
            points.push(p);
        }
        Ok(Branch {
            points,
            slope: m.slope,
            depth: m.depth,
            r: m.r,
            tau_star: m.tau_star,
            tau_grid: m.tau_grid,
            period: m.period,
            stop: m.stop,
        })
    }

    pub fn t_labels(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.arclength).collect()
    }
}

