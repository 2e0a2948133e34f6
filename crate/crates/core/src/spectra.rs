//! Eigenvalue families of the Frechet pair: half-period, auxiliary,
//! Dirichlet/Neumann, Bloch and subharmonic spectra.

use std::collections::VecDeque;
use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{c64, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hodograph::{check_hp, triplets, unknown, HeightField, HodographError};
use crate::linalg::{gen_eigh, gen_eigh_complex, residual_complex, residual_real, LinalgError};
use crate::mesh::{element_forms, segment_mass, unfold, Strip, GAUSS, LOCAL};
use crate::stream::UniformStream;

/// Residual bound every returned eigenpair must satisfy.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error(transparent)]
    Hodograph(#[from] HodographError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("eigen residual {0:.3e} exceeds tolerance")]
    Residual(f64),
    #[error("family {family:?} needs the {expected:?} layout, forms were assembled on {got:?}")]
    LayoutMismatch { family: Family, expected: Layout, got: Layout },
    #[error("zero eigenvalue is not simple: {count} eigenvalues within band {band:.3e}")]
    KernelNotSimple { count: usize, band: f64 },
    #[error("{fraction:.1}% of nodes fall in the zero band")]
    AmbiguousSign { fraction: f64 },
    #[error("vector has {got} values, expected {expected}")]
    Shape { got: usize, expected: usize },
    #[error("eigenproblem in the physical variables failed: {0}")]
    Physical(String),
}

/// Tolerance band for eigenvalues that count as zero:
/// 10·median(|μ₀..μ₄|)·(1/nq)²(1/np)².
pub fn zero_band(values: &[f64], nq: usize, np: usize) -> f64 {
    let mut a: Vec<f64> = values.iter().take(5).map(|v| v.abs()).collect();
    if a.is_empty() {
        return 0.0;
    }
    a.sort_by(f64::total_cmp);
    let med = if a.len() % 2 == 1 { a[a.len() / 2] } else { 0.5 * (a[a.len() / 2 - 1] + a[a.len() / 2]) };
    10.0 * med / ((nq * nq) as f64 * (np * np) as f64)
}

/// Strip on which the forms are assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// Half period [0, L/2].
    Half,
    /// Full period [−L/2, L/2].
    Full,
    /// Half of M periods [0, M·L/2].
    Multiple(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    HalfEven,
    /// Dirichlet at q = 0, free at q = L/2.
    Aux0Star,
    /// Free at q = 0, Dirichlet at q = L/2.
    AuxStar0,
    Aux00,
    Dirichlet,
    Neumann,
    /// Quasi-periodic with u(q + L) = e^{2πif} u(q).
    Bloch(f64),
    Subharmonic(usize),
}

impl Family {
    pub fn layout(&self) -> Layout {
        match self {
            Family::HalfEven | Family::Aux0Star | Family::AuxStar0 | Family::Aux00 => Layout::Half,
            Family::Dirichlet | Family::Neumann | Family::Bloch(_) => Layout::Full,
            Family::Subharmonic(m) => Layout::Multiple(*m),
        }
    }
}

/// Quadratic forms at a HeightField: a(u, u; θ) = a + iθb + θ²c in the
/// q-wavenumber θ, with plain mass m. All matrices act on nodes j ≥ 1 of the strip.
#[derive(Debug, Clone)]
pub struct FormTriple {
    pub layout: Layout,
    pub strip: Strip,
    /// Nodal h on the strip.
    pub h: Vec<f64>,
    pub lambda: f64,
    pub nq: usize,
    pub a: SparseColMat<usize, f64>,
    pub b: SparseColMat<usize, f64>,
    pub c: SparseColMat<usize, f64>,
    pub m: SparseColMat<usize, f64>,
}

pub fn assemble_forms(hf: &HeightField, layout: Layout) -> Result<FormTriple, SpectraError> {
    hf.check_shape()?;
    let (nq, np) = (hf.nq, hf.np);
    let dq = hf.strip().dq;
    let (nc, h) = match layout {
        Layout::Half => (nq, hf.h.clone()),
        Layout::Full => (2 * nq, unfold(&hf.h, nq, np, 2 * nq, -(nq as isize))),
        Layout::Multiple(m) => (m * nq, unfold(&hf.h, nq, np, m * nq, 0)),
    };
    let s = Strip::new(nc, np, dq);
    check_hp(&s, &h)?;
    let n = (nc + 1) * np;
    let (mut ta, mut tb, mut tc, mut tm) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..nc {
        for j in 0..np {
            let f = element_forms(&s, &h, hf.lambda, i, j);
            for (k, &(ak, bk)) in LOCAL.iter().enumerate() {
                if j + bk == 0 {
                    continue;
                }
                let r = unknown(np, i + ak, j + bk);
                for (l, &(al, bl)) in LOCAL.iter().enumerate() {
                    if j + bl == 0 {
                        continue;
                    }
                    let c = unknown(np, i + al, j + bl);
                    ta.push(Triplet::new(r, c, f.a[k][l]));
                    tb.push(Triplet::new(r, c, f.b[k][l]));
                    tc.push(Triplet::new(r, c, f.c[k][l]));
                    tm.push(Triplet::new(r, c, f.m[k][l]));
                }
            }
        }
    }
    let sm = segment_mass(&s);
    for i in 0..nc {
        for a in 0..2 {
            for b in 0..2 {
                ta.push(Triplet::new(unknown(np, i + a, np), unknown(np, i + b, np), -sm[a][b]));
            }
        }
    }
    let build = |t: &[Triplet<usize, usize, f64>]| {
        SparseColMat::try_new_from_triplets(n, n, t).map_err(|_| LinalgError::Factorization)
    };
    Ok(FormTriple {
        layout,
        strip: s,
        lambda: hf.lambda,
        nq,
        a: build(&ta)?,
        b: build(&tb)?,
        c: build(&tc)?,
        m: build(&tm)?,
        h,
    })
}

/// Maps strip unknowns to reduced indices with a phase factor.
struct Reduction {
    map: Vec<Option<usize>>,
    /// Phase exponent n of each kept entry (e^{iθn}).
    phase: Vec<i32>,
    size: usize,
}

fn reduction(family: Family, s: &Strip) -> Reduction {
    let (nc, np) = (s.nc, s.np);
    let drop = |i: usize| match family {
        Family::Aux0Star => i == 0,
        Family::AuxStar0 => i == nc,
        Family::Aux00 | Family::Dirichlet => i == 0 || i == nc,
        _ => false,
    };
    let periodic = matches!(family, Family::Bloch(_));
    let mut map = vec![None; (nc + 1) * np];
    let mut phase = vec![0; (nc + 1) * np];
    let mut size = 0;
    for i in 0..=nc {
        if drop(i) || (periodic && i == nc) {
            continue;
        }
        for j in 1..=np {
            map[unknown(np, i, j)] = Some(size);
            size += 1;
        }
    }
    if periodic {
        for j in 1..=np {
            map[unknown(np, nc, j)] = map[unknown(np, 0, j)];
            phase[unknown(np, nc, j)] = 1;
        }
    }
    Reduction { map, phase, size }
}

fn reduce_real(m: &SparseColMat<usize, f64>, red: &Reduction) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(red.size, red.size);
    for (c, r, v) in triplets(m) {
        if let (Some(ra), Some(rb)) = (red.map[r], red.map[c]) {
            out[(ra, rb)] += v;
        }
    }
    out
}

/// Reduced matrix with entry factors e^{iθ(n_b − n_a)}.
fn reduce_complex(m: &SparseColMat<usize, f64>, red: &Reduction, theta: f64) -> Mat<c64> {
    let mut out = Mat::<c64>::zeros(red.size, red.size);
    for (c, r, v) in triplets(m) {
        if let (Some(ra), Some(rb)) = (red.map[r], red.map[c]) {
            let k = (red.phase[c] - red.phase[r]) as f64;
            let ph = c64::new((theta * k).cos(), (theta * k).sin());
            out[(ra, rb)] += ph * v;
        }
    }
    out
}

/// Real antisymmetric first and real symmetric second phase derivatives.
fn reduce_derivs(m: &SparseColMat<usize, f64>, red: &Reduction) -> (Mat<f64>, Mat<f64>) {
    let mut d1 = Mat::<f64>::zeros(red.size, red.size);
    let mut d2 = Mat::<f64>::zeros(red.size, red.size);
    for (c, r, v) in triplets(m) {
        if let (Some(ra), Some(rb)) = (red.map[r], red.map[c]) {
            let k = (red.phase[c] - red.phase[r]) as f64;
            d1[(ra, rb)] += k * v;
            d2[(ra, rb)] -= k * k * v;
        }
    }
    (d1, d2)
}

#[derive(Debug, Clone)]
pub enum Modes {
    Real(Vec<Vec<f64>>),
    Complex(Vec<Vec<c64>>),
}

/// Lowest eigenpairs of one family. Vectors are nodal on the layout's strip,
/// mass-orthonormal, with nonnegative surface mean (real families) or a
/// positive real largest entry (Bloch).
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub family: Family,
    pub eigenvalues: Vec<f64>,
    pub modes: Option<Modes>,
    pub residual: f64,
    pub strip: Strip,
}

impl SpectrumResult {
    pub fn real_mode(&self, k: usize) -> Option<&[f64]> {
        match &self.modes {
            Some(Modes::Real(v)) => v.get(k).map(|x| x.as_slice()),
            _ => None,
        }
    }
}

fn check_layout(ft: &FormTriple, family: Family) -> Result<(), SpectraError> {
    if ft.layout != family.layout() {
        return Err(SpectraError::LayoutMismatch { family, expected: family.layout(), got: ft.layout });
    }
    Ok(())
}

/// Solves one family on assembled forms; `count` caps the returned pairs.
pub fn solve_family(ft: &FormTriple, family: Family, count: usize) -> Result<SpectrumResult, SpectraError> {
    solve(ft, family, count, true)
}

/// Eigenvalues only.
pub fn family_values(ft: &FormTriple, family: Family, count: usize) -> Result<Vec<f64>, SpectraError> {
    Ok(solve(ft, family, count, false)?.eigenvalues)
}

fn solve(ft: &FormTriple, family: Family, count: usize, vectors: bool) -> Result<SpectrumResult, SpectraError> {
    check_layout(ft, family)?;
    let s = ft.strip;
    let np = s.np;
    let red = reduction(family, &s);
    match family {
        Family::Bloch(f) => {
            let theta = 2.0 * PI * f;
            let a = reduce_complex(&ft.a, &red, theta);
            let m = reduce_complex(&ft.m, &red, theta);
            let e = gen_eigh_complex(&a, &m, vectors)?;
            let k = count.min(e.values.len());
            let mut out = SpectrumResult {
                family,
                eigenvalues: e.values[..k].to_vec(),
                modes: None,
                residual: 0.0,
                strip: s,
            };
            if let Some(v) = e.vectors {
                out.residual = residual_complex(&a, &m, &e.values, &v, k);
                let mut modes = Vec::with_capacity(k);
                for col in 0..k {
                    let big = (0..v.nrows()).max_by(|&x, &y| v[(x, col)].norm().total_cmp(&v[(y, col)].norm())).unwrap_or(0);
                    let z = v[(big, col)];
                    let rot = if z.norm() > 0.0 { z.conj() / z.norm() } else { c64::new(1.0, 0.0) };
                    let mut field = vec![c64::new(0.0, 0.0); s.n_nodes()];
                    for i in 0..=s.nc {
                        for j in 1..=np {
                            if let Some(r) = red.map[unknown(np, i, j)] {
                                let ph = red.phase[unknown(np, i, j)] as f64 * theta;
                                field[s.node(i, j)] = v[(r, col)] * rot * c64::new(ph.cos(), ph.sin());
                            }
                        }
                    }
                    modes.push(field);
                }
                out.modes = Some(Modes::Complex(modes));
            }
            finish(out)
        }
        _ => {
            let a = reduce_real(&ft.a, &red);
            let m = reduce_real(&ft.m, &red);
            let e = gen_eigh(&a, &m, vectors)?;
            let k = count.min(e.values.len());
            let mut out = SpectrumResult {
                family,
                eigenvalues: e.values[..k].to_vec(),
                modes: None,
                residual: 0.0,
                strip: s,
            };
            if let Some(v) = e.vectors {
                out.residual = residual_real(&a, &m, &e.values, &v, k);
                let mut modes = Vec::with_capacity(k);
                for col in 0..k {
                    let mut field = vec![0.0; s.n_nodes()];
                    for i in 0..=s.nc {
                        for j in 1..=np {
                            if let Some(r) = red.map[unknown(np, i, j)] {
                                field[s.node(i, j)] = v[(r, col)];
                            }
                        }
                    }
                    let mean: f64 = (0..=s.nc).map(|i| s.wq(i) * field[s.node(i, np)]).sum();
                    if mean < 0.0 {
                        field.iter_mut().for_each(|x| *x = -*x);
                    }
                    modes.push(field);
                }
                out.modes = Some(Modes::Real(modes));
            }
            finish(out)
        }
    }
}

fn finish(out: SpectrumResult) -> Result<SpectrumResult, SpectraError> {
    if !(out.residual < RESIDUAL_TOL) {
        return Err(SpectraError::Residual(out.residual));
    }
    Ok(out)
}

/// Spectrum of the phase-coupled form a + iθb + θ²c on the periodic full
/// strip, θ = 2πf/L. Agrees with `Family::Bloch(f)` up to discretization error.
pub fn coupled_bloch_values(ft: &FormTriple, f: f64, count: usize) -> Result<Vec<f64>, SpectraError> {
    check_layout(ft, Family::Bloch(f))?;
    let red = reduction(Family::Bloch(0.0), &ft.strip);
    let period = ft.strip.nc as f64 * ft.strip.dq;
    let th = 2.0 * PI * f / period;
    let a = reduce_real(&ft.a, &red);
    let b = reduce_real(&ft.b, &red);
    let c = reduce_real(&ft.c, &red);
    let m = reduce_real(&ft.m, &red);
    let n = red.size;
    let h = Mat::<c64>::from_fn(n, n, |r, k| c64::new(a[(r, k)] + th * th * c[(r, k)], th * b[(r, k)]));
    let mc = Mat::<c64>::from_fn(n, n, |r, k| c64::new(m[(r, k)], 0.0));
    let e = gen_eigh_complex(&h, &mc, false)?;
    Ok(e.values.into_iter().take(count).collect())
}

/// μ̂_j over a set of quasi-momentum fractions f = τ/τ_*, with τ_* = 2π/Λ(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochCurves {
    pub fractions: Vec<f64>,
    /// Physical quasi-momenta τ = 2πfλ/L.
    pub taus: Vec<f64>,
    /// curves[j][k] = μ̂_j at fractions[k].
    pub curves: Vec<Vec<f64>>,
    pub t_label: f64,
    /// Samples whose solve failed, with the reason.
    pub dropped: Vec<(f64, String)>,
}

pub fn bloch_sweep(hf: &HeightField, fractions: &[f64], count: usize) -> Result<BlochCurves, SpectraError> {
    let ft = assemble_forms(hf, Layout::Full)?;
    let solved: Vec<(f64, Result<Vec<f64>, SpectraError>)> =
        fractions.par_iter().map(|&f| (f, family_values(&ft, Family::Bloch(f), count))).collect();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (f, r) in solved {
        match r {
            Ok(v) => kept.push((f, v)),
            Err(e) => dropped.push((f, e.to_string())),
        }
    }
    let count = kept.iter().map(|(_, v)| v.len()).min().unwrap_or(0);
    let curves = (0..count).map(|j| kept.iter().map(|(_, v)| v[j]).collect()).collect();
    let scale = 2.0 * PI * hf.lambda / hf.period;
    Ok(BlochCurves {
        fractions: kept.iter().map(|(f, _)| *f).collect(),
        taus: kept.iter().map(|(f, _)| f * scale).collect(),
        curves,
        t_label: hf.t_label,
        dropped,
    })
}

/// τ² coefficient of the Bloch eigenvalue through 0 at zero quasi-momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochCurvature {
    pub mu0: f64,
    /// Coefficient of θ² with θ = 2πf.
    pub mu2: f64,
    /// Coefficient of τ² in physical quasi-momentum.
    pub c_tau: f64,
    /// Same coefficient from centered differences at θ = ±δ.
    pub c_fd: f64,
    pub band: f64,
}

pub fn bloch_curvature(hf: &HeightField) -> Result<BlochCurvature, SpectraError> {
    bloch_curvature_with(hf, 1e-2)
}

pub fn bloch_curvature_with(hf: &HeightField, delta: f64) -> Result<BlochCurvature, SpectraError> {
    let ft = assemble_forms(hf, Layout::Full)?;
    let red = reduction(Family::Bloch(0.0), &ft.strip);
    let a0 = reduce_real(&ft.a, &red);
    let m0 = reduce_real(&ft.m, &red);
    let e = gen_eigh(&a0, &m0, true)?;
    let band = zero_band(&e.values, hf.nq, hf.np);
    let near: Vec<usize> = (0..e.values.len()).filter(|&k| e.values[k].abs() <= band).collect();
    if near.len() != 1 {
        return Err(SpectraError::KernelNotSimple { count: near.len(), band });
    }
    let idx = near[0];
    let mu0 = e.values[idx];
    let v = e.vectors.expect("vectors requested");
    let u = v.col(idx).to_owned();
    let (d1a, d2a) = reduce_derivs(&ft.a, &red);
    let (d1m, d2m) = reduce_derivs(&ft.m, &red);
    let n = red.size;
    let op = Mat::<f64>::from_fn(n, n, |r, c| a0[(r, c)] - mu0 * m0[(r, c)]);
    let d = (&d1a - &d1m * mu0) * &u;
    let mu_u = &m0 * &u;
    let bordered = Mat::<f64>::from_fn(n + 1, n + 1, |r, c| match (r < n, c < n) {
        (true, true) => op[(r, c)],
        (true, false) => mu_u[r],
        (false, true) => mu_u[c],
        (false, false) => 0.0,
    });
    let mut rhs = Mat::<f64>::zeros(n + 1, 1);
    for r in 0..n {
        rhs[(r, 0)] = d[r];
    }
    let sol = bordered.partial_piv_lu().solve(&rhs);
    let dy: f64 = (0..n).map(|r| d[r] * sol[(r, 0)]).sum();
    let q = (&d2a - &d2m * mu0) * &u;
    let uq: f64 = (0..n).map(|r| u[r] * q[r]).sum();
    let mu2 = 0.5 * uq - dy;
    let near_value = |theta: f64| -> Result<f64, SpectraError> {
        let a = reduce_complex(&ft.a, &red, theta);
        let m = reduce_complex(&ft.m, &red, theta);
        let vals = gen_eigh_complex(&a, &m, false)?.values;
        Ok(vals.into_iter().min_by(|x, y| (x - mu0).abs().total_cmp(&(y - mu0).abs())).unwrap_or(f64::NAN))
    };
    let fd = (near_value(delta)? + near_value(-delta)? - 2.0 * mu0) / (2.0 * delta * delta);
    let big_lambda = hf.period / hf.lambda;
    Ok(BlochCurvature {
        mu0,
        mu2,
        c_tau: mu2 * big_lambda * big_lambda,
        c_fd: fd * big_lambda * big_lambda,
        band,
    })
}

/// Spectrum of even M·L-periodic perturbations.
pub fn subharmonic_spectrum(hf: &HeightField, m: usize, count: usize) -> Result<SpectrumResult, SpectraError> {
    let ft = assemble_forms(hf, Layout::Multiple(m))?;
    solve_family(&ft, Family::Subharmonic(m), count)
}

/// Subharmonic eigenvalues assembled from the half-period, Bloch and
/// antiperiodic families: μ ∪ μ̂(k/M), 0 < k < M/2 ∪ ν^{*0} (M even).
pub fn subharmonic_synthesis(hf: &HeightField, m: usize, count: usize) -> Result<Vec<f64>, SpectraError> {
    let half = assemble_forms(hf, Layout::Half)?;
    let full = assemble_forms(hf, Layout::Full)?;
    let mut all = family_values(&half, Family::HalfEven, usize::MAX)?;
    let ks: Vec<usize> = (1..m).filter(|&k| 2 * k < m).collect();
    let parts: Vec<Result<Vec<f64>, SpectraError>> =
        ks.par_iter().map(|&k| family_values(&full, Family::Bloch(k as f64 / m as f64), usize::MAX)).collect();
    for p in parts {
        all.extend(p?);
    }
    if m % 2 == 0 {
        all.extend(family_values(&half, Family::AuxStar0, usize::MAX)?);
    }
    all.sort_by(f64::total_cmp);
    all.truncate(count);
    Ok(all)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseCounts {
    pub m: usize,
    /// Eigenvalues below −band in the direct M-period spectrum.
    pub n0: usize,
    /// Eigenvalues at most band.
    pub n: usize,
    /// Same counts without the band (strict sign).
    pub n0_raw: usize,
    pub n_raw: usize,
    /// Tally of k, m ∈ [0, M/2] with μ̂₀(k/M) and μ̂₁(m/M) negative (resp. ≤ band).
    pub n0_tally: usize,
    pub n_tally: usize,
    pub band: f64,
}

pub fn morse_counts(hf: &HeightField, m: usize) -> Result<MorseCounts, SpectraError> {
    let direct = family_values(&assemble_forms(hf, Layout::Multiple(m))?, Family::Subharmonic(m), usize::MAX)?;
    let half = family_values(&assemble_forms(hf, Layout::Half)?, Family::HalfEven, 5)?;
    let band = zero_band(&half, hf.nq, hf.np);
    let full = assemble_forms(hf, Layout::Full)?;
    let ks: Vec<usize> = (0..=m / 2).collect();
    let bloch: Vec<Result<Vec<f64>, SpectraError>> =
        ks.par_iter().map(|&k| family_values(&full, Family::Bloch(k as f64 / m as f64), 2)).collect();
    let mut n0_tally = 0;
    let mut n_tally = 0;
    for b in bloch {
        for v in b? {
            n0_tally += (v < -band) as usize;
            n_tally += (v <= band) as usize;
        }
    }
    Ok(MorseCounts {
        m,
        n0: direct.iter().filter(|&&v| v < -band).count(),
        n: direct.iter().filter(|&&v| v <= band).count(),
        n0_raw: direct.iter().filter(|&&v| v < 0.0).count(),
        n_raw: direct.iter().filter(|&&v| v <= 0.0).count(),
        n0_tally,
        n_tally,
        band,
    })
}

/// Negative counts of the weighted trace problem S g = μ M_a g (S the
/// Dirichlet-to-Neumann Schur complement) and the weighted domain problem
/// A u = μ M_b u on the even M-period strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedCounts {
    pub neg_count_boundary: usize,
    pub neg_count_domain: usize,
}

pub fn weighted_count_check(
    hf: &HeightField,
    m: usize,
    a_weight: &(dyn Fn(f64) -> f64 + Sync),
    b_weight: &(dyn Fn(f64, f64) -> f64 + Sync),
) -> Result<WeightedCounts, SpectraError> {
    let ft = assemble_forms(hf, Layout::Multiple(m))?;
    let s = ft.strip;
    let np = s.np;
    let red = reduction(Family::Subharmonic(m), &s);
    let a = reduce_real(&ft.a, &red);
    let n = red.size;
    let mut mb = Mat::<f64>::zeros(n, n);
    for i in 0..s.nc {
        for j in 0..np {
            for gq in GAUSS {
                for gp in GAUSS {
                    let w = 0.25 * s.dq * s.dp * b_weight((i as f64 + gq) * s.dq, (j as f64 + gp) * s.dp);
                    let nv = [(1.0 - gq) * (1.0 - gp), gq * (1.0 - gp), (1.0 - gq) * gp, gq * gp];
                    for (k, &(ak, bk)) in LOCAL.iter().enumerate() {
                        for (l, &(al, bl)) in LOCAL.iter().enumerate() {
                            if j + bk > 0 && j + bl > 0 {
                                mb[(unknown(np, i + ak, j + bk), unknown(np, i + al, j + bl))] += w * nv[k] * nv[l];
                            }
                        }
                    }
                }
            }
        }
    }
    let domain = gen_eigh(&a, &mb, false)?.values;
    let surf: Vec<usize> = (0..=s.nc).map(|i| unknown(np, i, np)).collect();
    let interior: Vec<usize> = (0..n).filter(|k| (k + 1) % np != 0).collect();
    let ns = surf.len();
    let ni = interior.len();
    let sub = |rows: &[usize], cols: &[usize]| Mat::<f64>::from_fn(rows.len(), cols.len(), |r, c| a[(rows[r], cols[c])]);
    let a_ii = sub(&interior, &interior);
    let a_is = sub(&interior, &surf);
    let a_ss = sub(&surf, &surf);
    let x = a_ii.partial_piv_lu().solve(&a_is);
    let schur = Mat::<f64>::from_fn(ns, ns, |r, c| {
        a_ss[(r, c)] - (0..ni).map(|k| a_is[(k, r)] * x[(k, c)]).sum::<f64>()
    });
    let schur = Mat::<f64>::from_fn(ns, ns, |r, c| 0.5 * (schur[(r, c)] + schur[(c, r)]));
    let mut ma = Mat::<f64>::zeros(ns, ns);
    for i in 0..s.nc {
        for g in GAUSS {
            let w = s.dq * 0.5 * a_weight((i as f64 + g) * s.dq);
            let nv = [1.0 - g, g];
            for x in 0..2 {
                for y in 0..2 {
                    ma[(i + x, i + y)] += w * nv[x] * nv[y];
                }
            }
        }
    }
    let boundary = gen_eigh(&schur, &ma, false)?.values;
    Ok(WeightedCounts {
        neg_count_boundary: boundary.iter().filter(|&&v| v < 0.0).count(),
        neg_count_domain: domain.iter().filter(|&&v| v < 0.0).count(),
    })
}

/// Lowest eigenpair of −g″ + k²g − ω′(U)g = μ g/U′ on (0, d) with g(0) = 0,
/// g′(d) = ρ₀ g(d), pushed to hodograph variables as f(p) = g(H(p))·H_p(p).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushForward {
    pub k: f64,
    pub mu: f64,
    /// max |A f − μ f| / max |f| over interior p-samples, for the mode cos(kq)f(p).
    pub interior_residual: f64,
    /// |f_p/H_p³ − f| / max |f| at p = 1.
    pub surface_residual: f64,
}

struct Shot {
    y: Vec<f64>,
    g: Vec<f64>,
    dg: Vec<f64>,
}

/// k² − ω′(U) and 1/U′ sampled at the nodes and midpoints of an n-step grid on (0, d).
struct Coefficients {
    n: usize,
    h: f64,
    potential: Vec<f64>,
    weight: Vec<f64>,
}

impl Coefficients {
    fn new(stream: &UniformStream, k: f64, n: usize) -> Self {
        let vm = stream.vorticity();
        let h = stream.d / n as f64;
        let ys: Vec<f64> = (0..=2 * n).map(|m| 0.5 * h * m as f64).collect();
        Self {
            n,
            h,
            potential: ys.iter().map(|&y| k * k - vm.omega_prime(stream.u(y))).collect(),
            weight: ys.iter().map(|&y| 1.0 / stream.u_prime(y)).collect(),
        }
    }

    /// RK4 for g″ = (k² − ω′(U) − μ/U′) g from g(0) = 0, g′(0) = 1.
    fn shoot(&self, mu: f64) -> Shot {
        let h = self.h;
        let rhs = |m: usize, g: f64| (self.potential[m] - mu * self.weight[m]) * g;
        let (mut g, mut dg) = (0.0, 1.0);
        let mut out = Shot { y: vec![0.0], g: vec![0.0], dg: vec![1.0] };
        for s in 0..self.n {
            let m = 2 * s;
            let k1 = (dg, rhs(m, g));
            let k2 = (dg + 0.5 * h * k1.1, rhs(m + 1, g + 0.5 * h * k1.0));
            let k3 = (dg + 0.5 * h * k2.1, rhs(m + 1, g + 0.5 * h * k2.0));
            let k4 = (dg + h * k3.1, rhs(m + 2, g + h * k3.0));
            g += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            dg += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            out.y.push((s + 1) as f64 * h);
            out.g.push(g);
            out.dg.push(dg);
        }
        out
    }
}

impl Shot {
    /// Cubic Hermite interpolation of g.
    fn eval(&self, y: f64) -> f64 {
        let n = self.y.len() - 1;
        let h = self.y[1] - self.y[0];
        let s = ((y / h).floor() as usize).min(n - 1);
        let t = (y - self.y[s]) / h;
        let (g0, g1, d0, d1) = (self.g[s], self.g[s + 1], self.dg[s] * h, self.dg[s + 1] * h);
        let h00 = 2.0 * t * t * t - 3.0 * t * t + 1.0;
        let h10 = t * t * t - 2.0 * t * t + t;
        let h01 = -2.0 * t * t * t + 3.0 * t * t;
        let h11 = t * t * t - t * t;
        h00 * g0 + h10 * d0 + h01 * g1 + h11 * d1
    }
}

pub fn pushforward_check(stream: &UniformStream, k: f64) -> Result<PushForward, SpectraError> {
    let n = 20_000;
    let rho0 = crate::dispersion::rho0(stream);
    let coef = Coefficients::new(stream, k, n);
    let mismatch = |mu: f64| {
        let s = coef.shoot(mu);
        s.dg[n] - rho0 * s.g[n]
    };
    let below = |mu: f64| {
        let s = coef.shoot(mu);
        s.g[1..].iter().all(|&v| v > 0.0) && s.dg[n] - rho0 * s.g[n] > 0.0
    };
    let mut lo = -10.0 - k * k;
    while !below(lo) {
        lo *= 2.0;
        if lo < -1e8 {
            return Err(SpectraError::Physical("no lower bound for the spectrum".into()));
        }
    }
    let mut step = 1.0;
    let mut hi = lo + step;
    while mismatch(hi) > 0.0 {
        lo = hi;
        step *= 1.5;
        hi += step;
        if hi > 1e8 {
            return Err(SpectraError::Physical("no eigenvalue bracketed".into()));
        }
    }
    let mut conv = roots::SimpleConvergency { eps: 1e-14, max_iter: 200 };
    let mu = roots::find_root_brent(lo, hi, &mismatch, &mut conv).map_err(|e| SpectraError::Physical(format!("{e:?}")))?;
    let shot = coef.shoot(mu);
    let f = |p: f64| shot.eval(stream.h(p)) * stream.hp(p);
    let hp3 = |p: f64| stream.hp(p).powi(3);
    let flux = |p: f64, dp: f64| (f(p + 0.5 * dp) - f(p - 0.5 * dp)) / dp / hp3(p);
    let div = |p: f64, dp: f64| (flux(p + 0.5 * dp, dp) - flux(p - 0.5 * dp, dp)) / dp;
    let dp = 1e-3;
    let mut scale = 0.0f64;
    let mut worst = 0.0f64;
    for s in 1..200 {
        let p = s as f64 / 200.0;
        let fv = f(p);
        scale = scale.max(fv.abs());
        let af = k * k * fv / stream.hp(p) - (4.0 * div(p, 0.5 * dp) - div(p, dp)) / 3.0;
        worst = worst.max((af - mu * fv).abs());
    }
    let top = stream.hp(1.0);
    let hpp = top.powi(3) * stream.vorticity().omega(1.0);
    let fp = shot.dg[n] * top * top + shot.g[n] * hpp;
    let surface = (fp / top.powi(3) - shot.g[n] * top).abs();
    Ok(PushForward { k, mu, interior_residual: worst / scale, surface_residual: surface / scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodalDomains {
    pub count: usize,
    /// A nodal line separating domains reaches the surface p = 1.
    pub surface_endpoint: bool,
}

/// Nodal domains of a nodal grid function on an `nc` × `np` strip, ignoring
/// the bottom row.
pub fn nodal_domains(v: &[f64], nc: usize, np: usize) -> Result<NodalDomains, SpectraError> {
    let s = Strip::new(nc, np, 1.0);
    if v.len() != s.n_nodes() {
        return Err(SpectraError::Shape { got: v.len(), expected: s.n_nodes() });
    }
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-8 * vmax;
    let total = (nc + 1) * np;
    let sign = |i: usize, j: usize| {
        let x = v[s.node(i, j)];
        if x.abs() <= tol {
            0
        } else if x > 0.0 {
            1
        } else {
            -1
        }
    };
    let zeros = (0..=nc).flat_map(|i| (1..=np).map(move |j| (i, j))).filter(|&(i, j)| sign(i, j) == 0).count();
    if zeros * 5 > total {
        return Err(SpectraError::AmbiguousSign { fraction: 100.0 * zeros as f64 / total as f64 });
    }
    let mut seen = vec![false; s.n_nodes()];
    let mut count = 0;
    for i0 in 0..=nc {
        for j0 in 1..=np {
            let sg = sign(i0, j0);
            if sg == 0 || seen[s.node(i0, j0)] {
                continue;
            }
            count += 1;
            let mut queue = VecDeque::from([(i0, j0)]);
            seen[s.node(i0, j0)] = true;
            while let Some((i, j)) = queue.pop_front() {
                let mut nb = Vec::with_capacity(4);
                if i > 0 {
                    nb.push((i - 1, j));
                }
                if i < nc {
                    nb.push((i + 1, j));
                }
                if j > 1 {
                    nb.push((i, j - 1));
                }
                if j < np {
                    nb.push((i, j + 1));
                }
                for (a, b) in nb {
                    if !seen[s.node(a, b)] && sign(a, b) == sg {
                        seen[s.node(a, b)] = true;
                        queue.push_back((a, b));
                    }
                }
            }
        }
    }
    let pos = (0..=nc).any(|i| sign(i, np) > 0);
    let neg = (0..=nc).any(|i| sign(i, np) < 0);
    Ok(NodalDomains { count, surface_endpoint: count >= 2 && pos && neg })
}

/// Nodal h_q on the half strip by centered differences; zero at both ends by oddness.
pub fn translation_mode(hf: &HeightField) -> Vec<f64> {
    let (nq, np) = (hf.nq, hf.np);
    let dq = hf.strip().dq;
    let mut out = vec![0.0; hf.h.len()];
    for i in 1..nq {
        for j in 0..=np {
            out[i * (np + 1) + j] = (hf.at(i + 1, j) - hf.at(i - 1, j)) / (2.0 * dq);
        }
    }
    out
}

/// a(v, v) for a nodal field on the forms' strip.
pub fn form_value(ft: &FormTriple, v: &[f64]) -> f64 {
    let np = ft.strip.np;
    let x: Vec<f64> = (0..=ft.strip.nc).flat_map(|i| (1..=np).map(move |j| (i, j))).map(|(i, j)| v[ft.strip.node(i, j)]).collect();
    triplets(&ft.a).into_iter().map(|(c, r, a)| x[r] * a * x[c]).sum()
}

/// Mass inner product of two nodal fields on the forms' strip.
pub fn mass_dot(ft: &FormTriple, u: &[f64], v: &[f64]) -> f64 {
    let np = ft.strip.np;
    let pick = |w: &[f64]| -> Vec<f64> {
        (0..=ft.strip.nc).flat_map(|i| (1..=np).map(move |j| (i, j))).map(|(i, j)| w[ft.strip.node(i, j)]).collect()
    };
    let (x, y) = (pick(u), pick(v));
    triplets(&ft.m).into_iter().map(|(c, r, a)| x[r] * a * y[c]).sum()
}

/// |⟨u, v⟩_M| / (‖u‖_M ‖v‖_M).
pub fn correlation(ft: &FormTriple, u: &[f64], v: &[f64]) -> f64 {
    mass_dot(ft, u, v).abs() / (mass_dot(ft, u, u) * mass_dot(ft, v, v)).sqrt()
}
