//! Height function h(q, p) on the half period, its nonlinear residual, the
//! Frechet derivative and the Dirichlet / Dirichlet–Neumann solves.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{gen_eigh, LinalgError};
use crate::mesh::{element_forms, element_terms, min_hp, omega_at_gauss, segment_mass, Strip, GAUSS, LOCAL, MIN_HP};
use crate::quad::MonotoneCubic;
use crate::stream::{UniformStream, VorticityModel};

/// Default trace-norm bound for the nonlinear Dirichlet problem.
pub const DELTA_STAR: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum HodographError {
    #[error("h_p = {min_hp:.3e} at cell ({i}, {j}) is below the admissible threshold")]
    DegenerateHp { min_hp: f64, i: usize, j: usize },
    #[error("linear solve failed: relative residual {0:.3e}")]
    SolverSingular(f64),
    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("grid function has {got} values, expected {expected}")]
    Shape { got: usize, expected: usize },
    #[error("grid too coarse: nq and np must be at least 8")]
    GridTooCoarse,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
}

/// Discretized h(q, p) on the half period [0, L/2] × [0, 1] plus the scaling λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    pub nq: usize,
    pub np: usize,
    #[serde(rename = "L")]
    pub period: f64,
    pub lambda: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub t_label: f64,
    pub h: Vec<f64>,
}

impl HeightField {
    pub fn strip(&self) -> Strip {
        Strip::new(self.nq, self.np, 0.5 * self.period / self.nq as f64)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.h[i * (self.np + 1) + j]
    }

    pub fn surface(&self) -> Vec<f64> {
        (0..=self.nq).map(|i| self.at(i, self.np)).collect()
    }

    /// Half the crest-to-trough height of the surface.
    pub fn amplitude(&self) -> f64 {
        0.5 * (self.at(0, self.np) - self.at(self.nq, self.np))
    }

    pub fn q(&self, i: usize) -> f64 {
        i as f64 * self.strip().dq
    }

    /// Values at nodes with p > 0, in unknown order.
    pub fn unknowns(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity((self.nq + 1) * self.np);
        for i in 0..=self.nq {
            out.extend_from_slice(&self.h[i * (self.np + 1) + 1..(i + 1) * (self.np + 1)]);
        }
        out
    }

    pub fn set_unknowns(&mut self, x: &[f64]) {
        for i in 0..=self.nq {
            self.h[i * (self.np + 1)] = 0.0;
            self.h[i * (self.np + 1) + 1..(i + 1) * (self.np + 1)].copy_from_slice(&x[i * self.np..(i + 1) * self.np]);
        }
    }

    pub fn check_shape(&self) -> Result<(), HodographError> {
        if self.nq < 8 || self.np < 8 {
            return Err(HodographError::GridTooCoarse);
        }
        let expected = (self.nq + 1) * (self.np + 1);
        if self.h.len() != expected {
            return Err(HodographError::Shape { got: self.h.len(), expected });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), HodographError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HodographError> {
        let hf: HeightField = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        let expected = (hf.nq + 1) * (hf.np + 1);
        if hf.h.len() != expected {
            return Err(HodographError::Shape { got: hf.h.len(), expected });
        }
        Ok(hf)
    }
}

/// Unknown index of node (i, j ≥ 1) on a strip.
pub fn unknown(np: usize, i: usize, j: usize) -> usize {
    i * np + j - 1
}

pub(crate) fn check_hp(strip: &Strip, h: &[f64]) -> Result<(), HodographError> {
    let (m, i, j) = min_hp(strip, h);
    if !(m >= MIN_HP) {
        return Err(HodographError::DegenerateHp { min_hp: m, i, j });
    }
    Ok(())
}

/// Discrete potential of a strip field and its derivatives.
pub struct Nonlinear {
    pub energy: f64,
    /// Gradient at unknown nodes.
    pub grad: Vec<f64>,
    /// ∂grad/∂λ at unknown nodes.
    pub grad_lam: Vec<f64>,
    pub e_lam: f64,
    /// Hessian on unknown nodes.
    pub hessian: Option<SparseColMat<usize, f64>>,
}

pub(crate) fn assemble_nonlinear(
    strip: &Strip,
    h: &[f64],
    lam: f64,
    r: f64,
    omega: &[[f64; 2]],
    hessian: bool,
) -> Result<Nonlinear, HodographError> {
    check_hp(strip, h)?;
    let np = strip.np;
    let n = (strip.nc + 1) * np;
    let mut grad = vec![0.0; n];
    let mut grad_lam = vec![0.0; n];
    let mut energy = 0.0;
    let mut e_lam = 0.0;
    let mut trips = Vec::new();
    for i in 0..strip.nc {
        for j in 0..np {
            let t = element_terms(strip, h, lam, omega, i, j);
            energy += t.energy;
            e_lam += t.e_lam;
            for (k, &(ak, bk)) in LOCAL.iter().enumerate() {
                if j + bk == 0 {
                    continue;
                }
                let uk = unknown(np, i + ak, j + bk);
                grad[uk] += t.grad[k];
                grad_lam[uk] += t.grad_lam[k];
                if hessian {
                    for (l, &(al, bl)) in LOCAL.iter().enumerate() {
                        if j + bl == 0 {
                            continue;
                        }
                        trips.push(Triplet::new(uk, unknown(np, i + al, j + bl), t.stiff[k][l]));
                    }
                }
            }
        }
    }
    let sm = segment_mass(strip);
    for i in 0..strip.nc {
        let hs = [h[strip.node(i, np)], h[strip.node(i + 1, np)]];
        let us = [unknown(np, i, np), unknown(np, i + 1, np)];
        for a in 0..2 {
            let w = 0.5 * strip.dq;
            energy += r * w * hs[a];
            grad[us[a]] += r * w;
            for b in 0..2 {
                energy -= 0.5 * hs[a] * sm[a][b] * hs[b];
                grad[us[a]] -= sm[a][b] * hs[b];
                if hessian {
                    trips.push(Triplet::new(us[a], us[b], -sm[a][b]));
                }
            }
        }
    }
    let hessian = if hessian {
        Some(SparseColMat::try_new_from_triplets(n, n, &trips).map_err(|_| LinalgError::Factorization)?)
    } else {
        None
    };
    Ok(Nonlinear { energy, grad, grad_lam, e_lam, hessian })
}

/// Residual of the hodograph system: interior F and surface G.
#[derive(Debug, Clone)]
pub struct Residual {
    /// Weak residual (gradient of the discrete potential) in unknown order.
    pub weak: Vec<f64>,
    /// F at nodes (i, j), 1 ≤ j < np, stored `i * (np - 1) + j - 1`.
    pub f: Vec<f64>,
    /// G at surface nodes.
    pub g: Vec<f64>,
}

impl Residual {
    pub fn f_max(&self) -> f64 {
        self.f.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn g_max(&self) -> f64 {
        self.g.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Linearization at a HeightField.
pub struct FrechetPair {
    /// Full weak operator: stiffness minus surface mass.
    pub a: SparseColMat<usize, f64>,
    /// Stiffness only (the conormal part N lives in its surface rows).
    pub stiff: SparseColMat<usize, f64>,
    /// Consistent surface mass.
    pub trace_mass: SparseColMat<usize, f64>,
    /// ∂(weak residual)/∂λ.
    pub grad_lam: Vec<f64>,
}

/// Discretization context: vorticity sampled at quadrature points.
#[derive(Debug, Clone)]
pub struct Hodograph {
    pub vm: Arc<VorticityModel>,
    pub np: usize,
    pub omega_gp: Vec<[f64; 2]>,
}

impl Hodograph {
    pub fn new(vm: Arc<VorticityModel>, np: usize) -> Self {
        let omega_gp = omega_at_gauss(&vm, np);
        Self { vm, np, omega_gp }
    }

    fn check(&self, hf: &HeightField) -> Result<(), HodographError> {
        hf.check_shape()?;
        if hf.np != self.np {
            return Err(HodographError::Shape { got: hf.np, expected: self.np });
        }
        Ok(())
    }

    pub fn nonlinear(&self, hf: &HeightField, hessian: bool) -> Result<Nonlinear, HodographError> {
        self.check(hf)?;
        assemble_nonlinear(&hf.strip(), &hf.h, hf.lambda, hf.r, &self.omega_gp, hessian)
    }

    /// Nonlinear residual (F in the interior, G on the surface).
    pub fn residual(&self, hf: &HeightField) -> Result<Residual, HodographError> {
        let nl = self.nonlinear(hf, false)?;
        let s = hf.strip();
        let np = hf.np;
        let mut f = vec![0.0; (hf.nq + 1) * (np - 1)];
        for i in 0..=hf.nq {
            for j in 1..np {
                f[i * (np - 1) + j - 1] = nl.grad[unknown(np, i, j)] / (s.wq(i) * s.wp(j));
            }
        }
        let g = (0..=hf.nq)
            .map(|i| -nl.grad[unknown(np, i, np)] / s.wq(i) + 0.5 * s.dp * f[i * (np - 1) + np - 2])
            .collect();
        Ok(Residual { weak: nl.grad, f, g })
    }

    pub fn frechet(&self, hf: &HeightField) -> Result<FrechetPair, HodographError> {
        self.check(hf)?;
        let s = hf.strip();
        check_hp(&s, &hf.h)?;
        let np = hf.np;
        let n = (hf.nq + 1) * np;
        let mut trips = Vec::new();
        for i in 0..s.nc {
            for j in 0..np {
                let t = element_terms(&s, &hf.h, hf.lambda, &self.omega_gp, i, j);
                for (k, &(ak, bk)) in LOCAL.iter().enumerate() {
                    for (l, &(al, bl)) in LOCAL.iter().enumerate() {
                        if j + bk > 0 && j + bl > 0 {
                            trips.push(Triplet::new(unknown(np, i + ak, j + bk), unknown(np, i + al, j + bl), t.stiff[k][l]));
                        }
                    }
                }
            }
        }
        let stiff = SparseColMat::try_new_from_triplets(n, n, &trips).map_err(|_| LinalgError::Factorization)?;
        let sm = segment_mass(&s);
        let mut tm = Vec::new();
        for i in 0..s.nc {
            for a in 0..2 {
                for b in 0..2 {
                    tm.push(Triplet::new(i + a, i + b, sm[a][b]));
                    trips.push(Triplet::new(unknown(np, i + a, np), unknown(np, i + b, np), -sm[a][b]));
                }
            }
        }
        let a = SparseColMat::try_new_from_triplets(n, n, &trips).map_err(|_| LinalgError::Factorization)?;
        let trace_mass =
            SparseColMat::try_new_from_triplets(hf.nq + 1, hf.nq + 1, &tm).map_err(|_| LinalgError::Factorization)?;
        let nl = self.nonlinear(hf, false)?;
        Ok(FrechetPair { a, stiff, trace_mass, grad_lam: nl.grad_lam })
    }

    /// Solves A w = f in the interior, w = g on p = 1, w = 0 on p = 0.
    ///
    /// `f` is a nodal grid function, `g` a surface trace.
    pub fn dirichlet_solve(&self, hf: &HeightField, f: &[f64], g: &[f64]) -> Result<Vec<f64>, HodographError> {
        self.check(hf)?;
        let s = hf.strip();
        check_hp(&s, &hf.h)?;
        let np = hf.np;
        if f.len() != s.n_nodes() {
            return Err(HodographError::Shape { got: f.len(), expected: s.n_nodes() });
        }
        if g.len() != hf.nq + 1 {
            return Err(HodographError::Shape { got: g.len(), expected: hf.nq + 1 });
        }
        let ni = np - 1;
        let n = (hf.nq + 1) * ni;
        let idx = |i: usize, j: usize| i * ni + j - 1;
        let mut trips = Vec::new();
        let mut rhs = vec![0.0; n];
        for i in 0..s.nc {
            for j in 0..np {
                let fm = element_forms(&s, &hf.h, hf.lambda, i, j);
                for (k, &(ak, bk)) in LOCAL.iter().enumerate() {
                    let jk = j + bk;
                    if jk == 0 || jk == np {
                        continue;
                    }
                    let row = idx(i + ak, jk);
                    for (l, &(al, bl)) in LOCAL.iter().enumerate() {
                        let jl = j + bl;
                        rhs[row] += fm.m[k][l] * f[s.node(i + al, jl)];
                        if jl == np {
                            rhs[row] -= fm.a[k][l] * g[i + al];
                        } else if jl > 0 {
                            trips.push(Triplet::new(row, idx(i + al, jl), fm.a[k][l]));
                        }
                    }
                }
            }
        }
        let k = SparseColMat::try_new_from_triplets(n, n, &trips).map_err(|_| LinalgError::Factorization)?;
        let lu = k.sp_lu().map_err(|_| LinalgError::Factorization)?;
        let b = Mat::<f64>::from_fn(n, 1, |r, _| rhs[r]);
        let x = lu.solve(&b);
        let res = &k * &x - &b;
        let rel = res.norm_l2() / b.norm_l2().max(1e-300);
        if b.norm_l2() > 0.0 && !(rel < 1e-10) {
            return Err(HodographError::SolverSingular(rel));
        }
        let mut w = vec![0.0; s.n_nodes()];
        for i in 0..=hf.nq {
            for j in 1..np {
                w[s.node(i, j)] = x[(idx(i, j), 0)];
            }
            w[s.node(i, np)] = g[i];
        }
        let wn = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let data = f.iter().chain(g).fold(0.0f64, |m, v| m.max(v.abs()));
        if data > 0.0 {
            log::debug!("dirichlet_solve: |w|/(|f|+|g|) = {:.3e}", wn / data);
        }
        Ok(w)
    }

    /// Dirichlet–Neumann operator: S g = (N w − w) on p = 1 with A w = 0, w = g.
    pub fn dn_operator(&self, hf: &HeightField, g: &[f64]) -> Result<Vec<f64>, HodographError> {
        let s = hf.strip();
        let w = self.dirichlet_solve(hf, &vec![0.0; s.n_nodes()], g)?;
        let np = hf.np;
        let mut weak = vec![0.0; hf.nq + 1];
        for i in 0..s.nc {
            let j = np - 1;
            let fm = element_forms(&s, &hf.h, hf.lambda, i, j);
            for (k, &(ak, bk)) in LOCAL.iter().enumerate() {
                if bk == 0 {
                    continue;
                }
                for (l, &(al, bl)) in LOCAL.iter().enumerate() {
                    weak[i + ak] += fm.a[k][l] * w[s.node(i + al, j + bl)];
                }
            }
        }
        let sm = segment_mass(&s);
        let mut trips = Vec::new();
        for i in 0..s.nc {
            for a in 0..2 {
                for b in 0..2 {
                    weak[i + a] -= sm[a][b] * g[i + b];
                    trips.push(Triplet::new(i + a, i + b, sm[a][b]));
                }
            }
        }
        let m = SparseColMat::try_new_from_triplets(hf.nq + 1, hf.nq + 1, &trips).map_err(|_| LinalgError::Factorization)?;
        let lu = m.sp_lu().map_err(|_| LinalgError::Factorization)?;
        let x = lu.solve(&Mat::<f64>::from_fn(hf.nq + 1, 1, |r, _| weak[r]));
        Ok((0..=hf.nq).map(|i| x[(i, 0)]).collect())
    }

    /// Newton solve of F(h + w) − F(h) = f, w = g on p = 1, w = 0 on p = 0, λ fixed.
    pub fn nonlinear_dirichlet_solve(
        &self,
        hf: &HeightField,
        f: &[f64],
        g: &[f64],
        delta: f64,
    ) -> Result<NonlinearDirichlet, HodographError> {
        self.check(hf)?;
        let s = hf.strip();
        let np = hf.np;
        let size = f.iter().fold(0.0f64, |m, v| m.max(v.abs())) + g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if size > delta || delta > DELTA_STAR {
            log::warn!("nonlinear_dirichlet_solve: data size {size:.3e} with delta {delta:.3e} (delta* = {DELTA_STAR:.1e})");
        }
        let base = self.nonlinear(hf, false)?.grad;
        // weak load M f at interior unknowns
        let mut load = vec![0.0; base.len()];
        for i in 0..s.nc {
            for j in 0..np {
                let fm = element_forms(&s, &hf.h, hf.lambda, i, j);
                for (k, &(ak, bk)) in LOCAL.iter().enumerate() {
                    if j + bk == 0 {
                        continue;
                    }
                    for (l, &(al, bl)) in LOCAL.iter().enumerate() {
                        load[unknown(np, i + ak, j + bk)] += fm.m[k][l] * f[s.node(i + al, j + bl)];
                    }
                }
            }
        }
        let interior: Vec<(usize, usize)> = (0..=hf.nq).flat_map(|i| (1..np).map(move |j| (i, j))).collect();
        let mut cur = hf.clone();
        for i in 0..=hf.nq {
            cur.h[s.node(i, np)] += g[i];
        }
        let eval = |field: &HeightField| -> Result<(Vec<f64>, SparseColMat<usize, f64>), HodographError> {
            let nl = self.nonlinear(field, true)?;
            let r: Vec<f64> = interior
                .iter()
                .map(|&(i, j)| {
                    let u = unknown(np, i, j);
                    nl.grad[u] - base[u] - load[u]
                })
                .collect();
            Ok((r, nl.hessian.expect("hessian requested")))
        };
        let norm = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut history = Vec::new();
        let (mut r, mut jac) = match eval(&cur) {
            Ok(v) => v,
            Err(HodographError::DegenerateHp { .. }) => {
                return Err(HodographError::NewtonDiverged { iterations: 0, residual: f64::INFINITY })
            }
            Err(e) => return Err(e),
        };
        history.push(norm(&r));
        let ni = interior.len();
        let map: Vec<usize> = interior.iter().map(|&(i, j)| unknown(np, i, j)).collect();
        let mut pos = vec![usize::MAX; (hf.nq + 1) * np];
        for (k, &u) in map.iter().enumerate() {
            pos[u] = k;
        }
        for it in 0..30 {
            if history[it] < 1e-13 {
                return Ok(NonlinearDirichlet { w: diff(&cur.h, &hf.h), iterations: it, history });
            }
            let mut trips = Vec::new();
            for (col, row, v) in triplets(&jac) {
                if pos[row] != usize::MAX && pos[col] != usize::MAX {
                    trips.push(Triplet::new(pos[row], pos[col], v));
                }
            }
            let kii = SparseColMat::try_new_from_triplets(ni, ni, &trips).map_err(|_| LinalgError::Factorization)?;
            let lu = kii.sp_lu().map_err(|_| LinalgError::Factorization)?;
            let dx = lu.solve(&Mat::<f64>::from_fn(ni, 1, |k, _| -r[k]));
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                let mut trial = cur.clone();
                for (k, &(i, j)) in interior.iter().enumerate() {
                    trial.h[s.node(i, j)] += step * dx[(k, 0)];
                }
                if let Ok((tr, tj)) = eval(&trial) {
                    if norm(&tr) < (1.0 - 1e-4 * step) * history[it] || history[it] < 1e-11 {
                        cur = trial;
                        r = tr;
                        jac = tj;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                return Err(HodographError::NewtonDiverged { iterations: it + 1, residual: history[it] });
            }
            history.push(norm(&r));
        }
        let last = *history.last().unwrap_or(&f64::INFINITY);
        if last < 1e-11 {
            return Ok(NonlinearDirichlet { w: diff(&cur.h, &hf.h), iterations: 30, history });
        }
        Err(HodographError::NewtonDiverged { iterations: 30, residual: last })
    }

    /// Reconstructs Ξ(X) and Ψ(X, Y) from the hodograph solution.
    pub fn to_physical(&self, hf: &HeightField, ny: usize) -> Result<Physical, HodographError> {
        self.check(hf)?;
        let s = hf.strip();
        check_hp(&s, &hf.h)?;
        let np = hf.np;
        let res = self.residual(hf)?;
        let x: Vec<f64> = (0..=hf.nq).map(|i| hf.q(i) / hf.lambda).collect();
        let xi = hf.surface();
        let top = xi.iter().fold(0.0f64, |m, &v| m.max(v));
        let y: Vec<f64> = (0..=ny).map(|k| top * k as f64 / ny as f64).collect();
        let ps: Vec<f64> = (0..=np).map(|j| j as f64 * s.dp).collect();
        let mut psi = vec![f64::NAN; (hf.nq + 1) * (ny + 1)];
        for i in 0..=hf.nq {
            let col: Vec<f64> = (0..=np).map(|j| hf.at(i, j)).collect();
            let slopes: Vec<f64> = (0..=np).map(|j| 1.0 / column_hp(&col, j, s.dp)).collect();
            let interp = MonotoneCubic::with_slopes(col.clone(), ps.clone(), slopes);
            for (k, &yk) in y.iter().enumerate() {
                if yk <= col[np] {
                    psi[i * (ny + 1) + k] = interp.eval(yk);
                }
            }
        }
        let fd: Vec<f64> = (0..=hf.nq)
            .map(|i| {
                let hq = if i == 0 || i == hf.nq {
                    0.0
                } else {
                    (hf.at(i + 1, np) - hf.at(i - 1, np)) / (2.0 * s.dq)
                };
                let col: Vec<f64> = (0..=np).map(|j| hf.at(i, j)).collect();
                let hp = column_hp(&col, np, s.dp);
                let l2 = hf.lambda * hf.lambda;
                (1.0 + l2 * hq * hq) / (2.0 * hp * hp) + col[np] - hf.r
            })
            .collect();
        Ok(Physical { x, xi, y, psi, bernoulli_discrete: res.g, bernoulli_pointwise: fd })
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Second-order one-sided or central h_p along a column.
pub(crate) fn column_hp(col: &[f64], j: usize, dp: f64) -> f64 {
    let n = col.len() - 1;
    if j == 0 {
        (-3.0 * col[0] + 4.0 * col[1] - col[2]) / (2.0 * dp)
    } else if j == n {
        (3.0 * col[n] - 4.0 * col[n - 1] + col[n - 2]) / (2.0 * dp)
    } else {
        (col[j + 1] - col[j - 1]) / (2.0 * dp)
    }
}

/// (column, row, value) entries of a sparse matrix.
pub fn triplets(m: &SparseColMat<usize, f64>) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    let sym = m.symbolic();
    let vals = m.val();
    for c in 0..m.ncols() {
        let range = sym.col_range(c);
        for (k, &r) in sym.row_idx()[range.clone()].iter().enumerate() {
            out.push((c, r, vals[range.start + k]));
        }
    }
    out
}

/// y = M x for a sparse matrix.
pub fn spmv(m: &SparseColMat<usize, f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; m.nrows()];
    for (c, r, v) in triplets(m) {
        y[r] += v * x[c];
    }
    y
}

pub fn to_dense(m: &SparseColMat<usize, f64>) -> Mat<f64> {
    let mut d = Mat::<f64>::zeros(m.nrows(), m.ncols());
    for (c, r, v) in triplets(m) {
        d[(r, c)] += v;
    }
    d
}

#[derive(Debug, Clone)]
pub struct NonlinearDirichlet {
    pub w: Vec<f64>,
    pub iterations: usize,
    /// Max-norm residual per iteration.
    pub history: Vec<f64>,
}

/// Physical-plane reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Physical {
    /// X at surface nodes (half period).
    pub x: Vec<f64>,
    /// Ξ(X) at the same nodes.
    pub xi: Vec<f64>,
    /// Y levels of the Ψ samples.
    pub y: Vec<f64>,
    /// Ψ(X_i, Y_k) stored `i * y.len() + k`, NaN above the surface.
    pub psi: Vec<f64>,
    /// Bernoulli residual in the discrete (weak, consistent) form.
    pub bernoulli_discrete: Vec<f64>,
    /// Bernoulli residual ½|∇Ψ|² + Ξ − R by pointwise differences.
    pub bernoulli_pointwise: Vec<f64>,
}

/// Discrete uniform stream: the q-independent exact zero of the discrete system.
pub fn discrete_uniform(stream: &UniformStream, np: usize) -> Result<Vec<f64>, HodographError> {
    let vm = stream.vorticity();
    let dp = 1.0 / np as f64;
    let mut h: Vec<f64> = (0..=np).map(|j| stream.h(j as f64 * dp)).collect();
    let omega = omega_at_gauss(vm, np);
    for _ in 0..50 {
        let mut g = vec![0.0; np + 1];
        let mut diag = vec![0.0; np + 1];
        let mut off = vec![0.0; np];
        for e in 0..np {
            let d = (h[e + 1] - h[e]) / dp;
            if !(d > MIN_HP) {
                return Err(HodographError::DegenerateHp { min_hp: d, i: 0, j: e });
            }
            let t = -0.5 / (d * d);
            g[e + 1] += t;
            g[e] -= t;
            let tt = 1.0 / (d * d * d * dp);
            diag[e] += tt;
            diag[e + 1] += tt;
            off[e] -= tt;
            for (k, &eta) in GAUSS.iter().enumerate() {
                let w = 0.5 * dp * omega[e][k];
                g[e] += w * (1.0 - eta);
                g[e + 1] += w * eta;
            }
        }
        g[np] += stream.r - h[np];
        diag[np] -= 1.0;
        let a = Mat::<f64>::from_fn(np, np, |r, c| {
            let (r, c) = (r + 1, c + 1);
            if r == c {
                diag[r]
            } else if r + 1 == c {
                off[r]
            } else if c + 1 == r {
                off[c]
            } else {
                0.0
            }
        });
        let rhs = Mat::<f64>::from_fn(np, 1, |r, _| -g[r + 1]);
        let dx = a.partial_piv_lu().solve(&rhs);
        let mut step = 0.0f64;
        for j in 1..=np {
            h[j] += dx[(j - 1, 0)];
            step = step.max(dx[(j - 1, 0)].abs());
        }
        if step < 1e-15 {
            break;
        }
    }
    Ok(h)
}

/// Column forms of a q-independent field on p-nodes 1..np: P_a = Σ M_e/h_p,
/// P_b = Σ K_e/h_p³ − e_N e_Nᵀ and the plain mass M_p.
pub fn column_forms(col: &[f64]) -> (Mat<f64>, Mat<f64>, Mat<f64>) {
    let np = col.len() - 1;
    let dp = 1.0 / np as f64;
    let mut pa = Mat::<f64>::zeros(np + 1, np + 1);
    let mut pb = Mat::<f64>::zeros(np + 1, np + 1);
    let mut mp = Mat::<f64>::zeros(np + 1, np + 1);
    for e in 0..np {
        let d = (col[e + 1] - col[e]) / dp;
        for a in 0..2 {
            for b in 0..2 {
                let m = if a == b { dp / 3.0 } else { dp / 6.0 };
                let k = if a == b { 1.0 / dp } else { -1.0 / dp };
                pa[(e + a, e + b)] += m / d;
                pb[(e + a, e + b)] += k / (d * d * d);
                mp[(e + a, e + b)] += m;
            }
        }
    }
    pb[(np, np)] -= 1.0;
    let cut = |m: &Mat<f64>| Mat::<f64>::from_fn(np, np, |r, c| m[(r + 1, c + 1)]);
    (cut(&pa), cut(&pb), cut(&mp))
}

/// Q1 symbol κ_h² of cos(τq) on spacing `dq`.
pub fn q1_symbol(tau: f64, dq: f64) -> f64 {
    let th = tau * dq;
    6.0 * (1.0 - th.cos()) / (dq * dq * (2.0 + th.cos()))
}

/// Wavenumber at which the discrete flat operator on an `nq`-cell half period is singular.
///
/// Returns (κ_root, τ_grid): the separable root of det(κ²P_a + P_b) and the
/// q-wavenumber whose Q1 symbol reproduces κ_root.
pub fn grid_tau_star(h_flat: &[f64], nq: usize) -> Result<(f64, f64), HodographError> {
    let (pa, pb, _) = column_forms(h_flat);
    let e = gen_eigh(&pb, &pa, false)?;
    let kappa = (-e.values[0]).sqrt();
    let theta = std::f64::consts::PI / nq as f64;
    let c = 6.0 * (1.0 - theta.cos()) / (theta * theta * (2.0 + theta.cos()));
    Ok((kappa, kappa / c.sqrt()))
}

/// Flat HeightField of the discrete uniform stream on a half period `period / 2`.
pub fn flat_field(stream: &UniformStream, nq: usize, np: usize, period: f64) -> Result<HeightField, HodographError> {
    if nq < 8 || np < 8 {
        return Err(HodographError::GridTooCoarse);
    }
    let col = discrete_uniform(stream, np)?;
    let mut h = Vec::with_capacity((nq + 1) * (np + 1));
    for _ in 0..=nq {
        h.extend_from_slice(&col);
    }
    Ok(HeightField { nq, np, period, lambda: 1.0, r: stream.r, t_label: 0.0, h })
}
