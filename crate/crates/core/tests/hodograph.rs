use std::f64::consts::PI;
use std::sync::Arc;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stokeslab::dispersion::find_tau_star;
use stokeslab::hodograph::*;
use stokeslab::linalg::gen_eigh;
use stokeslab::stream::*;

fn vm(spec: VorticitySpec) -> Arc<VorticityModel> {
    Arc::new(primitive(spec).unwrap())
}

fn irrotational() -> Arc<VorticityModel> {
    vm(VorticitySpec::Constant { value: 0.0 })
}

fn flat(model: Arc<VorticityModel>, s: f64, nq: usize, np: usize) -> (UniformStream, HeightField) {
    let st = solve_uniform_stream(model, s).unwrap();
    let tau = find_tau_star(&st).map(|d| d.tau_star).unwrap_or(1.0);
    let hf = flat_field(&st, nq, np, 2.0 * PI / tau).unwrap();
    (st, hf)
}

/// Flat field plus a smooth even bump vanishing on p = 0.
fn wavy(model: Arc<VorticityModel>, s: f64, nq: usize, np: usize, eps: f64) -> HeightField {
    let (_, mut hf) = flat(model, s, nq, np);
    let k = 2.0 * PI / hf.period;
    for i in 0..=nq {
        let q = hf.q(i);
        for j in 0..=np {
            let p = j as f64 / np as f64;
            hf.h[i * (np + 1) + j] += eps * (k * q).cos() * (p * p + 0.3 * p);
        }
    }
    hf.lambda = 1.07;
    hf
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn uniform_stream_is_a_discrete_solution() {
    let (_, hf) = flat(irrotational(), 0.539, 64, 32);
    let ctx = Hodograph::new(irrotational(), 32);
    let res = ctx.residual(&hf).unwrap();
    assert!(res.f_max() < 1e-10 && res.g_max() < 1e-10);
    let model = vm(VorticitySpec::Sine { amplitude: 0.4 });
    let (st, mut hf) = flat(model.clone(), 0.9, 32, 32);
    let ctx = Hodograph::new(model, 32);
    hf.lambda = 1.7;
    let res = ctx.residual(&hf).unwrap();
    assert!(res.f_max() < 1e-10 && res.g_max() < 1e-10);
    for j in 0..=32 {
        assert!((hf.at(0, j) - st.h(j as f64 / 32.0)).abs() < 1e-3);
    }
}

#[test]
fn perturbed_residual_is_linear_in_amplitude() {
    let ctx = Hodograph::new(irrotational(), 16);
    let small = ctx.residual(&wavy(irrotational(), 0.539, 16, 16, 1e-3)).unwrap();
    let double = ctx.residual(&wavy(irrotational(), 0.539, 16, 16, 2e-3)).unwrap();
    let f1 = small.f_max();
    assert!(f1 > 1e-5 && f1 < 1e-1);
    assert!((double.f_max() / f1 - 2.0).abs() < 0.05);
}

#[test]
fn degenerate_hp_is_rejected() {
    let (_, mut hf) = flat(irrotational(), 0.539, 16, 16);
    let ctx = Hodograph::new(irrotational(), 16);
    hf.h[3 * 17 + 9] = hf.h[3 * 17 + 8];
    hf.h[4 * 17 + 9] = hf.h[4 * 17 + 8];
    assert!(matches!(ctx.residual(&hf), Err(HodographError::DegenerateHp { .. })));
}

struct Manufactured {
    lam: f64,
    k: f64,
    b: f64,
}

impl Manufactured {
    fn a(&self, q: f64) -> (f64, f64, f64) {
        let c = (self.k * q).cos();
        let s = (self.k * q).sin();
        (1.0 + 0.1 * c, -0.1 * self.k * s, -0.1 * self.k * self.k * c)
    }

    fn h(&self, q: f64, p: f64) -> f64 {
        self.a(q).0 * p + self.b * p * p
    }

    /// Interior operator and Bernoulli function for h = a(q)p + bp².
    fn fg(&self, q: f64, p: f64, omega: f64, r: f64) -> (f64, f64) {
        let (a, a1, a2) = self.a(q);
        let l2 = self.lam * self.lam;
        let (hq, hp, hqq, hqp, hpp) = (a1 * p, a + 2.0 * self.b * p, a2 * p, a1, 2.0 * self.b);
        let dk = l2 * hq * hqp / (hp * hp) - (1.0 + l2 * hq * hq) * hpp / (hp * hp * hp);
        let dflux = hqq / hp - hq * hqp / (hp * hp);
        let f = dk - l2 * dflux + omega;
        let g = (1.0 + l2 * hq * hq) / (2.0 * hp * hp) + self.h(q, p) - r;
        (f, g)
    }
}

fn manufactured_error(n: usize) -> (f64, f64) {
    let model = vm(VorticitySpec::Sine { amplitude: 0.3 });
    let ms = Manufactured { lam: 1.3, k: 2.0 * PI / 4.0, b: 0.2 };
    let r = 2.1;
    let mut hf = HeightField { nq: n, np: n, period: 4.0, lambda: ms.lam, r, t_label: 0.0, h: vec![0.0; (n + 1) * (n + 1)] };
    for i in 0..=n {
        for j in 0..=n {
            hf.h[i * (n + 1) + j] = ms.h(hf.q(i), j as f64 / n as f64);
        }
    }
    let ctx = Hodograph::new(model.clone(), n);
    let res = ctx.residual(&hf).unwrap();
    let (mut ef, mut eg) = (0.0f64, 0.0f64);
    for i in 0..=n {
        for j in 1..n {
            let p = j as f64 / n as f64;
            let (f, _) = ms.fg(hf.q(i), p, model.omega(p), r);
            ef = ef.max((res.f[i * (n - 1) + j - 1] - f).abs());
        }
        let (_, g) = ms.fg(hf.q(i), 1.0, model.omega(1.0), r);
        eg = eg.max((res.g[i] - g).abs());
    }
    (ef, eg)
}

#[test]
fn manufactured_residual_converges_at_second_order() {
    let (f1, g1) = manufactured_error(16);
    let (f2, g2) = manufactured_error(32);
    assert!(f1 < 5e-2 && g1 < 5e-2, "{f1} {g1}");
    assert!(f1 / f2 > 3.0, "interior ratio {}", f1 / f2);
    assert!(g1 / g2 > 3.0, "surface ratio {}", g1 / g2);
}

#[test]
fn frechet_is_exactly_symmetric() {
    let hf = wavy(vm(VorticitySpec::Sine { amplitude: 0.2 }), 0.8, 12, 10, 0.05);
    let ctx = Hodograph::new(vm(VorticitySpec::Sine { amplitude: 0.2 }), 10);
    let fp = ctx.frechet(&hf).unwrap();
    let a = to_dense(&fp.a);
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            assert_eq!(a[(r, c)], a[(c, r)]);
        }
    }
}

#[test]
fn frechet_matches_directional_derivative() {
    let model = vm(VorticitySpec::Sine { amplitude: 0.2 });
    let hf = wavy(model.clone(), 0.8, 12, 10, 0.05);
    let ctx = Hodograph::new(model, 10);
    let fp = ctx.frechet(&hf).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x0 = hf.unknowns();
    for _ in 0..3 {
        let v: Vec<f64> = (0..x0.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eps = 1e-6;
        let shifted = |sgn: f64| {
            let mut t = hf.clone();
            let x: Vec<f64> = x0.iter().zip(&v).map(|(a, b)| a + sgn * eps * b).collect();
            t.set_unknowns(&x);
            ctx.residual(&t).unwrap().weak
        };
        let (up, dn) = (shifted(1.0), shifted(-1.0));
        let fd: Vec<f64> = up.iter().zip(&dn).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let av = spmv(&fp.a, &v);
        let err: Vec<f64> = fd.iter().zip(&av).map(|(a, b)| a - b).collect();
        assert!(max_abs(&err) / max_abs(&av) < 1e-5, "{}", max_abs(&err) / max_abs(&av));
    }
}

#[test]
fn gradient_is_derivative_of_the_potential() {
    let model = vm(VorticitySpec::Affine { a: 0.1, b: 0.3 });
    let hf = wavy(model.clone(), 1.1, 10, 10, 0.05);
    let ctx = Hodograph::new(model, 10);
    let nl = ctx.nonlinear(&hf, false).unwrap();
    let x0 = hf.unknowns();
    let eps = 1e-5;
    for k in [0, 7, 33, 59, x0.len() - 1] {
        let energy = |d: f64| {
            let mut t = hf.clone();
            let mut x = x0.clone();
            x[k] += d;
            t.set_unknowns(&x);
            ctx.nonlinear(&t, false).unwrap().energy
        };
        let fd = (energy(eps) - energy(-eps)) / (2.0 * eps);
        assert!((fd - nl.grad[k]).abs() < 1e-8 * (1.0 + nl.grad[k].abs()), "node {k}");
    }
    let at = |lam: f64| {
        let mut t = hf.clone();
        t.lambda = lam;
        ctx.nonlinear(&t, false).unwrap()
    };
    let (up, dn) = (at(hf.lambda + eps), at(hf.lambda - eps));
    assert!(((up.energy - dn.energy) / (2.0 * eps) - nl.e_lam).abs() < 1e-8);
    for k in 0..x0.len() {
        let fd = (up.grad[k] - dn.grad[k]) / (2.0 * eps);
        assert!((fd - nl.grad_lam[k]).abs() < 1e-7 * (1.0 + fd.abs()));
    }
}

/// Independent evaluation of the bilinear form of the linearization.
fn bilinear_form(hf: &HeightField, u: &[f64], v: &[f64]) -> f64 {
    let (nq, np) = (hf.nq, hf.np);
    let dq = 0.5 * hf.period / nq as f64;
    let dp = 1.0 / np as f64;
    let g = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    let node = |i: usize, j: usize| i * (np + 1) + j;
    let grad = |f: &[f64], i: usize, j: usize, x: f64, y: f64| {
        let (a, b, c, d) = (f[node(i, j)], f[node(i + 1, j)], f[node(i, j + 1)], f[node(i + 1, j + 1)]);
        (((b - a) * (1.0 - y) + (d - c) * y) / dq, ((c - a) * (1.0 - x) + (d - b) * x) / dp)
    };
    let l2 = hf.lambda * hf.lambda;
    let mut total = 0.0;
    for i in 0..nq {
        for j in 0..np {
            for &x in &g {
                for &y in &g {
                    let (hq, hp) = grad(&hf.h, i, j, x, y);
                    let (uq, up) = grad(u, i, j, x, y);
                    let (vq, vp) = grad(v, i, j, x, y);
                    let kqq = l2 / hp;
                    let kqp = -l2 * hq / (hp * hp);
                    let kpp = (1.0 + l2 * hq * hq) / hp.powi(3);
                    total += 0.25 * dq * dp * (kqq * uq * vq + kqp * (uq * vp + up * vq) + kpp * up * vp);
                }
            }
        }
    }
    for i in 0..nq {
        let (a, b) = (u[node(i, np)], u[node(i + 1, np)]);
        let (c, d) = (v[node(i, np)], v[node(i + 1, np)]);
        total -= dq * (a * c / 3.0 + (a * d + b * c) / 6.0 + b * d / 3.0);
    }
    total
}

#[test]
fn green_identity_against_independent_quadrature() {
    let model = vm(VorticitySpec::Sine { amplitude: 0.2 });
    let hf = wavy(model.clone(), 0.8, 10, 8, 0.05);
    let ctx = Hodograph::new(model, 8);
    let fp = ctx.frechet(&hf).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = hf.h.len();
    for _ in 0..3 {
        let mut u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 0..=hf.nq {
            u[i * (hf.np + 1)] = 0.0;
            v[i * (hf.np + 1)] = 0.0;
        }
        let mut tu = hf.clone();
        tu.h = u.clone();
        let mut tv = hf.clone();
        tv.h = v.clone();
        let (uu, vv) = (tu.unknowns(), tv.unknowns());
        let au = spmv(&fp.a, &uu);
        let lhs: f64 = au.iter().zip(&vv).map(|(a, b)| a * b).sum();
        let rhs = bilinear_form(&hf, &u, &v);
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }
}

#[test]
fn residual_preserves_mirror_symmetry() {
    let model = vm(VorticitySpec::Sine { amplitude: 0.2 });
    let mut hf = wavy(model.clone(), 0.8, 16, 8, 0.0);
    let np = hf.np;
    let k = 4.0 * PI / hf.period;
    for i in 0..=hf.nq {
        for j in 0..=np {
            let p = j as f64 / np as f64;
            hf.h[i * (np + 1) + j] += 0.03 * (k * hf.q(i)).cos() * p * p;
        }
    }
    for i in 0..=hf.nq / 2 {
        for j in 0..=np {
            let v = hf.h[i * (np + 1) + j];
            hf.h[(hf.nq - i) * (np + 1) + j] = v;
        }
    }
    let ctx = Hodograph::new(model, np);
    let res = ctx.residual(&hf).unwrap();
    for i in 0..=hf.nq {
        assert!((res.g[i] - res.g[hf.nq - i]).abs() < 1e-12);
        for j in 0..np - 1 {
            assert!((res.f[i * (np - 1) + j] - res.f[(hf.nq - i) * (np - 1) + j]).abs() < 1e-11);
        }
    }
}

fn plain_mass(nq: usize, np: usize, dq: f64) -> Mat<f64> {
    let dp = 1.0 / np as f64;
    let n = (nq + 1) * np;
    let mut m = Mat::<f64>::zeros(n, n);
    let e = |d: f64| [[d / 3.0, d / 6.0], [d / 6.0, d / 3.0]];
    let (mq, mp) = (e(dq), e(dp));
    for i in 0..nq {
        for j in 0..np {
            for a in 0..4 {
                for b in 0..4 {
                    let (ia, ja) = (i + a % 2, j + a / 2);
                    let (ib, jb) = (i + b % 2, j + b / 2);
                    if ja == 0 || jb == 0 {
                        continue;
                    }
                    m[(ia * np + ja - 1, ib * np + jb - 1)] += mq[a % 2][b % 2] * mp[a / 2][b / 2];
                }
            }
        }
    }
    m
}

/// Column matrices P_a = Σ M_e/H_p, P_b = Σ K_e/H_p³ − e_N e_Nᵀ and the mass M_p on p-nodes 1..np.
fn column_forms(col: &[f64]) -> (Mat<f64>, Mat<f64>, Mat<f64>) {
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
                pb[(e + a, e + b)] += k / d.powi(3);
                mp[(e + a, e + b)] += m;
            }
        }
    }
    pb[(np, np)] -= 1.0;
    let cut = |m: &Mat<f64>| Mat::<f64>::from_fn(np, np, |r, c| m[(r + 1, c + 1)]);
    (cut(&pa), cut(&pb), cut(&mp))
}

#[test]
fn flat_spectrum_separates() {
    let (nq, np) = (12, 10);
    let (_, hf) = flat(irrotational(), 0.539, nq, np);
    let ctx = Hodograph::new(irrotational(), np);
    let a = to_dense(&ctx.frechet(&hf).unwrap().a);
    let dq = hf.strip().dq;
    let m = plain_mass(nq, np, dq);
    let full = gen_eigh(&a, &m, false).unwrap().values;
    let col: Vec<f64> = (0..=np).map(|j| hf.at(0, j)).collect();
    let (pa, pb, mp) = column_forms(&col);
    let mut oracle = Vec::new();
    for k in 0..=nq {
        let th = PI * k as f64 / nq as f64;
        let kh2 = 6.0 * (1.0 - th.cos()) / (dq * dq * (2.0 + th.cos()));
        let op = Mat::<f64>::from_fn(np, np, |r, c| kh2 * pa[(r, c)] + pb[(r, c)]);
        oracle.extend(gen_eigh(&op, &mp, false).unwrap().values);
    }
    oracle.sort_by(f64::total_cmp);
    assert_eq!(oracle.len(), full.len());
    for (x, y) in full.iter().zip(&oracle) {
        assert!((x - y).abs() < 1e-6 * (1.0 + y.abs()), "{x} vs {y}");
    }
}

#[test]
fn grid_period_converges_to_dispersion_root() {
    let st = solve_uniform_stream(irrotational(), 0.539).unwrap();
    let tau = find_tau_star(&st).unwrap().tau_star;
    let mut errs = Vec::new();
    for &n in &[16usize, 32, 64] {
        let col = discrete_uniform(&st, n).unwrap();
        let (_, tau_grid) = grid_tau_star(&col, n).unwrap();
        errs.push((tau_grid - tau).abs());
    }
    assert!(errs[2] < 2e-2 * tau, "{errs:?}");
    assert!(errs[0] / errs[2] > 10.0, "{errs:?}");
}

#[test]
fn dirichlet_zero_data_gives_zero() {
    let model = vm(VorticitySpec::Sine { amplitude: 0.2 });
    let hf = wavy(model.clone(), 0.8, 12, 10, 0.05);
    let ctx = Hodograph::new(model, 10);
    let w = ctx.dirichlet_solve(&hf, &vec![0.0; hf.h.len()], &vec![0.0; 13]).unwrap();
    assert!(w.iter().all(|&v| v == 0.0));
}

#[test]
fn dirichlet_random_data_is_solved() {
    let model = vm(VorticitySpec::Sine { amplitude: 0.2 });
    let hf = wavy(model.clone(), 0.8, 12, 10, 0.05);
    let ctx = Hodograph::new(model, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f: Vec<f64> = (0..hf.h.len()).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let g: Vec<f64> = (0..=12).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let w = ctx.dirichlet_solve(&hf, &f, &g).unwrap();
    for i in 0..=12 {
        assert_eq!(w[i * 11], 0.0);
        assert_eq!(w[i * 11 + 10], g[i]);
    }
}

#[test]
fn dirichlet_separable_solution() {
    let s = 0.539;
    let (nq, np) = (64, 64);
    let (_, hf) = flat(irrotational(), s, nq, np);
    let ctx = Hodograph::new(irrotational(), np);
    let tau = 2.0 * PI / hf.period;
    let g: Vec<f64> = (0..=nq).map(|i| (tau * hf.q(i)).cos()).collect();
    let w = ctx.dirichlet_solve(&hf, &vec![0.0; hf.h.len()], &g).unwrap();
    let mut err = 0.0f64;
    for i in 0..=nq {
        for j in 0..=np {
            let p = j as f64 / np as f64;
            let exact = g[i] * (tau * p / s).sinh() / (tau / s).sinh();
            err = err.max((w[i * (np + 1) + j] - exact).abs());
        }
    }
    assert!(err < 2e-3, "{err}");
}

fn dn_multiplier(s: f64, kappa: f64) -> f64 {
    if kappa == 0.0 {
        s.powi(3) - 1.0
    } else {
        s * s * kappa / (kappa / s).tanh() - 1.0
    }
}

#[test]
fn dn_operator_symbol_and_self_adjointness() {
    let s = 0.539;
    let (nq, np) = (48, 64);
    let (_, hf) = flat(irrotational(), s, nq, np);
    let ctx = Hodograph::new(irrotational(), np);
    let tau = 2.0 * PI / hf.period;
    for k in 0..3 {
        let g: Vec<f64> = (0..=nq).map(|i| (k as f64 * tau * hf.q(i)).cos()).collect();
        let sg = ctx.dn_operator(&hf, &g).unwrap();
        let m = dn_multiplier(s, k as f64 * tau);
        for i in 0..=nq {
            assert!((sg[i] - m * g[i]).abs() < 2e-2 * (1.0 + m.abs()), "k={k}: {} vs {}", sg[i], m * g[i]);
        }
    }
    let model = vm(VorticitySpec::Sine { amplitude: 0.2 });
    let hf = wavy(model.clone(), 0.8, 12, 10, 0.05);
    let ctx = Hodograph::new(model, 10);
    let tm = to_dense(&ctx.frechet(&hf).unwrap().trace_mass);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g1: Vec<f64> = (0..=12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g2: Vec<f64> = (0..=12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (s1, s2) = (ctx.dn_operator(&hf, &g1).unwrap(), ctx.dn_operator(&hf, &g2).unwrap());
    let ip = |a: &[f64], b: &[f64]| {
        let mut t = 0.0;
        for r in 0..a.len() {
            for c in 0..b.len() {
                t += a[r] * tm[(r, c)] * b[c];
            }
        }
        t
    };
    assert!((ip(&s1, &g2) - ip(&g1, &s2)).abs() < 1e-10);
}

#[test]
fn dn_multiplier_vanishes_at_the_dispersion_root() {
    let s = 0.539;
    let st = solve_uniform_stream(irrotational(), s).unwrap();
    let tau = find_tau_star(&st).unwrap().tau_star;
    assert!(dn_multiplier(s, tau).abs() < 1e-9);
}

#[test]
fn nonlinear_dirichlet_behaviour() {
    let model = vm(VorticitySpec::Sine { amplitude: 0.2 });
    let (_, hf) = flat(model.clone(), 0.8, 16, 16);
    let ctx = Hodograph::new(model, 16);
    let zero = ctx.nonlinear_dirichlet_solve(&hf, &vec![0.0; hf.h.len()], &vec![0.0; 17], DELTA_STAR).unwrap();
    assert!(zero.iterations <= 1);
    assert!(zero.w.iter().all(|&v| v == 0.0));

    let tau = 2.0 * PI / hf.period;
    let g: Vec<f64> = (0..=16).map(|i| 1e-4 * (tau * hf.q(i)).cos()).collect();
    let sol = ctx.nonlinear_dirichlet_solve(&hf, &vec![0.0; hf.h.len()], &g, DELTA_STAR).unwrap();
    let wmax = max_abs(&sol.w);
    assert!(wmax <= 2e-4 && wmax >= 1e-4 * (1.0 - 1e-9), "{wmax}");
    let hist = &sol.history;
    let tail: Vec<f64> = hist.iter().copied().filter(|&r| r > 1e-14).collect();
    assert!(tail.len() >= 3, "{hist:?}");
    let n = tail.len();
    let slope = (tail[n - 1].ln() - tail[n - 2].ln()) / (tail[n - 2].ln() - tail[n - 3].ln());
    assert!(slope >= 1.9, "{slope} from {hist:?}");

    let big: Vec<f64> = (0..=16).map(|i| (tau * hf.q(i)).cos()).collect();
    assert!(matches!(
        ctx.nonlinear_dirichlet_solve(&hf, &vec![0.0; hf.h.len()], &big, DELTA_STAR),
        Err(HodographError::NewtonDiverged { .. })
    ));
}

#[test]
fn physical_reconstruction_of_uniform_stream() {
    let model = vm(VorticitySpec::Sine { amplitude: 0.3 });
    let (st, hf) = flat(model.clone(), 0.9, 16, 64);
    let ctx = Hodograph::new(model, 64);
    let ph = ctx.to_physical(&hf, 20).unwrap();
    for &xi in &ph.xi {
        assert!((xi - st.d).abs() < 1e-4);
    }
    for i in 0..=16 {
        for (k, &y) in ph.y.iter().enumerate() {
            let v = ph.psi[i * 21 + k];
            if v.is_finite() {
                assert!((v - st.u(y)).abs() < 1e-4, "{v} vs {}", st.u(y));
            }
        }
    }
    assert!(max_abs(&ph.bernoulli_discrete) < 1e-6);
    assert!(max_abs(&ph.bernoulli_pointwise) < 1e-3);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let model = vm(VorticitySpec::Sine { amplitude: 0.2 });
    let mut hf = wavy(model, 0.8, 12, 10, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for v in hf.h.iter_mut() {
        *v += rng.gen_range(-1e-7..1e-7);
    }
    hf.lambda = 1.0 + 1e-13;
    hf.t_label = 0.123456789012345;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hf.json");
    hf.save(&path).unwrap();
    let back = HeightField::load(&path).unwrap();
    assert_eq!(back, hf);
    assert!(back.h.iter().zip(&hf.h).all(|(a, b)| a.to_bits() == b.to_bits()));
}
