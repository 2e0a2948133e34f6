//! Bilinear elements on a rectangular (q, p) strip.
//!
//! Nodes are stored column by column: node `(i, j)` (q-index `i`, p-index `j`)
//! lives at `i * (np + 1) + j`. Row `j = 0` is the bottom, `j = np` the surface.

use crate::stream::VorticityModel;

const G: f64 = 0.288_675_134_594_812_9; // 1/(2√3)
pub const GAUSS: [f64; 2] = [0.5 - G, 0.5 + G];

/// Minimal admissible h_p at a quadrature point.
pub const MIN_HP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strip {
    /// Number of cells along q.
    pub nc: usize,
    /// Number of cells along p.
    pub np: usize,
    pub dq: f64,
    pub dp: f64,
}

/// Element node offsets (q, p) in local order.
pub const LOCAL: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

impl Strip {
    pub fn new(nc: usize, np: usize, dq: f64) -> Self {
        Self { nc, np, dq, dp: 1.0 / np as f64 }
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i * (self.np + 1) + j
    }

    pub fn n_nodes(&self) -> usize {
        (self.nc + 1) * (self.np + 1)
    }

    /// Trapezoid weight of q-node `i`.
    pub fn wq(&self, i: usize) -> f64 {
        if i == 0 || i == self.nc {
            0.5 * self.dq
        } else {
            self.dq
        }
    }

    pub fn wp(&self, j: usize) -> f64 {
        if j == 0 || j == self.np {
            0.5 * self.dp
        } else {
            self.dp
        }
    }
}

/// ω sampled at the two Gauss abscissae of every p-cell.
pub fn omega_at_gauss(vm: &VorticityModel, np: usize) -> Vec<[f64; 2]> {
    let dp = 1.0 / np as f64;
    (0..np)
        .map(|j| [vm.omega((j as f64 + GAUSS[0]) * dp), vm.omega((j as f64 + GAUSS[1]) * dp)])
        .collect()
}

struct Point {
    w: f64,
    n: [f64; 4],
    dq: [f64; 4],
    dp: [f64; 4],
    hq: f64,
    hp: f64,
    hv: f64,
    eta: usize,
}

fn points(s: &Strip, h: &[f64], i: usize, j: usize) -> [Point; 4] {
    let v = LOCAL.map(|(a, b)| h[s.node(i + a, j + b)]);
    let w = 0.25 * s.dq * s.dp;
    let mk = |xi: f64, eta: f64, e: usize| {
        let n = [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), (1.0 - xi) * eta, xi * eta];
        let dq = [-(1.0 - eta) / s.dq, (1.0 - eta) / s.dq, -eta / s.dq, eta / s.dq];
        let dp = [-(1.0 - xi) / s.dp, -xi / s.dp, (1.0 - xi) / s.dp, xi / s.dp];
        let hq = (0..4).map(|k| dq[k] * v[k]).sum();
        let hp = (0..4).map(|k| dp[k] * v[k]).sum();
        let hv = (0..4).map(|k| n[k] * v[k]).sum();
        Point { w, n, dq, dp, hq, hp, hv, eta: e }
    };
    [
        mk(GAUSS[0], GAUSS[0], 0),
        mk(GAUSS[1], GAUSS[0], 0),
        mk(GAUSS[0], GAUSS[1], 1),
        mk(GAUSS[1], GAUSS[1], 1),
    ]
}

/// Smallest h_p over all quadrature points, with its location.
pub fn min_hp(s: &Strip, h: &[f64]) -> (f64, usize, usize) {
    let mut best = (f64::INFINITY, 0, 0);
    for i in 0..s.nc {
        for j in 0..s.np {
            for p in points(s, h, i, j) {
                if p.hp < best.0 {
                    best = (p.hp, i, j);
                }
            }
        }
    }
    best
}

/// Element contributions of the discrete potential and its derivatives.
#[derive(Debug, Clone, Default)]
pub struct ElementTerms {
    pub energy: f64,
    pub grad: [f64; 4],
    /// ∂grad/∂λ
    pub grad_lam: [f64; 4],
    /// ∂E/∂λ
    pub e_lam: f64,
    /// Hessian: the stiffness of the linearized operator.
    pub stiff: [[f64; 4]; 4],
}

pub fn element_terms(s: &Strip, h: &[f64], lam: f64, omega: &[[f64; 2]], i: usize, j: usize) -> ElementTerms {
    let mut t = ElementTerms::default();
    let l2 = lam * lam;
    for p in points(s, h, i, j) {
        let (a, b) = (p.hq, p.hp);
        let om = omega[j][p.eta];
        t.energy += p.w * ((1.0 + l2 * a * a) / (2.0 * b) + om * p.hv);
        let ka = l2 * a / b;
        let kb = -(1.0 + l2 * a * a) / (2.0 * b * b);
        let kla = 2.0 * lam * a / b;
        let klb = -lam * a * a / (b * b);
        t.e_lam += p.w * lam * a * a / b;
        let kqq = l2 / b;
        let kqp = -l2 * a / (b * b);
        let kpp = (1.0 + l2 * a * a) / (b * b * b);
        for k in 0..4 {
            t.grad[k] += p.w * (ka * p.dq[k] + kb * p.dp[k] + om * p.n[k]);
            t.grad_lam[k] += p.w * (kla * p.dq[k] + klb * p.dp[k]);
            for l in k..4 {
                t.stiff[k][l] += p.w * bilinear(kqq, kqp, kpp, &p, k, l);
            }
        }
    }
    for k in 0..4 {
        for l in 0..k {
            t.stiff[k][l] = t.stiff[l][k];
        }
    }
    t
}

fn bilinear(kqq: f64, kqp: f64, kpp: f64, p: &Point, k: usize, l: usize) -> f64 {
    kqq * (p.dq[k] * p.dq[l]) + kqp * (p.dq[k] * p.dp[l] + p.dp[k] * p.dq[l]) + kpp * (p.dp[k] * p.dp[l])
}

/// Quadratic forms of one element: stiffness `a`, first-order `b`,
/// K_qq-weighted `c` and the plain mass.
#[derive(Debug, Clone, Default)]
pub struct ElementForms {
    pub a: [[f64; 4]; 4],
    pub b: [[f64; 4]; 4],
    pub c: [[f64; 4]; 4],
    pub m: [[f64; 4]; 4],
}

pub fn element_forms(s: &Strip, h: &[f64], lam: f64, i: usize, j: usize) -> ElementForms {
    let mut f = ElementForms::default();
    let l2 = lam * lam;
    for p in points(s, h, i, j) {
        let (a, b) = (p.hq, p.hp);
        let kqq = l2 / b;
        let kqp = -l2 * a / (b * b);
        let kpp = (1.0 + l2 * a * a) / (b * b * b);
        for k in 0..4 {
            let flux_k = kqq * p.dq[k] + kqp * p.dp[k];
            for l in k..4 {
                let flux_l = kqq * p.dq[l] + kqp * p.dp[l];
                f.a[k][l] += p.w * bilinear(kqq, kqp, kpp, &p, k, l);
                f.b[k][l] += p.w * (p.n[l] * flux_k - p.n[k] * flux_l);
                f.c[k][l] += p.w * kqq * (p.n[k] * p.n[l]);
            }
        }
    }
    for k in 0..4 {
        for l in 0..k {
            f.a[k][l] = f.a[l][k];
            f.b[k][l] = -f.b[l][k];
            f.c[k][l] = f.c[l][k];
        }
    }
    let mq = [[s.dq / 3.0, s.dq / 6.0], [s.dq / 6.0, s.dq / 3.0]];
    let mp = [[s.dp / 3.0, s.dp / 6.0], [s.dp / 6.0, s.dp / 3.0]];
    for (k, &(ak, bk)) in LOCAL.iter().enumerate() {
        for (l, &(al, bl)) in LOCAL.iter().enumerate() {
            f.m[k][l] = mq[ak][al] * mp[bk][bl];
        }
    }
    f
}

/// Consistent mass of one surface segment.
pub fn segment_mass(s: &Strip) -> [[f64; 2]; 2] {
    [[s.dq / 3.0, s.dq / 6.0], [s.dq / 6.0, s.dq / 3.0]]
}

/// Nodal values of a half-period field replicated onto a longer strip by even
/// reflection. `start` is the half-period node index mapped to strip node 0.
pub fn unfold(h_half: &[f64], nq: usize, np: usize, nc: usize, start: isize) -> Vec<f64> {
    let period = 2 * nq as isize;
    let mut out = vec![0.0; (nc + 1) * (np + 1)];
    for i in 0..=nc {
        let r = (start + i as isize).rem_euclid(period) as usize;
        let src = if r <= nq { r } else { 2 * nq - r };
        out[i * (np + 1)..(i + 1) * (np + 1)].copy_from_slice(&h_half[src * (np + 1)..(src + 1) * (np + 1)]);
    }
    out
}
