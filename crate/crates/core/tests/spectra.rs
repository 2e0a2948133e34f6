mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stokeslab::continuation::Branch;
use stokeslab::hodograph::{to_dense, HeightField};
use stokeslab::mesh::{element_forms, Strip};
use stokeslab::spectra::*;
use stokeslab::stream::VorticitySpec;

const NQ: usize = 24;
const NP: usize = 12;

/// Validation branch; μ₁ > 0 at points 1..=5, μ₁ < 0 from point 7 on.
fn validation() -> Branch {
    branch(1.58, NQ, NP, 10, 0.01).1
}

fn values(hf: &HeightField, family: Family) -> Vec<f64> {
    family_values(&assemble_forms(hf, family.layout()).unwrap(), family, usize::MAX).unwrap()
}

fn merged(a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = a.into_iter().chain(b).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn max_diff(a: &[f64], b: &[f64], n: usize) -> f64 {
    a.iter().zip(b).take(n).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn form_structure_is_exact() {
    let b = validation();
    let hf = &b.points[6].hf;
    for layout in [Layout::Half, Layout::Full, Layout::Multiple(3)] {
        let ft = assemble_forms(hf, layout).unwrap();
        let (a, bb, c, m) = (to_dense(&ft.a), to_dense(&ft.b), to_dense(&ft.c), to_dense(&ft.m));
        for r in 0..a.nrows() {
            for k in 0..a.ncols() {
                assert_eq!(a[(r, k)], a[(k, r)]);
                assert_eq!(bb[(r, k)], -bb[(k, r)]);
                assert_eq!(c[(r, k)], c[(k, r)]);
                assert_eq!(m[(r, k)], m[(k, r)]);
            }
        }
    }
    let ft = assemble_forms(hf, Layout::Half).unwrap();
    let s = ft.strip;
    let mut total = 0.0;
    for i in 0..s.nc {
        for j in 0..s.np {
            let f = element_forms(&s, &ft.h, ft.lambda, i, j);
            total += f.m.iter().flatten().sum::<f64>();
        }
    }
    assert!((total - 0.5 * hf.period).abs() < 1e-12);
}

#[test]
fn translation_mode_is_a_near_kernel() {
    let ratio = |nq: usize, np: usize| {
        let (_, b) = branch(1.58, nq, np, 6, 0.01);
        let hf = &b.points[6].hf;
        let ft = assemble_forms(hf, Layout::Half).unwrap();
        let v = translation_mode(hf);
        form_value(&ft, &v) / mass_dot(&ft, &v, &v)
    };
    let coarse = ratio(16, 8).abs();
    let fine = ratio(32, 16).abs();
    assert!(fine < coarse / 3.0, "{coarse:e} {fine:e}");
}

#[test]
fn aux00_kernel_is_translation() {
    let b = validation();
    for p in &b.points[1..] {
        let ft = assemble_forms(&p.hf, Layout::Half).unwrap();
        let r = solve_family(&ft, Family::Aux00, 2).unwrap();
        let mu = values(&p.hf, Family::HalfEven);
        let band = zero_band(&mu, NQ, NP);
        assert!(r.eigenvalues[0].abs() < band, "{} vs {band}", r.eigenvalues[0]);
        assert!(r.eigenvalues[1] > 0.0);
        let corr = correlation(&ft, r.real_mode(0).unwrap(), &translation_mode(&p.hf));
        assert!(corr > 0.999, "{corr}");
    }
}

#[test]
fn results_are_sorted_orthonormal_and_accurate() {
    let b = validation();
    let hf = &b.points[3].hf;
    for family in [Family::HalfEven, Family::Aux0Star, Family::AuxStar0, Family::Aux00, Family::Dirichlet, Family::Neumann] {
        let ft = assemble_forms(hf, family.layout()).unwrap();
        let r = solve_family(&ft, family, 6).unwrap();
        assert!(r.residual < 1e-8);
        assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        for i in 0..6 {
            for j in 0..6 {
                let d = mass_dot(&ft, r.real_mode(i).unwrap(), r.real_mode(j).unwrap());
                assert!((d - (i == j) as u8 as f64).abs() < 1e-9, "{family:?} {i} {j} {d}");
            }
            let u = r.real_mode(i).unwrap();
            let mean: f64 = (0..=r.strip.nc).map(|k| r.strip.wq(k) * u[r.strip.node(k, NP)]).sum();
            assert!(mean >= 0.0);
        }
    }
    let ft = assemble_forms(hf, Layout::Full).unwrap();
    let r = solve_family(&ft, Family::Bloch(0.2), 4).unwrap();
    assert!(r.residual < 1e-8);
}

#[test]
fn flat_half_even_spectrum_is_separable() {
    let b = validation();
    let hf = &b.points[0].hf;
    let mu = values(hf, Family::HalfEven);
    let col: Vec<f64> = (0..=NP).map(|j| hf.at(0, j)).collect();
    let (pa, pb, mp) = stokeslab::hodograph::column_forms(&col);
    let dq = hf.strip().dq;
    let mut oracle = Vec::new();
    for k in 0..=NQ {
        let th = std::f64::consts::PI * k as f64 / NQ as f64;
        let k2 = 6.0 * (1.0 - th.cos()) / (dq * dq * (2.0 + th.cos()));
        let op = faer::Mat::<f64>::from_fn(NP, NP, |r, c| k2 * pa[(r, c)] + pb[(r, c)]);
        oracle.extend(stokeslab::linalg::gen_eigh(&op, &mp, false).unwrap().values);
    }
    oracle.sort_by(f64::total_cmp);
    for (a, o) in mu.iter().zip(&oracle) {
        assert!((a - o).abs() < 1e-9 * (1.0 + o.abs()), "{a} {o}");
    }
    assert!(mu[0] < 0.0 && mu[1].abs() < 1e-8);
    let mu = values(&b.points[1].hf, Family::HalfEven);
    assert!(mu[0] < 0.0 && mu[1] > 0.0 && mu[1] < 1e-2);
}

#[test]
fn dirichlet_neumann_and_periodic_decompositions() {
    let b = validation();
    for p in [&b.points[2], &b.points[8]] {
        let hf = &p.hf;
        let mu = values(hf, Family::HalfEven);
        let n0s = values(hf, Family::Aux0Star);
        let ns0 = values(hf, Family::AuxStar0);
        let n00 = values(hf, Family::Aux00);
        let d = values(hf, Family::Dirichlet);
        let n = values(hf, Family::Neumann);
        let both = merged(ns0.clone(), n00.clone());
        assert!(max_diff(&d, &both, 3) < 1e-8);
        assert!(max_diff(&d, &both, 40) < 1e-8 * (1.0 + d[39].abs()));
        assert!(max_diff(&n, &merged(mu.clone(), n0s.clone()), 40) < 1e-8 * (1.0 + n[39].abs()));
        assert!(max_diff(&values(hf, Family::Bloch(0.0)), &merged(mu.clone(), n00.clone()), 20) < 1e-8 * 1e2);
        assert!(max_diff(&values(hf, Family::Bloch(0.5)), &merged(ns0.clone(), n0s.clone()), 20) < 1e-8 * 1e2);
        assert!(n0s[0] < 0.0 && ns0[0] < 0.0);
        assert!(n00[1] > 0.0);
    }
}

#[test]
fn bloch_symmetry_and_interlacing() {
    let b = validation();
    let hf = &b.points[4].hf;
    let c = bloch_sweep(hf, &[0.1, 0.3, 0.5, 0.7, 0.9], 6).unwrap();
    assert!(c.dropped.is_empty());
    for j in 0..6 {
        assert!((c.curves[j][1] - c.curves[j][3]).abs() < 1e-9);
        assert!((c.curves[j][0] - c.curves[j][4]).abs() < 1e-9);
    }
    let d = values(hf, Family::Dirichlet);
    let n = values(hf, Family::Neumann);
    for k in 0..5 {
        for j in 0..4 {
            let v = c.curves[j][k];
            assert!(n[j] <= v + 1e-9 && v <= d[j] + 1e-9);
            if k != 2 {
                assert!(n[j] < v - 1e-8 && v < d[j] - 1e-8, "f {} j {j}: {} {v} {}", c.fractions[k], n[j], d[j]);
            }
        }
        assert!(c.curves[0][k] < 0.0);
    }
    let lam = hf.lambda;
    assert!((c.taus[2] - std::f64::consts::PI * lam / hf.period).abs() < 1e-14);
}

#[test]
fn band_bounds_where_mu1_positive() {
    let b = validation();
    let hf = &b.points[3].hf;
    let mu = values(hf, Family::HalfEven);
    assert!(mu[1] > 0.0);
    let ns0 = values(hf, Family::AuxStar0);
    let n0s = values(hf, Family::Aux0Star);
    let fr: Vec<f64> = (1..10).map(|k| k as f64 / 20.0).collect();
    let c = bloch_sweep(hf, &fr, 4).unwrap();
    for k in 0..fr.len() {
        let m: Vec<f64> = (0..4).map(|j| c.curves[j][k]).collect();
        assert!(m[1] < 0.0 && m[2] > 0.0, "{m:?}");
        assert!(mu[0] < m[0] && m[0] < ns0[0]);
        assert!(n0s[0] < m[1]);
        assert!(mu[1] < m[2] && m[2] < ns0[1]);
        assert!(n0s[1] < m[3]);
    }
    let at0 = values(hf, Family::Bloch(0.0));
    let n00 = values(hf, Family::Aux00);
    assert!((at0[1] - mu[1].min(0.0)).abs() < 1e-6);
    assert!((at0[2] - mu[1].max(0.0).min(mu[2]).min(n00[1])).abs() < 1e-6);
}

#[test]
fn coupled_form_agrees_with_phase_shift() {
    let errs: Vec<f64> = [(16usize, 8usize), (32, 16)]
        .iter()
        .map(|&(nq, np)| {
            let (_, b) = branch(1.58, nq, np, 4, 0.01);
            let hf = &b.points[4].hf;
            let ft = assemble_forms(hf, Layout::Full).unwrap();
            [0.15, 0.3, 0.45]
                .iter()
                .map(|&f| {
                    let a = coupled_bloch_values(&ft, f, 3).unwrap();
                    let p = family_values(&ft, Family::Bloch(f), 3).unwrap();
                    max_diff(&a, &p, 3)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
    assert!(errs[1] < 1e-2, "{errs:?}");
}

#[test]
fn curvature_matches_finite_differences() {
    let b = validation();
    let hf = &b.points[9].hf;
    let k = bloch_curvature(hf).unwrap();
    assert!(((k.c_tau - k.c_fd) / k.c_fd).abs() < 0.01, "{k:?}");
    let small = values(hf, Family::Bloch(0.01));
    let nearest = small.iter().cloned().min_by(|a, b| (a - k.mu0).abs().total_cmp(&(b - k.mu0).abs())).unwrap();
    assert_eq!((nearest - k.mu0).signum(), k.c_tau.signum());
    assert!(matches!(bloch_curvature(&b.points[0].hf), Err(SpectraError::KernelNotSimple { .. })));
}

#[test]
fn subharmonic_direct_matches_synthesis() {
    let b = validation();
    let hf = &b.points[5].hf;
    let m1 = subharmonic_spectrum(hf, 1, usize::MAX).unwrap();
    let half = solve_family(&assemble_forms(hf, Layout::Half).unwrap(), Family::HalfEven, usize::MAX).unwrap();
    assert_eq!(m1.eigenvalues, half.eigenvalues);
    for m in [2usize, 3, 4] {
        let direct = subharmonic_spectrum(hf, m, 60).unwrap();
        let synth = subharmonic_synthesis(hf, m, 60).unwrap();
        assert!(max_diff(&direct.eigenvalues, &synth, 60) < 1e-7, "M = {m}");
    }
}

#[test]
fn morse_counts_at_flat_state() {
    let b = validation();
    let hf = &b.points[0].hf;
    let c3 = morse_counts(hf, 3).unwrap();
    assert_eq!((c3.n0, c3.n), (3, 4));
    assert_eq!((c3.n0_tally, c3.n_tally), (3, 4));
    let c4 = morse_counts(hf, 4).unwrap();
    assert_eq!(c4.n, 5);
    assert_eq!(c4.n_tally, 6);
    for p in [&b.points[2], &b.points[8]] {
        let c1 = morse_counts(&p.hf, 1).unwrap();
        let neg = values(&p.hf, Family::HalfEven).iter().filter(|&&v| v < -c1.band).count();
        assert_eq!(c1.n0, neg);
    }
}

#[test]
fn weighted_counts_agree() {
    let b = validation();
    let hf = &b.points[8].hf;
    let w = weighted_count_check(hf, 2, &|_| 1.0, &|_, _| 1.0).unwrap();
    assert_eq!(w.neg_count_boundary, w.neg_count_domain);
    assert!(w.neg_count_domain >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..3 {
        let (a0, a1, b0, b1): (f64, f64, f64, f64) = (rng.gen_range(0.2..3.0), rng.gen_range(0.0..1.0), rng.gen_range(0.2..3.0), rng.gen_range(0.0..1.0));
        let aw = move |q: f64| a0 + a1 * (3.0 * q).sin().abs();
        let bw = move |q: f64, p: f64| b0 + b1 * (q * p).cos().powi(2);
        let r = weighted_count_check(hf, 3, &aw, &bw).unwrap();
        assert_eq!(r.neg_count_boundary, r.neg_count_domain);
    }
}

#[test]
fn pushforward_residual() {
    for st in [irrotational_stream(1.58), stream_of_slope(VorticitySpec::Sine { amplitude: 0.3 }, 0.7)] {
        for k in [0.5, 2.0] {
            let r = pushforward_check(&st, k).unwrap();
            assert!(r.interior_residual < 1e-5, "{r:?}");
            assert!(r.surface_residual < 1e-5, "{r:?}");
        }
    }
}

#[test]
fn nodal_domain_counts() {
    let b = validation();
    let ft = assemble_forms(&b.points[7].hf, Layout::Half).unwrap();
    let r = solve_family(&ft, Family::HalfEven, 2).unwrap();
    let d0 = nodal_domains(r.real_mode(0).unwrap(), NQ, NP).unwrap();
    assert_eq!(d0, NodalDomains { count: 1, surface_endpoint: false });
    let d1 = nodal_domains(r.real_mode(1).unwrap(), NQ, NP).unwrap();
    assert_eq!(d1, NodalDomains { count: 2, surface_endpoint: true });
    let s = Strip::new(NQ, NP, 1.0);
    assert_eq!(nodal_domains(&vec![1.0; s.n_nodes()], NQ, NP).unwrap().count, 1);
    assert!(matches!(nodal_domains(&vec![0.0; s.n_nodes()], NQ, NP), Err(SpectraError::AmbiguousSign { .. })));
}

#[test]
fn zero_band_scaling() {
    assert_eq!(zero_band(&[-2.0, 1.0, 3.0, 5.0, 4.0, 100.0], 10, 10), 10.0 * 3.0 / 1e4);
    assert_eq!(zero_band(&[], 10, 10), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn interlacing_at_random_quasi_momentum(f in 0.02f64..0.98, idx in 1usize..10) {
        let (_, b) = branch(1.58, 12, 8, 10, 0.01);
        let hf = &b.points[idx].hf;
        let bl = values(hf, Family::Bloch(f));
        let d = values(hf, Family::Dirichlet);
        let n = values(hf, Family::Neumann);
        for j in 0..4 {
            prop_assert!(n[j] <= bl[j] + 1e-10 && bl[j] <= d[j] + 1e-10);
        }
        let mu = values(hf, Family::HalfEven);
        let band = zero_band(&mu, 12, 8);
        prop_assert!(values(hf, Family::Aux00)[0].abs() < band);
        prop_assert!(values(hf, Family::Aux0Star)[0] < 0.0);
        prop_assert!(values(hf, Family::AuxStar0)[0] < 0.0);
        prop_assert!(bl[0] < 0.0);
    }
}
