mod common;

use common::*;
use faer::Mat;
use proptest::prelude::*;
use stokeslab::bifurcation::*;
use stokeslab::continuation::Branch;
use stokeslab::hodograph::{discrete_uniform, flat_field, grid_tau_star, to_dense, HeightField};
use stokeslab::linalg::gen_eigh;
use stokeslab::spectra::*;
use stokeslab::stream::UniformStream;

const NQ: usize = 24;
const NP: usize = 12;

fn validation(steps: usize) -> (UniformStream, Branch) {
    branch(1.58, NQ, NP, steps, 0.01)
}

/// Flat stream on the grid-consistent period for an `nc`-cell half strip.
fn grid_flat(st: &UniformStream, nq: usize, nc: usize, np: usize) -> HeightField {
    let col = discrete_uniform(st, np).unwrap();
    let (_, tau) = grid_tau_star(&col, nc).unwrap();
    let period = 2.0 * std::f64::consts::PI / tau * nq as f64 / nc as f64;
    flat_field(st, nq, np, period).unwrap()
}

#[test]
fn truncated_branch_is_not_reached() {
    let (st, b) = validation(4);
    match detect_t0(&st, &b) {
        Err(BifurcationError::NotReached { t_last, mu1_last }) => {
            assert!((t_last - 0.04).abs() < 1e-12);
            assert!(mu1_last > 0.0);
        }
        other => panic!("expected NotReached, got {other:?}"),
    }
}

#[test]
fn negative_mu1_at_start_violates_hypothesis() {
    let (st, b) = branch(2.0, 16, 8, 2, 0.005);
    assert!(matches!(detect_t0(&st, &b), Err(BifurcationError::HypothesisViolated { .. })));
}

#[test]
fn synthetic_crossing_is_recovered() {
    let st = irrotational_stream(1.58);
    let hf = grid_flat(&st, 16, 16, 8);
    let ft = assemble_forms(&hf, Layout::Half).unwrap();
    let (a, m) = (to_dense(&ft.a), to_dense(&ft.m));
    let n = a.nrows();
    let d: Vec<f64> = (0..n).map(|k| 1.0 + 0.3 * (k as f64).sin()).collect();
    let w = Mat::<f64>::from_fn(n, n, |r, c| d[r] * m[(r, c)] * d[c]);
    let t_star = 0.237;
    let probe = |t: f64| -> Result<Probe, BifurcationError> {
        let s = 0.05 * (t - t_star);
        let shifted = Mat::<f64>::from_fn(n, n, |r, c| a[(r, c)] - s * w[(r, c)]);
        let mu = gen_eigh(&shifted, &m, false)?.values[..5].to_vec();
        Ok(Probe { band: zero_band(&mu, 16, 8), mu })
    };
    let ts: Vec<f64> = (1..=12).map(|k| 0.05 * k as f64).collect();
    let c = locate_crossing(&ts, probe).unwrap();
    assert!((c.t0 - t_star).abs() < 1e-6, "{}", c.t0);
    assert_eq!(c.bracket, (ts[3], ts[4]));
    assert!(c.probe.mu[1].abs() < c.probe.band);
    assert!(c.probe.mu[0] < 0.0);
}

#[test]
fn validation_branch_first_bifurcation() {
    let (st, b) = validation(8);
    let s = detect_t0(&st, &b).unwrap();
    println!("t0 = {} mu = {:?} band = {} nodal = {:?}", s.t0, s.mu, s.band, s.nodal);
    assert!(s.t0 > 0.06 && s.t0 < 0.07, "{}", s.t0);
    assert!(s.mu[0] < 0.0);
    assert!(s.mu[1].abs() < s.band);
    assert_eq!(s.kernel_dim, 1);
    assert!(s.pattern_ok);
    assert_eq!(s.mu1_slope, -1.0);
    assert_eq!(s.nodal.count, 2);

    let sampler = BranchSampler::new(&st, &b).unwrap();
    for t in [0.02, 0.04, 0.06] {
        let r = roots_at(&sampler.at(t).unwrap(), 25).unwrap();
        assert!(r.fractions.is_empty(), "roots below t0 at t = {t}: {:?}", r.fractions);
    }

    let fr: Vec<f64> = (0..8).map(|k| 0.002 * 10f64.powf(k as f64 / 7.0)).collect();
    let full = assemble_forms(&s.hf, Layout::Full).unwrap();
    let mut mu1 = vec![];
    let mut mu2 = vec![];
    for &f in &fr {
        let v = family_values(&full, Family::Bloch(f), 3).unwrap();
        mu1.push(v[1]);
        mu2.push(v[2]);
    }
    let scale = 2.0 * std::f64::consts::PI * s.hf.lambda / s.hf.period;
    let taus: Vec<f64> = fr.iter().map(|f| f * scale).collect();
    let cl = asymptotic_classify(&taus, &mu1, &mu2).unwrap();
    println!("{cl:?}");
    assert_eq!(cl.option, AsymptoticOption::I { n: 1 });
    assert!(cl.residual < 0.05, "{}", cl.residual);
}

#[test]
fn sampler_reproduces_stored_points() {
    let (st, b) = validation(3);
    let sampler = BranchSampler::new(&st, &b).unwrap();
    let p = &b.points[2];
    let hf = sampler.at(p.arclength).unwrap();
    assert_eq!(hf.h, p.hf.h);
    let mid = sampler.at(0.5 * (b.points[1].arclength + p.arclength)).unwrap();
    assert!(mid.amplitude() > b.points[1].hf.amplitude() && mid.amplitude() < p.hf.amplitude());
}

fn sample(t: f64, fr: &[f64], dir: i32) -> RootSample {
    RootSample {
        t,
        fractions: fr.to_vec(),
        taus: fr.to_vec(),
        directions: vec![dir; fr.len()],
        orders: vec![1; fr.len()],
    }
}

#[test]
fn roots_thread_into_curves() {
    let s = vec![
        sample(0.1, &[0.05], 1),
        sample(0.2, &[0.1, 0.4], 1),
        sample(0.3, &[0.15, 0.35], 1),
        sample(0.4, &[0.2, 0.3], 1),
    ];
    let c = thread_roots(&s).unwrap();
    assert_eq!(c.len(), 2);
    assert_eq!(c[0].j, 1);
    assert_eq!(c[0].samples.len(), 4);
    assert_eq!(c[0].slope_sign, 1);
    assert_eq!(c[1].samples.len(), 3);
    assert_eq!(c[1].slope_sign, -1);
}

#[test]
fn ambiguous_threading_breaks_the_curve() {
    let s = vec![sample(0.1, &[0.2], 1), sample(0.2, &[0.18, 0.22], 1)];
    assert!(matches!(thread_roots(&s), Err(BifurcationError::CurveBroken { .. })));
}

#[test]
fn unreachable_period_is_out_of_range() {
    let (st, b) = validation(2);
    let sampler = BranchSampler::new(&st, &b).unwrap();
    let curves = thread_roots(&[sample(0.1, &[0.05], 1), sample(0.2, &[0.1], 1)]).unwrap();
    match solve_tm(&sampler, &curves, 2, 0.01) {
        Err(BifurcationError::OutOfRange { m, lo, hi, .. }) => {
            assert_eq!(m, 2);
            assert_eq!((lo, hi), (0.05, 0.1));
        }
        other => panic!("expected OutOfRange, got {other:?}"),
    }
}

#[test]
fn switch_from_flat_half_period_base() {
    let st = irrotational_stream(1.58);
    let base = grid_flat(&st, 12, 24, NP);
    let stokes = branch_switch(&st, &base, 2, 0.0).unwrap();
    assert!(stokes.residual < 1e-10);
    assert!(stokes.deviation < 1e-14);

    let sw = branch_switch(&st, &base, 2, 1e-3).unwrap();
    println!("eps {} dev {} crests {:?} lambda {} newton {:?}", sw.eps, sw.deviation, sw.crests, sw.hf.lambda, sw.newton_history);
    assert!(sw.residual < 1e-10);
    assert_eq!(sw.hf.nq, 24);
    assert!(sw.deviation > 1e-3);
    assert!((sw.crests[0] - sw.crests[1]).abs() > 1e-3);
    assert!((sw.hf.lambda - 1.0).abs() < 1e-2);
}

#[test]
fn switch_refuses_without_kernel() {
    let (st, b) = validation(3);
    match branch_switch(&st, &b.points[3].hf, 3, 1e-3) {
        Err(BifurcationError::NoKernel { smallest, band, .. }) => assert!(smallest > band),
        other => panic!("expected NoKernel, got {:?}", other.map(|s| s.deviation)),
    }
}

fn powers(taus: &[f64], c: f64, e: i32) -> Vec<f64> {
    taus.iter().map(|t| c * t.powi(e)).collect()
}

#[test]
fn synthetic_classification() {
    let taus: Vec<f64> = (0..10).map(|k| 0.01 * 10f64.powf(k as f64 / 9.0)).collect();
    let c = asymptotic_classify(&taus, &powers(&taus, -1.0, 3), &powers(&taus, 1.0, 3)).unwrap();
    assert_eq!(c.option, AsymptoticOption::I { n: 2 });
    let c = asymptotic_classify(&taus, &powers(&taus, -1.0, 2), &powers(&taus, 1.0, 4)).unwrap();
    assert_eq!(c.option, AsymptoticOption::II { n: 1, m: 2 });
    assert!(c.residual < 1e-10);
    let half: Vec<f64> = taus.iter().map(|t| t.powf(1.5)).collect();
    assert!(matches!(
        asymptotic_classify(&taus, &powers(&taus, -1.0, 1), &half),
        Err(BifurcationError::FitAmbiguous { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn classification_recovers_power_laws(
        k1 in 0.1f64..10.0,
        k2 in 0.1f64..10.0,
        n in 1u32..4,
        m in 1u32..4,
        odd in any::<bool>(),
    ) {
        let taus: Vec<f64> = (0..10).map(|k| 0.01 * 10f64.powf(k as f64 / 9.0)).collect();
        if odd {
            let e = (2 * n - 1) as i32;
            let c = asymptotic_classify(&taus, &powers(&taus, -k1, e), &powers(&taus, k2, e)).unwrap();
            prop_assert_eq!(c.option, AsymptoticOption::I { n });
        } else if n != m {
            let c = asymptotic_classify(&taus, &powers(&taus, -k1, 2 * n as i32), &powers(&taus, k2, 2 * m as i32)).unwrap();
            prop_assert_eq!(c.option, AsymptoticOption::II { n, m });
            prop_assert!((c.coefficients.0 + k1).abs() < 1e-8 * k1);
        }
    }
}
