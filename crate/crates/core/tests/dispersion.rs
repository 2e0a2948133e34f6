use std::sync::Arc;
use std::time::Instant;

use stokeslab::dispersion::*;
use stokeslab::stream::*;

fn stream(spec: VorticitySpec, s: f64) -> UniformStream {
    solve_uniform_stream(Arc::new(primitive(spec).unwrap()), s).unwrap()
}

fn irrotational(s: f64) -> UniformStream {
    stream(VorticitySpec::Constant { value: 0.0 }, s)
}

/// RK4 shooting for γ″ = (τ² − ω′(U(y)))γ, normalized so γ(d) = 1.
fn shoot(st: &UniformStream, tau: f64, n: usize) -> f64 {
    let vm = st.vorticity();
    let h = st.d / n as f64;
    let rhs = |y: f64, g: f64| (tau * tau - vm.omega_prime(st.u(y))) * g;
    let (mut g, mut dg) = (0.0, 1.0);
    for k in 0..n {
        let y = k as f64 * h;
        let k1 = (dg, rhs(y, g));
        let k2 = (dg + 0.5 * h * k1.1, rhs(y + 0.5 * h, g + 0.5 * h * k1.0));
        let k3 = (dg + 0.5 * h * k2.1, rhs(y + 0.5 * h, g + 0.5 * h * k2.0));
        let k4 = (dg + h * k3.1, rhs(y + h, g + h * k3.0));
        g += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        dg += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    dg / g
}

fn bisect_tau(s: f64) -> f64 {
    let f = |t: f64| s * t / (t / s).tanh() - 1.0 / s;
    let (mut a, mut b) = (1e-9, 50.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) < 0.0 {
            a = m
        } else {
            b = m
        }
    }
    0.5 * (a + b)
}

#[test]
fn gamma_closed_form_irrotational() {
    let st = irrotational(1.0);
    let g = solve_gamma(&st, 1.0).unwrap();
    assert!((g.gamma_prime_at_d - 1.0 / 1.0f64.tanh()).abs() < 1e-10);
    assert!((g.gamma_prime_at_d - 1.3130).abs() < 1e-4);
    for k in 0..=10 {
        let y = k as f64 / 10.0;
        assert!((g.eval(y) - y.sinh() / 1.0f64.sinh()).abs() < 1e-5);
    }
    let g0 = solve_gamma(&irrotational(0.7), 0.0).unwrap();
    assert!((g0.gamma_prime_at_d - 0.7).abs() < 1e-12);
}

#[test]
fn gamma_rotational_matches_shooting_and_closed_form() {
    let st = stream(VorticitySpec::Affine { a: 0.0, b: 1.0 }, 2.0);
    for &tau in &[0.3, 1.0, 2.5] {
        let g = solve_gamma(&st, tau).unwrap();
        let sh = shoot(&st, tau, 4000);
        assert!((g.gamma_prime_at_d - sh).abs() < 1e-8, "tau {tau}: {} vs {sh}", g.gamma_prime_at_d);
        let d = st.d;
        let exact = if tau == 1.0 {
            1.0 / d
        } else if tau < 1.0 {
            let k = (1.0 - tau * tau).sqrt();
            k / (k * d).tan()
        } else {
            let k = (tau * tau - 1.0).sqrt();
            k / (k * d).tanh()
        };
        assert!((g.gamma_prime_at_d - exact).abs() < 1e-8, "tau {tau}: {} vs {exact}", g.gamma_prime_at_d);
    }
}

#[test]
fn sigma_at_zero() {
    for &s in &[0.539, 0.8, 1.3] {
        let v = sigma(&irrotational(s), 0.0).unwrap();
        assert!((v - (s * s - 1.0 / s)).abs() < 1e-10);
    }
    assert!(sigma(&irrotational(1.0), 0.0).unwrap().abs() < 1e-10);
    assert!((sigma(&irrotational(0.539), 0.0).unwrap() + 1.5645).abs() < 1e-3);
}

#[test]
fn sigma_forms_agree_and_sigma_is_even_and_increasing() {
    let st = stream(VorticitySpec::Sine { amplitude: 0.3 }, 0.7);
    let dc = find_tau_star(&st).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for k in 0..=40 {
        let t = 2.0 * dc.tau_star * k as f64 / 40.0;
        let (a, b) = sigma_forms(&st, t).unwrap();
        assert!((a - b).abs() < 1e-10);
        assert!((a - sigma(&st, -t).unwrap()).abs() < 1e-12);
        assert!(a > prev);
        prev = a;
    }
    assert!((dc.rho0 - (1.0 / dc.kappa.powi(2) - st.vorticity().omega(1.0) / dc.kappa)).abs() < 1e-14);
}

#[test]
fn tau_star_irrotational_and_runtime() {
    let clock = Instant::now();
    let vm = Arc::new(primitive(VorticitySpec::Constant { value: 0.0 }).unwrap());
    let cd = critical_data(&vm, 2.0).unwrap();
    let s = cd.s_plus.unwrap();
    let st = solve_uniform_stream(vm, s).unwrap();
    let dc = find_tau_star(&st).unwrap();
    let elapsed = clock.elapsed().as_secs_f64();
    let oracle = bisect_tau(s);
    assert!((dc.tau_star - oracle).abs() < 1e-8);
    assert!((dc.tau_star - 3.4405).abs() < 1e-3);
    assert!(sigma(&st, dc.tau_star).unwrap().abs() < 1e-10);
    assert!(elapsed < 1.0, "elapsed {elapsed}");
}

#[test]
fn supercritical_streams_are_rejected() {
    for &s in &[1.0, 1.6751] {
        assert!(matches!(find_tau_star(&irrotational(s)), Err(DispersionError::SupercriticalStream { .. })));
    }
}

#[test]
fn froude_diagnostic() {
    let f = froude_check(&irrotational(0.539));
    assert!((f.froude_sq_inv - 1.0 / 0.539f64.powi(3)).abs() < 1e-10);
    assert!((f.froude_sq_inv - 6.386).abs() < 1e-3 && f.subcritical);
    assert!((froude_check(&irrotational(1.0)).froude_sq_inv - 1.0).abs() < 1e-12);
    let f = froude_check(&irrotational(1.675));
    assert!((f.froude_sq_inv - 0.2128).abs() < 1e-3 && !f.subcritical);
    let st = stream(VorticitySpec::Sine { amplitude: 0.3 }, 0.7);
    let sub = froude_check(&st).subcritical;
    assert_eq!(sub, sigma(&st, 0.0).unwrap() < 0.0);
}

#[test]
fn gamma_positive_beyond_tau_star() {
    let st = stream(VorticitySpec::Sine { amplitude: 0.3 }, 0.7);
    let dc = find_tau_star(&st).unwrap();
    let g = solve_gamma(&st, 1.2 * dc.tau_star).unwrap();
    assert!(g.values[1..].iter().all(|&v| v > 0.0));
}
