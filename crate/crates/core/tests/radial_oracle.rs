//! Radial ground state against an independent fixed-step integrator and
//! frozen reference values.

use gp_collapse::radial::{critical_constants, singular_moment, RadialProfile, TownesSolver};
use std::f64::consts::PI;
use std::sync::OnceLock;

const Q0: f64 = 2.2062008646;
const ASTAR: f64 = 11.7008965246;
const MOMENTS: [(f64, f64, f64); 4] = [
    (0.5, 1.2586828801, 1e-8),
    (1.0, 1.9216734945, 1e-8),
    (1.5, 4.2606882697, 1e-8),
    (1.9, 24.8596456, 1e-4),
];

fn profile() -> &'static RadialProfile {
    static P: OnceLock<RadialProfile> = OnceLock::new();
    P.get_or_init(|| TownesSolver::default().solve().unwrap())
}

/// Classical RK4 from the series start, returning samples every `h`.
fn rk4_shot(q0: f64, h: f64, r_end: f64) -> Vec<(f64, f64)> {
    let rhs = |r: f64, y: [f64; 2]| [y[1], y[0] - y[0].powi(3) - y[1] / r];
    let mut r = h;
    let c2 = (q0 - q0.powi(3)) / 4.0;
    let mut y = [q0 + c2 * h * h, 2.0 * c2 * h];
    let mut out = vec![(0.0, q0), (r, y[0])];
    while r < r_end - 0.5 * h {
        let k1 = rhs(r, y);
        let k2 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
        let k3 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
        let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        r += h;
        out.push((r, y[0]));
    }
    out
}

fn simpson(h: f64, f: &[f64]) -> f64 {
    assert!(f.len() % 2 == 1);
    let n = f.len() - 1;
    let inner: f64 = (1..n).map(|i| if i % 2 == 1 { 4.0 * f[i] } else { 2.0 * f[i] }).sum();
    h / 3.0 * (f[0] + inner + f[n])
}

#[test]
fn shooting_value_and_critical_constant_match_reference() {
    let p = profile();
    assert!((p.values[0] - Q0).abs() < 1e-9, "q0 {}", p.values[0]);
    let c = critical_constants(p).unwrap();
    assert!((c.astar - ASTAR).abs() / ASTAR < 1e-9, "a* {}", c.astar);
}

#[test]
fn profile_agrees_with_fixed_step_rk4() {
    let p = profile();
    let h = 1e-3;
    let shot = rk4_shot(p.values[0], h, 8.0);
    for &(r, q) in shot.iter().step_by(500).skip(1) {
        let (qs, _) = p.eval(r);
        assert!((qs - q).abs() < 1e-7 * Q0, "r {r}: {qs} vs {q}");
    }
    let integrand: Vec<f64> = shot.iter().map(|&(r, q)| 2.0 * PI * r * q * q).collect();
    let mass = simpson(h, &integrand);
    assert!((mass - ASTAR).abs() / ASTAR < 1e-6, "mass {mass}");
}

#[test]
fn singular_moments_match_reference() {
    for (p, expected, tol) in MOMENTS {
        let ip = singular_moment(profile(), p).unwrap();
        assert!((ip - expected).abs() / expected < tol, "I_{p} = {ip}");
    }
}

#[test]
fn moments_are_stable_under_mesh_refinement() {
    let fine = TownesSolver { mesh_intervals: 8000, ..TownesSolver::default() }.solve().unwrap();
    for p in [0.5, 1.0, 1.5] {
        let a = singular_moment(profile(), p).unwrap();
        let b = singular_moment(&fine, p).unwrap();
        assert!((a - b).abs() / b < 1e-5, "p {p}: {a} vs {b}");
    }
}

#[test]
fn vanishing_power_recovers_unit_mass() {
    let ip = singular_moment(profile(), 1e-8).unwrap();
    assert!((ip - 1.0).abs() < 1e-6, "{ip}");
}

#[test]
fn tail_is_bounded_by_bessel_envelope() {
    let p = profile();
    for r in [6.0, 10.0, 15.0, 20.0, 25.0] {
        let (q, dq) = p.eval(r);
        let envelope = (-r).exp() / r.sqrt();
        assert!(q > 0.0 && q < 10.0 * envelope, "r {r}: {q}");
        assert!(dq < 0.0 && dq.abs() < 10.0 * envelope, "r {r}: {dq}");
    }
}

#[test]
fn rescaled_profile_fails_identity_check() {
    let mut p = profile().clone();
    for v in p.values.iter_mut().chain(p.derivs.iter_mut()) {
        *v *= 1.01;
    }
    assert!(critical_constants(&p).is_err());
}
