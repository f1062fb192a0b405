//! Constrained minimization of the discrete Gross-Pitaevskii energy over the
//! unit L² sphere, the Gagliardo-Nirenberg quotient flow, and the
//! cut-off Townes trial energy.

use crate::error::{Error, Result};
use crate::field::{energy_terms, inner, kinetic, neg_laplacian, EnergyBreakdown, Field2D, Grid2D};
use crate::potential::{PotentialRule, PotentialSpec};
use crate::quadrature::GaussLegendre;
use crate::radial::RadialProfile;
use crate::spectral::ShiftedLaplacian;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Initial state of a run.
#[derive(Debug, Clone)]
pub enum Init {
    /// `exp(-|x - center|² / (2 width²))`.
    Gaussian { center: [f64; 2], width: f64 },
    /// `scale · Q₀(scale |x - center|)`.
    Townes { center: [f64; 2], scale: f64, profile: Arc<RadialProfile> },
    /// An existing field, resampled if it lives on another grid.
    Given(Field2D),
}

/// Update rule of the normalized gradient flow.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Flow {
    /// `v = u - τ[(-Δ + V)u - a u³]`.
    #[default]
    Explicit,
    /// `v = u - τ (-Δ + σ)⁻¹ (g - μu)` with `g` the explicit gradient and
    /// `σ` the larger of the kinetic energy and `-μ`.
    Preconditioned,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Initial and maximal step; `None` picks `0.25 h²` (explicit) or `0.5` (preconditioned).
    pub tau: Option<f64>,
    pub max_iters: usize,
    pub residual_tol: f64,
    pub init: Init,
    /// Previous solution; takes precedence over `init`.
    pub continuation: Option<Field2D>,
    pub flow: Flow,
    pub rule: PotentialRule,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tau: None,
            max_iters: 20_000,
            residual_tol: 1e-8,
            init: Init::Gaussian { center: [0.0, 0.0], width: 1.0 },
            continuation: None,
            flow: Flow::Explicit,
            rule: PotentialRule::Pointwise,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizationResult {
    pub u: Field2D,
    pub energy: EnergyBreakdown,
    pub mu: f64,
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
    pub initial_energy: f64,
    /// Initial energy followed by the running sum of the accepted energy
    /// changes, each evaluated directly from the update.
    pub history: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Samples `init` on `grid`, takes the absolute value and normalizes.
pub fn initial_field(grid: &Grid2D, init: &Init) -> Result<Field2D> {
    let u = match init {
        Init::Gaussian { center, width } => {
            if !(*width > 0.0) {
                return Err(Error::InvalidInput(format!("gaussian width {width} must be positive")));
            }
            Field2D::from_fn(*grid, |x| {
                let d2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                (-d2 / (2.0 * width * width)).exp()
            })
        }
        Init::Townes { center, scale, profile } => {
            if !(*scale > 0.0) {
                return Err(Error::InvalidInput(format!("townes scale {scale} must be positive")));
            }
            let q = profile.normalized();
            Field2D::from_fn(*grid, |x| q.dilated(*scale, (x[0] - center[0]).hypot(x[1] - center[1])))
        }
        Init::Given(f) if f.grid == *grid => {
            let mut f = f.clone();
            let n = grid.n;
            for j in 0..n {
                for i in 0..n {
                    if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                        f.data[j * n + i] = 0.0;
                    }
                }
            }
            f
        }
        Init::Given(f) => Field2D::from_fn(*grid, |x| f.sample(x)),
    };
    let mut u = u;
    u.data.iter_mut().for_each(|v| *v = v.abs());
    u.normalized()
}

/// `(-Δ + V)u - a u³`, half the L² gradient of the energy.
pub fn hamiltonian_action(grid: &Grid2D, v: &[f64], u: &[f64], a: f64) -> Vec<f64> {
    let mut g = neg_laplacian(grid, u);
    let n = grid.n;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let k = j * n + i;
            g[k] += (v[k] - a * u[k] * u[k]) * u[k];
        }
    }
    g
}

/// Discrete energy `∫|∇u|² + ∫V u² - (a/2)∫u⁴` without a mass constraint.
pub fn discrete_energy(grid: &Grid2D, v: &[f64], u: &[f64], a: f64) -> f64 {
    let f = Field2D { grid: *grid, data: u.to_vec() };
    energy_terms(&f, v, a).total
}

/// L² gradient of [`discrete_energy`].
pub fn energy_gradient(grid: &Grid2D, v: &[f64], u: &[f64], a: f64) -> Vec<f64> {
    hamiltonian_action(grid, v, u, a).into_iter().map(|x| 2.0 * x).collect()
}

/// `(μ, ‖g - μu‖)` for `g = (-Δ + V - a u²)u`.
pub fn euler_lagrange_residual(grid: &Grid2D, v: &[f64], u: &[f64], a: f64) -> (f64, f64) {
    let g = hamiltonian_action(grid, v, u, a);
    residual_of(grid, &g, u)
}

fn residual_of(grid: &Grid2D, g: &[f64], u: &[f64]) -> (f64, f64) {
    let mu = inner(grid, g, u);
    let r: Vec<f64> = g.iter().zip(u).map(|(gi, ui)| gi - mu * ui).collect();
    (mu, inner(grid, &r, &r).sqrt())
}

/// `|u - τ dir|` rescaled to unit mass; `None` if that vanishes or overflows.
pub fn project_step(grid: &Grid2D, u: &[f64], dir: &[f64], tau: f64) -> Option<Vec<f64>> {
    let mut v: Vec<f64> = u.iter().zip(dir).map(|(ui, di)| (ui - tau * di).abs()).collect();
    let m = inner(grid, &v, &v);
    if !(m > 0.0) || !m.is_finite() {
        return None;
    }
    let s = m.sqrt().recip();
    v.iter_mut().for_each(|x| *x *= s);
    Some(v)
}

/// `E(v) - E(u)` for unit vectors `u`, `v`, written in terms of `v - u` so the
/// change is resolved below the rounding level of the energies themselves.
/// The term `μ (‖v‖² - ‖u‖²)` removes the first-order effect of rounding in
/// the normalization, which would otherwise swamp steps near convergence.
fn energy_change(grid: &Grid2D, pot: &[f64], u: &[f64], v: &[f64], a: f64, mu: f64) -> f64 {
    let d: Vec<f64> = v.iter().zip(u).map(|(x, y)| x - y).collect();
    let s: Vec<f64> = v.iter().zip(u).map(|(x, y)| x + y).collect();
    let lap = neg_laplacian(grid, &d);
    let local: Vec<f64> = (0..d.len())
        .map(|k| d[k] * (local_factor(pot[k], a, u[k], v[k])))
        .collect();
    inner(grid, &lap, &s) + inner(grid, &local, &s) - mu * inner(grid, &d, &s)
}

fn local_factor(pot: f64, a: f64, u: f64, v: f64) -> f64 {
    pot - 0.5 * a * (u * u + v * v)
}

const TAU_FLOOR: f64 = 1e-14;
const RESTORE_AFTER: usize = 10;

/// Normalized gradient flow for `E(a)` on `grid`.
pub fn minimize(grid: &Grid2D, spec: &PotentialSpec, a: f64, astar: f64, opts: &SolveOptions) -> Result<MinimizationResult> {
    grid.validate()?;
    if !(a >= 0.0) {
        return Err(Error::InvalidInput(format!("interaction strength a = {a} must be >= 0")));
    }
    if a >= astar {
        return Err(Error::Supercritical { a, astar });
    }
    if !(opts.residual_tol > 0.0) || opts.tau.is_some_and(|t| !(t > 0.0)) {
        return Err(Error::InvalidInput("tau and residual_tol must be positive".into()));
    }
    let (v, _) = spec.fill_grid(grid, opts.rule)?;
    let init = match &opts.continuation {
        Some(prev) => Init::Given(prev.clone()),
        None => opts.init.clone(),
    };
    let h = grid.spacing();
    let tau0 = opts.tau.unwrap_or(match opts.flow {
        Flow::Explicit => 0.25 * h * h,
        Flow::Preconditioned => 0.5,
    });
    let precond = match opts.flow {
        Flow::Preconditioned => Some(ShiftedLaplacian::new(grid)),
        Flow::Explicit => None,
    };

    let u0 = initial_field(grid, &init)?;
    let mut u = u0.data;
    let mut energy = energy_terms(&Field2D { grid: *grid, data: u.clone() }, &v, a);
    let initial_energy = energy.total;
    let mut history = vec![energy.total];
    let mut g = hamiltonian_action(grid, &v, &u, a);
    let (mut mu, mut residual) = residual_of(grid, &g, &u);
    let mut tau = tau0;
    let mut accepted_since = 0;
    let mut iters = 0;
    let mut stalled = false;

    while residual > opts.residual_tol && iters < opts.max_iters {
        iters += 1;
        let dir = match &precond {
            None => g.clone(),
            Some(p) => {
                let r: Vec<f64> = g.iter().zip(&u).map(|(gi, ui)| gi - mu * ui).collect();
                let sigma = energy.kinetic.max(-mu).max(1e-12);
                p.solve(&r, sigma)
            }
        };
        let mut step = None;
        while tau >= TAU_FLOOR * tau0 {
            if let Some(cand) = project_step(grid, &u, &dir, tau) {
                let change = energy_change(grid, &v, &u, &cand, a, mu);
                if change <= 0.0 {
                    let f = Field2D { grid: *grid, data: cand };
                    let e = energy_terms(&f, &v, a);
                    step = Some((f.data, e, change));
                    break;
                }
            }
            tau *= 0.5;
            accepted_since = 0;
        }
        let Some((next, e, change)) = step else {
            stalled = true;
            break;
        };
        u = next;
        energy = e;
        history.push(history.last().unwrap() + change);
        accepted_since += 1;
        if accepted_since >= RESTORE_AFTER {
            tau = (2.0 * tau).min(tau0);
            accepted_since = 0;
        }
        g = hamiltonian_action(grid, &v, &u, a);
        (mu, residual) = residual_of(grid, &g, &u);
    }

    let converged = residual <= opts.residual_tol;
    let mut warnings = Vec::new();
    if stalled {
        warnings.push(format!("step size collapsed below {:.1e} with residual {residual:.3e}", TAU_FLOOR * tau0));
    }
    if !converged && !stalled {
        warnings.push(format!("max_iters = {} reached with residual {residual:.3e}", opts.max_iters));
    }
    if energy.boundary_warning {
        warnings.push(format!("mass {:.3e} near the boundary; domain may be too small", energy.boundary_mass));
    }
    Ok(MinimizationResult {
        u: Field2D { grid: *grid, data: u },
        energy,
        mu,
        residual,
        iters,
        converged,
        initial_energy,
        history,
        warnings,
    })
}

/// Outcome of [`minimize_gn_ratio`].
#[derive(Debug, Clone)]
pub struct GnMinimum {
    pub u: Field2D,
    /// `gn_ratio(u)` of the final state.
    pub ratio: f64,
    pub iters: usize,
    pub converged: bool,
    /// Penalized objective after every accepted step.
    pub history: Vec<f64>,
}

const GN_PENALTY: f64 = 10.0;

/// Preconditioned projected descent of `R(u) = ∫|∇u|² ∫u² / (½∫u⁴)`.
///
/// `R` is dilation invariant, while grid errors lower it as a state shrinks,
/// so the flow minimizes `R + c (K/M - K₀)²` with `K₀` the kinetic energy of
/// the normalized `init`. The penalty vanishes along the optimal dilation
/// orbit and only fixes the width. Stops when the Euler-Lagrange residual,
/// relative to the gradient scale, drops below `tol`, or after 20 steps
/// that no longer lower the objective.
pub fn minimize_gn_ratio(init: &Field2D, max_iters: usize, tol: f64) -> Result<GnMinimum> {
    let grid = init.grid;
    let pre = ShiftedLaplacian::new(&grid);
    let mut u = initial_field(&grid, &Init::Given(init.clone()))?.data;
    let k0 = kinetic(&grid, &u);
    let parts = |u: &[f64]| -> (f64, f64) {
        let sq: Vec<f64> = u.iter().map(|x| x * x).collect();
        (kinetic(&grid, u) / inner(&grid, u, u), inner(&grid, &sq, &sq))
    };
    let objective = |k: f64, q4: f64| 2.0 * k / q4 + GN_PENALTY * (k - k0).powi(2);
    let (mut k, mut q4) = parts(&u);
    let mut value = objective(k, q4);
    let mut history = vec![value];
    let mut tau = 1.0;
    let mut accepted_since = 0;
    let mut iters = 0;
    let mut converged = false;
    let mut flat_steps = 0;
    while iters < max_iters && flat_steps < 20 {
        let ratio = 2.0 * k / q4;
        let lap = neg_laplacian(&grid, &u);
        let c_lap = 4.0 / q4 + 4.0 * GN_PENALTY * (k - k0);
        let c_cub = 4.0 * ratio / q4;
        let g: Vec<f64> = lap.iter().zip(&u).map(|(l, x)| c_lap * l - c_cub * x.powi(3)).collect();
        let (mu, residual) = residual_of(&grid, &g, &u);
        if residual <= tol * c_lap * k.max(1e-300).sqrt() {
            converged = true;
            break;
        }
        iters += 1;
        let r: Vec<f64> = g.iter().zip(&u).map(|(gi, ui)| gi - mu * ui).collect();
        let dir = pre.solve(&r, k);
        let mut step = None;
        while tau >= TAU_FLOOR {
            if let Some(cand) = project_step(&grid, &u, &dir, tau / c_lap) {
                let (kc, qc) = parts(&cand);
                let vc = objective(kc, qc);
                if vc <= value {
                    step = Some((cand, kc, qc, vc));
                    break;
                }
            }
            tau *= 0.5;
            accepted_since = 0;
        }
        let Some((next, kc, qc, vc)) = step else { break };
        flat_steps = if value - vc <= 1e-14 * value { flat_steps + 1 } else { 0 };
        u = next;
        (k, q4, value) = (kc, qc, vc);
        history.push(vc);
        accepted_since += 1;
        if accepted_since >= RESTORE_AFTER {
            tau = (2.0 * tau).min(1.0);
            accepted_since = 0;
        }
    }
    Ok(GnMinimum { u: Field2D { grid, data: u }, ratio: 2.0 * k / q4, iters, converged, history })
}

/// `1` on `[0, η]`, `0` beyond `2η`, quintic smoothstep in between; returns `(φ, φ')`.
fn cutoff(r: f64, eta: f64) -> (f64, f64) {
    if r <= eta {
        (1.0, 0.0)
    } else if r >= 2.0 * eta {
        (0.0, 0.0)
    } else {
        let s = (r - eta) / eta;
        let step = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
        let dstep = 30.0 * s * s * (1.0 - s) * (1.0 - s) / eta;
        (1.0 - step, -dstep)
    }
}

const ANGULAR_NODES: usize = 64;
const PANEL_WIDTH: f64 = 0.25;

/// `𝓔_a(u_ℓ)` for `u_ℓ(x) = A φ(x - x₀) ℓ Q₀(ℓ|x - x₀|)` with `A` the exact
/// normalization. Radial terms use composite Gauss-Legendre in `t = ℓr`; the
/// potential is integrated in polar coordinates about `x₀`, with a singular
/// point at `x₀` handled by the substitution `t = t₁ s^{1/(2-p)}`.
pub fn trial_energy(
    ell: f64,
    x0: [f64; 2],
    spec: &PotentialSpec,
    a: f64,
    profile: &RadialProfile,
    cutoff_eta: f64,
) -> Result<f64> {
    if !(ell > 0.0 && cutoff_eta > 0.0) || !ell.is_finite() {
        return Err(Error::InvalidInput(format!("ell = {ell} and cutoff_eta = {cutoff_eta} must be positive")));
    }
    spec.validate()?;
    let q = profile.normalized();
    let t_end = (2.0 * cutoff_eta * ell).min(profile.rmax);
    let panels = (t_end / PANEL_WIDTH).ceil().max(16.0) as usize;
    let mut breaks: Vec<f64> = (0..=panels).map(|i| t_end * i as f64 / panels as f64).collect();
    let knee = cutoff_eta * ell;
    if knee > 0.0 && knee < t_end && !breaks.contains(&knee) {
        breaks.push(knee);
        breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    }

    let coincident = |x: [f64; 2]| (x[0] - x0[0]).hypot(x[1] - x0[1]) <= 1e-12 * (1.0 + x0[0].hypot(x0[1]));
    let far_points: Vec<_> = spec.points.iter().filter(|pt| !coincident(pt.x)).collect();
    let angles: Vec<[f64; 2]> = (0..ANGULAR_NODES)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / ANGULAR_NODES as f64;
            [th.cos(), th.sin()]
        })
        .collect();
    let angular_mean = |r: f64| -> f64 {
        let s: f64 = angles
            .iter()
            .map(|e| {
                let x = [x0[0] + r * e[0], x0[1] + r * e[1]];
                let mut w = spec.g.eval(x);
                for pt in &far_points {
                    w += pt.h * (x[0] - pt.x[0]).hypot(x[1] - pt.x[1]).powf(-pt.p);
                }
                w
            })
            .sum();
        s / ANGULAR_NODES as f64
    };

    let rule = GaussLegendre::new(8);
    let (mut mass, mut kin, mut quartic, mut pot) = (0.0, 0.0, 0.0, 0.0);
    for w in breaks.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        for (node, weight) in rule.nodes.iter().zip(&rule.weights) {
            let t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * node;
            let wt = 0.5 * (t1 - t0) * weight * t;
            let r = t / ell;
            let (phi, dphi) = cutoff(r, cutoff_eta);
            let (q0, dq0) = q.eval(t);
            let f2 = phi * phi * q0 * q0;
            mass += wt * f2;
            kin += wt * (dphi * q0 / ell + phi * dq0).powi(2);
            quartic += wt * f2 * f2;
            pot += wt * f2 * angular_mean(r);
        }
    }
    let mut singular = 0.0;
    for pt in spec.points.iter().filter(|pt| coincident(pt.x)) {
        let k = 2.0 - pt.p;
        let mut s = 0.0;
        for w in breaks.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            if t0 == 0.0 {
                s += t1.powf(k) / k
                    * rule.integrate(0.0, 1.0, |z| {
                        let t = t1 * z.powf(1.0 / k);
                        let phi = cutoff(t / ell, cutoff_eta).0;
                        (phi * q.value(t)).powi(2)
                    });
            } else {
                s += rule.integrate(t0, t1, |t| {
                    let phi = cutoff(t / ell, cutoff_eta).0;
                    (phi * q.value(t)).powi(2) * t.powf(1.0 - pt.p)
                });
            }
        }
        singular += pt.h * ell.powf(pt.p) * s;
    }
    let two_pi = 2.0 * PI;
    let (mass, kin, quartic, pot) = (two_pi * mass, two_pi * kin * ell * ell, two_pi * quartic * ell * ell, two_pi * (pot + singular));
    let norm = 1.0 / mass;
    Ok(norm * (kin + pot) - 0.5 * a * norm * norm * quartic)
}

/// Smallest [`trial_energy`] over `ells`; returns `(ℓ, value)`.
pub fn trial_bound(
    ells: &[f64],
    x0: [f64; 2],
    spec: &PotentialSpec,
    a: f64,
    profile: &RadialProfile,
    cutoff_eta: f64,
) -> Result<(f64, f64)> {
    let mut best = (f64::NAN, f64::INFINITY);
    for &ell in ells {
        let e = trial_energy(ell, x0, spec, a, profile, cutoff_eta)?;
        if e < best.1 {
            best = (ell, e);
        }
    }
    if best.0.is_nan() {
        return Err(Error::InvalidInput("empty ell schedule".into()));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{energy_breakdown, Stencil};
    use crate::radial::{critical_constants, TownesSolver};
    use std::sync::OnceLock;

    fn profile() -> &'static RadialProfile {
        static P: OnceLock<RadialProfile> = OnceLock::new();
        P.get_or_init(|| TownesSolver::default().solve().unwrap())
    }

    fn astar() -> f64 {
        critical_constants(profile()).unwrap().astar
    }

    #[test]
    fn harmonic_ground_state() {
        let grid = Grid2D::new(8.0, 128).with_stencil(Stencil::FourthOrder);
        let opts = SolveOptions { residual_tol: 1e-7, ..SolveOptions::default() };
        let res = minimize(&grid, &PotentialSpec::harmonic(1.0), 0.0, astar(), &opts).unwrap();
        assert!(res.converged, "{:?}", res.warnings);
        assert!((res.energy.total - 2.0).abs() < 1e-3, "{}", res.energy.total);
        let exact = Field2D::from_fn(grid, |x| (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp()).normalized().unwrap();
        let (l2, _) = crate::field::h1_l2_distance(&res.u, &exact).unwrap();
        assert!(l2 < 1e-2);
        assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn preconditioned_flow_agrees_with_explicit() {
        let grid = Grid2D::new(8.0, 64);
        let spec = PotentialSpec::harmonic(1.0);
        let base = SolveOptions { residual_tol: 1e-8, ..SolveOptions::default() };
        let e = minimize(&grid, &spec, 3.0, astar(), &base).unwrap();
        let p = minimize(&grid, &spec, 3.0, astar(), &SolveOptions { flow: Flow::Preconditioned, ..base }).unwrap();
        assert!(e.converged && p.converged);
        assert!((e.energy.total - p.energy.total).abs() < 1e-12);
    }

    #[test]
    fn free_state_spreads() {
        let grid = Grid2D::new(4.0, 48);
        let opts = SolveOptions { max_iters: 3000, flow: Flow::Preconditioned, ..SolveOptions::default() };
        let res = minimize(&grid, &PotentialSpec::default(), 0.5 * astar(), astar(), &opts).unwrap();
        assert!(res.energy.total > 0.0);
        assert!(res.energy.total < res.initial_energy);
        assert!(res.energy.boundary_warning);
    }

    #[test]
    fn gn_flow_finds_townes_ratio_without_collapsing() {
        let grid = Grid2D::new(10.0, 96);
        let init = initial_field(&grid, &Init::Gaussian { center: [0.0, 0.0], width: 1.5 }).unwrap();
        let k0 = init.kinetic();
        let res = minimize_gn_ratio(&init, 2000, 1e-6).unwrap();
        assert!((res.ratio - astar()).abs() / astar() < 1e-2, "ratio {}", res.ratio);
        assert!((res.u.kinetic() - k0).abs() / k0 < 5e-2);
        assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn supercritical_is_refused() {
        let grid = Grid2D::new(4.0, 32);
        let err = minimize(&grid, &PotentialSpec::default(), astar(), astar(), &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Supercritical { .. }));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let grid = Grid2D::new(4.0, 40).with_stencil(Stencil::FourthOrder);
        let spec = PotentialSpec::single_well([0.1, -0.2], 1.0, -1.0);
        let (v, _) = spec.fill_grid(&grid, PotentialRule::CellAverage).unwrap();
        let u = initial_field(&grid, &Init::Gaussian { center: [0.3, 0.0], width: 0.8 }).unwrap();
        let d0 = Field2D::from_fn(grid, |x| (1.3 * x[0]).sin() * (0.7 * x[1]).cos());
        let c = inner(&grid, &d0.data, &u.data);
        let d: Vec<f64> = d0.data.iter().zip(&u.data).map(|(di, ui)| di - c * ui).collect();
        let a = 5.0;
        let grad = energy_gradient(&grid, &v, &u.data, a);
        let exact = inner(&grid, &grad, &d);
        let s = 1e-6;
        let shift = |sign: f64| -> Vec<f64> { u.data.iter().zip(&d).map(|(ui, di)| ui + sign * s * di).collect() };
        let fd = (discrete_energy(&grid, &v, &shift(1.0), a) - discrete_energy(&grid, &v, &shift(-1.0), a)) / (2.0 * s);
        assert!((fd - exact).abs() < 1e-5 * exact.abs(), "{fd} vs {exact}");
    }

    #[test]
    fn radial_potential_gives_symmetric_state() {
        let grid = Grid2D::new(6.0, 64);
        let spec = PotentialSpec::single_well([0.0, 0.0], 1.0, -1.0);
        let opts = SolveOptions {
            residual_tol: 1e-9,
            flow: Flow::Preconditioned,
            init: Init::Gaussian { center: [0.4, -0.3], width: 1.0 },
            ..SolveOptions::default()
        };
        let res = minimize(&grid, &spec, 0.5 * astar(), astar(), &opts).unwrap();
        assert!(res.converged);
        let n = grid.n;
        let max = res.u.data.iter().cloned().fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max((res.u.data[j * n + i] - res.u.data[(n - 1 - j) * n + (n - 1 - i)]).abs());
            }
        }
        assert!(worst <= 1e-6 * max, "{worst}");
    }

    #[test]
    fn coulomb_minimum_sits_below_trial_bound() {
        let a = 0.95 * astar();
        let grid = Grid2D::new(2.0, 128).with_stencil(Stencil::FourthOrder);
        let spec = PotentialSpec::single_well([0.0, 0.0], 1.0, -1.0);
        let opts = SolveOptions {
            residual_tol: 1e-6,
            flow: Flow::Preconditioned,
            rule: PotentialRule::CellAverage,
            init: Init::Townes { center: [0.0, 0.0], scale: 8.0, profile: Arc::new(profile().clone()) },
            ..SolveOptions::default()
        };
        let res = minimize(&grid, &spec, a, astar(), &opts).unwrap();
        let ells: Vec<f64> = (0..40).map(|k| 2f64.powf(k as f64 / 4.0)).collect();
        let (_, bound) = trial_bound(&ells, [0.0, 0.0], &spec, a, profile(), 1.0).unwrap();
        assert!(res.energy.total < 0.0);
        assert!(res.energy.total <= bound, "{} vs {bound}", res.energy.total);
    }

    #[test]
    fn trial_energy_free_limit() {
        let a = 0.9 * astar();
        let ell = 50.0;
        let e = trial_energy(ell, [0.0, 0.0], &PotentialSpec::default(), a, profile(), 1.0).unwrap();
        let expected = ell * ell * (astar() - a) / astar();
        assert!(((e - expected) / expected).abs() < 1e-3, "{e} vs {expected}");
    }

    #[test]
    fn trial_energy_harmonic_limit() {
        let x0 = [0.6, -0.8];
        let spec = PotentialSpec::harmonic(1.0);
        let ell = 100.0;
        let with = trial_energy(ell, x0, &spec, 0.0, profile(), 1.0).unwrap();
        let without = trial_energy(ell, x0, &PotentialSpec::default(), 0.0, profile(), 1.0).unwrap();
        assert!((with - without - 1.0).abs() < 1e-3);
    }

    #[test]
    fn trial_energy_coulomb_matches_closed_form_in_the_limit() {
        let a = 0.999 * astar();
        let spec = PotentialSpec::single_well([0.0, 0.0], 1.0, -1.0);
        let ell = 30.0;
        let e = trial_energy(ell, [0.0, 0.0], &spec, a, profile(), 2.0).unwrap();
        let i1 = crate::radial::singular_moment(profile(), 1.0).unwrap();
        let expected = ell * ell * (astar() - a) / astar() - ell * i1;
        assert!((e - expected).abs() < 1e-8 * expected.abs(), "{e} vs {expected}");
    }

    #[test]
    fn energy_breakdown_matches_flow_energy() {
        let grid = Grid2D::new(8.0, 64);
        let spec = PotentialSpec::harmonic(1.0);
        let opts = SolveOptions { max_iters: 10, ..SolveOptions::default() };
        let res = minimize(&grid, &spec, 1.0, astar(), &opts).unwrap();
        let e = energy_breakdown(&res.u, &spec, 1.0).unwrap();
        assert_eq!(e.total, res.energy.total);
    }
}
