//! Radial Townes profile: the positive solution of `Q'' + Q'/r - Q + Q^3 = 0`,
//! its critical constant a* and its singular moments.
//!
//! The profile is computed by shooting on `Q(0)`. Solutions starting above the
//! ground state cross zero, solutions starting below it turn back up at
//! positive `Q`; bisection between the two classes converges to the decaying
//! solution. Past the radius where the two bracket solutions separate, the
//! profile is continued by the decaying solution `C K0(r)` of the linearized
//! equation.

use crate::error::{Error, Result};
use crate::ode::{DormandPrince, Tolerance};
use crate::quadrature::GaussLegendre;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Radius below which the Taylor expansion about the origin replaces integration.
const SERIES_RADIUS: f64 = 0.01;
/// Grading parameter of the sinh mesh.
const MESH_GRADING: f64 = 3.0;
/// Bracket solutions are trusted until they differ by this much (relative to `q0`).
const MATCH_TOL: f64 = 1e-12;
/// The linear tail is only attached where `Q^3` is negligible.
const MIN_MATCH_RADIUS: f64 = 6.0;
const FAR_FIELD_RATIO: f64 = 1e-10;
const QUAD_ORDER: usize = 8;

/// Sampled Townes profile on a graded radial mesh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialProfile {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    pub q0: f64,
    pub rmax: f64,
}

/// `a* = ∫Q² = ∫|∇Q|² = ½∫Q⁴` together with the three integrals.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CriticalConstants {
    pub astar: f64,
    pub mass: f64,
    pub kinetic: f64,
    pub quartic: f64,
}

/// How a trial shooting solution leaves the neighbourhood of the ground state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShotOutcome {
    /// `Q` reaches zero: the initial value was too large.
    CrossesZero,
    /// `Q'` changes sign while `Q > 0`: the initial value was too small.
    TurnsBack,
    /// Neither happened before the integration limit.
    Undecided,
}

impl ShotOutcome {
    fn label(self) -> &'static str {
        match self {
            ShotOutcome::CrossesZero => "cross zero",
            ShotOutcome::TurnsBack => "turn back",
            ShotOutcome::Undecided => "are undecided",
        }
    }
}

/// Configuration of the shooting solver.
#[derive(Debug, Clone)]
pub struct TownesSolver {
    pub bracket: (f64, f64),
    pub rmax: f64,
    /// Maximal accepted width of the final bisection bracket.
    pub tol: f64,
    /// Number of intervals of the output mesh.
    pub mesh_intervals: usize,
    pub max_bisections: usize,
}

impl Default for TownesSolver {
    fn default() -> Self {
        TownesSolver {
            bracket: (2.0, 2.5),
            rmax: 30.0,
            tol: 1e-12,
            mesh_intervals: 4000,
            max_bisections: 200,
        }
    }
}

/// Solves the radial Townes equation with default mesh settings.
pub fn solve_townes(bracket: (f64, f64), rmax: f64, tol: f64) -> Result<RadialProfile> {
    TownesSolver { bracket, rmax, tol, ..TownesSolver::default() }.solve()
}

fn series_coefficients(q0: f64) -> [f64; 4] {
    let c2 = (q0 - q0.powi(3)) / 4.0;
    let c4 = c2 * (1.0 - 3.0 * q0 * q0) / 16.0;
    let c6 = (c4 * (1.0 - 3.0 * q0 * q0) - 3.0 * q0 * c2 * c2) / 36.0;
    [q0, c2, c4, c6]
}

fn series_state(q0: f64, r: f64) -> [f64; 2] {
    let [c0, c2, c4, c6] = series_coefficients(q0);
    let r2 = r * r;
    let q = c0 + r2 * (c2 + r2 * (c4 + r2 * c6));
    let dq = r * (2.0 * c2 + r2 * (4.0 * c4 + r2 * 6.0 * c6));
    [q, dq]
}

fn townes_rhs(r: f64, y: &[f64; 2]) -> [f64; 2] {
    [y[1], y[0] - y[0].powi(3) - y[1] / r]
}

fn ode_tolerance() -> Tolerance {
    Tolerance { rtol: 1e-14, atol: 1e-18 }
}

/// Classifies the solution started at `q0`, integrating at most to `r_end`.
pub fn classify_shot(q0: f64, r_end: f64) -> ShotOutcome {
    let start = series_state(q0, SERIES_RADIUS);
    if start[1] > 0.0 {
        return ShotOutcome::TurnsBack;
    }
    let mut outcome = ShotOutcome::Undecided;
    let mut stepper = DormandPrince::new(townes_rhs, ode_tolerance(), 1e-3);
    stepper.integrate(SERIES_RADIUS, start, r_end, |_, y| {
        if y[0] < 0.0 {
            outcome = ShotOutcome::CrossesZero;
            true
        } else if y[1] > 0.0 {
            outcome = ShotOutcome::TurnsBack;
            true
        } else {
            false
        }
    });
    outcome
}

/// Graded mesh `r_i = rmax sinh(α i/N) / sinh(α)`.
pub fn graded_mesh(rmax: f64, intervals: usize) -> Vec<f64> {
    let s = MESH_GRADING.sinh();
    (0..=intervals)
        .map(|i| {
            if i == intervals {
                rmax
            } else {
                rmax * (MESH_GRADING * i as f64 / intervals as f64).sinh() / s
            }
        })
        .collect()
}

/// Integrates the solution started at `q0` node by node while it stays
/// positive and decreasing.
fn trace_on_mesh(q0: f64, mesh: &[f64]) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(mesh.len());
    out.push([q0, 0.0]);
    let mut stepper = DormandPrince::new(townes_rhs, ode_tolerance(), 1e-3);
    let mut last_r = 0.0;
    let mut state = [q0, 0.0];
    for &r in &mesh[1..] {
        if r <= SERIES_RADIUS {
            state = series_state(q0, r);
        } else {
            if last_r < SERIES_RADIUS {
                state = series_state(q0, SERIES_RADIUS);
                last_r = SERIES_RADIUS;
            }
            let (_, y) = stepper.integrate(last_r, state, r, |_, _| false);
            state = y;
        }
        last_r = r;
        if !(state[0] > 0.0 && state[1] < 0.0 && state[0].is_finite()) {
            break;
        }
        out.push(state);
    }
    out
}

/// `e^z K_ν(z)` from the integral `∫₀^∞ exp(-z (cosh t - 1)) cosh(ν t) dt`.
pub fn bessel_k_scaled(nu: f64, z: f64) -> f64 {
    assert!(z > 0.0);
    let h = 0.02;
    let mut sum = 0.5;
    let mut k = 1usize;
    loop {
        let t = k as f64 * h;
        let term = (-z * (t.cosh() - 1.0)).exp() * (nu * t).cosh();
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
        k += 1;
    }
    sum * h
}

impl TownesSolver {
    pub fn solve(&self) -> Result<RadialProfile> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput("tol must be positive".into()));
        }
        if self.rmax < 20.0 {
            return Err(Error::InvalidInput(format!("rmax = {} is below 20", self.rmax)));
        }
        let (a, b) = self.bracket;
        if !(a > 0.0 && b > a) {
            return Err(Error::InvalidInput(format!("invalid bracket [{a}, {b}]")));
        }
        let probe = 4.0 * self.rmax;
        let oa = classify_shot(a, probe);
        let ob = classify_shot(b, probe);
        let (mut lo, mut hi) = match (oa, ob) {
            (ShotOutcome::TurnsBack, ShotOutcome::CrossesZero) => (a, b),
            (ShotOutcome::CrossesZero, ShotOutcome::TurnsBack) => (b, a),
            _ if oa == ob => {
                return Err(Error::BracketDoesNotStraddle { lo: a, hi: b, outcome: oa.label() })
            }
            _ => {
                return Err(Error::BracketDoesNotStraddle {
                    lo: a,
                    hi: b,
                    outcome: ShotOutcome::Undecided.label(),
                })
            }
        };
        // Bisect to the resolution limit of the integrator; the tail match
        // needs the bracket solutions to agree far beyond `tol`.
        let mut steps = 0;
        while steps < self.max_bisections {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            match classify_shot(mid, probe) {
                ShotOutcome::TurnsBack => lo = mid,
                ShotOutcome::CrossesZero => hi = mid,
                ShotOutcome::Undecided => {
                    lo = mid;
                    hi = mid;
                    break;
                }
            }
            steps += 1;
        }
        if (hi - lo).abs() >= self.tol {
            return Err(Error::NonConvergence { what: "shooting bisection", iterations: steps });
        }

        let mut rmax = self.rmax;
        loop {
            let profile = self.assemble(lo, hi, rmax)?;
            if *profile.values.last().unwrap() < FAR_FIELD_RATIO * profile.q0 {
                return Ok(profile);
            }
            rmax += 10.0;
        }
    }

    fn assemble(&self, lo: f64, hi: f64, rmax: f64) -> Result<RadialProfile> {
        let mesh = graded_mesh(rmax, self.mesh_intervals);
        let below = trace_on_mesh(lo, &mesh);
        let above = trace_on_mesh(hi, &mesh);
        let q0 = 0.5 * (lo + hi);
        let common = below.len().min(above.len());
        let mut matched = 0;
        for i in 0..common {
            if (below[i][0] - above[i][0]).abs() > MATCH_TOL * q0 {
                break;
            }
            matched = i;
        }
        let r_match = mesh[matched];
        if r_match < MIN_MATCH_RADIUS {
            return Err(Error::NonConvergence { what: "far-field matching", iterations: matched });
        }
        let mut values = Vec::with_capacity(mesh.len());
        let mut derivs = Vec::with_capacity(mesh.len());
        for i in 0..=matched {
            values.push(0.5 * (below[i][0] + above[i][0]));
            derivs.push(0.5 * (below[i][1] + above[i][1]));
        }
        let k0_match = bessel_k_scaled(0.0, r_match);
        // C K0(r) = Q(r_m) K0(r)/K0(r_m), evaluated in scaled form
        let amp = values[matched] / k0_match;
        for &r in &mesh[matched + 1..] {
            let decay = (r_match - r).exp();
            values.push(amp * bessel_k_scaled(0.0, r) * decay);
            derivs.push(-amp * bessel_k_scaled(1.0, r) * decay);
        }
        values[0] = q0;
        derivs[0] = 0.0;
        Ok(RadialProfile { nodes: mesh, values, derivs, q0, rmax })
    }
}

fn hermite5(t: f64, h: f64, left: [f64; 3], right: [f64; 3]) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    let h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h5 = 0.5 * t3 - t4 + 0.5 * t5;
    let d0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
    let d1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
    let d2 = t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4;
    let d3 = -d0;
    let d4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
    let d5 = 1.5 * t2 - 4.0 * t3 + 2.5 * t4;
    let v = left[0] * h0
        + h * left[1] * h1
        + h * h * left[2] * h2
        + right[0] * h3
        + h * right[1] * h4
        + h * h * right[2] * h5;
    let dv = (left[0] * d0
        + h * left[1] * d1
        + h * h * left[2] * d2
        + right[0] * d3
        + h * right[1] * d4
        + h * h * right[2] * d5)
        / h;
    (v, dv)
}

impl RadialProfile {
    /// Rebuilds a profile from stored samples, e.g. a `q-solve` table.
    pub fn from_samples(nodes: Vec<f64>, values: Vec<f64>, derivs: Vec<f64>) -> Result<Self> {
        let n = nodes.len();
        if n < 3 || values.len() != n || derivs.len() != n {
            return Err(Error::InvalidInput(format!(
                "profile columns have lengths {n}, {}, {} (need equal and at least 3)",
                values.len(),
                derivs.len()
            )));
        }
        if nodes[0] != 0.0 || !nodes.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput("profile radii must start at 0 and increase".into()));
        }
        if !values.iter().chain(&derivs).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("profile contains non-finite values".into()));
        }
        let (q0, rmax) = (values[0], nodes[n - 1]);
        Ok(RadialProfile { nodes, values, derivs, q0, rmax })
    }

    fn second_derivative(&self, i: usize) -> f64 {
        let q = self.values[i];
        let r = self.nodes[i];
        if r == 0.0 {
            0.5 * (q - q.powi(3))
        } else {
            q - q.powi(3) - self.derivs[i] / r
        }
    }

    fn jet(&self, i: usize) -> [f64; 3] {
        [self.values[i], self.derivs[i], self.second_derivative(i)]
    }

    /// `(Q(r), Q'(r))` by quintic Hermite interpolation; zero beyond `rmax`.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let r = r.abs();
        if r >= self.rmax {
            return (0.0, 0.0);
        }
        let i = match self.nodes.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
            Ok(i) => return (self.values[i], self.derivs[i]),
            Err(i) => i - 1,
        };
        let h = self.nodes[i + 1] - self.nodes[i];
        hermite5((r - self.nodes[i]) / h, h, self.jet(i), self.jet(i + 1))
    }

    /// Integrates `2π ∫ f(r, Q, Q') r^{1-p} dr` over the mesh. The first interval
    /// is mapped by `r = r₁ t^{1/(2-p)}`, which absorbs the weight at the origin.
    fn radial_integral<F: Fn(f64, f64, f64) -> f64>(&self, p: f64, f: F) -> f64 {
        let rule = GaussLegendre::new(QUAD_ORDER);
        let mut total = 0.0;
        let k = 2.0 - p;
        let r1 = self.nodes[1];
        let (j0, j1) = (self.jet(0), self.jet(1));
        total += r1.powf(k) / k
            * rule.integrate(0.0, 1.0, |t| {
                let r = r1 * t.powf(1.0 / k);
                let (q, dq) = hermite5(r / r1, r1, j0, j1);
                f(r, q, dq)
            });
        for i in 1..self.nodes.len() - 1 {
            let (a, b) = (self.nodes[i], self.nodes[i + 1]);
            let h = b - a;
            let (ja, jb) = (self.jet(i), self.jet(i + 1));
            total += rule.integrate(a, b, |r| {
                let (q, dq) = hermite5((r - a) / h, h, ja, jb);
                f(r, q, dq) * r.powf(1.0 - p)
            });
        }
        2.0 * PI * total
    }

    /// `∫|Q|²` over the plane.
    pub fn mass(&self) -> f64 {
        self.radial_integral(0.0, |_, q, _| q * q)
    }

    /// The unit-mass view `Q₀ = Q/‖Q‖`.
    pub fn normalized(&self) -> NormalizedProfile<'_> {
        NormalizedProfile { profile: self, scale: self.mass().sqrt().recip() }
    }

    /// Max-norm residual of the radial equation on interior nodes, with `Q''`
    /// obtained by seven-point differentiation of the stored `Q'`.
    pub fn ode_residual(&self) -> f64 {
        let n = self.nodes.len();
        let mut worst = 0.0f64;
        for i in 3..n - 4 {
            let xs = &self.nodes[i - 3..=i + 3];
            let w = fornberg_first_derivative(self.nodes[i], xs);
            let d2: f64 = w.iter().zip(&self.derivs[i - 3..=i + 3]).map(|(a, b)| a * b).sum();
            let q = self.values[i];
            let res = d2 + self.derivs[i] / self.nodes[i] - q + q.powi(3);
            worst = worst.max(res.abs());
        }
        worst
    }

    /// Whether the sampled values are strictly decreasing.
    pub fn is_strictly_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] < w[0])
    }
}

/// Weights of the first derivative at `x0` from values at `xs` (Fornberg).
fn fornberg_first_derivative(x0: f64, xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![[0.0f64; 2]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|w| w[1]).collect()
}

/// Unit-mass Townes profile `Q₀`, borrowing the underlying samples.
#[derive(Debug, Clone, Copy)]
pub struct NormalizedProfile<'a> {
    profile: &'a RadialProfile,
    scale: f64,
}

impl NormalizedProfile<'_> {
    pub fn value(&self, r: f64) -> f64 {
        self.scale * self.profile.eval(r).0
    }

    pub fn eval(&self, r: f64) -> (f64, f64) {
        let (q, dq) = self.profile.eval(r);
        (self.scale * q, self.scale * dq)
    }

    /// `β Q₀(β r)`, the unit-mass dilation.
    pub fn dilated(&self, beta: f64, r: f64) -> f64 {
        beta * self.value(beta * r)
    }

    pub fn value_at_origin(&self) -> f64 {
        self.scale * self.profile.q0
    }

    pub fn profile(&self) -> &RadialProfile {
        self.profile
    }
}

/// Mass, kinetic and quartic integrals; `astar` is the mass.
pub fn critical_constants(profile: &RadialProfile) -> Result<CriticalConstants> {
    let mass = profile.radial_integral(0.0, |_, q, _| q * q);
    let kinetic = profile.radial_integral(0.0, |_, _, dq| dq * dq);
    let quartic = profile.radial_integral(0.0, |_, q, _| q.powi(4));
    let half = 0.5 * quartic;
    if !((mass - kinetic).abs() <= 1e-5 * mass && (mass - half).abs() <= 1e-5 * mass) {
        return Err(Error::QuadratureInconsistency { mass, kinetic, half_quartic: half });
    }
    Ok(CriticalConstants { astar: mass, mass, kinetic, quartic })
}

/// `I_p = ∫ Q₀(x)² |x|^{-p} dx` for `0 < p < 2`.
pub fn singular_moment(profile: &RadialProfile, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 2.0) {
        return Err(Error::InvalidInput(format!("singular power p = {p} outside (0, 2)")));
    }
    let moment = profile.radial_integral(p, |_, q, _| q * q);
    Ok(moment / profile.mass())
}
