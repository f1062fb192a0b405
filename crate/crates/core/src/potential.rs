//! Potentials `V(x) = g(x) + Σ_j h_j |x - x_j|^{-p_j}` with a non-negative
//! smooth background `g` and finitely many singular wells or bumps.

use crate::error::{Error, Result};
use crate::field::Grid2D;
use crate::quadrature::{pairwise_sum, GaussLegendre};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::gamma::gamma;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Smooth non-negative background `g`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Background {
    #[default]
    Zero,
    /// `g(x) = ω² |x|²`.
    Harmonic { omega: f64 },
    /// Node values on `[-L, L]²` with `n` nodes per side (row-major, `y` outer),
    /// bilinearly interpolated; zero outside the table.
    Tabulated { half_width: f64, n: usize, values: Vec<f64> },
}

impl Background {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            Background::Zero => 0.0,
            Background::Harmonic { omega } => omega * omega * (x[0] * x[0] + x[1] * x[1]),
            Background::Tabulated { half_width, n, values } => {
                let h = 2.0 * half_width / (*n as f64 - 1.0);
                let fx = (x[0] + half_width) / h;
                let fy = (x[1] + half_width) / h;
                if fx < 0.0 || fy < 0.0 || fx > (*n - 1) as f64 || fy > (*n - 1) as f64 {
                    return 0.0;
                }
                let i = (fx.floor() as usize).min(n - 2);
                let j = (fy.floor() as usize).min(n - 2);
                let (tx, ty) = (fx - i as f64, fy - j as f64);
                let at = |ii: usize, jj: usize| values[jj * n + ii];
                (1.0 - ty) * ((1.0 - tx) * at(i, j) + tx * at(i + 1, j))
                    + ty * ((1.0 - tx) * at(i, j + 1) + tx * at(i + 1, j + 1))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Background::Zero => Ok(()),
            Background::Harmonic { omega } if omega.is_finite() => Ok(()),
            Background::Harmonic { omega } => {
                Err(Error::InvalidInput(format!("harmonic stiffness {omega} is not finite")))
            }
            Background::Tabulated { half_width, n, values } => {
                if !(*half_width > 0.0) || *n < 2 || values.len() != n * n {
                    return Err(Error::InvalidInput("malformed tabulated background".into()));
                }
                if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidInput("tabulated background must be >= 0".into()));
                }
                Ok(())
            }
        }
    }
}

/// One singular term `h |x - x₀|^{-p}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SingularPoint {
    pub x: [f64; 2],
    pub p: f64,
    pub h: f64,
}

/// Full potential description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct PotentialSpec {
    #[serde(default)]
    pub g: Background,
    #[serde(default)]
    pub points: Vec<SingularPoint>,
    /// Distance floor for pointwise evaluation; zero means exact.
    #[serde(default)]
    pub reg_delta: f64,
}

/// Which singular wells drive the collapse.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SelectionData {
    pub p: f64,
    pub h0: f64,
    pub candidates: Vec<usize>,
}

/// How a potential is sampled on grid nodes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialRule {
    /// `V` at the node with the distance floor `reg_delta` (spacing/2 when unset).
    #[default]
    Pointwise,
    /// Exact cell averages of the singular terms, `g` at the node.
    CellAverage,
    /// Pointwise values plus a fixed correction on the nodes nearest each
    /// singular point, making the trapezoidal sum `Σ h² V u²` accurate to
    /// `O(h^{5-p})` for smooth `u`. See [`corrected_stencil`].
    Corrected,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl PotentialSpec {
    /// Single well `h |x - x₀|^{-p}` with no background.
    pub fn single_well(x: [f64; 2], p: f64, h: f64) -> Self {
        PotentialSpec { g: Background::Zero, points: vec![SingularPoint { x, p, h }], reg_delta: 0.0 }
    }

    pub fn harmonic(omega: f64) -> Self {
        PotentialSpec { g: Background::Harmonic { omega }, points: Vec::new(), reg_delta: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.g.validate()?;
        if !(self.reg_delta >= 0.0) {
            return Err(Error::InvalidInput("reg_delta must be >= 0".into()));
        }
        for (j, pt) in self.points.iter().enumerate() {
            if !(pt.p > 0.0 && pt.p < 2.0) {
                return Err(Error::InvalidInput(format!("point {j}: p = {} outside (0, 2)", pt.p)));
            }
            if !pt.h.is_finite() || !pt.x.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidInput(format!("point {j}: non-finite data")));
            }
            for (k, other) in self.points[..j].iter().enumerate() {
                if pt.x == other.x {
                    return Err(Error::InvalidInput(format!("points {k} and {j} coincide")));
                }
            }
        }
        Ok(())
    }

    /// `V(x)`; singular points are floored at `reg_delta`.
    pub fn evaluate(&self, x: [f64; 2]) -> Result<f64> {
        let mut v = self.g.eval(x);
        for pt in &self.points {
            let d = dist(x, pt.x).max(self.reg_delta);
            if d == 0.0 {
                return Err(Error::SingularPoint(x[0], x[1]));
            }
            v += pt.h * d.powf(-pt.p);
        }
        Ok(v)
    }

    /// Smallest distance between two singular points (infinite for fewer than two).
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (j, a) in self.points.iter().enumerate() {
            for b in &self.points[j + 1..] {
                best = best.min(dist(a.x, b.x));
            }
        }
        best
    }

    /// Indices of wells with `h_j < 0`.
    pub fn negative_wells(&self) -> Vec<usize> {
        (0..self.points.len()).filter(|&j| self.points[j].h < 0.0).collect()
    }

    /// Samples `V` on every node of `grid` (row-major, `y` outer). Returns the
    /// values and the distance floor used by the pointwise rule.
    pub fn fill_grid(&self, grid: &Grid2D, rule: PotentialRule) -> Result<(Vec<f64>, f64)> {
        self.validate()?;
        let n = grid.n;
        let h = grid.spacing();
        let floor = if self.reg_delta > 0.0 { self.reg_delta } else { 0.5 * h };
        let floored = PotentialSpec { reg_delta: floor, ..self.clone() };
        let far = GaussLegendre::new(3);
        let mut out = vec![0.0; n * n];
        out.par_chunks_mut(n).enumerate().try_for_each(|(j, row)| -> Result<()> {
            for (i, slot) in row.iter_mut().enumerate() {
                let c = grid.coord(i, j);
                *slot = match rule {
                    PotentialRule::Pointwise => floored.evaluate(c)?,
                    PotentialRule::CellAverage => {
                        let mut v = self.g.eval(c);
                        for pt in &self.points {
                            v += pt.h * cell_average(c, pt, h, &far);
                        }
                        v
                    }
                    PotentialRule::Corrected => {
                        let mut v = self.g.eval(c);
                        for pt in &self.points {
                            let d = dist(c, pt.x);
                            if d > 1e-12 * h {
                                v += pt.h * d.powf(-pt.p);
                            }
                        }
                        v
                    }
                };
            }
            Ok(())
        })?;
        if rule == PotentialRule::Corrected {
            for pt in &self.points {
                let fx = (pt.x[0] - grid.center[0] + grid.half_width) / h;
                let fy = (pt.x[1] - grid.center[1] + grid.half_width) / h;
                let (i0, j0) = (fx.floor(), fy.floor());
                let mut delta = [fx - i0, fy - j0];
                let (mut i0, mut j0) = (i0 as i64, j0 as i64);
                // snap offsets within rounding of a node onto it
                for (d, k) in delta.iter_mut().zip([&mut i0, &mut j0]) {
                    if *d > 1.0 - 1e-9 {
                        *d = 0.0;
                        *k += 1;
                    } else if *d < 1e-9 {
                        *d = 0.0;
                    }
                }
                for (m, w) in corrected_stencil(pt.p, delta) {
                    let (i, j) = (i0 + m[0], j0 + m[1]);
                    if i >= 1 && j >= 1 && i < n as i64 - 1 && j < n as i64 - 1 {
                        out[j as usize * n + i as usize] += pt.h * w * h.powf(-pt.p);
                    }
                }
            }
        }
        Ok((out, floor))
    }
}

fn cell_average(c: [f64; 2], pt: &SingularPoint, h: f64, far: &GaussLegendre) -> f64 {
    if dist(c, pt.x) > 8.0 * h {
        let mut s = 0.0;
        for (a, wa) in far.nodes.iter().zip(&far.weights) {
            for (b, wb) in far.nodes.iter().zip(&far.weights) {
                let x = c[0] + 0.5 * h * a - pt.x[0];
                let y = c[1] + 0.5 * h * b - pt.x[1];
                s += wa * wb * x.hypot(y).powf(-pt.p);
            }
        }
        s / 4.0
    } else {
        let lo = [c[0] - 0.5 * h - pt.x[0], c[1] - 0.5 * h - pt.x[1]];
        let hi = [lo[0] + h, lo[1] + h];
        rectangle_power_integral(lo, hi, pt.p) / (h * h)
    }
}

const MONOMIALS: [(i32, i32); 6] = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];

/// `∫ |y|^{-p} m(y) e^{-|y|²/s²} dy - Σ_{k ≠ 0} |y_k|^{-p} m(y_k) e^{-|y_k|²/s²}`
/// over the unit lattice `y_k = k - δ`, for the monomials in [`MONOMIALS`].
fn lattice_defects(p: f64, delta: [f64; 2], s: f64) -> [f64; 6] {
    let reach = (7.0 * s).ceil() as i64 + 3;
    let rows: Vec<[f64; 6]> = (-reach..=reach)
        .into_par_iter()
        .map(|i| {
            let mut acc = [0.0; 6];
            let x = i as f64 - delta[0];
            for j in -reach..=reach {
                let y = j as f64 - delta[1];
                let r = x.hypot(y);
                if r < 1e-12 {
                    continue;
                }
                let w = r.powf(-p) * (-(r / s).powi(2)).exp();
                for (slot, (a, b)) in acc.iter_mut().zip(MONOMIALS) {
                    *slot += w * x.powi(a) * y.powi(b);
                }
            }
            acc
        })
        .collect();
    let mut out = [0.0; 6];
    for (slot, (a, b)) in out.iter_mut().zip(MONOMIALS) {
        let k = (2.0 - p + (a + b) as f64) / 2.0;
        let radial = 0.5 * s.powf(2.0 * k) * gamma(k);
        let angular = match (a, b) {
            (0, 0) => 2.0 * PI,
            (2, 0) | (0, 2) => PI,
            _ => 0.0,
        };
        *slot = radial * angular;
    }
    for (slot, idx) in out.iter_mut().zip(0..6) {
        let lattice: Vec<f64> = rows.iter().map(|r| r[idx]).collect();
        *slot -= pairwise_sum(&lattice);
    }
    out
}

/// Correction weights for `∫ |y|^{-p} f(y) dy` on the unit lattice `k - δ`,
/// `δ ∈ [0, 1)²`: the node sum `Σ_{k ≠ 0} |y_k|^{-p} f(y_k) + Σ_m c_m f(y_m)`
/// is exact for quadratic `f` times a wide Gaussian. The stencil holds the
/// nodes with `|y_m|_∞ < 2`; each entry is the index offset `m` relative to the
/// node below-left of the point and its weight. The lattice defects are
/// extrapolated from windows of width 16 and 32.
pub fn corrected_stencil(p: f64, delta: [f64; 2]) -> Vec<([i64; 2], f64)> {
    let d1 = lattice_defects(p, delta, 16.0);
    let d2 = lattice_defects(p, delta, 32.0);
    let target = DVector::from_iterator(6, (0..6).map(|k| (4.0 * d2[k] - d1[k]) / 3.0));
    let mut nodes = Vec::new();
    for i in -1..=2i64 {
        for j in -1..=2i64 {
            let y = [i as f64 - delta[0], j as f64 - delta[1]];
            if y[0].abs() < 2.0 && y[1].abs() < 2.0 {
                nodes.push(([i, j], y));
            }
        }
    }
    let a = DMatrix::from_fn(6, nodes.len(), |r, c| {
        let (ea, eb) = MONOMIALS[r];
        nodes[c].1[0].powi(ea) * nodes[c].1[1].powi(eb)
    });
    // minimum-norm solution of the underdetermined moment system
    let gram = &a * a.transpose();
    let coef = gram.cholesky().expect("stencil moments are independent").solve(&target);
    let weights = a.transpose() * coef;
    nodes.iter().zip(weights.iter()).map(|((m, _), w)| (*m, *w)).collect()
}

/// `∫_R |x|^{-p} dx` over the axis-aligned rectangle `R = [lo, hi]` for
/// `0 ≤ p < 2`, by summing signed triangles fanned from the origin. Each
/// triangle reduces to `∫ R(θ)^{2-p}/(2-p) dθ` along the edge.
pub fn rectangle_power_integral(lo: [f64; 2], hi: [f64; 2], p: f64) -> f64 {
    let corners = [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    let rule = GaussLegendre::new(10);
    let k = 2.0 - p;
    let scale = (hi[0] - lo[0]).abs().max((hi[1] - lo[1]).abs());
    let mut total = 0.0;
    for e in 0..4 {
        let a = corners[e];
        let b = corners[(e + 1) % 4];
        let cross = a[0] * b[1] - a[1] * b[0];
        if cross.abs() <= 1e-15 * scale * scale {
            continue;
        }
        let dot = a[0] * b[0] + a[1] * b[1];
        let sweep = cross.atan2(dot);
        let theta_a = a[1].atan2(a[0]);
        let edge = [b[0] - a[0], b[1] - a[1]];
        let num = a[0] * edge[1] - a[1] * edge[0];
        let pieces = ((sweep.abs() / (PI / 16.0)).ceil() as usize).max(1);
        let step = sweep / pieces as f64;
        for piece in 0..pieces {
            let t0 = theta_a + piece as f64 * step;
            total += rule.integrate(t0, t0 + step, |theta| {
                let den = theta.cos() * edge[1] - theta.sin() * edge[0];
                (num / den).powf(k) / k
            });
        }
    }
    total
}

/// Dominant power, depth and candidate wells of `spec`.
pub fn classify(spec: &PotentialSpec) -> Result<SelectionData> {
    let p = spec
        .points
        .iter()
        .filter(|pt| pt.h < 0.0)
        .map(|pt| pt.p)
        .fold(f64::NEG_INFINITY, f64::max);
    if p == f64::NEG_INFINITY {
        return Err(Error::NoNegativeWell);
    }
    let h0 = -spec
        .points
        .iter()
        .filter(|pt| pt.p == p)
        .map(|pt| pt.h)
        .fold(f64::INFINITY, f64::min);
    let candidates = (0..spec.points.len())
        .filter(|&j| spec.points[j].p == p && spec.points[j].h == -h0)
        .collect();
    Ok(SelectionData { p, h0, candidates })
}
