//! Grid functions on `center + [-L, L]²` with homogeneous Dirichlet data,
//! compatible discrete Laplacian / kinetic-energy pairs, trapezoidal
//! quadrature, and the derived energies.
//!
//! Node `(i, j)` sits at `center + (-L + i h, -L + j h)` and is stored at
//! `j * n + i`. Boundary nodes carry zero. Every kinetic form below equals
//! `⟨-Δ_h u, u⟩` exactly (up to rounding) for fields vanishing on the
//! boundary, which is what keeps the discrete gradient flow consistent.

use crate::error::{Error, Result};
use crate::potential::{PotentialRule, PotentialSpec};
use crate::quadrature::pairwise_sum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Finite-difference Laplacian family.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Stencil {
    /// Five-point Laplacian with the forward-difference gradient.
    #[default]
    SecondOrder,
    /// `A + h²A²/12` per axis, `A` the three-point operator; fourth order in
    /// the interior and still a sum of squares.
    FourthOrder,
    /// `A + h²A²/12 + h⁴A³/90` per axis.
    SixthOrder,
}

impl Stencil {
    /// Eigenvalue of the one-dimensional operator for a three-point eigenvalue `lam`.
    pub fn symbol(self, lam: f64, h: f64) -> f64 {
        let c = h * h * lam;
        match self {
            Stencil::SecondOrder => lam,
            Stencil::FourthOrder => lam * (1.0 + c / 12.0),
            Stencil::SixthOrder => lam * (1.0 + c / 12.0 + c * c / 90.0),
        }
    }
}

/// Square node grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Grid2D {
    #[serde(rename = "L")]
    pub half_width: f64,
    pub n: usize,
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default)]
    pub stencil: Stencil,
}

impl Grid2D {
    pub fn new(half_width: f64, n: usize) -> Self {
        assert!(n >= 16, "grid needs at least 16 nodes per side");
        assert!(half_width > 0.0, "grid half-width must be positive");
        Grid2D { half_width, n, center: [0.0, 0.0], stencil: Stencil::SecondOrder }
    }

    pub fn with_center(mut self, center: [f64; 2]) -> Self {
        self.center = center;
        self
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.stencil = stencil;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 16 || !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return Err(Error::InvalidInput(format!("invalid grid L = {}, n = {}", self.half_width, self.n)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n as f64 - 1.0)
    }

    pub fn coord(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.spacing();
        [
            self.center[0] - self.half_width + i as f64 * h,
            self.center[1] - self.half_width + j as f64 * h,
        ]
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n - 1 || j == self.n - 1
    }

    /// Trapezoidal weight of node `(i, j)`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let h = self.spacing();
        let edge = |k: usize| if k == 0 || k == self.n - 1 { 0.5 } else { 1.0 };
        h * h * edge(i) * edge(j)
    }

    /// Whether `x` lies in the closed domain.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let slack = 1e-12 * self.half_width;
        (x[0] - self.center[0]).abs() <= self.half_width + slack
            && (x[1] - self.center[1]).abs() <= self.half_width + slack
    }
}

/// Real grid function.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub grid: Grid2D,
    pub data: Vec<f64>,
}

/// Energy split of a normalized state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub potential: f64,
    /// `(a/2) ∫ u⁴`.
    pub interaction: f64,
    pub total: f64,
    /// Mass in the outer tenth of the domain.
    pub boundary_mass: f64,
    /// Set when `boundary_mass` exceeds `1e-6`.
    pub boundary_warning: bool,
}

const BOUNDARY_MASS_LIMIT: f64 = 1e-6;
const NORMALIZATION_TOL: f64 = 1e-8;

/// Weighted sum `Σ_ij w_ij f(i, j)`: rows are summed in parallel, row sums
/// are combined pairwise in row order, so the result is thread-count independent.
fn grid_sum<F>(grid: &Grid2D, f: F) -> f64
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let n = grid.n;
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let vals: Vec<f64> = (0..n).map(|i| grid.weight(i, j) * f(i, j)).collect();
            pairwise_sum(&vals)
        })
        .collect();
    pairwise_sum(&rows)
}

/// `∫ f` by the trapezoidal rule.
pub fn integrate(grid: &Grid2D, values: &[f64]) -> f64 {
    let n = grid.n;
    grid_sum(grid, |i, j| values[j * n + i])
}

/// `⟨u, v⟩` in the trapezoidal inner product.
pub fn inner(grid: &Grid2D, u: &[f64], v: &[f64]) -> f64 {
    let n = grid.n;
    grid_sum(grid, |i, j| u[j * n + i] * v[j * n + i])
}

/// Second difference along one axis at an interior node, boundary values
/// taken from the array (zero for Dirichlet fields).
fn axis_second_difference(u: &[f64], n: usize, i: usize, j: usize, axis: usize, inv_h2: f64) -> f64 {
    let k = j * n + i;
    let step = if axis == 0 { 1 } else { n };
    (2.0 * u[k] - u[k - step] - u[k + step]) * inv_h2
}

fn axis_operator(grid: &Grid2D, u: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.n;
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        if j == 0 || j == n - 1 {
            return;
        }
        for i in 1..n - 1 {
            row[i] = axis_second_difference(u, n, i, j, axis, inv_h2);
        }
    });
    out
}

/// `-Δ_h u` on interior nodes, zero on the boundary.
pub fn neg_laplacian(grid: &Grid2D, u: &[f64]) -> Vec<f64> {
    let n = grid.n;
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    match grid.stencil {
        Stencil::SecondOrder => {
            let mut out = vec![0.0; n * n];
            out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
                if j == 0 || j == n - 1 {
                    return;
                }
                for i in 1..n - 1 {
                    row[i] = axis_second_difference(u, n, i, j, 0, inv_h2)
                        + axis_second_difference(u, n, i, j, 1, inv_h2);
                }
            });
            out
        }
        Stencil::FourthOrder | Stencil::SixthOrder => {
            let ax = axis_operator(grid, u, 0);
            let ay = axis_operator(grid, u, 1);
            let axx = axis_operator(grid, &ax, 0);
            let ayy = axis_operator(grid, &ay, 1);
            let c2 = h * h / 12.0;
            let mut out: Vec<f64> = (0..n * n)
                .into_par_iter()
                .map(|k| ax[k] + ay[k] + c2 * (axx[k] + ayy[k]))
                .collect();
            if grid.stencil == Stencil::SixthOrder {
                let axxx = axis_operator(grid, &axx, 0);
                let ayyy = axis_operator(grid, &ayy, 1);
                let c4 = h.powi(4) / 90.0;
                out.par_iter_mut().enumerate().for_each(|(k, v)| *v += c4 * (axxx[k] + ayyy[k]));
            }
            out
        }
    }
}

/// `Σ (u_{k+e} - u_k)²` over the grid edges along `axis` (both axes when `None`).
fn edge_squares(grid: &Grid2D, u: &[f64], axis: Option<usize>) -> f64 {
    let n = grid.n;
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut vals = Vec::with_capacity(2 * n);
            for i in 0..n {
                let k = j * n + i;
                if i + 1 < n && axis != Some(1) {
                    vals.push((u[k + 1] - u[k]).powi(2));
                }
                if j + 1 < n && axis != Some(0) {
                    vals.push((u[k + n] - u[k]).powi(2));
                }
            }
            pairwise_sum(&vals)
        })
        .collect();
    pairwise_sum(&rows)
}

/// `∫|∇_h u|²` in the form paired with [`neg_laplacian`].
pub fn kinetic(grid: &Grid2D, u: &[f64]) -> f64 {
    let n = grid.n;
    let first = edge_squares(grid, u, None);
    if grid.stencil == Stencil::SecondOrder {
        return first;
    }
    let h = grid.spacing();
    let ax = axis_operator(grid, u, 0);
    let ay = axis_operator(grid, u, 1);
    let second = grid_sum(grid, |i, j| {
        let k = j * n + i;
        ax[k] * ax[k] + ay[k] * ay[k]
    });
    let mut total = first + h * h / 12.0 * second;
    if grid.stencil == Stencil::SixthOrder {
        // ⟨A³u, u⟩ = ‖D(Au)‖² along each axis
        let third = edge_squares(grid, &ax, Some(0)) + edge_squares(grid, &ay, Some(1));
        total += h.powi(4) / 90.0 * third;
    }
    total
}

impl Field2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Field2D { grid, data: vec![0.0; grid.len()] }
    }

    /// Samples `f` at the nodes; the boundary ring is set to zero.
    pub fn from_fn<F: Fn([f64; 2]) -> f64 + Sync>(grid: Grid2D, f: F) -> Self {
        let n = grid.n;
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            for (i, v) in row.iter_mut().enumerate() {
                if !grid.is_boundary(i, j) {
                    *v = f(grid.coord(i, j));
                }
            }
        });
        Field2D { grid, data }
    }

    pub fn from_data(grid: Grid2D, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} nodes", data.len(), grid.len())));
        }
        Ok(Field2D { grid, data })
    }

    pub fn mass(&self) -> f64 {
        inner(&self.grid, &self.data, &self.data)
    }

    pub fn quartic(&self) -> f64 {
        let n = self.grid.n;
        grid_sum(&self.grid, |i, j| self.data[j * n + i].powi(4))
    }

    pub fn kinetic(&self) -> f64 {
        kinetic(&self.grid, &self.data)
    }

    /// Rescales to unit mass.
    pub fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::ZeroField);
        }
        let s = m.sqrt().recip();
        self.data.iter_mut().for_each(|v| *v *= s);
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    /// Mass carried by nodes in the outer tenth of the domain.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.grid.n;
        let half = (n as f64 - 1.0) / 2.0;
        let inner_radius = 0.9 * half;
        grid_sum(&self.grid, |i, j| {
            let di = (i as f64 - half).abs();
            let dj = (j as f64 - half).abs();
            if di.max(dj) > inner_radius {
                self.data[j * n + i].powi(2)
            } else {
                0.0
            }
        })
    }

    /// Bilinear interpolation at `x`; zero outside the domain.
    pub fn sample(&self, x: [f64; 2]) -> f64 {
        let g = &self.grid;
        if !g.contains(x) {
            return 0.0;
        }
        let h = g.spacing();
        let n = g.n;
        let fx = ((x[0] - g.center[0] + g.half_width) / h).clamp(0.0, (n - 1) as f64);
        let fy = ((x[1] - g.center[1] + g.half_width) / h).clamp(0.0, (n - 1) as f64);
        let i = (fx.floor() as usize).min(n - 2);
        let j = (fy.floor() as usize).min(n - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let at = |ii: usize, jj: usize| self.data[jj * n + ii];
        (1.0 - ty) * ((1.0 - tx) * at(i, j) + tx * at(i + 1, j))
            + ty * ((1.0 - tx) * at(i, j + 1) + tx * at(i + 1, j + 1))
    }

    /// Largest value and its node coordinate.
    pub fn argmax(&self) -> ([f64; 2], f64) {
        let n = self.grid.n;
        let (k, v) = self
            .data
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best });
        (self.grid.coord(k % n, k / n), v)
    }
}

fn require_normalized(u: &Field2D) -> Result<f64> {
    let m = u.mass();
    if (m - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized(m));
    }
    Ok(m)
}

/// Energy split of a normalized `u` for potential node values `v`.
pub fn energy_breakdown_on(u: &Field2D, v: &[f64], a: f64) -> Result<EnergyBreakdown> {
    require_normalized(u)?;
    if v.len() != u.data.len() {
        return Err(Error::GridMismatch("potential and field sizes differ".into()));
    }
    if !(a >= 0.0) {
        return Err(Error::InvalidInput(format!("interaction strength a = {a} must be >= 0")));
    }
    Ok(energy_terms(u, v, a))
}

pub(crate) fn energy_terms(u: &Field2D, v: &[f64], a: f64) -> EnergyBreakdown {
    let n = u.grid.n;
    let kinetic = u.kinetic();
    let potential = grid_sum(&u.grid, |i, j| {
        let k = j * n + i;
        v[k] * u.data[k] * u.data[k]
    });
    let interaction = 0.5 * a * u.quartic();
    let boundary_mass = u.boundary_mass();
    EnergyBreakdown {
        kinetic,
        potential,
        interaction,
        total: kinetic + potential - interaction,
        boundary_mass,
        boundary_warning: boundary_mass > BOUNDARY_MASS_LIMIT,
    }
}

/// Energy split of a normalized `u`, sampling `spec` pointwise.
pub fn energy_breakdown(u: &Field2D, spec: &PotentialSpec, a: f64) -> Result<EnergyBreakdown> {
    energy_breakdown_with(u, spec, a, PotentialRule::Pointwise)
}

pub fn energy_breakdown_with(
    u: &Field2D,
    spec: &PotentialSpec,
    a: f64,
    rule: PotentialRule,
) -> Result<EnergyBreakdown> {
    let (v, _) = spec.fill_grid(&u.grid, rule)?;
    energy_breakdown_on(u, &v, a)
}

/// `∫|∇u|² ∫u² / (½∫u⁴)`, the dilation-invariant Gagliardo-Nirenberg quotient.
pub fn gn_ratio(u: &Field2D) -> Result<f64> {
    let q = u.quartic();
    if !(q > 0.0) {
        return Err(Error::ZeroField);
    }
    Ok(u.kinetic() * u.mass() / (0.5 * q))
}

/// `w(x) = ε u(center + ε x)` on `out_grid`, renormalized to unit mass.
pub fn rescale_extract(u: &Field2D, center: [f64; 2], eps: f64, out_grid: Grid2D) -> Result<Field2D> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps = {eps} must be positive")));
    }
    let reach = out_grid.half_width;
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            let corner = [
                center[0] + eps * (out_grid.center[0] + sx * reach),
                center[1] + eps * (out_grid.center[1] + sy * reach),
            ];
            if !u.grid.contains(corner) {
                return Err(Error::WindowOutOfDomain(format!(
                    "corner ({}, {}) outside the source grid",
                    corner[0], corner[1]
                )));
            }
        }
    }
    let w = Field2D::from_fn(out_grid, |x| eps * u.sample([center[0] + eps * x[0], center[1] + eps * x[1]]));
    w.normalized()
}

/// `(‖u - v‖_{L²}, ‖u - v‖_{H¹})` with the grid's kinetic form.
pub fn h1_l2_distance(u: &Field2D, v: &Field2D) -> Result<(f64, f64)> {
    if u.grid != v.grid {
        return Err(Error::GridMismatch("fields live on different grids".into()));
    }
    let diff: Vec<f64> = u.data.iter().zip(&v.data).map(|(a, b)| a - b).collect();
    let l2sq = inner(&u.grid, &diff, &diff);
    let grad = kinetic(&u.grid, &diff);
    Ok((l2sq.sqrt(), (l2sq + grad).sqrt()))
}

#[derive(Serialize, Deserialize)]
struct FieldHeader {
    #[serde(flatten)]
    grid: Grid2D,
}

impl Field2D {
    /// CSV with a `# {json header}` line, then `x,y,u` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        let header = serde_json::to_string(&FieldHeader { grid: self.grid })
            .map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "# {header}")?;
        writeln!(w, "x,y,u")?;
        let n = self.grid.n;
        for j in 0..n {
            for i in 0..n {
                let [x, y] = self.grid.coord(i, j);
                writeln!(w, "{x},{y},{}", self.data[j * n + i])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        let first = lines.next().ok_or_else(|| Error::Format("empty field file".into()))??;
        let json = first
            .strip_prefix('#')
            .ok_or_else(|| Error::Format("missing '#' header line".into()))?;
        let header: FieldHeader =
            serde_json::from_str(json.trim()).map_err(|e| Error::Format(e.to_string()))?;
        let grid = header.grid;
        grid.validate()?;
        let mut data = Vec::with_capacity(grid.len());
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if lineno == 0 && line.trim() == "x,y,u" {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let value = line
                .rsplit(',')
                .next()
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Format(format!("bad row {}: {line}", lineno + 2)))?;
            data.push(value);
        }
        Field2D::from_data(grid, data)
    }

    /// JSON header line followed by little-endian `f64` node values.
    pub fn write_binary<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        let header = serde_json::to_string(&FieldHeader { grid: self.grid })
            .map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{header}")?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(input: R) -> Result<Self> {
        let mut r = BufReader::new(input);
        let mut header = String::new();
        r.read_line(&mut header)?;
        let header: FieldHeader =
            serde_json::from_str(header.trim()).map_err(|e| Error::Format(e.to_string()))?;
        header.grid.validate()?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * header.grid.len() {
            return Err(Error::Format(format!("expected {} bytes of data, found {}", 8 * header.grid.len(), bytes.len())));
        }
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Field2D::from_data(header.grid, data)
    }

    /// Writes CSV for `.csv` paths and the binary format otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            self.write_csv(file)
        } else {
            self.write_binary(file)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            Field2D::read_csv(file)
        } else {
            Field2D::read_binary(file)
        }
    }
}
