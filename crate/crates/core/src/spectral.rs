//! Fast inversion of `-Δ_h + σ` on the interior nodes of a Dirichlet grid
//! through the type-I discrete sine transform.

use crate::field::Grid2D;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// DST-I of length `m`, `X_k = Σ_j x_j sin(π j k / (m + 1))`, computed
/// from a complex FFT of the odd extension of length `2(m + 1)`.
pub struct SineTransform {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl SineTransform {
    pub fn new(m: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (m + 1));
        SineTransform { m, fft }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// Transforms `rows.len() / m` contiguous rows in place.
    pub fn apply_rows(&self, rows: &mut [f64]) {
        let m = self.m;
        rows.par_chunks_mut(m).for_each_init(
            || {
                (
                    vec![Complex::new(0.0, 0.0); 2 * (m + 1)],
                    vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()],
                )
            },
            |(buf, scratch), row| {
                buf[0] = Complex::new(0.0, 0.0);
                buf[m + 1] = Complex::new(0.0, 0.0);
                for (j, &x) in row.iter().enumerate() {
                    buf[j + 1] = Complex::new(x, 0.0);
                    buf[2 * (m + 1) - (j + 1)] = Complex::new(-x, 0.0);
                }
                self.fft.process_with_scratch(buf, scratch);
                for (k, x) in row.iter_mut().enumerate() {
                    *x = -0.5 * buf[k + 1].im;
                }
            },
        );
    }
}

fn transpose(src: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    out.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = src[j * m + i];
        }
    });
    out
}

/// Solver for `(-Δ_h + σ) x = b` with `-Δ_h` the grid's stencil.
pub struct ShiftedLaplacian {
    grid: Grid2D,
    dst: SineTransform,
    symbol: Vec<f64>,
}

impl ShiftedLaplacian {
    pub fn new(grid: &Grid2D) -> Self {
        let m = grid.n - 2;
        let h = grid.spacing();
        let symbol = (1..=m)
            .map(|k| {
                let s = (std::f64::consts::PI * k as f64 / (2.0 * (m + 1) as f64)).sin();
                grid.stencil.symbol(4.0 * s * s / (h * h), h)
            })
            .collect();
        ShiftedLaplacian { grid: *grid, dst: SineTransform::new(m), symbol }
    }

    /// Eigenvalues of the one-dimensional factor.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    /// Returns `x` with zero boundary such that `(-Δ_h + σ) x = b` on the interior.
    pub fn solve(&self, b: &[f64], sigma: f64) -> Vec<f64> {
        let n = self.grid.n;
        let m = n - 2;
        let mut work = vec![0.0; m * m];
        work.par_chunks_mut(m).enumerate().for_each(|(j, row)| {
            row.copy_from_slice(&b[(j + 1) * n + 1..(j + 1) * n + 1 + m]);
        });
        self.dst.apply_rows(&mut work);
        let mut t = transpose(&work, m);
        self.dst.apply_rows(&mut t);
        let scale = (2.0 / (m + 1) as f64).powi(2);
        t.par_chunks_mut(m).enumerate().for_each(|(kx, row)| {
            for (ky, v) in row.iter_mut().enumerate() {
                *v *= scale / (self.symbol[kx] + self.symbol[ky] + sigma);
            }
        });
        self.dst.apply_rows(&mut t);
        let mut work = transpose(&t, m);
        self.dst.apply_rows(&mut work);
        let mut out = vec![0.0; n * n];
        out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            if j == 0 || j == n - 1 {
                return;
            }
            row[1..n - 1].copy_from_slice(&work[(j - 1) * m..j * m]);
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{neg_laplacian, Stencil};

    #[test]
    fn dst_matches_definition() {
        let m = 7;
        let x: Vec<f64> = (0..m).map(|j| (j as f64 * 0.7).cos() + 0.1 * j as f64).collect();
        let mut y = x.clone();
        SineTransform::new(m).apply_rows(&mut y);
        for k in 0..m {
            let direct: f64 = (0..m)
                .map(|j| x[j] * (std::f64::consts::PI * ((j + 1) * (k + 1)) as f64 / (m + 1) as f64).sin())
                .sum();
            assert!((y[k] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_inverts_the_stencil() {
        for stencil in [Stencil::SecondOrder, Stencil::FourthOrder, Stencil::SixthOrder] {
            let g = Grid2D::new(2.0, 24).with_stencil(stencil);
            let n = g.n;
            let u: Vec<f64> = (0..n * n)
                .map(|k| {
                    let (i, j) = (k % n, k / n);
                    if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                        0.0
                    } else {
                        ((i * 7 + j * 3) % 11) as f64 - 5.0
                    }
                })
                .collect();
            let sigma = 0.75;
            let lap = neg_laplacian(&g, &u);
            let b: Vec<f64> = lap.iter().zip(&u).map(|(l, v)| l + sigma * v).collect();
            let x = ShiftedLaplacian::new(&g).solve(&b, sigma);
            let worst = x.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-10, "{stencil:?}: {worst}");
        }
    }
}
