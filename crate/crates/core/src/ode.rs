//! Adaptive Dormand-Prince 5(4) integrator for small autonomous-in-form systems.

/// Local error control settings.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Dormand-Prince stepper carrying its current step-size estimate.
pub struct DormandPrince<const N: usize, F>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    rhs: F,
    tol: Tolerance,
    h: f64,
    pub steps: usize,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

impl<const N: usize, F> DormandPrince<N, F>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    pub fn new(rhs: F, tol: Tolerance, initial_step: f64) -> Self {
        DormandPrince { rhs, tol, h: initial_step, steps: 0 }
    }

    /// Attempts one step of size at most `h_max`. Returns the new state and the
    /// size of the accepted step.
    fn step(&mut self, t: f64, y: &[f64; N], h_max: f64) -> ([f64; N], f64) {
        let mut h = self.h.min(h_max);
        loop {
            let k1 = (self.rhs)(t, y);
            let k2 = (self.rhs)(t + C2 * h, &axpy(y, h, &[(A21, &k1)]));
            let k3 = (self.rhs)(t + C3 * h, &axpy(y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = (self.rhs)(
                t + C4 * h,
                &axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
            );
            let k5 = (self.rhs)(
                t + C5 * h,
                &axpy(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = (self.rhs)(
                t + h,
                &axpy(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y_new = axpy(y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = (self.rhs)(t + h, &y_new);
            let mut err = 0.0f64;
            for i in 0..N {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.tol.atol + self.tol.rtol * y[i].abs().max(y_new[i].abs());
                err = err.max((e / sc).abs());
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                self.steps += 1;
                // keep the unconstrained estimate when the step was clipped by h_max
                if h < self.h && h == h_max {
                    self.h = self.h.max(h * factor);
                } else {
                    self.h = h * factor;
                }
                return (y_new, h);
            }
            h *= factor;
        }
    }

    /// Integrates from `t0` to `t1`, calling `stop` after every accepted step.
    /// Returns the final time and state; integration ends early when `stop`
    /// returns true.
    pub fn integrate<S>(&mut self, t0: f64, y0: [f64; N], t1: f64, mut stop: S) -> (f64, [f64; N])
    where
        S: FnMut(f64, &[f64; N]) -> bool,
    {
        let mut t = t0;
        let mut y = y0;
        while t < t1 {
            let remaining = t1 - t;
            let (y_new, h) = self.step(t, &y, remaining);
            t = if h == remaining { t1 } else { t + h };
            y = y_new;
            if !y.iter().all(|v| v.is_finite()) || stop(t, &y) {
                break;
            }
        }
        (t, y)
    }
}
