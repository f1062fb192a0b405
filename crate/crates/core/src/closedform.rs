//! Closed-form collapse constants: the limiting dilation β, the energy limit,
//! and the one-dimensional objective whose minimizer they describe.

use crate::error::{Error, Result};
use crate::quadrature::golden_section;
use serde::{Deserialize, Serialize};

/// Data entering the collapse constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CollapseConstants {
    /// Dominant singularity power, in `(0, 2)`.
    pub p: f64,
    /// Depth `-min h(x_j)` over the dominant wells.
    pub h0: f64,
    pub astar: f64,
    /// Singular moment `∫ Q₀² |x|^{-p}`.
    #[serde(rename = "Ip")]
    pub ip: f64,
}

impl CollapseConstants {
    pub fn new(p: f64, h0: f64, astar: f64, ip: f64) -> Result<Self> {
        let c = CollapseConstants { p, h0, astar, ip };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.p > 0.0
            && self.p < 2.0
            && self.h0 > 0.0
            && self.astar > 0.0
            && self.ip > 0.0
            && self.h0.is_finite()
            && self.astar.is_finite()
            && self.ip.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid collapse constants {self:?}")))
        }
    }

    fn gap(&self) -> f64 {
        2.0 - self.p
    }
}

/// `β = (a* h₀ p I_p / 2)^{1/(2-p)}`.
pub fn beta_value(c: &CollapseConstants) -> Result<f64> {
    c.validate()?;
    let gap = c.gap();
    Ok((c.astar * c.h0 * c.p * c.ip / 2.0).powf(1.0 / gap))
}

/// `f(λ) = λ²/a* - λ^p h₀ I_p`.
pub fn lambda_objective(lambda: f64, c: &CollapseConstants) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!("lambda = {lambda} must be positive")));
    }
    Ok(lambda * lambda / c.astar - lambda.powf(c.p) * c.h0 * c.ip)
}

/// `(h₀ I_p)^{2/(2-p)} (a*)^{p/(2-p)} ((p/2)^{2/(2-p)} - (p/2)^{p/(2-p)})`.
pub fn energy_limit(c: &CollapseConstants) -> Result<f64> {
    c.validate()?;
    let gap = c.gap();
    let half_p = c.p / 2.0;
    Ok((c.h0 * c.ip).powf(2.0 / gap)
        * c.astar.powf(c.p / gap)
        * (half_p.powf(2.0 / gap) - half_p.powf(c.p / gap)))
}

/// Minimizer and minimum of `f` found numerically by golden-section search.
///
/// The search runs in `t = ln λ`. A first pass covers `[λ_s/10, 10 λ_s]`
/// around the stationary point `λ_s` of `2λ/a* = p h₀ I_p λ^{p-1}`; a second
/// pass re-centres on the first result and compares objective differences
/// formed with `expm1`, which resolves the minimizer well below the
/// square-root-of-epsilon barrier of a plain value comparison.
pub fn minimize_lambda(c: &CollapseConstants, tol: f64) -> Result<(f64, f64)> {
    c.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let stationary = (c.p * c.h0 * c.ip * c.astar / 2.0).powf(1.0 / c.gap());
    let fail = || Error::NonConvergence { what: "golden-section search", iterations: 400 };

    let mut center = stationary;
    let mut half_width = 10f64.ln();
    for _ in 0..3 {
        let quad = center * center / c.astar;
        let lin = center.powf(c.p) * c.h0 * c.ip;
        let diff = |t: f64| quad * (2.0 * t).exp_m1() - lin * (c.p * t).exp_m1();
        let (t, _) = golden_section(diff, -half_width, half_width, tol.min(1e-3) * 1e-2, 400)
            .ok_or_else(fail)?;
        center *= t.exp();
        half_width = (t.abs() * 4.0).max(1e-7);
    }
    let value = lambda_objective(center, c)?;
    Ok((center, value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> CollapseConstants {
        CollapseConstants::new(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn sample() -> CollapseConstants {
        CollapseConstants::new(1.0, 2.0, 3.0, 5.0).unwrap()
    }

    #[test]
    fn beta_examples() {
        assert_eq!(beta_value(&unit()).unwrap(), 0.5);
        assert!((beta_value(&sample()).unwrap() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn objective_examples() {
        assert_eq!(lambda_objective(1.0, &unit()).unwrap(), 0.0);
        assert_eq!(lambda_objective(0.5, &unit()).unwrap(), -0.25);
        assert!(lambda_objective(0.0, &unit()).is_err());
    }

    #[test]
    fn energy_limit_examples() {
        assert!((energy_limit(&unit()).unwrap() + 0.25).abs() < 1e-15);
        assert!((energy_limit(&sample()).unwrap() + 75.0).abs() < 1e-12);
    }

    #[test]
    fn objective_at_beta_is_the_energy_limit() {
        for c in [unit(), sample(), CollapseConstants::new(0.7, 0.3, 11.7, 1.9).unwrap()] {
            let b = beta_value(&c).unwrap();
            let f = lambda_objective(b, &c).unwrap();
            let e = energy_limit(&c).unwrap();
            assert!((f - e).abs() <= 1e-12 * e.abs(), "{f} vs {e}");
        }
    }

    #[test]
    fn minimize_examples() {
        let (l, v) = minimize_lambda(&unit(), 1e-12).unwrap();
        assert!((l - 0.5).abs() < 1e-10);
        assert!((v + 0.25).abs() < 1e-14);
        let (l, v) = minimize_lambda(&sample(), 1e-12).unwrap();
        assert!((l - 15.0).abs() < 1e-9);
        assert!((v + 75.0).abs() < 1e-10);
    }

    #[test]
    fn invalid_constants_are_rejected() {
        assert!(CollapseConstants::new(2.0, 1.0, 1.0, 1.0).is_err());
        assert!(CollapseConstants::new(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(CollapseConstants::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(CollapseConstants::new(1.0, 1.0, 1.0, f64::NAN).is_err());
    }
}
