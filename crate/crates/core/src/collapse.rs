//! Sweeps `a ↑ a*`, locates the concentration point, rescales the minimizer
//! by `ε_a = (a* - a)^{1/(2-p)}` and compares it with `βQ₀(β·)`; fits the
//! energy blow-up rate and assembles a pass/fail report.

use crate::closedform::{beta_value, energy_limit, CollapseConstants};
use crate::error::{Error, Result};
use crate::field::{h1_l2_distance, rescale_extract, Field2D, Grid2D, Stencil};
use crate::minimizer::{minimize, trial_energy, Flow, Init, MinimizationResult, SolveOptions};
use crate::potential::{classify, PotentialRule, PotentialSpec, SelectionData};
use crate::quadrature::golden_section;
use crate::radial::{critical_constants, singular_moment, RadialProfile};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// How the computational window follows the collapse.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GridPolicy {
    /// Largest window half-width.
    #[serde(rename = "L")]
    pub half_width: f64,
    pub n: usize,
    /// Window half-width in units of the expected state width `ε/β`.
    pub window_factor: f64,
    pub stencil: Stencil,
    pub rule: PotentialRule,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            half_width: 12.0,
            n: 256,
            window_factor: 10.0,
            stencil: Stencil::SixthOrder,
            rule: PotentialRule::Corrected,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepOptions {
    pub grid: GridPolicy,
    pub flow: Flow,
    pub max_iters: usize,
    /// Residual tolerance in rescaled units; the solver receives
    /// `residual_tol · (β/ε)²`.
    pub residual_tol: f64,
    /// Warm-start each well from its previous solution.
    pub continuation: bool,
    /// Number of log-spaced trial scales in `[β/(4ε), 4β/ε]`.
    pub trial_points: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            grid: GridPolicy::default(),
            flow: Flow::Preconditioned,
            max_iters: 20_000,
            residual_tol: 1e-7,
            continuation: true,
            trial_points: 33,
        }
    }
}

/// Minimization started at one well.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CandidateRun {
    pub point: usize,
    pub energy: f64,
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepRecord {
    pub a: f64,
    pub a_over_astar: f64,
    pub eps_a: f64,
    pub energy: f64,
    /// `E(a) ε_a^p`.
    pub scaled_energy: f64,
    pub chosen_point: usize,
    pub mass_fraction: f64,
    pub l2_err: f64,
    pub h1_err: f64,
    /// Dilation `β'` minimizing the L² distance to `β'Q₀(β'·)`.
    pub fitted_beta: f64,
    pub residual: f64,
    pub converged: bool,
    pub iters: usize,
    /// Smallest trial energy over the ℓ-schedule (refined by golden section).
    pub trial_bound: f64,
    pub trial_ell: f64,
    pub window_half_width: f64,
    pub spacing: f64,
    pub runs: Vec<CandidateRun>,
    pub warnings: Vec<String>,
}

/// Sweep result with the constants it used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sweep {
    pub constants: CollapseConstants,
    pub beta: f64,
    pub energy_limit: f64,
    pub selection: SelectionData,
    pub records: Vec<SweepRecord>,
    /// `(a, reason)` for schedule points that were refused.
    pub skipped: Vec<(f64, String)>,
    /// Rescaled minimizer of the last record, on its output grid.
    #[serde(skip)]
    pub last_profile: Option<Field2D>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r2: f64,
    /// Smallest and largest `a` used.
    pub window: (f64, f64),
}

/// Where the mass of a state sits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Concentration {
    pub index: usize,
    pub mass_fraction: f64,
    /// Set when `mass_fraction < 0.5`.
    pub not_collapsed: bool,
}

/// Candidate well carrying the most mass within half the minimal separation.
pub fn locate_concentration(u: &Field2D, spec: &PotentialSpec) -> Result<Concentration> {
    let selection = classify(spec)?;
    let mut candidates = selection.candidates.clone();
    for j in spec.negative_wells() {
        if !candidates.contains(&j) {
            candidates.push(j);
        }
    }
    candidates.sort_unstable();
    let radius = 0.5 * spec.min_separation();
    let g = &u.grid;
    let n = g.n;
    let mut best: Option<(usize, f64)> = None;
    for &j in &candidates {
        let c = spec.points[j].x;
        let disk: Vec<f64> = (0..n * n)
            .map(|k| {
                let x = g.coord(k % n, k / n);
                if (x[0] - c[0]).hypot(x[1] - c[1]) <= radius {
                    u.data[k] * u.data[k]
                } else {
                    0.0
                }
            })
            .collect();
        let m = crate::field::integrate(g, &disk);
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((j, m));
        }
    }
    let (index, mass_fraction) = best.ok_or(Error::NoNegativeWell)?;
    Ok(Concentration { index, mass_fraction, not_collapsed: mass_fraction < 0.5 })
}

/// Least-squares line through `(ln(a* - a), ln(-E))`.
pub fn fit_power_law(records: &[SweepRecord], astar: f64) -> Result<PowerLawFit> {
    let a: Vec<f64> = records.iter().map(|r| r.a).collect();
    let e: Vec<f64> = records.iter().map(|r| r.energy).collect();
    fit_power_law_points(&a, &e, astar)
}

pub fn fit_power_law_points(a: &[f64], energy: &[f64], astar: f64) -> Result<PowerLawFit> {
    if a.len() != energy.len() || a.len() < 3 {
        return Err(Error::FitUndefined(format!("need at least 3 points, got {}", a.len())));
    }
    if let Some(e) = energy.iter().find(|e| !(**e < 0.0)) {
        return Err(Error::FitUndefined(format!("energy {e} is not negative")));
    }
    if let Some(x) = a.iter().find(|x| !(**x < astar)) {
        return Err(Error::FitUndefined(format!("a = {x} is not below a* = {astar}")));
    }
    let xs: Vec<f64> = a.iter().map(|x| (astar - x).ln()).collect();
    let ys: Vec<f64> = energy.iter().map(|e| (-e).ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::FitUndefined("all a values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    let lo = a.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(PowerLawFit { exponent: slope, prefactor: intercept.exp(), r2, window: (lo, hi) })
}

/// Collapse constants of the dominant wells, from the computed profile.
pub fn collapse_constants(spec: &PotentialSpec, profile: &RadialProfile) -> Result<(CollapseConstants, SelectionData)> {
    let selection = classify(spec)?;
    let astar = critical_constants(profile)?.astar;
    let ip = singular_moment(profile, selection.p)?;
    Ok((CollapseConstants::new(selection.p, selection.h0, astar, ip)?, selection))
}

fn dilation_error(w: &Field2D, profile: &RadialProfile, beta: f64) -> Result<(f64, f64)> {
    let q = profile.normalized();
    let phi = Field2D::from_fn(w.grid, |y| q.dilated(beta, y[0].hypot(y[1])));
    h1_l2_distance(w, &phi)
}

/// Dilation `β'` minimizing the L² distance from `w` to `β'Q₀(β'·)`.
pub fn fit_beta(w: &Field2D, profile: &RadialProfile, beta_guess: f64) -> Result<f64> {
    let objective = |t: f64| dilation_error(w, profile, beta_guess * t.exp()).map(|e| e.0).unwrap_or(f64::INFINITY);
    let (t, _) = golden_section(objective, -1.0, 1.0, 1e-5, 200)
        .ok_or(Error::NonConvergence { what: "dilation fit", iterations: 200 })?;
    Ok(beta_guess * t.exp())
}

/// Trial-energy upper bound: minimum over a log-spaced ℓ-schedule, refined
/// by golden section around the best schedule point.
pub fn trial_upper_bound(
    spec: &PotentialSpec,
    a: f64,
    profile: &RadialProfile,
    x0: [f64; 2],
    ell_center: f64,
    points: usize,
) -> Result<(f64, f64)> {
    let eta = if spec.points.len() > 1 { spec.min_separation() / 4.0 } else { 1.0 };
    let points = points.max(3);
    let span = 4f64.ln();
    let ells: Vec<f64> = (0..points)
        .map(|k| ell_center * (-span + 2.0 * span * k as f64 / (points - 1) as f64).exp())
        .collect();
    let (mut best_ell, mut best) = (ells[0], f64::INFINITY);
    for &ell in &ells {
        let e = trial_energy(ell, x0, spec, a, profile, eta)?;
        if e < best {
            (best_ell, best) = (ell, e);
        }
    }
    let step = 2.0 * span / (points - 1) as f64;
    let f = |t: f64| trial_energy(best_ell * t.exp(), x0, spec, a, profile, eta).unwrap_or(f64::INFINITY);
    if let Some((t, e)) = golden_section(f, -step, step, 1e-6, 200) {
        if e < best {
            return Ok((best_ell * t.exp(), e));
        }
    }
    Ok((best_ell, best))
}

struct WellRun {
    point: usize,
    result: MinimizationResult,
    eps: f64,
}

/// One record per schedule entry; see [`SweepOptions`] for the grid policy.
pub fn sweep(spec: &PotentialSpec, schedule: &[f64], profile: &RadialProfile, opts: &SweepOptions) -> Result<Sweep> {
    spec.validate()?;
    let (constants, selection) = collapse_constants(spec, profile)?;
    let astar = constants.astar;
    if schedule.is_empty() {
        return Err(Error::InvalidInput("empty schedule".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("schedule must be strictly increasing".into()));
    }
    if let Some(&a) = schedule.iter().find(|&&a| !(a >= 0.0 && a < astar)) {
        return Err(Error::Supercritical { a, astar });
    }
    let beta = beta_value(&constants)?;
    let limit = energy_limit(&constants)?;
    let shared = Arc::new(profile.clone());
    let wells = spec.negative_wells();
    let well_beta: Vec<f64> = wells
        .iter()
        .map(|&j| {
            let pt = spec.points[j];
            let c = CollapseConstants::new(pt.p, -pt.h, astar, singular_moment(profile, pt.p)?)?;
            beta_value(&c)
        })
        .collect::<Result<_>>()?;
    let policy = opts.grid;
    let mut previous: Vec<Option<WellRun>> = wells.iter().map(|_| None).collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut last_profile = None;

    for &a in schedule {
        let eps = (astar - a).powf(1.0 / (2.0 - constants.p));
        let mut runs: Vec<WellRun> = Vec::new();
        let mut refused = None;
        for (slot, &j) in wells.iter().enumerate() {
            let pt = spec.points[j];
            let eps_j = (astar - a).powf(1.0 / (2.0 - pt.p));
            let width = eps_j / well_beta[slot];
            let half = policy.half_width.min(policy.window_factor * width);
            let grid = Grid2D::new(half, policy.n).with_center(pt.x).with_stencil(policy.stencil);
            if width < 4.0 * grid.spacing() {
                refused = Some(format!("state width {width:.3e} below 4 grid spacings ({:.3e})", grid.spacing()));
                break;
            }
            let init = match (&previous[slot], opts.continuation) {
                (Some(prev), true) => {
                    let ratio = prev.eps / eps_j;
                    let old = &prev.result.u;
                    Init::Given(Field2D::from_fn(grid, |x| {
                        old.sample([pt.x[0] + ratio * (x[0] - pt.x[0]), pt.x[1] + ratio * (x[1] - pt.x[1])])
                    }))
                }
                _ => Init::Townes { center: pt.x, scale: 1.0 / width, profile: shared.clone() },
            };
            let solve = SolveOptions {
                tau: None,
                max_iters: opts.max_iters,
                residual_tol: opts.residual_tol / (width * width),
                init,
                continuation: None,
                flow: opts.flow,
                rule: policy.rule,
            };
            let result = minimize(&grid, spec, a, astar, &solve)?;
            runs.push(WellRun { point: j, result, eps: eps_j });
        }
        if let Some(reason) = refused {
            skipped.push((a, reason));
            continue;
        }
        let best = runs
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.result.energy.total.total_cmp(&y.1.result.energy.total))
            .map(|(k, _)| k)
            .expect("at least one negative well");
        let chosen = &runs[best];
        let u = &chosen.result.u;
        let mut warnings = chosen.result.warnings.clone();
        let located = locate_concentration(u, spec)?;
        if located.not_collapsed {
            warnings.push(format!("mass fraction {:.3} at the located well", located.mass_fraction));
        }
        let center = spec.points[located.index].x;
        let out_grid = Grid2D::new(u.grid.half_width / eps, u.grid.n)
            .with_center([(u.grid.center[0] - center[0]) / eps, (u.grid.center[1] - center[1]) / eps])
            .with_stencil(policy.stencil);
        let w = rescale_extract(u, center, eps, out_grid)?;
        let (l2_err, h1_err) = dilation_error(&w, profile, beta)?;
        let fitted_beta = fit_beta(&w, profile, beta)?;
        let (trial_ell, trial_bound) = trial_upper_bound(spec, a, profile, center, beta / eps, opts.trial_points)?;
        let energy = chosen.result.energy.total;
        records.push(SweepRecord {
            a,
            a_over_astar: a / astar,
            eps_a: eps,
            energy,
            scaled_energy: energy * eps.powf(constants.p),
            chosen_point: located.index,
            mass_fraction: located.mass_fraction,
            l2_err,
            h1_err,
            fitted_beta,
            residual: chosen.result.residual,
            converged: chosen.result.converged,
            iters: chosen.result.iters,
            trial_bound,
            trial_ell,
            window_half_width: u.grid.half_width,
            spacing: u.grid.spacing(),
            runs: runs
                .iter()
                .map(|r| CandidateRun {
                    point: r.point,
                    energy: r.result.energy.total,
                    residual: r.result.residual,
                    iters: r.result.iters,
                    converged: r.result.converged,
                })
                .collect(),
            warnings,
        });
        last_profile = Some(w);
        for run in runs {
            let slot = wells.iter().position(|&j| j == run.point).expect("run belongs to a well");
            previous[slot] = Some(run);
        }
    }
    Ok(Sweep { constants, beta, energy_limit: limit, selection, records, skipped, last_profile })
}

/// `a* · {0.90, 0.95, 0.98, 0.99, 0.995}`.
pub fn default_schedule(astar: f64) -> Vec<f64> {
    [0.90, 0.95, 0.98, 0.99, 0.995].iter().map(|f| f * astar).collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct Tolerances {
    pub exponent_rel: f64,
    pub prefactor_rel: f64,
    pub h1_final: f64,
    /// Relative slack allowed in the monotone decrease of the H¹ error.
    pub monotone_slack: f64,
    /// Records at or beyond this `a/a*` enter the asymptotic checks.
    pub asymptotic_from: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { exponent_rel: 0.10, prefactor_rel: 0.15, h1_final: 0.15, monotone_slack: 0.05, asymptotic_from: 0.9 }
    }
}

/// Fitted prefactors under two potential discretizations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct RuleSensitivity {
    pub primary: PotentialRule,
    pub alternate: PotentialRule,
    pub prefactor_primary: f64,
    pub prefactor_alternate: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub pass: bool,
    pub status: Status,
    pub constants: CollapseConstants,
    pub beta: f64,
    pub energy_limit: f64,
    pub expected_exponent: f64,
    pub fit: Option<PowerLawFit>,
    pub checks: Vec<Check>,
    pub records: Vec<SweepRecord>,
    pub skipped: Vec<(f64, String)>,
    pub sensitivity: Option<RuleSensitivity>,
}

fn check(name: &str, status: Status, detail: String) -> Check {
    Check { name: name.to_string(), status, detail }
}

fn pass_if(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

/// Runs the sweep and checks rate, prefactor, profile convergence, point
/// selection and the variational sandwich. With `sensitivity` set, the sweep
/// is repeated under the alternate potential rule to compare prefactors.
pub fn verify_theorem2(
    spec: &PotentialSpec,
    schedule: &[f64],
    profile: &RadialProfile,
    opts: &SweepOptions,
    tol: &Tolerances,
    sensitivity: bool,
) -> Result<VerificationReport> {
    let result = sweep(spec, schedule, profile, opts)?;
    let c = result.constants;
    let astar = c.astar;
    let limit = result.energy_limit;
    let expected = -c.p / (2.0 - c.p);
    let records = &result.records;
    let asymptotic: Vec<&SweepRecord> =
        records.iter().filter(|r| r.a_over_astar >= tol.asymptotic_from - 1e-12).collect();
    let fit = if asymptotic.len() >= 3 {
        let owned: Vec<SweepRecord> = asymptotic.iter().map(|r| (*r).clone()).collect();
        fit_power_law(&owned, astar).ok()
    } else {
        None
    };
    let mut checks = Vec::new();
    match fit {
        Some(f) => {
            let rel = ((f.exponent - expected) / expected).abs();
            checks.push(check(
                "rate-exponent",
                pass_if(rel <= tol.exponent_rel),
                format!("fitted {:.6}, expected {expected:.6}, relative deviation {rel:.4}", f.exponent),
            ));
            let rel = (f.prefactor - limit.abs()).abs() / limit.abs();
            checks.push(check(
                "rate-prefactor",
                pass_if(rel <= tol.prefactor_rel),
                format!("fitted {:.6}, |limit| {:.6}, relative deviation {rel:.4}", f.prefactor, limit.abs()),
            ));
        }
        None => {
            for name in ["rate-exponent", "rate-prefactor"] {
                checks.push(check(name, Status::Inconclusive, "fewer than 3 asymptotic records with negative energy".into()));
            }
        }
    }

    let tail: Vec<f64> = asymptotic.iter().rev().take(3).rev().map(|r| r.h1_err).collect();
    if tail.len() == 3 {
        let ok = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + tol.monotone_slack));
        checks.push(check("profile-monotone", pass_if(ok), format!("last H1 errors {tail:?}")));
    } else {
        checks.push(check("profile-monotone", Status::Inconclusive, "fewer than 3 asymptotic records".into()));
    }
    match records.iter().find(|r| r.a_over_astar >= 0.995 - 1e-9) {
        Some(r) => checks.push(check(
            "profile-final",
            pass_if(r.h1_err < tol.h1_final),
            format!("H1 error {:.5} at a/a* = {:.4}", r.h1_err, r.a_over_astar),
        )),
        None => checks.push(check("profile-final", Status::Inconclusive, "schedule stops before a/a* = 0.995".into())),
    }

    let tail_points: Vec<usize> = asymptotic.iter().rev().take(3).map(|r| r.chosen_point).collect();
    if tail_points.is_empty() {
        checks.push(check("point-selection", Status::Inconclusive, "no asymptotic records".into()));
    } else {
        let stable = tail_points.iter().all(|&j| j == tail_points[0]);
        let admissible = result.selection.candidates.contains(&tail_points[0]);
        checks.push(check(
            "point-selection",
            pass_if(stable && admissible),
            format!("chosen points {tail_points:?}, candidates {:?}", result.selection.candidates),
        ));
    }

    if asymptotic.is_empty() {
        checks.push(check("variational-sandwich", Status::Inconclusive, "no asymptotic records".into()));
    } else {
        let mut bad = Vec::new();
        for r in &asymptotic {
            let scaled = -r.scaled_energy;
            if r.energy > r.trial_bound {
                bad.push(format!("a/a* = {:.4}: E = {} above trial bound {}", r.a_over_astar, r.energy, r.trial_bound));
            }
            if !(scaled >= 0.1 * limit.abs() && scaled <= 10.0 * limit.abs()) {
                bad.push(format!("a/a* = {:.4}: -E eps^p = {scaled} outside [0.1, 10]·|limit|", r.a_over_astar));
            }
        }
        let detail = if bad.is_empty() { format!("{} records inside the sandwich", asymptotic.len()) } else { bad.join("; ") };
        checks.push(check("variational-sandwich", pass_if(bad.is_empty()), detail));
    }

    let sensitivity = match (sensitivity, fit) {
        (true, Some(f)) => {
            let alternate = match opts.grid.rule {
                PotentialRule::Corrected => PotentialRule::CellAverage,
                PotentialRule::CellAverage | PotentialRule::Pointwise => PotentialRule::Corrected,
            };
            let alt_opts = SweepOptions { grid: GridPolicy { rule: alternate, ..opts.grid }, ..opts.clone() };
            let alt = sweep(spec, schedule, profile, &alt_opts)?;
            let alt_records: Vec<SweepRecord> =
                alt.records.into_iter().filter(|r| r.a_over_astar >= tol.asymptotic_from - 1e-12).collect();
            fit_power_law(&alt_records, astar).ok().map(|g| RuleSensitivity {
                primary: opts.grid.rule,
                alternate,
                prefactor_primary: f.prefactor,
                prefactor_alternate: g.prefactor,
                ratio: g.prefactor / f.prefactor,
            })
        }
        _ => None,
    };

    let status = if checks.iter().any(|c| c.status == Status::Fail) {
        Status::Fail
    } else if checks.iter().any(|c| c.status == Status::Inconclusive) {
        Status::Inconclusive
    } else {
        Status::Pass
    };
    Ok(VerificationReport {
        pass: status == Status::Pass,
        status,
        constants: c,
        beta: result.beta,
        energy_limit: limit,
        expected_exponent: expected,
        fit,
        checks,
        records: result.records,
        skipped: result.skipped,
        sensitivity,
    })
}
