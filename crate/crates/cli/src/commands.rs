//! Command implementations and artifact writers.

use crate::config::{Command, InitConfig, Loaded, RunConfig};
use crate::svg::{Plot, Series};
use crate::ConfigArgs;
use anyhow::{bail, Context, Result};
use gp_collapse::closedform::{beta_value, energy_limit, minimize_lambda};
use gp_collapse::collapse::{self, fit_power_law, Status, SweepRecord};
use gp_collapse::field::{energy_breakdown_with, Field2D, Grid2D};
use gp_collapse::minimizer::{self, Init};
use gp_collapse::potential::{classify, PotentialSpec};
use gp_collapse::radial::{critical_constants, CriticalConstants, RadialProfile, TownesSolver};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NUMERIC: u8 = 2;
pub const EXIT_HYPOTHESIS: u8 = 3;

/// A computation finished but its result is not acceptable.
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

/// 1 for usage and input errors, 2 for numeric failures, 3 when the potential
/// violates the collapse hypotheses.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use gp_collapse::Error as E;
    for cause in err.chain() {
        if cause.is::<NumericFailure>() {
            return EXIT_NUMERIC;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NoNegativeWell => EXIT_HYPOTHESIS,
                E::InvalidInput(_) | E::Supercritical { .. } | E::SingularPoint(..) | E::Format(_) => EXIT_USAGE,
                _ => EXIT_NUMERIC,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_NUMERIC;
        }
    }
    EXIT_USAGE
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    r: f64,
    #[serde(rename = "Q")]
    q: f64,
    #[serde(rename = "Qprime")]
    qprime: f64,
}

#[derive(Debug, Serialize)]
struct ProfileConstants {
    astar: f64,
    mass: f64,
    kinetic: f64,
    quartic: f64,
    q0: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_svg(path: &Path, plot: &Plot) -> Result<()> {
    fs::write(path, plot.render()).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_profile(path: &Path, profile: &RadialProfile) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for i in 0..profile.nodes.len() {
        w.serialize(ProfileRow { r: profile.nodes[i], q: profile.values[i], qprime: profile.derivs[i] })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_profile(path: &Path) -> Result<RadialProfile> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading profile {}", path.display()))?;
    let (mut nodes, mut values, mut derivs) = (Vec::new(), Vec::new(), Vec::new());
    for row in r.deserialize() {
        let row: ProfileRow = row.with_context(|| format!("parsing profile {}", path.display()))?;
        nodes.push(row.r);
        values.push(row.q);
        derivs.push(row.qprime);
    }
    Ok(RadialProfile::from_samples(nodes, values, derivs)?)
}

pub fn q_solve(out: &Path, rmax: f64, mesh: usize) -> Result<()> {
    if mesh < 10 {
        bail!("--mesh must be at least 10");
    }
    let profile = TownesSolver { rmax, mesh_intervals: mesh, ..TownesSolver::default() }.solve()?;
    let c = critical_constants(&profile)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_profile(out, &profile)?;
    let constants_path = out.with_file_name("constants.json");
    write_json(
        &constants_path,
        &ProfileConstants { astar: c.astar, mass: c.mass, kinetic: c.kinetic, quartic: c.quartic, q0: profile.q0 },
    )?;
    println!("q0 = {}, a* = {}", profile.q0, c.astar);
    println!("wrote {} and {}", out.display(), constants_path.display());
    Ok(())
}

struct RunContext {
    loaded: Loaded,
    profile: RadialProfile,
    constants: CriticalConstants,
    out: PathBuf,
}

fn prepare(args: &ConfigArgs) -> Result<RunContext> {
    let loaded = Loaded::read(&args.config)?;
    let profile_path = match (&args.from_profile, &loaded.config.profile) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(p)) => Some(loaded.resolve(p)),
        (None, None) => None,
    };
    let profile = match profile_path {
        Some(p) => read_profile(&p)?,
        None => TownesSolver::default().solve()?,
    };
    let constants = critical_constants(&profile).context("radial profile fails the identity check")?;
    let out = args.out.clone().unwrap_or_else(|| loaded.output_dir());
    ensure_dir(&out)?;
    Ok(RunContext { loaded, profile, constants, out })
}

#[derive(Serialize)]
struct ConstantsReport {
    astar: f64,
    p: f64,
    h0: f64,
    #[serde(rename = "Ip")]
    ip: f64,
    beta: f64,
    energy_limit: f64,
    /// Numerical minimizer and minimum of `λ²/a* - λ^p h₀ I_p`.
    lambda_star: f64,
    lambda_value: f64,
    candidates: Vec<usize>,
}

pub fn constants(args: &ConfigArgs) -> Result<()> {
    let ctx = prepare(args)?;
    let spec = ctx.loaded.config.potential()?;
    let (c, selection) = collapse::collapse_constants(spec, &ctx.profile)?;
    let (lambda_star, lambda_value) = minimize_lambda(&c, 1e-12)?;
    let report = ConstantsReport {
        astar: c.astar,
        p: c.p,
        h0: c.h0,
        ip: c.ip,
        beta: beta_value(&c)?,
        energy_limit: energy_limit(&c)?,
        lambda_star,
        lambda_value,
        candidates: selection.candidates,
    };
    write_json(&ctx.out.join("collapse_constants.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

#[derive(Serialize)]
struct PotentialReport<'a> {
    spec: &'a PotentialSpec,
    p: f64,
    h0: f64,
    candidates: Vec<usize>,
    negative_wells: Vec<usize>,
    min_separation: Option<f64>,
    grid: Grid2D,
    rule: gp_collapse::potential::PotentialRule,
    distance_floor: f64,
    min_value: f64,
    max_value: f64,
}

pub fn potential_check(args: &ConfigArgs) -> Result<()> {
    let loaded = Loaded::read(&args.config)?;
    let spec = loaded.config.potential()?;
    let selection = classify(spec)?;
    let grid = loaded.config.grid();
    let rule = loaded.config.grid_policy().rule;
    let (values, floor) = spec.fill_grid(&grid, rule)?;
    let (min_value, max_value) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let sep = spec.min_separation();
    let report = PotentialReport {
        spec,
        p: selection.p,
        h0: selection.h0,
        candidates: selection.candidates,
        negative_wells: spec.negative_wells(),
        min_separation: sep.is_finite().then_some(sep),
        grid,
        rule,
        distance_floor: floor,
        min_value,
        max_value,
    };
    let out = args.out.clone().unwrap_or_else(|| loaded.output_dir());
    ensure_dir(&out)?;
    write_json(&out.join("potential.json"), &report)?;
    println!("p = {}, h0 = {}, candidates {:?}", report.p, report.h0, report.candidates);
    Ok(())
}

#[derive(Serialize)]
struct MinimizeReport {
    astar: f64,
    a: f64,
    a_over_astar: f64,
    grid: Grid2D,
    energy: gp_collapse::field::EnergyBreakdown,
    mu: f64,
    residual: f64,
    iters: usize,
    converged: bool,
    initial_energy: f64,
    warnings: Vec<String>,
    field: PathBuf,
}

fn initial_state(config: &RunConfig, loaded: &Loaded, profile: &RadialProfile) -> Result<Option<Init>> {
    Ok(match &config.solver.init {
        None => None,
        Some(InitConfig::Gaussian { center, width }) => Some(Init::Gaussian { center: *center, width: *width }),
        Some(InitConfig::Townes { center, scale }) => {
            Some(Init::Townes { center: *center, scale: *scale, profile: Arc::new(profile.clone()) })
        }
        Some(InitConfig::File { path }) => Some(Init::Given(Field2D::load(&loaded.resolve(path))?)),
    })
}

pub fn minimize(args: &ConfigArgs, a_over_astar: Option<f64>) -> Result<()> {
    let ctx = prepare(args)?;
    let config = &ctx.loaded.config;
    let spec = config.potential()?;
    let fraction = a_over_astar.or(config.a_over_astar).context("minimize needs a_over_astar")?;
    if !(0.0..1.0).contains(&fraction) {
        bail!("a_over_astar = {fraction} must lie in [0, 1)");
    }
    let astar = ctx.constants.astar;
    let a = fraction * astar;
    let grid = config.grid();
    let mut opts = config.solve_options();
    if let Some(init) = initial_state(config, &ctx.loaded, &ctx.profile)? {
        opts.init = init;
    }
    let res = minimizer::minimize(&grid, spec, a, astar, &opts)?;
    let field_path = ctx.out.join("ground_state.bin");
    res.u.save(&field_path)?;
    let energy = energy_breakdown_with(&res.u, spec, a, opts.rule)?;
    let report = MinimizeReport {
        astar,
        a,
        a_over_astar: fraction,
        grid,
        energy,
        mu: res.mu,
        residual: res.residual,
        iters: res.iters,
        converged: res.converged,
        initial_energy: res.initial_energy,
        warnings: res.warnings.clone(),
        field: field_path.clone(),
    };
    write_json(&ctx.out.join("minimize.json"), &report)?;
    if config.plot {
        let ([cx, cy], _) = res.u.argmax();
        let h = grid.spacing();
        let j = ((cy - grid.center[1] + grid.half_width) / h).round() as usize;
        let cut: Vec<(f64, f64)> = (0..grid.n).map(|i| (grid.coord(i, j)[0], res.u.data[j * grid.n + i])).collect();
        write_svg(
            &ctx.out.join("ground_state.svg"),
            &Plot {
                title: format!("ground state at a/a* = {fraction}, y = {cy:.3}"),
                xlabel: "x".into(),
                ylabel: "u(x, y)".into(),
                series: vec![Series { label: format!("cut through max at x = {cx:.3}"), points: cut, color: "black", markers: false }],
            },
        )?;
        let hist: Vec<(f64, f64)> = res.history.iter().enumerate().map(|(k, e)| (k as f64, *e)).collect();
        write_svg(
            &ctx.out.join("history.svg"),
            &Plot {
                title: "energy along the flow".into(),
                xlabel: "accepted step".into(),
                ylabel: "E".into(),
                series: vec![Series { label: "E".into(), points: hist, color: "black", markers: false }],
            },
        )?;
    }
    println!("E = {}, mu = {}, residual = {:.3e}, iters = {}, converged = {}", report.energy.total, res.mu, res.residual, res.iters, res.converged);
    if !res.converged {
        return Err(NumericFailure(format!("minimization did not converge: {}", res.warnings.join("; "))).into());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct RecordRow {
    a: f64,
    a_over_astar: f64,
    eps_a: f64,
    energy: f64,
    scaled_energy: f64,
    chosen_point: usize,
    mass_fraction: f64,
    l2_err: f64,
    h1_err: f64,
    fitted_beta: f64,
    residual: f64,
    converged: bool,
    iters: usize,
    trial_bound: f64,
    trial_ell: f64,
    window_half_width: f64,
    spacing: f64,
    warnings: String,
}

fn write_records(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in records {
        w.serialize(RecordRow {
            a: r.a,
            a_over_astar: r.a_over_astar,
            eps_a: r.eps_a,
            energy: r.energy,
            scaled_energy: r.scaled_energy,
            chosen_point: r.chosen_point,
            mass_fraction: r.mass_fraction,
            l2_err: r.l2_err,
            h1_err: r.h1_err,
            fitted_beta: r.fitted_beta,
            residual: r.residual,
            converged: r.converged,
            iters: r.iters,
            trial_bound: r.trial_bound,
            trial_ell: r.trial_ell,
            window_half_width: r.window_half_width,
            spacing: r.spacing,
            warnings: r.warnings.join("; "),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn sweep_plots(
    out: &Path,
    records: &[SweepRecord],
    astar: f64,
    fit: Option<&collapse::PowerLawFit>,
    profile: &RadialProfile,
    beta: f64,
    last: Option<&Field2D>,
) -> Result<()> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.energy < 0.0)
        .map(|r| ((astar - r.a).ln(), (-r.energy).ln()))
        .collect();
    let mut series = vec![Series { label: "computed".into(), points: pts.clone(), color: "black", markers: true }];
    if let Some(f) = fit {
        let line = pts.iter().map(|&(x, _)| (x, f.prefactor.ln() + f.exponent * x)).collect();
        series.push(Series { label: format!("fit: exponent {:.4}, prefactor {:.4}", f.exponent, f.prefactor), points: line, color: "red", markers: false });
    }
    write_svg(
        &out.join("energy.svg"),
        &Plot { title: "collapse rate".into(), xlabel: "ln(a* - a)".into(), ylabel: "ln(-E(a))".into(), series },
    )?;
    let h1: Vec<(f64, f64)> = records.iter().map(|r| (r.a_over_astar, r.h1_err)).collect();
    write_svg(
        &out.join("h1.svg"),
        &Plot {
            title: "distance to the dilated Townes profile".into(),
            xlabel: "a/a*".into(),
            ylabel: "H1 error".into(),
            series: vec![Series { label: "H1 error".into(), points: h1, color: "black", markers: true }],
        },
    )?;
    if let Some(w) = last {
        let g = w.grid;
        let j = g.n / 2;
        let q = profile.normalized();
        let cut: Vec<(f64, f64)> = (0..g.n).map(|i| (g.coord(i, j)[0], w.data[j * g.n + i])).collect();
        let exact: Vec<(f64, f64)> = cut.iter().map(|&(x, _)| (x, q.dilated(beta, x.abs()))).collect();
        write_svg(
            &out.join("profile.svg"),
            &Plot {
                title: "rescaled minimizer at the last schedule point".into(),
                xlabel: "x".into(),
                ylabel: "w(x, 0)".into(),
                series: vec![
                    Series { label: "rescaled minimizer".into(), points: cut, color: "black", markers: false },
                    Series { label: "beta Q0(beta x)".into(), points: exact, color: "red", markers: false },
                ],
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    constants: gp_collapse::closedform::CollapseConstants,
    beta: f64,
    energy_limit: f64,
    expected_exponent: f64,
    fit: Option<collapse::PowerLawFit>,
    fit_error: Option<String>,
}

pub fn sweep(args: &ConfigArgs) -> Result<()> {
    let ctx = prepare(args)?;
    let config = &ctx.loaded.config;
    let spec = config.potential()?;
    let astar = ctx.constants.astar;
    let schedule = config.schedule(astar)?;
    let result = collapse::sweep(spec, &schedule, &ctx.profile, &config.sweep_options())?;
    write_records(&ctx.out.join("records.csv"), &result.records)?;
    write_json(&ctx.out.join("sweep.json"), &result)?;
    let fit = fit_power_law(&result.records, astar);
    let c = result.constants;
    write_json(
        &ctx.out.join("fit.json"),
        &FitReport {
            constants: c,
            beta: result.beta,
            energy_limit: result.energy_limit,
            expected_exponent: -c.p / (2.0 - c.p),
            fit: fit.as_ref().ok().copied(),
            fit_error: fit.as_ref().err().map(|e| e.to_string()),
        },
    )?;
    if config.plot {
        sweep_plots(&ctx.out, &result.records, astar, fit.as_ref().ok(), &ctx.profile, result.beta, result.last_profile.as_ref())?;
    }
    for r in &result.records {
        println!(
            "a/a* = {:.4}: E = {:.8}, E eps^p = {:.6}, H1 = {:.4}, point {}",
            r.a_over_astar, r.energy, r.scaled_energy, r.h1_err, r.chosen_point
        );
    }
    for (a, reason) in &result.skipped {
        println!("a/a* = {:.4}: skipped, {reason}", a / astar);
    }
    if result.records.is_empty() {
        return Err(NumericFailure("every schedule point was skipped".into()).into());
    }
    match fit {
        Ok(f) => println!("fit: exponent {:.5}, prefactor {:.5} (|limit| {:.5})", f.exponent, f.prefactor, result.energy_limit.abs()),
        Err(e) => println!("fit: {e}"),
    }
    Ok(())
}

pub fn verify(args: &ConfigArgs) -> Result<()> {
    let ctx = prepare(args)?;
    let config = &ctx.loaded.config;
    let spec = config.potential()?;
    let astar = ctx.constants.astar;
    let schedule = config.schedule(astar)?;
    let tol = config.tolerances.unwrap_or_default();
    let report = collapse::verify_theorem2(spec, &schedule, &ctx.profile, &config.sweep_options(), &tol, config.sensitivity)?;
    write_json(&ctx.out.join("report.json"), &report)?;
    write_records(&ctx.out.join("records.csv"), &report.records)?;
    if config.plot {
        sweep_plots(&ctx.out, &report.records, astar, report.fit.as_ref(), &ctx.profile, report.beta, None)?;
    }
    for c in &report.checks {
        println!("{:<22} {:<12} {}", c.name, format!("{:?}", c.status).to_lowercase(), c.detail);
    }
    println!("overall: {}", format!("{:?}", report.status).to_lowercase());
    if report.status == Status::Fail {
        return Err(NumericFailure("verification failed".into()).into());
    }
    Ok(())
}

pub fn run(args: &ConfigArgs) -> Result<()> {
    let loaded = Loaded::read(&args.config)?;
    match loaded.config.command.context("config has no `command`")? {
        Command::QSolve => {
            let out = args.out.clone().unwrap_or_else(|| loaded.output_dir()).join("q.csv");
            q_solve(&out, 30.0, 4000)
        }
        Command::Constants => constants(args),
        Command::PotentialCheck => potential_check(args),
        Command::Minimize => minimize(args, None),
        Command::Sweep => sweep(args),
        Command::Verify => verify(args),
    }
}
