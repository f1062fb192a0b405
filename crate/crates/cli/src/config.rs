//! TOML run configuration.

use anyhow::{bail, Context, Result};
use gp_collapse::collapse::{default_schedule, GridPolicy, SweepOptions, Tolerances};
use gp_collapse::field::{Grid2D, Stencil};
use gp_collapse::minimizer::{Flow, SolveOptions};
use gp_collapse::potential::{PotentialRule, PotentialSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    QSolve,
    Constants,
    PotentialCheck,
    Minimize,
    Sweep,
    Verify,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Used by `gpcollapse run`.
    pub command: Option<Command>,
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub schedule: Option<Schedule>,
    /// Interaction strength for `minimize`, as a fraction of a*.
    pub a_over_astar: Option<f64>,
    /// Artifact directory, relative to the config file.
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub plot: bool,
    /// Profile table written by `q-solve`, relative to the config file.
    pub profile: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    /// Repeat the verification sweep under the alternate potential rule.
    #[serde(default)]
    pub sensitivity: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub half_width: Option<f64>,
    pub n: Option<usize>,
    pub window_factor: Option<f64>,
    pub stencil: Option<Stencil>,
    pub rule: Option<PotentialRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitConfig {
    Gaussian { center: [f64; 2], width: f64 },
    /// `scale · Q₀(scale |x - center|)` from the radial profile.
    Townes { center: [f64; 2], scale: f64 },
    /// A field file written by `minimize`, relative to the config file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub flow: Option<Flow>,
    pub tau: Option<f64>,
    pub max_iters: Option<usize>,
    pub residual_tol: Option<f64>,
    pub continuation: Option<bool>,
    pub trial_points: Option<usize>,
    pub init: Option<InitConfig>,
}

/// Values of `a/a*`, listed or geometric in `1 - a/a*`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged, deny_unknown_fields)]
pub enum Schedule {
    Values { values: Vec<f64> },
    Geometric { geometric: Geometric },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Geometric {
    pub first: f64,
    pub last: f64,
    pub count: usize,
}

/// A parsed configuration and the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config = parse(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Loaded { config, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(self.config.output.as_deref().unwrap_or(Path::new(".")))
    }
}

pub fn parse(text: &str) -> Result<RunConfig> {
    if text.trim().is_empty() {
        bail!("configuration is empty");
    }
    let config: RunConfig = toml::from_str(text)?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.potential {
            p.validate()?;
        }
        let g = &self.grid;
        if g.half_width.is_some_and(|l| !(l > 0.0 && l.is_finite())) {
            bail!("grid.L must be positive");
        }
        if g.n.is_some_and(|n| n < 16) {
            bail!("grid.n must be at least 16");
        }
        if g.window_factor.is_some_and(|w| !(w > 0.0)) {
            bail!("grid.window_factor must be positive");
        }
        let s = &self.solver;
        if s.tau.is_some_and(|t| !(t > 0.0)) {
            bail!("solver.tau must be positive");
        }
        if s.residual_tol.is_some_and(|t| !(t > 0.0)) {
            bail!("solver.residual_tol must be positive");
        }
        if s.trial_points.is_some_and(|t| t < 2) {
            bail!("solver.trial_points must be at least 2");
        }
        if let Some(a) = self.a_over_astar {
            if !(0.0..1.0).contains(&a) {
                bail!("a_over_astar = {a} must lie in [0, 1)");
            }
        }
        if let Some(s) = &self.schedule {
            s.fractions()?;
        }
        Ok(())
    }

    pub fn potential(&self) -> Result<&PotentialSpec> {
        self.potential.as_ref().context("config has no [potential] block")
    }

    pub fn grid_policy(&self) -> GridPolicy {
        let d = GridPolicy::default();
        let g = &self.grid;
        GridPolicy {
            half_width: g.half_width.unwrap_or(d.half_width),
            n: g.n.unwrap_or(d.n),
            window_factor: g.window_factor.unwrap_or(d.window_factor),
            stencil: g.stencil.unwrap_or(d.stencil),
            rule: g.rule.unwrap_or(d.rule),
        }
    }

    /// Origin-centred grid for a single minimization.
    pub fn grid(&self) -> Grid2D {
        let p = self.grid_policy();
        Grid2D::new(p.half_width, p.n).with_stencil(p.stencil)
    }

    pub fn sweep_options(&self) -> SweepOptions {
        let d = SweepOptions::default();
        let s = &self.solver;
        SweepOptions {
            grid: self.grid_policy(),
            flow: s.flow.unwrap_or(d.flow),
            max_iters: s.max_iters.unwrap_or(d.max_iters),
            residual_tol: s.residual_tol.unwrap_or(d.residual_tol),
            continuation: s.continuation.unwrap_or(d.continuation),
            trial_points: s.trial_points.unwrap_or(d.trial_points),
        }
    }

    /// Solver options for `minimize`; the initial state is filled in by the caller.
    pub fn solve_options(&self) -> SolveOptions {
        let d = SolveOptions::default();
        let s = &self.solver;
        SolveOptions {
            tau: s.tau.or(d.tau),
            max_iters: s.max_iters.unwrap_or(d.max_iters),
            residual_tol: s.residual_tol.unwrap_or(d.residual_tol),
            flow: s.flow.unwrap_or(d.flow),
            rule: self.grid_policy().rule,
            ..d
        }
    }

    pub fn schedule(&self, astar: f64) -> Result<Vec<f64>> {
        match &self.schedule {
            Some(s) => Ok(s.fractions()?.into_iter().map(|f| f * astar).collect()),
            None => Ok(default_schedule(astar)),
        }
    }
}

impl Schedule {
    pub fn fractions(&self) -> Result<Vec<f64>> {
        let values = match self {
            Schedule::Values { values } => values.clone(),
            Schedule::Geometric { geometric: g } => {
                if g.count < 2 {
                    bail!("schedule.geometric.count must be at least 2");
                }
                let (d0, d1) = (1.0 - g.first, 1.0 - g.last);
                if !(d0 > 0.0 && d1 > 0.0) {
                    bail!("schedule.geometric bounds must lie below 1");
                }
                let ratio = (d1 / d0).powf(1.0 / (g.count - 1) as f64);
                (0..g.count).map(|k| 1.0 - d0 * ratio.powi(k as i32)).collect()
            }
        };
        if values.is_empty() {
            bail!("schedule is empty");
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            bail!("schedule value {v} must lie in (0, 1)");
        }
        Ok(values)
    }
}
