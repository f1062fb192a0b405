//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use gp_collapse::closedform::{beta_value, energy_limit, minimize_lambda, CollapseConstants};
use gp_collapse::collapse::{default_schedule, sweep, verify_theorem2, Status, SweepOptions, Tolerances};
use gp_collapse::field::{gn_ratio, inner, kinetic, neg_laplacian, Field2D, Grid2D, Stencil};
use gp_collapse::minimizer::{
    discrete_energy, energy_gradient, initial_field, minimize, minimize_gn_ratio, project_step, Flow, Init,
    SolveOptions,
};
use gp_collapse::potential::{PotentialRule, PotentialSpec, SingularPoint};
use gp_collapse::radial::{critical_constants, RadialProfile, TownesSolver};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::time::{Duration, Instant};

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn report(id: u32, name: &str, budget: Duration, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = run();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let ok = out.ok && in_time;
    let time_note = if in_time { String::new() } else { format!(", over the {budget:?} budget") };
    println!(
        "criterion {id} {name:<28} {} {} [{:.2} s{time_note}]",
        if ok { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    );
    ok
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn townes_identities() -> Outcome {
    let profile = match TownesSolver::default().solve() {
        Ok(p) => p,
        Err(e) => return outcome(false, e.to_string()),
    };
    match critical_constants(&profile) {
        Ok(c) => {
            let worst = rel(c.kinetic, c.mass).max(rel(0.5 * c.quartic, c.mass));
            outcome(worst <= 1e-5, format!("mass {:.10}, worst relative mismatch {worst:.2e}", c.mass))
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn gn_cross_validation(astar: f64) -> Outcome {
    let grid = Grid2D::new(12.0, 256);
    let init = initial_field(&grid, &Init::Gaussian { center: [0.0, 0.0], width: 1.5 }).unwrap();
    let res = minimize_gn_ratio(&init, 5000, 1e-6).unwrap();
    let dev = rel(res.ratio, astar);
    outcome(
        dev <= 1e-2,
        format!("min ratio {:.6} vs a* {astar:.6}, relative {dev:.2e}, {} steps", res.ratio, res.iters),
    )
}

fn closed_form_draws() -> Outcome {
    let mut rng = StdRng::seed_from_u64(20);
    let log_uniform = |rng: &mut StdRng| 10f64.powf(rng.gen_range(-2.0..2.0));
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = rng.gen_range(0.1..1.9);
        let c = CollapseConstants::new(p, log_uniform(&mut rng), log_uniform(&mut rng), log_uniform(&mut rng)).unwrap();
        let (lambda, value) = minimize_lambda(&c, 1e-12).unwrap();
        worst = worst.max(rel(lambda, beta_value(&c).unwrap())).max(rel(value, energy_limit(&c).unwrap()));
    }
    outcome(worst <= 1e-8, format!("1000 draws, worst relative deviation {worst:.2e}"))
}

fn harmonic(astar: f64) -> Outcome {
    let grid = Grid2D::new(8.0, 128).with_stencil(Stencil::FourthOrder);
    let opts = SolveOptions { residual_tol: 1e-7, ..SolveOptions::default() };
    let res = minimize(&grid, &PotentialSpec::harmonic(1.0), 0.0, astar, &opts).unwrap();
    let err = (res.energy.total - 2.0).abs();
    outcome(res.converged && err <= 1e-3, format!("energy {:.8}, error {err:.2e}", res.energy.total))
}

fn property_suites(astar: f64) -> Outcome {
    let mut rng = StdRng::seed_from_u64(9);
    let mut failures = Vec::new();
    let random_field = |rng: &mut StdRng, grid: Grid2D| -> Vec<f64> {
        let mask = Field2D::from_fn(grid, |_| 1.0).data;
        mask.iter().map(|m| m * rng.gen_range(-1.0..1.0)).collect()
    };
    let bump_field = |rng: &mut StdRng, grid: Grid2D| {
        let parts: Vec<[f64; 4]> = (0..rng.gen_range(1..5))
            .map(|_| [rng.gen_range(0.2..1.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.6..2.5)])
            .collect();
        Field2D::from_fn(grid, move |x| {
            parts.iter().map(|&[a, cx, cy, w]| a * (-((x[0] - cx).powi(2) + (x[1] - cy).powi(2)) / (2.0 * w * w)).exp()).sum()
        })
        .normalized()
        .unwrap()
    };

    let mut worst_ibp: f64 = 0.0;
    for stencil in [Stencil::SecondOrder, Stencil::FourthOrder, Stencil::SixthOrder] {
        let grid = Grid2D::new(6.0, 64).with_stencil(stencil);
        let u = random_field(&mut rng, grid);
        worst_ibp = worst_ibp.max(rel(inner(&grid, &neg_laplacian(&grid, &u), &u), kinetic(&grid, &u)));
    }
    if worst_ibp > 1e-10 {
        failures.push(format!("integration by parts {worst_ibp:.1e}"));
    }

    let grid = Grid2D::new(8.0, 64);
    let spec = PotentialSpec::single_well([0.05, -0.03], 1.0, -1.0);
    let (v, _) = spec.fill_grid(&grid, PotentialRule::CellAverage).unwrap();
    let mut worst_fd: f64 = 0.0;
    for _ in 0..10 {
        let u = bump_field(&mut rng, grid).data;
        let mut d = random_field(&mut rng, grid);
        let c = inner(&grid, &d, &u);
        d.iter_mut().zip(&u).for_each(|(di, ui)| *di -= c * ui);
        let s = inner(&grid, &d, &d).sqrt().recip();
        d.iter_mut().for_each(|x| *x *= s);
        let a = rng.gen_range(0.0..0.9 * astar);
        let step = 1e-6;
        let shifted = |t: f64| -> Vec<f64> { u.iter().zip(&d).map(|(x, y)| x + t * y).collect() };
        let fd = (discrete_energy(&grid, &v, &shifted(step), a) - discrete_energy(&grid, &v, &shifted(-step), a))
            / (2.0 * step);
        let exact = inner(&grid, &energy_gradient(&grid, &v, &u, a), &d);
        worst_fd = worst_fd.max(rel(fd, exact));
    }
    if worst_fd > 1e-5 {
        failures.push(format!("gradient check {worst_fd:.1e}"));
    }

    let mut worst_mass: f64 = 0.0;
    for _ in 0..50 {
        let u = bump_field(&mut rng, grid).data;
        let dir = random_field(&mut rng, grid);
        if let Some(w) = project_step(&grid, &u, &dir, rng.gen_range(1e-4..1.0)) {
            worst_mass = worst_mass.max((inner(&grid, &w, &w) - 1.0).abs());
        }
    }
    let mut descent_ok = true;
    for flow in [Flow::Explicit, Flow::Preconditioned] {
        let init = bump_field(&mut rng, grid);
        let opts = SolveOptions { init: Init::Given(init), max_iters: 400, flow, ..SolveOptions::default() };
        let res = minimize(&grid, &spec, 0.8 * astar, astar, &opts).unwrap();
        descent_ok &= res.history.windows(2).all(|w| w[1] <= w[0]);
        worst_mass = worst_mass.max((res.u.mass() - 1.0).abs());
    }
    if !descent_ok {
        failures.push("energy increased along the flow".into());
    }
    if worst_mass > 1e-10 {
        failures.push(format!("normalization {worst_mass:.1e}"));
    }

    let gn_grid = Grid2D::new(10.0, 96);
    let mut min_ratio = f64::INFINITY;
    for _ in 0..100 {
        min_ratio = min_ratio.min(gn_ratio(&bump_field(&mut rng, gn_grid)).unwrap());
    }
    if min_ratio < astar * (1.0 - 1e-2) {
        failures.push(format!("GN ratio {min_ratio:.4} below a*"));
    }

    let detail = format!(
        "ibp {worst_ibp:.1e}, gradient {worst_fd:.1e}, mass {worst_mass:.1e}, min GN ratio {min_ratio:.4}{}",
        if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join(", ")) }
    );
    outcome(failures.is_empty(), detail)
}

fn main() {
    let minute = Duration::from_secs(60);
    let mut all = true;
    all &= report(1, "townes-identities", Duration::from_secs(1), townes_identities);
    let profile: RadialProfile = TownesSolver::default().solve().expect("radial solve");
    let astar = critical_constants(&profile).expect("identities").astar;
    all &= report(2, "gn-cross-validation", 2 * minute, || gn_cross_validation(astar));
    all &= report(3, "closed-form-consistency", Duration::from_secs(1), closed_form_draws);
    all &= report(4, "harmonic-sanity", Duration::from_secs(30), || harmonic(astar));

    let coulomb = PotentialSpec::single_well([0.0, 0.0], 1.0, -1.0);
    let start = Instant::now();
    let verified = verify_theorem2(
        &coulomb,
        &default_schedule(astar),
        &profile,
        &SweepOptions::default(),
        &Tolerances::default(),
        false,
    );
    let sweep_time = start.elapsed();
    let status_of = |name: &str| -> Outcome {
        match &verified {
            Ok(r) => {
                let c = r.checks.iter().find(|c| c.name == name).expect("check present");
                outcome(c.status == Status::Pass, c.detail.clone())
            }
            Err(e) => outcome(false, e.to_string()),
        }
    };
    let sweep_budget = 15 * minute;
    let within = |o: Outcome| -> Outcome {
        let detail = format!("{} (shared sweep {:.1} s)", o.detail, sweep_time.as_secs_f64());
        outcome(o.ok && sweep_time <= sweep_budget, detail)
    };
    all &= report(5, "collapse-rate", sweep_budget, || {
        let e = status_of("rate-exponent");
        let p = status_of("rate-prefactor");
        within(outcome(e.ok && p.ok, format!("exponent: {}; prefactor: {}", e.detail, p.detail)))
    });
    all &= report(6, "profile-convergence", sweep_budget, || {
        let m = status_of("profile-monotone");
        let f = status_of("profile-final");
        within(outcome(m.ok && f.ok, format!("{}; {}", m.detail, f.detail)))
    });

    all &= report(7, "point-selection", 20 * minute, || {
        let spec = PotentialSpec {
            points: vec![
                SingularPoint { x: [-2.0, 0.0], p: 1.0, h: -1.0 },
                SingularPoint { x: [2.0, 0.0], p: 1.0, h: -0.5 },
            ],
            ..PotentialSpec::default()
        };
        let schedule: Vec<f64> = [0.98, 0.99, 0.995].iter().map(|f| f * astar).collect();
        match sweep(&spec, &schedule, &profile, &SweepOptions::default()) {
            Ok(s) => {
                let ok = s.records.len() == schedule.len()
                    && s.records.iter().all(|r| r.chosen_point == 0 && r.mass_fraction > 0.9);
                let picks: Vec<String> =
                    s.records.iter().map(|r| format!("{:.3}: point {} ({:.4})", r.a_over_astar, r.chosen_point, r.mass_fraction)).collect();
                outcome(ok, picks.join(", "))
            }
            Err(e) => outcome(false, e.to_string()),
        }
    });

    all &= report(8, "variational-sandwich", sweep_budget, || match &verified {
        Ok(r) => {
            let limit = r.energy_limit.abs();
            let ok = !r.records.is_empty()
                && r.records.iter().all(|x| {
                    let s = -x.scaled_energy;
                    x.energy <= x.trial_bound && s >= 0.1 * limit && s <= 10.0 * limit
                });
            let gaps: Vec<String> = r.records.iter().map(|x| format!("{:.2e}", x.trial_bound - x.energy)).collect();
            within(outcome(ok, format!("bound minus energy [{}]", gaps.join(", "))))
        }
        Err(e) => outcome(false, e.to_string()),
    });
    all &= report(9, "property-suites", 5 * minute, || property_suites(astar));

    if !all {
        std::process::exit(1);
    }
}
