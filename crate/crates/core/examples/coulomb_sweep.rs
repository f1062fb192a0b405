//! Sweeps a toward a* for `V = -|x|^{-1}` and prints the collapse rate.
//!
//! `cargo run --release -p gp-collapse --example coulomb_sweep [n]`

use gp_collapse::collapse::{default_schedule, fit_power_law, sweep, GridPolicy, SweepOptions};
use gp_collapse::potential::PotentialSpec;
use gp_collapse::radial::{critical_constants, TownesSolver};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(256);
    let profile = TownesSolver::default().solve()?;
    let astar = critical_constants(&profile)?.astar;
    let spec = PotentialSpec::single_well([0.0, 0.0], 1.0, -1.0);
    let opts = SweepOptions { grid: GridPolicy { n, ..GridPolicy::default() }, ..SweepOptions::default() };
    let s = sweep(&spec, &default_schedule(astar), &profile, &opts)?;
    println!("a* = {astar:.10}, beta = {:.8}, limit = {:.8}", s.beta, s.energy_limit);
    for r in &s.records {
        println!(
            "a/a* = {:.3}  E = {:>12.6}  E eps = {:.6}  trial = {:.6}  H1 = {:.4}  beta' = {:.4}",
            r.a_over_astar,
            r.energy,
            r.scaled_energy,
            r.trial_bound * r.eps_a,
            r.h1_err,
            r.fitted_beta
        );
    }
    let fit = fit_power_law(&s.records, astar)?;
    println!("exponent {:.5}, prefactor {:.5}, r2 {:.6}", fit.exponent, fit.prefactor, fit.r2);
    Ok(())
}
