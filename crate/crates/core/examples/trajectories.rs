//! Monte Carlo unravelings against exact results: click counting for one
//! driven atom, and the averaged homodyne-conditioned state of a dimer.

use std::f64::consts::FRAC_PI_2;

use chiralfb::checks::single_atom_rate;
use chiralfb::fcs::count_rate;
use chiralfb::operators::SystemParams;
use chiralfb::trajectories::{ensemble_average_check, jump_monte_carlo, TrajectoryConfig};

fn main() -> chiralfb::Result<()> {
    let p = SystemParams::new(1).with_rabi(1.0).with_detuning(0.1).with_chirality(1.0, 0.6);
    let est = jump_monte_carlo(&TrajectoryConfig::new(p, 40.0, 5e-3, 2000, 3))?;
    println!(
        "jumps: k = {:.5} +- {:.5}  (exact {:.5}, closed form {:.5})",
        est.mean,
        est.std_error,
        count_rate(&p)?,
        single_atom_rate(&p)
    );
    println!("       {} counted clicks, variance rate {:.4}", est.n_events, est.variance_per_time);

    let p = SystemParams::new(2).with_rabi(1.0).with_chirality(1.0, 0.8).with_homodyne_feedback(0.5, FRAC_PI_2);
    let cfg = TrajectoryConfig::new(p, 2.0, 1e-3, 1000, 5).with_antithetic(true);
    let report = ensemble_average_check(&cfg, &[0.5, 1.0, 2.0])?;
    for c in &report.checkpoints {
        println!("homodyne: t = {:.1}  trace distance to exp(Lt) rho0 = {:.4}", c.t, c.trace_distance);
    }
    Ok(())
}
