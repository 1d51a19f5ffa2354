//! Cross-checks between independent routes to the same quantity.

use std::f64::consts::FRAC_PI_2;

use faer::{c64, Mat};
use serde::Serialize;

use crate::error::Result;
use crate::fcs::{counting_cumulants, quadrature_cumulants, CumulantMethod};
use crate::generators::{generator, master_equation_rhs, trace_preservation_residual};
use crate::linalg::{self, dagger};
use crate::operators::{dimer_state, right_jump_counting, FeedbackMode, SystemParams};
use crate::steady::{overlap, photon_rate_direct, steady_state, DensityMatrix};
use crate::trajectories::{jump_monte_carlo, TrajectoryConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    /// Measured discrepancy (or statistic) compared against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn below(name: &str, value: f64, tolerance: f64, detail: String) -> Self {
        CheckOutcome {
            name: name.into(),
            value,
            tolerance,
            passed: value.is_finite() && value < tolerance,
            detail,
        }
    }

    fn failed(name: &str, err: &crate::Error) -> Self {
        CheckOutcome {
            name: name.into(),
            value: f64::NAN,
            tolerance: f64::NAN,
            passed: false,
            detail: err.to_string(),
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Closed-form photon emission rate of one driven atom into the right channel.
pub fn single_atom_rate(params: &SystemParams) -> f64 {
    let g = params.gamma() + params.gamma_unguided;
    let o2 = params.rabi * params.rabi;
    params.gamma_r * o2 / (g * g / 4.0 + params.detuning * params.detuning + 2.0 * o2)
}

fn test_state(d: usize) -> Mat<c64> {
    let a = Mat::from_fn(d, d, |i, j| c64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64 - 1.0));
    let m = &a * dagger(&a);
    let tr = linalg::trace(&m);
    linalg::scaled(&m, tr.inv())
}

fn run(name: &str, f: impl FnOnce() -> Result<CheckOutcome>) -> CheckOutcome {
    f().unwrap_or_else(|e| CheckOutcome::failed(name, &e))
}

/// Runs the oracle suite around `params`. Trajectory checks use `seed`.
pub fn run_checks(params: &SystemParams, seed: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();

    out.push(run("trace_preservation", || {
        let l = generator(params)?;
        let r = trace_preservation_residual(&l);
        Ok(CheckOutcome::below("trace_preservation", r, 1e-12, format!("max |<<1|L|| = {r:.3e}")))
    }));

    out.push(run("superoperator_vs_matrix_form", || {
        let l = generator(params)?;
        let rho = test_state(params.dim());
        let diff = linalg::max_abs_diff(&l.apply(&rho)?, &master_equation_rhs(params, &rho));
        Ok(CheckOutcome::below("superoperator_vs_matrix_form", diff, 1e-10, format!("max diff {diff:.3e}")))
    }));

    let ss = generator(params).and_then(|l| steady_state(&l));
    out.push(match &ss {
        Ok(ss) => CheckOutcome::below(
            "steady_state_residual",
            ss.residual,
            crate::steady::RESIDUAL_TOL,
            format!("null-space dimension {}", ss.null_space_dimension),
        ),
        Err(e) => CheckOutcome::failed("steady_state_residual", e),
    });

    match params.feedback_mode {
        FeedbackMode::None | FeedbackMode::Counting => {
            out.push(run("rate_fcs_vs_direct", || {
                let c = counting_cumulants(params)?;
                let ss = steady_state(&generator(params)?)?;
                let direct = photon_rate_direct(&ss.state, params)?;
                let r = if ss.is_degenerate() { 0.0 } else { (c.first_cumulant - direct).abs() / direct.abs().max(1e-4) };
                Ok(CheckOutcome::below(
                    "rate_fcs_vs_direct",
                    r,
                    1e-6,
                    format!("k = {:.10e}, direct = {direct:.10e}", c.first_cumulant),
                ))
            }));
            out.push(cumulant_consistency(params, false));
        }
        FeedbackMode::Homodyne => {
            out.push(run("quadrature_fcs_vs_direct", || {
                let c = quadrature_cumulants(params)?;
                let ss = steady_state(&generator(params)?)?;
                let op = linalg::scaled(
                    &crate::operators::right_jump_homodyne(params.feedback_strength, params.quadrature_angle, params.n_atoms),
                    c64::cis(-params.quadrature_angle),
                );
                let mean = ss.state.expectation(&(op.clone() + dagger(&op))).re;
                let direct = 0.5 * params.gamma_r.sqrt() * mean;
                let diff = (c.first_cumulant - direct).abs();
                Ok(CheckOutcome::below(
                    "quadrature_fcs_vs_direct",
                    diff,
                    1e-6 * direct.abs().max(1e-3),
                    format!("x = {:.10e}, direct = {direct:.10e}", c.first_cumulant),
                ))
            }));
            out.push(cumulant_consistency(params, true));
        }
    }

    out.push(run("theta_at_zero", || {
        let c = match params.feedback_mode {
            FeedbackMode::Homodyne => quadrature_cumulants(params)?,
            _ => counting_cumulants(params)?,
        };
        if c.method == CumulantMethod::Resolvent {
            return Ok(CheckOutcome::below("theta_at_zero", 0.0, 1.0, "no theta samples at this size".into()));
        }
        let t = c.theta_at_zero().abs();
        Ok(CheckOutcome::below("theta_at_zero", t, 1e-10, format!("|theta(0)| = {t:.3e}")))
    }));

    let single = SystemParams {
        n_atoms: 1,
        ..params.without_feedback()
    };
    out.push(run("single_atom_closed_form", || {
        let k = counting_cumulants(&single)?.first_cumulant;
        let oracle = single_atom_rate(&single);
        Ok(CheckOutcome::below(
            "single_atom_closed_form",
            rel(k, oracle),
            1e-8,
            format!("k = {k:.10e}, closed form = {oracle:.10e}"),
        ))
    }));

    out.push(run("dimer_is_stationary", || {
        let p = SystemParams {
            n_atoms: 2,
            detuning: 0.0,
            gamma_unguided: 0.0,
            ..params.without_feedback()
        };
        let dimer = dimer_state(p.rabi, p.delta_gamma())?;
        let rho = DensityMatrix::from_pure(&dimer);
        let drift = linalg::max_abs(&master_equation_rhs(&p, rho.matrix()));
        let ss = steady_state(&generator(&p)?)?;
        let infidelity = 1.0 - overlap(&ss.state, &dimer)?;
        Ok(CheckOutcome::below(
            "dimer_is_stationary",
            drift.max(infidelity),
            1e-8,
            format!("|L rho_D| = {drift:.3e}, 1 - F = {infidelity:.3e}"),
        ))
    }));

    out.push(run("parity_identity", || {
        let worst = (1..=6)
            .map(|n| {
                let jr = right_jump_counting(FRAC_PI_2, n);
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                linalg::max_abs(&(jr.clone() - linalg::scaled(&dagger(&jr), c64::new(sign, 0.0))))
            })
            .fold(0.0, f64::max);
        Ok(CheckOutcome::below("parity_identity", worst, 1e-12, format!("max deviation {worst:.3e}")))
    }));

    out.push(run("jump_trajectories_vs_closed_form", || {
        let cfg = TrajectoryConfig::new(single, 20.0, 5e-3, 2000, seed);
        let est = jump_monte_carlo(&cfg)?;
        let oracle = single_atom_rate(&single);
        let z = (est.mean - oracle).abs() / est.std_error.max(1e-300);
        Ok(CheckOutcome::below(
            "jump_trajectories_vs_closed_form",
            z,
            5.0,
            format!("mean = {:.5e} +- {:.1e}, closed form = {oracle:.5e}", est.mean, est.std_error),
        ))
    }));

    out
}

fn cumulant_consistency(params: &SystemParams, quadrature: bool) -> CheckOutcome {
    let name = "cumulant_methods_agree";
    run(name, || {
        let c = if quadrature {
            quadrature_cumulants(params)?
        } else {
            counting_cumulants(params)?
        };
        if c.degenerate {
            return Ok(CheckOutcome::below(name, 0.0, 1.0, "degenerate point: finite differences only".into()));
        }
        if c.method == CumulantMethod::Resolvent {
            return Ok(CheckOutcome::below(name, 0.0, 1.0, "resolvent route only at this size".into()));
        }
        let scale1 = c.first_cumulant.abs().max(1e-3);
        let d1 = (c.first_cumulant - c.first_cumulant_fd).abs() / scale1;
        let d2 = c
            .second_cumulant_resolvent
            .map(|r| (c.second_cumulant - r).abs() / r.abs().max(1e-3))
            .unwrap_or(0.0);
        Ok(CheckOutcome::below(
            name,
            d1.max(d2),
            1e-5,
            format!("first: perturbation vs fd {d1:.2e}; second: fd vs resolvent {d2:.2e}"),
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        for p in [
            SystemParams::new(2),
            SystemParams::new(2).with_rabi(1.0).with_detuning(0.1),
            SystemParams::new(2).with_rabi(0.7).with_detuning(0.2).with_counting_feedback(1.0),
            SystemParams::new(2).with_rabi(0.7).with_detuning(0.2).with_homodyne_feedback(0.4, 1.1),
        ] {
            for c in run_checks(&p, 1) {
                assert!(c.passed, "{c:?}");
            }
        }
    }
}
