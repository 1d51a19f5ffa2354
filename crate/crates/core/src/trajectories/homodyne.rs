//! Diffusive unraveling of the right channel with the measured current fed
//! back as `I(t) sqrt(gamma_R) g F`.
//!
//! The measurement update uses a positivity-preserving Kraus-like step; the
//! feedback unitary is applied exactly in the eigenbasis of `F`, where it is
//! a phase on every matrix element.

use faer::{c64, Mat};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::kernels::{self, Dense};
use super::{run_ensemble, TrajOutcome, TrajectoryConfig, TrajectoryEstimate, Unraveling};
use crate::error::{Error, Result};
use crate::linalg::{self, dagger, scaled};
use crate::operators::{collective_lowering, drive_operator, hamiltonian, sigma, FeedbackMode};

pub(crate) struct Sme {
    /// `I - (iH + K/2) dt`
    drift: Dense,
    c: Dense,
    c_sq: Dense,
    unmonitored: Vec<Dense>,
    /// Eigenvalues of `F` scaled by `sqrt(gamma_R) g`.
    kick: Vec<f64>,
    /// Eigenvectors of `F` (columns), original basis.
    basis: Mat<c64>,
    rho0: Dense,
    dt: f64,
    n_steps: usize,
    burn_steps: usize,
}

impl Sme {
    pub fn new(cfg: &TrajectoryConfig) -> Result<Self> {
        let p = &cfg.params;
        if p.feedback_mode == FeedbackMode::Counting {
            return Err(Error::WrongFeedbackMode {
                expected: FeedbackMode::Homodyne,
                found: p.feedback_mode,
            });
        }
        let n = p.n_atoms;
        let d = p.dim();
        let (f_vals, v) = linalg::hermitian_eigen(&drive_operator(n))?;
        let vd = dagger(&v);
        let rot = |m: &Mat<c64>| &vd * m * &v;
        let r = |x: f64| c64::new(x.sqrt(), 0.0);

        let j = collective_lowering(n);
        let c = scaled(&j, r(p.gamma_r) * c64::cis(-p.quadrature_angle));
        let mut unmonitored = Vec::new();
        if p.gamma_l > 0.0 {
            unmonitored.push(scaled(&j, r(p.gamma_l)));
        }
        if p.gamma_unguided > 0.0 {
            for k in 1..=n {
                unmonitored.push(scaled(&sigma(k, n)?, r(p.gamma_unguided)));
            }
        }
        let mut decay = dagger(&c) * &c;
        for l in &unmonitored {
            decay += dagger(l) * l;
        }
        let gen = scaled(&hamiltonian(p), c64::new(0.0, 1.0)) + scaled(&decay, c64::new(0.5, 0.0));
        let drift = linalg::identity(d) - scaled(&gen, c64::new(cfg.dt, 0.0));

        let strength = p.gamma_r.sqrt() * p.effective_strength();
        Ok(Sme {
            drift: Dense::from_mat(&rot(&drift)),
            c_sq: Dense::from_mat(&rot(&(&c * &c))),
            c: Dense::from_mat(&rot(&c)),
            unmonitored: unmonitored.iter().map(|l| Dense::from_mat(&rot(l))).collect(),
            kick: f_vals.iter().map(|f| strength * f).collect(),
            rho0: Dense::from_mat(&rot(cfg.initial_state.density_matrix().matrix())),
            basis: v,
            dt: cfg.dt,
            n_steps: cfg.n_steps(),
            burn_steps: cfg.burn_steps(),
        })
    }

    fn to_original(&self, rho: &Dense) -> Dense {
        let m = &self.basis * rho.to_mat() * dagger(&self.basis);
        Dense::from_mat(&m)
    }
}

impl Unraveling for Sme {
    fn run(&self, rng: &mut ChaCha8Rng, mirror: bool, snapshot_steps: &[usize]) -> Result<TrajOutcome> {
        let d = self.rho0.d;
        let dt = self.dt;
        let sqdt = if mirror { -dt.sqrt() } else { dt.sqrt() };
        let mut rho = self.rho0.clone();
        let mut m = Dense::zeros(d);
        let mut tmp = Dense::zeros(d);
        let mut next = Dense::zeros(d);
        let mut extra = Dense::zeros(d);
        let mut snapshots = vec![Dense::zeros(d); snapshot_steps.len()];
        let record = |step: usize, rho: &Dense, snaps: &mut Vec<Dense>| {
            for (slot, &k) in snapshot_steps.iter().enumerate() {
                if k == step {
                    snaps[slot] = self.to_original(rho);
                }
            }
        };
        record(0, &rho, &mut snapshots);

        let mut integrated = 0.0;
        for step in 0..self.n_steps {
            let mean = 2.0 * self.c.trace_product(&rho).re;
            let dw: f64 = rng.sample::<f64, _>(StandardNormal) * sqdt;
            let dx = mean * dt + dw;
            let second = 0.5 * (dx * dx - dt);
            for k in 0..d * d {
                m.a[k] = self.drift.a[k] + self.c.a[k] * dx + self.c_sq.a[k] * second;
            }
            kernels::sandwich(&m, &rho, &mut tmp, &mut next);
            for l in &self.unmonitored {
                kernels::sandwich(l, &rho, &mut tmp, &mut extra);
                for (x, y) in next.a.iter_mut().zip(&extra.a) {
                    *x += y * dt;
                }
            }
            let tr = next.trace().re;
            if !(tr.is_finite() && tr > 0.0) {
                return Err(Error::NormLoss(tr));
            }
            let inv = 1.0 / tr;
            for i in 0..d {
                for j in 0..d {
                    let phase = c64::cis(-(self.kick[i] - self.kick[j]) * dx);
                    rho.a[i * d + j] = next.a[i * d + j] * phase * inv;
                }
            }
            if step >= self.burn_steps {
                integrated += dx;
            }
            record(step + 1, &rho, &mut snapshots);
        }
        Ok(TrajOutcome {
            integrated,
            events: 0,
            snapshots,
        })
    }
}

/// Statistics of the integrated homodyne current of the right channel,
/// `(mean/t, variance/t)`. A pure-noise current has variance rate 1.
pub fn homodyne_sme(cfg: &TrajectoryConfig) -> Result<TrajectoryEstimate> {
    cfg.validate()?;
    let sme = Sme::new(cfg)?;
    Ok(run_ensemble(&sme, cfg, &[])?.estimate(cfg))
}
