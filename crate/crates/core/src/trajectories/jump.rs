//! Quantum-jump unraveling with instantaneous feedback pulses after every
//! right-channel click.

use faer::c64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, Dense};
use super::{run_ensemble, InitialState, TrajOutcome, TrajectoryConfig, TrajectoryEstimate, Unraveling};
use crate::error::{Error, Result};
use crate::linalg::{self, dagger};
use crate::operators::{collective_lowering, feedback_unitary, hamiltonian, sigma, FeedbackMode};

struct Channel {
    /// Jump operator including `sqrt(rate)` and, for the right channel, the feedback kick.
    op: Dense,
    counted: bool,
}

pub(crate) struct JumpUnraveling {
    no_jump: Dense,
    channels: Vec<Channel>,
    /// Initial pure states with their probabilities.
    initial: Vec<(f64, Vec<c64>)>,
    n_steps: usize,
    burn_steps: usize,
}

impl JumpUnraveling {
    pub fn new(cfg: &TrajectoryConfig) -> Result<Self> {
        let p = &cfg.params;
        if p.feedback_mode == FeedbackMode::Homodyne {
            return Err(Error::WrongFeedbackMode {
                expected: FeedbackMode::Counting,
                found: p.feedback_mode,
            });
        }
        let n = p.n_atoms;
        let j = collective_lowering(n);
        let scaled = |m: &faer::Mat<c64>, r: f64| linalg::scaled(m, c64::new(r.sqrt(), 0.0));

        let mut ops = vec![
            (scaled(&(feedback_unitary(p.effective_strength(), n) * &j), p.gamma_r), true),
            (scaled(&j, p.gamma_l), false),
        ];
        if p.gamma_unguided > 0.0 {
            for k in 1..=n {
                ops.push((scaled(&sigma(k, n)?, p.gamma_unguided), false));
            }
        }
        // sum_c C_c^+ C_c, identical with or without the feedback unitary
        let mut decay = faer::Mat::<c64>::zeros(p.dim(), p.dim());
        for (op, _) in &ops {
            decay += dagger(op) * op;
        }
        let h_eff = hamiltonian(p) - linalg::scaled(&decay, c64::new(0.0, 0.5));
        let no_jump = Dense::from_mat(&linalg::expm(&linalg::scaled(&h_eff, c64::new(0.0, -cfg.dt))));

        let channels = ops
            .into_iter()
            .filter(|(op, _)| linalg::max_abs(op) > 0.0)
            .map(|(op, counted)| Channel {
                op: Dense::from_mat(&op),
                counted,
            })
            .collect();

        let initial = match &cfg.initial_state {
            InitialState::Pure(psi) => {
                vec![(1.0, (0..psi.dim()).map(|i| psi.amplitudes()[i]).collect())]
            }
            InitialState::Mixed(rho) => {
                let (values, vecs) = linalg::hermitian_eigen(rho.matrix())?;
                values
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(k, &w)| (w, (0..rho.dim()).map(|i| vecs[(i, k)]).collect()))
                    .collect()
            }
        };
        Ok(JumpUnraveling {
            no_jump,
            channels,
            initial,
            n_steps: cfg.n_steps(),
            burn_steps: cfg.burn_steps(),
        })
    }

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> Vec<c64> {
        if self.initial.len() == 1 {
            return self.initial[0].1.clone();
        }
        let total: f64 = self.initial.iter().map(|(w, _)| w).sum();
        let mut r = rng.random::<f64>() * total;
        for (w, v) in &self.initial {
            if r < *w {
                return v.clone();
            }
            r -= w;
        }
        self.initial.last().expect("non-empty").1.clone()
    }
}

fn projector(psi: &[c64]) -> Dense {
    let d = psi.len();
    let mut m = Dense::zeros(d);
    for i in 0..d {
        for j in 0..d {
            m.a[i * d + j] = psi[i] * psi[j].conj();
        }
    }
    m
}

impl Unraveling for JumpUnraveling {
    fn run(&self, rng: &mut ChaCha8Rng, _mirror: bool, snapshot_steps: &[usize]) -> Result<TrajOutcome> {
        let d = self.no_jump.d;
        let mut psi = self.sample_initial(rng);
        let mut phi = vec![c64::new(0.0, 0.0); d];
        let mut jumped = vec![c64::new(0.0, 0.0); d];
        let mut weights = vec![0.0; self.channels.len()];
        let mut snapshots = vec![Dense::zeros(d); snapshot_steps.len()];
        let record = |step: usize, psi: &[c64], snaps: &mut Vec<Dense>| {
            for (slot, &k) in snapshot_steps.iter().enumerate() {
                if k == step {
                    snaps[slot] = projector(psi);
                }
            }
        };
        record(0, &psi, &mut snapshots);

        let mut clicks = 0u64;
        for step in 0..self.n_steps {
            kernels::matvec(&self.no_jump, &psi, &mut phi);
            let stay = kernels::norm_sqr(&phi);
            if !(stay > 0.0 && stay <= 1.0 + 1e-9) {
                return Err(Error::NormLoss(stay));
            }
            let inv = 1.0 / stay.sqrt();
            for z in phi.iter_mut() {
                *z *= inv;
            }
            if rng.random::<f64>() >= stay {
                let mut total = 0.0;
                for (w, ch) in weights.iter_mut().zip(&self.channels) {
                    kernels::matvec(&ch.op, &phi, &mut jumped);
                    *w = kernels::norm_sqr(&jumped);
                    total += *w;
                }
                if total > 0.0 {
                    let mut r = rng.random::<f64>() * total;
                    let mut pick = self.channels.len() - 1;
                    for (c, &w) in weights.iter().enumerate() {
                        if r < w {
                            pick = c;
                            break;
                        }
                        r -= w;
                    }
                    let ch = &self.channels[pick];
                    kernels::matvec(&ch.op, &phi, &mut jumped);
                    let inv = 1.0 / weights[pick].sqrt();
                    for (dst, src) in psi.iter_mut().zip(&jumped) {
                        *dst = src * inv;
                    }
                    if ch.counted && step >= self.burn_steps {
                        clicks += 1;
                    }
                } else {
                    psi.copy_from_slice(&phi);
                }
            } else {
                psi.copy_from_slice(&phi);
            }
            record(step + 1, &psi, &mut snapshots);
        }
        Ok(TrajOutcome {
            integrated: clicks as f64,
            events: clicks,
            snapshots,
        })
    }
}

/// Right-channel click statistics `(K/t, Delta K^2 / t)` over `cfg.n_traj`
/// jump trajectories.
pub fn jump_monte_carlo(cfg: &TrajectoryConfig) -> Result<TrajectoryEstimate> {
    cfg.validate()?;
    let unraveling = JumpUnraveling::new(cfg)?;
    Ok(run_ensemble(&unraveling, cfg, &[])?.estimate(cfg))
}
