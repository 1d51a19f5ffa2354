//! Stochastic unravelings used as an independent check on the exact
//! generators: quantum jumps with feedback kicks for photon counting, and a
//! diffusive stochastic master equation with current feedback for homodyne
//! detection.
//!
//! Each trajectory draws from its own ChaCha8 stream (key from the run seed,
//! stream id = trajectory index). Trajectories are reduced in fixed-size
//! chunks in index order, so results do not depend on the worker count.

mod homodyne;
mod jump;
pub(crate) mod kernels;

use faer::{c64, Mat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::generator;
use crate::linalg;
use crate::operators::{collective_lowering, FeedbackMode, PureState, SystemParams};
use crate::steady::{propagate, DensityMatrix};

pub use homodyne::homodyne_sme;
pub use jump::jump_monte_carlo;

use kernels::Dense;

/// Upper bound on `dt * (largest total jump rate)`.
pub const MAX_STEP_RATE: f64 = 0.05;
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Pure(PureState),
    Mixed(DensityMatrix),
}

impl InitialState {
    pub fn density_matrix(&self) -> DensityMatrix {
        match self {
            InitialState::Pure(psi) => DensityMatrix::from_pure(psi),
            InitialState::Mixed(rho) => rho.clone(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            InitialState::Pure(psi) => psi.dim(),
            InitialState::Mixed(rho) => rho.dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub params: SystemParams,
    /// Total simulated time, in units of `1/gamma`.
    pub t_final: f64,
    pub dt: f64,
    pub n_traj: usize,
    pub seed: u64,
    /// Fraction of `t_final` discarded before accumulating statistics.
    pub burn_in: f64,
    pub initial_state: InitialState,
    /// Pair trajectories `2m` and `2m + 1` on one noise stream with the
    /// Wiener increments of the second negated (diffusive unraveling only).
    pub antithetic: bool,
}

impl TrajectoryConfig {
    /// Starts from `|g...g>` with a 0.3 burn-in fraction.
    pub fn new(params: SystemParams, t_final: f64, dt: f64, n_traj: usize, seed: u64) -> Self {
        TrajectoryConfig {
            params,
            t_final,
            dt,
            n_traj,
            seed,
            burn_in: 0.3,
            initial_state: InitialState::Pure(PureState::ground(params.n_atoms)),
            antithetic: false,
        }
    }

    pub fn with_initial_state(mut self, state: InitialState) -> Self {
        self.initial_state = state;
        self
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn with_burn_in(mut self, fraction: f64) -> Self {
        self.burn_in = fraction;
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub(crate) fn burn_steps(&self) -> usize {
        (self.burn_in * self.n_steps() as f64).round() as usize
    }

    /// Length of the accumulation window.
    pub fn window(&self) -> f64 {
        (self.n_steps() - self.burn_steps()) as f64 * self.dt
    }

    /// Largest eigenvalue of `sum_c rate_c C_c^+ C_c` for the bare emission channels.
    pub fn max_jump_rate(&self) -> f64 {
        let p = &self.params;
        let j = collective_lowering(p.n_atoms);
        let jdj = linalg::dagger(&j) * &j;
        let top = linalg::hermitian_eigenvalues(&jdj)
            .ok()
            .and_then(|v| v.last().copied())
            .unwrap_or(0.0);
        let g = p.effective_strength().abs();
        let homodyne_boost = if p.feedback_mode == FeedbackMode::Homodyne {
            // |J - i g e^{ia} F|^2 <= (1 + 2|g|)^2 |J|^2
            (1.0 + 2.0 * g).powi(2)
        } else {
            1.0
        };
        p.gamma_r * top * homodyne_boost + p.gamma_l * top + p.gamma_unguided * p.n_atoms as f64
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_traj == 0 {
            return Err(Error::InvalidParams("n_traj must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.t_final > 0.0 && self.n_steps() >= 1) {
            return Err(Error::InvalidParams("need dt > 0 and t_final >= dt".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::InvalidParams("burn_in must lie in [0, 1)".into()));
        }
        if self.initial_state.dim() != self.params.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.params.dim(),
                found: self.initial_state.dim(),
            });
        }
        let step_rate = self.dt * self.max_jump_rate();
        if step_rate >= MAX_STEP_RATE {
            return Err(Error::StepTooLarge(step_rate));
        }
        Ok(())
    }
}

/// Sample statistics of a time-integrated quantity over trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEstimate {
    /// Mean of the integrated quantity divided by the window length.
    pub mean: f64,
    /// Sample variance of the integrated quantity divided by the window length.
    pub variance_per_time: f64,
    /// Standard error of `mean`.
    pub std_error: f64,
    /// Approximate standard error of `variance_per_time` (Gaussian formula).
    pub variance_std_error: f64,
    pub n_traj: usize,
    pub n_steps: usize,
    /// Counted clicks (jump unraveling) summed over trajectories; zero for homodyne.
    pub n_events: u64,
}

impl TrajectoryEstimate {
    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn mean_agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

pub(crate) struct TrajOutcome {
    pub integrated: f64,
    pub events: u64,
    pub snapshots: Vec<Dense>,
}

pub(crate) trait Unraveling: Sync {
    /// `mirror` asks for the antithetic partner of the path drawn from `rng`.
    fn run(&self, rng: &mut ChaCha8Rng, mirror: bool, snapshot_steps: &[usize]) -> Result<TrajOutcome>;
}

pub(crate) fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Clone)]
pub(crate) struct Aggregate {
    n: usize,
    sum: f64,
    sum_sq: f64,
    events: u64,
    snapshots: Vec<Dense>,
}

impl Aggregate {
    fn empty(n_snapshots: usize, d: usize) -> Self {
        Aggregate {
            n: 0,
            sum: 0.0,
            sum_sq: 0.0,
            events: 0,
            snapshots: vec![Dense::zeros(d); n_snapshots],
        }
    }

    fn push(&mut self, o: &TrajOutcome) {
        self.n += 1;
        self.sum += o.integrated;
        self.sum_sq += o.integrated * o.integrated;
        self.events += o.events;
        for (acc, s) in self.snapshots.iter_mut().zip(&o.snapshots) {
            acc.add_assign(s);
        }
    }

    fn merge(&mut self, other: &Aggregate) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.events += other.events;
        for (acc, s) in self.snapshots.iter_mut().zip(&other.snapshots) {
            acc.add_assign(s);
        }
    }

    fn estimate(&self, cfg: &TrajectoryConfig) -> TrajectoryEstimate {
        let n = self.n as f64;
        let t = cfg.window();
        let mean = self.sum / n;
        let var = if self.n > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        let (se, var_se) = if self.n > 1 {
            ((var / n).sqrt() / t, var * (2.0 / (n - 1.0)).sqrt() / t)
        } else {
            (0.0, 0.0)
        };
        TrajectoryEstimate {
            mean: mean / t,
            variance_per_time: var / t,
            std_error: se,
            variance_std_error: var_se,
            n_traj: self.n,
            n_steps: cfg.n_steps(),
            n_events: self.events,
        }
    }

    fn mean_snapshots(&self) -> Vec<Mat<c64>> {
        let inv = 1.0 / self.n as f64;
        self.snapshots
            .iter()
            .map(|s| {
                let mut m = s.clone();
                m.scale(inv);
                linalg::hermitian_part(&m.to_mat())
            })
            .collect()
    }
}

pub(crate) fn run_ensemble(
    u: &impl Unraveling,
    cfg: &TrajectoryConfig,
    snapshot_steps: &[usize],
) -> Result<Aggregate> {
    let d = cfg.params.dim();
    let starts: Vec<usize> = (0..cfg.n_traj).step_by(CHUNK).collect();
    let partials: Vec<Result<Aggregate>> = starts
        .par_iter()
        .map(|&start| {
            let mut agg = Aggregate::empty(snapshot_steps.len(), d);
            for idx in start..(start + CHUNK).min(cfg.n_traj) {
                let (stream, mirror) = if cfg.antithetic { (idx / 2, idx % 2 == 1) } else { (idx, false) };
                let mut rng = trajectory_rng(cfg.seed, stream);
                agg.push(&u.run(&mut rng, mirror, snapshot_steps)?);
            }
            Ok(agg)
        })
        .collect();
    let mut total = Aggregate::empty(snapshot_steps.len(), d);
    for p in partials {
        total.merge(&p?);
    }
    Ok(total)
}

/// Trace distance between the trajectory-averaged state and deterministic
/// propagation of the matching master equation at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckpointDistance {
    pub t: f64,
    pub trace_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub checkpoints: Vec<CheckpointDistance>,
    pub n_traj: usize,
}

impl EnsembleReport {
    pub fn max_distance(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.trace_distance).fold(0.0, f64::max)
    }
}

/// Averages conditioned states at `times` (rounded to the step grid) and
/// compares them against `exp(L t) rho0` for the generator of `cfg.params`.
pub fn ensemble_average_check(cfg: &TrajectoryConfig, times: &[f64]) -> Result<EnsembleReport> {
    cfg.validate()?;
    let steps: Vec<usize> = times
        .iter()
        .map(|&t| ((t / cfg.dt).round() as usize).min(cfg.n_steps()))
        .collect();
    let agg = match cfg.params.feedback_mode {
        FeedbackMode::Homodyne => run_ensemble(&homodyne::Sme::new(cfg)?, cfg, &steps)?,
        _ => run_ensemble(&jump::JumpUnraveling::new(cfg)?, cfg, &steps)?,
    };
    let averaged = agg.mean_snapshots();
    let l = generator(&cfg.params)?;
    let rho0 = cfg.initial_state.density_matrix();
    let checkpoints = steps
        .iter()
        .zip(averaged)
        .map(|(&k, avg)| {
            let t = k as f64 * cfg.dt;
            let exact = propagate(&l, rho0.matrix(), t)?;
            Ok(CheckpointDistance {
                t,
                trace_distance: linalg::trace_distance(&avg, &exact)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleReport {
        checkpoints,
        n_traj: cfg.n_traj,
    })
}
