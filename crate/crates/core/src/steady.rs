//! Stationary states of undeformed generators and state observables.

use faer::{c64, linalg::solvers::Solve, Col, Mat};

use crate::error::{Error, Result};
use crate::generators::{devectorize, generator, vectorize, Superoperator};
use crate::linalg::{self, dagger};
use crate::operators::{collective_lowering, right_jump_counting, FeedbackMode, PureState, SystemParams};

/// Relative singular-value threshold below which a direction counts as stationary.
pub const NULL_SPACE_RTOL: f64 = 1e-9;
/// Largest accepted `||L rho||_2` for a stationary state.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Negative eigenvalues down to this size are treated as round-off and clipped.
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Superoperator dimension above which the null space is found by a single
/// bordered linear solve instead of a full SVD.
pub const SVD_MAX_DIM: usize = 1024;

/// Hermitian, unit-trace, positive semidefinite state of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Mat<c64>);

impl DensityMatrix {
    pub fn new(m: Mat<c64>) -> Result<Self> {
        let herm = linalg::max_abs_diff(&m, &dagger(&m));
        if herm > 1e-10 {
            return Err(Error::InvalidParams(format!("density matrix not Hermitian ({herm:.2e})")));
        }
        let tr = linalg::trace(&m);
        if (tr - c64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::InvalidParams(format!("density matrix trace {tr}")));
        }
        let min = linalg::hermitian_eigenvalues(&m)?.first().copied().unwrap_or(0.0);
        if min < -POSITIVITY_TOL {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        Ok(DensityMatrix(m))
    }

    pub fn from_pure(psi: &PureState) -> Self {
        DensityMatrix(psi.projector())
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(linalg::scaled(&linalg::identity(dim), c64::new(1.0 / dim as f64, 0.0)))
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.0
    }

    pub fn into_matrix(self) -> Mat<c64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn expectation(&self, op: &Mat<c64>) -> c64 {
        linalg::trace(&(op * &self.0))
    }

    pub fn purity(&self) -> f64 {
        purity(self)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::hermitian_eigenvalues(&self.0)
    }
}

/// `Tr rho^2`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    // Tr(rho rho) = sum |rho_ij|^2 for Hermitian rho
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)].norm_sqr();
        }
    }
    acc
}

/// `<psi| rho |psi>`.
pub fn overlap(rho: &DensityMatrix, psi: &PureState) -> Result<f64> {
    if rho.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: psi.dim(),
        });
    }
    let v = psi.amplitudes();
    let rv: Col<c64> = rho.matrix() * v;
    let z: c64 = (0..v.nrows()).map(|i| v[i].conj() * rv[i]).sum();
    Ok(z.re.clamp(0.0, 1.0))
}

#[derive(Debug, Clone)]
pub struct SteadyStateResult {
    pub state: DensityMatrix,
    /// Number of singular values below the null-space threshold. When the
    /// bordered solve is used this is 1 and `degeneracy_checked` is false.
    pub null_space_dimension: usize,
    pub degeneracy_checked: bool,
    /// `||L vec(rho)||_2`.
    pub residual: f64,
    /// Smallest singular value outside the null space (spectral-gap proxy).
    pub smallest_nonzero_singular_value: Option<f64>,
}

impl SteadyStateResult {
    pub fn is_degenerate(&self) -> bool {
        self.null_space_dimension > 1
    }
}

fn hermitian_trace_normalized(m: Mat<c64>) -> Result<Mat<c64>> {
    let tr = linalg::trace(&m);
    if tr.norm() < 1e-300 {
        return Err(Error::NotPositive { min_eigenvalue: 0.0 });
    }
    Ok(linalg::hermitian_part(&linalg::scaled(&m, tr.inv())))
}

/// Clips eigenvalues in `[-POSITIVITY_TOL, 0)` and renormalizes.
fn repair_positivity(m: Mat<c64>) -> Result<DensityMatrix> {
    let (values, vecs) = linalg::hermitian_eigen(&m)?;
    let min = values.first().copied().unwrap_or(0.0);
    if min < -POSITIVITY_TOL {
        return Err(Error::NotPositive { min_eigenvalue: min });
    }
    let m = if min < 0.0 {
        let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
        let n = m.nrows();
        let weighted = Mat::from_fn(n, n, |i, k| vecs[(i, k)] * (values[k].max(0.0) / total));
        linalg::hermitian_part(&(&weighted * vecs.adjoint()))
    } else {
        m
    };
    Ok(DensityMatrix(m))
}

struct NullSpace {
    right: Mat<c64>,
    left: Mat<c64>,
    smallest_nonzero: Option<f64>,
}

fn null_space(l: &Superoperator) -> Result<NullSpace> {
    let svd = l.matrix().svd().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    let n = s.len();
    let threshold = NULL_SPACE_RTOL * s[0].max(f64::MIN_POSITIVE);
    let null_dim = s.iter().filter(|&&x| x < threshold).count();
    if null_dim == 0 {
        return Err(Error::NoNullVector {
            smallest: s[n - 1],
            threshold,
        });
    }
    let cols = n - null_dim..n;
    Ok(NullSpace {
        right: svd.V().subcols(cols.start, null_dim).to_owned(),
        left: svd.U().subcols(cols.start, null_dim).to_owned(),
        smallest_nonzero: (null_dim < n).then(|| s[n - null_dim - 1]),
    })
}

fn residual(l: &Superoperator, rho: &Mat<c64>) -> f64 {
    l.apply_vec(&vectorize(rho)).norm_l2()
}

/// Stationary state of an undeformed generator. A degenerate stationary
/// manifold is reported through `null_space_dimension`, and the returned
/// representative is the maximally mixed state projected onto it.
pub fn steady_state(l: &Superoperator) -> Result<SteadyStateResult> {
    if l.is_deformed() {
        return Err(Error::InvalidParams("steady_state needs an undeformed generator".into()));
    }
    let d = l.hilbert_dim();
    let (candidate, null_dim, checked, gap) = if l.dim() <= SVD_MAX_DIM {
        let ns = null_space(l)?;
        let k = ns.right.ncols();
        let v: Col<c64> = if k == 1 {
            ns.right.col(0).to_owned()
        } else {
            let mixed = vectorize(&linalg::scaled(&linalg::identity(d), c64::new(1.0 / d as f64, 0.0)));
            let coeffs: Col<c64> = ns.right.adjoint() * &mixed;
            &ns.right * &coeffs
        };
        (devectorize(&v)?, k, true, ns.smallest_nonzero)
    } else {
        (bordered_solve(l)?, 1, false, None)
    };
    let state = repair_positivity(hermitian_trace_normalized(candidate)?)?;
    let res = residual(l, state.matrix());
    if res > RESIDUAL_TOL {
        return Err(Error::ResidualTooLarge {
            residual: res,
            tolerance: RESIDUAL_TOL,
        });
    }
    Ok(SteadyStateResult {
        state,
        null_space_dimension: null_dim,
        degeneracy_checked: checked,
        residual: res,
        smallest_nonzero_singular_value: gap,
    })
}

/// Solves `L v = 0` with the first equation replaced by `Tr rho = 1`.
fn bordered_solve(l: &Superoperator) -> Result<Mat<c64>> {
    let d = l.hilbert_dim();
    let n = l.dim();
    let mut a = l.matrix().clone();
    for k in 0..n {
        a[(0, k)] = if k % (d + 1) == 0 { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) };
    }
    let mut rhs = Col::<c64>::zeros(n);
    rhs[0] = c64::new(1.0, 0.0);
    let x = a.partial_piv_lu().solve(&rhs);
    devectorize(&x)
}

/// Steady state of the generator matching `params`.
pub fn steady_state_for(params: &SystemParams) -> Result<SteadyStateResult> {
    steady_state(&generator(params)?)
}

/// Long-time limit of `exp(L t) rho0`, computed as the spectral projection
/// onto the stationary subspace along the decaying modes.
pub fn stationary_limit(l: &Superoperator, rho0: &DensityMatrix) -> Result<DensityMatrix> {
    let ns = null_space(l)?;
    // P = R (U^+ R)^{-1} U^+
    let overlap = ns.left.adjoint() * &ns.right;
    let projected: Col<c64> = ns.left.adjoint() * vectorize(rho0.matrix());
    let coeffs = overlap.partial_piv_lu().solve(&projected);
    let v: Col<c64> = &ns.right * &coeffs;
    repair_positivity(hermitian_trace_normalized(devectorize(&v)?)?)
}

/// End points of a one-parameter stationary family: the two states where the
/// segment through `a` and `b` leaves the positive cone.
pub fn stationary_segment_ends(a: &DensityMatrix, b: &DensityMatrix) -> Result<(DensityMatrix, DensityMatrix)> {
    let diff = b.matrix() - a.matrix();
    if linalg::max_abs(&diff) < 1e-10 {
        return Err(Error::InvalidParams("segment end points coincide".into()));
    }
    let at = |t: f64| linalg::hermitian_part(&(a.matrix() + linalg::scaled(&diff, c64::new(t, 0.0))));
    let min_eig = |t: f64| -> Result<f64> { Ok(linalg::hermitian_eigenvalues(&at(t))?[0]) };
    let mut ends = Vec::with_capacity(2);
    for dir in [-1.0, 1.0] {
        // a sits at t = 0, b at t = 1; both are physical
        let (mut inside, mut outside) = (if dir > 0.0 { 1.0 } else { 0.0 }, dir * 2.0);
        while min_eig(outside)? >= -1e-13 {
            inside = outside;
            outside *= 2.0;
            if outside.abs() > 1e8 {
                return Err(Error::InvalidParams("stationary family is unbounded".into()));
            }
        }
        for _ in 0..80 {
            let mid = 0.5 * (inside + outside);
            if min_eig(mid)? >= 0.0 {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        ends.push(repair_positivity(hermitian_trace_normalized(at(inside))?)?);
    }
    let hi = ends.pop().expect("two ends");
    let lo = ends.pop().expect("two ends");
    Ok((lo, hi))
}

/// `exp(L t) rho0` by dense matrix exponential.
pub fn propagate(l: &Superoperator, rho0: &Mat<c64>, t: f64) -> Result<Mat<c64>> {
    let prop = linalg::expm(&linalg::scaled(l.matrix(), c64::new(t, 0.0)));
    devectorize(&(prop * vectorize(rho0)))
}

/// Right-channel photon emission rate `gamma_r Tr[J_R^+ J_R rho]` evaluated
/// directly on a stationary state.
pub fn photon_rate_direct(rho: &DensityMatrix, params: &SystemParams) -> Result<f64> {
    let n = params.n_atoms;
    let jr = match params.feedback_mode {
        FeedbackMode::None => collective_lowering(n),
        FeedbackMode::Counting => right_jump_counting(params.feedback_strength, n),
        FeedbackMode::Homodyne => {
            return Err(Error::WrongFeedbackMode {
                expected: FeedbackMode::Counting,
                found: FeedbackMode::Homodyne,
            })
        }
    };
    if rho.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: rho.dim(),
        });
    }
    Ok(params.gamma_r * rho.expectation(&(dagger(&jr) * &jr)).re)
}
