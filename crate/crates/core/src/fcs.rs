//! Photon-counting and quadrature statistics from the dominant eigenvalue of
//! tilted generators.
//!
//! With `Z_t(s) = <exp(-s K)> ~ exp(t theta(s))` the first cumulant per unit
//! time is `-theta'(0)` and the second is `+theta''(0)`.

use faer::{c64, linalg::solvers::Solve, Col, Mat};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generators::{deformed, generator, tilt_derivative, vectorize, vectorized_identity, Observable, Superoperator};
use crate::steady::steady_state;
use crate::operators::SystemParams;

/// Eigenvalues closer than this (in real part) count as a degenerate dominant pair.
pub const DEGENERACY_GAP: f64 = 1e-10;
/// Allowed imaginary part of the dominant eigenvalue, relative to `max(1, |W|_max)`.
pub const IMAG_TOL: f64 = 1e-10;
/// Largest Liouville dimension for which full eigendecompositions are used.
pub const DENSE_EIGEN_MAX_DIM: usize = crate::steady::SVD_MAX_DIM;
/// Analytic white-noise floor of `theta''(0)` for the quadrature tilt.
pub const QUADRATURE_NOISE_FLOOR: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CumulantMethod {
    EigenvectorPerturbation,
    FiniteDifference,
    /// Stationary state and reduced resolvent at `s = 0` only; used above
    /// [`DENSE_EIGEN_MAX_DIM`], where no `theta` samples are taken.
    Resolvent,
}

/// Finite-difference settings for derivatives of `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FdOptions {
    /// Outer step `h`; the Richardson partner uses `h / 2`. `None` selects
    /// [`fd_step_policy`].
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominantEigenvalue {
    pub value: c64,
    /// Real-part distance to the next eigenvalue.
    pub gap: f64,
}

impl DominantEigenvalue {
    pub fn is_degenerate(&self) -> bool {
        self.gap < DEGENERACY_GAP
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantResult {
    pub observable: Observable,
    /// `(s, theta(s))`, sorted by `s`.
    pub theta_samples: Vec<(f64, f64)>,
    /// `k` or `x_alpha`.
    pub first_cumulant: f64,
    /// Finite-difference estimate of the first cumulant, kept for cross-checks.
    pub first_cumulant_fd: f64,
    /// `Delta k^2` or `Delta x_alpha^2`, raw `theta''(0)`.
    pub second_cumulant: f64,
    /// Second cumulant from the reduced resolvent at `s = 0`; `None` when the
    /// dominant eigenvalue is degenerate.
    pub second_cumulant_resolvent: Option<f64>,
    /// Method used for `first_cumulant`.
    pub method: CumulantMethod,
    pub fd_step: f64,
    pub eigen_gap: f64,
    pub degenerate: bool,
}

impl CumulantResult {
    /// Second cumulant with the quadrature white-noise floor removed; equal
    /// to the raw value for photon counting.
    pub fn second_cumulant_excess(&self) -> f64 {
        match self.observable {
            Observable::Counting => self.second_cumulant,
            Observable::Quadrature { .. } => self.second_cumulant - QUADRATURE_NOISE_FLOOR,
        }
    }

    pub fn theta_at_zero(&self) -> f64 {
        self.theta_samples
            .iter()
            .find(|(s, _)| *s == 0.0)
            .map(|(_, t)| *t)
            .unwrap_or(f64::NAN)
    }
}

fn sorted_spectrum(m: &Mat<c64>) -> Result<Vec<c64>> {
    let mut ev = m.eigenvalues().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    ev.sort_by(|a, b| b.re.total_cmp(&a.re));
    Ok(ev)
}

fn imag_tolerance(m: &Mat<c64>) -> f64 {
    IMAG_TOL * crate::linalg::max_abs(m).max(1.0)
}

/// Picks the eigenvalue with the largest real part, preferring the most
/// nearly real candidate among numerically tied ones.
fn pick_dominant(spectrum: &[c64], imag_tol: f64) -> Result<DominantEigenvalue> {
    let top = spectrum[0].re;
    let tie = DEGENERACY_GAP.max(imag_tol);
    let best = spectrum
        .iter()
        .take_while(|z| top - z.re < tie)
        .min_by(|a, b| a.im.abs().total_cmp(&b.im.abs()))
        .copied()
        .expect("non-empty spectrum");
    if best.im.abs() > imag_tol {
        return Err(Error::ComplexDominant { imag: best.im });
    }
    let gap = spectrum.get(1).map(|z| top - z.re).unwrap_or(f64::INFINITY);
    Ok(DominantEigenvalue { value: best, gap })
}

pub fn dominant_eigenvalue(w: &Superoperator) -> Result<DominantEigenvalue> {
    let spectrum = sorted_spectrum(w.matrix())?;
    pick_dominant(&spectrum, imag_tolerance(w.matrix()))
}

/// Scaled cumulant generating function: real part of the dominant eigenvalue.
pub fn scgf(w: &Superoperator) -> Result<f64> {
    Ok(dominant_eigenvalue(w)?.value.re)
}

/// `theta(s)` for each `s`, evaluated concurrently and returned in input order.
pub fn theta_curve(params: &SystemParams, observable: Observable, s_values: &[f64]) -> Result<Vec<(f64, f64)>> {
    s_values
        .par_iter()
        .map(|&s| Ok((s, scgf(&deformed(params, observable, s)?)?)))
        .collect()
}

struct Eigenpairs {
    values: Vec<c64>,
    vectors: Mat<c64>,
}

fn eigenpairs(m: &Mat<c64>) -> Result<Eigenpairs> {
    let evd = m.eigen().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    Ok(Eigenpairs {
        values: evd.S().column_vector().iter().copied().collect(),
        vectors: evd.U().to_owned(),
    })
}

fn closest(values: &[c64], target: c64) -> usize {
    (0..values.len())
        .min_by(|&a, &b| (values[a] - target).norm().total_cmp(&(values[b] - target).norm()))
        .expect("non-empty spectrum")
}

struct Perturbation {
    derivative: f64,
    dominant: DominantEigenvalue,
    /// Right dominant eigenvector, normalized to unit trace.
    right: Col<c64>,
}

/// First-order perturbation of the dominant eigenvalue,
/// `<<l| dW |r>> / <<l|r>>`.
fn perturbed_derivative(w0: &Superoperator, dw: &Mat<c64>) -> Result<Perturbation> {
    let right = eigenpairs(w0.matrix())?;
    let mut spectrum = right.values.clone();
    spectrum.sort_by(|a, b| b.re.total_cmp(&a.re));
    let dom = pick_dominant(&spectrum, imag_tolerance(w0.matrix()))?;
    let r: Col<c64> = right.vectors.col(closest(&right.values, dom.value)).to_owned();
    let left = eigenpairs(&w0.matrix().adjoint().to_owned())?;
    let l: Col<c64> = left.vectors.col(closest(&left.values, dom.value.conj())).to_owned();
    let dwr: Col<c64> = dw * &r;
    let num: c64 = (0..r.nrows()).map(|i| l[i].conj() * dwr[i]).sum();
    let den: c64 = (0..r.nrows()).map(|i| l[i].conj() * r[i]).sum();
    if den.norm() < 1e-12 {
        return Err(Error::Eigensolver("left and right dominant eigenvectors are orthogonal".into()));
    }
    let id = vectorized_identity(w0.hilbert_dim());
    let tr: c64 = (0..r.nrows()).map(|i| id[i] * r[i]).sum();
    let right = if tr.norm() > 1e-12 { &r * faer::Scale(tr.inv()) } else { r };
    Ok(Perturbation {
        derivative: (num / den).re,
        dominant: dom,
        right,
    })
}

/// Second derivative of the dominant eigenvalue at `s = 0` from the reduced
/// resolvent, `<<1| W'' |rho>> + 2 <<1| W' x>>` with `W_0 x = -(W' - theta') rho`
/// and `Tr x = 0`. Requires a trace-preserving `W_0` with a unique stationary state.
fn resolvent_second_derivative(
    w0: &Superoperator,
    dw: &Mat<c64>,
    d2w: &Mat<c64>,
    rho: &Col<c64>,
    first: f64,
) -> f64 {
    let n = w0.dim();
    let id = vectorized_identity(w0.hilbert_dim());
    let trace_of = |v: &Col<c64>| -> c64 { (0..n).map(|i| id[i] * v[i]).sum() };
    // W_0 + |rho>><<1| is invertible when the stationary state is unique
    let bordered = w0.matrix() + rho * id.transpose();
    let y: Col<c64> = dw * rho - rho * faer::Scale(c64::new(first, 0.0));
    let x: Col<c64> = bordered.partial_piv_lu().solve(-&y);
    (trace_of(&(d2w * rho)) + trace_of(&(dw * &x)) * 2.0).re
}

/// `d^2 W_s / ds^2` at `s = 0`.
fn second_tilt(dw: &Mat<c64>, observable: Observable, n: usize) -> Mat<c64> {
    match observable {
        // (e^{-s} - 1) has derivatives -1 and +1 at s = 0
        Observable::Counting => -dw,
        Observable::Quadrature { .. } => {
            Mat::from_fn(n, n, |i, j| if i == j { c64::new(0.25, 0.0) } else { c64::new(0.0, 0.0) })
        }
    }
}

fn resolvent_cumulants(
    params: &SystemParams,
    observable: Observable,
    w0: &Superoperator,
    dw: &Mat<c64>,
) -> Result<CumulantResult> {
    let ss = steady_state(&generator(params)?)?;
    let rho = vectorize(ss.state.matrix());
    let id = vectorized_identity(w0.hilbert_dim());
    let w1rho: Col<c64> = dw * &rho;
    let derivative = (0..rho.nrows()).map(|i| id[i] * w1rho[i]).sum::<c64>().re;
    let d2w = second_tilt(dw, observable, w0.dim());
    let second = resolvent_second_derivative(w0, dw, &d2w, &rho, derivative);
    Ok(CumulantResult {
        observable,
        theta_samples: Vec::new(),
        first_cumulant: -derivative,
        first_cumulant_fd: f64::NAN,
        second_cumulant: second,
        second_cumulant_resolvent: Some(second),
        method: CumulantMethod::Resolvent,
        fd_step: f64::NAN,
        eigen_gap: f64::NAN,
        degenerate: false,
    })
}

/// Finite-difference step: `max(1e-4, 1e-3 max(1, |k|))`, shrunk below a
/// sixteenth of the spectral gap so the stencil stays clear of level crossings.
pub fn fd_step_policy(first_cumulant: f64, gap: f64) -> f64 {
    let h = 1e-4f64.max(1e-3 * first_cumulant.abs().max(1.0));
    if gap.is_finite() && gap > 0.0 {
        h.min(gap / 16.0).max(1e-6)
    } else {
        h
    }
}

/// Cumulants of `observable` per unit time in the stationary regime.
///
/// The first cumulant comes from eigenvector perturbation (finite
/// differences if the dominant eigenvalue is degenerate); the second from a
/// Richardson-extrapolated 5-point stencil on `theta`.
pub fn cumulants(params: &SystemParams, observable: Observable, fd: FdOptions) -> Result<CumulantResult> {
    let w0 = deformed(params, observable, 0.0)?;
    let dw = tilt_derivative(params, observable)?;
    if w0.dim() > DENSE_EIGEN_MAX_DIM {
        return resolvent_cumulants(params, observable, &w0, &dw);
    }
    let pert = match perturbed_derivative(&w0, &dw) {
        Ok(p) => Some(p),
        Err(Error::ComplexDominant { .. }) | Err(Error::Eigensolver(_)) => None,
        Err(e) => return Err(e),
    };
    let gap = match &pert {
        Some(p) => p.dominant.gap,
        None => dominant_eigenvalue(&w0).map(|d| d.gap).unwrap_or(0.0),
    };
    let degenerate = gap < DEGENERACY_GAP;
    let h = fd.step.unwrap_or_else(|| {
        let k = pert.as_ref().map(|p| -p.derivative).unwrap_or(0.0);
        fd_step_policy(k, gap)
    });

    let s_values = [-2.0 * h, -h, -0.5 * h, 0.0, 0.5 * h, h, 2.0 * h];
    let theta = theta_curve(params, observable, &s_values)?;
    let t = |i: usize| theta[i].1;
    let (m2, m1, mh, z, ph, p1, p2) = (t(0), t(1), t(2), t(3), t(4), t(5), t(6));
    let d1_h = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
    let d1_half = (m1 - 8.0 * mh + 8.0 * ph - p1) / (6.0 * h);
    let d1 = (16.0 * d1_half - d1_h) / 15.0;
    let d2_h = (-m2 + 16.0 * m1 - 30.0 * z + 16.0 * p1 - p2) / (12.0 * h * h);
    let d2_half = (-m1 + 16.0 * mh - 30.0 * z + 16.0 * ph - p1) / (3.0 * h * h);
    let d2 = (16.0 * d2_half - d2_h) / 15.0;

    let (first, method, second_resolvent) = match pert {
        Some(p) if !degenerate => {
            let d2w = second_tilt(&dw, observable, w0.dim());
            let v = resolvent_second_derivative(&w0, &dw, &d2w, &p.right, p.derivative);
            (-p.derivative, CumulantMethod::EigenvectorPerturbation, Some(v))
        }
        _ => (-d1, CumulantMethod::FiniteDifference, None),
    };
    Ok(CumulantResult {
        observable,
        theta_samples: theta,
        first_cumulant: first,
        first_cumulant_fd: -d1,
        second_cumulant: d2,
        second_cumulant_resolvent: second_resolvent,
        method,
        fd_step: h,
        eigen_gap: gap,
        degenerate,
    })
}

pub fn counting_cumulants(params: &SystemParams) -> Result<CumulantResult> {
    cumulants(params, Observable::Counting, FdOptions::default())
}

/// Photon count rate `k = -theta_K'(0)`.
pub fn count_rate(params: &SystemParams) -> Result<f64> {
    Ok(counting_cumulants(params)?.first_cumulant)
}

/// Count variance per unit time `Delta k^2 = theta_K''(0)`.
pub fn count_variance(params: &SystemParams) -> Result<f64> {
    Ok(counting_cumulants(params)?.second_cumulant)
}

/// `x_alpha` and `Delta x_alpha^2` at `params.quadrature_angle`.
pub fn quadrature_cumulants(params: &SystemParams) -> Result<CumulantResult> {
    cumulants(
        params,
        Observable::Quadrature {
            angle: params.quadrature_angle,
        },
        FdOptions::default(),
    )
}

/// Feedback gain on the fully mixed line, `g = -1 / (sin(alpha) (dg/gamma + 1))`.
pub fn fully_mixed_line(delta_gamma: f64, gamma: f64, alpha: f64) -> Result<f64> {
    let sin = alpha.sin();
    if sin.abs() < 1e-12 {
        return Err(Error::NoFullyMixedSolution { alpha });
    }
    let chir = delta_gamma / gamma + 1.0;
    if chir == 0.0 {
        return Err(Error::InvalidParams("fully mixed line needs gamma_r > 0".into()));
    }
    Ok(-1.0 / (sin * chir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{deformed_counting, deformed_quadrature};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

    #[test]
    fn theta_vanishes_at_zero_field() {
        let params = [
            SystemParams::new(2).with_rabi(1.0).with_detuning(0.1).with_chirality(1.0, 0.8),
            SystemParams::new(3).with_rabi(0.5).with_detuning(-0.2).with_counting_feedback(1.0),
            SystemParams::new(2).with_rabi(1.2).with_homodyne_feedback(0.4, 0.9),
        ];
        for p in params {
            let w = deformed(&p, Observable::Counting, 0.0)
                .or_else(|_| deformed(&p, Observable::Quadrature { angle: 0.9 }, 0.0))
                .unwrap();
            assert!(scgf(&w).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn quadrature_theta_is_pure_noise_without_coupling() {
        let p = SystemParams {
            gamma_r: 0.0,
            gamma_l: 1.0,
            ..SystemParams::new(2).with_rabi(0.8).with_homodyne_feedback(0.0, 0.4)
        };
        for s in [-1.0, -0.3, 0.5, 2.0] {
            let theta = scgf(&deformed_quadrature(&p, s).unwrap()).unwrap();
            assert!((theta - s * s / 8.0).abs() < 1e-12);
        }
        let c = quadrature_cumulants(&p).unwrap();
        assert!(c.first_cumulant.abs() < 1e-12);
        assert!((c.second_cumulant - 0.25).abs() < 1e-9);
    }

    #[test]
    fn dark_dimer_has_flat_theta() {
        let p = SystemParams::new(2).with_rabi(1.0).with_chirality(1.0, 0.6);
        for s in [0.0, 0.5, 2.0, 10.0] {
            assert!(scgf(&deformed_counting(&p, s).unwrap()).unwrap().abs() < 1e-10);
        }
        let c = counting_cumulants(&p).unwrap();
        assert!(c.first_cumulant.abs() < 1e-8);
        assert!(c.second_cumulant.abs() < 1e-6);
    }

    #[test]
    fn perturbation_and_finite_difference_agree() {
        let p = SystemParams::new(2)
            .with_rabi(0.9)
            .with_detuning(0.3)
            .with_chirality(1.0, 0.5)
            .with_counting_feedback(1.1);
        let c = counting_cumulants(&p).unwrap();
        assert_eq!(c.method, CumulantMethod::EigenvectorPerturbation);
        assert!((c.first_cumulant - c.first_cumulant_fd).abs() < 1e-6 * c.first_cumulant.abs());
        let r = c.second_cumulant_resolvent.unwrap();
        assert!((c.second_cumulant - r).abs() < 1e-6 * r);
        let q = quadrature_cumulants(&SystemParams::new(2).with_rabi(0.9).with_detuning(0.3).with_homodyne_feedback(0.3, 1.0)).unwrap();
        assert!((q.first_cumulant - q.first_cumulant_fd).abs() < 1e-6 * q.first_cumulant.abs().max(1e-3));
    }

    #[test]
    fn resolvent_route_matches_eigen_route() {
        let p = SystemParams::new(2)
            .with_rabi(0.9)
            .with_detuning(0.3)
            .with_chirality(1.0, 0.5)
            .with_counting_feedback(1.1);
        let w0 = deformed(&p, Observable::Counting, 0.0).unwrap();
        let dw = tilt_derivative(&p, Observable::Counting).unwrap();
        let r = resolvent_cumulants(&p, Observable::Counting, &w0, &dw).unwrap();
        let e = counting_cumulants(&p).unwrap();
        assert_eq!(r.method, CumulantMethod::Resolvent);
        assert!((r.first_cumulant - e.first_cumulant).abs() < 1e-10);
        assert!((r.second_cumulant - e.second_cumulant_resolvent.unwrap()).abs() < 1e-8);
        let q = SystemParams::new(2).with_rabi(0.9).with_detuning(0.3).with_homodyne_feedback(0.3, 1.0);
        let obs = Observable::Quadrature { angle: 1.0 };
        let w0 = deformed(&q, obs, 0.0).unwrap();
        let dw = tilt_derivative(&q, obs).unwrap();
        let r = resolvent_cumulants(&q, obs, &w0, &dw).unwrap();
        let e = quadrature_cumulants(&q).unwrap();
        assert!((r.first_cumulant - e.first_cumulant).abs() < 1e-10);
        assert!((r.second_cumulant - e.second_cumulant).abs() < 1e-6);
    }

    #[test]
    fn fully_mixed_line_values() {
        assert!((fully_mixed_line(1.0, 1.0, FRAC_PI_2).unwrap() + 0.5).abs() < 1e-15);
        assert!((fully_mixed_line(0.0, 1.0, FRAC_PI_2).unwrap() + 1.0).abs() < 1e-15);
        assert!((fully_mixed_line(0.8, 1.0, FRAC_PI_6).unwrap() + 10.0 / 9.0).abs() < 1e-14);
        assert!(matches!(fully_mixed_line(0.8, 1.0, 0.0), Err(Error::NoFullyMixedSolution { .. })));
        assert!(matches!(fully_mixed_line(0.8, 1.0, PI), Err(Error::NoFullyMixedSolution { .. })));
    }

    #[test]
    fn pick_dominant_rejects_complex_leader() {
        let spectrum = [c64::new(0.0, 0.3), c64::new(0.0, -0.3), c64::new(-1.0, 0.0)];
        assert!(matches!(pick_dominant(&spectrum, 1e-10), Err(Error::ComplexDominant { .. })));
        let spectrum = [c64::new(0.0, 1e-14), c64::new(-0.5, 0.2)];
        let d = pick_dominant(&spectrum, 1e-10).unwrap();
        assert!((d.gap - 0.5).abs() < 1e-15);
    }
}
