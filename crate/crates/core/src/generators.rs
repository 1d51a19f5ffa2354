//! Liouvillian superoperators for the three dynamics and their tilted
//! (s-deformed) versions.
//!
//! Density matrices are vectorized by stacking columns: entry `rho[(r, c)]`
//! lands at index `c * d + r`, so the matrix map `A rho B` becomes
//! `(B^T kron A)` acting on the vector.

use faer::{c64, Col, Mat};

use crate::error::{Error, Result};
use crate::linalg::{self, dagger, I};
use crate::operators::{
    collective_lowering, drive_operator, hamiltonian, homodyne_hamiltonian, right_jump_counting,
    right_jump_homodyne, sigma, FeedbackMode, Operator, SystemParams,
};

/// Which time-integrated observable a generator is tilted by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    /// Right-channel photon count `K`.
    Counting,
    /// Homodyne quadrature `X_alpha` at the given angle.
    Quadrature { angle: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deformation {
    pub observable: Observable,
    pub s: f64,
}

/// Linear map on vectorized density matrices.
#[derive(Debug, Clone)]
pub struct Superoperator {
    matrix: Mat<c64>,
    hilbert_dim: usize,
    deformation: Option<Deformation>,
}

impl Superoperator {
    fn zeros(hilbert_dim: usize) -> Self {
        let n = hilbert_dim * hilbert_dim;
        Superoperator {
            matrix: Mat::zeros(n, n),
            hilbert_dim,
            deformation: None,
        }
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    pub fn deformation(&self) -> Option<Deformation> {
        self.deformation
    }

    pub fn is_deformed(&self) -> bool {
        self.deformation.is_some()
    }

    pub fn apply_vec(&self, v: &Col<c64>) -> Col<c64> {
        &self.matrix * v
    }

    /// Applies the map to a matrix and returns the resulting matrix.
    pub fn apply(&self, rho: &Mat<c64>) -> Result<Mat<c64>> {
        let v = vectorize(rho);
        if v.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.hilbert_dim,
                found: rho.nrows(),
            });
        }
        devectorize(&self.apply_vec(&v))
    }

    /// Adds `coeff * (A . B)`, i.e. `coeff * (B^T kron A)`, in place.
    fn add_sandwich(&mut self, a: &Operator, b: &Operator, coeff: c64) {
        let d = self.hilbert_dim;
        let a_nz: Vec<(usize, usize, c64)> = nonzeros(a);
        for c_in in 0..d {
            for c_out in 0..d {
                let bv = b[(c_in, c_out)];
                if bv.re == 0.0 && bv.im == 0.0 {
                    continue;
                }
                let w = bv * coeff;
                for &(r_out, r_in, av) in &a_nz {
                    self.matrix[(c_out * d + r_out, c_in * d + r_in)] += w * av;
                }
            }
        }
    }

    fn add_left(&mut self, a: &Operator, coeff: c64) {
        let id = linalg::identity(self.hilbert_dim);
        self.add_sandwich(a, &id, coeff);
    }

    fn add_right(&mut self, b: &Operator, coeff: c64) {
        let id = linalg::identity(self.hilbert_dim);
        self.add_sandwich(&id, b, coeff);
    }

    /// `-i [h, .]`
    fn add_hamiltonian(&mut self, h: &Operator) {
        self.add_left(h, -I);
        self.add_right(h, I);
    }

    /// `rate * (A . A^+ - 1/2 {A^+ A, .})`
    fn add_dissipator(&mut self, a: &Operator, rate: f64) {
        if rate == 0.0 {
            return;
        }
        let ad = dagger(a);
        let ada = &ad * a;
        self.add_sandwich(a, &ad, c64::new(rate, 0.0));
        self.add_left(&ada, c64::new(-0.5 * rate, 0.0));
        self.add_right(&ada, c64::new(-0.5 * rate, 0.0));
    }

    fn add_unguided(&mut self, params: &SystemParams) {
        if params.gamma_unguided > 0.0 {
            for j in 1..=params.n_atoms {
                let s = sigma(j, params.n_atoms).expect("index in range");
                self.add_dissipator(&s, params.gamma_unguided);
            }
        }
    }

    fn add_identity(&mut self, coeff: c64) {
        for i in 0..self.dim() {
            self.matrix[(i, i)] += coeff;
        }
    }
}

fn nonzeros(a: &Operator) -> Vec<(usize, usize, c64)> {
    let mut out = Vec::new();
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if v.re != 0.0 || v.im != 0.0 {
                out.push((i, j, v));
            }
        }
    }
    out
}

pub fn vectorize(rho: &Mat<c64>) -> Col<c64> {
    let d = rho.nrows();
    Col::from_fn(d * rho.ncols(), |k| rho[(k % d, k / d)])
}

pub fn devectorize(v: &Col<c64>) -> Result<Mat<c64>> {
    let n = v.nrows();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            found: n,
        });
    }
    Ok(Mat::from_fn(d, d, |r, c| v[c * d + r]))
}

/// Superoperator of `rho -> A rho B`.
pub fn sandwich(a: &Operator, b: &Operator) -> Mat<c64> {
    linalg::kron(&linalg::transpose(b), a)
}

fn require_mode(params: &SystemParams, allowed: &[FeedbackMode], expected: FeedbackMode) -> Result<()> {
    params.validate()?;
    if allowed.contains(&params.feedback_mode) {
        Ok(())
    } else {
        Err(Error::WrongFeedbackMode {
            expected,
            found: params.feedback_mode,
        })
    }
}

/// Generator without feedback:
/// `-i[H, .] + gamma_r D(J) + gamma_l D(J) + Gamma sum_j D(sigma_j)`.
pub fn liouvillian(params: &SystemParams) -> Result<Superoperator> {
    require_mode(params, &[FeedbackMode::None], FeedbackMode::None)?;
    let mut l = Superoperator::zeros(params.dim());
    let j = collective_lowering(params.n_atoms);
    l.add_hamiltonian(&hamiltonian(params));
    l.add_dissipator(&j, params.gamma_r);
    l.add_dissipator(&j, params.gamma_l);
    l.add_unguided(params);
    Ok(l)
}

/// Generator with instantaneous photon-counting feedback: the right-channel
/// recycling term uses `J_R = exp(-i g F) J`.
pub fn liouvillian_counting(params: &SystemParams) -> Result<Superoperator> {
    require_mode(params, &[FeedbackMode::Counting], FeedbackMode::Counting)?;
    Ok(counting_generator(params, params.feedback_strength))
}

fn counting_generator(params: &SystemParams, pulse_area: f64) -> Superoperator {
    let n = params.n_atoms;
    let mut l = Superoperator::zeros(params.dim());
    let j = collective_lowering(n);
    let jr = right_jump_counting(pulse_area, n);
    let jdj = dagger(&j) * &j;
    l.add_hamiltonian(&hamiltonian(params));
    l.add_sandwich(&jr, &dagger(&jr), c64::new(params.gamma_r, 0.0));
    l.add_sandwich(&j, &dagger(&j), c64::new(params.gamma_l, 0.0));
    let half_gamma = c64::new(-0.5 * params.gamma(), 0.0);
    l.add_left(&jdj, half_gamma);
    l.add_right(&jdj, half_gamma);
    l.add_unguided(params);
    l
}

/// Generator with homodyne current feedback.
pub fn liouvillian_homodyne(params: &SystemParams) -> Result<Superoperator> {
    require_mode(params, &[FeedbackMode::Homodyne], FeedbackMode::Homodyne)?;
    Ok(homodyne_generator(params))
}

fn homodyne_generator(params: &SystemParams) -> Superoperator {
    let n = params.n_atoms;
    let mut l = Superoperator::zeros(params.dim());
    let g = params.effective_strength();
    l.add_hamiltonian(&homodyne_hamiltonian(params));
    l.add_dissipator(&right_jump_homodyne(g, params.quadrature_angle, n), params.gamma_r);
    l.add_dissipator(&collective_lowering(n), params.gamma_l);
    l.add_unguided(params);
    l
}

/// Undeformed generator matching `params.feedback_mode`.
pub fn generator(params: &SystemParams) -> Result<Superoperator> {
    match params.feedback_mode {
        FeedbackMode::None => liouvillian(params),
        FeedbackMode::Counting => liouvillian_counting(params),
        FeedbackMode::Homodyne => liouvillian_homodyne(params),
    }
}

/// Right-channel jump operator as it enters the dissipator for the current mode.
pub fn right_jump(params: &SystemParams) -> Operator {
    let n = params.n_atoms;
    match params.feedback_mode {
        FeedbackMode::None => collective_lowering(n),
        FeedbackMode::Counting => right_jump_counting(params.feedback_strength, n),
        FeedbackMode::Homodyne => {
            right_jump_homodyne(params.feedback_strength, params.quadrature_angle, n)
        }
    }
}

/// Tilted generator for photon counting: the right-channel recycling term is
/// weighted by `e^{-s}`. Feedback mode `none` is treated as pulse area zero.
pub fn deformed_counting(params: &SystemParams, s: f64) -> Result<Superoperator> {
    require_mode(
        params,
        &[FeedbackMode::None, FeedbackMode::Counting],
        FeedbackMode::Counting,
    )?;
    let pulse = params.effective_strength();
    let mut w = counting_generator(params, pulse);
    let jr = right_jump_counting(pulse, params.n_atoms);
    w.add_sandwich(&jr, &dagger(&jr), c64::new(((-s).exp() - 1.0) * params.gamma_r, 0.0));
    w.deformation = Some(Deformation {
        observable: Observable::Counting,
        s,
    });
    Ok(w)
}

/// Measured operator of the quadrature tilt, `e^{-i alpha}(J - i g e^{i alpha} F)`.
fn quadrature_operator(params: &SystemParams) -> Operator {
    let g = params.effective_strength();
    let alpha = params.quadrature_angle;
    linalg::scaled(
        &right_jump_homodyne(g, alpha, params.n_atoms),
        c64::new(0.0, -alpha).exp(),
    )
}

/// Tilted generator for the homodyne quadrature:
/// `L_homodyne - (s/2) sqrt(gamma_r) [c . + . c^+] + (s^2/8) .` with
/// `c = e^{-i alpha}(J - i g e^{i alpha} F)`. Feedback mode `none` is treated
/// as gain zero.
pub fn deformed_quadrature(params: &SystemParams, s: f64) -> Result<Superoperator> {
    require_mode(
        params,
        &[FeedbackMode::None, FeedbackMode::Homodyne],
        FeedbackMode::Homodyne,
    )?;
    let mut w = homodyne_generator(params);
    let c = quadrature_operator(params);
    let coeff = c64::new(-0.5 * s * params.gamma_r.sqrt(), 0.0);
    w.add_left(&c, coeff);
    w.add_right(&dagger(&c), coeff);
    w.add_identity(c64::new(s * s / 8.0, 0.0));
    w.deformation = Some(Deformation {
        observable: Observable::Quadrature {
            angle: params.quadrature_angle,
        },
        s,
    });
    Ok(w)
}

/// Tilted generator for `observable` at counting field `s`.
pub fn deformed(params: &SystemParams, observable: Observable, s: f64) -> Result<Superoperator> {
    match observable {
        Observable::Counting => deformed_counting(params, s),
        Observable::Quadrature { angle } => {
            let p = SystemParams {
                quadrature_angle: angle,
                ..*params
            };
            deformed_quadrature(&p, s)
        }
    }
}

/// `d W_s / ds` at `s = 0`.
pub fn tilt_derivative(params: &SystemParams, observable: Observable) -> Result<Mat<c64>> {
    let mut d = Superoperator::zeros(params.dim());
    match observable {
        Observable::Counting => {
            let jr = right_jump_counting(params.effective_strength(), params.n_atoms);
            d.add_sandwich(&jr, &dagger(&jr), c64::new(-params.gamma_r, 0.0));
        }
        Observable::Quadrature { angle } => {
            let p = SystemParams {
                quadrature_angle: angle,
                ..*params
            };
            let c = quadrature_operator(&p);
            let coeff = c64::new(-0.5 * params.gamma_r.sqrt(), 0.0);
            d.add_left(&c, coeff);
            d.add_right(&dagger(&c), coeff);
        }
    }
    Ok(d.matrix)
}

/// Right-hand side of the master equation for `params`, evaluated directly in
/// matrix form (no vectorization).
pub fn master_equation_rhs(params: &SystemParams, rho: &Mat<c64>) -> Mat<c64> {
    let n = params.n_atoms;
    let j = collective_lowering(n);
    let diss = |a: &Operator, rate: f64| -> Mat<c64> {
        let ad = dagger(a);
        let ada = &ad * a;
        let term = a * rho * &ad - linalg::scaled(&linalg::anticommutator(&ada, rho), c64::new(0.5, 0.0));
        linalg::scaled(&term, c64::new(rate, 0.0))
    };
    let mut out = match params.feedback_mode {
        FeedbackMode::None => {
            linalg::scaled(&linalg::commutator(&hamiltonian(params), rho), -I)
                + diss(&j, params.gamma_r)
                + diss(&j, params.gamma_l)
        }
        FeedbackMode::Counting => {
            let jr = right_jump_counting(params.feedback_strength, n);
            let jdj = dagger(&j) * &j;
            linalg::scaled(&linalg::commutator(&hamiltonian(params), rho), -I)
                + linalg::scaled(&(&jr * rho * dagger(&jr)), c64::new(params.gamma_r, 0.0))
                + linalg::scaled(&(&j * rho * dagger(&j)), c64::new(params.gamma_l, 0.0))
                - linalg::scaled(
                    &linalg::anticommutator(&jdj, rho),
                    c64::new(0.5 * params.gamma(), 0.0),
                )
        }
        FeedbackMode::Homodyne => {
            let f = drive_operator(n);
            let phase = c64::new(0.0, params.quadrature_angle).exp();
            let g = params.feedback_strength;
            let h_fb = linalg::scaled(&(dagger(&f) * &j), phase.conj())
                + linalg::scaled(&(dagger(&j) * &f), phase);
            let h = hamiltonian(params) + linalg::scaled(&h_fb, c64::new(0.5 * g * params.gamma_r, 0.0));
            let a = &j + linalg::scaled(&f, -I * g * phase);
            linalg::scaled(&linalg::commutator(&h, rho), -I)
                + diss(&a, params.gamma_r)
                + diss(&j, params.gamma_l)
        }
    };
    if params.gamma_unguided > 0.0 {
        for k in 1..=n {
            out += diss(&sigma(k, n).expect("index in range"), params.gamma_unguided);
        }
    }
    out
}

/// Vectorized identity; a left null vector of every trace-preserving generator.
pub fn vectorized_identity(hilbert_dim: usize) -> Col<c64> {
    vectorize(&linalg::identity(hilbert_dim))
}

/// Largest modulus of `<<1| L`, the trace-preservation residual.
pub fn trace_preservation_residual(l: &Superoperator) -> f64 {
    let id = vectorized_identity(l.hilbert_dim());
    let row = id.transpose() * l.matrix();
    (0..row.ncols()).map(|k| row[k].norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, max_abs_diff};
    use crate::operators::{dimer_state, PureState};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

    fn pseudo_random_matrix(d: usize, seed: u64) -> Mat<c64> {
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        Mat::from_fn(d, d, |_, _| c64::new(next(), next()))
    }

    fn random_hermitian(d: usize, seed: u64) -> Mat<c64> {
        linalg::hermitian_part(&pseudo_random_matrix(d, seed))
    }

    #[test]
    fn identity_vectorizes_to_unit_diagonal() {
        let v = vectorize(&linalg::identity(2));
        let want = [1.0, 0.0, 0.0, 1.0];
        for k in 0..4 {
            assert_eq!(v[k], c64::new(want[k], 0.0));
        }
    }

    #[test]
    fn vectorization_round_trip() {
        let rho = pseudo_random_matrix(4, 3);
        assert_eq!(devectorize(&vectorize(&rho)).unwrap(), rho);
        assert!(devectorize(&Col::zeros(5)).is_err());
    }

    #[test]
    fn sandwich_matches_direct_product() {
        for seed in 0..5 {
            let a = pseudo_random_matrix(2, 10 + seed);
            let b = pseudo_random_matrix(2, 20 + seed);
            let rho = pseudo_random_matrix(2, 30 + seed);
            // direct entrywise arithmetic
            let mut direct = Mat::<c64>::zeros(2, 2);
            for r in 0..2 {
                for c in 0..2 {
                    for k in 0..2 {
                        for l in 0..2 {
                            direct[(r, c)] += a[(r, k)] * rho[(k, l)] * b[(l, c)];
                        }
                    }
                }
            }
            let via_super = devectorize(&(sandwich(&a, &b) * vectorize(&rho))).unwrap();
            assert!(max_abs_diff(&via_super, &direct) < 1e-15);
        }
    }

    fn param_sets() -> Vec<SystemParams> {
        let mut out = Vec::new();
        for n in 1..=3 {
            let base = SystemParams::new(n)
                .with_rabi(0.7 + 0.2 * n as f64)
                .with_detuning(0.13 * n as f64 - 0.2)
                .with_chirality(1.0, 0.55);
            out.push(base);
            out.push(base.with_unguided(0.3));
            out.push(base.with_counting_feedback(0.9));
            out.push(base.with_counting_feedback(FRAC_PI_2).with_unguided(0.1));
            out.push(base.with_homodyne_feedback(0.6, 1.2));
            out.push(base.with_homodyne_feedback(-1.3, 0.3).with_unguided(0.2));
        }
        out
    }

    #[test]
    fn generators_are_trace_preserving() {
        for p in param_sets() {
            let l = generator(&p).unwrap();
            assert!(trace_preservation_residual(&l) < 1e-10, "{p:?}");
        }
    }

    #[test]
    fn superoperator_matches_matrix_form() {
        for (k, p) in param_sets().into_iter().enumerate() {
            let rho = pseudo_random_matrix(p.dim(), 100 + k as u64);
            let via_super = generator(&p).unwrap().apply(&rho).unwrap();
            let direct = master_equation_rhs(&p, &rho);
            assert!(max_abs_diff(&via_super, &direct) < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn generators_preserve_hermiticity() {
        for (k, p) in param_sets().into_iter().enumerate() {
            let rho = random_hermitian(p.dim(), 200 + k as u64);
            let out = generator(&p).unwrap().apply(&rho).unwrap();
            assert!(max_abs_diff(&out, &dagger(&out)) < 1e-12);
        }
    }

    #[test]
    fn wrong_mode_is_rejected() {
        let p = SystemParams::new(2).with_counting_feedback(0.3);
        assert!(matches!(liouvillian(&p), Err(Error::WrongFeedbackMode { .. })));
        assert!(matches!(liouvillian_homodyne(&p), Err(Error::WrongFeedbackMode { .. })));
        assert!(deformed_quadrature(&p, 0.1).is_err());
        let p = SystemParams::new(2).with_homodyne_feedback(0.3, 0.1);
        assert!(liouvillian_counting(&p).is_err());
        assert!(deformed_counting(&p, 0.1).is_err());
    }

    #[test]
    fn zero_feedback_reduces_to_plain_liouvillian() {
        let base = SystemParams::new(2).with_rabi(1.1).with_detuning(0.2).with_chirality(1.0, 0.4);
        let plain = liouvillian(&base).unwrap();
        let counting = liouvillian_counting(&base.with_counting_feedback(0.0)).unwrap();
        let homodyne = liouvillian_homodyne(&base.with_homodyne_feedback(0.0, 0.8)).unwrap();
        assert!(max_abs_diff(plain.matrix(), counting.matrix()) < 1e-14);
        assert!(max_abs_diff(plain.matrix(), homodyne.matrix()) < 1e-14);
    }

    #[test]
    fn ground_state_is_stationary_without_drive() {
        let p = SystemParams::new(2).with_rabi(0.0).with_chirality(1.0, 0.5);
        let out = liouvillian(&p).unwrap().apply(&PureState::ground(2).projector()).unwrap();
        assert_eq!(max_abs(&out), 0.0);
    }

    #[test]
    fn dimer_is_stationary_on_resonance() {
        for (rabi, dg) in [(1.0, 0.6), (0.3, 0.9), (2.5, -0.4)] {
            let p = SystemParams::new(2).with_rabi(rabi).with_chirality(1.0, dg);
            let d = dimer_state(rabi, dg).unwrap().projector();
            assert!(max_abs(&liouvillian(&p).unwrap().apply(&d).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn fully_mixed_is_stationary_for_perfect_chirality_counting() {
        let p = SystemParams::new(2)
            .with_rabi(0.8)
            .with_detuning(0.1)
            .with_chirality(1.0, 1.0)
            .with_counting_feedback(FRAC_PI_2);
        let mixed = linalg::scaled(&linalg::identity(4), c64::new(0.25, 0.0));
        assert!(max_abs(&liouvillian_counting(&p).unwrap().apply(&mixed).unwrap()) < 1e-10);
    }

    #[test]
    fn fully_mixed_point_for_homodyne_feedback() {
        let p = SystemParams::new(2)
            .with_rabi(1.0)
            .with_chirality(1.0, 1.0)
            .with_homodyne_feedback(-0.5, FRAC_PI_2);
        let mixed = linalg::scaled(&linalg::identity(4), c64::new(0.25, 0.0));
        assert!(max_abs(&liouvillian_homodyne(&p).unwrap().apply(&mixed).unwrap()) < 1e-10);
    }

    #[test]
    fn deformations_reduce_at_zero_field() {
        let base = SystemParams::new(2).with_rabi(0.9).with_detuning(0.1).with_chirality(1.0, 0.7);
        let pc = base.with_counting_feedback(1.2);
        let w = deformed_counting(&pc, 0.0).unwrap();
        assert_eq!(max_abs_diff(w.matrix(), liouvillian_counting(&pc).unwrap().matrix()), 0.0);
        let ph = base.with_homodyne_feedback(0.4, FRAC_PI_6);
        let w = deformed_quadrature(&ph, 0.0).unwrap();
        assert_eq!(max_abs_diff(w.matrix(), liouvillian_homodyne(&ph).unwrap().matrix()), 0.0);
    }

    #[test]
    fn counting_tilt_limits() {
        let base = SystemParams::new(2).with_rabi(0.9).with_detuning(0.1).with_chirality(1.0, 0.7);
        let pc = base.with_counting_feedback(0.5);
        // s -> infinity removes the right recycling term
        let w = deformed_counting(&pc, 800.0).unwrap();
        let jr = right_jump_counting(0.5, 2);
        let recycle = linalg::scaled(&sandwich(&jr, &dagger(&jr)), c64::new(pc.gamma_r, 0.0));
        let no_clicks = liouvillian_counting(&pc).unwrap().matrix() - &recycle;
        assert!(max_abs_diff(w.matrix(), &no_clicks) < 1e-14);
        // gamma_r = 0: no dependence on s
        let dark_right = SystemParams { gamma_r: 0.0, gamma_l: 1.0, ..pc };
        let a = deformed_counting(&dark_right, 0.0).unwrap();
        let b = deformed_counting(&dark_right, 1.7).unwrap();
        assert_eq!(max_abs_diff(a.matrix(), b.matrix()), 0.0);
    }

    #[test]
    fn quadrature_tilt_without_coupling_is_pure_noise_term() {
        let p = SystemParams {
            gamma_r: 0.0,
            gamma_l: 1.0,
            ..SystemParams::new(2).with_homodyne_feedback(0.0, 0.7)
        };
        let s = 0.9;
        let w = deformed_quadrature(&p, s).unwrap();
        let mut want = liouvillian_homodyne(&p).unwrap().matrix().clone();
        for i in 0..16 {
            want[(i, i)] += c64::new(s * s / 8.0, 0.0);
        }
        assert!(max_abs_diff(w.matrix(), &want) < 1e-15);
    }

    #[test]
    fn quadrature_tilt_term_preserves_hermiticity() {
        let p = SystemParams::new(2).with_chirality(1.0, 0.6).with_homodyne_feedback(0.7, 1.0);
        let d = tilt_derivative(&p, Observable::Quadrature { angle: 1.0 }).unwrap();
        for seed in 0..4 {
            let rho = random_hermitian(4, 300 + seed);
            let out = devectorize(&(&d * vectorize(&rho))).unwrap();
            assert!(max_abs_diff(&out, &dagger(&out)) < 1e-14);
        }
    }

    #[test]
    fn deformation_is_linear_and_quadratic_in_s() {
        let base = SystemParams::new(2).with_rabi(0.9).with_detuning(0.1).with_chirality(1.0, 0.7);
        let pc = base.with_counting_feedback(0.4);
        let l = liouvillian_counting(&pc).unwrap();
        let d = tilt_derivative(&pc, Observable::Counting).unwrap();
        for s in [1e-2, 1e-3, 1e-4] {
            let w = deformed_counting(&pc, s).unwrap();
            let lin = l.matrix() + linalg::scaled(&d, c64::new(s, 0.0));
            assert!(max_abs_diff(w.matrix(), &lin) < s * s);
        }
        let ph = base.with_homodyne_feedback(0.4, 0.5);
        let l = liouvillian_homodyne(&ph).unwrap();
        let d = tilt_derivative(&ph, Observable::Quadrature { angle: 0.5 }).unwrap();
        for s in [1e-1, 1e-2] {
            let w = deformed_quadrature(&ph, s).unwrap();
            let mut lin = l.matrix() + linalg::scaled(&d, c64::new(s, 0.0));
            for i in 0..16 {
                lin[(i, i)] += c64::new(s * s / 8.0, 0.0);
            }
            assert!(max_abs_diff(w.matrix(), &lin) < 1e-14);
        }
    }
}
