//! Many-body Hilbert space of the atom chain: ladder operators, collective
//! operators, Hamiltonians and the feedback unitary.
//!
//! Basis ordering is fixed throughout the crate: tensor products take atom 1
//! as the leftmost factor, and on each atom index 0 is `|g>` and index 1 is
//! `|e>`. The basis index of a product state is therefore
//! `sum_j b_j * 2^(N - j)` with `b_j = 1` when atom `j` is excited.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use faer::{c64, Col, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dagger, I, ONE, ZERO};

/// Dense complex operator on the `2^N`-dimensional chain Hilbert space.
pub type Operator = Mat<c64>;

/// Largest chain handled by the dense representation.
pub const MAX_ATOMS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackMode {
    #[default]
    None,
    Counting,
    Homodyne,
}

impl fmt::Display for FeedbackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedbackMode::None => "none",
            FeedbackMode::Counting => "counting",
            FeedbackMode::Homodyne => "homodyne",
        })
    }
}

/// Physical and feedback parameters of the driven chain. Rates share one
/// arbitrary unit; the examples and defaults use `gamma_r + gamma_l = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n_atoms: usize,
    /// Rabi frequency of the uniform drive.
    pub rabi: f64,
    pub detuning: f64,
    /// Emission rate into the right-propagating (detected) guided mode.
    pub gamma_r: f64,
    pub gamma_l: f64,
    /// Independent per-atom emission into unguided modes.
    pub gamma_unguided: f64,
    pub feedback_mode: FeedbackMode,
    /// Pulse area per click (counting) or gain (homodyne).
    pub feedback_strength: f64,
    /// Quadrature angle, used only for homodyne detection.
    pub quadrature_angle: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            n_atoms: 2,
            rabi: 1.0,
            detuning: 0.0,
            gamma_r: 0.8,
            gamma_l: 0.2,
            gamma_unguided: 0.0,
            feedback_mode: FeedbackMode::None,
            feedback_strength: 0.0,
            quadrature_angle: 0.0,
        }
    }
}

impl SystemParams {
    pub fn new(n_atoms: usize) -> Self {
        SystemParams {
            n_atoms,
            ..Default::default()
        }
    }

    pub fn with_rabi(mut self, rabi: f64) -> Self {
        self.rabi = rabi;
        self
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    /// Sets `gamma_r` and `gamma_l` from the total rate and the chirality
    /// `delta_gamma = gamma_r - gamma_l`.
    pub fn with_chirality(mut self, gamma: f64, delta_gamma: f64) -> Self {
        self.gamma_r = 0.5 * (gamma + delta_gamma);
        self.gamma_l = 0.5 * (gamma - delta_gamma);
        self
    }

    pub fn with_unguided(mut self, gamma_unguided: f64) -> Self {
        self.gamma_unguided = gamma_unguided;
        self
    }

    pub fn with_counting_feedback(mut self, pulse_area: f64) -> Self {
        self.feedback_mode = FeedbackMode::Counting;
        self.feedback_strength = pulse_area;
        self
    }

    pub fn with_homodyne_feedback(mut self, gain: f64, angle: f64) -> Self {
        self.feedback_mode = FeedbackMode::Homodyne;
        self.feedback_strength = gain;
        self.quadrature_angle = angle;
        self
    }

    pub fn without_feedback(mut self) -> Self {
        self.feedback_mode = FeedbackMode::None;
        self.feedback_strength = 0.0;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma_r + self.gamma_l
    }

    pub fn delta_gamma(&self) -> f64 {
        self.gamma_r - self.gamma_l
    }

    pub fn dim(&self) -> usize {
        1 << self.n_atoms
    }

    /// Feedback strength as seen by the dynamics: zero when feedback is off.
    pub fn effective_strength(&self) -> f64 {
        match self.feedback_mode {
            FeedbackMode::None => 0.0,
            _ => self.feedback_strength,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.n_atoms == 0 || self.n_atoms > MAX_ATOMS {
            return bad(format!("n_atoms = {} outside 1..={MAX_ATOMS}", self.n_atoms));
        }
        let finite = [
            ("rabi", self.rabi),
            ("detuning", self.detuning),
            ("gamma_r", self.gamma_r),
            ("gamma_l", self.gamma_l),
            ("gamma_unguided", self.gamma_unguided),
            ("feedback_strength", self.feedback_strength),
            ("quadrature_angle", self.quadrature_angle),
        ];
        if let Some((name, _)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("{name} is not finite"));
        }
        if self.gamma_r < 0.0 || self.gamma_l < 0.0 || self.gamma_unguided < 0.0 {
            return bad("decay rates must be non-negative".into());
        }
        if self.gamma() <= 0.0 {
            return bad("gamma_r + gamma_l must be positive".into());
        }
        Ok(())
    }
}

/// Normalized state vector on the chain Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState(Col<c64>);

impl PureState {
    /// Wraps `amplitudes`, which must already have unit norm (to 1e-12).
    pub fn new(amplitudes: Col<c64>) -> Result<Self> {
        let norm = amplitudes.norm_l2();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("state norm {norm} is not 1")));
        }
        Ok(PureState(amplitudes))
    }

    pub fn normalized(amplitudes: Col<c64>) -> Result<Self> {
        let norm = amplitudes.norm_l2();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidParams("cannot normalize a zero vector".into()));
        }
        let inv = 1.0 / norm;
        Ok(PureState(Col::from_fn(amplitudes.nrows(), |i| amplitudes[i] * inv)))
    }

    /// Product basis state with the given atoms (1-based) excited.
    pub fn product(n_atoms: usize, excited: &[usize]) -> Result<Self> {
        let mut index = 0usize;
        for &j in excited {
            if j == 0 || j > n_atoms {
                return Err(Error::IndexOutOfRange { index: j, n_atoms });
            }
            index |= 1 << (n_atoms - j);
        }
        Ok(PureState(Col::from_fn(1 << n_atoms, |i| if i == index { ONE } else { ZERO })))
    }

    pub fn ground(n_atoms: usize) -> Self {
        PureState(Col::from_fn(1 << n_atoms, |i| if i == 0 { ONE } else { ZERO }))
    }

    /// `|T> = (|ge> + |eg>)/sqrt(2)` for two atoms.
    pub fn triplet() -> Self {
        Self::two_atom([0.0, FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0])
    }

    /// `|S> = (|ge> - |eg>)/sqrt(2)` for two atoms.
    pub fn singlet() -> Self {
        Self::two_atom([0.0, FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0])
    }

    pub fn both_excited() -> Self {
        Self::two_atom([0.0, 0.0, 0.0, 1.0])
    }

    fn two_atom(amps: [f64; 4]) -> Self {
        PureState(Col::from_fn(4, |i| c64::new(amps[i], 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn amplitudes(&self) -> &Col<c64> {
        &self.0
    }

    pub fn projector(&self) -> Operator {
        let v = &self.0;
        Mat::from_fn(v.nrows(), v.nrows(), |i, j| v[i] * v[j].conj())
    }

    /// `<self|other>`
    pub fn inner(&self, other: &PureState) -> c64 {
        (0..self.dim()).map(|i| self.0[i].conj() * other.0[i]).sum()
    }
}

/// Lowering operator `|g_j><e_j|` of atom `j` (1-based) embedded in an
/// `n_atoms` chain.
pub fn sigma(j: usize, n_atoms: usize) -> Result<Operator> {
    if j == 0 || j > n_atoms {
        return Err(Error::IndexOutOfRange { index: j, n_atoms });
    }
    let dim = 1usize << n_atoms;
    let bit = 1usize << (n_atoms - j);
    let mut s = Mat::zeros(dim, dim);
    for col in (0..dim).filter(|c| c & bit != 0) {
        s[(col & !bit, col)] = ONE;
    }
    Ok(s)
}

/// Collective lowering operator `J = sum_j sigma_j`.
pub fn collective_lowering(n_atoms: usize) -> Operator {
    let dim = 1usize << n_atoms;
    let mut jop = Mat::zeros(dim, dim);
    for j in 1..=n_atoms {
        jop += sigma(j, n_atoms).expect("index in range");
    }
    jop
}

/// `F = J + J^dagger`, the operator the drive and the feedback couple to.
pub fn drive_operator(n_atoms: usize) -> Operator {
    let j = collective_lowering(n_atoms);
    &j + dagger(&j)
}

pub fn hamiltonian(params: &SystemParams) -> Operator {
    let n = params.n_atoms;
    let dim = params.dim();
    let sigmas: Vec<Operator> = (1..=n).map(|j| sigma(j, n).expect("index in range")).collect();
    let mut h = linalg::scaled(&drive_operator(n), c64::new(params.rabi, 0.0));
    for s in &sigmas {
        h += linalg::scaled(&(dagger(s) * s), c64::new(params.detuning, 0.0));
    }
    // -(i/2) dg sum_{j>l} (s_j^+ s_l - s_l^+ s_j)
    let mut exchange = Mat::<c64>::zeros(dim, dim);
    for j in 0..n {
        for l in 0..j {
            exchange += dagger(&sigmas[j]) * &sigmas[l] - dagger(&sigmas[l]) * &sigmas[j];
        }
    }
    h += linalg::scaled(&exchange, c64::new(0.0, -0.5 * params.delta_gamma()));
    h
}

/// `exp(-i g (J + J^dagger))`, evaluated spectrally.
pub fn feedback_unitary(pulse_area: f64, n_atoms: usize) -> Operator {
    linalg::hermitian_function(&drive_operator(n_atoms), |x| c64::new(0.0, -pulse_area * x).exp())
        .expect("self-adjoint eigensolver on a small Hermitian matrix")
}

/// Right-channel jump operator under counting feedback, `exp(-i g F) J`.
pub fn right_jump_counting(pulse_area: f64, n_atoms: usize) -> Operator {
    feedback_unitary(pulse_area, n_atoms) * collective_lowering(n_atoms)
}

/// Right-channel jump operator under homodyne feedback, `J - i g e^{i alpha} F`.
pub fn right_jump_homodyne(gain: f64, angle: f64, n_atoms: usize) -> Operator {
    let coeff = -I * gain * c64::new(0.0, angle).exp();
    collective_lowering(n_atoms) + linalg::scaled(&drive_operator(n_atoms), coeff)
}

/// Hamiltonian with the homodyne feedback correction
/// `H + (g gamma_r / 2)(e^{-i alpha} F J + e^{i alpha} J^dagger F)`.
pub fn homodyne_hamiltonian(params: &SystemParams) -> Operator {
    let n = params.n_atoms;
    let j = collective_lowering(n);
    let f = drive_operator(n);
    let phase = c64::new(0.0, -params.quadrature_angle).exp();
    let fj = linalg::scaled(&(&f * &j), phase);
    let correction = &fj + dagger(&fj);
    let g = params.effective_strength();
    hamiltonian(params) + linalg::scaled(&correction, c64::new(0.5 * g * params.gamma_r, 0.0))
}

/// Two-atom dimer `[dg |gg> + i 2 sqrt(2) rabi |S>] / sqrt(dg^2 + 8 rabi^2)`.
pub fn dimer_state(rabi: f64, delta_gamma: f64) -> Result<PureState> {
    let norm2 = delta_gamma * delta_gamma + 8.0 * rabi * rabi;
    if norm2 == 0.0 {
        return Err(Error::DegenerateDimer);
    }
    let inv = 1.0 / norm2.sqrt();
    let a_gg = c64::new(delta_gamma * inv, 0.0);
    let a_s = c64::new(0.0, 2.0 * std::f64::consts::SQRT_2 * rabi * inv);
    let s = PureState::singlet();
    let amps = Col::from_fn(4, |i| if i == 0 { a_gg } else { a_s * s.amplitudes()[i] });
    PureState::normalized(amps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, max_abs_diff};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn apply(op: &Operator, psi: &PureState) -> Col<c64> {
        op * psi.amplitudes()
    }

    #[test]
    fn single_atom_sigma_is_g_e() {
        let s = sigma(1, 1).unwrap();
        assert_eq!(s[(0, 1)], ONE);
        assert_eq!(s[(0, 0)], ZERO);
        assert_eq!(s[(1, 0)], ZERO);
        assert_eq!(s[(1, 1)], ZERO);
    }

    #[test]
    fn sigma_is_tensor_embedding() {
        let s1 = sigma(1, 1).unwrap();
        let id = linalg::identity(2);
        for n in 1..=4 {
            for j in 1..=n {
                let mut expected = Mat::<c64>::identity(1, 1);
                for k in 1..=n {
                    expected = linalg::kron(&expected, if k == j { &s1 } else { &id });
                }
                assert_eq!(max_abs_diff(&sigma(j, n).unwrap(), &expected), 0.0);
                assert_eq!(max_abs(&(sigma(j, n).unwrap() * sigma(j, n).unwrap())), 0.0);
            }
        }
    }

    #[test]
    fn sigma_rejects_bad_index() {
        assert!(matches!(sigma(0, 2), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(sigma(3, 2), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn collective_lowering_on_two_atom_states() {
        let j = collective_lowering(2);
        assert!(apply(&j, &PureState::ground(2)).norm_l2() == 0.0);
        assert!(apply(&j, &PureState::singlet()).norm_l2() < 1e-15);
        let out = apply(&j, &PureState::both_excited());
        let t = PureState::triplet();
        for i in 0..4 {
            let want = t.amplitudes()[i] * std::f64::consts::SQRT_2;
            assert!((out[i] - want).norm() < 1e-15);
        }
    }

    #[test]
    fn hamiltonian_vanishes_without_couplings() {
        let p = SystemParams::new(3).with_rabi(0.0).with_chirality(1.0, 0.0);
        assert_eq!(max_abs(&hamiltonian(&p)), 0.0);
    }

    #[test]
    fn exchange_element_between_triplet_and_singlet() {
        let p = SystemParams::new(2).with_rabi(0.0).with_chirality(1.0, 0.6);
        let h_s = apply(&hamiltonian(&p), &PureState::singlet());
        let t = PureState::triplet();
        let elem: c64 = (0..4).map(|i| t.amplitudes()[i].conj() * h_s[i]).sum();
        assert!((elem - c64::new(0.0, 0.3)).norm() < 1e-15);
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        for n in 1..=4 {
            let p = SystemParams::new(n)
                .with_rabi(1.3)
                .with_detuning(-0.4)
                .with_chirality(1.0, 0.7);
            let h = hamiltonian(&p);
            assert!(max_abs_diff(&h, &dagger(&h)) < 1e-14);
            let hh = homodyne_hamiltonian(&p.with_homodyne_feedback(0.8, 1.1));
            assert!(max_abs_diff(&hh, &dagger(&hh)) < 1e-14);
        }
    }

    #[test]
    fn drive_operator_spectrum_is_integer_spaced() {
        for n in 1..=5 {
            let ev = linalg::hermitian_eigenvalues(&drive_operator(n)).unwrap();
            for w in ev.windows(2) {
                let gap = w[1] - w[0];
                assert!(gap.abs() < 1e-10 || (gap - gap.round()).abs() < 1e-10, "gap {gap}");
            }
            assert!((ev[0] + ev[ev.len() - 1]).abs() < 1e-10);
            assert!((ev[ev.len() - 1] - n as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn feedback_unitary_cases() {
        assert!(max_abs_diff(&feedback_unitary(0.0, 3), &linalg::identity(8)) < 1e-14);
        // N = 1, g = pi/2: exp(-i pi/2 sigma_x) = -i sigma_x
        let u = feedback_unitary(FRAC_PI_2, 1);
        let want = linalg::scaled(&drive_operator(1), c64::new(0.0, -1.0));
        assert!(max_abs_diff(&u, &want) < 1e-14);
        for (g, n) in [(0.3, 2), (1.7, 3), (PI, 4), (-2.2, 5)] {
            let u = feedback_unitary(g, n);
            let uu = &u * dagger(&u);
            assert!(max_abs_diff(&uu, &linalg::identity(1 << n)) < 1e-12);
        }
    }

    #[test]
    fn right_jump_reduces_to_j_without_feedback() {
        assert!(max_abs_diff(&right_jump_counting(0.0, 3), &collective_lowering(3)) < 1e-14);
        assert!(max_abs_diff(&right_jump_homodyne(0.0, 0.4, 3), &collective_lowering(3)) == 0.0);
    }

    #[test]
    fn parity_of_right_jump_at_half_pi() {
        for n in 1..=MAX_ATOMS {
            let jr = right_jump_counting(FRAC_PI_2, n);
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let rhs = linalg::scaled(&dagger(&jr), c64::new(sign, 0.0));
            assert!(max_abs_diff(&jr, &rhs) < 1e-12, "N = {n}");
        }
    }

    #[test]
    fn dimer_limits() {
        let d = dimer_state(0.0, 0.6).unwrap();
        assert_eq!(d, PureState::ground(2));
        let d = dimer_state(1.0, 0.0).unwrap();
        let s = PureState::singlet();
        for i in 0..4 {
            assert!((d.amplitudes()[i] - I * s.amplitudes()[i]).norm() < 1e-15);
        }
        let r = 0.37;
        let d = dimer_state(r, 2.0 * std::f64::consts::SQRT_2 * r).unwrap();
        assert!((d.inner(&PureState::ground(2)).norm_sqr() - 0.5).abs() < 1e-15);
        assert!((d.inner(&PureState::singlet()).norm_sqr() - 0.5).abs() < 1e-15);
        assert!(matches!(dimer_state(0.0, 0.0), Err(Error::DegenerateDimer)));
    }

    #[test]
    fn dimer_is_dark_and_an_eigenstate_on_resonance() {
        let p = SystemParams::new(2).with_rabi(0.9).with_chirality(1.0, 0.6);
        let d = dimer_state(p.rabi, p.delta_gamma()).unwrap();
        assert!(apply(&collective_lowering(2), &d).norm_l2() < 1e-15);
        assert!(apply(&hamiltonian(&p), &d).norm_l2() < 1e-14);
    }

    #[test]
    fn validation() {
        assert!(SystemParams::new(0).validate().is_err());
        assert!(SystemParams::new(7).validate().is_err());
        assert!(SystemParams::new(2).with_chirality(0.0, 0.0).validate().is_err());
        assert!(SystemParams::new(2).with_chirality(1.0, 1.2).validate().is_err());
        assert!(SystemParams::new(2).validate().is_ok());
    }
}
