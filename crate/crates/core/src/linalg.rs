//! Small dense complex linear-algebra helpers on top of `faer`.

use faer::{c64, Mat, Side};

use crate::error::{Error, Result};

pub(crate) const ZERO: c64 = c64::new(0.0, 0.0);
pub(crate) const ONE: c64 = c64::new(1.0, 0.0);
pub(crate) const I: c64 = c64::new(0.0, 1.0);

pub fn identity(dim: usize) -> Mat<c64> {
    Mat::identity(dim, dim)
}

pub fn dagger(a: &Mat<c64>) -> Mat<c64> {
    a.adjoint().to_owned()
}

pub fn transpose(a: &Mat<c64>) -> Mat<c64> {
    a.transpose().to_owned()
}

pub fn conjugate(a: &Mat<c64>) -> Mat<c64> {
    a.conjugate().to_owned()
}

pub fn kron(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    a.kron(b)
}

pub fn scaled(a: &Mat<c64>, z: c64) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * z)
}

pub fn commutator(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    a * b - b * a
}

pub fn anticommutator(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    a * b + b * a
}

pub fn trace(a: &Mat<c64>) -> c64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

pub fn max_abs(a: &Mat<c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn hermitian_part(a: &Mat<c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(a: &Mat<c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let values = evd.S().column_vector().iter().map(|z| z.re).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn hermitian_eigenvalues(a: &Mat<c64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))
}

/// Applies a scalar function to a Hermitian matrix through its spectral decomposition.
pub fn hermitian_function(a: &Mat<c64>, f: impl Fn(f64) -> c64) -> Result<Mat<c64>> {
    let (values, vecs) = hermitian_eigen(a)?;
    let n = a.nrows();
    let weighted = Mat::from_fn(n, n, |i, k| vecs[(i, k)] * f(values[k]));
    Ok(&weighted * vecs.adjoint())
}

/// Matrix exponential of a general complex matrix by scaling and squaring of
/// a truncated Taylor series.
pub fn expm(a: &Mat<c64>) -> Mat<c64> {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    if norm1 > 0.25 {
        squarings = (norm1 / 0.25).log2().ceil() as u32;
    }
    let scale = 0.5f64.powi(squarings as i32);
    let a_s = scaled(a, c64::new(scale, 0.0));

    let mut result = identity(n);
    let mut term = identity(n);
    for k in 1..=18 {
        term = scaled(&(&term * &a_s), c64::new(1.0 / k as f64, 0.0));
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Trace distance `(1/2) Tr|a - b|` between two Hermitian matrices.
pub fn trace_distance(a: &Mat<c64>, b: &Mat<c64>) -> Result<f64> {
    let diff = hermitian_part(&(a - b));
    Ok(0.5 * hermitian_eigenvalues(&diff)?.iter().map(|x| x.abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_matches_rotation() {
        // exp(-i t sigma_x) = cos t - i sin t sigma_x
        let t = 0.7;
        let sx = Mat::from_fn(2, 2, |i, j| if i != j { ONE } else { ZERO });
        let u = expm(&scaled(&sx, c64::new(0.0, -t)));
        assert!((u[(0, 0)] - c64::new(t.cos(), 0.0)).norm() < 1e-14);
        assert!((u[(0, 1)] - c64::new(0.0, -t.sin())).norm() < 1e-14);
    }

    #[test]
    fn expm_of_large_nilpotent_plus_diagonal() {
        // [[a, 1], [0, a]] -> e^a [[1, 1], [0, 1]]
        let a = -3.5;
        let m = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) | (1, 1) => c64::new(a, 0.0),
            (0, 1) => ONE,
            _ => ZERO,
        });
        let e = expm(&scaled(&m, c64::new(4.0, 0.0)));
        let ea = (4.0 * a).exp();
        assert!((e[(0, 0)].re - ea).abs() < 1e-12 * ea.max(1e-300) + 1e-20);
        assert!((e[(0, 1)].re - 4.0 * ea).abs() < 1e-12);
    }

    #[test]
    fn hermitian_function_reproduces_expm() {
        let h = Mat::from_fn(3, 3, |i, j| {
            let re = (i + 2 * j) as f64 * 0.3;
            let im = if i == j { 0.0 } else if i < j { 0.4 } else { -0.4 };
            c64::new(re.min((j + 2 * i) as f64 * 0.3), im)
        });
        let h = hermitian_part(&h);
        let u1 = hermitian_function(&h, |x| c64::new(0.0, -x).exp()).unwrap();
        let u2 = expm(&scaled(&h, c64::new(0.0, -1.0)));
        assert!(max_abs_diff(&u1, &u2) < 1e-12);
    }

    #[test]
    fn trace_distance_of_orthogonal_projectors_is_one() {
        let p0 = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 0 { ONE } else { ZERO });
        let p1 = Mat::from_fn(2, 2, |i, j| if i == 1 && j == 1 { ONE } else { ZERO });
        assert!((trace_distance(&p0, &p1).unwrap() - 1.0).abs() < 1e-14);
        assert!(trace_distance(&p0, &p0).unwrap() < 1e-15);
    }
}
