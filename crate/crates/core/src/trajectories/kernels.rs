//! Allocation-free dense kernels for the small matrices used inside
//! trajectory loops.

use faer::{c64, Mat};

/// Row-major square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    pub d: usize,
    pub a: Vec<c64>,
}

impl Dense {
    pub fn zeros(d: usize) -> Self {
        Dense {
            d,
            a: vec![c64::new(0.0, 0.0); d * d],
        }
    }

    pub fn from_mat(m: &Mat<c64>) -> Self {
        let d = m.nrows();
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.a[i * d + j] = m[(i, j)];
            }
        }
        out
    }

    pub fn to_mat(&self) -> Mat<c64> {
        Mat::from_fn(self.d, self.d, |i, j| self.a[i * self.d + j])
    }

    pub fn trace(&self) -> c64 {
        (0..self.d).map(|i| self.a[i * self.d + i]).sum()
    }

    pub fn scale(&mut self, z: f64) {
        for v in &mut self.a {
            *v *= z;
        }
    }

    pub fn add_assign(&mut self, other: &Dense) {
        for (x, y) in self.a.iter_mut().zip(&other.a) {
            *x += *y;
        }
    }

    /// `Tr(self * rho)`.
    pub fn trace_product(&self, rho: &Dense) -> c64 {
        let d = self.d;
        let mut acc = c64::new(0.0, 0.0);
        for i in 0..d {
            for k in 0..d {
                acc += self.a[i * d + k] * rho.a[k * d + i];
            }
        }
        acc
    }
}

/// `out = a * x`
#[inline]
pub(crate) fn matvec(a: &Dense, x: &[c64], out: &mut [c64]) {
    let d = a.d;
    for (o, row) in out.iter_mut().zip(a.a.chunks_exact(d)) {
        *o = row.iter().zip(x).map(|(r, v)| r * v).sum();
    }
}

/// `out = a * b`
#[inline]
pub(crate) fn matmul(a: &Dense, b: &Dense, out: &mut Dense) {
    let d = a.d;
    for v in &mut out.a {
        *v = c64::new(0.0, 0.0);
    }
    for i in 0..d {
        for k in 0..d {
            let aik = a.a[i * d + k];
            if aik.re == 0.0 && aik.im == 0.0 {
                continue;
            }
            let brow = &b.a[k * d..(k + 1) * d];
            let orow = &mut out.a[i * d..(i + 1) * d];
            for j in 0..d {
                orow[j] += aik * brow[j];
            }
        }
    }
}

/// `out = a * b^dagger`
#[inline]
pub(crate) fn matmul_adj(a: &Dense, b: &Dense, out: &mut Dense) {
    let d = a.d;
    for i in 0..d {
        let arow = &a.a[i * d..(i + 1) * d];
        for j in 0..d {
            let brow = &b.a[j * d..(j + 1) * d];
            let mut acc = c64::new(0.0, 0.0);
            for k in 0..d {
                acc += arow[k] * brow[k].conj();
            }
            out.a[i * d + j] = acc;
        }
    }
}

/// `out = m * rho * m^dagger`, using `tmp` as scratch.
#[inline]
pub(crate) fn sandwich(m: &Dense, rho: &Dense, tmp: &mut Dense, out: &mut Dense) {
    matmul(m, rho, tmp);
    matmul_adj(tmp, m, out);
}

pub(crate) fn norm_sqr(x: &[c64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_match_faer() {
        let a = Mat::from_fn(3, 3, |i, j| c64::new(i as f64 - j as f64, (i * j) as f64 * 0.5));
        let b = Mat::from_fn(3, 3, |i, j| c64::new((i + j) as f64, 1.0 - i as f64));
        let (da, db) = (Dense::from_mat(&a), Dense::from_mat(&b));
        let mut out = Dense::zeros(3);
        matmul(&da, &db, &mut out);
        assert_eq!(out.to_mat(), &a * &b);
        matmul_adj(&da, &db, &mut out);
        assert_eq!(out.to_mat(), &a * b.adjoint());
        let x = [c64::new(1.0, 2.0), c64::new(-0.5, 0.0), c64::new(0.0, 1.0)];
        let mut y = [c64::new(0.0, 0.0); 3];
        matvec(&da, &x, &mut y);
        for i in 0..3 {
            let want: c64 = (0..3).map(|k| a[(i, k)] * x[k]).sum();
            assert_eq!(y[i], want);
        }
        let tp = da.trace_product(&db);
        let want: c64 = (0..3).map(|i| (&a * &b)[(i, i)]).sum();
        assert!((tp - want).norm() < 1e-12);
    }
}
