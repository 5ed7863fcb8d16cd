//! Dense Hermitian solves for the general LMMSE path.

use ndarray::Array2;

use crate::scalar::{Cx, Real};

/// Lower Cholesky factor `L` with `L L^H = A` of a Hermitian positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T: Real> {
    l: Array2<Cx<T>>,
}

impl<T: Real> Cholesky<T> {
    /// Returns `None` when `a` is not numerically positive definite.
    pub fn new(a: &Array2<Cx<T>>) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky needs a square matrix");
        let mut l = Array2::<Cx<T>>::zeros((n, n));
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d = d - l[(j, k)].norm_sqr();
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[(j, j)] = Cx::new(d, T::zero());
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / d;
            }
        }
        Some(Self { l })
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [Cx<T>]) {
        let n = self.l.nrows();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s = s - self.l[(i, k)] * b[k];
            }
            b[i] = s / self.l[(i, i)].re;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s = s - self.l[(k, i)].conj() * b[k];
            }
            b[i] = s / self.l[(i, i)].re;
        }
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &Array2<Cx<T>>) -> Array2<Cx<T>> {
        let mut out = b.clone();
        let mut col = vec![Cx::<T>::default(); b.nrows()];
        for mut c in out.columns_mut() {
            col.iter_mut().zip(c.iter()).for_each(|(d, &s)| *d = s);
            self.solve_in_place(&mut col);
            c.iter_mut().zip(&col).for_each(|(d, &s)| *d = s);
        }
        out
    }
}
