//! Cyclic Jacobi eigensolver for small symmetric matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{PmeError, Result};

pub const MAX_DIM: usize = 64;
const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;
const OFF_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Ascending.
    pub values: DVector<f64>,
    /// Column `j` pairs with `values[j]`.
    pub vectors: DMatrix<f64>,
}

fn off_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

pub fn symmetric_eigen(s: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = s.nrows();
    if n != s.ncols() {
        return Err(PmeError::Input(format!("matrix is {}x{}, not square", n, s.ncols())));
    }
    if n > MAX_DIM {
        return Err(PmeError::Input(format!("dimension {n} exceeds {MAX_DIM}")));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(PmeError::Input("matrix has non-finite entries".into()));
    }
    let norm = s.norm();
    let asym = (s - s.transpose()).amax();
    if asym > SYMMETRY_TOL * norm.max(1.0) {
        return Err(PmeError::Input(format!("matrix is not symmetric (max |S - S'| = {asym:e})")));
    }

    let mut a = (s + s.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let target = OFF_TOL * norm;
    let mut converged = off_norm(&a) <= target;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
        converged = off_norm(&a) <= target;
    }
    if !converged {
        return Err(PmeError::Numerical(format!(
            "Jacobi did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).clone_owned();
        let mut best = 0;
        for r in 1..n {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(EigenDecomposition { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn identity() {
        let e = symmetric_eigen(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(e.values, DVector::from_element(4, 1.0));
        assert_eq!(e.vectors, DMatrix::identity(4, 4));
    }

    #[test]
    fn diagonal_is_sorted() {
        let e = symmetric_eigen(&DMatrix::from_diagonal(&DVector::from_vec(vec![3., 1., 2.]))).unwrap();
        assert_eq!(e.values.as_slice(), &[1., 2., 3.]);
        assert_eq!(e.vectors.column(0).as_slice(), &[0., 1., 0.]);
        assert_eq!(e.vectors.column(1).as_slice(), &[0., 0., 1.]);
        assert_eq!(e.vectors.column(2).as_slice(), &[1., 0., 0.]);
    }

    #[test]
    fn two_by_two() {
        let s = DMatrix::from_row_slice(2, 2, &[2., 1., 1., 2.]);
        let e = symmetric_eigen(&s).unwrap();
        // roots of l^2 - 4 l + 3
        assert_relative_eq!(e.values[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(e.values[1], 3.0, epsilon = 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // tie on |entry|: row 0 is positive
        assert_relative_eq!(e.vectors.column(0).into_owned(), DVector::from_vec(vec![h, -h]), epsilon = 1e-14);
        assert_relative_eq!(e.vectors.column(1).into_owned(), DVector::from_vec(vec![h, h]), epsilon = 1e-14);
    }

    #[test]
    fn rejects_asymmetric() {
        let s = DMatrix::from_row_slice(2, 2, &[1., 2., 0., 1.]);
        assert!(matches!(symmetric_eigen(&s), Err(PmeError::Input(_))));
    }

    #[test]
    fn rejects_large() {
        assert!(symmetric_eigen(&DMatrix::identity(65, 65)).is_err());
    }

    #[test]
    fn zero_matrix() {
        let e = symmetric_eigen(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(e.values, DVector::zeros(3));
    }

    proptest! {
        #[test]
        fn residual_and_orthonormality(n in 1usize..9, entries in prop::collection::vec(-100.0f64..100.0, 81)) {
            let a = DMatrix::from_fn(n, n, |i, j| entries[i * 9 + j]);
            let s = &a + a.transpose();
            let e = symmetric_eigen(&s).unwrap();
            let norm = s.norm();
            for j in 0..n {
                let v = e.vectors.column(j);
                let res = (&s * v - v * e.values[j]).norm();
                prop_assert!(res <= 1e-10 * norm.max(f64::MIN_POSITIVE));
            }
            prop_assert!((e.vectors.transpose() * &e.vectors - DMatrix::identity(n, n)).amax() <= 1e-10);
            for w in e.values.as_slice().windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            prop_assert!((e.values.sum() - s.trace()).abs() <= 1e-10 * norm.max(1.0));
        }
    }
}
