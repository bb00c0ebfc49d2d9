//! Dense complex linear algebra on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{MarqError, Result};
use crate::jet::Jet;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type JMat = DMatrix<Jet>;

/// Condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

pub fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(c)
}

pub fn lift(m: &CMat) -> JMat {
    m.map(Jet::constant)
}

pub fn values(m: &JMat) -> CMat {
    m.map(|j| j.value())
}

/// Max-abs entry norm; for jets every coefficient counts.
pub fn jnorm(m: &JMat) -> f64 {
    m.iter().fold(0.0, |acc, j| acc.max(j.norm()))
}

pub fn cnorm(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn jdiag(d: &[Jet]) -> JMat {
    let n = d.len();
    let mut m = JMat::from_element(n, n, Jet::real(0.0));
    for (i, x) in d.iter().enumerate() {
        m[(i, i)] = *x;
    }
    m
}

/// 2-norm condition number from singular values.
pub fn condition_number(a: &CMat) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    // the SVD iteration never terminates on NaN or infinite entries
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return f64::INFINITY;
    }
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

#[derive(Debug, Clone)]
pub struct LinearSolve {
    pub x: CMat,
    pub condition: f64,
    pub residual: f64,
}

/// Solves `a x = b` by partial-pivot LU, refusing ill-conditioned systems.
pub fn solve(a: &CMat, b: &CMat) -> Result<LinearSolve> {
    let condition = condition_number(a);
    if !(condition < MAX_CONDITION) {
        return Err(MarqError::SingularSystem { condition });
    }
    let lu = a.clone().lu();
    let x = lu.solve(b).ok_or(MarqError::SingularSystem { condition })?;
    let residual = cnorm(&(a * &x - b));
    Ok(LinearSolve { x, condition, residual })
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    Ok(solve(a, &CMat::identity(n, n))?.x)
}

/// Eigenvalues of a general complex matrix via the Schur form.
pub fn eigenvalues(a: &CMat) -> Result<Vec<C64>> {
    if a.nrows() == 1 {
        return Ok(vec![a[(0, 0)]]);
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| MarqError::RootFindingFailure("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Unit vector spanning the (numerical) kernel of `a`.
pub fn null_vector(a: &CMat) -> CVec {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &s)| if s < best.1 { (i, s) } else { best });
    CVec::from_iterator(n, vt.row(imin).iter().map(|z| z.conj()))
}

pub fn determinant(a: &CMat) -> C64 {
    a.clone().lu().determinant()
}

/// Classical adjoint: `a * adjugate(a) = det(a) I`.
pub fn adjugate(a: &CMat) -> CMat {
    let n = a.nrows();
    if n == 1 {
        return CMat::from_element(1, 1, c(1.0));
    }
    let mut adj = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let minor = a.clone().remove_row(i).remove_column(j);
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[(j, i)] = determinant(&minor) * sign;
        }
    }
    adj
}

/// `a^{-1} b` for jet matrices by Gaussian elimination, pivoting on values.
pub fn jet_solve(a: &JMat, b: &JMat) -> Result<JMat> {
    let n = a.nrows();
    let mut a = a.clone();
    let mut b = b.clone();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[(i, k)].value().norm().partial_cmp(&a[(j, k)].value().norm()).unwrap())
            .expect("non-empty");
        if a[(piv, k)].value().norm() == 0.0 {
            return Err(MarqError::SingularSystem { condition: f64::INFINITY });
        }
        a.swap_rows(k, piv);
        b.swap_rows(k, piv);
        let inv = a[(k, k)].recip();
        for i in k + 1..n {
            let f = a[(i, k)] * inv;
            for j in k..n {
                let t = a[(k, j)];
                a[(i, j)] -= f * t;
            }
            for j in 0..b.ncols() {
                let t = b[(k, j)];
                b[(i, j)] -= f * t;
            }
        }
    }
    for k in (0..n).rev() {
        let inv = a[(k, k)].recip();
        for j in 0..b.ncols() {
            let mut acc = b[(k, j)];
            for i in k + 1..n {
                acc -= a[(k, i)] * b[(i, j)];
            }
            b[(k, j)] = acc * inv;
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_matrix_is_singular() {
        let a = CMat::from_fn(2, 2, |i, j| if i == j { C64::new(f64::NAN, 0.0) } else { c(1.0) });
        assert_eq!(condition_number(&a), f64::INFINITY);
    }

    #[test]
    fn jet_solve_matches_complex_solve() {
        let a = CMat::from_row_slice(3, 3, &[c(0.0), c(2.0), c(1.0), c(1.0), c(1.0), c(0.0), c(3.0), c(0.5), c(4.0)]);
        let x0 = C64::new(0.4, 0.1);
        // a + x I as a jet in x, solved against the identity
        let aj = JMat::from_fn(3, 3, |i, j| if i == j { Jet::variable(a[(i, j)] + x0, 2) } else { Jet::constant(a[(i, j)]) });
        let inv = jet_solve(&aj, &JMat::identity(3, 3)).unwrap();
        let shifted = &a + CMat::identity(3, 3) * x0;
        let want = inverse(&shifted).unwrap();
        // d/dx (A + xI)^{-1} = -(A + xI)^{-2}
        let dwant = -&want * &want;
        for i in 0..3 {
            for j in 0..3 {
                assert!((inv[(i, j)].value() - want[(i, j)]).norm() < 1e-12);
                assert!((inv[(i, j)].derivative(1) - dwant[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn adjugate_identity() {
        let a = CMat::from_row_slice(
            3,
            3,
            &[c(2.0), C64::new(0.0, 1.0), c(0.5), c(-1.0), c(3.0), c(0.2), c(0.1), c(0.4), C64::new(1.0, -2.0)],
        );
        let lhs = &a * adjugate(&a);
        let det = determinant(&a);
        let rhs = CMat::identity(3, 3) * det;
        assert!(cnorm(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn eigenvalues_of_triangular() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0), c(5.0), c(0.0), c(3.0)]);
        let mut ev: Vec<f64> = eigenvalues(&a).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn singular_system_is_refused() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0), c(2.0), c(2.0), c(4.0)]);
        let b = CMat::from_element(2, 1, c(1.0));
        assert!(matches!(solve(&a, &b), Err(MarqError::SingularSystem { .. })));
    }

    #[test]
    fn null_vector_of_rank_deficient() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0), c(-1.0), c(-2.0), c(2.0)]);
        let v = null_vector(&a);
        assert!((&a * &v).norm() < 1e-12);
    }
}
