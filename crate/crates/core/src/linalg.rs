//! Dense linear-algebra primitives for the state-space layer.
//!
//! State dimensions here are tiny (a handful of derivatives per site), so
//! everything is plain dense algebra on `nalgebra::DMatrix`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative diagonal jitter applied once when a symmetric factorization fails.
pub const JITTER: f64 = 1e-8;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which the unscaled degree-13 approximant is accurate to unit roundoff.
const THETA13: f64 = 5.371920351148152;

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::InvalidMatrix(format!(
            "{what} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix(format!("{what} has non-finite entries")));
    }
    Ok(())
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Computes `exp(F * dt)` by scaling and squaring with a degree-13 Padé approximant.
pub fn matrix_exponential(f: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    check_finite(f, "drift matrix")?;
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::InvalidTimeStep(dt));
    }
    let n = f.nrows();
    let a = f * dt;
    let nrm = norm1(&a);
    if nrm == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a / 2f64.powi(s);

    let b = &PADE13;
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::SingularMatrix("Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Solves `F X + X Fᵀ + Q = 0` for the steady-state covariance of a Hurwitz drift.
///
/// Uses the vectorized Kronecker system `(I ⊗ F + F ⊗ I) vec(X) = -vec(Q)`.
pub fn solve_lyapunov(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_finite(f, "drift matrix")?;
    check_finite(q, "diffusion matrix")?;
    let n = f.nrows();
    if q.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "Lyapunov dimensions differ: F is {n}x{n}, Q is {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    let max_real_part = f
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_real_part >= 0.0 {
        return Err(Error::NotHurwitz { max_real_part });
    }

    let ident = DMatrix::<f64>::identity(n, n);
    let big = ident.kronecker(f) + f.kronecker(&ident);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let vec_x = big.lu().solve(&rhs).ok_or(Error::NotHurwitz { max_real_part })?;
    let x = symmetrize(&DMatrix::from_column_slice(n, n, vec_x.as_slice()));

    let residual = (f * &x + &x * f.transpose() + q).norm();
    if residual > 1e-10 * (q.norm() + 1.0) {
        return Err(Error::NotHurwitz { max_real_part });
    }
    Ok(x)
}

/// Result of a symmetric solve, flagging whether jitter was needed.
#[derive(Debug, Clone)]
pub struct PsdSolve {
    pub x: DMatrix<f64>,
    pub jittered: bool,
}

/// Solves `M X = B` for symmetric `M` via Cholesky.
///
/// On factorization failure, retries once with `JITTER * tr(M) / dim` added to the diagonal.
pub fn psd_solve(m: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<PsdSolve> {
    let chol = psd_cholesky(m)?;
    Ok(PsdSolve {
        x: chol.factor.solve(b),
        jittered: chol.jittered,
    })
}

/// Cholesky factor with the same single-retry jitter policy as [`psd_solve`].
pub struct JitteredCholesky {
    pub factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    pub jittered: bool,
}

impl JitteredCholesky {
    pub fn log_det(&self) -> f64 {
        2.0 * self.factor.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

pub fn psd_cholesky(m: &DMatrix<f64>) -> Result<JitteredCholesky> {
    if !m.is_square() {
        return Err(Error::InvalidMatrix(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite entries in symmetric solve".into()));
    }
    if let Some(factor) = m.clone().cholesky() {
        return Ok(JitteredCholesky {
            factor,
            jittered: false,
        });
    }
    let n = m.nrows();
    let delta = JITTER * m.trace() / n as f64;
    if delta > 0.0 {
        let mut jm = m.clone();
        for i in 0..n {
            jm[(i, i)] += delta;
        }
        if let Some(factor) = jm.cholesky() {
            return Ok(JitteredCholesky {
                factor,
                jittered: true,
            });
        }
    }
    Err(Error::SingularMatrix(format!(
        "Cholesky failed on {n}x{n} matrix after jitter"
    )))
}

/// Returns `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetrizes `m` and zeroes eigenvalues in `[-tol, 0)`; anything more negative is an error.
pub fn psd_clamp(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let sym = symmetrize(m);
    let trace = sym.trace();
    let eig = sym.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig >= 0.0 {
        return Ok(sym);
    }
    if min_eig < -tol {
        return Err(Error::NotPsd { min_eig, trace });
    }
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    Ok(symmetrize(&rebuilt))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigen().eigenvalues.min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn taylor_exp(f: &DMatrix<f64>, dt: f64, terms: usize) -> DMatrix<f64> {
        let n = f.nrows();
        let a = f * dt;
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..terms {
            term = &term * &a / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let z = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(matrix_exponential(&z, 1.0).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn exp_scalar_matches() {
        let f = DMatrix::from_element(1, 1, -0.5);
        let e = matrix_exponential(&f, 1.0).unwrap();
        assert_relative_eq!(e[(0, 0)], (-0.5f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(e[(0, 0)], 0.60653, epsilon = 1e-5);
    }

    #[test]
    fn exp_matern32_matches_taylor_series() {
        let lambda = 1.0;
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -lambda * lambda, -2.0 * lambda]);
        let e = matrix_exponential(&f, 0.3).unwrap();
        let t = taylor_exp(&f, 0.3, 30);
        assert!((e - t).norm() < 1e-12);
    }

    #[test]
    fn exp_large_norm_uses_squaring() {
        // Scalar exponential far outside the Padé radius.
        let f = DMatrix::from_element(1, 1, -3.0);
        let e = matrix_exponential(&f, 10.0).unwrap();
        assert_relative_eq!(e[(0, 0)], (-30f64).exp(), max_relative = 1e-12);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let e = matrix_exponential(&rot, 20.0).unwrap();
        assert_relative_eq!(e[(0, 0)], 20f64.cos(), epsilon = 1e-12);
        assert_relative_eq!(e[(1, 0)], 20f64.sin(), epsilon = 1e-12);
    }

    #[test]
    fn exp_rejects_non_finite() {
        let f = DMatrix::from_element(1, 1, f64::NAN);
        assert!(matches!(matrix_exponential(&f, 1.0), Err(Error::InvalidMatrix(_))));
        let f = DMatrix::from_element(1, 1, -1.0);
        assert_eq!(matrix_exponential(&f, 0.0).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn lyapunov_scalar_exponential() {
        let (ell, s2) = (2.0, 1.7);
        let f = DMatrix::from_element(1, 1, -1.0 / ell);
        let q = DMatrix::from_element(1, 1, 2.0 * s2 / ell);
        let x = solve_lyapunov(&f, &q).unwrap();
        assert_relative_eq!(x[(0, 0)], s2, max_relative = 1e-12);
    }

    #[test]
    fn lyapunov_matern32() {
        let (lambda, s2): (f64, f64) = (1.3, 0.8);
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -lambda * lambda, -2.0 * lambda]);
        let mut q = DMatrix::zeros(2, 2);
        q[(1, 1)] = 4.0 * lambda.powi(3) * s2;
        let x = solve_lyapunov(&f, &q).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[s2, 0.0, 0.0, lambda * lambda * s2]);
        // The closed form is verified by its own residual first.
        assert!((&f * &expected + &expected * f.transpose() + &q).norm() < 1e-12);
        assert!((x - expected).norm() < 1e-10);
    }

    #[test]
    fn lyapunov_negative_identity() {
        let f = -DMatrix::<f64>::identity(2, 2);
        let q = DMatrix::<f64>::identity(2, 2);
        let x = solve_lyapunov(&f, &q).unwrap();
        assert!((x - DMatrix::<f64>::identity(2, 2) * 0.5).norm() < 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let f = DMatrix::<f64>::zeros(1, 1);
        let q = DMatrix::<f64>::identity(1, 1);
        assert!(matches!(solve_lyapunov(&f, &q), Err(Error::NotHurwitz { .. })));
        let f = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            solve_lyapunov(&f, &DMatrix::identity(2, 2)),
            Err(Error::NotHurwitz { .. })
        ));
    }

    #[test]
    fn psd_solve_identity_and_diagonal() {
        let b = DMatrix::from_column_slice(2, 1, &[3.0, -1.0]);
        let r = psd_solve(&DMatrix::identity(2, 2), &b).unwrap();
        assert_eq!(r.x, b);
        assert!(!r.jittered);
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let r = psd_solve(&m, &DMatrix::from_column_slice(2, 1, &[2.0, 4.0])).unwrap();
        assert_relative_eq!(r.x[(0, 0)], 1.0);
        assert_relative_eq!(r.x[(1, 0)], 1.0);
    }

    #[test]
    fn psd_solve_jitters_singular_psd() {
        let v = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let m = &v * v.transpose();
        let r = psd_solve(&m, &v).unwrap();
        assert!(r.jittered);
        assert!(matches!(
            psd_solve(&-DMatrix::<f64>::identity(2, 2), &v),
            Err(Error::SingularMatrix(_))
        ));
    }

    #[test]
    fn symmetrize_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(symmetrize(&m), DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]));
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(symmetrize(&s), s);
    }

    #[test]
    fn clamp_repairs_small_negatives_only() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1e-12]));
        let c = psd_clamp(&m, 1e-8).unwrap();
        assert!(min_eigenvalue(&c) >= 0.0);
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1e-3]));
        assert!(matches!(psd_clamp(&bad, 1e-8), Err(Error::NotPsd { .. })));
    }
}
