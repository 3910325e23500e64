//! Dense real-matrix kernel: Lyapunov solves, spectral abscissa and the
//! small algebraic helpers the rest of the crate is written in.

mod eigen;
mod mat;

pub use eigen::eigenvalues;
pub use mat::Mat;

use alloc::format;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result, Subsystem};

/// Stability margin used when a caller does not supply one.
pub const DEFAULT_HURWITZ_MARGIN: f64 = 1e-9;

/// Most refinement sweeps applied after the direct Kronecker solve; sweeps
/// stop earlier once the residual no longer halves.
const ALE_REFINEMENT_STEPS: usize = 8;

fn require_square(op: &'static str, m: &Mat) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            op,
            detail: format!("expected a square matrix, got {}x{}", m.rows(), m.cols()),
        })
    }
}

/// `(M + M^T) / 2`.
pub fn symmetrize(m: &Mat) -> Result<Mat> {
    require_square("symmetrize", m)?;
    Ok(sym(m))
}

/// Infallible symmetrizer for matrices already known to be square.
pub(crate) fn sym(m: &Mat) -> Mat {
    let n = m.rows();
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = m[(i, i)];
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Frobenius inner product `Tr(M^T N)`.
pub fn frob_inner(m: &Mat, n: &Mat) -> Result<f64> {
    if m.shape() != n.shape() {
        return Err(Error::DimensionMismatch {
            op: "frob_inner",
            detail: format!("{:?} vs {:?}", m.shape(), n.shape()),
        });
    }
    Ok(dot(m, n))
}

pub(crate) fn dot(m: &Mat, n: &Mat) -> f64 {
    m.as_slice().iter().zip(n.as_slice()).map(|(a, b)| a * b).sum()
}

/// Largest real part over the spectrum of `a`.
///
/// Uses [`eigenvalues`]; fails with `ConvergenceFailure` if the QR sweeps
/// do not deflate.
pub fn spectral_abscissa(a: &Mat) -> Result<f64> {
    require_square("spectral_abscissa", a)?;
    let d = a.rows();
    if d == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(eigenvalues(a)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Fails with `NotHurwitz` unless `spectral_abscissa(a) < -margin`.
pub fn ensure_hurwitz(a: &Mat, margin: f64, which: Subsystem) -> Result<f64> {
    let abscissa = spectral_abscissa(a)?;
    if abscissa < -margin {
        Ok(abscissa)
    } else {
        Err(Error::NotHurwitz {
            which,
            abscissa,
            margin,
        })
    }
}

/// Solves `A X + X A^T + V = 0` for Hurwitz `A` and symmetric `V`.
///
/// The equation is vectorised as `(A ⊗ I + I ⊗ A) vec(X) = -vec(V)` and
/// solved by dense LU with a couple of residual-correction sweeps. The
/// returned `X` is exactly symmetric.
pub fn solve_ale(a: &Mat, v: &Mat) -> Result<Mat> {
    solve_ale_with_margin(a, v, DEFAULT_HURWITZ_MARGIN)
}

pub fn solve_ale_with_margin(a: &Mat, v: &Mat, margin: f64) -> Result<Mat> {
    require_square("solve_ale", a)?;
    require_square("solve_ale", v)?;
    if a.rows() != v.rows() {
        return Err(Error::DimensionMismatch {
            op: "solve_ale",
            detail: format!("A is {}x{} but V is {}x{}", a.rows(), a.rows(), v.rows(), v.rows()),
        });
    }
    ensure_hurwitz(a, margin, Subsystem::Matrix)?;
    solve_ale_unchecked(a, v)
}

/// Lyapunov solve without the stability pre-check; the caller has already
/// established that `a` is Hurwitz.
pub(crate) fn solve_ale_unchecked(a: &Mat, v: &Mat) -> Result<Mat> {
    let d = a.rows();
    if d == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let dd = d * d;
    // Row-major vec: vec(A X) = (A ⊗ I) vec(X), vec(X A^T) = (I ⊗ A) vec(X).
    let mut k = DMatrix::<f64>::zeros(dd, dd);
    for i in 0..d {
        for j in 0..d {
            let row = i * d + j;
            for l in 0..d {
                k[(row, l * d + j)] += a[(i, l)];
                k[(row, i * d + l)] += a[(j, l)];
            }
        }
    }
    let lu = k.lu();
    let rhs = DVector::from_iterator(dd, v.as_slice().iter().map(|x| -x));
    let mut x = lu.solve(&rhs).ok_or(Error::SingularSystem)?;
    if x.iter().any(|t| !t.is_finite()) {
        return Err(Error::SingularSystem);
    }
    // Iterates are symmetrised before each residual: `lyap_residual` forms
    // `XAᵀ` as `(AX)ᵀ`, which is only valid for symmetric `X`.
    let mut best = sym(&Mat::from_fn(d, d, |i, j| x[i * d + j]));
    let mut best_res = f64::INFINITY;
    for _ in 0..=ALE_REFINEMENT_STEPS {
        let xm = sym(&Mat::from_fn(d, d, |i, j| x[i * d + j]));
        let r = lyap_residual(a, &xm, v);
        let res = r.frob_norm();
        if res.is_nan() || res >= 0.5 * best_res {
            if res < best_res {
                best = xm;
            }
            break;
        }
        best_res = res;
        best = xm;
        if res == 0.0 {
            break;
        }
        let corr = lu
            .solve(&DVector::from_iterator(dd, r.as_slice().iter().map(|t| -t)))
            .ok_or(Error::SingularSystem)?;
        x = DVector::from_column_slice(best.as_slice()) + corr;
    }
    Ok(best)
}

/// `A X + X A^T + V`.
pub fn lyap_residual(a: &Mat, x: &Mat, v: &Mat) -> Mat {
    let ax = a * x;
    &(&ax + &ax.transpose()) + v
}

/// Relative residual `‖AX + XA^T + V‖_F / (1 + ‖V‖_F)`.
pub fn relative_lyap_residual(a: &Mat, x: &Mat, v: &Mat) -> f64 {
    lyap_residual(a, x, v).frob_norm() / (1.0 + v.frob_norm())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &Mat) -> Result<alloc::vec::Vec<f64>> {
    require_square("symmetric_eigenvalues", m)?;
    let mut ev: alloc::vec::Vec<f64> = m.to_na().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Spectral norm via the largest eigenvalue of `M^T M`.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.rows() == 0 || m.cols() == 0 {
        return 0.0;
    }
    let g = &m.transpose() * m;
    let top = g
        .to_na()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(0.0, f64::max);
    libm::sqrt(top)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn m(rows: &[&[f64]]) -> Mat {
        Mat::from_rows(rows, 0).unwrap()
    }

    #[test]
    fn ale_scalar() {
        let x = solve_ale(&m(&[&[-1.0]]), &m(&[&[2.0]])).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ale_diagonal() {
        let x = solve_ale(&(-&Mat::identity(2)), &Mat::from_diag(&[2.0, 4.0])).unwrap();
        assert!((&x - &Mat::from_diag(&[1.0, 2.0])).max_abs() < 1e-15);
    }

    #[test]
    fn ale_companion_hand_solution() {
        // Equations: 2x12 = 0; x22 - 3x12 - 2x11 = 0; -4x12 - 6x22 + 1 = 0.
        let a = m(&[&[0.0, 1.0], &[-2.0, -3.0]]);
        let v = m(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let x = solve_ale(&a, &v).unwrap();
        let want = m(&[&[1.0 / 12.0, 0.0], &[0.0, 1.0 / 6.0]]);
        assert!((&x - &want).max_abs() < 1e-14, "{x:?}");
        assert_eq!(x, x.transpose());
    }

    #[test]
    fn ale_rejects_unstable_and_bad_shapes() {
        let a = m(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert!(matches!(
            solve_ale(&a, &Mat::identity(2)),
            Err(Error::NotHurwitz { .. })
        ));
        assert!(matches!(
            solve_ale(&(-&Mat::identity(2)), &Mat::identity(3)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            solve_ale(&Mat::zeros(2, 3), &Mat::identity(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn abscissa_examples() {
        assert!((spectral_abscissa(&(-&Mat::identity(3))).unwrap() + 1.0).abs() < 1e-12);
        assert!(spectral_abscissa(&m(&[&[0.0, 1.0], &[-1.0, 0.0]])).unwrap().abs() < 1e-12);
        let a = m(&[&[-2.0, 2.0], &[-2.0, -2.0]]);
        assert!((spectral_abscissa(&a).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn symmetrize_examples() {
        let s = symmetrize(&m(&[&[0.0, 2.0], &[0.0, 0.0]])).unwrap();
        assert_eq!(s, m(&[&[0.0, 1.0], &[1.0, 0.0]]));
        let sy = m(&[&[1.0, 3.0], &[3.0, -2.0]]);
        assert_eq!(symmetrize(&sy).unwrap(), sy);
        let an = m(&[&[0.0, 3.0], &[-3.0, 0.0]]);
        assert_eq!(symmetrize(&an).unwrap(), Mat::zeros(2, 2));
        assert!(symmetrize(&Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn frob_inner_examples() {
        let i2 = Mat::identity(2);
        assert_eq!(frob_inner(&i2, &i2).unwrap(), 2.0);
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(frob_inner(&a, &Mat::zeros(2, 2)).unwrap(), 0.0);
        assert_eq!(frob_inner(&a, &i2).unwrap(), 5.0);
        assert!(frob_inner(&a, &Mat::zeros(2, 1)).is_err());
    }

    #[test]
    fn spectral_norm_of_diag() {
        let d = Mat::from_diag(&[1.0, -3.0, 2.0]);
        assert!((spectral_norm(&d) - 3.0).abs() < 1e-12);
        assert_eq!(symmetric_eigenvalues(&d).unwrap(), vec![-3.0, 1.0, 2.0]);
    }
}
