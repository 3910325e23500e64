//! Eigenvalues of a general real matrix: power-of-two balancing, Householder
//! reduction to upper Hessenberg form, then Francis double-shift QR sweeps
//! with deflation on negligible subdiagonals and an ad-hoc exceptional shift
//! every ten sweeps without progress.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::Mat;
use crate::error::{Error, Result};

/// Sweeps allowed per eigenvalue before giving up.
const SWEEPS_PER_EIGENVALUE: usize = 60;
const EXCEPTIONAL_EVERY: usize = 10;

/// Row-major square work array.
struct Work {
    n: usize,
    a: Vec<f64>,
}

impl Work {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }
}

/// Scales rows and columns by powers of two until their off-diagonal norms
/// are comparable. A diagonal similarity, exact in floating point.
fn balance(w: &mut Work) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let n = w.n;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let (mut r, mut c) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    c += w.at(j, i).abs();
                    r += w.at(i, j).abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut g = r / RADIX;
            let mut f = 1.0;
            let s = c + r;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    w.set(i, j, w.at(i, j) * inv);
                }
                for j in 0..n {
                    w.set(j, i, w.at(j, i) * f);
                }
            }
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Eigenvalues of an upper Hessenberg matrix, destroying it.
fn hessenberg_qr(w: &mut Work) -> Result<Vec<Complex64>> {
    let n = w.n;
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += w.at(i, j).abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let nu = nn as usize;
        let mut its = 0;
        loop {
            // Smallest l such that the active block starts at l.
            let mut l = nu;
            while l >= 1 {
                let mut s = w.at(l - 1, l - 1).abs() + w.at(l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if w.at(l, l - 1).abs() + s == s {
                    w.set(l, l - 1, 0.0);
                    break;
                }
                l -= 1;
            }
            let mut x = w.at(nu, nu);
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = w.at(nu - 1, nu - 1);
            let mut ww = w.at(nu, nu - 1) * w.at(nu - 1, nu);
            if l == nu - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + ww;
                let mut z = libm::sqrt(q.abs());
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[nu - 1] = x + z;
                    wr[nu] = if z != 0.0 { x - ww / z } else { x + z };
                    wi[nu - 1] = 0.0;
                    wi[nu] = 0.0;
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if its == SWEEPS_PER_EIGENVALUE {
                return Err(Error::ConvergenceFailure);
            }
            if its > 0 && its % EXCEPTIONAL_EVERY == 0 {
                t += x;
                for i in 0..=nu {
                    w.set(i, i, w.at(i, i) - x);
                }
                let s = w.at(nu, nu - 1).abs() + w.at(nu - 1, nu - 2).abs();
                x = 0.75 * s;
                y = x;
                ww = -0.4375 * s * s;
            }
            its += 1;

            // Look for two consecutive small subdiagonal elements.
            let mut m = nu - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = w.at(m, m);
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - ww) / w.at(m + 1, m) + w.at(m, m + 1);
                q = w.at(m + 1, m + 1) - z - rr - ss;
                r = w.at(m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = w.at(m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (w.at(m - 1, m - 1).abs() + z.abs() + w.at(m + 1, m + 1).abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                w.set(i, i - 2, 0.0);
                if i != m + 2 {
                    w.set(i, i - 3, 0.0);
                }
            }

            // Double-shift QR step on rows l..=nu and columns m..=nu.
            let mut k = m;
            while k < nu {
                let mut xk = 0.0;
                if k != m {
                    p = w.at(k, k - 1);
                    q = w.at(k + 1, k - 1);
                    r = if k != nu - 1 { w.at(k + 2, k - 1) } else { 0.0 };
                    xk = p.abs() + q.abs() + r.abs();
                    if xk != 0.0 {
                        p /= xk;
                        q /= xk;
                        r /= xk;
                    }
                }
                let s = sign(libm::sqrt(p * p + q * q + r * r), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            w.set(k, k - 1, -w.at(k, k - 1));
                        }
                    } else {
                        w.set(k, k - 1, -s * xk);
                    }
                    p += s;
                    let xs = p / s;
                    let ys = q / s;
                    let zs = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pj = w.at(k, j) + q * w.at(k + 1, j);
                        if k != nu - 1 {
                            pj += r * w.at(k + 2, j);
                            w.set(k + 2, j, w.at(k + 2, j) - pj * zs);
                        }
                        w.set(k + 1, j, w.at(k + 1, j) - pj * ys);
                        w.set(k, j, w.at(k, j) - pj * xs);
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for i in l..=mmin {
                        let mut pi = xs * w.at(i, k) + ys * w.at(i, k + 1);
                        if k != nu - 1 {
                            pi += zs * w.at(i, k + 2);
                            w.set(i, k + 2, w.at(i, k + 2) - pi * r);
                        }
                        w.set(i, k + 1, w.at(i, k + 1) - pi * q);
                        w.set(i, k, w.at(i, k) - pi);
                    }
                }
                k += 1;
            }
        }
    }
    Ok(wr.into_iter().zip(wi).map(|(re, im)| Complex64::new(re, im)).collect())
}

/// All eigenvalues of a square matrix, in no particular order.
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex64>> {
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut w = Work {
        n,
        a: a.as_slice().to_vec(),
    };
    balance(&mut w);
    let h = nalgebra::DMatrix::from_row_slice(n, n, &w.a).hessenberg().h();
    for i in 0..n {
        for j in 0..n {
            w.set(i, j, if i > j + 1 { 0.0 } else { h[(i, j)] });
        }
    }
    hessenberg_qr(&mut w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn triangular_and_rotation() {
        let a = Mat::from_rows(&[[1.0, 5.0, -2.0], [0.0, -3.0, 4.0], [0.0, 0.0, 2.0]], 0).unwrap();
        let ev = sorted(eigenvalues(&a).unwrap());
        for (z, want) in ev.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((z.re - want).abs() < 1e-13 && z.im.abs() < 1e-13, "{z}");
        }
        let rot = Mat::from_rows(&[[-2.0, 2.0], [-2.0, -2.0]], 0).unwrap();
        let ev = sorted(eigenvalues(&rot).unwrap());
        assert!((ev[0] - Complex64::new(-2.0, -2.0)).norm() < 1e-13);
        assert!((ev[1] - Complex64::new(-2.0, 2.0)).norm() < 1e-13);
    }

    #[test]
    fn companion_roots() {
        // x⁴ − 10x³ + 35x² − 50x + 24 = (x−1)(x−2)(x−3)(x−4).
        let a = Mat::from_rows(
            &[
                [10.0, -35.0, 50.0, -24.0],
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
            ],
            0,
        )
        .unwrap();
        let ev = sorted(eigenvalues(&a).unwrap());
        for (z, want) in ev.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((z.re - want).abs() < 1e-10 && z.im.abs() < 1e-10, "{z}");
        }
    }

    #[test]
    fn cyclic_permutation_needs_exceptional_shift() {
        // Unshifted and standard-shifted QR stall on the cyclic shift; its
        // eigenvalues are the fourth roots of unity.
        let a = Mat::from_rows(
            &[
                [0.0, 0.0, 0.0, 1.0],
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
            ],
            0,
        )
        .unwrap();
        let ev = eigenvalues(&a).unwrap();
        for want in [
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
        ] {
            assert!(ev.iter().any(|z| (z - want).norm() < 1e-12), "{ev:?}");
        }
    }

    #[test]
    fn hard_case_preserves_trace_and_determinant() {
        // A plant candidate on which a Francis iteration without exceptional
        // shifts cycles indefinitely.
        #[rustfmt::skip]
        let data = vec![
                1.8766326128152864, -7.6843444447882225, -1.693506672454644, -0.49905050476714025, -4.488325345864001, -0.29440108723533687,
                -2.0266870539812034, 4.253925716160362, 0.9692043833006021, 1.512724347629527, 0.9137805124588184, 0.115292362273132,
                0.22340254797775916, -1.5588939305353604, -2.3588552694728437, -2.795196678767823, 0.6039899449582102, -3.2172750596287027,
                -1.2118798292080124, -0.6191561279516633, 0.08969579608835077, 5.220989599643247, -0.9397373078644843, 0.7300085605334824,
                2.180879136545649, -1.3036341650769094, 0.09288440195978809, -9.234527600023085, 1.418167597299795, -2.1453343982454527,
                -1.4321994727131822, 2.788076582285668, -0.34347462651227556, -1.506410968828563, 4.051624090982823, -4.026275770958852,
        ];
        let a = Mat::new(6, 6, data).unwrap();
        let ev = eigenvalues(&a).unwrap();
        let tr: Complex64 = ev.iter().sum();
        assert!((tr.re - a.trace()).abs() < 1e-10 && tr.im.abs() < 1e-10);
        let det: Complex64 = ev.iter().product();
        let lu_det = a.to_na().determinant();
        assert!((det.re - lu_det).abs() < 1e-9 * lu_det.abs().max(1.0), "{det} vs {lu_det}");
    }
}
