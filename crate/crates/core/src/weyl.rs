//! Gateaux derivatives of the cost along Weyl variations of the observer
//! energy operators, and the Gaussian moment identities behind them.
//!
//! For a Weyl frequency `u ∈ Rᵛ` the Hamiltonian variation `Re(α W_u)` and
//! coupling variation `Re(β W_u)` have derivatives
//!
//! ```text
//! dK = 4 uᵀ S(ϑℰ22) u · g(u) · Re α
//! dM = 4 Im(β)ᵀ Π(J b1ᵀ ℰ22 − (Cℰ21ᵀ + Bᵀ𝒬12 + b1ᵀ𝒬22)ϑ) u · g(u)
//! ```
//!
//! with `g(u) = exp(−uᵀ𝒫22u / 2)`. The second formula is only valid when
//! `S(ϑℰ22)` vanishes.

use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::analysis::{self, GradientReport, GramianSet};
use crate::error::{Error, Result};
use crate::matops::{self, Mat};
use crate::model::{ObserverSpec, StateSpace};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeylQuery {
    pub alpha: Complex64,
    pub beta: Vec<Complex64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct WeylDerivative {
    pub dk: f64,
    /// `None` when the first stationarity residual is too large for the
    /// M-direction formula to hold.
    pub dm: Option<f64>,
    pub gauss_factor: f64,
}

/// Quasi-characteristic function `exp(−λᵀ𝒫λ/2)` of the invariant state.
pub fn qcf(lambda: &[f64], p: &Mat) -> f64 {
    libm::exp(-0.5 * p.quad_form(lambda))
}

/// `exp(−uᵀ𝒫22u/2)`.
pub fn gauss_factor(u: &[f64], g: &GramianSet) -> f64 {
    libm::exp(-0.5 * g.p22().quad_form(u))
}

fn check_len(op: &'static str, u: &[f64], nu: usize) -> Result<()> {
    if u.len() == nu {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            op,
            detail: alloc::format!("u has {} entries, observer has {nu}", u.len()),
        })
    }
}

/// `E(𝒳 W_u) = g(u) (i 𝒫•2 u − [0; ϑu])`.
pub fn weyl_first_moment(u: &[f64], g: &GramianSet, vartheta: &Mat) -> Result<Vec<Complex64>> {
    let n = g.n();
    check_len("weyl_first_moment", u, g.nu())?;
    if vartheta.shape() != (g.nu(), g.nu()) {
        return Err(Error::DimensionMismatch {
            op: "weyl_first_moment",
            detail: alloc::format!("vartheta is {:?}", vartheta.shape()),
        });
    }
    let gf = gauss_factor(u, g);
    let im = g.p_col2().matvec(u);
    let vu = vartheta.matvec(u);
    Ok(im
        .iter()
        .enumerate()
        .map(|(k, &pim)| {
            let re = if k < n { 0.0 } else { -vu[k - n] };
            Complex64::new(re * gf, pim * gf)
        })
        .collect())
}

/// Derivative along the Hamiltonian variation `Re(α W_u)`.
pub fn weyl_deriv_k(q: &WeylQuery, g: &GramianSet, vartheta: &Mat) -> Result<f64> {
    check_len("weyl_deriv_k", &q.u, g.nu())?;
    let s = matops::sym(&(vartheta * &g.e22()));
    Ok(deriv_k_with(&s, q, gauss_factor(&q.u, g)))
}

fn deriv_k_with(stat1: &Mat, q: &WeylQuery, gf: f64) -> f64 {
    4.0 * stat1.quad_form(&q.u) * gf * q.alpha.re
}

fn deriv_m_with(stat2: &Mat, q: &WeylQuery, gf: f64) -> f64 {
    // Π(Jb1ᵀℰ22 − (…)ϑ) is exactly −stat2.
    let su = stat2.matvec(&q.u);
    let im_beta: f64 = q.beta.iter().zip(&su).map(|(b, s)| b.im * s).sum();
    -4.0 * im_beta * gf
}

/// Derivative along the coupling variation `Re(β W_u)`.
///
/// Fails with `Stat1Violated` unless `‖S(ϑℰ22)‖_F ≤ tol·(1 + |cost|)`.
pub fn weyl_deriv_m(
    q: &WeylQuery,
    g: &GramianSet,
    ss: &StateSpace,
    obs: &ObserverSpec,
    tol: f64,
) -> Result<f64> {
    check_len("weyl_deriv_m", &q.u, g.nu())?;
    if q.beta.len() != obs.p() {
        return Err(Error::DimensionMismatch {
            op: "weyl_deriv_m",
            detail: alloc::format!("beta has {} entries, p = {}", q.beta.len(), obs.p()),
        });
    }
    let report = analysis::gradient(ss, g, obs)?;
    ensure_stat1(&report, tol)?;
    Ok(deriv_m_with(&report.stat2_residual, q, gauss_factor(&q.u, g)))
}

fn ensure_stat1(report: &GradientReport, tol: f64) -> Result<()> {
    let residual = report.stat1_residual.frob_norm();
    let bound = tol * (1.0 + report.cost.abs());
    if residual <= bound {
        Ok(())
    } else {
        Err(Error::Stat1Violated { residual, bound })
    }
}

/// Both derivatives for one query; `dm` is `None` when stat1 fails at `tol`.
pub fn weyl_derivative(
    q: &WeylQuery,
    g: &GramianSet,
    ss: &StateSpace,
    obs: &ObserverSpec,
    tol: f64,
) -> Result<WeylDerivative> {
    check_len("weyl_derivative", &q.u, g.nu())?;
    let report = analysis::gradient(ss, g, obs)?;
    let gf = gauss_factor(&q.u, g);
    let dm = ensure_stat1(&report, tol)
        .ok()
        .map(|()| deriv_m_with(&report.stat2_residual, q, gf));
    Ok(WeylDerivative {
        dk: deriv_k_with(&report.stat1_residual, q, gf),
        dm,
        gauss_factor: gf,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ScanReport {
    pub samples: usize,
    pub radius: f64,
    pub seed: u64,
    pub cost: f64,
    pub max_abs_dk: f64,
    pub argmax_dk: Option<WeylQuery>,
    /// `None` when stat1 failed and no M-direction derivative was computed.
    pub max_abs_dm: Option<f64>,
    pub argmax_dm: Option<WeylQuery>,
    pub stat1_norm: f64,
    pub stat2_norm: f64,
}

impl ScanReport {
    /// `max|dK| + max|dM|`, counting an uncomputed `dM` as infinite.
    pub fn combined(&self) -> f64 {
        self.max_abs_dk + self.max_abs_dm.unwrap_or(f64::INFINITY)
    }
}

/// The three Hamiltonian amplitudes tried at every sample: `1`, `i`, `1 + i`.
pub const SCAN_ALPHAS: [Complex64; 3] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(1.0, 1.0),
];

fn uniform_in_ball(rng: &mut impl Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = libm::sqrt(dir.iter().map(|x| x * x).sum());
        if norm > 0.0 {
            let rad = radius * libm::pow(rng.random::<f64>(), 1.0 / dim as f64);
            return dir.into_iter().map(|x| x * rad / norm).collect();
        }
    }
}

/// Samples Weyl frequencies uniformly in a ball and records the largest
/// derivatives in both variation families.
pub fn weyl_scan(
    ss: &StateSpace,
    g: &GramianSet,
    obs: &ObserverSpec,
    samples: usize,
    radius: f64,
    seed: u64,
    tol: f64,
) -> Result<ScanReport> {
    let report = analysis::gradient(ss, g, obs)?;
    let dm_ok = ensure_stat1(&report, tol).is_ok();
    let nu = obs.nu();
    let p = obs.p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_dk = 0.0;
    let mut max_dm = 0.0;
    let mut arg_k = None;
    let mut arg_m = None;
    for _ in 0..samples {
        let u = uniform_in_ball(&mut rng, nu, radius);
        let beta: Vec<Complex64> = (0..p)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..core::f64::consts::TAU)))
            .collect();
        let gf = gauss_factor(&u, g);
        for alpha in SCAN_ALPHAS {
            let q = WeylQuery {
                alpha,
                beta: beta.clone(),
                u: u.clone(),
            };
            let dk = deriv_k_with(&report.stat1_residual, &q, gf).abs();
            if arg_k.is_none() || dk > max_dk {
                max_dk = dk;
                arg_k = Some(q);
            }
        }
        if dm_ok {
            let q = WeylQuery {
                alpha: SCAN_ALPHAS[0],
                beta,
                u,
            };
            let dm = deriv_m_with(&report.stat2_residual, &q, gf).abs();
            if arg_m.is_none() || dm > max_dm {
                max_dm = dm;
                arg_m = Some(q);
            }
        }
    }
    Ok(ScanReport {
        samples,
        radius,
        seed,
        cost: report.cost,
        max_abs_dk: max_dk,
        argmax_dk: arg_k,
        max_abs_dm: dm_ok.then_some(max_dm),
        argmax_dm: arg_m,
        stat1_norm: report.stat1_residual.frob_norm(),
        stat2_norm: report.stat2_residual.frob_norm(),
    })
}
