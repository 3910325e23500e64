//! Independent checks for the closed-form formulas: central finite
//! differences of the cost, directional derivatives through the
//! Gramian-sensitivity Lyapunov equation, and a numerical derivative of the
//! quasi-characteristic function.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::analysis::{self, GramianSet};
use crate::error::{Error, Result};
use crate::matops::{self, Mat};
use crate::model::{self, build_ito, Model};
use crate::weyl::qcf;

/// Default finite-difference step, scaled per entry by `1 + |x|`.
pub const DEFAULT_FD_STEP: f64 = 1e-6;
/// Step used to differentiate the quasi-characteristic function.
pub const DEFAULT_MOMENT_STEP: f64 = 1e-5;
const MAX_SHRINKS: usize = 10;

/// Steady-state cost of a model, or the reason it cannot be evaluated.
pub fn cost_at(model: &Model, margin: f64) -> Result<f64> {
    let ss = model::assemble(model, margin)?;
    let g = analysis::gramians_with_margin(&ss, margin)?;
    Ok(analysis::cost(&ss, &g))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FdGradient {
    pub dz_dr: Mat,
    pub dz_dn1: Mat,
}

fn central_difference(
    base_step: f64,
    margin: f64,
    perturb: impl Fn(f64) -> Model,
) -> Result<f64> {
    let mut step = base_step;
    for _ in 0..=MAX_SHRINKS {
        let plus = cost_at(&perturb(step), margin);
        let minus = cost_at(&perturb(-step), margin);
        match (plus, minus) {
            (Ok(cp), Ok(cm)) => return Ok((cp - cm) / (2.0 * step)),
            (Err(Error::NotHurwitz { .. }), _) | (_, Err(Error::NotHurwitz { .. })) => {
                step *= 0.5;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Err(Error::NotHurwitzAfterShrink {
        shrinks: MAX_SHRINKS,
    })
}

/// Central differences of the cost over the symmetric basis of `r` (with
/// `(i, j)` and `(j, i)` moved together) and every entry of `N1`.
pub fn fd_cost_gradient(model: &Model, h: f64, margin: f64) -> Result<FdGradient> {
    let obs = model.observer();
    let r = &obs.energy;
    let n1 = &obs.plant_coupling;
    let nu = obs.nu();
    let p = obs.p();

    let mut dz_dr = Mat::zeros(nu, nu);
    for i in 0..nu {
        for j in 0..=i {
            let step = h * (1.0 + r[(i, j)].abs());
            let d = central_difference(step, margin, |t| {
                let mut rr = r.clone();
                rr[(i, j)] += t;
                if i != j {
                    rr[(j, i)] += t;
                }
                model.with_params_unchecked(rr, n1.clone())
            })?;
            // Along E_ij + E_ji the derivative is 2 G_ij.
            let gij = if i == j { d } else { 0.5 * d };
            dz_dr[(i, j)] = gij;
            dz_dr[(j, i)] = gij;
        }
    }

    let mut dz_dn1 = Mat::zeros(p, nu);
    for i in 0..p {
        for j in 0..nu {
            let step = h * (1.0 + n1[(i, j)].abs());
            dz_dn1[(i, j)] = central_difference(step, margin, |t| {
                let mut nn = n1.clone();
                nn[(i, j)] += t;
                model.with_params_unchecked(r.clone(), nn)
            })?;
        }
    }
    Ok(FdGradient { dz_dr, dz_dn1 })
}

/// Perturbation direction in the observer decision variables.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Direction {
    /// Symmetric `δr`.
    Energy(Mat),
    /// `δN1`.
    PlantCoupling(Mat),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SensitivitySolution {
    pub direction: Direction,
    /// Derivative of the controllability Gramian along the direction.
    pub dp: Mat,
    pub dcost: f64,
    /// Relative residual of the sensitivity ALE.
    pub residual: f64,
}

/// Solves `𝒜 d𝒫 + d𝒫 𝒜ᵀ + (d𝒜 𝒫 + 𝒫 d𝒜ᵀ + dℬ ℬᵀ + ℬ dℬᵀ) = 0` for the
/// given direction and returns `d𝒵 = ⟨𝒞ᵀ𝒞, d𝒫⟩`.
pub fn sensitivity_directional(
    model: &Model,
    direction: Direction,
    margin: f64,
) -> Result<SensitivitySolution> {
    let ss = model::assemble(model, margin)?;
    let g = analysis::gramians_with_margin(&ss, margin)?;
    sensitivity_with(model, &ss, &g, direction)
}

fn sensitivity_with(
    model: &Model,
    ss: &model::StateSpace,
    g: &GramianSet,
    direction: Direction,
) -> Result<SensitivitySolution> {
    let obs = model.observer();
    let nu = obs.nu();
    let n = ss.n();
    let m = obs.selector.m();
    let mu = obs.mu();
    let two_vt = obs.ccr.scale(2.0);
    let (da, db1) = match &direction {
        Direction::Energy(dr) => {
            if dr.shape() != (nu, nu) {
                return Err(Error::DimensionMismatch {
                    op: "sensitivity_directional",
                    detail: alloc::format!("dr is {:?}, expected {nu}x{nu}", dr.shape()),
                });
            }
            (&two_vt * dr, Mat::zeros(nu, m))
        }
        Direction::PlantCoupling(dn1) => {
            if dn1.shape() != obs.plant_coupling.shape() {
                return Err(Error::DimensionMismatch {
                    op: "sensitivity_directional",
                    detail: alloc::format!(
                        "dN1 is {:?}, expected {:?}",
                        dn1.shape(),
                        obs.plant_coupling.shape()
                    ),
                });
            }
            let pi = obs.selector.matrix();
            let j = build_ito(m)?;
            let pjp = &(&pi * &j) * &pi.transpose();
            let n1 = &obs.plant_coupling;
            let inner = &(&(&dn1.transpose() * &pjp) * n1) + &(&(&n1.transpose() * &pjp) * dn1);
            (&two_vt * &inner, &(&two_vt * &dn1.transpose()) * &pi)
        }
    };
    let d_sys_a = Mat::block2x2(
        &Mat::zeros(n, n),
        &Mat::zeros(n, nu),
        &(&db1 * &ss.plant_c),
        &da,
    );
    let d_sys_b = Mat::block2x2(
        &Mat::zeros(n, m),
        &Mat::zeros(n, mu),
        &db1,
        &Mat::zeros(nu, mu),
    );
    let dap = &d_sys_a * g.p();
    let dbb = &d_sys_b * &ss.sys_b.transpose();
    let forcing = &(&dap + &dap.transpose()) + &(&dbb + &dbb.transpose());
    let dp = matops::solve_ale_unchecked(&ss.sys_a, &forcing)?;
    let residual = matops::relative_lyap_residual(&ss.sys_a, &dp, &forcing);
    let ctc = &ss.sys_c.transpose() * &ss.sys_c;
    Ok(SensitivitySolution {
        direction,
        dcost: matops::dot(&ctc, &dp),
        dp,
        residual,
    })
}

/// Full gradient assembled from sensitivity solves along every basis
/// direction, in the same symmetric parameterisation as the closed form.
/// Also returns the worst sensitivity-ALE residual seen.
pub fn sensitivity_gradient(model: &Model, margin: f64) -> Result<(FdGradient, f64)> {
    let ss = model::assemble(model, margin)?;
    let g = analysis::gramians_with_margin(&ss, margin)?;
    let obs = model.observer();
    let nu = obs.nu();
    let p = obs.p();
    let mut worst = 0.0_f64;
    let mut dz_dr = Mat::zeros(nu, nu);
    for i in 0..nu {
        for j in 0..=i {
            let mut dir = Mat::zeros(nu, nu);
            dir[(i, j)] = 1.0;
            dir[(j, i)] = 1.0;
            let s = sensitivity_with(model, &ss, &g, Direction::Energy(dir))?;
            worst = worst.max(s.residual);
            let gij = if i == j { s.dcost } else { 0.5 * s.dcost };
            dz_dr[(i, j)] = gij;
            dz_dr[(j, i)] = gij;
        }
    }
    let mut dz_dn1 = Mat::zeros(p, nu);
    for i in 0..p {
        for j in 0..nu {
            let mut dir = Mat::zeros(p, nu);
            dir[(i, j)] = 1.0;
            let s = sensitivity_with(model, &ss, &g, Direction::PlantCoupling(dir))?;
            worst = worst.max(s.residual);
            dz_dn1[(i, j)] = s.dcost;
        }
    }
    Ok((FdGradient { dz_dr, dz_dn1 }, worst))
}

/// `E(𝒳 W_u) = −i ∂λ qcf(λ)|_{λ=[0;u]} − [0; ϑu] qcf([0;u])` with the
/// λ-gradient taken by central differences over all `n + ν` coordinates.
///
/// The relative truncation error of a single central difference is about
/// `h²‖𝒫λ‖²/6`, which exceeds 1e-6 once `‖𝒫•2 u‖` reaches a few hundred, so
/// the differences at `h` and `h/2` are combined by one Richardson step,
/// `(4 D(h/2) − D(h)) / 3`, leaving an `O(h⁴)` error.
pub fn moment_oracle(u: &[f64], g: &GramianSet, vartheta: &Mat, h: f64) -> Vec<Complex64> {
    let n = g.n();
    let dim = g.p().rows();
    let mut lambda: Vec<f64> = core::iter::repeat_n(0.0, n).chain(u.iter().copied()).collect();
    let base = qcf(&lambda, g.p());
    let vu = vartheta.matvec(u);
    (0..dim)
        .map(|k| {
            let mut central = |step: f64| {
                let x0 = lambda[k];
                lambda[k] = x0 + step;
                let fp = qcf(&lambda, g.p());
                lambda[k] = x0 - step;
                let fm = qcf(&lambda, g.p());
                lambda[k] = x0;
                (fp - fm) / (2.0 * step)
            };
            let coarse = central(h);
            let fine = central(0.5 * h);
            let grad = (4.0 * fine - coarse) / 3.0;
            let re = if k < n { 0.0 } else { -vu[k - n] * base };
            Complex64::new(re, -grad)
        })
        .collect()
}

/// Normwise relative difference `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &Mat, b: &Mat) -> f64 {
    let denom = a.frob_norm().max(b.frob_norm());
    if denom == 0.0 {
        0.0
    } else {
        (a - b).frob_norm() / denom
    }
}

/// Same metric for complex vectors.
pub fn rel_err_complex(a: &[Complex64], b: &[Complex64]) -> f64 {
    let norm = |v: &[Complex64]| libm::sqrt(v.iter().map(|z| z.norm_sqr()).sum());
    let diff: f64 = libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum());
    let denom = norm(a).max(norm(b));
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}
