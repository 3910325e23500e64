//! Gramians, steady-state cost, closed-form gradients and the linear-class
//! stationarity residuals.
//!
//! With `𝒫`, `𝒬` the controllability and observability Gramians of the
//! composite system and `ℰ = 𝒬𝒫`, the two residuals are
//!
//! ```text
//! stat1 = S(ϑ ℰ22)
//! stat2 = Π(C ℰ21ᵀ + Bᵀ𝒬12 + b1ᵀ𝒬22)ϑ − ΠJ b1ᵀ ℰ22
//! ```
//!
//! and the observer is stationary among linear observers iff both vanish.

use crate::error::{Error, Result};
use crate::matops::{self, Mat};
use crate::model::{build_ito, ObserverSpec, StateSpace};

/// Gramians and Hankelian of the composite system, partitioned by `(n, ν)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GramianSet {
    n: usize,
    p: Mat,
    q: Mat,
    e: Mat,
}

macro_rules! blocks {
    ($field:ident: $($name:ident => ($bi:literal, $bj:literal)),* $(,)?) => {
        $(
            pub fn $name(&self) -> Mat {
                self.block(&self.$field, $bi, $bj)
            }
        )*
    };
}

impl GramianSet {
    pub fn from_parts(n: usize, p: Mat, q: Mat) -> Self {
        let e = &q * &p;
        Self { n, p, q, e }
    }

    /// Controllability Gramian `𝒫`.
    pub fn p(&self) -> &Mat {
        &self.p
    }

    /// Observability Gramian `𝒬`.
    pub fn q(&self) -> &Mat {
        &self.q
    }

    /// Hankelian `ℰ = 𝒬𝒫`.
    pub fn e(&self) -> &Mat {
        &self.e
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nu(&self) -> usize {
        self.p.rows() - self.n
    }

    fn block(&self, m: &Mat, bi: usize, bj: usize) -> Mat {
        let (n, nu) = (self.n, self.nu());
        let (r0, rows) = if bi == 1 { (0, n) } else { (n, nu) };
        let (c0, cols) = if bj == 1 { (0, n) } else { (n, nu) };
        m.block(r0, c0, rows, cols)
    }

    blocks!(p: p11 => (1, 1), p12 => (1, 2), p22 => (2, 2));
    blocks!(q: q11 => (1, 1), q12 => (1, 2), q22 => (2, 2));
    blocks!(e: e11 => (1, 1), e12 => (1, 2), e21 => (2, 1), e22 => (2, 2));

    /// Second block column `𝒫•2`, (n+ν)×ν.
    pub fn p_col2(&self) -> Mat {
        self.p.block(0, self.n, self.p.rows(), self.nu())
    }
}

/// Solves `𝒜𝒫 + 𝒫𝒜ᵀ + ℬℬᵀ = 0` and `𝒜ᵀ𝒬 + 𝒬𝒜 + 𝒞ᵀ𝒞 = 0`.
pub fn gramians(ss: &StateSpace) -> Result<GramianSet> {
    gramians_with_margin(ss, matops::DEFAULT_HURWITZ_MARGIN)
}

pub fn gramians_with_margin(ss: &StateSpace, margin: f64) -> Result<GramianSet> {
    matops::ensure_hurwitz(&ss.sys_a, margin, crate::error::Subsystem::Composite)?;
    let bbt = &ss.sys_b * &ss.sys_b.transpose();
    let ctc = &ss.sys_c.transpose() * &ss.sys_c;
    let p = matops::solve_ale_unchecked(&ss.sys_a, &bbt)?;
    let q = matops::solve_ale_unchecked(&ss.sys_a.transpose(), &ctc)?;
    Ok(GramianSet::from_parts(ss.n(), p, q))
}

/// Relative ALE residuals of the two Gramians, `(controllability, observability)`.
pub fn gramian_residuals(ss: &StateSpace, g: &GramianSet) -> (f64, f64) {
    let bbt = &ss.sys_b * &ss.sys_b.transpose();
    let ctc = &ss.sys_c.transpose() * &ss.sys_c;
    (
        matops::relative_lyap_residual(&ss.sys_a, g.p(), &bbt),
        matops::relative_lyap_residual(&ss.sys_a.transpose(), g.q(), &ctc),
    )
}

/// Steady-state mean square error `Tr(𝒞𝒫𝒞ᵀ) = ⟨𝒞ᵀ𝒞, 𝒫⟩`.
pub fn cost(ss: &StateSpace, g: &GramianSet) -> f64 {
    (&(&ss.sys_c * g.p()) * &ss.sys_c.transpose()).trace()
}

/// The same value through the observability Gramian, `⟨𝒬, ℬℬᵀ⟩`.
pub fn dual_cost(ss: &StateSpace, g: &GramianSet) -> f64 {
    matops::dot(g.q(), &(&ss.sys_b * &ss.sys_b.transpose()))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GradientReport {
    pub cost: f64,
    /// Gradient over symmetric `r`: the derivative along symmetric `δr` is `⟨dz_dr, δr⟩`.
    pub dz_dr: Mat,
    pub dz_dn1: Mat,
    /// `S(ϑℰ22)`.
    pub stat1_residual: Mat,
    /// `Π(Cℰ21ᵀ + Bᵀ𝒬12 + b1ᵀ𝒬22)ϑ − ΠJb1ᵀℰ22`.
    pub stat2_residual: Mat,
    pub grad_norm: f64,
}

/// Closed-form derivatives of the cost in `r` and `N1`.
///
/// `∂r = −4 S(ϑℰ22)`. For `N1` the exact Frechet derivative is
/// `4·stat2 − 8 ΠJΠᵀ N1 S(ϑℰ22)`; the correction vanishes together with
/// `stat1`, so the residual pair still characterises stationarity.
pub fn gradient(ss: &StateSpace, g: &GramianSet, obs: &ObserverSpec) -> Result<GradientReport> {
    let n = ss.n();
    let nu = ss.nu();
    if obs.nu() != nu || g.n() != n || g.nu() != nu {
        return Err(Error::DimensionMismatch {
            op: "gradient",
            detail: alloc::format!(
                "state space (n={n}, nu={nu}), observer nu={}, gramians (n={}, nu={})",
                obs.nu(),
                g.n(),
                g.nu()
            ),
        });
    }
    let pi = obs.selector.matrix();
    let j = build_ito(obs.selector.m())?;
    let vt = &obs.ccr;
    let e22 = g.e22();
    let b1t = ss.obs_b1.transpose();

    let vt_e22 = vt * &e22;
    let stat1 = matops::sym(&vt_e22);

    let inner = &(&(&ss.plant_c * &g.e21().transpose()) + &(&ss.plant_b.transpose() * &g.q12()))
        + &(&b1t * &g.q22());
    let pij = &pi * &j;
    let stat2 = &(&pi * &(&inner * vt)) - &(&(&pij * &b1t) * &e22);

    let dz_dr = stat1.scale(-4.0);
    let pjp = &pij * &pi.transpose();
    let correction = &(&pjp * &obs.plant_coupling) * &stat1;
    let dz_dn1 = &stat2.scale(4.0) - &correction.scale(8.0);

    let grad_norm = libm::hypot(dz_dr.frob_norm(), dz_dn1.frob_norm());
    Ok(GradientReport {
        cost: cost(ss, g),
        dz_dr,
        dz_dn1,
        stat1_residual: stat1,
        stat2_residual: stat2,
        grad_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StationarityVerdict {
    pub stationary: bool,
    pub stat1_norm: f64,
    pub stat2_norm: f64,
    /// Residual threshold actually applied, `tol · (1 + |cost|)`.
    pub threshold: f64,
}

pub fn check_stationarity(report: &GradientReport, tol: f64) -> StationarityVerdict {
    let threshold = tol * (1.0 + report.cost.abs());
    let stat1_norm = report.stat1_residual.frob_norm();
    let stat2_norm = report.stat2_residual.frob_norm();
    StationarityVerdict {
        stationary: stat1_norm <= threshold && stat2_norm <= threshold,
        stat1_norm,
        stat2_norm,
        threshold,
    }
}

/// Assembles, solves the Gramians and evaluates the gradient in one go.
pub fn evaluate(model: &crate::model::Model, margin: f64) -> Result<(StateSpace, GramianSet, GradientReport)> {
    let ss = crate::model::assemble(model, margin)?;
    let g = gramians_with_margin(&ss, margin)?;
    let report = gradient(&ss, &g, model.observer())?;
    Ok((ss, g, report))
}
