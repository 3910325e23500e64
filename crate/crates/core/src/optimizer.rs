//! Safeguarded gradient descent over the observer energy matrix `r` and
//! plant coupling `N1`.
//!
//! Each iterate moves along a descent direction built from the closed-form
//! gradient (BFGS by default, or the plain negative gradient). The trial
//! step is shrunk until the new point keeps the composite drift Hurwitz and
//! satisfies the Armijo decrease on the true cost. Everything else in the
//! model is held fixed.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{self, check_stationarity, GradientReport, GramianSet, StationarityVerdict};
use crate::error::{Error, Result};
use crate::matops::{self, Mat};
use crate::model::{self, build_ito, Model, StateSpace};

/// Steps below this are treated as a failed line search.
pub const MIN_STEP: f64 = 1e-16;
/// Tolerance handed to `check_stationarity` when the run reports `Converged`.
pub const STATIONARITY_TOL: f64 = 1e-6;

/// Search direction and first trial step of each line search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    /// Direction `−H g` with `H` the BFGS inverse-Hessian estimate over the
    /// free entries of `(r, N1)`; trial step 1, or `init_step` on the first
    /// iteration and after a reset.
    Bfgs,
    /// Direction `−g` with trial step `⟨s, s⟩ / ⟨s, y⟩` from the previous
    /// move, falling back to `init_step` when that is not positive.
    BarzilaiBorwein,
    /// Direction `−g`, always trying `init_step` first.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Converged once `grad_norm ≤ grad_tol · (1 + |cost|)`.
    pub grad_tol: f64,
    pub armijo_c1: f64,
    /// Shrink factor applied to a rejected step.
    pub backtrack: f64,
    pub init_step: f64,
    pub hurwitz_margin: f64,
    /// Record every k-th iteration; the first and last are always kept.
    pub trace_every: usize,
    pub method: Method,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            grad_tol: 1e-8,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            init_step: 1.0,
            hurwitz_margin: matops::DEFAULT_HURWITZ_MARGIN,
            trace_every: 1,
            method: Method::Bfgs,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.armijo_c1) {
            return Err(Error::InvalidConfig("armijo_c1 must lie in (0, 1)"));
        }
        if !open_unit(self.backtrack) {
            return Err(Error::InvalidConfig("backtrack must lie in (0, 1)"));
        }
        if !(self.grad_tol > 0.0 && self.grad_tol.is_finite()) {
            return Err(Error::InvalidConfig("grad_tol must be positive"));
        }
        if !(self.init_step > 0.0 && self.init_step.is_finite()) {
            return Err(Error::InvalidConfig("init_step must be positive"));
        }
        if !(self.hurwitz_margin >= 0.0 && self.hurwitz_margin.is_finite()) {
            return Err(Error::InvalidConfig("hurwitz_margin must be non-negative"));
        }
        if self.trace_every == 0 {
            return Err(Error::InvalidConfig("trace_every must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Status {
    Converged,
    MaxIters,
    StepCollapse,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct IterRecord {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
    /// Step accepted to reach this iterate; zero for the starting point.
    pub step: f64,
    pub stat1_norm: f64,
    pub stat2_norm: f64,
    /// Spectral abscissa of the composite drift `𝒜`.
    pub abscissa: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct OptimizerTrace {
    pub records: Vec<IterRecord>,
    pub status: Status,
    pub iterations: usize,
    /// Cost evaluations spent in line searches, including rejected trials.
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct OptimizeOutcome {
    pub model: Model,
    pub report: GradientReport,
    pub verdict: StationarityVerdict,
    pub trace: OptimizerTrace,
}

struct Point {
    model: Model,
    ss: StateSpace,
    gram: GramianSet,
    report: GradientReport,
    abscissa: f64,
    /// Running cost: the starting cost plus every accepted increment.
    cost: f64,
}

fn evaluate_point(model: Model, margin: f64, cost: Option<f64>) -> Result<Point> {
    let (ss, gram, report) = analysis::evaluate(&model, margin)?;
    let abscissa = matops::spectral_abscissa(&ss.sys_a)?;
    Ok(Point {
        cost: cost.unwrap_or(report.cost),
        model,
        ss,
        gram,
        report,
        abscissa,
    })
}

/// Exact cost change for the move `(r, N1) → (r + δr, N1 + δN1)`.
///
/// Subtracting two independently evaluated costs loses about
/// `cond(𝒜) · ε · 𝒵` to rounding, which swamps the decrease once the
/// gradient is small. Instead `δ𝒫 = 𝒫₊ − 𝒫` is solved from
/// `𝒜₊ δ𝒫 + δ𝒫 𝒜₊ᵀ + δ𝒜 𝒫 + 𝒫 δ𝒜ᵀ + ℬ₊ℬ₊ᵀ − ℬℬᵀ = 0`, with `δ𝒜`, `δℬ`
/// formed from the step itself, so the error is relative to the change.
/// Returns `None` when the new point is not admissible.
fn cost_increment(cur: &Point, cand: &Model, dr: &Mat, dn1: &Mat, margin: f64) -> Result<Option<f64>> {
    let ss_new = match model::assemble(cand, margin) {
        Ok(ss) => ss,
        Err(e) if e.is_numerical() => return Ok(None),
        Err(e) => return Err(e),
    };
    if matops::spectral_abscissa(&ss_new.sys_a)? >= -margin {
        return Ok(None);
    }
    let obs = cur.model.observer();
    let (n, nu, m, mu) = (cur.ss.n(), obs.nu(), obs.selector.m(), obs.mu());
    let pi = obs.selector.matrix();
    let pjp = &(&pi * &build_ito(m)?) * &pi.transpose();
    let n1 = &obs.plant_coupling;
    let dn1t = dn1.transpose();
    let k_n1 = &pjp * n1;
    let k_dn1 = &pjp * dn1;
    let inner = &(&(dr + &(&dn1t * &k_n1)) + &(&n1.transpose() * &k_dn1)) + &(&dn1t * &k_dn1);
    let two_vt = obs.ccr.scale(2.0);
    let da = &two_vt * &inner;
    let db1 = &(&two_vt * &dn1t) * &pi;
    let d_sys_a = Mat::block2x2(&Mat::zeros(n, n), &Mat::zeros(n, nu), &(&db1 * &cur.ss.plant_c), &da);
    let d_sys_b = Mat::block2x2(&Mat::zeros(n, m), &Mat::zeros(n, mu), &db1, &Mat::zeros(nu, mu));
    let dap = &d_sys_a * cur.gram.p();
    let dbb = &d_sys_b * &cur.ss.sys_b.transpose();
    let forcing = &(&(&dap + &dap.transpose()) + &(&dbb + &dbb.transpose()))
        + &(&d_sys_b * &d_sys_b.transpose());
    let dp = match matops::solve_ale_unchecked(&ss_new.sys_a, &forcing) {
        Ok(dp) => dp,
        Err(e) if e.is_numerical() => return Ok(None),
        Err(e) => return Err(e),
    };
    let ctc = &cur.ss.sys_c.transpose() * &cur.ss.sys_c;
    let dz = matops::dot(&ctc, &dp);
    Ok(dz.is_finite().then_some(dz))
}

fn record(iter: usize, step: f64, pt: &Point) -> IterRecord {
    IterRecord {
        iter,
        cost: pt.cost,
        grad_norm: pt.report.grad_norm,
        step,
        stat1_norm: pt.report.stat1_residual.frob_norm(),
        stat2_norm: pt.report.stat2_residual.frob_norm(),
        abscissa: pt.abscissa,
    }
}

fn converged(report: &GradientReport, cfg: &OptimizerConfig) -> bool {
    report.grad_norm <= cfg.grad_tol * (1.0 + report.cost.abs())
}

/// Runs descent from the observer parameters stored in `model`.
///
/// Trace costs are running totals of exactly computed increments, so they are
/// strictly decreasing; they agree with a direct evaluation at each iterate
/// to within the evaluation's own rounding.
pub fn optimize(model: &Model, cfg: &OptimizerConfig) -> Result<OptimizeOutcome> {
    cfg.validate()?;
    let margin = cfg.hurwitz_margin;
    let mut cur = evaluate_point(model.clone(), margin, None)?;
    let mut records = Vec::new();
    records.push(record(0, 0.0, &cur));
    let mut evaluations = 0;
    let nu = cur.model.observer().nu();
    let p = cur.model.observer().p();
    let mut dir = DirectionState::new(cfg.method, pack(&cur.report, nu).len());
    let mut last_step = 0.0;
    let mut iter = 0;

    let status = loop {
        if converged(&cur.report, cfg) {
            break Status::Converged;
        }
        if iter >= cfg.max_iters {
            break Status::MaxIters;
        }
        let g = pack(&cur.report, nu);
        let mut found = None;
        // A failed search along a quasi-Newton direction is retried once
        // along the plain negative gradient before giving up.
        for _ in 0..2 {
            let (d, t0) = dir.direction(&g, cfg.init_step);
            let slope = dot(&g, &d);
            let (dr, dn) = unpack(&d, nu, p);
            let obs = cur.model.observer();
            let mut t = t0;
            while t >= MIN_STEP {
                let (dr_t, dn_t) = (dr.scale(t), dn.scale(t));
                let r_new = matops::sym(&(&obs.energy + &dr_t));
                let n_new = &obs.plant_coupling + &dn_t;
                let cand = cur.model.with_params_unchecked(r_new, n_new);
                evaluations += 1;
                if let Some(dz) = cost_increment(&cur, &cand, &dr_t, &dn_t, margin)? {
                    if dz <= cfg.armijo_c1 * t * slope {
                        found = Some((cand, t, d.clone(), dz));
                        break;
                    }
                }
                t *= cfg.backtrack;
            }
            if found.is_some() || !dir.reset() {
                break;
            }
        }
        let Some((cand, t, d, dz)) = found else {
            break Status::StepCollapse;
        };
        let next = evaluate_point(cand, margin, Some(cur.cost + dz))?;
        iter += 1;
        let s_vec: Vec<f64> = d.iter().map(|x| x * t).collect();
        let g_next = pack(&next.report, nu);
        let y_vec: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        dir.update(&s_vec, &y_vec);
        last_step = t;
        cur = next;
        if iter % cfg.trace_every == 0 {
            records.push(record(iter, t, &cur));
        }
    };
    if records.last().map(|r| r.iter) != Some(iter) {
        records.push(record(iter, last_step, &cur));
    }
    let verdict = check_stationarity(&cur.report, STATIONARITY_TOL);
    Ok(OptimizeOutcome {
        report: cur.report,
        model: cur.model,
        verdict,
        trace: OptimizerTrace {
            records,
            status,
            iterations: iter,
            evaluations,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StartSummary {
    pub index: usize,
    /// `None` when the start failed before producing a trace.
    pub status: Option<Status>,
    pub cost: Option<f64>,
    pub iterations: usize,
    pub stationary: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MultistartOutcome {
    pub best_index: usize,
    pub best: OptimizeOutcome,
    pub starts: Vec<StartSummary>,
}

/// Runs [`optimize`] from `starts` initial observers and keeps the cheapest
/// one that converged to a stationary point, ties going to the lower index.
///
/// Start 0 uses the `(r, N1)` already in `model`; the others draw fresh
/// parameters from `seed`, redrawing until the observer drift is Hurwitz with
/// the generator's margin.
pub fn multistart(model: &Model, cfg: &OptimizerConfig, starts: usize, seed: u64) -> Result<MultistartOutcome> {
    cfg.validate()?;
    if starts == 0 {
        return Err(Error::InvalidConfig("starts must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summaries = Vec::with_capacity(starts);
    let mut best: Option<(usize, OptimizeOutcome)> = None;
    for index in 0..starts {
        let init = if index == 0 {
            Ok(model.clone())
        } else {
            model::draw_observer_params(&mut rng, model.observer())
                .map(|(r, n1)| model.with_params_unchecked(r, n1))
        };
        let run = init.and_then(|m| optimize(&m, cfg));
        match run {
            Ok(out) => {
                let ok = out.trace.status == Status::Converged && out.verdict.stationary;
                summaries.push(StartSummary {
                    index,
                    status: Some(out.trace.status),
                    cost: Some(out.report.cost),
                    iterations: out.trace.iterations,
                    stationary: out.verdict.stationary,
                    error: None,
                });
                let better = match &best {
                    Some((_, b)) => out.report.cost < b.report.cost,
                    None => true,
                };
                if ok && better {
                    best = Some((index, out));
                }
            }
            Err(e) if e.is_numerical() => {
                summaries.push(StartSummary {
                    index,
                    status: None,
                    cost: None,
                    iterations: 0,
                    stationary: false,
                    error: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let (best_index, best) = best.ok_or(Error::AllStartsFailed { starts })?;
    Ok(MultistartOutcome {
        best_index,
        best,
        starts: summaries,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Free coordinates: the lower triangle of `r` (off-diagonal entries stand
/// for the symmetric pair, so their partial derivative is `2 G_ij`) followed
/// by `N1` row-major.
fn pack(report: &GradientReport, nu: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(nu * (nu + 1) / 2 + report.dz_dn1.as_slice().len());
    for i in 0..nu {
        for j in 0..=i {
            let gij = report.dz_dr[(i, j)];
            v.push(if i == j { gij } else { 2.0 * gij });
        }
    }
    v.extend_from_slice(report.dz_dn1.as_slice());
    v
}

/// Inverse of [`pack`] applied to a step in coordinate space.
fn unpack(d: &[f64], nu: usize, p: usize) -> (Mat, Mat) {
    let mut dr = Mat::zeros(nu, nu);
    let mut k = 0;
    for i in 0..nu {
        for j in 0..=i {
            dr[(i, j)] = d[k];
            dr[(j, i)] = d[k];
            k += 1;
        }
    }
    let dn = Mat::new(p, nu, d[k..].to_vec()).expect("finite step of the right length");
    (dr, dn)
}

struct DirectionState {
    method: Method,
    /// Dense inverse-Hessian estimate, `None` until the first curvature pair.
    h: Option<Vec<f64>>,
    dim: usize,
    bb_step: Option<f64>,
}

impl DirectionState {
    fn new(method: Method, dim: usize) -> Self {
        Self {
            method,
            h: None,
            dim,
            bb_step: None,
        }
    }

    fn direction(&self, g: &[f64], init_step: f64) -> (Vec<f64>, f64) {
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        match (self.method, &self.h) {
            (Method::Bfgs, Some(h)) => {
                let n = self.dim;
                let d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], g)).collect();
                if dot(&d, g) < 0.0 {
                    (d, 1.0)
                } else {
                    (neg, init_step)
                }
            }
            (Method::BarzilaiBorwein, _) => (neg, self.bb_step.unwrap_or(init_step)),
            _ => (neg, init_step),
        }
    }

    /// Drops curvature memory; returns whether anything was dropped.
    fn reset(&mut self) -> bool {
        let had = self.h.is_some() || self.bb_step.is_some();
        self.h = None;
        self.bb_step = None;
        had
    }

    fn update(&mut self, s: &[f64], y: &[f64]) {
        let sy = dot(s, y);
        let yy = dot(y, y);
        let ss = dot(s, s);
        let curvature_ok = sy > 1e-12 * libm::sqrt(ss * yy) && sy.is_finite();
        match self.method {
            Method::BarzilaiBorwein => {
                self.bb_step = curvature_ok.then(|| ss / sy);
            }
            Method::Fixed => {}
            Method::Bfgs => {
                if !curvature_ok {
                    return;
                }
                let n = self.dim;
                let h = self.h.get_or_insert_with(|| {
                    // Shanno–Phua scaling of the initial estimate.
                    let gamma = sy / yy;
                    (0..n * n).map(|k| if k % (n + 1) == 0 { gamma } else { 0.0 }).collect()
                });
                let rho = 1.0 / sy;
                let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
                let yhy = dot(y, &hy);
                let coef = (1.0 + rho * yhy) * rho;
                for i in 0..n {
                    for j in 0..n {
                        h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                    }
                }
            }
        }
    }
}
