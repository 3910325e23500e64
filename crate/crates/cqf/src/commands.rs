use std::path::Path;

use cqf_core::analysis::{self, check_stationarity, cost, dual_cost, gramian_residuals, gramians};
use cqf_core::matops::{spectral_abscissa, DEFAULT_HURWITZ_MARGIN};
use cqf_core::model::{assemble, random_instance, Model};
use cqf_core::optimizer::{self, OptimizerConfig, Status, STATIONARITY_TOL};
use cqf_core::oracle::{fd_cost_gradient, rel_err, sensitivity_gradient};
use cqf_core::weyl::weyl_scan;
use cqf_core::Mat;
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::cli::{Cli, Command};
use crate::error::{CliError, CliResult};
use crate::model_file::{self, ModelFile};
use crate::report::{RunReport, Timings};

/// Agreement required between the closed-form and sensitivity gradients.
pub const SENSITIVITY_TOL: f64 = 1e-9;

/// Payload of a finished command plus an optional failure that should
/// still carry that payload (a collapsed optimisation keeps its trace).
struct Outcome {
    outputs: Value,
    failure: Option<CliError>,
}

impl Outcome {
    fn ok(outputs: Value) -> Self {
        Outcome { outputs, failure: None }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("core types serialise to JSON")
}

fn load(path: &Path, t: &mut Timings) -> CliResult<Model> {
    t.time("load", || model_file::read(path)?.into_model())
}

/// Marks a failed check: an error under `--strict`, a warning otherwise.
fn verdict(strict: bool, passed: bool, what: String) -> Option<CliError> {
    if passed {
        None
    } else if strict {
        Some(CliError::Verification(what))
    } else {
        warn!("{what}");
        None
    }
}

fn inputs(cli: &Cli) -> Map<String, Value> {
    let mut m = Map::new();
    let mut put = |k: &str, v: Value| {
        m.insert(k.to_string(), v);
    };
    let path = |p: &Path| Value::String(p.display().to_string());
    match &cli.command {
        Command::Validate(a) | Command::Derive(a) | Command::Cost(a) | Command::Grad(a) => {
            put("model", path(&a.model))
        }
        Command::Check { model, tol } => {
            put("model", path(&model.model));
            put("tol", json!(tol));
        }
        Command::Optimize { model, config, starts, seed, model_out } => {
            put("model", path(&model.model));
            put("config", config.as_deref().map_or(Value::Null, path));
            put("starts", json!(starts));
            put("seed", json!(seed.seed));
            put("model_out", model_out.as_deref().map_or(Value::Null, path));
        }
        Command::WeylScan { model, samples, radius, seed, tol } => {
            put("model", path(&model.model));
            put("samples", json!(samples));
            put("radius", json!(radius));
            put("seed", json!(seed.seed));
            put("tol", json!(tol));
        }
        Command::FdCheck { model, h, tol } => {
            put("model", path(&model.model));
            put("h", json!(h));
            put("tol", json!(tol));
        }
        Command::Random { dims, seed } => {
            put("dims", to_value(dims));
            put("seed", json!(seed.seed));
        }
    }
    put("strict", json!(cli.strict));
    m
}

/// Runs the parsed command and builds its report; never panics on bad input.
pub fn execute(cli: &Cli) -> RunReport {
    let mut report = RunReport::new(cli.command.name(), inputs(cli));
    let mut timings = Timings::default();
    let result = dispatch(cli, &mut timings);
    let (mut outputs, failure) = match result {
        Ok(o) => (o.outputs, o.failure),
        Err(e) => (json!({}), Some(e)),
    };
    if let Some(e) = failure {
        log::error!("{e}");
        report.status = e.status().to_string();
        report.exit_code = e.exit_code();
        if let Value::Object(map) = &mut outputs {
            map.insert("error".into(), json!({ "kind": e.status(), "message": e.to_string() }));
        }
    }
    report.outputs = outputs;
    if !cli.no_timing {
        report.timing = Some(timings.into_map());
    }
    report
}

fn dispatch(cli: &Cli, t: &mut Timings) -> CliResult<Outcome> {
    match &cli.command {
        Command::Validate(a) => validate(&a.model, t),
        Command::Derive(a) => derive(&load(&a.model, t)?, t),
        Command::Cost(a) => cost_cmd(&load(&a.model, t)?, t),
        Command::Grad(a) => grad(&load(&a.model, t)?, t),
        Command::Check { model, tol } => check(&load(&model.model, t)?, *tol, cli.strict, t),
        Command::Optimize { model, config, starts, seed, model_out } => {
            let cfg = read_config(config.as_deref())?;
            let m = load(&model.model, t)?;
            optimize(&m, &cfg, *starts, seed.seed, model_out.as_deref(), cli.strict, t)
        }
        Command::WeylScan { model, samples, radius, seed, tol } => {
            let m = load(&model.model, t)?;
            scan(&m, *samples, *radius, seed.seed, *tol, cli.strict, t)
        }
        Command::FdCheck { model, h, tol } => fd_check(&load(&model.model, t)?, *h, *tol, cli.strict, t),
        Command::Random { dims, seed } => {
            let m = t.time("generate", || random_instance(seed.seed, *dims))?;
            Ok(Outcome::ok(json!({
                "dims": to_value(dims),
                "seed": seed.seed,
                "model": to_value(&ModelFile::from_model(&m)),
            })))
        }
    }
}

fn validate(path: &Path, t: &mut Timings) -> CliResult<Outcome> {
    let file = t.time("load", || model_file::read(path))?;
    let violations = file.violations();
    let failure = (!violations.is_empty())
        .then(|| CliError::input(format!("{} violation(s) found", violations.len())));
    Ok(Outcome {
        outputs: json!({ "valid": violations.is_empty(), "violations": to_value(&violations) }),
        failure,
    })
}

fn derive(m: &Model, t: &mut Timings) -> CliResult<Outcome> {
    let ss = t.time("assemble", || assemble(m, DEFAULT_HURWITZ_MARGIN))?;
    let abscissa = |a: &Mat| spectral_abscissa(a).map(|x| json!(x));
    Ok(Outcome::ok(json!({
        "plant": { "A": to_value(&ss.plant_a), "B": to_value(&ss.plant_b), "C": to_value(&ss.plant_c) },
        "observer": { "a": to_value(&ss.obs_a), "b1": to_value(&ss.obs_b1), "b2": to_value(&ss.obs_b2) },
        "composite": { "A": to_value(&ss.sys_a), "B": to_value(&ss.sys_b), "C": to_value(&ss.sys_c) },
        "spectral_abscissa": {
            "plant": abscissa(&ss.plant_a)?,
            "observer": abscissa(&ss.obs_a)?,
            "composite": abscissa(&ss.sys_a)?,
        },
    })))
}

fn cost_cmd(m: &Model, t: &mut Timings) -> CliResult<Outcome> {
    let ss = t.time("assemble", || assemble(m, DEFAULT_HURWITZ_MARGIN))?;
    let g = t.time("gramians", || gramians(&ss))?;
    let (rp, rq) = gramian_residuals(&ss, &g);
    Ok(Outcome::ok(json!({
        "cost": cost(&ss, &g),
        "dual_cost": dual_cost(&ss, &g),
        "gramian_residuals": { "controllability": rp, "observability": rq },
    })))
}

fn grad(m: &Model, t: &mut Timings) -> CliResult<Outcome> {
    let (_, _, report) = t.time("gradient", || analysis::evaluate(m, DEFAULT_HURWITZ_MARGIN))?;
    Ok(Outcome::ok(to_value(&report)))
}

fn check(m: &Model, tol: f64, strict: bool, t: &mut Timings) -> CliResult<Outcome> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(CliError::input("--tol must be positive"));
    }
    let (_, _, report) = t.time("gradient", || analysis::evaluate(m, DEFAULT_HURWITZ_MARGIN))?;
    let v = check_stationarity(&report, tol);
    let failure = verdict(
        strict,
        v.stationary,
        format!(
            "not stationary: stat1 {:e}, stat2 {:e} against {:e}",
            v.stat1_norm, v.stat2_norm, v.threshold
        ),
    );
    Ok(Outcome {
        outputs: json!({
            "cost": report.cost,
            "grad_norm": report.grad_norm,
            "tol": tol,
            "verdict": to_value(&v),
        }),
        failure,
    })
}

fn read_config(path: Option<&Path>) -> CliResult<OptimizerConfig> {
    let cfg: OptimizerConfig = match path {
        None => OptimizerConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::input(format!("invalid optimizer config: {e}")))?
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_model(path: &Path, m: &Model) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(&ModelFile::from_model(m)).expect("model serialises");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

fn optimize(
    m: &Model,
    cfg: &OptimizerConfig,
    starts: usize,
    seed: u64,
    model_out: Option<&Path>,
    strict: bool,
    t: &mut Timings,
) -> CliResult<Outcome> {
    let (best, summary) = if starts <= 1 {
        if starts == 0 {
            return Err(CliError::input("--starts must be at least 1"));
        }
        (t.time("optimize", || optimizer::optimize(m, cfg))?, None)
    } else {
        let ms = t.time("optimize", || optimizer::multistart(m, cfg, starts, seed))?;
        (ms.best, Some((ms.best_index, ms.starts)))
    };
    let status = best.trace.status;
    info!(
        "{status:?} after {} iterations, cost {:e}, grad norm {:e}",
        best.trace.iterations, best.report.cost, best.report.grad_norm
    );
    if let Some(p) = model_out {
        write_model(p, &best.model)?;
    }
    let failure = match status {
        Status::StepCollapse => Some(CliError::Numerical(format!(
            "line search collapsed after {} iterations",
            best.trace.iterations
        ))),
        Status::MaxIters => verdict(
            strict,
            false,
            format!("iteration cap of {} reached before convergence", cfg.max_iters),
        ),
        Status::Converged => verdict(
            strict,
            best.verdict.stationary,
            format!("converged point fails stationarity at tol {STATIONARITY_TOL:e}"),
        ),
    };
    let mut out = json!({
        "model": to_value(&ModelFile::from_model(&best.model)),
        "report": to_value(&best.report),
        "verdict": to_value(&best.verdict),
        "trace": to_value(&best.trace),
        "config": to_value(cfg),
    });
    if let Some((index, starts)) = summary {
        out["best_index"] = json!(index);
        out["starts"] = to_value(&starts);
    }
    Ok(Outcome { outputs: out, failure })
}

fn scan(
    m: &Model,
    samples: usize,
    radius: f64,
    seed: u64,
    tol: f64,
    strict: bool,
    t: &mut Timings,
) -> CliResult<Outcome> {
    if samples == 0 || !(radius > 0.0 && radius.is_finite()) || !(tol > 0.0 && tol.is_finite()) {
        return Err(CliError::input("--samples, --radius and --tol must be positive"));
    }
    let ss = t.time("assemble", || assemble(m, DEFAULT_HURWITZ_MARGIN))?;
    let g = t.time("gramians", || gramians(&ss))?;
    let rep = t.time("scan", || weyl_scan(&ss, &g, m.observer(), samples, radius, seed, tol))?;
    let threshold = tol * (1.0 + rep.cost.abs());
    let combined = rep.combined();
    let passed = combined <= threshold;
    let failure = verdict(
        strict,
        passed,
        match rep.max_abs_dm {
            Some(_) => format!("max|dK| + max|dM| = {combined:e} exceeds {threshold:e}"),
            None => format!("stat1 {:e} too large for the M-direction formula", rep.stat1_norm),
        },
    );
    Ok(Outcome {
        outputs: json!({
            "scan": to_value(&rep),
            "combined": combined.is_finite().then_some(combined),
            "threshold": threshold,
            "passed": passed,
        }),
        failure,
    })
}

fn table(block: &str, closed: &Mat, sens: &Mat, fd: &Mat) -> Vec<Value> {
    let mut rows = Vec::with_capacity(closed.rows() * closed.cols());
    for i in 0..closed.rows() {
        for j in 0..closed.cols() {
            rows.push(json!({
                "block": block,
                "i": i,
                "j": j,
                "closed_form": closed[(i, j)],
                "sensitivity": sens[(i, j)],
                "finite_difference": fd[(i, j)],
            }));
        }
    }
    rows
}

fn fd_check(m: &Model, h: f64, tol: f64, strict: bool, t: &mut Timings) -> CliResult<Outcome> {
    if !(h > 0.0 && h.is_finite()) || !(tol > 0.0 && tol.is_finite()) {
        return Err(CliError::input("--h and --tol must be positive"));
    }
    let margin = DEFAULT_HURWITZ_MARGIN;
    let (_, _, closed) = t.time("closed_form", || analysis::evaluate(m, margin))?;
    let (sens, sens_residual) = t.time("sensitivity", || sensitivity_gradient(m, margin))?;
    let fd = t.time("finite_difference", || fd_cost_gradient(m, h, margin))?;
    let worst = |a: &Mat, b: &Mat, c: &Mat, d: &Mat| rel_err(a, b).max(rel_err(c, d));
    let sens_err = worst(&closed.dz_dr, &sens.dz_dr, &closed.dz_dn1, &sens.dz_dn1);
    let fd_err = worst(&closed.dz_dr, &fd.dz_dr, &closed.dz_dn1, &fd.dz_dn1);
    let fd_sens_err = worst(&sens.dz_dr, &fd.dz_dr, &sens.dz_dn1, &fd.dz_dn1);
    let passed = sens_err <= SENSITIVITY_TOL && fd_err <= tol;
    let failure = verdict(
        strict,
        passed,
        format!(
            "gradient disagreement: sensitivity {sens_err:e} (≤ {SENSITIVITY_TOL:e}), finite difference {fd_err:e} (≤ {tol:e})"
        ),
    );
    let mut rows = table("dZ_dr", &closed.dz_dr, &sens.dz_dr, &fd.dz_dr);
    rows.extend(table("dZ_dN1", &closed.dz_dn1, &sens.dz_dn1, &fd.dz_dn1));
    Ok(Outcome {
        outputs: json!({
            "cost": closed.cost,
            "h": h,
            "table": rows,
            "max_rel_err": {
                "sensitivity_vs_closed_form": sens_err,
                "finite_difference_vs_closed_form": fd_err,
                "finite_difference_vs_sensitivity": fd_sens_err,
            },
            "sensitivity_ale_residual": sens_residual,
            "tolerances": { "sensitivity": SENSITIVITY_TOL, "finite_difference": tol },
            "passed": passed,
        }),
        failure,
    })
}
