use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use cqf_core::model::Dims;

#[derive(Debug, Parser)]
#[command(
    name = "cqf",
    version,
    about = "Coherent quantum observer design: Gramians, cost gradients, optimisation and Weyl-variation checks"
)]
pub struct Cli {
    /// Write the JSON report here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Exit with code 3 when a verification tolerance is exceeded.
    #[arg(long, global = true)]
    pub strict: bool,

    /// Leave wall-clock timings out of the report (for byte-identical output).
    #[arg(long, global = true)]
    pub no_timing: bool,

    /// Raise the log level on standard error (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model document, or a report from `random`/`optimize` carrying one.
    #[arg(value_name = "MODEL")]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Random seed; falls back to $CQF_SEED, then 0.
    #[arg(long, env = "CQF_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List every violated structural condition of a model.
    Validate(ModelArg),
    /// Plant, observer and composite state-space matrices.
    Derive(ModelArg),
    /// Mean-square error cost and Gramian residuals.
    Cost(ModelArg),
    /// Closed-form gradient in (r, N1) and the stationarity residuals.
    Grad(ModelArg),
    /// Stationarity verdict at tolerance `tol · (1 + |cost|)`.
    Check {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Minimise the cost over (r, N1).
    Optimize {
        #[command(flatten)]
        model: ModelArg,
        /// JSON optimiser configuration; unspecified fields keep their defaults.
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        /// Number of starts: the model's own observer plus seeded redraws.
        #[arg(long, default_value_t = 1)]
        starts: usize,
        #[command(flatten)]
        seed: SeedArg,
        /// Also write the optimised model document here.
        #[arg(long, value_name = "PATH")]
        model_out: Option<PathBuf>,
    },
    /// Largest Weyl-variation derivatives over frequencies sampled in a ball.
    WeylScan {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 3.0)]
        radius: f64,
        #[command(flatten)]
        seed: SeedArg,
        /// Passes when max|dK| + max|dM| ≤ tol · (1 + |cost|).
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Compare the closed-form gradient with the sensitivity and finite-difference oracles.
    FdCheck {
        #[command(flatten)]
        model: ModelArg,
        /// Finite-difference step, scaled by 1 + |x| per entry.
        #[arg(long, default_value_t = cqf_core::oracle::DEFAULT_FD_STEP)]
        h: f64,
        /// Largest accepted relative error against finite differences.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Generate a seeded random model.
    Random {
        /// Dimensions as n,m,nu,p,mu.
        #[arg(long, value_parser = parse_dims)]
        dims: Dims,
        #[command(flatten)]
        seed: SeedArg,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Derive(_) => "derive",
            Command::Cost(_) => "cost",
            Command::Grad(_) => "grad",
            Command::Check { .. } => "check",
            Command::Optimize { .. } => "optimize",
            Command::WeylScan { .. } => "weyl-scan",
            Command::FdCheck { .. } => "fd-check",
            Command::Random { .. } => "random",
        }
    }
}

pub fn parse_dims(s: &str) -> Result<Dims, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("dimensions must be integers: {e}"))?;
    match parts[..] {
        [n, m, nu, p, mu] => Ok(Dims::new(n, m, nu, p, mu)),
        _ => Err(format!("expected five dimensions n,m,nu,p,mu, got {}", parts.len())),
    }
}
