use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Which part of the composite system failed a stability check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Subsystem {
    Plant,
    Observer,
    Composite,
    /// A bare matrix handed to the Lyapunov solver.
    Matrix,
}

impl fmt::Display for Subsystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subsystem::Plant => "plant",
            Subsystem::Observer => "observer",
            Subsystem::Composite => "composite",
            Subsystem::Matrix => "matrix",
        })
    }
}

/// One failed invariant of a plant, observer or cost description.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("{which} matrix is not Hurwitz (spectral abscissa {abscissa:e}, margin {margin:e})")]
    NotHurwitz {
        which: Subsystem,
        abscissa: f64,
        margin: f64,
    },

    #[error("linear system is numerically singular")]
    SingularSystem,

    #[error("eigenvalue iteration did not converge")]
    ConvergenceFailure,

    #[error("dimension {0} must be even")]
    OddDimension(usize),

    #[error("invalid specification: {}", join_violations(.0))]
    InvalidSpec(Vec<Violation>),

    #[error("random instance generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("first stationarity residual {residual:e} exceeds {bound:e}; the M-direction formula does not apply")]
    Stat1Violated { residual: f64, bound: f64 },

    #[error("finite-difference step left the Hurwitz region after {shrinks} shrinks")]
    NotHurwitzAfterShrink { shrinks: usize },

    #[error("line search collapsed below step {step:e} without an acceptable move")]
    StepCollapse { step: f64 },

    #[error("no multistart run converged ({starts} starts)")]
    AllStartsFailed { starts: usize },

    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(&'static str),
}

fn join_violations(v: &[Violation]) -> String {
    let mut out = String::new();
    for (i, item) in v.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        out.push_str(&alloc::format!("{item}"));
    }
    out
}

impl Error {
    /// True for failures that come from the numerics rather than the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotHurwitz { .. }
                | Error::SingularSystem
                | Error::ConvergenceFailure
                | Error::NotHurwitzAfterShrink { .. }
                | Error::StepCollapse { .. }
                | Error::AllStartsFailed { .. }
                | Error::GenerationFailed { .. }
                | Error::Stat1Violated { .. }
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
