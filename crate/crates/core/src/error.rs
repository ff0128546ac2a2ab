use thiserror::Error;

/// Errors raised by the solvers. Variants that correspond to a violated
/// hypothesis carry the measured margin so callers can report it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point outside strip: |Im z| = {im} >= half-width {half_width}")]
    Domain { im: f64, half_width: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("function vanishes on the strip (min modulus {min_modulus:.3e} <= floor {floor:.3e})")]
    ZeroOnStrip { min_modulus: f64, floor: f64 },

    #[error("coefficient overflow at iterate {step} (magnitude {magnitude:.3e})")]
    Overflow { step: usize, magnitude: f64 },

    #[error("continued fraction precision exhausted after {} quotients", .valid_prefix.len())]
    PrecisionExhausted { valid_prefix: Vec<String> },

    #[error("bezout: residual {residual:.3e} did not reach {target:.1e} within order {order}")]
    IllConditioned { residual: f64, target: f64, order: usize },

    #[error("bezout: solution norm {norm:.3e} exceeds budget {budget:.3e}")]
    BudgetExceeded { norm: f64, budget: f64 },

    #[error("determinant zeroing: precondition failed (rho = {rho:.3e}, threshold {threshold:.3e})")]
    PreconditionFailed { rho: f64, threshold: f64 },

    #[error("determinant zeroing did not converge: trajectory {trajectory:?}")]
    NoConvergence { trajectory: Vec<f64> },

    #[error("kernel vector: could not isolate zeros ({0})")]
    ZeroLocationFailure(String),

    #[error("kernel vector: residual {residual:.3e} exceeds {limit:.3e}")]
    ResidualTooLarge { residual: f64, limit: f64 },

    #[error("real symmetrization: vector is not parallel to a real direction (defect {defect:.3e})")]
    NotRealDirection { defect: f64 },

    #[error("growth condition failed: delta1 = {delta1:.4} exceeds budget {budget:.4}")]
    CondFailed { delta1: f64, budget: f64 },

    #[error("trace not concentrated: |t - t0| = {deviation:.3e} > {bound:.3e}")]
    TraceNotConcentrated { deviation: f64, bound: f64 },

    #[error("multiplier has nonzero winding number {0}")]
    WindingNonzero(i64),

    #[error("small divisor {divisor:.3e} at frequency {k}")]
    SmallDivisorOverflow { k: i64, divisor: f64 },

    #[error("determinant collapse: min |b| = {min_modulus:.3e} below floor {floor:.3e}")]
    DeterminantCollapse { min_modulus: f64, floor: f64 },

    #[error("eigenvector parities differ")]
    ParityMismatch,

    #[error("reduction hypothesis failed: {which} (measured {measured:.3e}, required {required:.3e})")]
    HypothesisFailed {
        which: &'static str,
        measured: f64,
        required: f64,
    },
}

impl Error {
    /// Name of the construction step that raised the error, used by the CLI
    /// when reporting precondition failures.
    pub fn stage(&self) -> &'static str {
        match self {
            Error::Domain { .. } | Error::InvalidArgument(_) => "input",
            Error::ZeroOnStrip { .. } => "log_branch",
            Error::Overflow { .. } => "iterate",
            Error::PrecisionExhausted { .. } => "continued_fraction",
            Error::IllConditioned { .. } | Error::BudgetExceeded { .. } => "bezout_solve",
            Error::PreconditionFailed { .. } | Error::NoConvergence { .. } => "zero_determinant",
            Error::ZeroLocationFailure(_) | Error::ResidualTooLarge { .. } => "kernel_vector",
            Error::NotRealDirection { .. } => "real_symmetrize",
            Error::CondFailed { .. } => "cond_test",
            Error::TraceNotConcentrated { .. } => "trace_concentration",
            Error::WindingNonzero(_) | Error::SmallDivisorOverflow { .. } => "factor_multiplier",
            Error::DeterminantCollapse { .. } => "elliptic_path",
            Error::ParityMismatch => "hyperbolic_path",
            Error::HypothesisFailed { .. } => "wr_fallback",
        }
    }

    /// True for errors that signal a violated mathematical precondition
    /// rather than an internal failure.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::CondFailed { .. }
                | Error::TraceNotConcentrated { .. }
                | Error::PreconditionFailed { .. }
                | Error::HypothesisFailed { .. }
                | Error::WindingNonzero(_)
                | Error::Domain { .. }
                | Error::InvalidArgument(_)
                | Error::IllConditioned { .. }
                | Error::ZeroOnStrip { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
