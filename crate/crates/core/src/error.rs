use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },
    #[error("strategy shape mismatch: expected {expected_parties} parties x {expected_settings} settings, got {got_parties} x {got_settings}")]
    DimensionMismatch {
        expected_parties: usize,
        expected_settings: usize,
        got_parties: usize,
        got_settings: usize,
    },
    #[error("line undefined; constraint vacuous (party {party} never outputs +1)")]
    VacuousConstraint { party: usize },
    #[error("enumeration budget exceeded: {required} > {budget}; {hint}")]
    BudgetExceeded {
        required: u128,
        budget: u128,
        hint: &'static str,
    },
    #[error("envelope requires at least one constraint line")]
    EmptyLineSet,
    #[error("y unbounded on this line set: no zero-slope line present")]
    NoZeroSlopeLine,
    #[error("threshold unbounded on this line set at v = {v}")]
    Unbounded { v: String },
    #[error("no quantum violation at this visibility (D = {denominator} <= 0)")]
    NoViolation { denominator: String },
    #[error("no violation at any efficiency in (0, 1]")]
    NoRootInUnitInterval,
    #[error("dense simulation limited to n <= {max}, got n = {n}")]
    DenseTooLarge { n: usize, max: usize },
    #[error("verification failed: {property}: {witness}")]
    VerificationFailed { property: String, witness: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }

    /// Process exit code for the CLI: 1 validation, 2 budget, 3 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BudgetExceeded { .. } => 2,
            Error::VerificationFailed { .. } => 3,
            _ => 1,
        }
    }
}
