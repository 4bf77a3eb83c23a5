use thiserror::Error;

pub type Result<T> = std::result::Result<T, AasError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AasError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("weight sum error: weights sum to {sum}, expected {expected}")]
    WeightSum { sum: f64, expected: f64 },
    #[error("arity mismatch: expected {expected}, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("index {index} out of range for {len} channels")]
    Index { index: usize, len: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl AasError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        AasError::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        AasError::Precondition(msg.into())
    }
}

pub(crate) fn check_unit(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AasError::domain(format!("{name} = {value} outside [0, 1]")))
    }
}

pub(crate) fn check_index(index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(AasError::Index { index, len })
    }
}
