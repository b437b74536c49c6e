use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments: dimension mismatches, empty inputs, unknown names.
    #[error("input error: {0}")]
    Input(String),
    /// A map returned a non-finite value or the solver hit one.
    #[error("numerical domain error: {0}")]
    NumericalDomain(String),
    /// A request exceeds a configured cap (jet order, bracket nesting).
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Input(format!(
            "{what}: expected dimension {expected}, got {got}"
        )));
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalDomain(format!("{what} produced a non-finite value")))
    }
}
