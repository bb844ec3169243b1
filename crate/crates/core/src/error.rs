use thiserror::Error;

/// Errors raised by the mask, scene, head and evaluation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid format: {0}")]
    Format(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("scene generation failed: {0}")]
    Generation(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Diverged { iteration: usize, loss: f64 },
    #[error("invalid input: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;
