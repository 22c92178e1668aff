use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("points are not ordered: {0}")]
    Ordering(String),
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("path index {index} out of range for a path of length {len}")]
    Index { index: usize, len: usize },
    #[error("eigensolver failed at alpha={alpha}, t={t}")]
    Simulation { alpha: u32, t: f64 },
    #[error("bridge sampler gave up after {attempts} attempts (acceptance rate {rate:e})")]
    Starvation { attempts: u64, rate: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {v} is not finite")))
    }
}
