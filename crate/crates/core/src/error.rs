use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("view reaches element {max_offset} but the buffer holds {len} elements")]
    OutOfBounds { max_offset: usize, len: usize },

    #[error("invalid blocking parameters: {0}")]
    Blocking(String),

    #[error("unsupported Strassen level {0}")]
    Level(u32),

    #[error("operand table: {0}")]
    Table(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("failed to allocate {0} elements")]
    Alloc(usize),

    #[error("thread pool: {0}")]
    Threads(String),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

/// Zero-filled vector, reporting allocation failure instead of aborting.
pub(crate) fn try_zeroed(len: usize) -> Result<Vec<f64>> {
    let mut v = Vec::new();
    v.try_reserve_exact(len).map_err(|_| Error::Alloc(len))?;
    v.resize(len, 0.0);
    Ok(v)
}
