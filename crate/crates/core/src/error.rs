use thiserror::Error;

/// A vector or matrix argument whose length does not match the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("dimension mismatch for `{what}`: expected {expected}, got {got}")]
pub struct DimensionMismatch {
    pub what: &'static str,
    pub expected: usize,
    pub got: usize,
}

#[inline]
pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), DimensionMismatch> {
    if expected == got {
        Ok(())
    } else {
        Err(DimensionMismatch { what, expected, got })
    }
}
