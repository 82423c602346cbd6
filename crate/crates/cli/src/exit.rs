//! Process exit codes.

use std::fmt;

use ibplab_core::Error as CoreError;

pub const OK: i32 = 0;
pub const FAILURE: i32 = 1;
pub const DATA_ERROR: i32 = 2;
pub const DIVERGED: i32 = 3;
pub const MISSING_INSTRUMENTATION: i32 = 4;
pub const CONFIG_ERROR: i32 = 5;

/// An error that carries its own exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: i32,
    pub message: String,
}

impl Exit {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

pub fn core_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Io { .. }
        | CoreError::BadMagic { .. }
        | CoreError::Truncated { .. }
        | CoreError::CountMismatch { .. }
        | CoreError::ClassAbsent(_)
        | CoreError::Dataset(_)
        | CoreError::RejectionFailed { .. } => DATA_ERROR,
        CoreError::Diverged { .. } => DIVERGED,
        CoreError::Config(_) | CoreError::InvalidArgument(_) => CONFIG_ERROR,
        CoreError::Dimension(_) | CoreError::Asymmetric { .. } | CoreError::GramMismatch { .. } => {
            FAILURE
        }
    }
}

/// Exit code for an error chain: the first [`Exit`] or core error found wins.
pub fn code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Exit>() {
            return e.code;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return core_code(e);
        }
    }
    FAILURE
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn chain_lookup() {
        let e: anyhow::Error = CoreError::Diverged {
            step: 3,
            loss: f64::NAN,
        }
        .into();
        assert_eq!(code_for(&e), DIVERGED);
        let wrapped = Err::<(), _>(CoreError::Truncated {
            path: "x".into(),
            detail: "short".into(),
        })
        .context("loading")
        .unwrap_err();
        assert_eq!(code_for(&wrapped), DATA_ERROR);
        assert_eq!(code_for(&Exit::new(MISSING_INSTRUMENTATION, "m").into()), 4);
        assert_eq!(code_for(&anyhow::anyhow!("other")), FAILURE);
    }
}
