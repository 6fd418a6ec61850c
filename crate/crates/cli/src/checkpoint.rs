use std::path::Path;

use ngramlm_core::trainer::read_manifest;

use crate::config::Precision;
use crate::error::CliError;

/// Precision a checkpoint was saved in; commands load it at that precision.
pub fn stored_precision(dir: &Path) -> Result<Precision, CliError> {
    let manifest =
        read_manifest(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    match manifest.dtype.as_str() {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        other => Err(CliError::data(format!(
            "unsupported checkpoint dtype {other:?}"
        ))),
    }
}

/// Loads the checkpoint at `$dir` with its stored precision and calls the
/// generic function `$f(checkpoint, extra args...)`.
macro_rules! with_checkpoint {
    ($dir:expr, $f:ident($($arg:expr),*)) => {{
        let dir: &std::path::Path = $dir;
        match $crate::checkpoint::stored_precision(dir)? {
            $crate::config::Precision::F32 => $f(ngramlm_core::load_checkpoint::<f32>(dir)?, $($arg),*),
            $crate::config::Precision::F64 => $f(ngramlm_core::load_checkpoint::<f64>(dir)?, $($arg),*),
        }
    }};
}

pub(crate) use with_checkpoint;
