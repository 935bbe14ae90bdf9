use std::process::ExitCode;

use semshield_core::Error;
use serde_json::{json, Value};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Writes the single-line JSON error record to stderr and picks the exit code.
pub fn report(command: &str, err: &Error) -> ExitCode {
    let mut context = context(err);
    context["command"] = json!(command);
    let line = json!({
        "code": err.code(),
        "message": err.to_string(),
        "context": context,
    });
    eprintln!("{line}");
    ExitCode::from(if err.is_numerical() { EXIT_NUMERICAL } else { EXIT_INPUT })
}

/// Argument errors from clap, in the same shape.
pub fn report_usage(message: &str) -> ExitCode {
    let line = json!({
        "code": "usage",
        "message": message.trim(),
        "context": {},
    });
    eprintln!("{line}");
    ExitCode::from(EXIT_INPUT)
}

fn context(err: &Error) -> Value {
    match err {
        Error::Shape { op, expected, got } => json!({ "op": op, "expected": expected, "got": got }),
        Error::Index { what, index, len, row } => json!({ "what": what, "index": index, "len": len, "row": row }),
        Error::Convergence { sweeps, residual } => json!({ "sweeps": sweeps, "residual": residual }),
        Error::Singular {
            min_pair_sum,
            threshold,
            ..
        } => {
            json!({ "min_pair_sum": min_pair_sum, "threshold": threshold })
        }
        Error::Io { path, source } => json!({ "path": path, "kind": source.kind().to_string() }),
        Error::Parse { path, .. } => json!({ "path": path }),
        Error::Validation(_) | Error::Config(_) => json!({}),
    }
}
