use std::io::Write;

use serde_json::{json, Value};

use crate::settings::Outcome;

pub const SCHEMA_VERSION: u32 = 1;

/// Print one JSON report. `body` must be an object; its fields follow the
/// envelope fields.
pub fn emit(out: &mut dyn Write, command: &str, body: Value) -> Outcome {
    let mut report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
    });
    if let (Some(dst), Value::Object(src)) = (report.as_object_mut(), body) {
        dst.extend(src);
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?)?;
    Ok(())
}

/// JSON has no NaN or infinity; report those as null.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}
