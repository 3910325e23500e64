//! The run report written by every subcommand.
//!
//! Schema `cqf-report/1` is a JSON object with exactly these keys:
//!
//! | key         | type                     | meaning                                      |
//! |-------------|--------------------------|----------------------------------------------|
//! | `schema`    | string `"cqf-report/1"`  | schema version                               |
//! | `command`   | string                   | subcommand name                              |
//! | `status`    | string                   | `ok`, `invalid_input`, `numerical_failure` or `verification_failed` |
//! | `exit_code` | integer 0–3              | process exit code, consistent with `status`  |
//! | `inputs`    | object                   | echo of file paths, seeds and numeric flags  |
//! | `outputs`   | object                   | command payload; `{"error": {...}}` on failure |
//! | `versions`  | object `{tool, schema}`  | strings                                      |
//! | `timing`    | object of numbers        | seconds per phase; absent with `--no-timing` |

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const SCHEMA: &str = "cqf-report/1";

pub const COMMANDS: [&str; 9] = [
    "validate", "derive", "cost", "grad", "check", "optimize", "weyl-scan", "fd-check", "random",
];

const STATUSES: [(&str, u64); 4] = [
    ("ok", 0),
    ("invalid_input", 1),
    ("numerical_failure", 2),
    ("verification_failed", 3),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Versions {
    pub tool: String,
    pub schema: String,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            tool: env!("CARGO_PKG_VERSION").to_string(),
            schema: SCHEMA.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema: String,
    pub command: String,
    pub status: String,
    pub exit_code: u8,
    pub inputs: Map<String, Value>,
    pub outputs: Value,
    pub versions: Versions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<BTreeMap<String, f64>>,
}

impl RunReport {
    pub fn new(command: &str, inputs: Map<String, Value>) -> Self {
        RunReport {
            schema: SCHEMA.to_string(),
            command: command.to_string(),
            status: "ok".to_string(),
            exit_code: 0,
            inputs,
            outputs: Value::Object(Map::new()),
            versions: Versions::default(),
            timing: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report values are always serialisable");
        s.push('\n');
        s
    }
}

/// Checks a parsed document against schema `cqf-report/1`; returns every
/// problem found.
pub fn validate(doc: &Value) -> Result<(), Vec<String>> {
    let mut errs = Vec::new();
    let Some(obj) = doc.as_object() else {
        return Err(vec!["report is not a JSON object".to_string()]);
    };
    const KEYS: [&str; 8] = [
        "schema", "command", "status", "exit_code", "inputs", "outputs", "versions", "timing",
    ];
    for key in obj.keys() {
        if !KEYS.contains(&key.as_str()) {
            errs.push(format!("unknown key {key:?}"));
        }
    }
    for key in &KEYS[..7] {
        if !obj.contains_key(*key) {
            errs.push(format!("missing key {key:?}"));
        }
    }
    if obj.get("schema").and_then(Value::as_str) != Some(SCHEMA) {
        errs.push(format!("schema must be {SCHEMA:?}"));
    }
    match obj.get("command").and_then(Value::as_str) {
        Some(c) if COMMANDS.contains(&c) => {}
        _ => errs.push("command must name a subcommand".to_string()),
    }
    let status = obj.get("status").and_then(Value::as_str);
    let code = obj.get("exit_code").and_then(Value::as_u64);
    match STATUSES.iter().find(|(s, _)| Some(*s) == status) {
        None => errs.push("status is not a known value".to_string()),
        Some((_, expected)) if code != Some(*expected) => {
            errs.push(format!("exit_code must be {expected} for status {:?}", status.unwrap()))
        }
        Some(_) => {}
    }
    for key in ["inputs", "outputs"] {
        if obj.get(key).is_some_and(|v| !v.is_object()) {
            errs.push(format!("{key} must be an object"));
        }
    }
    if status.is_some_and(|s| s != "ok")
        && obj.get("outputs").and_then(|o| o.get("error")).is_none()
        && obj.get("command").and_then(Value::as_str) != Some("validate")
    {
        errs.push("a failed run must carry outputs.error".to_string());
    }
    match obj.get("versions").and_then(Value::as_object) {
        Some(v) => {
            let ok = v.len() == 2
                && v.get("tool").is_some_and(Value::is_string)
                && v.get("schema").and_then(Value::as_str) == Some(SCHEMA);
            if !ok {
                errs.push("versions must be {tool: string, schema: schema id}".to_string());
            }
        }
        None => errs.push("versions must be an object".to_string()),
    }
    if let Some(t) = obj.get("timing") {
        let ok = t
            .as_object()
            .is_some_and(|m| m.values().all(|v| v.as_f64().is_some_and(|x| x >= 0.0)));
        if !ok {
            errs.push("timing must map phase names to non-negative seconds".to_string());
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

/// Wall-clock seconds per named phase.
#[derive(Debug, Default)]
pub struct Timings {
    phases: BTreeMap<String, f64>,
}

impl Timings {
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.phases.entry(phase.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }

    pub fn into_map(self) -> BTreeMap<String, f64> {
        self.phases
    }
}
