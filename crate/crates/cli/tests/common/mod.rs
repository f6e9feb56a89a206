#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Output {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", self.stdout))
    }
}

pub fn qvco(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_qvco")).args(args).output().expect("binary runs");
    Output {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

pub fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn config(name: &str) -> String {
    configs().join(name).to_str().unwrap().to_string()
}

pub fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

pub fn value(doc: &Value, path: &str) -> f64 {
    let mut cur = doc;
    for key in path.split('/') {
        cur = match key.parse::<usize>() {
            Ok(i) => &cur[i],
            Err(_) => &cur[key],
        };
    }
    cur["value"].as_f64().unwrap_or_else(|| panic!("no quantity at {path}: {cur}"))
}

/// Numeric fields not wrapped in `{value, unit}`.
pub fn bare_numbers(v: &Value) -> Vec<String> {
    fn walk(v: &Value, path: String, out: &mut Vec<String>) {
        match v {
            Value::Number(_) => out.push(path),
            Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| walk(x, format!("{path}/{i}"), out)),
            Value::Object(m) => {
                let quantity = m.len() == 2
                    && m.get("unit").is_some_and(Value::is_string)
                    && m.get("value").is_some_and(|x| x.is_number() || x.is_null());
                if !quantity {
                    m.iter().for_each(|(k, x)| walk(x, format!("{path}/{k}"), out));
                }
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(v, String::new(), &mut out);
    out
}
