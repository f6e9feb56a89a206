//! Report building blocks. Every number in a report is written as
//! `{"value": .., "unit": ..}`; dimensionless values use the unit `"1"`.

use serde_json::{json, Value};
#[cfg(test)]
use serde_json::Map;

pub fn q(value: f64, unit: &str) -> Value {
    if value.is_finite() {
        json!({ "value": value, "unit": unit })
    } else {
        // JSON has no NaN; keep the unit so the field stays self-describing
        json!({ "value": Value::Null, "unit": unit })
    }
}

pub fn q_opt(value: Option<f64>, unit: &str) -> Value {
    match value {
        Some(v) => q(v, unit),
        None => json!({ "value": Value::Null, "unit": unit }),
    }
}

/// Value of a `{value, unit}` field at `path` (keys separated by '/').
pub fn get_q(doc: &Value, path: &str) -> Option<f64> {
    let mut cur = doc;
    for key in path.split('/') {
        cur = match key.parse::<usize>() {
            Ok(i) => cur.get(i)?,
            Err(_) => cur.get(key)?,
        };
    }
    cur.get("value")?.as_f64()
}

/// Names of numeric fields that are not wrapped in a quantity.
#[cfg(test)]
pub fn bare_numbers(doc: &Value) -> Vec<String> {
    fn walk(v: &Value, path: &str, out: &mut Vec<String>) {
        match v {
            Value::Number(_) => out.push(path.to_string()),
            Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    walk(x, &format!("{path}/{i}"), out);
                }
            }
            Value::Object(m) => {
                if is_quantity(m) {
                    return;
                }
                for (k, x) in m {
                    walk(x, &format!("{path}/{k}"), out);
                }
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(doc, "", &mut out);
    out
}

#[cfg(test)]
fn is_quantity(m: &Map<String, Value>) -> bool {
    m.len() == 2
        && matches!(m.get("unit"), Some(Value::String(_)))
        && matches!(m.get("value"), Some(Value::Number(_) | Value::Null))
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializing a Value cannot fail");
    s.push('\n');
    s
}
