//! Deterministic JSON output: every float is rounded to 9 significant
//! digits before serialization, so identical runs print identical bytes.

use serde_json::Value;

fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn round_value(value: &mut Value) {
    match value {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    if let Some(rounded) = serde_json::Number::from_f64(round_sig9(f)) {
                        *value = Value::Number(rounded);
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

pub fn to_string(value: &Value) -> String {
    let mut v = value.clone();
    round_value(&mut v);
    serde_json::to_string(&v).expect("JSON serializes")
}

pub fn to_string_pretty(value: &Value) -> String {
    let mut v = value.clone();
    round_value(&mut v);
    serde_json::to_string_pretty(&v).expect("JSON serializes")
}
