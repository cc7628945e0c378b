//! JSON text with every float at 17 significant digits.

use std::fmt::Write as _;

use ocp_core::csvio::fmt_num;
use serde_json::Value;

pub fn render(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_value(out: &mut String, v: &Value, level: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&fmt_num(n.as_f64().expect("f64 number")));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            // Numeric rows stay on one line.
            if items.iter().all(|i| !i.is_array() && !i.is_object()) {
                out.push('[');
                for (k, i) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, i, level);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (k, i) in items.iter().enumerate() {
                indent(out, level + 1);
                write_value(out, i, level + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (k, (key, i)) in map.iter().enumerate() {
                indent(out, level + 1);
                out.push_str(&serde_json::to_string(key).expect("key"));
                out.push_str(": ");
                write_value(out, i, level + 1);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_keep_full_precision() {
        let v = json!({"a": 0.1, "b": [1, 2.5], "c": null, "d": "x\"y"});
        let text = render(&v);
        assert!(text.contains("\"a\": 1.0000000000000001e-1"), "{text}");
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.1));
        assert_eq!(back["b"][0].as_u64(), Some(1));
        assert_eq!(back["d"], "x\"y");
    }
}
