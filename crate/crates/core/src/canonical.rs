//! Canonical, byte-stable JSON and float text.
//!
//! Objects are written with keys in byte order, no insignificant whitespace,
//! and every non-integer number rounded to six significant digits with
//! trailing zeros trimmed. Integers are written as-is.

use serde::Serialize;
use serde_json::Value;

/// Formats a float with at most six significant digits, trailing zeros
/// trimmed. Magnitudes in `[1e-6, 1e15)` are written in plain decimal,
/// everything else in exponent form (`1.5e-9`). Negative zero prints as `0`.
pub fn format_float(x: f64) -> String {
    assert!(
        x.is_finite(),
        "non-finite float cannot be formatted canonically"
    );
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if negative { "-" } else { "" };

    if !(-6..15).contains(&exp) {
        let mut m = format!("{}.{}", &digits[..1], &digits[1..]);
        trim_fraction(&mut m);
        return format!("{sign}{m}e{exp}");
    }

    let mut out = if exp >= 0 {
        let int_len = exp as usize + 1;
        if int_len >= digits.len() {
            let mut s = digits.clone();
            s.extend(std::iter::repeat_n('0', int_len - digits.len()));
            s
        } else {
            format!("{}.{}", &digits[..int_len], &digits[int_len..])
        }
    } else {
        let zeros = (-exp - 1) as usize;
        format!("0.{}{}", "0".repeat(zeros), digits)
    };
    trim_fraction(&mut out);
    format!("{sign}{out}")
}

fn trim_fraction(s: &mut String) {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
}

/// Serializes any value into canonical JSON bytes.
pub fn to_canonical_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, &mut out);
    Ok(out.into_bytes())
}

/// Canonical JSON as a `String`.
pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    to_canonical_bytes(value).map(|b| String::from_utf8(b).expect("serde_json emits UTF-8"))
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&format_float(n.as_f64().expect("finite number")));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serialization"));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key serialization"));
                out.push(':');
                write_value(&map[k], out);
            }
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn float_formatting_table() {
        let cases = [
            (0.0, "0"),
            (-0.0, "0"),
            (2.0, "2"),
            (10.0, "10"),
            (0.5, "0.5"),
            (0.18350341907227397, "0.183503"),
            (111.195_083_724_191_4, "111.195"),
            (20015.086796020572, "20015.1"),
            (-1.5, "-1.5"),
            (1234567.0, "1234570"),
            (0.000123456789, "0.000123457"),
            (0.000001, "0.000001"),
            (1.5e-9, "1.5e-9"),
            (-2.5e20, "-2.5e20"),
            (0.05, "0.05"),
            (0.9999999, "1"),
        ];
        for (x, want) in cases {
            assert_eq!(format_float(x), want, "format_float({x:e})");
        }
    }

    #[test]
    fn keys_sorted_and_compact() {
        let mut m = HashMap::new();
        m.insert("zeta", serde_json::json!([1, 2.5, "x"]));
        m.insert("alpha", serde_json::json!({"b": true, "a": null}));
        let s = to_canonical_string(&m).unwrap();
        assert_eq!(s, r#"{"alpha":{"a":null,"b":true},"zeta":[1,2.5,"x"]}"#);
    }

    #[test]
    fn integral_floats_print_without_fraction() {
        let s = to_canonical_string(&vec![3.0f64, -4.0]).unwrap();
        assert_eq!(s, "[3,-4]");
    }

    #[test]
    fn escapes_strings() {
        let s = to_canonical_string(&"a\"b\n").unwrap();
        assert_eq!(s, r#""a\"b\n""#);
    }
}
