//! Deterministic artifact emission: 17-significant-digit floats in CSV and JSON.

use serde::Serialize;
use serde_json::{Number, Value};
use std::str::FromStr;

/// Formats a float with 17 significant digits (`d.dddddddddddddddde±x`).
pub fn fmt17(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

fn rewrite(v: Value) -> Value {
    match v {
        Value::Number(n) => {
            let s = n.to_string();
            let is_float = s.contains(['.', 'e', 'E']);
            match (is_float, n.as_f64()) {
                (true, Some(f)) if f.is_finite() => {
                    Value::Number(Number::from_str(&fmt17(f)).expect("formatted float parses"))
                }
                _ => Value::Number(n),
            }
        }
        Value::Array(a) => Value::Array(a.into_iter().map(rewrite).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, rewrite(v))).collect()),
        other => other,
    }
}

/// Serializes `value` to a JSON tree whose floats carry 17 significant digits.
/// Non-finite floats become `null`.
pub fn to_json17<T: Serialize>(value: &T) -> Value {
    rewrite(serde_json::to_value(value).unwrap_or(Value::Null))
}

pub fn to_json17_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(&to_json17(value)).unwrap_or_default();
    s.push('\n');
    s
}

/// CSV text with a mandatory header row.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Two-column `t,value` CSV of a time series.
pub fn series_csv(series: &[(f64, f64)]) -> String {
    let rows: Vec<Vec<String>> = series.iter().map(|&(t, v)| vec![fmt17(t), fmt17(v)]).collect();
    csv_table(&["t", "value"], &rows)
}

/// Parses a `t,value` CSV (header row required; blank lines ignored).
pub fn parse_series_csv(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| "empty series file".to_string())?;
    let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    if cols.len() != 2 || cols[0].parse::<f64>().is_ok() {
        return Err(format!("expected a two-column header row, got {header:?}"));
    }
    let mut out = Vec::new();
    for (no, line) in lines {
        let mut it = line.split(',');
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(format!("line {}: expected two columns", no + 1));
        };
        let t: f64 = a
            .trim()
            .parse()
            .map_err(|_| format!("line {}: bad number {a:?}", no + 1))?;
        let v: f64 = b
            .trim()
            .parse()
            .map_err(|_| format!("line {}: bad number {b:?}", no + 1))?;
        out.push((t, v));
    }
    Ok(out)
}
