//! Locale-independent, fixed-width number formatting for output files.

/// Scientific notation with 17 significant digits; `.` decimal separator.
///
/// Round-trips every finite `f64` exactly, so identical inputs produce
/// byte-identical files.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A JSON number carrying the same text as [`fmt_f64`], or `null` when the
/// value is not finite.
pub fn json_f64(v: f64) -> serde_json::Value {
    if !v.is_finite() {
        return serde_json::Value::Null;
    }
    fmt_f64(v)
        .parse::<serde_json::Number>()
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}
