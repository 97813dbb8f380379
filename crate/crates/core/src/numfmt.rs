//! Text formatting of floats.

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}
