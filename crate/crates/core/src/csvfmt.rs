//! Number formatting shared by every CSV writer: 17 significant digits in
//! scientific notation, which round-trips any `f64` exactly.

/// Formats `v` with 17 significant digits (`inf`, `-inf` and `nan` spelled out).
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_owned()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_owned()
    } else {
        format!("{v:.16e}")
    }
}
