//! Fixed float rendering for reproducible text output.

/// Rounds to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Renders `x` with at most 12 significant digits, shortest form.
pub fn fmt_num(x: f64) -> String {
    let r = round_sig(x);
    if r == 0.0 {
        "0".to_string()
    } else if r.abs() < 1e-4 || r.abs() >= 1e16 {
        // Debug switches to exponent notation at these magnitudes.
        format!("{r:?}")
    } else {
        format!("{r}")
    }
}

/// Serde adapter for `#[serde(serialize_with = ...)]` on `f64` fields.
pub fn ser_f64<S: serde::Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig(*x))
}

pub fn ser_vec_f64<S: serde::Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|x| round_sig(*x)))
}
