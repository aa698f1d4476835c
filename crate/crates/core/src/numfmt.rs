//! Number formatting shared by the JSON writers and text reports.

use serde::{Serialize, Serializer};

/// Rounds to at most nine significant decimal digits.
pub fn round_sig9(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

/// `f64` that serializes with at most nine significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sig9(pub f64);

impl Serialize for Sig9 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(round_sig9(self.0))
    }
}

/// Three decimals without the leading zero for magnitudes below one,
/// the way statistics packages print bounded scores (`.986`, `1.000`).
pub fn score3(v: f64) -> String {
    let s = format!("{v:.3}");
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else {
        s
    }
}

/// `f64` that serializes `±inf` as the strings `"+inf"`/`"-inf"` and NaN as null.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtF64(pub f64);

impl Serialize for ExtF64 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_nan() {
            s.serialize_none()
        } else if v == f64::INFINITY {
            s.serialize_str("+inf")
        } else if v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(v)
        }
    }
}

/// `serialize_with` adapter for [`ExtF64`].
pub fn serialize_ext<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    ExtF64(*v).serialize(s)
}
