//! Serialization helpers for exact values in reports.

use serde::Serializer;

use crate::numerics::{format_rational, Rational, Root};

pub fn ser_rational<S: Serializer>(x: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(x))
}

pub fn ser_root<S: Serializer>(x: &Root, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}
