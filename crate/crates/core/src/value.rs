use alloc::string::{String, ToString};
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

/// A single observed value. Missing values are represented as `None` around
/// a `Scalar`, never as a variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Boolean(bool),
    Text(String),
}

impl Scalar {
    pub fn dtype(&self) -> DType {
        match self {
            Scalar::Number(_) => DType::Number,
            Scalar::Boolean(_) => DType::Boolean,
            Scalar::Text(_) => DType::Category,
        }
    }

    /// Numeric view; booleans coerce to 0/1.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Number(x) => Some(*x),
            Scalar::Boolean(b) => Some(if *b { 1.0 } else { 0.0 }),
            Scalar::Text(_) => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Scalar::Boolean(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Truthiness used by `any`/`all`: booleans by value, numbers when
    /// nonzero, categories always.
    pub fn truthy(&self) -> bool {
        match self {
            Scalar::Boolean(b) => *b,
            Scalar::Number(x) => *x != 0.0,
            Scalar::Text(_) => true,
        }
    }

    /// Total order within one dtype (numbers by `total_cmp`, text
    /// lexicographically, `false < true`). Cross-dtype comparisons order by
    /// dtype.
    pub fn total_cmp(&self, other: &Scalar) -> Ordering {
        match (self, other) {
            (Scalar::Number(a), Scalar::Number(b)) => a.total_cmp(b),
            (Scalar::Boolean(a), Scalar::Boolean(b)) => a.cmp(b),
            (Scalar::Text(a), Scalar::Text(b)) => a.cmp(b),
            (a, b) => a.dtype().cmp(&b.dtype()),
        }
    }

    /// Human-readable label, used for category names and exports.
    pub fn label(&self) -> String {
        match self {
            Scalar::Number(x) => format_number(*x),
            Scalar::Boolean(b) => b.to_string(),
            Scalar::Text(s) => s.clone(),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Number,
    Boolean,
    Category,
}

impl DType {
    pub fn name(self) -> &'static str {
        match self {
            DType::Number => "number",
            DType::Boolean => "boolean",
            DType::Category => "category",
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Unit in which a dataset records its timestamps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    #[default]
    Seconds,
    Minutes,
    Hours,
    Days,
}

impl TimeUnit {
    pub fn seconds(self) -> f64 {
        match self {
            TimeUnit::Seconds => 1.0,
            TimeUnit::Minutes => 60.0,
            TimeUnit::Hours => 3600.0,
            TimeUnit::Days => 86400.0,
        }
    }
}

/// Unit of a duration literal such as `30 days`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationUnit {
    Second,
    Minute,
    Hour,
    Day,
    Week,
    Year,
}

impl DurationUnit {
    pub fn seconds(self) -> f64 {
        match self {
            DurationUnit::Second => 1.0,
            DurationUnit::Minute => 60.0,
            DurationUnit::Hour => 3600.0,
            DurationUnit::Day => 86400.0,
            DurationUnit::Week => 7.0 * 86400.0,
            DurationUnit::Year => 365.25 * 86400.0,
        }
    }

    /// Length of one unit expressed in the dataset's time unit.
    pub fn in_time_unit(self, unit: TimeUnit) -> f64 {
        self.seconds() / unit.seconds()
    }

    pub fn singular(self) -> &'static str {
        match self {
            DurationUnit::Second => "second",
            DurationUnit::Minute => "minute",
            DurationUnit::Hour => "hour",
            DurationUnit::Day => "day",
            DurationUnit::Week => "week",
            DurationUnit::Year => "year",
        }
    }

    pub fn plural(self) -> &'static str {
        match self {
            DurationUnit::Second => "seconds",
            DurationUnit::Minute => "minutes",
            DurationUnit::Hour => "hours",
            DurationUnit::Day => "days",
            DurationUnit::Week => "weeks",
            DurationUnit::Year => "years",
        }
    }

    pub fn from_word(word: &str) -> Option<DurationUnit> {
        Some(match word {
            "second" | "seconds" => DurationUnit::Second,
            "minute" | "minutes" => DurationUnit::Minute,
            "hour" | "hours" => DurationUnit::Hour,
            "day" | "days" => DurationUnit::Day,
            "week" | "weeks" => DurationUnit::Week,
            "year" | "years" => DurationUnit::Year,
            _ => return None,
        })
    }

    pub const ALL: [DurationUnit; 6] = [
        DurationUnit::Second,
        DurationUnit::Minute,
        DurationUnit::Hour,
        DurationUnit::Day,
        DurationUnit::Week,
        DurationUnit::Year,
    ];
}

/// Shortest round-trip decimal form; integers print without a fraction.
pub fn format_number(x: f64) -> String {
    let mut s = alloc::format!("{}", x);
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Compact label for bin edges: at most four decimals, trailing zeros
/// trimmed.
pub fn format_edge(x: f64) -> String {
    if x == f64::INFINITY {
        return "inf".into();
    }
    if x == f64::NEG_INFINITY {
        return "-inf".into();
    }
    let mut s = alloc::format!("{:.4}", x);
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Parse a numeric cell. Non-finite spellings are not numbers.
pub fn parse_number(text: &str) -> Option<f64> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    let first = t.as_bytes()[0];
    if !(first.is_ascii_digit() || first == b'-' || first == b'+' || first == b'.') {
        return None;
    }
    t.parse::<f64>().ok().filter(|x| x.is_finite())
}

pub fn parse_boolean(text: &str) -> Option<bool> {
    match text.trim() {
        "true" | "TRUE" | "True" | "1" => Some(true),
        "false" | "FALSE" | "False" | "0" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_through_display() {
        for x in [0.1, 3.0, 1e21, 123456.789, 5e-324] {
            assert_eq!(parse_number(&format_number(x)), Some(x));
        }
        assert_eq!(parse_number("NaN"), None);
        assert_eq!(parse_number("inf"), None);
    }

    #[test]
    fn edges_are_trimmed() {
        assert_eq!(format_edge(3.6666666), "3.6667");
        assert_eq!(format_edge(40.0), "40");
        assert_eq!(format_edge(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn duration_conversion() {
        assert_eq!(DurationUnit::Day.in_time_unit(TimeUnit::Hours), 24.0);
        assert_eq!(DurationUnit::Year.in_time_unit(TimeUnit::Hours), 8766.0);
    }
}
