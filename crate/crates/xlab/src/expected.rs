//! Versioned acceptance thresholds.
//!
//! Keys are `section.name = value`. Pinned entries restate fixed criteria;
//! calibrated entries are produced by `cwlab experiment all --calibrate` and
//! reviewed before commit.

use std::collections::BTreeMap;

use crate::error::{Result, XlabError};

/// The table shipped with the crate.
pub const BUNDLED: &str = include_str!("../expected.txt");

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Expected {
    values: BTreeMap<String, f64>,
}

impl Expected {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (k, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, raw) = body
                .split_once('=')
                .ok_or_else(|| XlabError::Expected(format!("line {}: expected `key = value`", k + 1)))?;
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|_| XlabError::Expected(format!("line {}: `{}` is not a number", k + 1, raw.trim())))?;
            if values.insert(key.trim().to_string(), v).is_some() {
                return Err(XlabError::Expected(format!("line {}: duplicate key `{}`", k + 1, key.trim())));
            }
        }
        Ok(Self { values })
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled table parses")
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        self.values.get(key).copied().ok_or_else(|| XlabError::Expected(format!("missing key `{key}`")))
    }

    pub fn set(&mut self, key: &str, value: f64) {
        self.values.insert(key.to_string(), value);
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

/// Rounds `x > 0` down to three significant digits.
pub fn floor_sig3(x: f64) -> f64 {
    let mag = 10f64.powi(x.abs().log10().floor() as i32 - 2);
    (x / mag).floor() * mag
}

/// Rounds `x > 0` up to three significant digits.
pub fn ceil_sig3(x: f64) -> f64 {
    let mag = 10f64.powi(x.abs().log10().floor() as i32 - 2);
    (x / mag).ceil() * mag
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_is_well_formed() {
        let e = Expected::bundled();
        assert!(e.get("bn_scaling.r2_min").is_ok());
        assert!(e.get("no.such.key").is_err());
    }

    #[test]
    fn parse_errors() {
        assert!(Expected::parse("a = 1\na = 2").is_err());
        assert!(Expected::parse("a = x").is_err());
        assert!(Expected::parse("novalue").is_err());
        assert_eq!(Expected::parse("# c\n a.b = 2.5 # note").unwrap().get("a.b").unwrap(), 2.5);
    }

    #[test]
    fn significant_digit_rounding() {
        assert!((floor_sig3(0.123456) - 0.123).abs() < 1e-15);
        assert!((ceil_sig3(0.00123456) - 0.00124).abs() < 1e-15);
    }
}
