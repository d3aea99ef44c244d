//! Named inequality assertions reported with both sides.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub relation: String,
    pub rhs: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, relation: "<=".into(), rhs, passed: lhs <= rhs, detail: String::new() }
    }

    pub fn ge(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, relation: ">=".into(), rhs, passed: lhs >= rhs, detail: String::new() }
    }

    /// `|value - target| <= tol`.
    pub fn near(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Self::le(name, (value - target).abs(), tol).with(format!("value {value:.6e}, reference {target:.6e}"))
    }

    pub fn with(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {:.6e} {} {:.6e}", self.name, self.lhs, self.relation, self.rhs)?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}
