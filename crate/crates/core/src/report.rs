//! Verification reports: named residual checks with pass/fail against a
//! tolerance, serialized as the single JSON report format.

use serde::{Deserialize, Serialize};

use crate::linalg::RankPolicy;

/// Default tolerances. `structural` covers unitarity/projection/orthonormality
/// checks, `identity` the operator identities, `equivalence` intertwiner
/// residuals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub structural: f64,
    pub identity: f64,
    pub equivalence: f64,
    pub rank: RankPolicy,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { structural: 1e-10, identity: 1e-8, equivalence: 1e-8, rank: RankPolicy::default() }
    }
}

impl Tolerances {
    /// Override every residual tolerance with one value.
    pub fn uniform(tol: f64) -> Self {
        Tolerances { structural: tol, identity: tol, equivalence: tol, ..Default::default() }
    }
}

/// The set of inputs on which a check was evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    /// Exclusive per-variable degree bound of the test inputs.
    pub degree_bound: Vec<usize>,
    /// Dimension of the test space (domain intersected with the degree box).
    pub dim: usize,
}

impl Window {
    pub fn new(degree_bound: Vec<usize>, dim: usize) -> Self {
        Window { degree_bound, dim }
    }

    /// Window for checks on finite matrices (no truncation involved).
    pub fn exact(dim: usize) -> Self {
        Window { degree_bound: vec![], dim }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Which identity or condition the check realizes.
    pub anchor: String,
    pub residual: f64,
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rank_bound: Option<usize>,
    /// Norm of coefficients that left the grid while evaluating the check.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub truncation_loss: Option<f64>,
    pub window: Window,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, anchor: impl Into<String>, residual: f64, tol: f64, window: Window) -> Self {
        let pass = residual.is_finite() && residual <= tol;
        Check {
            name: name.into(),
            anchor: anchor.into(),
            residual,
            tol,
            rank: None,
            rank_bound: None,
            truncation_loss: None,
            window,
            pass,
        }
    }

    /// Attach a rank and its bound; the check then also requires `rank <= bound`.
    pub fn with_rank(mut self, rank: usize, bound: usize) -> Self {
        self.rank = Some(rank);
        self.rank_bound = Some(bound);
        self.pass = self.pass && rank <= bound;
        self
    }

    /// Integer equality check (`residual` is `|found - expected|`).
    pub fn integer(name: impl Into<String>, anchor: impl Into<String>, found: usize, expected: usize) -> Self {
        let diff = (found as f64 - expected as f64).abs();
        Check::new(name, anchor, diff, 0.0, Window::exact(found))
    }

    pub fn with_loss(mut self, loss: f64) -> Self {
        self.truncation_loss = Some(loss);
        self
    }

    /// A check that records a boolean outcome.
    pub fn flag(name: impl Into<String>, anchor: impl Into<String>, ok: bool) -> Self {
        Check::new(name, anchor, if ok { 0.0 } else { 1.0 }, 0.0, Window::exact(0))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub trunc: Vec<usize>,
    pub tol: f64,
    pub seed: u64,
    pub mode: String,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub environment: Option<Environment>,
}

impl VerificationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.checks.extend(other.checks);
    }

    /// Append `other` with every check name prefixed by `prefix.`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: VerificationReport) {
        for mut c in other.checks {
            c.name = format!("{prefix}.{}", c.name);
            self.checks.push(c);
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Largest residual among checks whose name starts with `prefix`.
    pub fn max_residual(&self, prefix: &str) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.name.starts_with(prefix))
            .map(|c| c.residual)
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable rendering, one line per check.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let rank = match (c.rank, c.rank_bound) {
                (Some(r), Some(b)) => format!(" rank {r}<={b}"),
                _ => String::new(),
            };
            out.push_str(&format!(
                "{} {:<48} residual {:.3e} (tol {:.1e}){} window dim {}\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.residual,
                c.tol,
                rank,
                c.window.dim
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_bound_participates_in_pass() {
        let c = Check::new("x", "a", 0.0, 1e-8, Window::exact(3)).with_rank(3, 2);
        assert!(!c.pass);
        let c = Check::new("x", "a", 0.0, 1e-8, Window::exact(3)).with_rank(2, 2);
        assert!(c.pass);
    }

    #[test]
    fn nan_residual_fails() {
        assert!(!Check::new("x", "a", f64::NAN, 1.0, Window::exact(0)).pass);
    }

    #[test]
    fn report_roundtrips_through_json() {
        let mut r = VerificationReport::new();
        r.push(Check::integer("codim", "codimension", 2, 2));
        let back: VerificationReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
