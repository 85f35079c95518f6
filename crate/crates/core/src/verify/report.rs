use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Default tolerance of the ≤-checks.
pub const CHECK_TOL: f64 = 1e-9;

/// One failed inequality, with enough payload to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub instance: String,
    /// Edge-list text of the graph, or the instance JSON for SMSM checks.
    pub graph: String,
    pub params: serde_json::Value,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

/// Outcome of one check over a family: `lhs ≤ rhs + tolerance` per test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub tested: u64,
    pub violations: Vec<Violation>,
    /// Smallest rhs − lhs seen; `None` when nothing was tested.
    pub worst_slack: Option<f64>,
    /// Instances refused by a resource guard or out of the check's domain.
    pub skipped: u64,
    pub tolerance: f64,
    /// Summed counters, such as how often an inequality was tight.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counters: BTreeMap<String, u64>,
    /// Running minima, such as the worst observed approximation ratio.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub minima: BTreeMap<String, f64>,
    /// Running maxima, such as the largest observed gap.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub maxima: BTreeMap<String, f64>,
}

impl CheckReport {
    pub fn new(check: impl Into<String>) -> Self {
        Self::with_tolerance(check, CHECK_TOL)
    }

    pub fn with_tolerance(check: impl Into<String>, tolerance: f64) -> Self {
        CheckReport {
            check: check.into(),
            tested: 0,
            violations: Vec::new(),
            worst_slack: None,
            skipped: 0,
            tolerance,
            counters: BTreeMap::new(),
            minima: BTreeMap::new(),
            maxima: BTreeMap::new(),
        }
    }

    /// Records one test of `lhs ≤ rhs`; returns true if it held.
    pub fn record(
        &mut self,
        instance: &str,
        graph: impl FnOnce() -> String,
        params: impl FnOnce() -> serde_json::Value,
        lhs: f64,
        rhs: f64,
    ) -> bool {
        self.record_with(|| instance.to_string(), graph, params, lhs, rhs)
    }

    /// [`Self::record`] with the instance name built only on a violation.
    pub fn record_with(
        &mut self,
        instance: impl FnOnce() -> String,
        graph: impl FnOnce() -> String,
        params: impl FnOnce() -> serde_json::Value,
        lhs: f64,
        rhs: f64,
    ) -> bool {
        self.tested += 1;
        let slack = rhs - lhs;
        self.worst_slack = Some(self.worst_slack.map_or(slack, |w| w.min(slack)));
        let ok = lhs <= rhs + self.tolerance;
        if !ok {
            self.violations.push(Violation {
                instance: instance(),
                graph: graph(),
                params: params(),
                lhs,
                rhs,
                slack,
            });
        }
        ok
    }

    pub fn count(&mut self, key: &str, by: u64) {
        *self.counters.entry(key.to_string()).or_insert(0) += by;
    }

    pub fn note_min(&mut self, key: &str, x: f64) {
        let e = self.minima.entry(key.to_string()).or_insert(x);
        *e = e.min(x);
    }

    pub fn note_max(&mut self, key: &str, x: f64) {
        let e = self.maxima.entry(key.to_string()).or_insert(x);
        *e = e.max(x);
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Appends `other`. Associative, and order-preserving for violations.
    pub fn merge(&mut self, other: CheckReport) {
        self.tested += other.tested;
        self.skipped += other.skipped;
        self.violations.extend(other.violations);
        self.worst_slack = match (self.worst_slack, other.worst_slack) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        for (k, v) in other.counters {
            *self.counters.entry(k).or_insert(0) += v;
        }
        for (k, v) in other.minima {
            self.note_min(&k, v);
        }
        for (k, v) in other.maxima {
            self.note_max(&k, v);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let slack = self
            .worst_slack
            .map_or_else(|| "n/a".to_string(), |s| format!("{s:.3e}"));
        format!(
            "{}: tested {}, violations {}, skipped {}, worst slack {}",
            self.check,
            self.tested,
            self.violations.len(),
            self.skipped,
            slack
        )
    }
}
