//! Reports and flat per-trial tables.
//!
//! A report is one JSON document: the schema version, tool version, the
//! resolved config (or preset name) and seed, the results, any checks with
//! their verdicts, and the wall-clock time. Everything except
//! `wall_clock_seconds` is a deterministic function of the config.

use serde::{Deserialize, Serialize};

use crate::compliance::{AdvantageStats, ComplianceRun};
use crate::games::{InferenceRun, KnownInstanceRun, RecRun, RecStats, SuccessStats};

pub const SCHEMA_VERSION: u32 = 1;

pub fn tool_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Aggregate outcome of one attacker's run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "snake_case")]
pub enum Summary {
    Inference {
        attacker: String,
        stats: SuccessStats,
    },
    Reconstruction {
        attacker: String,
        metric: String,
        stats: Box<RecStats>,
        control: Option<Box<RecStats>>,
    },
    KnownInstance {
        lambda: f64,
        mean_attacker: f64,
        mean_baseline: f64,
        se_attacker: f64,
        se_baseline: f64,
    },
    Compliance {
        env: String,
        stats: AdvantageStats,
    },
}

/// Drops the per-trial distances from a reconstruction summary; they go
/// to the flat table instead.
fn compact(mut s: RecStats) -> Box<RecStats> {
    s.distances.clear();
    Box::new(s)
}

impl Summary {
    /// The number assertions are checked against: success rate, fraction
    /// within `eps`, mean attacker distance, or advantage.
    pub fn headline(&self) -> f64 {
        match self {
            Summary::Inference { stats, .. } => stats.estimate,
            Summary::Reconstruction { stats, .. } => stats.rho_at_eps,
            Summary::KnownInstance { mean_attacker, .. } => *mean_attacker,
            Summary::Compliance { stats, .. } => stats.advantage,
        }
    }

    pub fn headline_name(&self) -> &'static str {
        match self {
            Summary::Inference { .. } => "estimate",
            Summary::Reconstruction { .. } => "rho_at_eps",
            Summary::KnownInstance { .. } => "mean_attacker",
            Summary::Compliance { .. } => "advantage",
        }
    }
}

impl From<&InferenceRun> for Summary {
    fn from(r: &InferenceRun) -> Self {
        Summary::Inference { attacker: r.attacker.clone(), stats: r.stats.clone() }
    }
}

impl From<&RecRun> for Summary {
    fn from(r: &RecRun) -> Self {
        Summary::Reconstruction {
            attacker: r.attacker.clone(),
            metric: r.metric.name().into(),
            stats: compact(r.stats.clone()),
            control: r.control.clone().map(compact),
        }
    }
}

impl From<&KnownInstanceRun> for Summary {
    fn from(r: &KnownInstanceRun) -> Self {
        Summary::KnownInstance {
            lambda: r.lambda,
            mean_attacker: r.mean_attacker,
            mean_baseline: r.mean_baseline,
            se_attacker: r.se_attacker,
            se_baseline: r.se_baseline,
        }
    }
}

impl From<&ComplianceRun> for Summary {
    fn from(r: &ComplianceRun) -> Self {
        Summary::Compliance { env: r.env.clone(), stats: r.stats.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtLeast,
    AtMost,
    Above,
}

impl Comparison {
    pub fn holds(self, measured: f64, bound: f64) -> bool {
        match self {
            Comparison::AtLeast => measured >= bound,
            Comparison::AtMost => measured <= bound,
            Comparison::Above => measured > bound,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::AtLeast => ">=",
            Comparison::AtMost => "<=",
            Comparison::Above => ">",
        }
    }
}

/// One measured quantity against its bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub measured: f64,
    pub comparison: Comparison,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(label: impl Into<String>, measured: f64, comparison: Comparison, bound: f64) -> Self {
        Check { label: label.into(), measured, comparison, bound, pass: comparison.holds(measured, bound) }
    }

    pub fn render(&self) -> String {
        format!(
            "{} {:.4} {} {:.4}{}",
            self.label,
            self.measured,
            self.comparison.symbol(),
            self.bound,
            if self.pass { "" } else { " (violated)" }
        )
    }
}

/// A group of checks with a runtime budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub criterion: u32,
    pub title: String,
    pub checks: Vec<Check>,
    pub seconds: f64,
    pub budget_seconds: f64,
    pub pass: bool,
}

impl CriterionOutcome {
    pub fn new(criterion: u32, title: impl Into<String>, checks: Vec<Check>, seconds: f64, budget_seconds: f64) -> Self {
        let pass = checks.iter().all(|c| c.pass) && seconds < budget_seconds;
        CriterionOutcome { criterion, title: title.into(), checks, seconds, budget_seconds, pass }
    }

    /// One line: verdict, title, every check, and the runtime.
    pub fn line(&self) -> String {
        let checks: Vec<String> = self.checks.iter().map(Check::render).collect();
        format!(
            "criterion {:>2} {} {}: {}; {:.1}s of {:.0}s",
            self.criterion,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            checks.join("; "),
            self.seconds,
            self.budget_seconds
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    /// `run` or `reproduce`.
    pub command: String,
    /// The resolved config as TOML, or the preset name.
    pub config: String,
    pub seed: u64,
    pub results: Vec<Summary>,
    pub checks: Vec<Check>,
    pub criteria: Vec<CriterionOutcome>,
    pub pass: bool,
    pub wall_clock_seconds: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

/// Rows of a per-trial table: a header and tab-separated records.
pub struct FlatTable {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl FlatTable {
    pub fn render(&self) -> String {
        let mut out = self.header.join("\t");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn inference(run: &InferenceRun) -> Self {
        FlatTable {
            header: vec!["trial", "attacker", "deleted", "other", "b", "guess", "tie_broken", "win", "queries_before", "queries_after", "collision"],
            rows: run
                .records
                .iter()
                .map(|r| {
                    vec![
                        r.trial.to_string(),
                        r.attacker.clone(),
                        r.deleted.to_string(),
                        r.other.map_or("fresh".into(), |o| o.to_string()),
                        r.b.to_string(),
                        r.guess.to_string(),
                        r.tie_broken.to_string(),
                        r.win.to_string(),
                        r.queries_before.to_string(),
                        r.queries_after.to_string(),
                        r.collision.to_string(),
                    ]
                })
                .collect(),
        }
    }

    pub fn reconstruction(run: &RecRun) -> Self {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        FlatTable {
            header: vec!["trial", "attacker", "deleted", "distance", "control_distance", "exact", "f1", "degenerate"],
            rows: run
                .records
                .iter()
                .map(|r| {
                    vec![
                        r.trial.to_string(),
                        r.attacker.clone(),
                        r.deleted.to_string(),
                        r.distance.to_string(),
                        opt(r.control_distance),
                        r.exact.to_string(),
                        opt(r.f1),
                        r.degenerate.to_string(),
                    ]
                })
                .collect(),
        }
    }

    pub fn known_instance(run: &KnownInstanceRun) -> Self {
        FlatTable {
            header: vec!["trial", "deleted", "label", "guess", "attacker_distance", "baseline_distance"],
            rows: run
                .records
                .iter()
                .map(|r| {
                    vec![
                        r.trial.to_string(),
                        r.deleted.to_string(),
                        r.label.to_string(),
                        r.guess.to_string(),
                        r.attacker_distance.to_string(),
                        r.baseline_distance.to_string(),
                    ]
                })
                .collect(),
        }
    }

    pub fn compliance(run: &ComplianceRun) -> Self {
        FlatTable {
            header: vec!["session", "world", "guess", "trigger_step", "env_deletions"],
            rows: run
                .outcomes
                .iter()
                .map(|o| {
                    vec![
                        o.session.to_string(),
                        o.world.to_string(),
                        o.guess.to_string(),
                        o.trigger_step.map_or(String::new(), |s| s.to_string()),
                        o.env_deletions.to_string(),
                    ]
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criterion_fails_on_time_or_check() {
        let ok = Check::new("x", 0.9, Comparison::AtLeast, 0.8);
        assert!(CriterionOutcome::new(1, "t", vec![ok.clone()], 1.0, 10.0).pass);
        assert!(!CriterionOutcome::new(1, "t", vec![ok.clone()], 11.0, 10.0).pass);
        let bad = Check::new("y", 0.9, Comparison::AtMost, 0.8);
        let c = CriterionOutcome::new(1, "t", vec![ok, bad], 1.0, 10.0);
        assert!(!c.pass);
        assert!(c.line().starts_with("criterion  1 FAIL t: x 0.9000 >= 0.8000; y 0.9000 <= 0.8000 (violated)"));
    }

    #[test]
    fn strict_bound() {
        assert!(!Comparison::Above.holds(0.8, 0.8));
        assert!(Comparison::AtLeast.holds(0.8, 0.8));
    }
}
