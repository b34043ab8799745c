//! TOML experiment configuration.
//!
//! ```toml
//! [game]
//! trials = 100
//! seed = 7
//!
//! [learner]
//! kind = "decision_tree"
//!
//! [data]
//! kind = "gaussian_blobs"
//! n = 135
//! classes = 3
//! spread = 1.0
//!
//! [attacker]
//! kind = "del_inf_exm"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attacks::{
    DelInfExm, DelInfIns, DelInsRec, DelLblRec, DistanceMetric, InferenceAttacker, LabelMassDi, MiMode, MiReduction,
    NGramDiffOptions, NGramRec, RecToInf, ReconstructionAttacker, SingleOracleMajority, SingleOracleSide, TauPolicy,
};
use crate::compliance::{Behaviour, ComplianceConfig};
use crate::data::{DataSpec, DatasetDistribution};
use crate::error::{AuditError, Result};
use crate::games::{GameConfig, Variant};
use crate::learners::LearnerSpec;
use crate::types::LossKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    Inference,
    Reconstruction,
    KnownInstance,
    Compliance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    /// Inferred from the attacker when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<GameKind>,
    pub trials: usize,
    pub seed: u64,
    /// Seed of the data distribution (regression weights); defaults to 0.
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub aux_size: usize,
    #[serde(default)]
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<DistanceMetric>,
    #[serde(default)]
    pub reveal_label: bool,
    #[serde(default)]
    pub variant: Variant,
}

/// Attack selection. `kind` names the attack; the remaining keys are its
/// parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackerSpec {
    DelInfExm {
        /// Defaults to squared loss for real labels and NLL otherwise.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        loss: Option<LossKind>,
    },
    DelInfIns {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metric: Option<DistanceMetric>,
    },
    AlwaysZero,
    LabelMass {
        probes: usize,
    },
    MiReduction {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        loss: Option<LossKind>,
        #[serde(default = "default_tau")]
        tau: TauPolicy,
        #[serde(default = "default_mode")]
        mode: MiMode,
    },
    RecToInf {
        rec: Box<AttackerSpec>,
        metric: DistanceMetric,
        eps: f64,
    },
    DelInsRec,
    SingleOracleMajority {
        side: SingleOracleSide,
    },
    DelLblRec {
        probes: usize,
    },
    NgramRec {
        /// Defaults to the learner's order.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        #[serde(default)]
        options: NGramDiffOptions,
    },
    InsRevLblRec {
        /// Tuned over `grid` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
        #[serde(default = "default_grid")]
        grid: Vec<f64>,
        #[serde(default = "default_tune_trials")]
        tune_trials: usize,
    },
}

fn default_tau() -> TauPolicy {
    TauPolicy::HoldoutMedian
}
fn default_mode() -> MiMode {
    MiMode::Label
}
fn default_grid() -> Vec<f64> {
    (0..=40).map(f64::from).collect()
}
fn default_tune_trials() -> usize {
    300
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplianceSection {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub behaviour: Behaviour,
    /// `"attacker"` wraps the configured attacker; `"coin"` ignores the
    /// protocol.
    #[serde(default = "default_env")]
    pub env: String,
}

fn default_k() -> usize {
    1
}
fn default_env() -> String {
    "attacker".into()
}

impl Default for ComplianceSection {
    fn default() -> Self {
        ComplianceSection { k: default_k(), behaviour: Behaviour::default(), env: default_env() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Report,
    FlatTable,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
}

/// Bounds the headline metric must meet; a violated bound makes the run
/// exit with status 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameSection,
    pub learner: LearnerSpec,
    pub data: DataSpec,
    pub attacker: AttackerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compliance: Option<ComplianceSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, rename = "assert")]
    pub assertions: Assertions,
}

/// Anything the attacker section can build.
pub enum BuiltAttacker {
    Inference(Box<dyn InferenceAttacker>),
    Reconstruction(Box<dyn ReconstructionAttacker>),
    KnownInstance { lambda: Option<f64>, grid: Vec<f64>, tune_trials: usize },
}

impl AttackerSpec {
    pub fn game_kind(&self) -> GameKind {
        match self {
            AttackerSpec::DelInfExm { .. }
            | AttackerSpec::DelInfIns { .. }
            | AttackerSpec::AlwaysZero
            | AttackerSpec::LabelMass { .. }
            | AttackerSpec::MiReduction { .. }
            | AttackerSpec::RecToInf { .. } => GameKind::Inference,
            AttackerSpec::DelInsRec
            | AttackerSpec::SingleOracleMajority { .. }
            | AttackerSpec::DelLblRec { .. }
            | AttackerSpec::NgramRec { .. } => GameKind::Reconstruction,
            AttackerSpec::InsRevLblRec { .. } => GameKind::KnownInstance,
        }
    }

    /// `real_labels` picks the default loss of loss-based attacks.
    pub fn build(&self, learner: &LearnerSpec, real_labels: bool) -> Result<BuiltAttacker> {
        let default_loss = if real_labels { LossKind::Squared } else { LossKind::NegLogLikelihood };
        Ok(match self {
            AttackerSpec::DelInfExm { loss } => {
                BuiltAttacker::Inference(Box::new(DelInfExm { loss: loss.unwrap_or(default_loss) }))
            }
            AttackerSpec::DelInfIns { metric } => BuiltAttacker::Inference(Box::new(DelInfIns { metric: *metric })),
            AttackerSpec::AlwaysZero => BuiltAttacker::Inference(Box::new(crate::attacks::AlwaysZero)),
            AttackerSpec::LabelMass { probes } => BuiltAttacker::Inference(Box::new(LabelMassDi { probes: *probes })),
            AttackerSpec::MiReduction { loss, tau, mode } => BuiltAttacker::Inference(Box::new(MiReduction {
                loss: loss.unwrap_or(default_loss),
                tau: *tau,
                mode: *mode,
            })),
            AttackerSpec::RecToInf { rec, metric, eps } => {
                if !(*eps >= 0.0) {
                    return Err(AuditError::config("attacker.eps", "must be non-negative"));
                }
                match rec.build(learner, real_labels)? {
                    BuiltAttacker::Reconstruction(r) => {
                        BuiltAttacker::Inference(Box::new(RecToInf { rec: r, metric: *metric, eps: *eps }))
                    }
                    _ => return Err(AuditError::config("attacker.rec.kind", "must name a reconstruction attack")),
                }
            }
            AttackerSpec::DelInsRec => BuiltAttacker::Reconstruction(Box::new(DelInsRec)),
            AttackerSpec::SingleOracleMajority { side } => {
                BuiltAttacker::Reconstruction(Box::new(SingleOracleMajority { side: *side }))
            }
            AttackerSpec::DelLblRec { probes } => BuiltAttacker::Reconstruction(Box::new(DelLblRec { probes: *probes })),
            AttackerSpec::NgramRec { n, options } => {
                let n = match (n, learner) {
                    (Some(n), _) => *n,
                    (None, LearnerSpec::NGram { n }) => *n,
                    (None, _) => return Err(AuditError::config("attacker.n", "required unless the learner is an n-gram model")),
                };
                BuiltAttacker::Reconstruction(Box::new(NGramRec { n, options: *options }))
            }
            AttackerSpec::InsRevLblRec { lambda, grid, tune_trials } => {
                if lambda.is_none() && grid.is_empty() {
                    return Err(AuditError::config("attacker.grid", "must not be empty when lambda is absent"));
                }
                BuiltAttacker::KnownInstance { lambda: *lambda, grid: grid.clone(), tune_trials: *tune_trials }
            }
        })
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub output: Option<String>,
    pub format: Option<OutputFormat>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let path = e.span().map(|s| locate(text, s)).unwrap_or_default();
            AuditError::config(if path.is_empty() { "<root>".into() } else { path }, e.message().to_string())
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AuditError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.game.seed = s;
        }
        if let Some(t) = o.trials {
            self.game.trials = t;
        }
        if let Some(d) = &o.output {
            self.output.dir = Some(d.clone());
        }
        if let Some(f) = o.format {
            self.output.format = f;
        }
    }

    pub fn game_kind(&self) -> GameKind {
        self.game.kind.unwrap_or_else(|| self.attacker.game_kind())
    }

    pub fn distribution(&self) -> Result<DatasetDistribution> {
        DatasetDistribution::new(self.data.clone(), self.game.data_seed)
    }

    /// Resolves and validates the game, checking that game and attacker fit.
    pub fn game_config(&self) -> Result<GameConfig> {
        let kind = self.game_kind();
        let natural = self.attacker.game_kind();
        let fits = kind == natural || (kind == GameKind::Compliance && natural == GameKind::Inference);
        if !fits {
            return Err(AuditError::config(
                "game.kind",
                format!("{kind:?} game cannot run a {natural:?} attacker").to_lowercase(),
            ));
        }
        if kind == GameKind::Compliance && self.game.variant != Variant::default() {
            return Err(AuditError::config("game.variant", "compliance sessions play the plain game"));
        }
        let mut g = GameConfig::new(self.learner.clone(), self.distribution()?, self.game.trials, self.game.seed);
        g.variant = self.game.variant.clone();
        g.aux_size = self.game.aux_size;
        g.metric = self.game.metric;
        g.eps = self.game.eps;
        g.reveal_label = self.game.reveal_label;
        g.validate()?;
        Ok(g)
    }

    pub fn compliance_config(&self, dist: &DatasetDistribution) -> ComplianceConfig {
        let c = self.compliance.clone().unwrap_or_default();
        ComplianceConfig {
            learner: self.learner.clone(),
            n: dist.nominal_size(),
            k: c.k,
            sessions: self.game.trials,
            seed: self.game.seed,
            behaviour: c.behaviour,
        }
    }
}

/// Dotted key path of the table entry containing byte offset `span.start`.
fn locate(text: &str, span: std::ops::Range<usize>) -> String {
    let before = &text[..span.start.min(text.len())];
    let mut table = String::new();
    for line in before.lines() {
        let t = line.trim();
        if t.starts_with('[') && t.ends_with(']') {
            table = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
    }
    let key: String = text[span.start.min(text.len())..span.end.min(text.len())]
        .chars()
        .take_while(|c| c.is_alphanumeric() || *c == '_' || *c == '-')
        .collect();
    match (table.is_empty(), key.is_empty()) {
        (true, _) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[game]
trials = 100
seed = 7

[learner]
kind = "decision_tree"

[data]
kind = "gaussian_blobs"
n = 135
classes = 3
spread = 1.0

[attacker]
kind = "del_inf_exm"
"#;

    #[test]
    fn minimal_config_resolves() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.game_kind(), GameKind::Inference);
        let g = c.game_config().unwrap();
        assert_eq!((g.trials, g.seed), (100, 7));
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_named() {
        let bad = MINIMAL.replace("[learner]", "[lerner]");
        let err = ExperimentConfig::parse(&bad).unwrap_err();
        assert!(err.to_string().contains("lerner"), "{err}");
        let bad = MINIMAL.replace("seed = 7", "seed = 7\nseeed = 3");
        let AuditError::ConfigInvalid { path, .. } = ExperimentConfig::parse(&bad).unwrap_err() else { panic!() };
        assert_eq!(path, "game.seeed");
    }

    #[test]
    fn mismatched_game_and_attacker_is_rejected() {
        let c = ExperimentConfig::parse(&MINIMAL.replace("seed = 7", "seed = 7\nkind = \"reconstruction\"")).unwrap();
        assert!(matches!(c.game_config(), Err(AuditError::ConfigInvalid { .. })));
    }

    #[test]
    fn nested_reconstruction_inside_rec_to_inf() {
        let text = MINIMAL.replace(
            "kind = \"del_inf_exm\"",
            "kind = \"rec_to_inf\"\nmetric = \"hamming\"\neps = 1.0\n\n[attacker.rec]\nkind = \"del_ins_rec\"",
        );
        let c = ExperimentConfig::parse(&text).unwrap();
        assert!(matches!(c.attacker.build(&c.learner, false).unwrap(), BuiltAttacker::Inference(_)));
        let bad = text.replace("kind = \"del_ins_rec\"", "kind = \"always_zero\"");
        let c = ExperimentConfig::parse(&bad).unwrap();
        assert!(c.attacker.build(&c.learner, false).is_err());
    }

    #[test]
    fn overrides_win() {
        let mut c = ExperimentConfig::parse(MINIMAL).unwrap();
        c.apply(&Overrides { seed: Some(1), trials: Some(5), output: Some("x".into()), format: Some(OutputFormat::FlatTable) });
        assert_eq!((c.game.seed, c.game.trials, c.output.dir.as_deref()), (1, 5, Some("x")));
    }
}
