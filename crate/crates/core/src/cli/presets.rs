//! Named desk-scale experiment suites. Each suite checks one or more
//! numbered acceptance criteria and reports a verdict per criterion.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use super::report::{Check, Comparison, CriterionOutcome, Summary};
use crate::attacks::{
    tune_lambda, DelInfExm, DelInfIns, DelInsRec, DelLblRec, DistanceMetric, InferenceAttacker, LabelMassDi, MiMode,
    MiReduction, NGramDiffOptions, NGramRec, PruneMode, RecToInf, ReconstructionAttacker, SingleOracleMajority,
    SingleOracleSide, TauPolicy,
};
use crate::compliance::{di_env_adapter, run_compliance, Behaviour, CoinEnv, ComplianceConfig};
use crate::data::{DataSpec, DatasetDistribution, LabelMode};
use crate::error::{AuditError, Result};
use crate::games::{
    mean_and_se, run_deletion_inference, run_deletion_inference_many, run_known_instance, run_reconstruction,
    run_reconstruction_many, GameConfig, InferenceRun, RecRun,
};
use crate::learners::{voronoi_agreement, LearnerSpec};
use crate::rng::{derive_seed, distinct_pair, rng_for};
use crate::types::{Instance, LossKind};
use crate::unlearning::loss_increases;

pub struct PresetInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub criteria: &'static [u32],
}

pub const PRESETS: &[PresetInfo] = &[
    PresetInfo { name: "table2", description: "loss-increase and prediction-change inference against regression learners", criteria: &[1] },
    PresetInfo { name: "table3", description: "inference against classifiers, and the membership-inference reduction baseline", criteria: &[2, 11] },
    PresetInfo { name: "table4", description: "n-gram sentence reconstruction on the bundled corpus", criteria: &[6] },
    PresetInfo { name: "table5", description: "deleted-label reconstruction against classifiers", criteria: &[7] },
    PresetInfo { name: "table6", description: "known-instance label reconstruction with a tuned extrapolation factor", criteria: &[8] },
    PresetInfo { name: "lemma34", description: "loss-increase inequalities for least squares", criteria: &[3] },
    PresetInfo { name: "lemma44", description: "exhaustive Voronoi-cell agreement check on {0,1}^6", criteria: &[4] },
    PresetInfo { name: "thm42", description: "instance reconstruction and its conversion to inference", criteria: &[5, 9] },
    PresetInfo { name: "thm52", description: "deletion-compliance advantage of a wrapped inference attacker", criteria: &[10] },
    PresetInfo { name: "sanity", description: "every attack against a learner that ignores its data", criteria: &[12] },
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PresetOptions {
    pub seed: u64,
    /// Replaces every trial count in the suite; meant for smoke runs.
    pub trials: Option<usize>,
}

impl Default for PresetOptions {
    fn default() -> Self {
        PresetOptions { seed: DEFAULT_SEED, trials: None }
    }
}

pub const DEFAULT_SEED: u64 = 2022;

#[derive(Clone, Debug)]
pub struct PresetRun {
    pub preset: String,
    pub criteria: Vec<CriterionOutcome>,
    pub results: Vec<Summary>,
}

pub fn find_preset(name: &str) -> Result<&'static PresetInfo> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| AuditError::UnknownPreset(name.into()))
}

pub fn run_preset(name: &str, opts: PresetOptions) -> Result<PresetRun> {
    let info = find_preset(name)?;
    let mut criteria = Vec::new();
    let mut results = Vec::new();
    for &c in info.criteria {
        let (o, s) = run_criterion(c, opts)?;
        criteria.push(o);
        results.extend(s);
    }
    Ok(PresetRun { preset: name.into(), criteria, results })
}

/// Runs one numbered criterion on its own.
pub fn run_criterion(n: u32, opts: PresetOptions) -> Result<(CriterionOutcome, Vec<Summary>)> {
    let ctx = Ctx { opts, seed: derive_seed(opts.seed, n as u64, "criterion") };
    let start = Instant::now();
    let (title, budget, checks, summaries) = match n {
        1 => ctx.regression_inference()?,
        2 => ctx.classifier_inference()?,
        3 => ctx.loss_increase_inequalities()?,
        4 => ctx.voronoi_agreement()?,
        5 => ctx.instance_reconstruction()?,
        6 => ctx.sentence_reconstruction()?,
        7 => ctx.label_reconstruction()?,
        8 => ctx.known_instance()?,
        9 => ctx.reconstruction_to_inference()?,
        10 => ctx.compliance_advantage()?,
        11 => ctx.membership_baseline()?,
        12 => ctx.constant_learner()?,
        other => return Err(AuditError::InvalidArgument(format!("no criterion {other}"))),
    };
    Ok((CriterionOutcome::new(n, title, checks, start.elapsed().as_secs_f64(), budget), summaries))
}

type Outcome = (&'static str, f64, Vec<Check>, Vec<Summary>);

pub const BLOB_SPREAD: f64 = 1.0;
pub const KNN_K: usize = 5;

fn blobs(n: usize) -> Result<DatasetDistribution> {
    DatasetDistribution::new(DataSpec::GaussianBlobs { n, d: 4, classes: 3, spread: BLOB_SPREAD }, 0)
}

fn linear() -> Result<DatasetDistribution> {
    DatasetDistribution::new(DataSpec::LinearRegression { n: 450, d: 13, noise_sigma: 0.1 }, 0)
}

fn singletons() -> Result<DatasetDistribution> {
    DatasetDistribution::new(DataSpec::UniformHypercube { n: 16, d: 20, label_mode: LabelMode::Singleton }, 0)
}

fn repeated_labels() -> Result<DatasetDistribution> {
    DatasetDistribution::new(DataSpec::UniformHypercube { n: 140, d: 20, label_mode: LabelMode::KClasses(30) }, 0)
}

fn corpus() -> Result<DatasetDistribution> {
    DatasetDistribution::new(DataSpec::CorpusFile { path: None, n: None }, 0)
}

fn classifiers() -> [(&'static str, LearnerSpec); 3] {
    [
        ("logistic", LearnerSpec::logistic_default()),
        ("tree", LearnerSpec::DecisionTree),
        ("knn", LearnerSpec::Knn { k: KNN_K }),
    ]
}

fn inference_summaries(runs: &[InferenceRun]) -> Vec<Summary> {
    runs.iter().map(Summary::from).collect()
}

/// `|estimate − 0.5|` against the half-width of its interval.
fn coin_check(label: &str, r: &InferenceRun) -> Check {
    let s = &r.stats;
    Check::new(format!("{label} |p-0.5|"), (s.estimate - 0.5).abs(), Comparison::AtMost, (s.ci_high - s.ci_low) / 2.0)
}

/// Mean of `control − distance` over trials with a control, and its SE.
fn lift_over_control(r: &RecRun) -> (f64, f64) {
    let diffs: Vec<f64> = r.records.iter().filter_map(|x| x.control_distance.map(|c| c - x.distance)).collect();
    mean_and_se(&diffs)
}

struct Ctx {
    opts: PresetOptions,
    seed: u64,
}

impl Ctx {
    fn trials(&self, n: usize) -> usize {
        self.opts.trials.unwrap_or(n)
    }

    fn game(&self, learner: LearnerSpec, data: DatasetDistribution, trials: usize) -> GameConfig {
        GameConfig::new(learner, data, self.trials(trials), self.seed)
    }

    fn regression_inference(&self) -> Result<Outcome> {
        let exm = DelInfExm { loss: LossKind::Squared };
        let ins = DelInfIns::default();
        let ols = run_deletion_inference_many(&self.game(LearnerSpec::Ols, linear()?, 1000), &[&exm, &ins])?;
        let tree = run_deletion_inference_many(&self.game(LearnerSpec::DecisionTree, linear()?, 1000), &[&exm, &ins])?;
        let tree_blobs = run_deletion_inference(
            &self.game(LearnerSpec::DecisionTree, blobs(135)?, 1000),
            &DelInfExm { loss: LossKind::NegLogLikelihood },
        )?;
        let checks = vec![
            Check::new("ols exm", ols[0].stats.estimate, Comparison::AtLeast, 0.95),
            Check::new("tree exm (regression)", tree[0].stats.estimate, Comparison::AtLeast, 0.99),
            Check::new("tree exm (blobs)", tree_blobs.stats.estimate, Comparison::AtLeast, 0.99),
        ];
        let mut s = inference_summaries(&ols);
        s.extend(inference_summaries(&tree));
        s.push(Summary::from(&tree_blobs));
        Ok(("regression inference", 120.0, checks, s))
    }

    fn classifier_inference(&self) -> Result<Outcome> {
        let exm = DelInfExm { loss: LossKind::NegLogLikelihood };
        let ins = DelInfIns::default();
        let mut checks = Vec::new();
        let mut s = Vec::new();
        for (name, learner) in classifiers() {
            let r = run_deletion_inference_many(&self.game(learner, blobs(135)?, 1000), &[&exm, &ins])?;
            let (e, i) = (r[0].stats.estimate, r[1].stats.estimate);
            match name {
                "logistic" => checks.push(Check::new("logistic exm", e, Comparison::AtLeast, 0.80)),
                "tree" => checks.push(Check::new("tree exm", e, Comparison::AtLeast, 0.99)),
                _ => {}
            }
            checks.push(Check::new(format!("{name} ins"), i, Comparison::AtLeast, e - 0.15));
            s.extend(inference_summaries(&r));
        }
        Ok(("classifier inference", 180.0, checks, s))
    }

    fn membership_baseline(&self) -> Result<Outcome> {
        let mut cfg = self.game(LearnerSpec::logistic_default(), blobs(135)?, 1000);
        cfg.aux_size = 135;
        let exm = DelInfExm { loss: LossKind::NegLogLikelihood };
        let mi = MiReduction { loss: LossKind::NegLogLikelihood, tau: TauPolicy::HoldoutMedian, mode: MiMode::Label };
        let r = run_deletion_inference_many(&cfg, &[&exm, &mi])?;
        let gap = r[0].stats.estimate - r[1].stats.estimate;
        Ok(("direct inference vs membership reduction", 180.0, vec![Check::new("exm - mi", gap, Comparison::AtLeast, 0.05)], inference_summaries(&r)))
    }

    fn loss_increase_inequalities(&self) -> Result<Outcome> {
        let data = DatasetDistribution::new(DataSpec::LinearRegression { n: 30, d: 5, noise_sigma: 0.5 }, 0)?;
        let draws = self.trials(200);
        let deltas = (0..draws as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_for(self.seed, t, "lemma-data");
                let s = data.sample(&mut rng)?;
                let i = rng.random_range(0..s.len());
                Ok((s.len(), loss_increases(&LearnerSpec::Ols, &s, i, LossKind::Squared, derive_seed(self.seed, t, "lemma"))?))
            })
            .collect::<Result<Vec<_>>>()?;
        let rest_violations = deltas.iter().filter(|(_, d)| d.remaining_mean > 1e-9).count();
        let own_violations =
            deltas.iter().filter(|(n, d)| d.deleted < -((*n - 1) as f64) * d.remaining_mean - 1e-9).count();
        let checks = vec![
            Check::new("remaining-loss violations", rest_violations as f64, Comparison::AtMost, 0.0),
            Check::new("deleted-loss violations", own_violations as f64, Comparison::AtMost, 0.0),
        ];
        Ok(("least-squares loss increases", 30.0, checks, Vec::new()))
    }

    fn voronoi_agreement(&self) -> Result<Outcome> {
        let data = DatasetDistribution::new(DataSpec::UniformHypercube { n: 8, d: 6, label_mode: LabelMode::Singleton }, 0)?;
        let mut violations = 0usize;
        let mut worst = f64::INFINITY;
        for t in 0..8 {
            let s = data.sample(&mut rng_for(self.seed, t, "lemma-data"))?;
            let pts: Vec<_> = s
                .examples()
                .iter()
                .map(|e| match &e.instance {
                    Instance::Binary(b) => b.clone(),
                    _ => unreachable!("hypercube data is binary"),
                })
                .collect();
            for row in voronoi_agreement(&pts)? {
                for p in row {
                    worst = worst.min(p);
                    violations += (p < 0.5) as usize;
                }
            }
        }
        let checks = vec![
            Check::new("cells below 1/2", violations as f64, Comparison::AtMost, 0.0),
            Check::new("smallest agreement", worst, Comparison::AtLeast, 0.5),
        ];
        Ok(("Voronoi-cell agreement", 30.0, checks, Vec::new()))
    }

    fn instance_reconstruction(&self) -> Result<Outcome> {
        let mut cfg = self.game(LearnerSpec::Knn { k: 1 }, singletons()?, 100);
        cfg.aux_size = 2000;
        cfg.eps = 1.0;
        let single = run_reconstruction(&cfg, &DelInsRec)?;

        let mut cfg = self.game(LearnerSpec::Knn { k: 1 }, repeated_labels()?, 100);
        cfg.aux_size = 2000;
        cfg.reveal_label = true;
        let before = SingleOracleMajority { side: SingleOracleSide::Before };
        let after = SingleOracleMajority { side: SingleOracleSide::After };
        let attackers: [&dyn ReconstructionAttacker; 3] = [&DelInsRec, &before, &after];
        let runs = run_reconstruction_many(&cfg, &attackers)?;
        let d = 20.0;
        let mut checks = vec![
            Check::new("singleton within 1 bit", single.stats.rho_at_eps, Comparison::AtLeast, 0.95),
            Check::new("two-oracle bit accuracy", 1.0 - runs[0].stats.mean_distance / d, Comparison::Above, 0.80),
        ];
        for (r, name) in runs[1..].iter().zip(["before-only", "after-only"]) {
            let (lift, se) = lift_over_control(r);
            checks.push(Check::new(format!("{name} lift over chance"), lift / d, Comparison::AtMost, 3.0 * se / d));
        }
        let mut s = vec![Summary::from(&single)];
        s.extend(runs.iter().map(Summary::from));
        Ok(("instance reconstruction", 120.0, checks, s))
    }

    fn reconstruction_to_inference(&self) -> Result<Outcome> {
        let trials = self.trials(200);
        let mut cfg = self.game(LearnerSpec::Knn { k: 1 }, singletons()?, trials);
        cfg.aux_size = 2000;
        cfg.eps = 1.0;
        let eps = 1.0;
        let rec = run_reconstruction(&cfg, &DelInsRec)?;
        let inf = run_deletion_inference(&cfg, &RecToInf { rec: Box::new(DelInsRec), metric: DistanceMetric::Hamming, eps })?;
        // collision rate Pr[dis(e0, e1) <= 2 eps] over fresh challenge pairs
        let data = singletons()?;
        let draws = 2000u64;
        let hits = (0..draws)
            .into_par_iter()
            .map(|t| -> Result<bool> {
                let mut rng = rng_for(self.seed, t, "collision");
                let s = data.sample(&mut rng)?;
                let (i, j) = distinct_pair(&mut rng, s.len());
                Ok(DistanceMetric::Hamming.examples(&s.examples()[i], &s.examples()[j])? <= 2.0 * eps)
            })
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .filter(|&h| h)
            .count();
        let rho = rec.stats.rho_at_eps;
        let delta = hits as f64 / draws as f64;
        let var = |p: f64, n: f64| p * (1.0 - p) / n;
        let se = (inf.stats.std_error.powi(2) + var(rho, trials as f64) + var(delta, draws as f64)).sqrt();
        let checks = vec![Check::new("inference success", inf.stats.estimate, Comparison::AtLeast, rho - delta - 3.0 * se)];
        Ok(("reconstruction to inference", 120.0, checks, vec![Summary::from(&rec), Summary::from(&inf)]))
    }

    fn sentence_reconstruction(&self) -> Result<Outcome> {
        let mut checks = Vec::new();
        let mut s = Vec::new();
        for n in [3usize, 2, 1] {
            let cfg = self.game(LearnerSpec::NGram { n }, corpus()?, 500);
            let options = NGramDiffOptions { prune: PruneMode::Always, ..Default::default() };
            let r = run_reconstruction(&cfg, &NGramRec { n, options })?;
            let f1 = r.stats.f1_mean.unwrap_or(0.0);
            match n {
                3 => {
                    checks.push(Check::new("trigram exact", r.stats.exact_match, Comparison::AtLeast, 0.90));
                    checks.push(Check::new("trigram f1", f1, Comparison::AtLeast, 0.99));
                }
                2 => checks.push(Check::new("bigram f1", f1, Comparison::AtLeast, 0.95)),
                _ => checks.push(Check::new("unigram f1", f1, Comparison::AtLeast, 0.85)),
            }
            s.push(Summary::from(&r));
        }
        Ok(("sentence reconstruction", 300.0, checks, s))
    }

    fn label_reconstruction(&self) -> Result<Outcome> {
        let mut checks = Vec::new();
        let mut s = Vec::new();
        for (name, learner, bound) in [
            ("logistic", LearnerSpec::logistic_default(), 0.85),
            ("knn", LearnerSpec::Knn { k: KNN_K }, 0.80),
        ] {
            let mut cfg = self.game(learner, blobs(135)?, 200);
            cfg.aux_size = 135;
            let r = run_reconstruction(&cfg, &DelLblRec { probes: 200 })?;
            checks.push(Check::new(format!("{name} label"), r.stats.rho_at_eps, Comparison::AtLeast, bound));
            s.push(Summary::from(&r));
        }
        Ok(("label reconstruction", 120.0, checks, s))
    }

    fn known_instance(&self) -> Result<Outcome> {
        let grid: Vec<f64> = (0..=40).map(f64::from).collect();
        let lambda = tune_lambda(&LearnerSpec::Ols, &linear()?, &grid, self.trials(300), derive_seed(self.seed, 0, "tune"))?;
        let r = run_known_instance(&self.game(LearnerSpec::Ols, linear()?, 500), lambda)?;
        let ratio = r.mean_attacker / r.mean_baseline;
        Ok(("known-instance label reconstruction", 120.0, vec![Check::new("attacker / baseline", ratio, Comparison::AtMost, 0.80)], vec![Summary::from(&r)]))
    }

    fn compliance_advantage(&self) -> Result<Outcome> {
        // the tree's inference success on the classifier configuration
        let ctx2 = Ctx { opts: self.opts, seed: derive_seed(self.opts.seed, 2, "criterion") };
        let di = run_deletion_inference(
            &ctx2.game(LearnerSpec::DecisionTree, blobs(135)?, 1000),
            &DelInfExm { loss: LossKind::NegLogLikelihood },
        )?;
        let cfg = ComplianceConfig {
            learner: LearnerSpec::DecisionTree,
            n: 100,
            k: 1,
            sessions: self.trials(1000),
            seed: self.seed,
            behaviour: Behaviour::Honest,
        };
        let env = di_env_adapter(Box::new(DelInfExm { loss: LossKind::NegLogLikelihood }), blobs(100)?, 0);
        let adv = run_compliance(&cfg, &env)?;
        let null = run_compliance(&cfg, &CoinEnv)?;
        let se = (adv.stats.std_error.powi(2) + (2.0 * di.stats.std_error).powi(2)).sqrt();
        let checks = vec![
            Check::new("adapter advantage", adv.stats.advantage, Comparison::AtLeast, 2.0 * (di.stats.estimate - 0.5) - 3.0 * se),
            Check::new("null advantage", null.stats.advantage, Comparison::AtMost, null.stats.ci_width()),
        ];
        Ok(("compliance advantage", 180.0, checks, vec![Summary::from(&di), Summary::from(&adv), Summary::from(&null)]))
    }

    fn constant_learner(&self) -> Result<Outcome> {
        let c = LearnerSpec::Constant;
        let mut checks = Vec::new();
        let mut s = Vec::new();

        let mut cfg = self.game(c.clone(), blobs(135)?, 500);
        cfg.aux_size = 50;
        let exm = DelInfExm { loss: LossKind::NegLogLikelihood };
        let ins = DelInfIns::default();
        let mi_l = MiReduction { loss: LossKind::NegLogLikelihood, tau: TauPolicy::HoldoutMedian, mode: MiMode::Label };
        let mi_c = MiReduction { mode: MiMode::Confidence, ..mi_l.clone() };
        let attackers: [&dyn InferenceAttacker; 4] = [&exm, &ins, &mi_l, &mi_c];
        let runs = run_deletion_inference_many(&cfg, &attackers)?;
        for (r, name) in runs.iter().zip(["exm", "ins", "mi label", "mi confidence"]) {
            checks.push(coin_check(name, r));
        }
        s.extend(inference_summaries(&runs));

        cfg.variant.label_only = true;
        let lm = run_deletion_inference(&cfg, &LabelMassDi { probes: 50 })?;
        checks.push(coin_check("label mass", &lm));
        s.push(Summary::from(&lm));

        let reg = run_deletion_inference_many(&self.game(c.clone(), linear()?, 500), &[&DelInfExm { loss: LossKind::Squared }, &ins])?;
        checks.push(coin_check("exm regression", &reg[0]));
        checks.push(coin_check("ins regression", &reg[1]));
        s.extend(inference_summaries(&reg));

        let mut sing = self.game(c.clone(), singletons()?, 500);
        sing.aux_size = 200;
        let r2i = run_deletion_inference(&sing, &RecToInf { rec: Box::new(DelInsRec), metric: DistanceMetric::Hamming, eps: 1.0 })?;
        checks.push(coin_check("rec_to_inf", &r2i));
        s.push(Summary::from(&r2i));

        let mut rep = self.game(c.clone(), repeated_labels()?, 200);
        rep.aux_size = 500;
        let ins_rec = run_reconstruction(&rep, &DelInsRec)?;
        let (lift, se) = lift_over_control(&ins_rec);
        checks.push(Check::new("instance |lift|", lift.abs(), Comparison::AtMost, 3.0 * se));
        s.push(Summary::from(&ins_rec));

        let mut lbl = self.game(c.clone(), blobs(135)?, 200);
        lbl.aux_size = 50;
        let lr = run_reconstruction(&lbl, &DelLblRec { probes: 50 })?;
        let chance = 1.0 - 1.0 / 3.0;
        checks.push(Check::new("label |err-chance|", (lr.stats.mean_distance - chance).abs(), Comparison::AtMost, 3.0 * lr.stats.std_error));
        s.push(Summary::from(&lr));

        let ng = run_reconstruction(&self.game(c.clone(), corpus()?, 200), &NGramRec { n: 2, options: NGramDiffOptions::default() })?;
        let (lift, se) = lift_over_control(&ng);
        checks.push(Check::new("sentence |lift|", lift.abs(), Comparison::AtMost, 3.0 * se));
        s.push(Summary::from(&ng));

        let ki = run_known_instance(&self.game(c, linear()?, 200), 10.0)?;
        checks.push(Check::new("known-instance |gain|", (ki.mean_attacker - ki.mean_baseline).abs(), Comparison::AtMost, 1e-12));
        s.push(Summary::from(&ki));

        Ok(("constant learner sanity floor", 60.0, checks, s))
    }
}
