//! Property tests for the library's invariants.

use proptest::prelude::*;
use rand::SeedableRng;

use unlearn_audit::attacks::{DelInfExm, GuessBit};
use unlearn_audit::compliance::{datcol_step, decode_message, encode_message, DatColPhase, DatColState, ProtocolMessage, Response};
use unlearn_audit::data::{
    gen_blobs, gen_uniform_hypercube, parse_csv, CsvLabelKind, CsvSchema, DataSpec, DatasetDistribution, LabelMode,
};
use unlearn_audit::games::{multiset_f1, run_deletion_inference, wilson_interval, GameConfig};
use unlearn_audit::learners::{predict, train, voronoi_agreement, LearnerSpec, Model, NGramModel, TreeNode};
use unlearn_audit::rng::GameRng;
use unlearn_audit::types::{evaluate_loss, BitVector, Dataset, Example, Instance, Label, LossKind, Prediction};
use unlearn_audit::unlearning::{delete_examples, loss_increases, DeletionRequest};

fn rng(seed: u64) -> GameRng {
    GameRng::seed_from_u64(seed)
}

fn regression(seed: u64, n: usize, d: usize) -> Dataset {
    unlearn_audit::data::gen_linear_regression(n, d, 0.5, seed).unwrap()
}

fn distribution() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2..6).prop_map(|v| {
        let s: f64 = v.iter().sum::<f64>() + 1e-9;
        v.iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn losses_are_non_negative(p in distribution(), y in 0usize..6, a in -1e6f64..1e6, b in -1e6f64..1e6) {
        let pred = Prediction::ClassDistribution(p);
        for kind in [LossKind::ZeroOne, LossKind::NegLogLikelihood] {
            prop_assert!(evaluate_loss(kind, &pred, &Label::Class(y)).unwrap() >= 0.0);
        }
        prop_assert!(evaluate_loss(LossKind::Squared, &Prediction::RealValue(a), &Label::Real(b)).unwrap() >= 0.0);
    }

    #[test]
    fn least_squares_loss_increases(seed in any::<u64>(), n in 16usize..60, i in any::<prop::sample::Index>()) {
        let s = regression(seed, n, 4);
        let d = loss_increases(&LearnerSpec::Ols, &s, i.index(n), LossKind::Squared, seed).unwrap();
        prop_assert!(d.remaining_mean <= 1e-9, "{d:?}");
        prop_assert!(d.deleted >= -((n - 1) as f64) * d.remaining_mean - 1e-9, "{d:?}");
    }

    #[test]
    fn tree_loss_increases_on_distinct_instances(seed in any::<u64>(), i in 0usize..24) {
        let s = gen_uniform_hypercube(24, 10, LabelMode::KClasses(3), &mut rng(seed)).unwrap();
        let mut seen = std::collections::HashSet::new();
        prop_assume!(s.examples().iter().all(|e| seen.insert(format!("{:?}", e.instance))));
        let d = loss_increases(&LearnerSpec::DecisionTree, &s, i, LossKind::ZeroOne, seed).unwrap();
        prop_assert!(d.remaining_mean <= 1e-9);
        prop_assert!(d.deleted >= -23.0 * d.remaining_mean - 1e-9);
    }

    #[test]
    fn deletion_equals_retraining(seed in any::<u64>(), i in 0usize..20) {
        let s = gen_uniform_hypercube(20, 6, LabelMode::KClasses(2), &mut rng(seed)).unwrap();
        for spec in [LearnerSpec::DecisionTree, LearnerSpec::Knn { k: 3 }, LearnerSpec::Knn { k: 1 }] {
            let deleted = delete_examples(&spec, &s, &DeletionRequest::single(i), seed).unwrap();
            let fresh = train(&spec, &s.without(&[i]).unwrap(), seed).unwrap();
            for x in 0..64u64 {
                let probe = Instance::Binary(BitVector::from_u64(x, 6));
                prop_assert_eq!(predict(&deleted.1, &probe).unwrap(), predict(&fresh, &probe).unwrap());
            }
        }
    }

    #[test]
    fn regression_deletion_equals_retraining(seed in any::<u64>(), i in 0usize..30, probes in prop::collection::vec(prop::collection::vec(-3f64..3.0, 4), 20)) {
        let s = regression(seed, 30, 4);
        for spec in [LearnerSpec::Ols, LearnerSpec::Ridge { alpha: 0.5 }, LearnerSpec::DecisionTree] {
            let deleted = delete_examples(&spec, &s, &DeletionRequest::single(i), seed).unwrap();
            let fresh = train(&spec, &s.without(&[i]).unwrap(), seed).unwrap();
            for x in &probes {
                let probe = Instance::Dense(x.clone());
                prop_assert_eq!(predict(&deleted.1, &probe).unwrap(), predict(&fresh, &probe).unwrap());
            }
        }
    }

    #[test]
    fn training_is_deterministic(seed in any::<u64>()) {
        let s = gen_blobs(40, 3, 3, 1.0, &mut rng(seed)).unwrap();
        for spec in [LearnerSpec::logistic_default(), LearnerSpec::DecisionTree, LearnerSpec::Knn { k: 5 }] {
            prop_assert_eq!(train(&spec, &s, 1).unwrap(), train(&spec, &s, 1).unwrap());
        }
    }

    #[test]
    fn gini_splits_never_raise_impurity(seed in any::<u64>()) {
        let s = gen_blobs(60, 3, 4, 1.5, &mut rng(seed)).unwrap();
        let Model::Tree(t) = train(&LearnerSpec::DecisionTree, &s, 0).unwrap() else { unreachable!() };
        for node in &t.nodes {
            if let TreeNode::Split { impurity, child_impurity, .. } = node {
                prop_assert!(child_impurity <= impurity);
            }
        }
    }

    #[test]
    fn ngram_conditionals_sum_to_one(sentences in prop::collection::vec(prop::collection::vec(2u32..9, 1..7), 1..12), n in 1usize..4) {
        let ex: Vec<Example> = sentences
            .into_iter()
            .map(|s| Example::new(Instance::Sentence(s), Label::SequenceProb(0.0)))
            .collect();
        let m = NGramModel::fit(&Dataset::new(ex, "prop").unwrap(), n).unwrap();
        let grams = m.observed(n);
        for (prefix, c) in m.observed_contexts() {
            let total: u64 = grams.iter().filter(|(g, _)| g[..n - 1] == prefix[..]).map(|(_, k)| k).sum();
            prop_assert_eq!(total, c);
        }
    }

    #[test]
    fn generators_are_deterministic(seed in any::<u64>()) {
        let a = gen_uniform_hypercube(16, 12, LabelMode::Singleton, &mut rng(seed)).unwrap();
        let b = gen_uniform_hypercube(16, 12, LabelMode::Singleton, &mut rng(seed)).unwrap();
        prop_assert_eq!(&a, &b);
        let mut labels: Vec<_> = a.examples().iter().map(|e| format!("{:?}", e.label)).collect();
        labels.sort();
        labels.dedup();
        prop_assert_eq!(labels.len(), 16);
    }

    #[test]
    fn voronoi_cells_agree_with_their_centre(seed in any::<u64>(), n in 2usize..10) {
        let s = gen_uniform_hypercube(n, 6, LabelMode::Singleton, &mut rng(seed)).unwrap();
        let pts: Vec<BitVector> = s.examples().iter().map(|e| match &e.instance {
            Instance::Binary(b) => b.clone(),
            _ => unreachable!(),
        }).collect();
        for row in voronoi_agreement(&pts).unwrap() {
            for p in row {
                prop_assert!(p >= 0.5);
            }
        }
    }

    #[test]
    fn f1_is_one_exactly_for_equal_multisets(a in prop::collection::vec(0u32..5, 0..8), b in prop::collection::vec(0u32..5, 0..8)) {
        let f = multiset_f1(&a, &b);
        prop_assert!((0.0..=1.0).contains(&f));
        let (mut x, mut y) = (a.clone(), b.clone());
        x.sort();
        y.sort();
        prop_assert_eq!(f == 1.0, x == y);
        let mut shuffled = a.clone();
        shuffled.reverse();
        prop_assert_eq!(multiset_f1(&a, &shuffled), 1.0);
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(trials in 1u64..5000, frac in 0.0f64..=1.0) {
        let wins = (frac * trials as f64).round() as u64;
        let (lo, hi) = wilson_interval(wins, trials);
        let p = wins as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn csv_normalization_round_trips(rows in prop::collection::vec((-1e3f64..1e3, -5f64..5.0, 0usize..3), 2..20)) {
        let mut text = String::from("a,b,label\n");
        for (a, b, l) in &rows {
            text.push_str(&format!("{a},{b},c{l}\n"));
        }
        let schema = CsvSchema { label_column: "label".into(), label_kind: CsvLabelKind::Class };
        let (ds, norm) = parse_csv(&text, &schema, "prop").unwrap();
        for (e, (a, b, _)) in ds.examples().iter().zip(&rows) {
            let raw = norm.denormalize(&e.instance.features().unwrap());
            prop_assert!((raw[0] - a).abs() <= 1e-9 && (raw[1] - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn protocol_messages_round_trip(bits in any::<u64>(), d in 1usize..64, y in 0usize..100, xs in prop::collection::vec(-1e300f64..1e300, 1..6)) {
        for m in [
            ProtocolMessage::Add(Example::new(Instance::Binary(BitVector::from_u64(bits, d)), Label::Class(y))),
            ProtocolMessage::Del(Example::new(Instance::Dense(xs.clone()), Label::Real(xs[0]))),
            ProtocolMessage::Eval(Instance::Dense(xs.clone())),
        ] {
            prop_assert_eq!(decode_message(&encode_message(&m)).unwrap(), m);
        }
    }

    /// No message order makes the collector answer before it is full,
    /// or honour more deletions than its budget.
    #[test]
    fn collector_protocol_is_safe(script in prop::collection::vec(0u8..3, 0..30), capacity in 2usize..5, budget in 1usize..3) {
        let spec = LearnerSpec::Knn { k: 1 };
        let mut state = DatColState::new(capacity, budget).unwrap();
        let mut adds = 0usize;
        let mut honoured = 0usize;
        for (t, op) in script.into_iter().enumerate() {
            let e = Example::new(Instance::Dense(vec![t as f64]), Label::Class(t % 2));
            let msg = match op {
                0 => ProtocolMessage::Add(e),
                1 => ProtocolMessage::Del(Example::new(Instance::Dense(vec![0.0]), Label::Class(0))),
                _ => ProtocolMessage::Eval(Instance::Dense(vec![0.5])),
            };
            let (next, r) = datcol_step(state, &msg, &spec, 9).unwrap();
            state = next;
            match (&msg, &r) {
                (ProtocolMessage::Add(_), Response::Ack) => adds += 1,
                (ProtocolMessage::Del(_), Response::Ack) => honoured += 1,
                (ProtocolMessage::Eval(_), Response::Prediction(_)) => prop_assert!(adds == capacity),
                _ => {}
            }
            prop_assert!(adds <= capacity && honoured <= budget);
            prop_assert_eq!(state.phase == DatColPhase::Collecting, adds < capacity);
        }
    }
}

#[test]
fn tie_coins_are_fair() {
    let mut r = rng(5);
    let zeros = (0..10_000).filter(|_| GuessBit::from_sign(0.0, &mut r).value == 0).count();
    assert!((zeros as f64 / 10_000.0 - 0.5).abs() <= 0.02, "{zeros}");
}

/// The challenge bit is a fair coin: two-sided binomial test at 1%.
#[test]
fn challenge_bit_is_uniform() {
    let data = DatasetDistribution::new(DataSpec::GaussianBlobs { n: 20, d: 2, classes: 2, spread: 1.0 }, 0).unwrap();
    let cfg = GameConfig::new(LearnerSpec::Constant, data, 2000, 77);
    let run = run_deletion_inference(&cfg, &DelInfExm { loss: LossKind::NegLogLikelihood }).unwrap();
    let ones = run.records.iter().filter(|r| r.b == 1).count() as f64;
    let z = (ones - 1000.0) / (2000.0f64 * 0.25).sqrt();
    assert!(z.abs() < 2.576, "z = {z}");
}
