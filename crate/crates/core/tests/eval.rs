use latent_lexicon::corpus::{clean, Lexicon};
use latent_lexicon::directions::{random_directions, Direction, DirectionSource};
use latent_lexicon::distill::{compose, ConceptVocabulary};
use latent_lexicon::eval::{
    binomial_upper_tail, oracle_choose, planted_vocabulary, recovery_report, run_composition,
    run_generalize_y, run_generalize_z, svm_concept_accuracy, train_linear_classifier,
    CompositionOptions, EvalError, ForcedChoiceOptions, OracleAnnotator, SvmExperimentOptions,
    SvmOptions, NO_CHANGE_TEXT,
};
use latent_lexicon::generator::{SyntheticWorld, WorldConfig};
use latent_lexicon::numerics::{dot, norm, scale};
use latent_lexicon::rng::{gaussian_vector, seeded};
use proptest::prelude::*;
use rand::Rng;

fn flat_world() -> SyntheticWorld {
    SyntheticWorld::build(WorldConfig {
        epsilon: 0.0,
        ..WorldConfig::default()
    })
    .unwrap()
}

fn planted(world: &SyntheticWorld, k: usize) -> Direction {
    Direction::unit(world.planted_direction(k), None, DirectionSource::Lsd).unwrap()
}

fn subset(vocab: &ConceptVocabulary, n: usize) -> ConceptVocabulary {
    ConceptVocabulary {
        tokens: vocab.tokens[..n].to_vec(),
        ..vocab.clone()
    }
}

#[test]
fn oracle_names_only_the_moved_concept() {
    let w = flat_world();
    let oracle = OracleAnnotator::default();
    let z = gaussian_vector(&mut seeded(3), 32);
    let up = oracle.annotate(&w, &z, 0, &planted(&w, 0), 12.0, "d", "a").unwrap();
    assert!(up.text.contains("more brightness"), "{}", up.text);
    for k in 1..w.concept_count() {
        assert!(!up.text.contains(w.concept_token(k)), "{}", up.text);
    }
    let mut down_dir = planted(&w, 0);
    down_dir.vector = scale(&down_dir.vector, -1.0);
    let down = oracle.annotate(&w, &z, 0, &down_dir, 12.0, "d", "a").unwrap();
    assert!(down.text.contains("less brightness"), "{}", down.text);
    let still = oracle.annotate(&w, &z, 0, &planted(&w, 0), 0.0, "d", "a").unwrap();
    assert_eq!(still.text, NO_CHANGE_TEXT);
    assert_eq!(up.class, "cottage");
}

#[test]
fn oracle_text_is_keyed_by_ids() {
    let w = SyntheticWorld::build(WorldConfig::default()).unwrap();
    let oracle = OracleAnnotator::with_noise(0.5, 0.5, 9);
    let z = gaussian_vector(&mut seeded(1), 32);
    let d = &random_directions(1, 32, 2)[0];
    let a = oracle.annotate(&w, &z, 0, d, 6.0, "d1", "x").unwrap();
    assert_eq!(a, oracle.annotate(&w, &z, 0, d, 6.0, "d1", "x").unwrap());
}

#[test]
fn template_words_are_all_stopwords() {
    let lex = Lexicon::bundled();
    for t in OracleAnnotator::default().templates {
        let text = t.replace("{}", "");
        assert!(latent_lexicon::corpus::clean_text(&text, &lex).is_empty(), "{t}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn noiseless_annotations_clean_to_thresholded_changes(seed in any::<u64>(), y in 0usize..4) {
        let w = SyntheticWorld::build(WorldConfig::default()).unwrap();
        let lex = Lexicon::bundled();
        let oracle = OracleAnnotator { seed, ..OracleAnnotator::default() };
        let mut rng = seeded(seed);
        let z = gaussian_vector(&mut rng, 32);
        let d = &random_directions(1, 32, rng.random())[0];
        let raw = oracle.annotate(&w, &z, y, d, 6.0, "d", "a").unwrap();
        let expected = oracle.expected_tokens(&w, &z, y, &d.vector, 6.0).unwrap();
        match clean(&raw, &lex) {
            Ok(c) => prop_assert_eq!(c.tokens, expected),
            Err(_) => prop_assert!(expected.is_empty()),
        }
    }

    #[test]
    fn synonyms_clean_to_the_canonical_token(seed in any::<u64>()) {
        let w = SyntheticWorld::build(WorldConfig::default()).unwrap();
        let lex = Lexicon::bundled();
        let oracle = OracleAnnotator { p_syn: 1.0, seed, ..OracleAnnotator::default() };
        let mut rng = seeded(seed);
        let z = gaussian_vector(&mut rng, 32);
        let d = &random_directions(1, 32, rng.random())[0];
        let raw = oracle.annotate(&w, &z, 0, d, 6.0, "d", "a").unwrap();
        let expected = oracle.expected_tokens(&w, &z, 0, &d.vector, 6.0).unwrap();
        if !expected.is_empty() {
            prop_assert_eq!(clean(&raw, &lex).unwrap().tokens, expected);
        }
    }
}

#[test]
fn choose_picks_the_planted_target() {
    let w = flat_world();
    let oracle = OracleAnnotator::default();
    let z = gaussian_vector(&mut seeded(4), 32);
    let cands: Vec<Direction> = (0..4).map(|k| planted(&w, k)).collect();
    let mut rng = seeded(0);
    let (idx, _) = oracle_choose(&w, &oracle, &z, 0, &[2], &cands, 6.0, &mut rng).unwrap();
    assert_eq!(idx, 2);
    let same = vec![planted(&w, 1); 4];
    let (idx, scores) = oracle_choose(&w, &oracle, &z, 0, &[1], &same, 6.0, &mut rng).unwrap();
    assert_eq!(idx, 0);
    assert!(scores.iter().all(|s| *s == scores[0]));
    assert!(oracle_choose(&w, &oracle, &z, 0, &[1], &same[..3], 6.0, &mut rng).is_err());
}

#[test]
fn composed_scores_match_brute_force() {
    let w = SyntheticWorld::build(WorldConfig::default()).unwrap();
    let oracle = OracleAnnotator::default();
    let z = gaussian_vector(&mut seeded(5), 32);
    let p: Vec<Direction> = (0..4).map(|k| planted(&w, k)).collect();
    let cands = vec![
        compose(&p[0], &p[1]).unwrap(),
        compose(&p[0], &p[2]).unwrap(),
        compose(&p[1], &p[3]).unwrap(),
        compose(&p[2], &p[3]).unwrap(),
    ];
    let (_, scores) =
        oracle_choose(&w, &oracle, &z, 0, &[0, 1], &cands, 6.0, &mut seeded(0)).unwrap();
    let base = w.attributes(&z, 0).unwrap();
    for (c, s) in cands.iter().zip(&scores) {
        let moved: Vec<f64> = z.iter().zip(&c.vector).map(|(a, b)| a + 6.0 * b).collect();
        let after = w.attributes(&moved, 0).unwrap();
        let brute = (after[0] - base[0]) + (after[1] - base[1]);
        assert!((brute - s).abs() < 1e-12);
    }
}

#[test]
fn planted_vocabulary_is_perfect_at_generalize_z() {
    let w = flat_world();
    let vocab = subset(&planted_vocabulary(&w, 10), 4);
    let opts = ForcedChoiceOptions {
        trials_per_concept: 10,
        seed: 3,
        ..ForcedChoiceOptions::default()
    };
    let run = run_generalize_z(&w, &vocab, 0, &OracleAnnotator::default(), &opts).unwrap();
    assert_eq!(run.report.overall.trials, 40);
    assert_eq!(run.report.overall.accuracy, 1.0);
    let again = run_generalize_z(&w, &vocab, 0, &OracleAnnotator::default(), &opts).unwrap();
    assert_eq!(run.trials, again.trials);
    assert!(matches!(
        run_generalize_z(&w, &subset(&vocab, 3), 0, &OracleAnnotator::default(), &opts),
        Err(EvalError::VocabularyTooSmall { .. })
    ));
}

#[test]
fn class_transfer_splits_by_visibility() {
    // Concept 7 is visible only in class 0; everything else everywhere.
    let mut mask = vec![vec![true; 4]; 8];
    mask[7] = vec![true, false, false, false];
    let w = SyntheticWorld::build(WorldConfig {
        epsilon: 0.0,
        class_mask: Some(mask),
        ..WorldConfig::default()
    })
    .unwrap();
    let vocab = planted_vocabulary(&w, 10);
    let opts = ForcedChoiceOptions {
        trials_per_concept: 120,
        seed: 11,
        ..ForcedChoiceOptions::default()
    };
    let run = run_generalize_y(&w, &vocab, 0, &OracleAnnotator::default(), &opts).unwrap();
    let masked = run
        .report
        .per_concept
        .iter()
        .find(|c| c.token == "people")
        .unwrap();
    // Two-sided 1% band around chance for 120 trials.
    let n = masked.tally.trials as u64;
    let k = masked.tally.correct as u64;
    assert!(binomial_upper_tail(k, n, 0.25) > 0.005, "{k}/{n} too high");
    assert!(1.0 - binomial_upper_tail(k + 1, n, 0.25) > 0.005, "{k}/{n} too low");
    for c in &run.report.per_concept {
        if c.token != "people" {
            assert_eq!(c.tally.accuracy, 1.0, "{}", c.token);
        }
    }
    assert!(run.report.buckets["shared"].accuracy >= run.report.buckets["unshared"].accuracy);
    assert!(run.trials.iter().all(|t| t.class != 0));
}

#[test]
fn planted_compositions_are_perfect() {
    let w = flat_world();
    let vocab = planted_vocabulary(&w, 10);
    let opts = CompositionOptions {
        seed: 2,
        ..CompositionOptions::default()
    };
    let run = run_composition(&w, &vocab, 0, &OracleAnnotator::default(), &opts).unwrap();
    assert_eq!(run.report.overall.trials, 50);
    assert_eq!(run.report.overall.accuracy, 1.0);
    let hist = run.report.histogram.unwrap();
    assert_eq!(hist.values().sum::<usize>(), 50);
    assert_eq!(hist["target"], 50);
}

fn toy_points(seed: u64, n: usize, shift: f64) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let mut x = gaussian_vector(&mut rng, 6);
            x[0] += shift;
            x
        })
        .collect()
}

#[test]
fn separable_toy_is_fit_exactly() {
    let pos = toy_points(1, 30, 6.0);
    let neg = toy_points(2, 30, -6.0);
    let clf = train_linear_classifier(&pos, &neg, &SvmOptions::default()).unwrap();
    assert!(pos.iter().all(|x| clf.predict(x)));
    assert!(neg.iter().all(|x| !clf.predict(x)));
    for pair in clf.objective_trace.windows(2) {
        assert!(pair[1] <= pair[0]);
    }
}

#[test]
fn flipping_labels_negates_the_classifier() {
    let pos = toy_points(3, 20, 1.0);
    let neg = toy_points(4, 20, -1.0);
    let opts = SvmOptions::default();
    let a = train_linear_classifier(&pos, &neg, &opts).unwrap();
    let b = train_linear_classifier(&neg, &pos, &opts).unwrap();
    for (x, y) in a.weights.iter().zip(&b.weights) {
        assert!((x + y).abs() <= 1e-6, "{x} vs {y}");
    }
    assert!((a.bias + b.bias).abs() <= 1e-6);
}

#[test]
fn two_point_problem_recovers_the_bisector() {
    let p = vec![1.0, 2.0, 0.5];
    let q = vec![-1.0, 0.0, 2.5];
    let opts = SvmOptions {
        lambda: 1e-3,
        epochs: 400,
        seed: 0,
    };
    let clf = train_linear_classifier(&[p.clone(), p.clone()], &[q.clone(), q.clone()], &opts)
        .unwrap();
    let sp = clf.standardize(&p);
    let sq = clf.standardize(&q);
    let normal: Vec<f64> = sp.iter().zip(&sq).map(|(a, b)| a - b).collect();
    let cos = dot(&clf.weights, &normal) / (norm(&clf.weights) * norm(&normal));
    assert!(1.0 - cos <= 1e-3, "cos {cos}");
}

#[test]
fn identical_classes_are_rejected() {
    let pos = toy_points(5, 4, 0.0);
    assert!(matches!(
        train_linear_classifier(&pos, &pos, &SvmOptions::default()),
        Err(EvalError::DegenerateInput(_))
    ));
}

#[test]
fn svm_detects_brightness_and_nothing_at_zero_alpha() {
    let w = flat_world();
    let vocab = planted_vocabulary(&w, 10);
    let opts = SvmExperimentOptions {
        seed: 5,
        ..SvmExperimentOptions::default()
    };
    let bright = svm_concept_accuracy(&w, &vocab, "brightness", 0, &opts).unwrap();
    assert!(bright.accuracy >= 0.9, "{bright:?}");
    assert_eq!(bright, svm_concept_accuracy(&w, &vocab, "brightness", 0, &opts).unwrap());
    let null = svm_concept_accuracy(
        &w,
        &vocab,
        "brightness",
        0,
        &SvmExperimentOptions {
            alpha: 0.0,
            n_z: 400,
            ..opts
        },
    );
    // At alpha = 0 positives and negatives are the same image.
    assert!(matches!(null, Err(EvalError::DegenerateInput(_))));
}

#[test]
fn recovery_of_planted_and_random_vocabularies() {
    let w = SyntheticWorld::build(WorldConfig::default()).unwrap();
    let rep = recovery_report(&planted_vocabulary(&w, 1), &w);
    assert_eq!(rep.correct_count, 8);
    for (k, row) in rep.cosines.iter().enumerate() {
        for (j, c) in row.as_ref().unwrap().iter().enumerate() {
            let expect = if j == k { 1.0 } else { 0.0 };
            assert!((c - expect).abs() < 1e-8);
        }
    }

    let mut total = 0.0;
    let mut count = 0;
    for seed in 0..50 {
        let mut vocab = planted_vocabulary(&w, 1);
        for (t, d) in vocab.tokens.iter_mut().zip(random_directions(8, 32, seed)) {
            t.vector = d.vector;
        }
        let rep = recovery_report(&vocab, &w);
        for row in rep.cosines.iter().flatten() {
            total += row.iter().sum::<f64>();
            count += row.len();
        }
    }
    // E|cos| between independent uniform directions in 32 dimensions.
    let mean = total / count as f64;
    let expect = (2.0 / (std::f64::consts::PI * 32.0)).sqrt();
    assert!((mean - expect).abs() < 0.01, "{mean} vs {expect}");

    let mut partial = planted_vocabulary(&w, 1);
    partial.tokens.remove(3);
    let rep = recovery_report(&partial, &w);
    assert_eq!(rep.missing, vec!["reddish"]);
    assert_eq!(rep.correct_count, 7);
}
