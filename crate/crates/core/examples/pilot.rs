//! Default-config pilot run; its output is recorded in docs/pilot.md and
//! fixes the recovery thresholds used by the acceptance suite.
//!
//!     cargo run --release -p latent-lexicon --example pilot

use latent_lexicon::corpus::{ngram_diversity, RawAnnotation};
use latent_lexicon::eval::*;
use latent_lexicon::generator::SyntheticWorld;
use latent_lexicon::pipeline::{oracle_corpus, random_records, run_pipeline, PipelineConfig};

fn texts(v: &[RawAnnotation]) -> Vec<String> {
    v.iter().map(|r| r.text.clone()).collect()
}

fn main() {
    let cfg = PipelineConfig::default();
    let world = SyntheticWorld::build(cfg.world.clone()).expect("default world");
    let run = run_pipeline(&world, &cfg).expect("pipeline");
    println!(
        "corpus: {} directions, {} annotations, {} dropped, {} tokens",
        run.records.len(),
        run.raw.len(),
        run.dropped,
        run.vocabulary.len()
    );

    let rep = recovery_report(&run.vocabulary, &world);
    for (k, tok) in rep.tokens.iter().enumerate() {
        let diag = rep.cosines[k].as_ref().map_or(0.0, |row| row[k]);
        println!("recovery {tok:<12} |cos| {diag:.3} argmax {:?}", rep.argmax[k]);
    }
    println!(
        "recovery correct {}/{} median |cos| {:.3}",
        rep.correct_count,
        rep.tokens.len(),
        rep.median_matched_cosine
    );

    let oracle = OracleAnnotator::default();
    let fc = ForcedChoiceOptions {
        trials_per_concept: 40,
        seed: 1,
        ..Default::default()
    };
    let gz = run_generalize_z(&world, &run.vocabulary, 0, &oracle, &fc).expect("generalize-z");
    let o = gz.report.overall;
    println!("generalize-z {}/{} p={:.2e}", o.correct, o.trials, o.p_value);
    let gy = run_generalize_y(&world, &run.vocabulary, 0, &oracle, &fc).expect("generalize-y");
    let o = gy.report.overall;
    println!("generalize-y {}/{} ({:.3})", o.correct, o.trials, o.accuracy);
    for (name, t) in &gy.report.buckets {
        println!("  {name} {}/{}", t.correct, t.trials);
    }
    let co = run_composition(
        &world,
        &run.vocabulary,
        0,
        &oracle,
        &CompositionOptions {
            seed: 1,
            ..Default::default()
        },
    )
    .expect("composition");
    let o = co.report.overall;
    println!("compose {}/{} histogram {:?}", o.correct, o.trials, co.report.histogram);

    let mut accs = Vec::new();
    for tok in world.concept_tokens() {
        let opts = SvmExperimentOptions {
            seed: 1,
            ..Default::default()
        };
        let r = svm_concept_accuracy(&world, &run.vocabulary, tok, 0, &opts).expect("svm");
        println!("svm {tok:<12} {:.3}", r.accuracy);
        accs.push(r.accuracy);
    }
    println!("svm mean {:.3}", accs.iter().sum::<f64>() / accs.len() as f64);

    let annotator = cfg.seeded_oracle();
    let lsd = oracle_corpus(&world, &run.records, &annotator, cfg.alpha, 3).expect("lsd corpus");
    let rnd_records = random_records(
        &world,
        cfg.class,
        cfg.n_z,
        cfg.schedule.total(),
        cfg.stage_seed("random"),
    );
    let rnd = oracle_corpus(&world, &rnd_records, &annotator, cfg.alpha, 3).expect("random corpus");
    for n in 1..=3 {
        println!(
            "distinct {n}-grams lsd {} random {}",
            ngram_diversity(&texts(&lsd), n).expect("ngrams"),
            ngram_diversity(&texts(&rnd), n).expect("ngrams")
        );
    }
    let no_change = |v: &[RawAnnotation]| v.iter().filter(|r| r.text == NO_CHANGE_TEXT).count();
    println!("no-change annotations lsd {} random {}", no_change(&lsd), no_change(&rnd));
}
