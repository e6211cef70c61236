//! One function per subcommand. Each reads its inputs from the output
//! directory (or an explicit path), writes its artifact plus a JSON report
//! under `reports/`, and returns the one-line summary to print.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use latent_lexicon::corpus::{
    corpus_statistics, inter_annotator_bleu, ngram_diversity, CleanedAnnotation, CorpusError,
    RawAnnotation,
};
use latent_lexicon::directions::DirectionRecord;
use latent_lexicon::distill::{apply_direction, distill_corpus, AssembleOptions, ConceptVocabulary};
use latent_lexicon::eval::{
    recovery_report, run_composition, run_generalize_y, run_generalize_z, svm_concept_accuracy,
    CompositionOptions, ExperimentRun, ForcedChoiceOptions, NO_CHANGE_TEXT,
};
use latent_lexicon::generator::SyntheticWorld;
use latent_lexicon::io;
use latent_lexicon::pipeline::{
    clean_corpus, direction_store, lsd_records, oracle_corpus, pca_records, random_records,
    STAGE_DIRECTIONS,
};
use serde::Serialize;
use serde_json::json;

use crate::config::CliConfig;

pub const DIRECTIONS_FILE: &str = "directions.jsonl";
pub const PAIRS_DIR: &str = "pairs";
pub const RAW_FILE: &str = "raw.jsonl";
pub const CLEANED_FILE: &str = "cleaned.jsonl";
pub const VOCABULARY_FILE: &str = "vocabulary.json";
pub const REPORTS_DIR: &str = "reports";
pub const TRIALS_DIR: &str = "trials";

/// Bad invocation rather than bad data; maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Lsd,
    Random,
    Pca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    GeneralizeZ,
    GeneralizeY,
    Compose,
    Svm,
    Recovery,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Self::GeneralizeZ => "generalize-z",
            Self::GeneralizeY => "generalize-y",
            Self::Compose => "compose",
            Self::Svm => "svm",
            Self::Recovery => "recovery",
        }
    }
}

pub struct Workspace {
    pub cfg: CliConfig,
    pub out: PathBuf,
}

impl Workspace {
    pub fn new(cfg: CliConfig, out: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&out)
            .with_context(|| format!("creating output directory {}", out.display()))?;
        Ok(Self { cfg, out })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn input(&self, explicit: Option<&Path>, default: &str) -> Result<PathBuf> {
        let p = explicit.map_or_else(|| self.path(default), Path::to_path_buf);
        if !p.exists() {
            return Err(usage(format!("input {} does not exist", p.display())));
        }
        Ok(p)
    }

    fn report<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let dir = self.path(REPORTS_DIR);
        std::fs::create_dir_all(&dir)?;
        let p = dir.join(format!("{name}.json"));
        io::write_json(&p, value)?;
        Ok(p)
    }

    fn class_name(&self, world: &SyntheticWorld) -> String {
        world.class_names()[self.cfg.pipeline.class].clone()
    }
}

/// Resolves `--class NAME` against the world; the index replaces the
/// configured class.
pub fn apply_class_override(cfg: &mut CliConfig, class: Option<&str>) -> Result<()> {
    if let Some(name) = class {
        let world = cfg.world()?;
        cfg.pipeline.class = world
            .class_index(name)
            .map_err(|_| usage(format!("unknown class {name:?}")))?;
    } else if cfg.pipeline.class >= cfg.pipeline.world.class_count {
        return Err(usage(format!("class index {} out of range", cfg.pipeline.class)));
    }
    Ok(())
}

fn read_directions(path: &Path) -> Result<Vec<DirectionRecord>> {
    Ok(io::read_jsonl(path)?)
}

pub fn gen_directions(ws: &Workspace, source: SourceKind) -> Result<String> {
    let p = &ws.cfg.pipeline;
    let world = ws.cfg.world()?;
    let per_z = p.schedule.total();
    let records = match source {
        SourceKind::Lsd => lsd_records(
            &world,
            p.class,
            p.n_z,
            &p.schedule,
            p.stage_seed(STAGE_DIRECTIONS),
        )?,
        SourceKind::Random => random_records(&world, p.class, p.n_z, per_z, p.stage_seed("random")),
        SourceKind::Pca => pca_records(&world, p.class, p.n_z, per_z, p.stage_seed("pca"))?,
    };
    io::write_jsonl(&ws.path(DIRECTIONS_FILE), &records)?;
    let mut per_layer: BTreeMap<String, usize> = BTreeMap::new();
    for r in &records {
        let key = r.layer.map_or("any".to_string(), |l| format!("layer{l}"));
        *per_layer.entry(key).or_default() += 1;
    }
    ws.report(
        "gen-directions",
        &json!({
            "source": source,
            "class": ws.class_name(&world),
            "n_z": p.n_z,
            "directions": records.len(),
            "per_layer": per_layer,
        }),
    )?;
    let layers: Vec<String> = per_layer.iter().map(|(k, v)| format!("{k}={v}")).collect();
    Ok(format!(
        "gen-directions: {} {:?} directions for {} codes ({})",
        records.len(),
        source,
        p.n_z,
        layers.join(" ")
    ))
}

#[derive(Serialize)]
struct PairEntry {
    id: String,
    class: String,
    alpha: f64,
    before: String,
    after: String,
}

pub fn render_pairs(ws: &Workspace, directions: Option<&Path>) -> Result<String> {
    let world = ws.cfg.world()?;
    let alpha = ws.cfg.pipeline.alpha;
    let records = read_directions(&ws.input(directions, DIRECTIONS_FILE)?)?;
    let root = ws.path(PAIRS_DIR);
    let mut index = Vec::with_capacity(records.len());
    let mut changed = 0usize;
    for r in &records {
        let y = world.class_index(&r.class)?;
        let before = world.render(&r.z, y)?;
        let after = apply_direction(&world, &r.z, y, &r.direction(), alpha)?;
        changed += (before.to_bytes() != after.to_bytes()) as usize;
        let dir = root.join(&r.id);
        std::fs::create_dir_all(&dir)?;
        io::write_pnm(&dir.join("before.ppm"), &before)?;
        io::write_pnm(&dir.join("after.ppm"), &after)?;
        index.push(PairEntry {
            id: r.id.clone(),
            class: r.class.clone(),
            alpha,
            before: format!("{}/before.ppm", r.id),
            after: format!("{}/after.ppm", r.id),
        });
    }
    io::write_json(&root.join("index.json"), &index)?;
    ws.report(
        "render-pairs",
        &json!({ "pairs": index.len(), "alpha": alpha, "visibly_changed": changed }),
    )?;
    Ok(format!(
        "render-pairs: {} pairs at alpha {alpha} ({changed} visibly changed)",
        index.len()
    ))
}

pub fn annotate_oracle(
    ws: &Workspace,
    directions: Option<&Path>,
    annotators: Option<usize>,
) -> Result<String> {
    let p = &ws.cfg.pipeline;
    let world = ws.cfg.world()?;
    let records = read_directions(&ws.input(directions, DIRECTIONS_FILE)?)?;
    let annotators = annotators.unwrap_or(p.annotators_per_direction);
    if annotators == 0 {
        return Err(usage("annotators must be >= 1"));
    }
    let raw = oracle_corpus(&world, &records, &p.seeded_oracle(), p.alpha, annotators)?;
    io::write_jsonl(&ws.path(RAW_FILE), &raw)?;
    let no_change = raw.iter().filter(|r| r.text == NO_CHANGE_TEXT).count();
    ws.report(
        "annotate-oracle",
        &json!({
            "directions": records.len(),
            "annotators_per_direction": annotators,
            "annotations": raw.len(),
            "no_change": no_change,
        }),
    )?;
    Ok(format!(
        "annotate-oracle: {} annotations for {} directions ({no_change} no change)",
        raw.len(),
        records.len()
    ))
}

pub fn clean(ws: &Workspace, raw: Option<&Path>) -> Result<String> {
    let raw: Vec<RawAnnotation> = io::read_jsonl(&ws.input(raw, RAW_FILE)?)?;
    let lexicon = ws.cfg.lexicon()?;
    let (cleaned, dropped) = clean_corpus(&raw, &lexicon);
    io::write_jsonl(&ws.path(CLEANED_FILE), &cleaned)?;
    let dropped_ids: Vec<serde_json::Value> = dropped
        .iter()
        .map(|e| match e {
            CorpusError::EmptyResult {
                direction_id,
                annotator_id,
            } => json!({ "direction_id": direction_id, "annotator_id": annotator_id }),
            other => json!({ "error": other.to_string() }),
        })
        .collect();
    ws.report(
        "clean",
        &json!({
            "raw": raw.len(),
            "kept": cleaned.len(),
            "dropped": dropped.len(),
            "dropped_annotations": dropped_ids,
        }),
    )?;
    Ok(format!(
        "clean: kept {} of {} annotations ({} without content tokens)",
        cleaned.len(),
        raw.len(),
        dropped.len()
    ))
}

pub fn distill(
    ws: &Workspace,
    cleaned: Option<&Path>,
    directions: Option<&Path>,
    class: Option<&str>,
) -> Result<String> {
    let p = &ws.cfg.pipeline;
    let corpus: Vec<CleanedAnnotation> = io::read_jsonl(&ws.input(cleaned, CLEANED_FILE)?)?;
    let records = read_directions(&ws.input(directions, DIRECTIONS_FILE)?)?;
    let vocab = distill_corpus(
        &corpus,
        &direction_store(&records),
        class,
        p.lambda,
        &AssembleOptions {
            min_freq: p.min_freq,
            ..AssembleOptions::default()
        },
    )?;
    io::write_json(&ws.path(VOCABULARY_FILE), &vocab)?;
    let tokens: Vec<_> = vocab
        .tokens
        .iter()
        .map(|t| json!({ "token": t.token, "freq": t.freq, "raw_norm": t.raw_norm }))
        .collect();
    ws.report(
        "distill",
        &json!({ "lambda": p.lambda, "min_freq": p.min_freq, "class": class, "tokens": tokens }),
    )?;
    Ok(format!(
        "distill: {} concept directions from {} annotations at lambda {}",
        vocab.len(),
        corpus.len(),
        p.lambda
    ))
}

pub fn stats(ws: &Workspace, cleaned: Option<&Path>) -> Result<String> {
    let corpus: Vec<CleanedAnnotation> = io::read_jsonl(&ws.input(cleaned, CLEANED_FILE)?)?;
    let mut by_class: BTreeMap<String, Vec<CleanedAnnotation>> = BTreeMap::new();
    for a in corpus {
        let key = a.class.clone().unwrap_or_else(|| "unknown".into());
        by_class.entry(key).or_default().push(a);
    }
    let s = corpus_statistics(&by_class)?;
    ws.report("stats", &s)?;
    Ok(format!(
        "stats: {} annotations, {} distinct tokens, {} repeated, {} class-unique",
        s.overall.annotations, s.overall.distinct, s.overall.repeated, s.overall.unique_to_class
    ))
}

pub fn diversity(ws: &Workspace, raw: Option<&Path>) -> Result<String> {
    let raw: Vec<RawAnnotation> = io::read_jsonl(&ws.input(raw, RAW_FILE)?)?;
    let texts: Vec<&str> = raw.iter().map(|r| r.text.as_str()).collect();
    let mut grams = BTreeMap::new();
    for n in 1..=3 {
        grams.insert(format!("{n}-grams"), ngram_diversity(&texts, n)?);
    }
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in &raw {
        groups.entry(&r.direction_id).or_default().push(&r.text);
    }
    let groups: Vec<Vec<&str>> = groups.into_values().collect();
    let bleu = match inter_annotator_bleu(&groups, 4) {
        Ok(b) => Some(b),
        Err(CorpusError::InsufficientReferences) => None,
        Err(e) => return Err(e.into()),
    };
    ws.report(
        "diversity",
        &json!({ "annotations": raw.len(), "distinct": grams, "bleu4": bleu }),
    )?;
    let bleu_text = bleu.map_or("n/a".to_string(), |b| format!("{:.2}", b.score));
    Ok(format!(
        "diversity: distinct 1/2/3-grams {}/{}/{}, inter-annotator BLEU-4 {bleu_text}",
        grams["1-grams"], grams["2-grams"], grams["3-grams"]
    ))
}

pub fn eval(ws: &Workspace, experiment: Experiment, vocabulary: Option<&Path>) -> Result<String> {
    let p = &ws.cfg.pipeline;
    let e = &ws.cfg.eval;
    let world = ws.cfg.world()?;
    let vocab: ConceptVocabulary = io::read_json(&ws.input(vocabulary, VOCABULARY_FILE)?)?;
    let oracle = p.seeded_oracle();
    let name = experiment.name();
    let fc = ForcedChoiceOptions {
        trials_per_concept: e.trials_per_concept,
        alpha: p.alpha,
        seed: p.stage_seed(name),
        min_freq: e.min_freq,
    };
    let forced = |run: ExperimentRun| -> Result<String> {
        let dir = ws.path(TRIALS_DIR);
        std::fs::create_dir_all(&dir)?;
        io::write_jsonl(&dir.join(format!("{name}.jsonl")), &run.trials)?;
        ws.report(&format!("eval-{name}"), &run.report)?;
        let o = run.report.overall;
        let mut line = format!(
            "eval {name}: {}/{} correct ({:.3}, chance 0.25, p={:.2e})",
            o.correct, o.trials, o.accuracy, o.p_value
        );
        for (bucket, t) in &run.report.buckets {
            line.push_str(&format!(", {bucket} {}/{}", t.correct, t.trials));
        }
        Ok(line)
    };
    match experiment {
        Experiment::GeneralizeZ => forced(run_generalize_z(&world, &vocab, p.class, &oracle, &fc)?),
        Experiment::GeneralizeY => forced(run_generalize_y(&world, &vocab, p.class, &oracle, &fc)?),
        Experiment::Compose => forced(run_composition(
            &world,
            &vocab,
            p.class,
            &oracle,
            &CompositionOptions {
                pair_count: e.pair_count,
                alpha: p.alpha,
                seed: fc.seed,
                min_freq: e.min_freq,
            },
        )?),
        Experiment::Svm => {
            let opts = ws.cfg.svm_options();
            let mut results = Vec::new();
            for t in vocab.tokens.iter().filter(|t| t.freq >= e.min_freq) {
                results.push(svm_concept_accuracy(&world, &vocab, &t.token, p.class, &opts)?);
            }
            if results.is_empty() {
                return Err(latent_lexicon::eval::EvalError::VocabularyTooSmall {
                    needed: 2,
                    found: 0,
                }
                .into());
            }
            let mean = results.iter().map(|r| r.accuracy).sum::<f64>() / results.len() as f64;
            ws.report(
                "eval-svm",
                &json!({ "options": opts, "mean_accuracy": mean, "chance": 0.5, "concepts": results }),
            )?;
            Ok(format!(
                "eval svm: mean held-out accuracy {mean:.3} over {} concepts (chance 0.50)",
                results.len()
            ))
        }
        Experiment::Recovery => {
            let rep = recovery_report(&vocab, &world);
            ws.report("eval-recovery", &rep)?;
            Ok(format!(
                "eval recovery: argmax correct for {}/{} concepts, median |cos| {:.3}",
                rep.correct_count,
                rep.tokens.len(),
                rep.median_matched_cosine
            ))
        }
    }
}
