//! End-to-end wiring: latent codes -> probe directions -> oracle corpus ->
//! cleaned corpus -> concept vocabulary.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{clean, CleanedAnnotation, CorpusError, Lexicon, RawAnnotation};
use crate::directions::{
    generate_lsd_set, pca_baseline_directions, random_directions, Direction, DirectionError, DirectionRecord, LsdSchedule,
    PCA_BASELINE_LAYERS,
};
use crate::distill::{self, AssembleOptions, ConceptVocabulary, DistillError};
use crate::eval::{EvalError, OracleAnnotator};
use crate::generator::{GeneratorError, SyntheticWorld, WorldConfig};
use crate::rng::{derive_indexed, derive_seed, gaussian_vector, seeded};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Direction(#[from] DirectionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error("annotation for unknown direction {0:?}")]
    UnknownDirection(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub world: WorldConfig,
    pub schedule: LsdSchedule,
    pub seed: u64,
    pub n_z: usize,
    pub class: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub min_freq: usize,
    pub annotators_per_direction: usize,
    pub oracle: OracleAnnotator,
    /// Explicit per-stage seeds; stages not listed derive theirs from `seed`.
    pub stage_seeds: BTreeMap<String, u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            schedule: LsdSchedule::default(),
            seed: 1,
            n_z: 64,
            class: 0,
            alpha: distill::DEFAULT_ALPHA,
            lambda: distill::DEFAULT_LAMBDA,
            min_freq: distill::DEFAULT_MIN_FREQ,
            annotators_per_direction: 1,
            oracle: OracleAnnotator::with_noise(0.1, 0.1, 1),
            stage_seeds: BTreeMap::new(),
        }
    }
}

pub const STAGE_DIRECTIONS: &str = "directions";
pub const STAGE_ORACLE: &str = "oracle";

impl PipelineConfig {
    /// `sha256(seed_le ‖ stage)[..8]` unless overridden, so reseeding one
    /// stage leaves the others untouched.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        self.stage_seeds
            .get(stage)
            .copied()
            .unwrap_or_else(|| derive_seed(self.seed, stage))
    }

    /// The configured oracle with its seed replaced by the oracle stage seed.
    pub fn seeded_oracle(&self) -> OracleAnnotator {
        OracleAnnotator {
            seed: self.stage_seed(STAGE_ORACLE),
            ..self.oracle.clone()
        }
    }
}

pub fn direction_id(class: &str, z_index: usize, j: usize) -> String {
    format!("{class}-z{z_index:03}-d{j:02}")
}

pub fn z_seed(seed: u64, z_index: usize) -> u64 {
    derive_indexed(seed, "z", z_index as u64)
}

pub fn latent(world: &SyntheticWorld, z_seed: u64) -> Vec<f64> {
    gaussian_vector(&mut seeded(z_seed), world.latent_dim())
}

/// Layer-selective directions for `n_z` seeded latent codes of class `y`.
pub fn lsd_records(
    world: &SyntheticWorld,
    y: usize,
    n_z: usize,
    schedule: &LsdSchedule,
    seed: u64,
) -> Result<Vec<DirectionRecord>> {
    Ok(lsd_records_with_losses(world, y, n_z, schedule, seed)?.0)
}

/// [`lsd_records`] plus the `(initial, final)` optimizer loss of every
/// optimized direction, in record order (extra directions have none).
pub fn lsd_records_with_losses(
    world: &SyntheticWorld,
    y: usize,
    n_z: usize,
    schedule: &LsdSchedule,
    seed: u64,
) -> Result<(Vec<DirectionRecord>, Vec<(f64, f64)>)> {
    let class = world.class_names()[y].clone();
    let per_z: Vec<(Vec<DirectionRecord>, Vec<(f64, f64)>)> = (0..n_z)
        .into_par_iter()
        .map(|i| {
            let zs = z_seed(seed, i);
            let z = latent(world, zs);
            let set = generate_lsd_set(world, &z, y, schedule, derive_seed(zs, "lsd"))?;
            Ok((records_for(&class, i, zs, &z, set.directions), set.losses))
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    let mut losses = Vec::new();
    for (r, l) in per_z {
        records.extend(r);
        losses.extend(l);
    }
    Ok((records, losses))
}

/// Same layout as [`lsd_records`] with random unit directions instead.
pub fn random_records(
    world: &SyntheticWorld,
    y: usize,
    n_z: usize,
    per_z: usize,
    seed: u64,
) -> Vec<DirectionRecord> {
    let class = world.class_names()[y].clone();
    (0..n_z)
        .flat_map(|i| {
            let zs = z_seed(seed, i);
            let z = latent(world, zs);
            let dirs = random_directions(per_z, world.latent_dim(), derive_seed(zs, "random"));
            records_for(&class, i, zs, &z, dirs)
        })
        .collect()
}

/// The same `per_z` principal-component directions attached to every code.
pub fn pca_records(
    world: &SyntheticWorld,
    y: usize,
    n_z: usize,
    per_z: usize,
    seed: u64,
) -> Result<Vec<DirectionRecord>> {
    let class = world.class_names()[y].clone();
    let samples = (4 * per_z).max(2 * world.latent_dim());
    let dirs = pca_baseline_directions(
        world,
        y,
        per_z,
        samples,
        &PCA_BASELINE_LAYERS,
        derive_seed(seed, "pca"),
    )?;
    Ok((0..n_z)
        .flat_map(|i| {
            let zs = z_seed(seed, i);
            let z = latent(world, zs);
            records_for(&class, i, zs, &z, dirs.clone())
        })
        .collect())
}

fn records_for(
    class: &str,
    i: usize,
    zs: u64,
    z: &[f64],
    dirs: Vec<Direction>,
) -> Vec<DirectionRecord> {
    dirs.into_iter()
        .enumerate()
        .map(|(j, d)| DirectionRecord {
            id: direction_id(class, i, j),
            class: class.to_string(),
            z_seed: zs,
            z: z.to_vec(),
            layer: d.layer,
            source: d.source,
            vector: d.vector,
        })
        .collect()
}

/// `annotators` oracle descriptions per direction record.
pub fn oracle_corpus(
    world: &SyntheticWorld,
    records: &[DirectionRecord],
    oracle: &OracleAnnotator,
    alpha: f64,
    annotators: usize,
) -> Result<Vec<RawAnnotation>> {
    oracle.validate()?;
    let nested: Vec<Vec<RawAnnotation>> = records
        .par_iter()
        .map(|r| {
            let y = world.class_index(&r.class)?;
            let d = r.direction();
            (0..annotators)
                .map(|a| {
                    Ok(oracle.annotate(world, &r.z, y, &d, alpha, &r.id, &format!("oracle-{a}"))?)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Cleans every annotation; those with no content tokens are returned
/// separately rather than failing the run.
pub fn clean_corpus(
    raw: &[RawAnnotation],
    lexicon: &Lexicon,
) -> (Vec<CleanedAnnotation>, Vec<CorpusError>) {
    let results: Vec<_> = raw.par_iter().map(|r| clean(r, lexicon)).collect();
    let mut kept = Vec::with_capacity(results.len());
    let mut dropped = Vec::new();
    for r in results {
        match r {
            Ok(c) => kept.push(c),
            Err(e) => dropped.push(e),
        }
    }
    (kept, dropped)
}

pub fn direction_store(records: &[DirectionRecord]) -> HashMap<String, Direction> {
    records
        .iter()
        .map(|r| (r.id.clone(), r.direction()))
        .collect()
}

/// Everything one full run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub records: Vec<DirectionRecord>,
    pub raw: Vec<RawAnnotation>,
    pub cleaned: Vec<CleanedAnnotation>,
    pub dropped: usize,
    pub vocabulary: ConceptVocabulary,
}

pub fn run_pipeline(world: &SyntheticWorld, cfg: &PipelineConfig) -> Result<PipelineRun> {
    let records = lsd_records(
        world,
        cfg.class,
        cfg.n_z,
        &cfg.schedule,
        cfg.stage_seed(STAGE_DIRECTIONS),
    )?;
    let raw = oracle_corpus(
        world,
        &records,
        &cfg.seeded_oracle(),
        cfg.alpha,
        cfg.annotators_per_direction,
    )?;
    let lexicon = Lexicon::bundled();
    let (cleaned, dropped) = clean_corpus(&raw, &lexicon);
    let class = world.class_names()[cfg.class].clone();
    let vocabulary = distill::distill_corpus(
        &cleaned,
        &direction_store(&records),
        Some(&class),
        cfg.lambda,
        &AssembleOptions {
            min_freq: cfg.min_freq,
            ..AssembleOptions::default()
        },
    )?;
    Ok(PipelineRun {
        records,
        raw,
        cleaned,
        dropped: dropped.len(),
        vocabulary,
    })
}
