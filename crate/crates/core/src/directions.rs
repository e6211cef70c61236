//! Probe directions for annotation: layer-selective directions found by
//! projected gradient descent on the unit sphere, plus random and
//! PCA-of-features baselines.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{GeneratorError, SyntheticWorld, LAYER_COUNT};
use crate::numerics::{
    self, axpy, norm, project_orthonormal, scale, Matrix, NumericsError, Vector,
};
use crate::rng::{derive_indexed, derive_seed, gaussian_vector, seeded, unit_gaussian};

#[derive(Debug, Error)]
pub enum DirectionError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("non-finite loss or gradient at layer {layer}")]
    NonFinite { layer: usize },
    #[error("infeasible schedule: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, DirectionError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionSource {
    Lsd,
    ExtraOrthogonal,
    Random,
    PcaBaseline,
    Distilled,
    Composed,
}

/// A latent-space direction. Unit norm except for `Composed` directions,
/// which keep the raw average of their parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub vector: Vector,
    pub layer: Option<usize>,
    pub source: DirectionSource,
}

impl Direction {
    /// Wraps `vector` after rescaling it to unit length.
    pub fn unit(vector: &[f64], layer: Option<usize>, source: DirectionSource) -> Result<Self> {
        let vector = numerics::normalized(vector, 1e-12).ok_or_else(|| {
            DirectionError::DegenerateInput("cannot normalise a zero vector".into())
        })?;
        Ok(Self {
            vector,
            layer,
            source,
        })
    }

    pub fn norm(&self) -> f64 {
        norm(&self.vector)
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub step_size: f64,
    pub max_iterations: usize,
    /// Stop when an accepted step improves the loss by less than this
    /// fraction.
    pub tolerance: f64,
    pub backtrack_factor: f64,
    pub max_halvings: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            max_iterations: 500,
            tolerance: 1e-9,
            backtrack_factor: 0.5,
            max_halvings: 30,
        }
    }
}

/// How many directions to select per layer, last layer first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsdSchedule {
    /// `(layer, count)` pairs in processing order.
    pub per_layer: Vec<(usize, usize)>,
    pub extra_orthogonal: usize,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
}

impl Default for LsdSchedule {
    /// Four per layer over the four taps plus four extra directions: 20.
    fn default() -> Self {
        Self {
            per_layer: (0..LAYER_COUNT).rev().map(|l| (l, 4)).collect(),
            extra_orthogonal: 4,
            optimizer: OptimizerOptions::default(),
        }
    }
}

impl LsdSchedule {
    pub fn total(&self) -> usize {
        self.per_layer.iter().map(|&(_, n)| n).sum::<usize>() + self.extra_orthogonal
    }

    pub fn validate(&self, latent_dim: usize) -> Result<()> {
        for window in self.per_layer.windows(2) {
            if window[1].0 >= window[0].0 {
                return Err(DirectionError::Infeasible(
                    "layers must be listed from last to first".into(),
                ));
            }
        }
        if let Some(&(layer, _)) = self.per_layer.iter().find(|(l, _)| *l >= LAYER_COUNT) {
            return Err(DirectionError::Generator(GeneratorError::UnknownLayer(layer)));
        }
        if self.total() + 1 > latent_dim {
            return Err(DirectionError::Infeasible(format!(
                "{} directions per z leave no room in a {latent_dim}-dimensional latent space",
                self.total()
            )));
        }
        Ok(())
    }
}

/// Result of one constrained descent.
#[derive(Debug, Clone)]
pub struct LsdOutcome {
    pub direction: Direction,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
    /// Loss after each accepted step, starting with the initial loss.
    pub loss_trace: Vec<f64>,
}

/// One stored direction together with the latent code it was found at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRecord {
    pub id: String,
    pub class: String,
    pub z_seed: u64,
    pub z: Vector,
    pub layer: Option<usize>,
    pub source: DirectionSource,
    pub vector: Vector,
}

impl DirectionRecord {
    pub fn direction(&self) -> Direction {
        Direction {
            vector: self.vector.clone(),
            layer: self.layer,
            source: self.source,
        }
    }
}

/// Upper bound on the adaptive step, as a multiple of the initial step.
pub const MAX_STEP_GROWTH: f64 = 1024.0;

/// Projected gradient descent for a unit direction minimizing the change
/// at `layer`, kept orthogonal to `basis`. Starts from a seeded Gaussian
/// draw.
pub fn optimize_lsd(
    world: &SyntheticWorld,
    z: &[f64],
    y: usize,
    layer: usize,
    basis: &[Vector],
    opts: &OptimizerOptions,
    seed: u64,
) -> Result<LsdOutcome> {
    let init = gaussian_vector(&mut seeded(seed), world.latent_dim());
    optimize_lsd_from(world, z, y, layer, basis, opts, &init)
}

pub fn optimize_lsd_from(
    world: &SyntheticWorld,
    z: &[f64],
    y: usize,
    layer: usize,
    basis: &[Vector],
    opts: &OptimizerOptions,
    init: &[f64],
) -> Result<LsdOutcome> {
    let objective = world.layer_objective(z, y, layer)?;
    let project = |v: &[f64]| -> Result<Vector> {
        project_orthonormal(v, basis).map_err(|e| match e {
            NumericsError::DegenerateInput(msg) => DirectionError::DegenerateInput(msg),
            other => other.into(),
        })
    };
    let mut d = project(init)?;
    let (mut loss, mut grad) = objective.loss_and_gradient(&d)?;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(DirectionError::NonFinite { layer });
    }
    let initial_loss = loss;
    let mut trace = vec![loss];
    let mut iterations = 0;
    // The trial step starts at the last accepted step, doubled, so that
    // flat objectives do not pin the optimizer to the initial step size.
    let max_step = opts.step_size * MAX_STEP_GROWTH;
    let mut trial = opts.step_size;
    while iterations < opts.max_iterations && loss > 0.0 {
        iterations += 1;
        let mut step = trial;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut moved = d.clone();
            axpy(-step, &grad, &mut moved);
            if let Ok(candidate) = project(&moved) {
                let cand_loss = objective.loss(&candidate)?;
                if !cand_loss.is_finite() {
                    return Err(DirectionError::NonFinite { layer });
                }
                if cand_loss <= loss {
                    let (cand_loss, cand_grad) = objective.loss_and_gradient(&candidate)?;
                    if cand_grad.iter().any(|g| !g.is_finite()) {
                        return Err(DirectionError::NonFinite { layer });
                    }
                    accepted = Some((candidate, cand_loss, cand_grad));
                    trial = (2.0 * step).min(max_step);
                    break;
                }
            }
            step *= opts.backtrack_factor;
        }
        let Some((next, next_loss, next_grad)) = accepted else {
            break;
        };
        let improvement = (loss - next_loss) / loss.max(f64::MIN_POSITIVE);
        d = next;
        loss = next_loss;
        grad = next_grad;
        trace.push(loss);
        if improvement < opts.tolerance {
            break;
        }
    }
    Ok(LsdOutcome {
        direction: Direction {
            vector: d,
            layer: Some(layer),
            source: DirectionSource::Lsd,
        },
        initial_loss,
        final_loss: loss,
        iterations,
        loss_trace: trace,
    })
}

/// One z's worth of directions with their optimizer outcomes.
#[derive(Debug, Clone)]
pub struct LsdSet {
    pub directions: Vec<Direction>,
    /// `(initial_loss, final_loss)` for each LSD, aligned with the first
    /// `directions` entries; extra directions have no entry.
    pub losses: Vec<(f64, f64)>,
}

/// Runs the schedule for one `(z, y)`: layers from last to first, each new
/// direction orthogonal to every direction chosen before it, then the
/// extra directions orthogonal to all of them.
pub fn generate_lsd_set(
    world: &SyntheticWorld,
    z: &[f64],
    y: usize,
    schedule: &LsdSchedule,
    seed: u64,
) -> Result<LsdSet> {
    schedule.validate(world.latent_dim())?;
    let mut basis: Vec<Vector> = Vec::with_capacity(schedule.total());
    let mut directions = Vec::with_capacity(schedule.total());
    let mut losses = Vec::new();
    let mut counter = 0u64;
    for &(layer, count) in &schedule.per_layer {
        for _ in 0..count {
            let init_seed = derive_indexed(seed, "lsd-init", counter);
            counter += 1;
            let out = optimize_lsd(world, z, y, layer, &basis, &schedule.optimizer, init_seed)?;
            basis.push(out.direction.vector.clone());
            losses.push((out.initial_loss, out.final_loss));
            directions.push(out.direction);
        }
    }
    let mut extra_rng = seeded(derive_seed(seed, "lsd-extra"));
    for _ in 0..schedule.extra_orthogonal {
        let draw = gaussian_vector(&mut extra_rng, world.latent_dim());
        let v = project_orthonormal(&draw, &basis)?;
        basis.push(v.clone());
        directions.push(Direction {
            vector: v,
            layer: None,
            source: DirectionSource::ExtraOrthogonal,
        });
    }
    if directions.len() != schedule.total() {
        return Err(DirectionError::Infeasible(format!(
            "produced {} directions, schedule asks for {}",
            directions.len(),
            schedule.total()
        )));
    }
    Ok(LsdSet { directions, losses })
}

/// LSD sets for many latent codes, computed in parallel. `seeds[i]` drives
/// the set for `zs[i]`.
pub fn generate_lsd_sets(
    world: &SyntheticWorld,
    zs: &[(Vector, u64)],
    y: usize,
    schedule: &LsdSchedule,
) -> Result<Vec<LsdSet>> {
    zs.par_iter()
        .map(|(z, seed)| generate_lsd_set(world, z, y, schedule, *seed))
        .collect()
}

pub fn random_directions(n: usize, dim: usize, seed: u64) -> Vec<Direction> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| Direction {
            vector: unit_gaussian(&mut rng, dim),
            layer: None,
            source: DirectionSource::Random,
        })
        .collect()
}

/// Layers whose features feed the PCA baseline by default.
pub const PCA_BASELINE_LAYERS: [usize; 2] = [0, 1];

/// Principal components of early-layer features, transferred to latent
/// space by regressing sampled codes on their component coordinates.
pub fn pca_baseline_directions(
    world: &SyntheticWorld,
    y: usize,
    n: usize,
    sample_count: usize,
    layers: &[usize],
    seed: u64,
) -> Result<Vec<Direction>> {
    let m = world.latent_dim();
    if sample_count < n.max(2 * m) {
        return Err(DirectionError::Infeasible(format!(
            "need at least max(n, 2m) = {} samples, got {sample_count}",
            n.max(2 * m)
        )));
    }
    let feature_dim: usize = layers
        .iter()
        .map(|&l| world.layer_width(l))
        .sum::<std::result::Result<usize, _>>()?;
    if n == 0 || n > feature_dim {
        return Err(DirectionError::Infeasible(format!(
            "cannot take {n} components of {feature_dim}-dimensional features"
        )));
    }
    let mut rng = seeded(seed);
    let mut zs = Vec::with_capacity(sample_count);
    let mut feats = Vec::with_capacity(sample_count);
    for _ in 0..sample_count {
        let z = gaussian_vector(&mut rng, m);
        let mut f = Vec::with_capacity(feature_dim);
        for &l in layers {
            f.extend(world.layer_features(&z, y, l)?);
        }
        zs.push(z);
        feats.push(f);
    }
    let features = Matrix::from_rows(&feats)?;
    let pcs = numerics::top_principal_components(&features, n)?;

    // Component coordinates of every sample, then least squares z ≈ X·B.
    let mut coords = Matrix::zeros(sample_count, n);
    for (i, f) in feats.iter().enumerate() {
        let centered = numerics::sub(f, &pcs.mean);
        for c in 0..n {
            coords[(i, c)] = numerics::dot(&centered, pcs.components.row(c));
        }
    }
    let z_mean: Vector = {
        let mut acc = vec![0.0; m];
        for z in &zs {
            axpy(1.0, z, &mut acc);
        }
        scale(&acc, 1.0 / sample_count as f64)
    };
    let centered_z: Vec<Vector> = zs.iter().map(|z| numerics::sub(z, &z_mean)).collect();
    let latent = Matrix::from_rows(&centered_z)?;
    let transfer = numerics::least_squares(&coords, &latent, 0.0)?;
    (0..n)
        .map(|c| Direction::unit(transfer.row(c), None, DirectionSource::PcaBaseline))
        .collect()
}
