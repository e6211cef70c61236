//! A small class-conditional generator with planted concept directions.
//!
//! The latent code `z` feeds two paths:
//!
//! * a fixed two-hidden-layer tanh network whose `K` outputs act as a smooth
//!   nonlinear perturbation, and
//! * the planted directions `u_k`, one per concept.
//!
//! Attribute `k` is `sigmoid(u_k·z + ε·n_k(z) + β[k][y])`, and the image is a
//! deterministic soft-blob rendering of the attribute vector. Four feature
//! taps are exposed: both hidden layers, the attributes, and the flattened
//! image.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{axpy, dot, project_orthonormal, Matrix, NumericsError, Vector};
use crate::rng::{derive_seed, gaussian_vector, seeded};
use rand::Rng;

pub const LAYER_COUNT: usize = 4;

/// Logit offset pinning a concept's attribute low in classes where it is
/// masked out.
pub const MASKED_OFFSET: f64 = -4.0;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown layer {0} (expected 0..{LAYER_COUNT})")]
    UnknownLayer(usize),
    #[error("unknown class {0}")]
    UnknownClass(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, GeneratorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for ImageShape {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            channels: 3,
        }
    }
}

pub fn default_concept_tokens() -> Vec<String> {
    DEFAULT_CONCEPT_TOKENS.iter().map(|s| s.to_string()).collect()
}

pub const DEFAULT_CONCEPT_TOKENS: [&str; 8] = [
    "brightness",
    "sunlight",
    "reflection",
    "reddish",
    "mountain",
    "building",
    "chimney",
    "people",
];

pub const DEFAULT_CLASS_NAMES: [&str; 4] = ["cottage", "kitchen", "lake", "medina"];

fn default_hidden() -> [usize; 2] {
    [48, 48]
}

/// Serializable description of a world. Together with `seed` it fully
/// determines every weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub seed: u64,
    pub latent_dim: usize,
    pub concept_count: usize,
    pub class_count: usize,
    pub epsilon: f64,
    pub image: ImageShape,
    pub concept_tokens: Vec<String>,
    /// `class_mask[k][y]`: whether concept `k` is ever visible in class `y`.
    /// Generated from the seed when absent.
    #[serde(default)]
    pub class_mask: Option<Vec<Vec<bool>>>,
    #[serde(default)]
    pub class_names: Option<Vec<String>>,
    #[serde(default = "default_hidden")]
    pub hidden_widths: [usize; 2],
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            latent_dim: 32,
            concept_count: 8,
            class_count: 4,
            epsilon: 0.1,
            image: ImageShape::default(),
            concept_tokens: default_concept_tokens(),
            class_mask: None,
            class_names: None,
            hidden_widths: default_hidden(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    weights: Matrix,
    bias: Vector,
}

impl Dense {
    fn forward(&self, x: &[f64]) -> Vector {
        let mut out = self.weights.matvec(x).expect("layer width checked at build");
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
        out
    }
}

/// Fixed tanh network `z -> h1 -> h2 -> n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationNet {
    first: Dense,
    second: Dense,
    readout: Matrix,
}

/// Where each attribute shows up in the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    /// Extra blobs for concepts 4.. : (center x, center y, width, target level).
    pub extra_blobs: Vec<(f64, f64, f64, f64)>,
}

const BG_BASE: f64 = 0.1;
const BG_GAIN: f64 = 0.6;
const BLOB_SIGMA_BASE: f64 = 0.06;
const BLOB_SIGMA_GAIN: f64 = 0.16;
const BLOB_LEVEL_BASE: f64 = 0.05;
const BLOB_LEVEL_GAIN: f64 = 0.9;
const EXTRA_BLOB_GAIN: f64 = 0.9;
const TINT_GAIN: f64 = 0.3;

fn pixel_center(i: usize, j: usize, shape: ImageShape) -> (f64, f64) {
    (
        (j as f64 + 0.5) / shape.width as f64,
        (i as f64 + 0.5) / shape.height as f64,
    )
}

fn blob_masks(spec: &RenderSpec, shape: ImageShape) -> Vec<f64> {
    let mut out = Vec::with_capacity(shape.height * shape.width * spec.extra_blobs.len());
    for i in 0..shape.height {
        for j in 0..shape.width {
            let (px, py) = pixel_center(i, j, shape);
            for &(cx, cy, w, _) in &spec.extra_blobs {
                out.push((-((px - cx).powi(2) + (py - cy).powi(2)) / (2.0 * w * w)).exp());
            }
        }
    }
    out
}

impl RenderSpec {
    fn for_concepts(k: usize) -> Self {
        let extra = k.saturating_sub(4);
        let extra_blobs = (0..extra)
            .map(|i| {
                let angle =
                    std::f64::consts::FRAC_PI_4 + std::f64::consts::TAU * i as f64 / extra as f64;
                let level = if i % 2 == 0 { 1.0 } else { 0.0 };
                (0.5 + 0.3 * angle.cos(), 0.5 + 0.3 * angle.sin(), 0.09, level)
            })
            .collect();
        Self { extra_blobs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    config: WorldConfig,
    /// `K x m`, orthonormal rows.
    planted: Matrix,
    net: PerturbationNet,
    /// `K x C` logit offsets.
    class_offsets: Matrix,
    class_mask: Vec<Vec<bool>>,
    class_names: Vec<String>,
    render_spec: RenderSpec,
    /// Extra-blob footprints, `[(i * width + j) * extra + e]`; they depend
    /// only on geometry.
    blob_masks: Vec<f64>,
}

/// Every intermediate of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub hidden1: Vector,
    pub hidden2: Vector,
    pub attributes: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Row-major, channel-interleaved, values in [0, 1].
    pub pixels: Vec<f64>,
}

impl ImageBuffer {
    /// Quantizes to 8 bits per sample (round to nearest).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_bytes(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Self {
        Self {
            height,
            width,
            channels,
            pixels: bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len().max(1) as f64
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn tanh_layer(layer: &Dense, x: &[f64]) -> Vector {
    layer.forward(x).into_iter().map(f64::tanh).collect()
}

fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Matrix {
    let data = gaussian_vector(rng, rows * cols)
        .into_iter()
        .map(|x| x * std)
        .collect();
    Matrix::from_row_major(rows, cols, data).expect("sized above")
}

impl SyntheticWorld {
    pub fn build(config: WorldConfig) -> Result<Self> {
        let m = config.latent_dim;
        let k = config.concept_count;
        let c = config.class_count;
        if k > m {
            return Err(GeneratorError::InvalidConfig(format!(
                "concept_count {k} exceeds latent_dim {m}"
            )));
        }
        if k < 2 || c < 2 {
            return Err(GeneratorError::InvalidConfig(format!(
                "need at least 2 concepts and 2 classes, got {k} and {c}"
            )));
        }
        if config.concept_tokens.len() != k {
            return Err(GeneratorError::InvalidConfig(format!(
                "{} concept tokens for {k} concepts",
                config.concept_tokens.len()
            )));
        }
        if config.concept_tokens.iter().any(|t| t.trim().is_empty()) {
            return Err(GeneratorError::InvalidConfig(
                "concept tokens must be nonempty".into(),
            ));
        }
        if !(config.epsilon >= 0.0 && config.epsilon.is_finite()) {
            return Err(GeneratorError::InvalidConfig(format!(
                "epsilon must be finite and >= 0, got {}",
                config.epsilon
            )));
        }
        if config.image.is_empty() || !matches!(config.image.channels, 1 | 3) {
            return Err(GeneratorError::InvalidConfig(format!(
                "unsupported image shape {:?}",
                config.image
            )));
        }

        let mut planted_rng = seeded(derive_seed(config.seed, "world/planted"));
        let mut planted_rows: Vec<Vector> = Vec::with_capacity(k);
        while planted_rows.len() < k {
            let draw = gaussian_vector(&mut planted_rng, m);
            match project_orthonormal(&draw, &planted_rows) {
                Ok(v) => planted_rows.push(v),
                Err(NumericsError::DegenerateInput(_)) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        let planted = Matrix::from_rows(&planted_rows)?;

        let [h1, h2] = config.hidden_widths;
        let mut net_rng = seeded(derive_seed(config.seed, "world/net"));
        let net = PerturbationNet {
            first: Dense {
                weights: random_matrix(&mut net_rng, h1, m, 1.0 / (m as f64).sqrt()),
                bias: gaussian_vector(&mut net_rng, h1)
                    .into_iter()
                    .map(|x| 0.1 * x)
                    .collect(),
            },
            second: Dense {
                weights: random_matrix(&mut net_rng, h2, h1, 1.0 / (h1 as f64).sqrt()),
                bias: gaussian_vector(&mut net_rng, h2)
                    .into_iter()
                    .map(|x| 0.1 * x)
                    .collect(),
            },
            readout: random_matrix(&mut net_rng, k, h2, 1.0 / (h2 as f64).sqrt()),
        };

        let class_mask = match &config.class_mask {
            Some(mask) => {
                if mask.len() != k || mask.iter().any(|row| row.len() != c) {
                    return Err(GeneratorError::InvalidConfig(format!(
                        "class_mask must be {k} x {c}"
                    )));
                }
                let shared = mask.iter().filter(|row| row.iter().all(|&b| b)).count();
                if 2 * shared < k {
                    return Err(GeneratorError::InvalidConfig(format!(
                        "class_mask shares only {shared} of {k} concepts across all classes"
                    )));
                }
                mask.clone()
            }
            None => generate_mask(config.seed, k, c),
        };

        let mut offset_rng = seeded(derive_seed(config.seed, "world/class-offsets"));
        let mut class_offsets = Matrix::zeros(k, c);
        for ki in 0..k {
            for y in 0..c {
                let draw: f64 = offset_rng.random_range(-1.0..=1.0);
                class_offsets[(ki, y)] = if class_mask[ki][y] { draw } else { MASKED_OFFSET };
            }
        }

        let class_names = match &config.class_names {
            Some(names) if names.len() == c => names.clone(),
            Some(names) => {
                return Err(GeneratorError::InvalidConfig(format!(
                    "{} class names for {c} classes",
                    names.len()
                )))
            }
            None => (0..c)
                .map(|y| {
                    DEFAULT_CLASS_NAMES
                        .get(y)
                        .map_or_else(|| format!("class{y}"), |s| s.to_string())
                })
                .collect(),
        };

        let render_spec = RenderSpec::for_concepts(k);
        let blob_masks = blob_masks(&render_spec, config.image);
        Ok(Self {
            render_spec,
            blob_masks,
            config,
            planted,
            net,
            class_offsets,
            class_mask,
            class_names,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    /// The config with the effective class mask and names filled in.
    pub fn resolved_config(&self) -> WorldConfig {
        WorldConfig {
            class_mask: Some(self.class_mask.clone()),
            class_names: Some(self.class_names.clone()),
            ..self.config.clone()
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn concept_count(&self) -> usize {
        self.config.concept_count
    }

    pub fn class_count(&self) -> usize {
        self.config.class_count
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon
    }

    pub fn image_shape(&self) -> ImageShape {
        self.config.image
    }

    pub fn planted_direction(&self, k: usize) -> &[f64] {
        self.planted.row(k)
    }

    pub fn planted_directions(&self) -> &Matrix {
        &self.planted
    }

    pub fn concept_token(&self, k: usize) -> &str {
        &self.config.concept_tokens[k]
    }

    pub fn concept_tokens(&self) -> &[String] {
        &self.config.concept_tokens
    }

    pub fn concept_index(&self, token: &str) -> Option<usize> {
        self.config.concept_tokens.iter().position(|t| t == token)
    }

    pub fn class_offset(&self, k: usize, y: usize) -> f64 {
        self.class_offsets[(k, y)]
    }

    /// Replaces every class offset with zero. Closed-form checks use this;
    /// the masks are left as they were.
    pub fn with_zero_offsets(mut self) -> Self {
        self.class_offsets = Matrix::zeros(self.class_offsets.rows(), self.class_offsets.cols());
        self
    }

    pub fn class_mask(&self) -> &[Vec<bool>] {
        &self.class_mask
    }

    pub fn is_visible(&self, k: usize, y: usize) -> bool {
        self.class_mask[k][y]
    }

    /// Concepts visible in every class.
    pub fn is_shared(&self, k: usize) -> bool {
        self.class_mask[k].iter().all(|&b| b)
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        if let Some(y) = self.class_names.iter().position(|n| n == name) {
            return Ok(y);
        }
        name.parse::<usize>()
            .ok()
            .filter(|&y| y < self.class_count())
            .ok_or_else(|| GeneratorError::UnknownClass(name.to_string()))
    }

    pub fn render_spec(&self) -> &RenderSpec {
        &self.render_spec
    }

    /// Feature width at each tap.
    pub fn layer_width(&self, layer: usize) -> Result<usize> {
        match layer {
            0 => Ok(self.config.hidden_widths[0]),
            1 => Ok(self.config.hidden_widths[1]),
            2 => Ok(self.config.concept_count),
            3 => Ok(self.config.image.len()),
            other => Err(GeneratorError::UnknownLayer(other)),
        }
    }

    fn check_inputs(&self, z: &[f64], y: usize) -> Result<()> {
        if z.len() != self.latent_dim() {
            return Err(GeneratorError::DimensionMismatch(format!(
                "latent code has length {}, world expects {}",
                z.len(),
                self.latent_dim()
            )));
        }
        if y >= self.class_count() {
            return Err(GeneratorError::UnknownClass(y.to_string()));
        }
        Ok(())
    }

    pub fn forward(&self, z: &[f64], y: usize) -> Result<ForwardPass> {
        self.check_inputs(z, y)?;
        let hidden1 = tanh_layer(&self.net.first, z);
        let hidden2 = tanh_layer(&self.net.second, &hidden1);
        let noise = self.net.readout.matvec(&hidden2)?;
        let eps = self.epsilon();
        let attributes = self
            .planted
            .row_iter()
            .enumerate()
            .map(|(k, u)| sigmoid(dot(u, z) + eps * noise[k] + self.class_offsets[(k, y)]))
            .collect();
        Ok(ForwardPass {
            hidden1,
            hidden2,
            attributes,
        })
    }

    pub fn attributes(&self, z: &[f64], y: usize) -> Result<Vector> {
        Ok(self.forward(z, y)?.attributes)
    }

    pub fn layer_features(&self, z: &[f64], y: usize, layer: usize) -> Result<Vector> {
        if layer >= LAYER_COUNT {
            return Err(GeneratorError::UnknownLayer(layer));
        }
        let pass = self.forward(z, y)?;
        Ok(self.tap(pass, layer))
    }

    fn tap(&self, pass: ForwardPass, layer: usize) -> Vector {
        match layer {
            0 => pass.hidden1,
            1 => pass.hidden2,
            2 => pass.attributes,
            _ => self.render_attributes(&pass.attributes).pixels,
        }
    }

    pub fn render(&self, z: &[f64], y: usize) -> Result<ImageBuffer> {
        let attrs = self.attributes(z, y)?;
        Ok(self.render_attributes(&attrs))
    }

    /// Renders an attribute vector. Attribute roles: 0 background
    /// brightness, 1 central blob width, 2 central blob level, 3 red/blue
    /// tint, 4.. one extra blob each.
    pub fn render_attributes(&self, attrs: &[f64]) -> ImageBuffer {
        let ImageShape {
            height,
            width,
            channels,
        } = self.config.image;
        let mut pixels = Vec::with_capacity(height * width * channels);
        let weights = channel_weights(attrs, channels);
        for i in 0..height {
            for j in 0..width {
                let (v, _) = self.pixel_value(attrs, i, j, None);
                for w in &weights {
                    pixels.push((v * w).clamp(0.0, 1.0));
                }
            }
        }
        ImageBuffer {
            height,
            width,
            channels,
            pixels,
        }
    }

    /// Luminance of pixel `(i, j)` before tinting. When `trace` is given, the
    /// value before each extra blob is recorded for the backward pass.
    fn pixel_value(
        &self,
        attrs: &[f64],
        i: usize,
        j: usize,
        mut trace: Option<&mut Vec<f64>>,
    ) -> (f64, PixelGeom) {
        let (px, py) = pixel_center(i, j, self.config.image);
        let extra = self.render_spec.extra_blobs.len();
        let masks = &self.blob_masks[(i * self.config.image.width + j) * extra..][..extra];
        let a = |k: usize| attrs.get(k).copied().unwrap_or(0.5);
        let bg = BG_BASE + BG_GAIN * a(0);
        let sigma = BLOB_SIGMA_BASE + BLOB_SIGMA_GAIN * a(1);
        let level = BLOB_LEVEL_BASE + BLOB_LEVEL_GAIN * a(2);
        let r2 = (px - 0.5).powi(2) + (py - 0.5).powi(2);
        let mask = (-r2 / (2.0 * sigma * sigma)).exp();
        let mut v = bg + mask * (level - bg);
        for (e, &(_, _, _, target)) in self.render_spec.extra_blobs.iter().enumerate() {
            if let Some(t) = trace.as_deref_mut() {
                t.push(v);
            }
            let m = masks[e];
            let weight = EXTRA_BLOB_GAIN * a(4 + e) * m;
            v += weight * (target - v);
        }
        (
            v,
            PixelGeom {
                bg,
                sigma,
                level,
                r2,
                mask,
            },
        )
    }

    /// Vector-Jacobian product of `render_attributes` at `attrs`.
    pub fn render_vjp(&self, attrs: &[f64], cotangent: &[f64]) -> Vector {
        let k = self.concept_count();
        let channels = self.config.image.channels;
        let weights = channel_weights(attrs, channels);
        let mut grad = vec![0.0; k];
        let mut trace = Vec::with_capacity(self.render_spec.extra_blobs.len());
        let a = |k: usize| attrs.get(k).copied().unwrap_or(0.5);
        for i in 0..self.config.image.height {
            for j in 0..self.config.image.width {
                trace.clear();
                let (v, geom) = self.pixel_value(attrs, i, j, Some(&mut trace));
                let base = (i * self.config.image.width + j) * channels;
                let g = &cotangent[base..base + channels];
                let mut dv: f64 = g.iter().zip(&weights).map(|(gc, wc)| gc * wc).sum();
                if channels == 3 && k > 3 {
                    grad[3] += v * TINT_GAIN * (g[0] - g[2]);
                }
                let extra = self.render_spec.extra_blobs.len();
                let masks = &self.blob_masks[(i * self.config.image.width + j) * extra..][..extra];
                for (e, &(_, _, _, target)) in
                    self.render_spec.extra_blobs.iter().enumerate().rev()
                {
                    let v_in = trace[e];
                    let m = masks[e];
                    let weight = EXTRA_BLOB_GAIN * a(4 + e) * m;
                    grad[4 + e] += dv * (target - v_in) * EXTRA_BLOB_GAIN * m;
                    dv *= 1.0 - weight;
                }
                let PixelGeom {
                    bg,
                    sigma,
                    level,
                    r2,
                    mask,
                    ..
                } = geom;
                grad[0] += dv * (1.0 - mask) * BG_GAIN;
                if k > 1 {
                    let dmask_dsigma = mask * r2 / (sigma * sigma * sigma);
                    grad[1] += dv * (level - bg) * dmask_dsigma * BLOB_SIGMA_GAIN;
                }
                if k > 2 {
                    grad[2] += dv * mask * BLOB_LEVEL_GAIN;
                }
            }
        }
        grad
    }

    /// `‖g_ℓ(z + d) − g_ℓ(z)‖²`.
    pub fn layer_change_loss(&self, z: &[f64], y: usize, d: &[f64], layer: usize) -> Result<f64> {
        self.check_direction(z, d)?;
        let base = self.layer_features(z, y, layer)?;
        let moved = self.layer_features(&shifted(z, d), y, layer)?;
        Ok(base.iter().zip(&moved).map(|(a, b)| (b - a).powi(2)).sum())
    }

    /// Analytic gradient of [`Self::layer_change_loss`] with respect to `d`.
    pub fn layer_change_gradient(
        &self,
        z: &[f64],
        y: usize,
        d: &[f64],
        layer: usize,
    ) -> Result<Vector> {
        Ok(self.layer_change_loss_and_gradient(z, y, d, layer)?.1)
    }

    pub fn layer_change_loss_and_gradient(
        &self,
        z: &[f64],
        y: usize,
        d: &[f64],
        layer: usize,
    ) -> Result<(f64, Vector)> {
        self.check_direction(z, d)?;
        if layer >= LAYER_COUNT {
            return Err(GeneratorError::UnknownLayer(layer));
        }
        let reference = self.tap(self.forward(z, y)?, layer);
        let x = shifted(z, d);
        let pass = self.forward(&x, y)?;
        let moved = self.tap(pass.clone(), layer);
        let residual: Vector = moved.iter().zip(&reference).map(|(a, b)| a - b).collect();
        let loss = residual.iter().map(|r| r * r).sum();
        let upstream: Vector = residual.iter().map(|r| 2.0 * r).collect();
        let grad = self.backpropagate(&pass, layer, upstream)?;
        Ok((loss, grad))
    }

    /// Pulls a cotangent at `layer` back to the latent input.
    pub fn backpropagate(&self, pass: &ForwardPass, layer: usize, upstream: Vector) -> Result<Vector> {
        let m = self.latent_dim();
        let mut grad_z = vec![0.0; m];
        let grad_h2: Vector;
        match layer {
            0 => {
                return self.backprop_hidden1(pass, upstream, grad_z);
            }
            1 => grad_h2 = upstream,
            2 | 3 => {
                let grad_attrs = if layer == 3 {
                    self.render_vjp(&pass.attributes, &upstream)
                } else {
                    upstream
                };
                let grad_logits: Vector = grad_attrs
                    .iter()
                    .zip(&pass.attributes)
                    .map(|(g, a)| g * a * (1.0 - a))
                    .collect();
                grad_z = self.planted.transpose_matvec(&grad_logits)?;
                let eps = self.epsilon();
                grad_h2 = self
                    .net
                    .readout
                    .transpose_matvec(&grad_logits)?
                    .into_iter()
                    .map(|g| g * eps)
                    .collect();
            }
            other => return Err(GeneratorError::UnknownLayer(other)),
        }
        let grad_pre2: Vector = grad_h2
            .iter()
            .zip(&pass.hidden2)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        let grad_h1 = self.net.second.weights.transpose_matvec(&grad_pre2)?;
        self.backprop_hidden1(pass, grad_h1, grad_z)
    }

    fn backprop_hidden1(&self, pass: &ForwardPass, grad_h1: Vector, mut grad_z: Vector) -> Result<Vector> {
        let grad_pre1: Vector = grad_h1
            .iter()
            .zip(&pass.hidden1)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        let through = self.net.first.weights.transpose_matvec(&grad_pre1)?;
        axpy(1.0, &through, &mut grad_z);
        Ok(grad_z)
    }

    /// Fixes `(z, y, layer)` and caches the reference features so repeated
    /// loss evaluations only run the shifted forward pass.
    pub fn layer_objective(&self, z: &[f64], y: usize, layer: usize) -> Result<LayerObjective<'_>> {
        let reference = self.layer_features(z, y, layer)?;
        Ok(LayerObjective {
            world: self,
            z: z.to_vec(),
            y,
            layer,
            reference,
        })
    }

    fn check_direction(&self, z: &[f64], d: &[f64]) -> Result<()> {
        if d.len() != z.len() {
            return Err(GeneratorError::DimensionMismatch(format!(
                "direction has length {}, latent code has {}",
                d.len(),
                z.len()
            )));
        }
        Ok(())
    }
}

/// `d ↦ ‖g_ℓ(z + d) − g_ℓ(z)‖²` for one fixed `(z, y, ℓ)`.
#[derive(Debug, Clone)]
pub struct LayerObjective<'w> {
    world: &'w SyntheticWorld,
    z: Vector,
    y: usize,
    layer: usize,
    reference: Vector,
}

impl LayerObjective<'_> {
    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn loss(&self, d: &[f64]) -> Result<f64> {
        self.world.check_direction(&self.z, d)?;
        let moved = self.world.layer_features(&shifted(&self.z, d), self.y, self.layer)?;
        Ok(moved
            .iter()
            .zip(&self.reference)
            .map(|(a, b)| (a - b).powi(2))
            .sum())
    }

    pub fn loss_and_gradient(&self, d: &[f64]) -> Result<(f64, Vector)> {
        self.world.check_direction(&self.z, d)?;
        let pass = self.world.forward(&shifted(&self.z, d), self.y)?;
        let moved = self.world.tap(pass.clone(), self.layer);
        let residual: Vector = moved.iter().zip(&self.reference).map(|(a, b)| a - b).collect();
        let loss = residual.iter().map(|r| r * r).sum();
        let upstream = residual.iter().map(|r| 2.0 * r).collect();
        Ok((loss, self.world.backpropagate(&pass, self.layer, upstream)?))
    }
}

#[derive(Debug, Clone, Copy)]
struct PixelGeom {
    bg: f64,
    sigma: f64,
    level: f64,
    r2: f64,
    mask: f64,
}

fn channel_weights(attrs: &[f64], channels: usize) -> Vec<f64> {
    if channels == 1 {
        return vec![1.0];
    }
    let tint = attrs.get(3).copied().unwrap_or(0.5);
    vec![1.0 - TINT_GAIN + TINT_GAIN * tint, 1.0 - TINT_GAIN / 2.0, 1.0 - TINT_GAIN * tint]
}

fn shifted(z: &[f64], d: &[f64]) -> Vector {
    z.iter().zip(d).map(|(a, b)| a + b).collect()
}

/// First `ceil(K/2)` concepts are visible everywhere. Each remaining concept
/// stays visible in class 0 and is hidden from a seeded, nonempty subset of
/// the other classes.
fn generate_mask(seed: u64, k: usize, c: usize) -> Vec<Vec<bool>> {
    let mut rng = seeded(derive_seed(seed, "world/class-mask"));
    let shared = k.div_ceil(2);
    (0..k)
        .map(|ki| {
            if ki < shared {
                return vec![true; c];
            }
            let mut row: Vec<bool> = (0..c).map(|y| y == 0 || rng.random_bool(0.5)).collect();
            if row.iter().all(|&b| b) {
                let hide = rng.random_range(1..c);
                row[hide] = false;
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_difference_gradient, norm, scale};
    use crate::rng::gaussian_vector;

    fn flat_world(epsilon: f64) -> SyntheticWorld {
        let mut w = SyntheticWorld::build(WorldConfig {
            epsilon,
            ..WorldConfig::default()
        })
        .unwrap();
        // Zero class offsets for closed-form checks.
        for k in 0..w.concept_count() {
            for y in 0..w.class_count() {
                w.class_offsets[(k, y)] = 0.0;
            }
        }
        w
    }

    #[test]
    fn planted_directions_are_orthonormal() {
        let w = SyntheticWorld::build(WorldConfig::default()).unwrap();
        let p = w.planted_directions();
        for i in 0..8 {
            for j in 0..8 {
                let d = dot(p.row(i), p.row(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() <= 1e-8, "gram[{i}][{j}] = {d}");
            }
        }
    }

    #[test]
    fn full_rank_planted_basis() {
        let cfg = WorldConfig {
            latent_dim: 6,
            concept_count: 6,
            concept_tokens: (0..6).map(|i| format!("c{i}")).collect(),
            ..WorldConfig::default()
        };
        let w = SyntheticWorld::build(cfg).unwrap();
        let gram = w
            .planted_directions()
            .matmul(&w.planted_directions().transpose())
            .unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_more_concepts_than_dimensions() {
        let cfg = WorldConfig {
            latent_dim: 4,
            concept_count: 5,
            concept_tokens: (0..5).map(|i| format!("c{i}")).collect(),
            ..WorldConfig::default()
        };
        assert!(matches!(
            SyntheticWorld::build(cfg),
            Err(GeneratorError::InvalidConfig(_))
        ));
    }

    #[test]
    fn build_is_deterministic() {
        let a = SyntheticWorld::build(WorldConfig::default()).unwrap();
        let b = SyntheticWorld::build(WorldConfig::default()).unwrap();
        assert_eq!(a, b);
        let other = SyntheticWorld::build(WorldConfig {
            seed: 2,
            ..WorldConfig::default()
        })
        .unwrap();
        assert_ne!(a.planted, other.planted);
    }

    #[test]
    fn mask_shares_at_least_half() {
        for seed in 0..20 {
            let w = SyntheticWorld::build(WorldConfig {
                seed,
                ..WorldConfig::default()
            })
            .unwrap();
            let shared = (0..8).filter(|&k| w.is_shared(k)).count();
            assert!(shared >= 4);
            assert!(shared < 8, "some concept must be class specific");
            for k in 0..8 {
                assert!(w.is_visible(k, 0));
                for y in 0..4 {
                    if !w.is_visible(k, y) {
                        assert_eq!(w.class_offset(k, y), MASKED_OFFSET);
                    }
                }
            }
        }
    }

    #[test]
    fn attributes_along_planted_direction() {
        let w = flat_world(0.0);
        let t = 1.7;
        let z = scale(w.planted_direction(3), t);
        let a = w.attributes(&z, 1).unwrap();
        for (k, ak) in a.iter().enumerate() {
            let expect = if k == 3 { sigmoid(t) } else { 0.5 };
            assert!((ak - expect).abs() < 1e-12);
        }
        let zero = vec![0.0; 32];
        assert!(w.attributes(&zero, 0).unwrap().iter().all(|a| *a == 0.5));
    }

    #[test]
    fn attributes_match_straight_line_formula() {
        let w = SyntheticWorld::build(WorldConfig::default()).unwrap();
        let z = gaussian_vector(&mut seeded(77), 32);
        let y = 2;
        // Independent re-derivation without the Dense helpers.
        let tanh_apply = |d: &Dense, x: &[f64]| -> Vec<f64> {
            (0..d.weights.rows())
                .map(|r| {
                    let mut s = d.bias[r];
                    for c in 0..x.len() {
                        s += d.weights[(r, c)] * x[c];
                    }
                    s.tanh()
                })
                .collect()
        };
        let h1 = tanh_apply(&w.net.first, &z);
        let h2 = tanh_apply(&w.net.second, &h1);
        let a = w.attributes(&z, y).unwrap();
        for k in 0..8 {
            let mut n = 0.0;
            for c in 0..h2.len() {
                n += w.net.readout[(k, c)] * h2[c];
            }
            let mut proj = 0.0;
            for c in 0..32 {
                proj += w.planted[(k, c)] * z[c];
            }
            let logit = proj + 0.1 * n + w.class_offsets[(k, y)];
            let expect = 1.0 / (1.0 + (-logit).exp());
            assert!((a[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn attribute_taps_and_dimension_checks() {
        let w = SyntheticWorld::build(WorldConfig::default()).unwrap();
        let z = gaussian_vector(&mut seeded(5), 32);
        assert_eq!(w.layer_features(&z, 0, 2).unwrap(), w.attributes(&z, 0).unwrap());
        assert_eq!(
            w.layer_features(&z, 0, 3).unwrap(),
            w.render(&z, 0).unwrap().pixels
        );
        assert!(matches!(
            w.layer_features(&z, 0, 4),
            Err(GeneratorError::UnknownLayer(4))
        ));
        assert!(matches!(
            w.attributes(&z[..5], 0),
            Err(GeneratorError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn moving_along_planted_direction_changes_one_attribute() {
        let w = flat_world(0.0);
        let z = gaussian_vector(&mut seeded(11), 32);
        let before = w.layer_features(&z, 0, 2).unwrap();
        let after = w
            .layer_features(&shifted(&z, &scale(w.planted_direction(5), 0.7)), 0, 2)
            .unwrap();
        for k in 0..8 {
            let delta = (after[k] - before[k]).abs();
            if k == 5 {
                assert!(delta > 1e-3);
            } else {
                assert!(delta < 1e-15);
            }
        }
    }

    #[test]
    fn attributes_increase_along_planted_direction() {
        let w = flat_world(0.0);
        let z = gaussian_vector(&mut seeded(12), 32);
        let mut prev = f64::NEG_INFINITY;
        for step in -20..=20 {
            let zt = shifted(&z, &scale(w.planted_direction(2), step as f64 * 0.3));
            let a = w.attributes(&zt, 1).unwrap()[2];
            assert!(a > prev);
            prev = a;
        }
    }

    #[test]
    fn brightness_tracks_background_attribute() {
        let w = flat_world(0.0);
        let bright = w.render(&scale(w.planted_direction(0), 12.0), 0).unwrap();
        let dark = w.render(&scale(w.planted_direction(0), -12.0), 0).unwrap();
        assert!(bright.mean() > dark.mean());
        assert!(bright.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(bright, w.render(&scale(w.planted_direction(0), 12.0), 0).unwrap());
    }

    #[test]
    fn blob_area_grows_with_width_attribute() {
        let w = flat_world(0.0);
        // Dark background, bright blob, vary the width attribute.
        let base = add_all(&[
            scale(w.planted_direction(0), -8.0),
            scale(w.planted_direction(2), 8.0),
        ]);
        let count = |t: f64| {
            let z = shifted(&base, &scale(w.planted_direction(1), t));
            let a = w.attributes(&z, 0).unwrap();
            let bg = BG_BASE + BG_GAIN * a[0];
            let img = w.render(&z, 0).unwrap();
            // Green channel carries no tint dependence.
            img.pixels
                .chunks(3)
                .filter(|px| px[1] > (bg + 0.1) * (1.0 - TINT_GAIN / 2.0))
                .count()
        };
        assert!(count(8.0) > count(-8.0));
    }

    fn add_all(vs: &[Vector]) -> Vector {
        let mut out = vec![0.0; vs[0].len()];
        for v in vs {
            axpy(1.0, v, &mut out);
        }
        out
    }

    #[test]
    fn zero_direction_has_zero_loss_and_gradient() {
        let w = SyntheticWorld::build(WorldConfig::default()).unwrap();
        let z = gaussian_vector(&mut seeded(1), 32);
        let d = vec![0.0; 32];
        for layer in 0..LAYER_COUNT {
            assert_eq!(w.layer_change_loss(&z, 0, &d, layer).unwrap(), 0.0);
            assert!(w
                .layer_change_gradient(&z, 0, &d, layer)
                .unwrap()
                .iter()
                .all(|g| *g == 0.0));
        }
    }

    #[test]
    fn attribute_loss_ignores_orthogonal_complement() {
        let w = flat_world(0.0);
        let z = gaussian_vector(&mut seeded(2), 32);
        let raw = gaussian_vector(&mut seeded(3), 32);
        let basis: Vec<Vector> = (0..8).map(|k| w.planted_direction(k).to_vec()).collect();
        let d = project_orthonormal(&raw, &basis).unwrap();
        assert!(w.layer_change_loss(&z, 0, &d, 2).unwrap() < 1e-28);
    }

    #[test]
    fn loss_matches_two_forward_passes() {
        let w = SyntheticWorld::build(WorldConfig::default()).unwrap();
        let z = gaussian_vector(&mut seeded(8), 32);
        let d = gaussian_vector(&mut seeded(9), 32);
        for layer in 0..LAYER_COUNT {
            let a = w.layer_features(&z, 1, layer).unwrap();
            let b = w.layer_features(&shifted(&z, &d), 1, layer).unwrap();
            let expect: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
            let got = w.layer_change_loss(&z, 1, &d, layer).unwrap();
            assert!((got - expect).abs() <= 1e-14 * (1.0 + expect));
        }
    }

    #[test]
    fn gradient_matches_finite_differences_spot_check() {
        let w = SyntheticWorld::build(WorldConfig::default()).unwrap();
        let z = gaussian_vector(&mut seeded(21), 32);
        let d = scale(&gaussian_vector(&mut seeded(22), 32), 0.2);
        for layer in 0..LAYER_COUNT {
            let analytic = w.layer_change_gradient(&z, 3, &d, layer).unwrap();
            let numeric = finite_difference_gradient(
                |dd| w.layer_change_loss(&z, 3, dd, layer).unwrap(),
                &d,
                1e-5,
            );
            let err = norm(&crate::numerics::sub(&analytic, &numeric)) / norm(&numeric).max(1e-12);
            assert!(err < 1e-4, "layer {layer}: relative error {err}");
        }
    }

    #[test]
    fn attribute_gradient_stays_in_planted_span() {
        let w = flat_world(0.0);
        let z = gaussian_vector(&mut seeded(31), 32);
        let d = gaussian_vector(&mut seeded(32), 32);
        let g = w.layer_change_gradient(&z, 0, &d, 2).unwrap();
        let mut residual = g.clone();
        for k in 0..8 {
            let u = w.planted_direction(k);
            axpy(-dot(&g, u), u, &mut residual);
        }
        assert!(norm(&residual) <= 1e-10 * (1.0 + norm(&g)));
    }
}
