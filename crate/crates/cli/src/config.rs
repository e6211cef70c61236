use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use latent_lexicon::corpus::Lexicon;
use latent_lexicon::eval::{SvmExperimentOptions, SvmOptions};
use latent_lexicon::generator::SyntheticWorld;
use latent_lexicon::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub trials_per_concept: usize,
    pub pair_count: usize,
    pub min_freq: usize,
    pub svm_n_z: usize,
    pub svm_holdout: f64,
    pub svm: SvmOptions,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let svm = SvmExperimentOptions::default();
        Self {
            trials_per_concept: 40,
            pair_count: 50,
            min_freq: latent_lexicon::eval::choice::DEFAULT_EVAL_MIN_FREQ,
            svm_n_z: svm.n_z,
            svm_holdout: svm.holdout,
            svm: svm.svm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeSettings {
    pub bind: String,
    pub assignments_per_task: usize,
}

impl Default for ServeSettings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            assignments_per_task: 1,
        }
    }
}

/// Everything a command needs besides its file arguments. JSON; every
/// field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    /// Directory with `dictionary.txt` etc.; the bundled lexicon otherwise.
    pub lexicon_dir: Option<PathBuf>,
    pub eval: EvalSettings,
    pub serve: ServeSettings,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: Self = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Self::default(),
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.pipeline;
        if !(p.lambda >= 0.0) {
            bail!("lambda must be >= 0, got {}", p.lambda);
        }
        if !p.alpha.is_finite() {
            bail!("alpha must be finite, got {}", p.alpha);
        }
        if p.n_z == 0 {
            bail!("n_z must be >= 1");
        }
        p.schedule
            .validate(p.world.latent_dim)
            .map_err(|e| anyhow::anyhow!("schedule: {e}"))?;
        if let Some(dir) = &self.lexicon_dir {
            if !dir.is_dir() {
                bail!("lexicon_dir {} does not exist", dir.display());
            }
        }
        Ok(())
    }

    pub fn world(&self) -> Result<SyntheticWorld> {
        SyntheticWorld::build(self.pipeline.world.clone()).context("building world")
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        match &self.lexicon_dir {
            Some(dir) => Lexicon::load_dir(dir).context("loading lexicon"),
            None => Ok(Lexicon::bundled()),
        }
    }

    pub fn svm_options(&self) -> SvmExperimentOptions {
        SvmExperimentOptions {
            n_z: self.eval.svm_n_z,
            holdout: self.eval.svm_holdout,
            alpha: self.pipeline.alpha,
            seed: self.pipeline.stage_seed("svm"),
            min_freq: self.eval.min_freq,
            svm: self.eval.svm,
        }
    }
}
