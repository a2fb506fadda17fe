use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xmodal_core::dsp::MelExtractor;
use xmodal_core::metrics::EvalOptions;
use xmodal_core::nn::{ProjectionShape, TrainConfig};
use xmodal_core::pairing::{DEFAULT_NEGATIVE_PROMPT, DEFAULT_PROMPT};
use xmodal_core::{dsp::MelParams, Error, Result};

/// Everything a pipeline run needs. Every field has a default, so a config
/// file only has to name what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub dsp: MelParams,
    pub train: TrainConfig,
    pub toy: ToySettings,
    pub split: SplitSettings,
    pub eval: EvalOptions,
    pub prompt: String,
    pub negative_prompt: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            dsp: MelParams::default(),
            train: TrainConfig::default(),
            toy: ToySettings::default(),
            split: SplitSettings::default(),
            eval: EvalOptions::default(),
            prompt: DEFAULT_PROMPT.to_owned(),
            negative_prompt: DEFAULT_NEGATIVE_PROMPT.to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// EMB1 store of artwork embeddings.
    pub artworks: Option<PathBuf>,
    /// EMB1 store of music embeddings.
    pub music: Option<PathBuf>,
    /// Tab-separated `artwork_id, style[, description]` lines.
    pub styles: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub audio_dir: Option<PathBuf>,
    pub spectrogram_dir: Option<PathBuf>,
    /// EMB1 store of generated-track embeddings keyed by artwork id.
    pub generated: Option<PathBuf>,
    /// EMB1 store of ground-truth music embeddings keyed by music id.
    pub groundtruth: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            artworks: None,
            music: None,
            styles: None,
            manifest: None,
            audio_dir: None,
            spectrogram_dir: None,
            generated: None,
            groundtruth: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Model sizes and data source for `train`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySettings {
    /// Train on the synthetic linear-conditioning task instead of a
    /// manifest with spectrograms.
    pub synthetic: bool,
    pub projection: ProjectionShape,
    /// Latent width for synthetic runs; real runs use the mel band count.
    pub latent_dim: usize,
    pub denoiser_hidden: usize,
    pub samples: usize,
    pub noise: f64,
    pub data_seed: u64,
    pub init_seed: u64,
}

impl Default for ToySettings {
    fn default() -> Self {
        Self {
            synthetic: false,
            projection: ProjectionShape::default(),
            latent_dim: 8,
            denoiser_hidden: 64,
            samples: 256,
            noise: 0.05,
            data_seed: 0,
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub train_fraction: f64,
    pub val_count: usize,
    pub seed: u64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            val_count: 100,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.paths;
        let all = [
            &p.artworks,
            &p.music,
            &p.styles,
            &p.manifest,
            &p.audio_dir,
            &p.spectrogram_dir,
            &p.generated,
            &p.groundtruth,
        ];
        if all.iter().any(|x| x.as_ref().is_some_and(|x| x.as_os_str().is_empty())) || p.output_dir.as_os_str().is_empty()
        {
            return Err(Error::Config("paths must not be empty".into()));
        }
        let s = &self.split;
        if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split.train_fraction {} must lie strictly between 0 and 1",
                s.train_fraction
            )));
        }
        MelExtractor::<f64>::new(self.dsp).map_err(|e| Error::Config(format!("dsp: {e}")))?;
        self.train.validate()?;
        self.toy.projection.validate().map_err(|e| Error::Config(e.to_string()))?;
        let t = &self.toy;
        if t.latent_dim == 0 || t.denoiser_hidden == 0 || t.samples == 0 || !(t.noise >= 0.0) {
            return Err(Error::Config(
                "toy latent_dim, denoiser_hidden and samples must be positive and noise non-negative".into(),
            ));
        }
        if !(self.eval.temperature > 0.0) || !(self.eval.smoothing >= 0.0) {
            return Err(Error::Config("eval temperature must be positive, smoothing non-negative".into()));
        }
        Ok(())
    }

    /// Fetches a required path or reports which one is missing.
    pub fn require<'a>(&self, value: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing required path `{name}` (config or flag)")))
    }
}
