//! Flat TOML run configuration. Every key is optional; missing keys keep
//! their defaults and command-line flags win over the file.

use std::path::Path;

use pcup_core::geometry::DownsampleKernel;
use pcup_core::losses::Reconstruction;
use pcup_core::mesh::SamplingMode;
use pcup_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io_at, CliError, CliResult};

/// Points drawn from a mesh given as training input.
pub const DEFAULT_MESH_SAMPLES: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub mesh_samples: usize,
    pub mesh_sampling: SamplingMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            mesh_samples: DEFAULT_MESH_SAMPLES,
            mesh_sampling: SamplingMode::Uniform,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr_g: Option<f64>,
    pub lr_d: Option<f64>,
    pub pairs: Option<usize>,
    pub ratio: Option<usize>,
    pub kernel: Option<DownsampleKernel>,
    pub weight_adversarial: Option<f64>,
    pub weight_reconstruction: Option<f64>,
    pub weight_uniform: Option<f64>,
    pub weight_repulsion: Option<f64>,
    pub weight_decay: Option<f64>,
    pub use_discriminator: Option<bool>,
    pub use_self_attention: Option<bool>,
    pub progressive_mode: Option<bool>,
    pub use_uniform_loss: Option<bool>,
    pub use_repulsion_loss: Option<bool>,
    pub reconstruction: Option<Reconstruction>,
    pub augment: Option<bool>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub channels: Option<usize>,
    pub mesh_samples: Option<usize>,
    pub mesh_sampling: Option<SamplingMode>,
}

macro_rules! apply {
    ($src:expr, $($field:ident => $target:expr),* $(,)?) => {
        $(if let Some(v) = $src.$field { $target = v; })*
    };
}

impl FileConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply(self, c: &mut RunConfig) {
        let t = &mut c.train;
        apply!(self,
            epochs => t.epochs,
            batch_size => t.batch_size,
            lr_g => t.lr_g,
            lr_d => t.lr_d,
            pairs => t.pairs,
            ratio => t.ratio,
            kernel => t.kernel,
            weight_adversarial => t.weights.adversarial,
            weight_reconstruction => t.weights.reconstruction,
            weight_uniform => t.weights.uniform,
            weight_repulsion => t.weights.repulsion,
            weight_decay => t.weights.weight_decay,
            use_discriminator => t.use_discriminator,
            use_self_attention => t.use_self_attention,
            progressive_mode => t.progressive_mode,
            use_uniform_loss => t.use_uniform_loss,
            use_repulsion_loss => t.use_repulsion_loss,
            reconstruction => t.reconstruction,
            augment => t.augment,
            seed => t.seed,
            k => t.k,
            channels => t.channels,
        );
        if let Some(v) = self.mesh_samples {
            c.mesh_samples = v;
        }
        if let Some(v) = self.mesh_sampling {
            c.mesh_sampling = v;
        }
    }

    /// Every key filled in from `c`.
    pub fn from_run(c: &RunConfig) -> Self {
        let t = &c.train;
        Self {
            epochs: Some(t.epochs),
            batch_size: Some(t.batch_size),
            lr_g: Some(t.lr_g),
            lr_d: Some(t.lr_d),
            pairs: Some(t.pairs),
            ratio: Some(t.ratio),
            kernel: Some(t.kernel),
            weight_adversarial: Some(t.weights.adversarial),
            weight_reconstruction: Some(t.weights.reconstruction),
            weight_uniform: Some(t.weights.uniform),
            weight_repulsion: Some(t.weights.repulsion),
            weight_decay: Some(t.weights.weight_decay),
            use_discriminator: Some(t.use_discriminator),
            use_self_attention: Some(t.use_self_attention),
            progressive_mode: Some(t.progressive_mode),
            use_uniform_loss: Some(t.use_uniform_loss),
            use_repulsion_loss: Some(t.use_repulsion_loss),
            reconstruction: Some(t.reconstruction),
            augment: Some(t.augment),
            seed: Some(t.seed),
            k: Some(t.k),
            channels: Some(t.channels),
            mesh_samples: Some(c.mesh_samples),
            mesh_sampling: Some(c.mesh_sampling),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        self.train.validate()?;
        if self.mesh_samples == 0 {
            return Err(CliError::Config(
                "config field `mesh_samples`: must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
