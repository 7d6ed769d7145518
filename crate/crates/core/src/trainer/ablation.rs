use super::{self_train, upsample, TrainConfig, TrainLog};
use crate::error::{Error, Result};
use crate::geometry::{DownsampleKernel, PointCloud};
use crate::losses::Reconstruction;
use crate::metrics::{evaluate, MetricsReport, Reference};

/// One trained variant and its evaluation.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub name: String,
    pub config: TrainConfig,
    pub report: MetricsReport,
    pub log: TrainLog,
}

fn parse_pairs(s: &str) -> Option<usize> {
    s.strip_prefix('b')?.parse().ok().filter(|&b| b > 0)
}

/// Derives a variant from the base config by name:
///
/// - `full`: unchanged
/// - `wo-d`, `wo-self-att`, `wo-pm`, `wo-uni`, `wo-rep`: one component off
/// - `full-cd`: Chamfer reconstruction instead of EMD
/// - `bN`, `fps-bN`, `random-bN`: N pairs, optionally with a kernel
pub fn variant_config(base: &TrainConfig, name: &str) -> Result<TrainConfig> {
    let mut c = base.clone();
    match name {
        "full" => {}
        "wo-d" => c.use_discriminator = false,
        "wo-self-att" => c.use_self_attention = false,
        "wo-pm" => c.progressive_mode = false,
        "wo-uni" => c.use_uniform_loss = false,
        "wo-rep" => c.use_repulsion_loss = false,
        "full-cd" => c.reconstruction = Reconstruction::Cd,
        other => {
            let (kernel, rest) = match other.split_once('-') {
                Some(("fps", r)) => (Some(DownsampleKernel::Fps), r),
                Some(("random", r)) => (Some(DownsampleKernel::Random), r),
                _ => (None, other),
            };
            let pairs = parse_pairs(rest)
                .ok_or_else(|| Error::config("variants", format!("unknown variant `{name}`")))?;
            c.pairs = pairs;
            if let Some(k) = kernel {
                c.kernel = k;
            }
        }
    }
    Ok(c)
}

/// Trains every variant from the same seed, upsamples the input with it and
/// evaluates the result against `reference`. Rows come back in input order.
pub fn run_ablation(
    pc: &PointCloud,
    base: &TrainConfig,
    variants: &[String],
    reference: &Reference<'_>,
) -> Result<Vec<AblationRow>> {
    let configs = variants
        .iter()
        .map(|v| variant_config(base, v))
        .collect::<Result<Vec<_>>>()?;
    variants
        .iter()
        .zip(configs)
        .map(|(name, config)| {
            let out = self_train(pc, &config)?;
            let dense = upsample(pc, out.generator(), config.ratio)?;
            let report = evaluate(name, &dense, *reference)?;
            Ok(AblationRow {
                name: name.clone(),
                config,
                report,
                log: out.log,
            })
        })
        .collect()
}
