//! Internal training on a single cloud and the resulting upsampler.

mod ablation;
mod checkpoint;
mod config;
mod log;

pub use ablation::{run_ablation, variant_config, AblationRow};
pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use log::{EpochRecord, TrainLog};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{Adam, Gradients, Graph, Tensor};
use crate::error::{Error, Result};
use crate::geometry::{
    augment_pair, build_lr_hr_pairs, normalize_unit_sphere, random_subsample, NormalizationTransform,
    PointCloud, TrainingPair, MIN_LR_POINTS,
};
use crate::losses::{discriminator_adversarial, joint_loss, weight_decay, JointLossConfig, LossBreakdown};
use crate::network::{Discriminator, Generator};

/// Result of [`self_train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
    /// Maps the input cloud into the frame the networks were trained in.
    pub normalization: NormalizationTransform,
}

impl TrainOutcome {
    pub fn generator(&self) -> &Generator {
        &self.checkpoint.generator
    }
}

/// Normalizes the cloud and trims it to a multiple of the ratio so every
/// generated cloud matches its target in size.
fn training_cloud(pc: &PointCloud, cfg: &TrainConfig) -> Result<(PointCloud, NormalizationTransform)> {
    let lr_points = pc.len() / cfg.ratio;
    let needed = (cfg.k + 1).max(MIN_LR_POINTS);
    if lr_points < needed {
        return Err(Error::CloudTooSmall {
            points: pc.len(),
            ratio: cfg.ratio,
            minimum: needed * cfg.ratio,
        });
    }
    let (unit, transform) = normalize_unit_sphere(pc)?;
    let keep = lr_points * cfg.ratio;
    if keep == unit.len() {
        return Ok((unit, transform));
    }
    let idx = random_subsample(&unit, keep, cfg.seed ^ 0x7472_696d)?;
    Ok((unit.select(&idx)?, transform))
}

fn rng_digest(rng: &ChaCha8Rng) -> String {
    format!("{:x}-{:x}", rng.get_stream(), rng.get_word_pos())
}

struct PairResult {
    grads: Gradients,
    breakdown: LossBreakdown,
    generated: PointCloud,
    target: PointCloud,
}

fn generator_step(
    generator: &Generator,
    discriminator: Option<&Discriminator>,
    lr: &PointCloud,
    hr: &PointCloud,
    loss: &JointLossConfig,
) -> Result<PairResult> {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_points(lr));
    let y = generator.forward(&mut g, x, true)?;
    let target = g.constant(Tensor::from_points(hr));
    let score = match discriminator {
        Some(d) if loss.weights.adversarial > 0.0 => Some(d.forward(&mut g, y, false)?),
        _ => None,
    };
    let j = joint_loss(&mut g, y, target, score, loss)?;
    let generated = g.value(y).to_point_cloud()?;
    let grads = g.backward(j.total)?;
    Ok(PairResult {
        grads,
        breakdown: j.breakdown,
        generated,
        target: hr.clone(),
    })
}

fn discriminator_step(
    d: &Discriminator,
    fake: &PointCloud,
    real: &PointCloud,
    decay: f64,
) -> Result<(Gradients, f64)> {
    let mut g = Graph::new();
    let f = g.constant(Tensor::from_points(fake));
    let r = g.constant(Tensor::from_points(real));
    let sf = d.forward(&mut g, f, true)?;
    let sr = d.forward(&mut g, r, true)?;
    let ld = discriminator_adversarial(&mut g, sf, sr)?;
    let value = g.scalar(ld)?;
    let total = if decay > 0.0 {
        let wd = weight_decay(&mut g)?;
        let wd = g.scale(wd, decay)?;
        g.add(ld, wd)?
    } else {
        ld
    };
    Ok((g.backward(total)?, value))
}

fn average(results: impl Iterator<Item = Gradients>, count: usize) -> Gradients {
    let mut acc = Gradients::default();
    for g in results {
        acc.accumulate(&g);
    }
    acc.scale(1.0 / count as f64);
    acc
}

#[derive(Default)]
struct EpochSums {
    breakdown: LossBreakdown,
    discriminator: f64,
    count: usize,
}

impl EpochSums {
    fn add(&mut self, b: &LossBreakdown) {
        let s = &mut self.breakdown;
        s.adversarial += b.adversarial;
        s.reconstruction += b.reconstruction;
        s.uniform += b.uniform;
        s.repulsion += b.repulsion;
        s.regularization += b.regularization;
        s.total += b.total;
        self.count += 1;
    }

    fn record(&self, epoch: usize, seconds: f64, rng: &ChaCha8Rng) -> EpochRecord {
        let n = self.count.max(1) as f64;
        let b = &self.breakdown;
        EpochRecord {
            epoch,
            adversarial: b.adversarial / n,
            reconstruction: b.reconstruction / n,
            uniform: b.uniform / n,
            repulsion: b.repulsion / n,
            regularization: b.regularization / n,
            total: b.total / n,
            discriminator: self.discriminator / n,
            seconds,
            rng_digest: rng_digest(rng),
        }
    }
}

/// Trains a generator (and optionally a discriminator) on pairs built from
/// the cloud itself. Deterministic for a given cloud and config.
pub fn self_train(pc: &PointCloud, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (cloud, normalization) = training_cloud(pc, cfg)?;
    let pairs = build_lr_hr_pairs(&cloud, cfg.pairs, cfg.kernel, cfg.ratio, cfg.seed)?;
    train_on_pairs(&pairs, cfg).map(|(checkpoint, log)| TrainOutcome {
        checkpoint,
        log,
        normalization,
    })
}

/// The training loop over prepared pairs.
pub fn train_on_pairs(pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<(Checkpoint, TrainLog)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = Checkpoint {
        config: cfg.clone(),
        epoch: 0,
        generator: Generator::new(cfg.generator_config(), &mut rng)?,
        discriminator: cfg
            .use_discriminator
            .then(|| Discriminator::new(cfg.channels, cfg.use_self_attention, &mut rng)),
        adam_g: Adam::new(cfg.lr_g),
        adam_d: cfg.use_discriminator.then(|| Adam::new(cfg.lr_d)),
    };
    let loss = cfg.loss_config();
    let augment = cfg.augment_params();
    let batch = cfg.effective_batch_size();
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let last_good = state.clone();
        let diverged = |e: Error| match e {
            Error::NonFiniteValue { op } => Error::Diverged {
                epoch,
                message: format!("non-finite value in `{op}`"),
                last_good: Box::new(last_good.clone()),
            },
            e => e,
        };

        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut rng);
        let mut sums = EpochSums::default();

        for chunk in order.chunks(batch) {
            let jobs: Vec<(usize, u64)> = chunk.iter().map(|&i| (i, rng.next_u64())).collect();
            let results: Vec<PairResult> = jobs
                .par_iter()
                .map(|&(i, seed)| {
                    let p = &pairs[i];
                    let (lr, hr, _) = augment_pair(&p.lr, &p.hr, &augment.with_seed(seed))?;
                    generator_step(&state.generator, state.discriminator.as_ref(), &lr, &hr, &loss)
                })
                .collect::<Result<_>>()
                .map_err(&diverged)?;

            for r in &results {
                if !r.breakdown.total.is_finite() {
                    return Err(diverged(Error::NonFiniteValue { op: "loss" }));
                }
                sums.add(&r.breakdown);
            }
            let grads = average(results.iter().map(|r| r.grads.clone()), results.len());
            state.adam_g.step(&mut state.generator, &grads)?;

            if let (Some(d), Some(adam)) = (state.discriminator.as_mut(), state.adam_d.as_mut()) {
                let steps: Vec<(Gradients, f64)> = results
                    .par_iter()
                    .map(|r| discriminator_step(d, &r.generated, &r.target, cfg.weights.weight_decay))
                    .collect::<Result<_>>()
                    .map_err(&diverged)?;
                sums.discriminator += steps.iter().map(|s| s.1).sum::<f64>();
                let grads = average(steps.into_iter().map(|s| s.0), results.len());
                adam.step(d, &grads)?;
            }
        }

        state.epoch = epoch;
        log.epochs
            .push(sums.record(epoch, start.elapsed().as_secs_f64(), &rng));
    }
    Ok((state, log))
}

/// Upsamples `pc` by `ratio` in its own unit frame and maps the result back.
pub fn upsample(pc: &PointCloud, generator: &Generator, ratio: usize) -> Result<PointCloud> {
    let cfg = generator.config();
    if cfg.ratio != ratio {
        return Err(Error::InvalidArgument(format!(
            "generator was built for ratio {} but {ratio} was requested",
            cfg.ratio
        )));
    }
    let (unit, transform) = normalize_unit_sphere(pc)?;
    transform.invert(&generator.upsample(&unit)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Parameters;
    use crate::losses::LossWeights;

    fn sphere(n: usize) -> PointCloud {
        // Fibonacci lattice.
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        PointCloud::new(
            (0..n)
                .map(|i| {
                    let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r = (1.0 - y * y).sqrt();
                    let t = golden * i as f64;
                    [r * t.cos(), y, r * t.sin()]
                })
                .collect(),
        )
        .unwrap()
    }

    fn small() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            pairs: 3,
            batch_size: 2,
            ratio: 2,
            ..Default::default()
        }
    }

    #[test]
    fn zero_weights_leave_parameters_unchanged() {
        let pc = sphere(64);
        let cfg = TrainConfig {
            weights: LossWeights::zero(),
            ..small()
        };
        let out = self_train(&pc, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = Generator::new(cfg.generator_config(), &mut rng).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        init.visit(&mut |_, t| a.push(t.clone()));
        out.generator().visit(&mut |_, t| b.push(t.clone()));
        assert_eq!(a, b);
    }

    #[test]
    fn training_is_deterministic() {
        let pc = sphere(64);
        let a = self_train(&pc, &small()).unwrap();
        let b = self_train(&pc, &small()).unwrap();
        assert!(a.log.same_losses(&b.log));
        assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
        assert_eq!(a.log.epochs.len(), 2);
        assert!(a.log.epochs[0].discriminator > 0.0);
    }

    #[test]
    fn disabled_components_log_zero() {
        let pc = sphere(64);
        let cfg = TrainConfig {
            use_discriminator: false,
            use_uniform_loss: false,
            use_repulsion_loss: false,
            ..small()
        };
        let out = self_train(&pc, &cfg).unwrap();
        for e in &out.log.epochs {
            assert_eq!(e.adversarial, 0.0);
            assert_eq!(e.uniform, 0.0);
            assert_eq!(e.repulsion, 0.0);
            assert_eq!(e.discriminator, 0.0);
            assert!(e.reconstruction > 0.0);
        }
        assert!(out.checkpoint.discriminator.is_none());
    }

    #[test]
    fn checkpoint_round_trip_preserves_upsampling() {
        let pc = sphere(64);
        let out = self_train(&pc, &small()).unwrap();
        let bytes = out.checkpoint.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, out.checkpoint);
        let a = upsample(&pc, out.generator(), 2).unwrap();
        let b = upsample(&pc, &back.generator, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 128);
        assert!(upsample(&pc, &back.generator, 4).is_err());
    }

    #[test]
    fn small_clouds_are_rejected() {
        let pc = sphere(30);
        assert!(matches!(
            self_train(&pc, &TrainConfig::default()),
            Err(Error::CloudTooSmall { .. })
        ));
    }

    #[test]
    fn uneven_sizes_are_trimmed() {
        let pc = sphere(67);
        let out = self_train(&pc, &small()).unwrap();
        assert_eq!(out.log.epochs.len(), 2);
        assert_eq!(upsample(&pc, out.generator(), 2).unwrap().len(), 134);
    }
}
