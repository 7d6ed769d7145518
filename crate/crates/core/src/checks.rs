//! Finite-difference gradient suites over every tape op, every loss and the
//! full generator objective.
//!
//! Each instance draws fresh random inputs. Coordinates whose central
//! difference straddles a kink are excluded by [`grad_check_many`] and counted
//! in `skipped`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{grad_check_many, grad_check_params, GradCheckReport, Graph, NodeId, Tensor};
use crate::error::Result;
use crate::geometry::sample_unit_sphere;
use crate::losses::{
    chamfer_loss, discriminator_adversarial, emd_loss, generator_adversarial, joint_loss,
    repulsion_loss, uniform_loss, JointLossConfig, Reconstruction, RepulsionConfig,
    UniformLossConfig,
};
use crate::network::{Discriminator, Generator, GeneratorConfig};

/// Largest accepted relative error.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub max_rel_error: f64,
    pub instances: usize,
    pub checked: usize,
    pub skipped: usize,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error < TOLERANCE
    }

    pub fn line(&self) -> String {
        format!(
            "{:<14} max_rel_err={:.3e} instances={} coords={} skipped={} {}",
            self.name,
            self.max_rel_error,
            self.instances,
            self.checked,
            self.skipped,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

type Objective = Box<dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId> + Send + Sync>;

/// One random instance: inputs and the scalar function of them.
type Case = (Vec<Tensor>, Objective);

fn instance_rng(seed: u64, name: &str, i: usize) -> ChaCha8Rng {
    let tag = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag);
    rng.set_stream(i as u64);
    rng
}

fn run<F>(name: &str, instances: usize, seed: u64, make: F) -> Result<CheckRow>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Case> + Sync,
{
    let reports = (0..instances)
        .into_par_iter()
        .map(|i| {
            let (inputs, f) = make(&mut instance_rng(seed, name, i))?;
            grad_check_many(f, &inputs)
        })
        .collect::<Result<Vec<GradCheckReport>>>()?;
    Ok(fold(name, instances, &reports))
}

fn fold(name: &str, instances: usize, reports: &[GradCheckReport]) -> CheckRow {
    CheckRow {
        name: name.to_string(),
        max_rel_error: reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max),
        instances,
        checked: reports.iter().map(|r| r.checked).sum(),
        skipped: reports.iter().map(|r| r.skipped).sum(),
    }
}

fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

fn dim(rng: &mut impl Rng) -> usize {
    rng.random_range(1..=4)
}

/// Contracts `out` against fixed pseudo-random weights so every output
/// element contributes with a different coefficient.
fn contract(g: &mut Graph, out: NodeId, seed: u64) -> Result<NodeId> {
    let shape = g.shape(out).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(uniform(&mut rng, &shape, -1.0, 1.0));
    let p = g.mul(out, w)?;
    g.sum(p)
}

fn unary(
    rng: &mut ChaCha8Rng,
    lo: f64,
    hi: f64,
    op: impl Fn(&mut Graph, NodeId) -> Result<NodeId> + Send + Sync + 'static,
) -> Case {
    let shape = [dim(rng), dim(rng), dim(rng)];
    let x = uniform(rng, &shape, lo, hi);
    let w: u64 = rng.random();
    (
        vec![x],
        Box::new(move |g, ids| {
            let y = op(g, ids[0])?;
            contract(g, y, w)
        }),
    )
}

fn binary(
    rng: &mut ChaCha8Rng,
    op: impl Fn(&mut Graph, NodeId, NodeId) -> Result<NodeId> + Send + Sync + 'static,
) -> Case {
    let (m, n) = (dim(rng), dim(rng));
    let a = uniform(rng, &[m, n], -2.0, 2.0);
    let b = if rng.random_bool(0.5) {
        uniform(rng, &[m, n], -2.0, 2.0)
    } else {
        uniform(rng, &[n], -2.0, 2.0)
    };
    let w: u64 = rng.random();
    (
        vec![a, b],
        Box::new(move |g, ids| {
            let y = op(g, ids[0], ids[1])?;
            contract(g, y, w)
        }),
    )
}

fn op_case(name: &str, rng: &mut ChaCha8Rng) -> Result<Case> {
    let w: u64 = rng.random();
    let case: Case = match name {
        "matmul" => {
            let (m, k, n) = (dim(rng), dim(rng), dim(rng));
            let a = uniform(rng, &[m, k], -2.0, 2.0);
            let b = uniform(rng, &[k, n], -2.0, 2.0);
            (
                vec![a, b],
                Box::new(move |g, ids| {
                    let y = g.matmul(ids[0], ids[1])?;
                    contract(g, y, w)
                }),
            )
        }
        "transpose" => {
            let shape = [dim(rng), dim(rng)];
            let x = uniform(rng, &shape, -2.0, 2.0);
            (
                vec![x],
                Box::new(move |g, ids| {
                    let y = g.transpose(ids[0])?;
                    contract(g, y, w)
                }),
            )
        }
        "add" => binary(rng, |g, a, b| g.add(a, b)),
        "sub" => binary(rng, |g, a, b| g.sub(a, b)),
        "mul" => binary(rng, |g, a, b| g.mul(a, b)),
        "affine" => {
            let (s, t) = (rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0));
            unary(rng, -2.0, 2.0, move |g, x| g.affine(x, s, t))
        }
        "relu" => unary(rng, -1.0, 1.0, |g, x| g.relu(x)),
        "leaky_relu" => unary(rng, -1.0, 1.0, |g, x| g.leaky_relu(x, 0.2)),
        "sigmoid" => unary(rng, -4.0, 4.0, |g, x| g.sigmoid(x)),
        "square" => unary(rng, -2.0, 2.0, |g, x| g.square(x)),
        "sqrt" => unary(rng, 0.2, 2.0, |g, x| g.sqrt(x)),
        "log" => unary(rng, 0.2, 2.0, |g, x| g.log(x)),
        "exp" => unary(rng, -2.0, 2.0, |g, x| g.exp(x)),
        "sum" => unary(rng, -2.0, 2.0, |g, x| {
            let s = g.sum(x)?;
            g.square(s)
        }),
        "mean" => unary(rng, -2.0, 2.0, |g, x| {
            let s = g.mean(x)?;
            g.square(s)
        }),
        "reshape" => unary(rng, -2.0, 2.0, |g, x| {
            let n = g.value(x).numel();
            g.reshape(x, &[n])
        }),
        "reduce_sum" | "reduce_mean" | "reduce_max" | "softmax" => {
            let axis = rng.random_range(0..3);
            let which = name.to_string();
            unary(rng, -2.0, 2.0, move |g, x| match which.as_str() {
                "reduce_sum" => g.reduce_sum(x, axis),
                "reduce_mean" => g.reduce_mean(x, axis),
                "reduce_max" => g.reduce_max(x, axis),
                _ => g.softmax(x, axis),
            })
        }
        "norm_last" => {
            let rows = dim(rng);
            let x = uniform(rng, &[rows, 3], -1.0, 1.0);
            (
                vec![x],
                Box::new(move |g, ids| {
                    let y = g.norm_last(ids[0])?;
                    contract(g, y, w)
                }),
            )
        }
        "concat" => {
            let axis = rng.random_range(0..2);
            let fixed = dim(rng);
            let parts = rng.random_range(2..=3);
            let inputs = (0..parts)
                .map(|_| {
                    let d = dim(rng);
                    let shape = if axis == 0 { [d, fixed] } else { [fixed, d] };
                    uniform(rng, &shape, -2.0, 2.0)
                })
                .collect();
            (
                inputs,
                Box::new(move |g, ids| {
                    let y = g.concat(ids, axis)?;
                    contract(g, y, w)
                }),
            )
        }
        "gather" => {
            let (m, n) = (dim(rng), dim(rng));
            let axis = rng.random_range(0..2);
            let len = if axis == 0 { m } else { n };
            let idx: Vec<usize> = (0..rng.random_range(1..=6))
                .map(|_| rng.random_range(0..len))
                .collect();
            let x = uniform(rng, &[m, n], -2.0, 2.0);
            (
                vec![x],
                Box::new(move |g, ids| {
                    let y = g.gather(ids[0], &idx, axis)?;
                    contract(g, y, w)
                }),
            )
        }
        other => unreachable!("no case for op `{other}`"),
    };
    Ok(case)
}

/// Every differentiable tape op.
pub const OPS: [&str; 24] = [
    "matmul",
    "transpose",
    "add",
    "sub",
    "mul",
    "affine",
    "relu",
    "leaky_relu",
    "sigmoid",
    "square",
    "sqrt",
    "log",
    "exp",
    "concat",
    "gather",
    "reduce_sum",
    "reduce_mean",
    "reduce_max",
    "sum",
    "mean",
    "reshape",
    "softmax",
    "norm_last",
    "scale",
];

/// One row per tape op.
pub fn ops_suite(instances: usize, seed: u64) -> Result<Vec<CheckRow>> {
    OPS.iter()
        .map(|&name| {
            run(name, instances, seed, |rng| {
                if name == "scale" {
                    let s = rng.random_range(-3.0..3.0);
                    return Ok(unary(rng, -2.0, 2.0, move |g, x| g.scale(x, s)));
                }
                op_case(name, rng)
            })
        })
        .collect()
}

fn cloud_in_box(rng: &mut impl Rng, n: usize, side: f64) -> Tensor {
    uniform(rng, &[n, 3], -side / 2.0, side / 2.0)
}

/// Points per cloud in the loss suite.
pub const LOSS_POINTS: usize = 24;

const DISCRIMINATOR_CHANNELS: usize = 16;

fn fixed_discriminator(seed: u64) -> Discriminator {
    Discriminator::new(DISCRIMINATOR_CHANNELS, true, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn joint_case(rng: &mut ChaCha8Rng, reconstruction: Reconstruction) -> Case {
    let d = fixed_discriminator(rng.random());
    let cfg = JointLossConfig {
        reconstruction,
        ..Default::default()
    };
    let a = cloud_in_box(rng, LOSS_POINTS, 0.3);
    let b = cloud_in_box(rng, LOSS_POINTS, 0.3);
    (
        vec![a, b],
        Box::new(move |g, ids| {
            let s = d.forward(g, ids[0], false)?;
            Ok(joint_loss(g, ids[0], ids[1], Some(s), &cfg)?.total)
        }),
    )
}

/// Names of the loss-suite rows.
pub const LOSSES: [&str; 8] = [
    "emd",
    "chamfer",
    "repulsion",
    "uniform",
    "adversarial",
    "adversarial-d",
    "joint",
    "joint-cd",
];

fn loss_case(name: &str, rng: &mut ChaCha8Rng) -> Result<Case> {
    let n = LOSS_POINTS;
    let case: Case = match name {
        "emd" | "chamfer" => {
            let a = cloud_in_box(rng, n, 1.0);
            let b = cloud_in_box(rng, n, 1.0);
            let cd = name == "chamfer";
            (
                vec![a, b],
                Box::new(move |g, ids| {
                    if cd {
                        chamfer_loss(g, ids[0], ids[1])
                    } else {
                        emd_loss(g, ids[0], ids[1])
                    }
                }),
            )
        }
        // A box this small keeps most neighbor pairs inside the hinge.
        "repulsion" => (
            vec![cloud_in_box(rng, n, 0.08)],
            Box::new(|g, ids| repulsion_loss(g, ids[0], RepulsionConfig::default())),
        ),
        "uniform" => {
            let cfg = UniformLossConfig::default();
            (
                vec![cloud_in_box(rng, n, 0.3)],
                Box::new(move |g, ids| uniform_loss(g, ids[0], &cfg)),
            )
        }
        "adversarial" => {
            let f = Tensor::scalar(rng.random_range(0.05..0.95));
            let r = Tensor::scalar(rng.random_range(0.05..0.95));
            (
                vec![f, r],
                Box::new(|g, ids| {
                    let lg = generator_adversarial(g, ids[0])?;
                    let ld = discriminator_adversarial(g, ids[0], ids[1])?;
                    g.add(lg, ld)
                }),
            )
        }
        "adversarial-d" => {
            let d = fixed_discriminator(rng.random());
            let fake = cloud_in_box(rng, n, 1.0);
            let real = cloud_in_box(rng, n, 1.0);
            (
                vec![fake, real],
                Box::new(move |g, ids| {
                    let sf = d.forward(g, ids[0], false)?;
                    let sr = d.forward(g, ids[1], false)?;
                    let lg = generator_adversarial(g, sf)?;
                    let ld = discriminator_adversarial(g, sf, sr)?;
                    g.add(lg, ld)
                }),
            )
        }
        "joint" => joint_case(rng, Reconstruction::Emd),
        "joint-cd" => joint_case(rng, Reconstruction::Cd),
        other => unreachable!("no case for loss `{other}`"),
    };
    Ok(case)
}

/// One row per loss, each on clouds of [`LOSS_POINTS`] points.
pub fn losses_suite(instances: usize, seed: u64) -> Result<Vec<CheckRow>> {
    LOSSES
        .iter()
        .map(|&name| run(name, instances, seed, |rng| loss_case(name, rng)))
        .collect()
}

/// Gradient of the full joint objective with respect to every generator
/// parameter, for a random generator on `n` sphere points upsampled by
/// `ratio`, scored by a fixed discriminator.
pub fn end_to_end(n: usize, ratio: usize, seed: u64) -> Result<CheckRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = GeneratorConfig {
        ratio,
        ..Default::default()
    };
    let generator = Generator::new(config, &mut rng)?;
    let d = fixed_discriminator(rng.random());
    let input = Tensor::from_points(&sample_unit_sphere(n, rng.random())?);
    let target = Tensor::from_points(&sample_unit_sphere(n * ratio, rng.random())?);
    let cfg = JointLossConfig::default();
    let report = grad_check_params(&generator, |gen, g| {
        let x = g.constant(input.clone());
        let y = gen.forward(g, x, true)?;
        let t = g.constant(target.clone());
        let s = d.forward(g, y, false)?;
        Ok(joint_loss(g, y, t, Some(s), &cfg)?.total)
    })?;
    Ok(fold("end-to-end", 1, &[report]))
}
