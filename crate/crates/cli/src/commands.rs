use std::path::Path;

use pcup_core::checks::{end_to_end, losses_suite, ops_suite, CheckRow};
use pcup_core::geometry::{DownsampleKernel, PointCloud};
use pcup_core::io::{read_cloud, read_input, write_cloud, Input};
use pcup_core::losses::Reconstruction;
use pcup_core::mesh::{sample_mesh, SamplingMode};
use pcup_core::metrics::{evaluate, write_csv, Reference};
use pcup_core::trainer::{run_ablation, self_train, upsample as run_upsample, Checkpoint};
use pcup_core::Error;
use serde_json::json;

use crate::config::{FileConfig, RunConfig};
use crate::error::{at_path, io_at, CliError, CliResult};
use crate::manifest::{sidecar, write_atomic, RunManifest};
use crate::{Scope, TrainFlags};

pub const CHECKPOINT_FILE: &str = "checkpoint.pcup";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

fn config_field(field: &str, e: Error) -> CliError {
    CliError::Config(format!("config field `{field}`: {e}"))
}

fn resolve(flags: &TrainFlags) -> CliResult<RunConfig> {
    let mut c = RunConfig::default();
    if let Some(path) = &flags.config {
        FileConfig::load(path)?.apply(&mut c);
    }
    let t = &mut c.train;
    if let Some(v) = flags.ratio {
        t.ratio = v;
    }
    if let Some(v) = flags.seed {
        t.seed = v;
    }
    if let Some(v) = &flags.kernel {
        t.kernel = v.parse::<DownsampleKernel>().map_err(|e| config_field("kernel", e))?;
    }
    if flags.no_discriminator {
        t.use_discriminator = false;
    }
    if let Some(v) = &flags.reconstruction {
        t.reconstruction = v
            .parse::<Reconstruction>()
            .map_err(|e| config_field("reconstruction", e))?;
    }
    if let Some(v) = flags.pairs {
        t.pairs = v;
    }
    if let Some(v) = flags.epochs {
        t.epochs = v;
    }
    c.validate()?;
    Ok(c)
}

/// Reads a training input, sampling meshes as the config says.
fn training_cloud(path: &Path, c: &RunConfig) -> CliResult<PointCloud> {
    read_input(path)
        .and_then(|i| i.into_cloud(c.mesh_samples, c.mesh_sampling, c.train.seed))
        .map_err(at_path(path))
}

fn run_manifest(command: &str, inputs: &[&Path], flags: Option<&TrainFlags>) -> CliResult<RunManifest> {
    let mut m = RunManifest::new(command);
    for p in inputs {
        m.digest_input(p)?;
    }
    if let Some(cfg) = flags.and_then(|f| f.config.as_deref()) {
        m.digest_input(cfg)?;
    }
    Ok(m)
}

fn snapshot(c: &RunConfig) -> serde_json::Value {
    serde_json::to_value(FileConfig::from_run(c)).expect("config serializes")
}

pub fn train(input: &Path, out: &Path, flags: &TrainFlags) -> CliResult<()> {
    let mut manifest = run_manifest("train", &[input], Some(flags))?;
    let c = resolve(flags)?;
    manifest.seed = Some(c.train.seed);
    manifest.config = snapshot(&c);
    let cloud = training_cloud(input, &c)?;
    std::fs::create_dir_all(out).map_err(io_at(out))?;
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let manifest_path = out.join(MANIFEST_FILE);

    match self_train(&cloud, &c.train) {
        Ok(outcome) => {
            write_atomic(&ckpt_path, &outcome.checkpoint.to_bytes())?;
            let log_path = out.join(LOG_FILE);
            write_atomic(&log_path, outcome.log.to_jsonl().as_bytes())?;
            manifest.output(&ckpt_path);
            manifest.output(&log_path);
            manifest.write(&manifest_path)?;
            if let Some(last) = outcome.log.last() {
                println!(
                    "trained {} epochs: total {:.6e}, reconstruction {:.6e}",
                    last.epoch, last.total, last.reconstruction
                );
            }
            Ok(())
        }
        Err(Error::Diverged {
            epoch,
            message,
            last_good,
        }) => {
            // Keep the last finite state for inspection or a restart.
            write_atomic(&ckpt_path, &last_good.to_bytes())?;
            manifest.output(&ckpt_path);
            manifest.write(&manifest_path)?;
            Err(CliError::Numerical(format!(
                "training diverged at epoch {epoch}: {message}; last good checkpoint (epoch {}) saved to {}",
                last_good.epoch,
                ckpt_path.display()
            )))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn upsample(input: &Path, checkpoint: &Path, out: &Path, ratio: Option<usize>) -> CliResult<()> {
    let mut manifest = run_manifest("upsample", &[input, checkpoint], None)?;
    let ckpt = Checkpoint::load(checkpoint).map_err(at_path(checkpoint))?;
    let trained = ckpt.generator.config().ratio;
    let ratio = ratio.unwrap_or(trained);
    if ratio != trained {
        return Err(CliError::Config(format!(
            "config field `ratio`: checkpoint was trained for ratio {trained}, got {ratio}"
        )));
    }
    manifest.seed = Some(ckpt.config.seed);
    manifest.config = json!({ "ratio": ratio, "checkpoint_epoch": ckpt.epoch });
    let pc = read_cloud(input).map_err(at_path(input))?;
    let dense = run_upsample(&pc, &ckpt.generator, ratio)?;
    write_cloud(out, &dense).map_err(at_path(out))?;
    manifest.output(out);
    manifest.write(&sidecar(out))?;
    println!("wrote {} points to {}", dense.len(), out.display());
    Ok(())
}

pub fn eval(
    input: &Path,
    reference: &Path,
    out: &Path,
    name: Option<String>,
    samples: usize,
    seed: u64,
) -> CliResult<()> {
    let mut manifest = run_manifest("eval", &[input, reference], None)?;
    manifest.seed = Some(seed);
    manifest.config = json!({ "samples": samples, "seed": seed });
    let generated = read_cloud(input).map_err(at_path(input))?;
    let name = name.unwrap_or_else(|| {
        input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let report = match read_input(reference).map_err(at_path(reference))? {
        Input::Cloud(pc) => evaluate(&name, &generated, Reference::Cloud(&pc))?,
        Input::Mesh(mesh) => {
            let dense = sample_mesh(&mesh, samples, SamplingMode::Uniform, seed)?;
            evaluate(
                &name,
                &generated,
                Reference::Mesh {
                    mesh: &mesh,
                    samples: &dense,
                },
            )?
        }
    };
    let mut csv = Vec::new();
    write_csv(&mut csv, std::slice::from_ref(&report))?;
    write_atomic(out, &csv)?;
    manifest.output(out);
    manifest.write(&sidecar(out))?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn sample_mesh_cmd(input: &Path, out: &Path, points: usize, mode: &str, seed: u64) -> CliResult<()> {
    let mut manifest = run_manifest("sample-mesh", &[input], None)?;
    let mode = mode
        .parse::<SamplingMode>()
        .map_err(|e| config_field("mode", e))?;
    manifest.seed = Some(seed);
    manifest.config = json!({ "points": points, "mode": mode, "seed": seed });
    let mesh = match read_input(input).map_err(at_path(input))? {
        Input::Mesh(m) => m,
        Input::Cloud(_) => {
            return Err(CliError::Input(format!(
                "{}: expected a mesh with faces",
                input.display()
            )))
        }
    };
    let pc = sample_mesh(&mesh, points, mode, seed)?;
    write_cloud(out, &pc).map_err(at_path(out))?;
    manifest.output(out);
    manifest.write(&sidecar(out))?;
    println!("wrote {} points to {}", pc.len(), out.display());
    Ok(())
}

pub fn gradcheck(scope: Scope, out: &Path, instances: usize, seed: u64) -> CliResult<()> {
    let mut manifest = run_manifest("gradcheck", &[], None)?;
    manifest.seed = Some(seed);
    let (label, rows): (&str, Vec<CheckRow>) = match scope {
        Scope::Ops => ("ops", ops_suite(instances, seed)?),
        Scope::Losses => ("losses", losses_suite(instances, seed)?),
        Scope::End2end => ("end2end", vec![end_to_end(32, 2, seed)?]),
    };
    manifest.config = json!({ "scope": label, "instances": instances, "seed": seed });
    let mut text = String::new();
    for r in &rows {
        text.push_str(&r.line());
        text.push('\n');
    }
    print!("{text}");
    write_atomic(out, text.as_bytes())?;
    manifest.output(out);
    manifest.write(&sidecar(out))?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "gradient check failed for {}",
            failed.join(", ")
        )))
    }
}

pub fn ablation(
    input: &Path,
    variants: &[String],
    reference: Option<&Path>,
    out: &Path,
    flags: &TrainFlags,
) -> CliResult<()> {
    let mut inputs = vec![input];
    inputs.extend(reference);
    let mut manifest = run_manifest("ablation", &inputs, Some(flags))?;
    let c = resolve(flags)?;
    manifest.seed = Some(c.train.seed);
    manifest.config = json!({ "base": snapshot(&c), "variants": variants });
    let cloud = training_cloud(input, &c)?;

    let reference_input = match reference {
        Some(p) => read_input(p).map_err(at_path(p))?,
        None => Input::Cloud(cloud.clone()),
    };
    let dense;
    let reference = match &reference_input {
        Input::Cloud(pc) => Reference::Cloud(pc),
        Input::Mesh(mesh) => {
            dense = sample_mesh(mesh, 8192, SamplingMode::Uniform, c.train.seed)?;
            Reference::Mesh {
                mesh,
                samples: &dense,
            }
        }
    };
    let rows = run_ablation(&cloud, &c.train, variants, &reference)?;
    let reports: Vec<_> = rows.iter().map(|r| r.report.clone()).collect();
    let mut csv = Vec::new();
    write_csv(&mut csv, &reports)?;
    write_atomic(out, &csv)?;
    manifest.output(out);
    manifest.write(&sidecar(out))?;
    for r in &rows {
        print!("{}", r.report.to_text());
    }
    Ok(())
}

pub fn default_config(out: Option<&Path>) -> CliResult<()> {
    let text = FileConfig::from_run(&RunConfig::default()).to_toml();
    match out {
        Some(path) => {
            write_atomic(path, text.as_bytes())?;
            let mut manifest = RunManifest::new("default-config");
            manifest.output(path);
            manifest.write(&sidecar(path))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
