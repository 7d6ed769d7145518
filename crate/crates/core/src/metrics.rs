//! Evaluation measures and their text/CSV serialization.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{normalize_unit_sphere, NeighborIndex, PointCloud};
use crate::losses::{uniformity_value, UniformLossConfig, DEFAULT_P_SET};
use crate::mesh::{MeshDistance, TriangleMesh};

/// Distance from every point of `a` to its nearest point in `b`.
pub fn nearest_distances(a: &PointCloud, b: &PointCloud) -> Vec<f64> {
    let index = NeighborIndex::new(b.points());
    a.points()
        .par_iter()
        .map(|&p| index.nearest(p, 1, None)[0].1.sqrt())
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Symmetric Chamfer distance with unsquared distances:
/// `(mean_a min_b |a - b| + mean_b min_a |a - b|) / 2`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    0.5 * (mean(&nearest_distances(a, b)) + mean(&nearest_distances(b, a)))
}

/// Symmetric Hausdorff distance.
pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> f64 {
    let max = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
    max(nearest_distances(a, b)).max(max(nearest_distances(b, a)))
}

/// Population mean and standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

/// Point-to-surface distance statistics `(mean, std)`.
pub fn p2f(pc: &PointCloud, mesh: &TriangleMesh) -> (f64, f64) {
    p2f_with(pc, &MeshDistance::new(mesh))
}

pub fn p2f_with(pc: &PointCloud, surface: &MeshDistance) -> (f64, f64) {
    mean_std(&surface.distances(pc.points()))
}

/// Uniformity score for one area fraction, on a cloud already in the unit
/// frame. Lower is more uniform.
pub fn uniformity(pc: &PointCloud, p: f64, cfg: &UniformLossConfig) -> Result<f64> {
    uniformity_value(pc, p, cfg)
}

/// One evaluated cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub name: String,
    pub cd: f64,
    pub hd: f64,
    pub p2f: Option<(f64, f64)>,
    /// `(p, score)` pairs, computed after normalizing the cloud to the unit
    /// sphere.
    pub uniformity: Vec<(f64, f64)>,
    pub points: usize,
    pub reference_points: usize,
}

/// What a generated cloud is compared against.
#[derive(Clone, Copy)]
pub enum Reference<'a> {
    Cloud(&'a PointCloud),
    /// A mesh plus a dense sampling of it for CD/HD.
    Mesh {
        mesh: &'a TriangleMesh,
        samples: &'a PointCloud,
    },
}

/// Computes every metric of `generated` against `reference`.
pub fn evaluate(name: &str, generated: &PointCloud, reference: Reference<'_>) -> Result<MetricsReport> {
    let (ref_cloud, p2f) = match reference {
        Reference::Cloud(c) => (c, None),
        Reference::Mesh { mesh, samples } => (samples, Some(p2f(generated, mesh))),
    };
    let (unit, _) = normalize_unit_sphere(generated)?;
    let cfg = UniformLossConfig::default();
    let uniformity = DEFAULT_P_SET
        .iter()
        .map(|&p| uniformity(&unit, p, &cfg).map(|v| (p, v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport {
        name: name.to_string(),
        cd: chamfer(generated, ref_cloud),
        hd: hausdorff(generated, ref_cloud),
        p2f,
        uniformity,
        points: generated.len(),
        reference_points: ref_cloud.len(),
    })
}

fn fmt_num(v: f64) -> String {
    format!("{v:.9e}")
}

impl MetricsReport {
    /// Flat `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name={}", self.name);
        let _ = writeln!(s, "points={}", self.points);
        let _ = writeln!(s, "reference_points={}", self.reference_points);
        let _ = writeln!(s, "cd={}", fmt_num(self.cd));
        let _ = writeln!(s, "hd={}", fmt_num(self.hd));
        if let Some((m, sd)) = self.p2f {
            let _ = writeln!(s, "p2f_mean={}", fmt_num(m));
            let _ = writeln!(s, "p2f_std={}", fmt_num(sd));
        }
        for (p, v) in &self.uniformity {
            let _ = writeln!(s, "uni_{p}={}", fmt_num(*v));
        }
        s
    }

    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = ["name", "cd", "hd", "p2f_mean", "p2f_std"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(DEFAULT_P_SET.iter().map(|p| format!("uni_{p}")));
        h
    }

    /// One CSV row; missing P2F values are left empty.
    pub fn csv_record(&self) -> Vec<String> {
        let (pm, ps) = self
            .p2f
            .map_or((String::new(), String::new()), |(m, s)| (fmt_num(m), fmt_num(s)));
        let mut r = vec![self.name.clone(), fmt_num(self.cd), fmt_num(self.hd), pm, ps];
        for p in DEFAULT_P_SET {
            r.push(
                self.uniformity
                    .iter()
                    .find(|(q, _)| *q == p)
                    .map_or(String::new(), |(_, v)| fmt_num(*v)),
            );
        }
        r
    }
}

/// Writes a header and one row per report.
pub fn write_csv<W: Write>(out: W, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MetricsReport::csv_header())?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}
