//! Acceptance checks. Every criterion prints one `PASS` or `FAIL` line to
//! stderr, uncaptured, and then asserts on its own outcome.
//!
//! Criteria run one at a time so the runtime bounds measure a single job.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use pcup_core::checks::{end_to_end, losses_suite, ops_suite, CheckRow};
use pcup_core::geometry::{dist, dist2, fps, knn_all, sample_unit_sphere, DownsampleKernel};
use pcup_core::losses::assignment::{auction, default_auction_epsilon, hungarian, CostMatrix};
use pcup_core::losses::emd;
use pcup_core::mesh::{
    parse_obj, parse_off, parse_ply, read_mesh, sample_surface, write_mesh, write_obj, write_off,
    write_ply, MeshDistance, PlyEncoding,
};
use pcup_core::metrics::{chamfer, evaluate, hausdorff, write_csv, Reference};
use pcup_core::network::{Discriminator, Generator, GeneratorConfig};
use pcup_core::trainer::{run_ablation, self_train, upsample, TrainConfig};
use pcup_core::{Point3, PointCloud, TriangleMesh};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(passed: bool, criterion: &str, detail: impl AsRef<str>) {
    let line = format!(
        "{} {criterion}: {}\n",
        if passed { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

fn note(text: impl AsRef<str>) {
    let _ = std::io::stderr().lock().write_all(format!("     {}\n", text.as_ref()).as_bytes());
}

fn random_cloud(rng: &mut ChaCha8Rng, sizes: std::ops::RangeInclusive<usize>, lattice: bool) -> PointCloud {
    let n = rng.random_range(sizes);
    let pts = (0..n)
        .map(|_| {
            if lattice {
                // Small integer grid: many equal distances.
                [0; 3].map(|_| rng.random_range(0..4) as f64)
            } else {
                [0; 3].map(|_| rng.random_range(-1.0..1.0))
            }
        })
        .collect();
    PointCloud::new(pts).unwrap()
}

fn brute_knn(pc: &PointCloud, k: usize) -> Vec<Vec<usize>> {
    let p = pc.points();
    (0..p.len())
        .map(|i| {
            let mut c: Vec<(usize, f64)> = (0..p.len())
                .filter(|&j| j != i)
                .map(|j| (j, dist2(p[i], p[j])))
                .collect();
            c.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            c.into_iter().take(k).map(|c| c.0).collect()
        })
        .collect()
}

fn brute_fps(pc: &PointCloud, m: usize, start: usize) -> Vec<usize> {
    let p = pc.points();
    let mut picked = vec![start];
    while picked.len() < m {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for i in 0..p.len() {
            if picked.contains(&i) {
                continue;
            }
            let d = picked.iter().map(|&j| dist2(p[i], p[j])).fold(f64::INFINITY, f64::min);
            if d > best.1 {
                best = (i, d);
            }
        }
        picked.push(best.0);
    }
    picked
}

fn brute_nearest(a: &PointCloud, b: &PointCloud) -> Vec<f64> {
    a.iter()
        .map(|p| b.iter().map(|q| dist2(*p, *q)).fold(f64::INFINITY, f64::min).sqrt())
        .collect()
}

fn brute_chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    0.5 * (mean(brute_nearest(a, b)) + mean(brute_nearest(b, a)))
}

fn brute_hausdorff(a: &PointCloud, b: &PointCloud) -> f64 {
    let max = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
    max(brute_nearest(a, b)).max(max(brute_nearest(b, a)))
}

#[test]
fn oracle_equivalence() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = Vec::new();
    let clouds = 100;
    for c in 0..clouds {
        let n = rng.random_range(2..=200);
        let lattice = c % 4 == 3;
        let a = random_cloud(&mut rng, n..=n, lattice);
        let b = random_cloud(&mut rng, 1..=200, lattice);
        let k = rng.random_range(1..=16usize).min(n - 1);
        if knn_all(&a, k).unwrap() != brute_knn(&a, k) {
            mismatches.push(format!("knn cloud {c}"));
        }
        let m = rng.random_range(1..=n);
        let s = rng.random_range(0..n);
        if fps(&a, m, s).unwrap() != brute_fps(&a, m, s) {
            mismatches.push(format!("fps cloud {c}"));
        }
        if chamfer(&a, &b) != brute_chamfer(&a, &b) {
            mismatches.push(format!("chamfer cloud {c}"));
        }
        if hausdorff(&a, &b) != brute_hausdorff(&a, &b) {
            mismatches.push(format!("hausdorff cloud {c}"));
        }
    }
    // A few clouds large enough to use the grid index.
    for c in 0..6 {
        let a = random_cloud(&mut rng, 600..=1500, c % 2 == 1);
        let b = random_cloud(&mut rng, 600..=1500, c % 2 == 1);
        if knn_all(&a, 8).unwrap() != brute_knn(&a, 8) {
            mismatches.push(format!("knn large cloud {c}"));
        }
        if chamfer(&a, &b) != brute_chamfer(&a, &b) || hausdorff(&a, &b) != brute_hausdorff(&a, &b) {
            mismatches.push(format!("chamfer/hausdorff large cloud {c}"));
        }
    }
    let elapsed = start.elapsed();
    let passed = mismatches.is_empty() && elapsed < Duration::from_secs(30);
    report(
        passed,
        "oracle equivalence (knn, fps, chamfer, hausdorff)",
        format!(
            "{clouds} clouds N<=200 plus 6 grid-sized clouds, {} mismatches, {:.1}s (limit 30s)",
            mismatches.len(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(passed, "{mismatches:?} in {elapsed:?}");
}

/// Minimum matching cost over all n! bijections (Heap's algorithm).
fn exhaustive_min(c: &CostMatrix) -> f64 {
    let n = c.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = c.cost_of(&perm);
    let mut counters = vec![0; n];
    let mut i = 1;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            best = best.min(c.cost_of(&perm));
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    best
}

fn distance_matrix(a: &PointCloud, b: &PointCloud) -> CostMatrix {
    CostMatrix::from_fn(a.len(), |i, j| dist(a.points()[i], b.points()[j]))
}

fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&j| j < p.len() && !std::mem::replace(&mut seen[j], true))
}

#[test]
fn emd_correctness() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_exact = 0.0f64;
    let mut exact_cases = 0;
    for n in 1..=8 {
        for _ in 0..6 {
            let a = random_cloud(&mut rng, n..=n, false);
            let b = random_cloud(&mut rng, n..=n, false);
            let c = distance_matrix(&a, &b);
            let opt = exhaustive_min(&c);
            let h = c.cost_of(&hungarian(&c));
            let e = emd(&a, &b).unwrap() * n as f64;
            // Equal up to summation order.
            let scale = opt.max(1e-300);
            worst_exact = worst_exact.max((h - opt).abs() / scale).max((e - opt).abs() / scale);
            exact_cases += 1;
        }
    }

    let mut worst_ratio = 0.0f64;
    let mut valid = true;
    let pairs = 50;
    for i in 0..pairs {
        let n = if i < 10 { 256 } else { rng.random_range(2..=256) };
        let a = random_cloud(&mut rng, n..=n, false);
        let b = random_cloud(&mut rng, n..=n, false);
        let c = distance_matrix(&a, &b);
        let h = c.cost_of(&hungarian(&c));
        let assignment = auction(&c, default_auction_epsilon(&c));
        valid &= is_permutation(&assignment);
        worst_ratio = worst_ratio.max(c.cost_of(&assignment) / h);
    }
    let elapsed = start.elapsed();
    let exact_ok = worst_exact <= 1e-12;
    let auction_ok = valid && worst_ratio <= 1.05;
    let time_ok = elapsed < Duration::from_secs(120);
    let passed = exact_ok && auction_ok && time_ok;
    report(
        passed,
        "EMD correctness",
        format!(
            "{exact_cases} exhaustive cases N<=8, worst relative gap {worst_exact:.1e}; \
             {pairs} auction pairs N<=256, worst auction/hungarian {worst_ratio:.6} (limit 1.05); {:.1}s (limit 120s)",
            elapsed.as_secs_f64()
        ),
    );
    assert!(passed);
}

#[test]
fn gradient_suite() {
    let _g = serial();
    let start = Instant::now();
    let mut rows: Vec<CheckRow> = ops_suite(100, 7).unwrap();
    rows.extend(losses_suite(100, 8).unwrap());
    rows.push(end_to_end(32, 2, 9).unwrap());
    let elapsed = start.elapsed();
    for r in &rows {
        note(r.line());
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    let time_ok = elapsed < Duration::from_secs(120);
    let worst = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let passed = failed.is_empty() && time_ok;
    report(
        passed,
        "gradient suite",
        format!(
            "{} rows, 100 instances each, worst relative error {worst:.2e} (limit 1e-4), failed {failed:?}, {:.1}s (limit 120s)",
            rows.len(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(passed);
}

#[test]
fn shape_laws() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut count_ok = true;
    let mut identity_ok = true;
    for r in [2, 4, 8] {
        for n in [64, 512, 1024] {
            let pc = sample_unit_sphere(n, (r * n) as u64).unwrap();
            let cfg = GeneratorConfig {
                ratio: r,
                ..Default::default()
            };
            let out = Generator::new(cfg, &mut rng).unwrap().upsample(&pc).unwrap();
            count_ok &= out.len() == r * n;
            let zero = Generator::zeros(cfg).unwrap().upsample(&pc).unwrap();
            identity_ok &= zero == pc.repeat_each(r);
        }
    }

    let mut worst_perm = 0.0f64;
    for trial in 0..10 {
        let d = Discriminator::new(32, trial % 2 == 0, &mut rng);
        let pc = random_cloud(&mut rng, 2..=300, false);
        let mut idx: Vec<usize> = (0..pc.len()).collect();
        idx.shuffle(&mut rng);
        let s0 = d.score(&pc).unwrap();
        let s1 = d.score(&pc.select(&idx).unwrap()).unwrap();
        worst_perm = worst_perm.max((s0 - s1).abs());
    }
    let perm_ok = worst_perm < 1e-9;
    report(count_ok, "shape law: output count rN", "r in {2,4,8} x N in {64,512,1024}");
    report(identity_ok, "shape law: zero-init exact duplication", "same 9 configurations");
    report(
        perm_ok,
        "shape law: discriminator permutation invariance",
        format!("10 random nets and clouds, worst |delta| {worst_perm:.2e} (limit 1e-9)"),
    );
    assert!(count_ok && identity_ok && perm_ok);
}

#[test]
fn smoke_experiment() {
    let _g = serial();
    let start = Instant::now();
    let pc = sample_unit_sphere(512, 0).unwrap();
    let dense = sample_unit_sphere(8192, 1).unwrap();
    let cfg = TrainConfig {
        use_discriminator: false,
        ..Default::default()
    };
    assert_eq!((cfg.ratio, cfg.pairs, cfg.epochs), (4, 12, 50));
    let out = self_train(&pc, &cfg).unwrap();
    let generated = upsample(&pc, out.generator(), 4).unwrap();
    let baseline = pc.repeat_each(4);
    let elapsed = start.elapsed();

    let first = out.log.first().unwrap().reconstruction;
    let last = out.log.last().unwrap().reconstruction;
    let a = last < 0.5 * first;

    let cd_out = chamfer(&generated, &dense);
    let cd_base = chamfer(&baseline, &dense);
    let b = cd_out < cd_base;

    let uni = |c: &PointCloud| {
        let r = evaluate("", c, Reference::Cloud(&dense)).unwrap();
        r.uniformity.iter().find(|(p, _)| *p == 0.004).unwrap().1
    };
    let (u_out, u_base) = (uni(&generated), uni(&baseline));
    let c = u_out < u_base;

    report(
        a,
        "smoke (a) final L_EMD < 0.5 x first",
        format!("first {first:.6}, final {last:.6}, ratio {:.3}", last / first),
    );
    report(
        b,
        "smoke (b) CD below duplicated baseline",
        format!("output {cd_out:.6}, baseline {cd_base:.6}"),
    );
    report(
        c,
        "smoke (c) uniformity at p=0.004 below duplicated baseline",
        format!("output {u_out:.4}, baseline {u_base:.4}"),
    );
    let time_ok = elapsed < Duration::from_secs(600);
    report(
        time_ok,
        "smoke runtime",
        format!("{:.1}s (limit 600s)", elapsed.as_secs_f64()),
    );
    assert!(a && b && c && time_ok, "smoke experiment: (a) {a}, (b) {b}, (c) {c}");
}

#[test]
fn ablation_harness() {
    let _g = serial();
    let pc = sample_unit_sphere(512, 0).unwrap();
    let dense = sample_unit_sphere(8192, 1).unwrap();
    let base = TrainConfig {
        epochs: 10,
        ..Default::default()
    };
    let variants: Vec<String> = ["full", "wo-uni", "wo-rep", "full-cd"].map(String::from).to_vec();
    let rows = run_ablation(&pc, &base, &variants, &Reference::Cloud(&dense)).unwrap();

    let complete = rows.len() == variants.len()
        && rows.iter().all(|r| r.log.epochs.len() == base.epochs && r.report.points == 4 * pc.len());
    let by_name = |n: &str| rows.iter().find(|r| r.name == n).unwrap();
    let uni_zero = by_name("wo-uni").log.epochs.iter().all(|e| e.uniform == 0.0);
    let rep_zero = by_name("wo-rep").log.epochs.iter().all(|e| e.repulsion == 0.0);
    let others_live = by_name("full").log.epochs.iter().all(|e| e.uniform > 0.0 && e.repulsion > 0.0);

    let reports: Vec<_> = rows.iter().map(|r| r.report.clone()).collect();
    let mut csv_bytes = Vec::new();
    write_csv(&mut csv_bytes, &reports).unwrap();
    let mut reader = csv::Reader::from_reader(csv_bytes.as_slice());
    let names: Vec<String> = reader.records().map(|r| r.unwrap()[0].to_string()).collect();
    let csv_ok = names == variants;

    let passed = complete && uni_zero && rep_zero && others_live && csv_ok;
    report(
        passed,
        "ablation harness",
        format!(
            "4 variants at {} epochs complete: {complete}; wo-uni uniform all 0: {uni_zero}; \
             wo-rep repulsion all 0: {rep_zero}; CSV rows {:?}",
            base.epochs, names
        ),
    );
    for r in &rows {
        let u = r.report.uniformity[0].1;
        note(format!("{:<8} cd {:.6} hd {:.6} uni@0.004 {u:.4}", r.name, r.report.cd, r.report.hd));
    }
    let soft = [
        ("full beats full-cd on CD", by_name("full").report.cd < by_name("full-cd").report.cd),
        (
            "full beats wo-uni on uniformity",
            by_name("full").report.uniformity[0].1 < by_name("wo-uni").report.uniformity[0].1,
        ),
        ("full beats wo-rep on CD", by_name("full").report.cd < by_name("wo-rep").report.cd),
    ];
    for (claim, held) in soft {
        note(format!("soft expectation {claim}: {}", if held { "held" } else { "not held" }));
    }
    assert!(passed);
}

#[test]
fn kernel_sweep() {
    let _g = serial();
    let pc = sample_unit_sphere(512, 0).unwrap();
    let mut all_same = true;
    let mut runs = 0;
    for kernel in [DownsampleKernel::Random, DownsampleKernel::Fps] {
        for pairs in [2, 12, 32] {
            let cfg = TrainConfig {
                epochs: 2,
                pairs,
                kernel,
                seed: 11,
                ..Default::default()
            };
            let a = self_train(&pc, &cfg).unwrap();
            let b = self_train(&pc, &cfg).unwrap();
            let same = a.checkpoint.to_bytes() == b.checkpoint.to_bytes()
                && a.log.same_losses(&b.log)
                && upsample(&pc, a.generator(), 4).unwrap() == upsample(&pc, b.generator(), 4).unwrap();
            note(format!(
                "{kernel} B={pairs}: final reconstruction {:.6}, identical rerun {same}",
                a.log.last().unwrap().reconstruction
            ));
            all_same &= same;
            runs += 1;
        }
    }
    report(
        all_same,
        "kernel sweep reproducibility",
        format!("{runs} configurations (B in {{2,12,32}} x random/fps, 2 epochs), each run twice, bit-identical: {all_same}"),
    );
    assert!(all_same);
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn round_trips(mesh: &TriangleMesh) -> bool {
    let dir = tempfile::tempdir().unwrap();
    let mut ok = parse_off(write_off(mesh).as_bytes()).unwrap() == *mesh
        && parse_obj(write_obj(mesh).as_bytes()).unwrap() == *mesh
        && parse_ply(&write_ply(mesh, PlyEncoding::Ascii)).unwrap() == *mesh
        && parse_ply(&write_ply(mesh, PlyEncoding::BinaryLittleEndian)).unwrap() == *mesh;
    for ext in ["off", "obj", "ply"] {
        let path = dir.path().join(format!("m.{ext}"));
        write_mesh(&path, mesh).unwrap();
        ok &= read_mesh(&path).unwrap() == *mesh;
    }
    ok
}

#[test]
fn mesh_pipeline() {
    let _g = serial();
    let n = 10_000;
    let mut parse_ok = true;
    let mut worst_p2f = 0.0f64;
    let mut worst_abs = 0.0f64;
    let mut worst_rel = 0.0f64;
    for (name, faces) in [("tetra.off", 4), ("cube.ply", 12), ("steps.obj", 5)] {
        let mesh = read_mesh(fixture(name)).unwrap();
        parse_ok &= mesh.faces().len() == faces && round_trips(&mesh);

        let samples = sample_surface(&mesh, n, 5).unwrap();
        let points: Vec<Point3> = samples.iter().map(|s| s.point).collect();
        let surface = MeshDistance::new(&mesh);
        worst_p2f = surface.distances(&points).into_iter().fold(worst_p2f, f64::max);

        let mut counts = vec![0usize; mesh.faces().len()];
        for s in &samples {
            counts[s.face_index] += 1;
        }
        let total = mesh.total_area();
        for (f, &c) in counts.iter().enumerate() {
            let expected = mesh.face_area(f) / total;
            let observed = c as f64 / n as f64;
            worst_abs = worst_abs.max((observed - expected).abs());
            worst_rel = worst_rel.max((observed - expected).abs() / expected);
        }
    }
    let p2f_ok = worst_p2f < 1e-9;
    let freq_ok = worst_abs <= 0.02;
    report(parse_ok, "mesh pipeline: OFF/OBJ/PLY parse and round-trip", "3 fixtures, 4 encodings each");
    report(
        p2f_ok,
        "mesh pipeline: sampled points on the surface",
        format!("{n} samples per fixture, worst P2F {worst_p2f:.2e} (limit 1e-9)"),
    );
    report(
        freq_ok,
        "mesh pipeline: area-weighted face frequencies",
        format!(
            "n = {n}, worst absolute deviation {worst_abs:.4} (limit 0.02); worst relative deviation {worst_rel:.3}"
        ),
    );
    assert!(parse_ok && p2f_ok && freq_ok);
}
