//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run alone with `cargo test -p dsi-cli --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsi_core::analysis::{eps_grid, sweep};
use dsi_core::feature_store::{parse_array_file, serialize_array, Dtype, NpyError};
use dsi_core::vcr::{VcrRecord, VcrTotals};
use dsi_core::{
    apply_prune, class_vcr, cosine_distance, cosine_similarity, dataset_vcr, dbscan,
    eps_components, load_dataset, prune, render_report, similarity_matrix, write_dataset,
    ClassFeatureSet, ClusterLabels, ClusteringParams, DatasetFeatures, EpsPolicy, FeatureVector,
    Metric, ReportFormat, SimilarityMatrix, StoreError, VcrReport,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Points scattered around a few centers in the positive orthant, so that
/// cosine distances straddle the thresholds under test.
fn clustered_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let centers: Vec<Vec<f64>> = (0..rng.gen_range(1..=8))
        .map(|_| (0..dim).map(|_| rng.gen_range(0.05..1.0)).collect())
        .collect();
    let spread = 10f64.powf(rng.gen_range(-2.5..-0.3));
    (0..n)
        .map(|_| loop {
            let c = &centers[rng.gen_range(0..centers.len())];
            let row: Vec<f64> = c
                .iter()
                .map(|x| x + rng.gen_range(-spread..spread))
                .collect();
            if row.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
                break row;
            }
        })
        .collect()
}

fn vectors(rows: Vec<Vec<f64>>) -> Vec<FeatureVector> {
    rows.into_iter()
        .map(|r| FeatureVector::new(r).unwrap())
        .collect()
}

fn random_dataset(
    rng: &mut ChaCha8Rng,
    max_classes: usize,
    max_n: usize,
    dim: usize,
) -> DatasetFeatures {
    let n_classes = rng.gen_range(1..=max_classes);
    let classes = (0..n_classes)
        .map(|c| {
            let n = rng.gen_range(1..=max_n);
            let ids = (0..n).map(|i| format!("c{c}_{i:04}.jpg")).collect();
            ClassFeatureSet::new(
                format!("class_{c}"),
                ids,
                vectors(clustered_rows(rng, n, dim)),
            )
            .unwrap()
        })
        .collect();
    DatasetFeatures::new(classes).unwrap()
}

/// Connected components of the explicit `d <= eps` graph by depth-first
/// search, labelled by first appearance.
fn oracle_partition(rows: &[Vec<f64>], eps: f64) -> Vec<usize> {
    let n = rows.len();
    let naive = |a: &[f64], b: &[f64]| {
        let mut ab = 0.0;
        let mut aa = 0.0;
        let mut bb = 0.0;
        for k in 0..a.len() {
            ab += a[k] * b[k];
            aa += a[k] * a[k];
            bb += b[k] * b[k];
        }
        1.0 - (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
    };
    let dist: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        naive(&rows[i], &rows[j])
                    }
                })
                .collect()
        })
        .collect();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        label[s] = next;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if label[v] == usize::MAX && dist[u][v] <= eps {
                    label[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    label
}

fn canonical(labels: &ClusterLabels) -> Option<Vec<usize>> {
    let mut map = std::collections::HashMap::new();
    labels
        .labels
        .iter()
        .map(|l| {
            let l = (*l)?;
            let next = map.len();
            Some(*map.entry(l).or_insert(next))
        })
        .collect()
}

fn canonical_raw(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0e0c);
    let mut nontrivial = 0;
    for case in 0..1000 {
        let n = rng.gen_range(1..=64);
        let dim = rng.gen_range(1..=16);
        let eps = rng.gen_range(0.01..=0.5);
        let rows = clustered_rows(&mut rng, n, dim);
        let vs = vectors(rows.clone());
        let comp = eps_components(&vs, eps, Metric::Cosine).map_err(|e| e.to_string())?;
        let params = ClusteringParams::new(eps, 1, Metric::Cosine).map_err(|e| e.to_string())?;
        let db = dbscan(&vs, &params).map_err(|e| e.to_string())?;
        let oracle = canonical_raw(&oracle_partition(&rows, eps));
        let a = canonical(&comp).ok_or("eps_components left noise")?;
        let b = canonical(&db).ok_or("dbscan(min_samples=1) left noise")?;
        ensure(a == b, || {
            format!("case {case}: eps_components and dbscan disagree")
        })?;
        ensure(a == oracle, || {
            format!("case {case}: partition differs from oracle (n={n}, D={dim}, eps={eps})")
        })?;
        if comp.cluster_count > 1 && comp.cluster_count < n {
            nontrivial += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "1000 instances, {nontrivial} with 1 < clusters < n, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn similarity_correctness() -> Check {
    let s = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).map_err(|e| e.to_string())?;
    ensure((s - 0.974632).abs() <= 1e-6, || {
        format!("similarity([1,2,3],[4,5,6]) = {s}")
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst_sym: f64 = 0.0;
    let mut worst_scale: f64 = 0.0;
    for _ in 0..10_000 {
        let dim = rng.gen_range(1..=64);
        let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
        if a.iter().all(|x| *x == 0.0) || b.iter().all(|x| *x == 0.0) {
            continue;
        }
        let k = 10f64.powf(rng.gen_range(-3.0..3.0));
        let ab = cosine_similarity(&a, &b).map_err(|e| e.to_string())?;
        let ba = cosine_similarity(&b, &a).map_err(|e| e.to_string())?;
        let ka: Vec<f64> = a.iter().map(|x| x * k).collect();
        let kab = cosine_similarity(&ka, &b).map_err(|e| e.to_string())?;
        worst_sym = worst_sym.max((ab - ba).abs());
        worst_scale = worst_scale.max((ab - kab).abs());
    }
    ensure(worst_sym <= 1e-9, || {
        format!("symmetry error {worst_sym:e}")
    })?;
    ensure(worst_scale <= 1e-9, || {
        format!("scale error {worst_scale:e}")
    })?;
    Ok(format!("value {s:.6}; max symmetry error {worst_sym:e}, max scale error {worst_scale:e} over 10000 pairs"))
}

fn shuffled(ds: &DatasetFeatures, rng: &mut ChaCha8Rng) -> DatasetFeatures {
    let classes = ds
        .classes()
        .iter()
        .map(|c| {
            let mut order: Vec<usize> = (0..c.len()).collect();
            order.shuffle(rng);
            ClassFeatureSet::new(
                c.name(),
                order.iter().map(|&i| c.sample_ids()[i].clone()).collect(),
                order.iter().map(|&i| c.vectors()[i].clone()).collect(),
            )
            .unwrap()
        })
        .collect();
    DatasetFeatures::new(classes).unwrap()
}

fn matrix_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3a7);
    let mut worst_perm: f64 = 0.0;
    for case in 0..200 {
        let dim = rng.gen_range(1..=32);
        let ds = random_dataset(&mut rng, 16, 40, dim);
        let m = similarity_matrix(&ds).map_err(|e| e.to_string())?;
        let n = m.len();
        for i in 0..n {
            ensure(m.get(i, i) == 0.0, || {
                format!("case {case}: diagonal {i} is {}", m.get(i, i))
            })?;
            for j in 0..n {
                let d = m.get(i, j);
                ensure(d == m.get(j, i), || {
                    format!("case {case}: asymmetric at ({i},{j})")
                })?;
                ensure((0.0..=2.0).contains(&d), || {
                    format!("case {case}: {d} out of range")
                })?;
            }
        }
        let p = similarity_matrix(&shuffled(&ds, &mut rng)).map_err(|e| e.to_string())?;
        for i in 0..n {
            for j in 0..n {
                worst_perm = worst_perm.max((m.get(i, j) - p.get(i, j)).abs());
            }
        }
    }
    ensure(worst_perm <= 1e-12, || {
        format!("permutation error {worst_perm:e}")
    })?;
    Ok(format!(
        "200 datasets; max permutation error {worst_perm:e}"
    ))
}

fn vcr_laws() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7c5);
    let grid = eps_grid(0.01, 0.30, 0.01);
    ensure(grid.len() == 30, || {
        format!("grid has {} points", grid.len())
    })?;
    for case in 0..100 {
        let n = rng.gen_range(1..=80);
        let dim = rng.gen_range(1..=16);
        let c = ClassFeatureSet::with_default_ids("c", vectors(clustered_rows(&mut rng, n, dim)))
            .map_err(|e| e.to_string())?;
        let curve = sweep(&c, &grid).map_err(|e| e.to_string())?;
        for w in curve.points.windows(2) {
            ensure(w[1].vcr <= w[0].vcr, || {
                format!(
                    "case {case}: vcr rises from {} to {} at eps {}",
                    w[0].vcr, w[1].vcr, w[1].eps
                )
            })?;
        }
        for p in &curve.points {
            let direct = class_vcr(&c, p.eps).map_err(|e| e.to_string())?;
            ensure(direct.vcr == direct.cluster_count as f64 / n as f64, || {
                format!("case {case}: ratio not exact")
            })?;
            ensure(
                direct.cluster_count == p.cluster_count && direct.vcr == p.vcr,
                || {
                    format!(
                        "case {case}: sweep disagrees with direct computation at eps {}",
                        p.eps
                    )
                },
            )?;
            ensure(p.vcr >= 1.0 / n as f64 && p.vcr <= 1.0, || {
                format!("case {case}: vcr {} outside bounds", p.vcr)
            })?;
        }
    }
    Ok("100 classes x 30-point grid".into())
}

fn prune_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e7);
    let mut removed = 0;
    for case in 0..100 {
        let dim = rng.gen_range(2..=16);
        let ds = random_dataset(&mut rng, 6, 50, dim);
        let eps = rng.gen_range(0.01..=0.3);
        let policy = EpsPolicy::fixed(eps);
        let m = prune(&ds, policy).map_err(|e| e.to_string())?;
        removed += m.totals.original - m.totals.optimized;
        let pruned = apply_prune(&ds, &m).map_err(|e| e.to_string())?;
        let report = dataset_vcr(&pruned, policy).map_err(|e| e.to_string())?;
        for r in &report.classes {
            ensure(r.vcr == 1.0, || {
                format!(
                    "case {case}: class {} has vcr {} after prune",
                    r.class_name, r.vcr
                )
            })?;
        }
        let again = prune(&pruned, policy).map_err(|e| e.to_string())?;
        for (a, b) in again.classes.iter().zip(&m.classes) {
            ensure(a.removed.is_empty() && a.kept == b.kept, || {
                format!("case {case}: second prune changed {}", a.name)
            })?;
        }
        for c in pruned.classes() {
            let v = c.vectors();
            for i in 0..v.len() {
                for j in i + 1..v.len() {
                    let d = cosine_distance(v[i].as_slice(), v[j].as_slice())
                        .map_err(|e| e.to_string())?;
                    ensure(d > eps, || {
                        format!("case {case}: kept samples of {} only {d} apart", c.name())
                    })?;
                }
            }
        }
    }
    Ok(format!("100 datasets, {removed} samples removed"))
}

fn npy(name: &str) -> Vec<u8> {
    std::fs::read(fixtures().join("npy").join(name)).unwrap()
}

fn format_fidelity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf0f);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for case in 0..20 {
        let dim = rng.gen_range(1..=24);
        let classes = (0..rng.gen_range(1..=5))
            .map(|c| {
                let rows = (0..rng.gen_range(1..=20))
                    .map(|_| loop {
                        let row: Vec<f64> = (0..dim)
                            .map(|_| rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-30..30)))
                            .collect();
                        if let Ok(v) = FeatureVector::new(row) {
                            break v;
                        }
                    })
                    .collect();
                ClassFeatureSet::with_default_ids(format!("class {c}/x"), rows).unwrap()
            })
            .collect();
        let ds = DatasetFeatures::new(classes).map_err(|e| e.to_string())?;
        let root = dir.path().join(format!("case{case}"));
        write_dataset(&ds, &root).map_err(|e| e.to_string())?;
        let back = load_dataset(&root).map_err(|e| e.to_string())?;
        ensure(back.class_names() == ds.class_names(), || {
            format!("case {case}: class order changed")
        })?;
        for (a, b) in ds.classes().iter().zip(back.classes()) {
            ensure(a.sample_ids() == b.sample_ids(), || {
                format!("case {case}: sample ids changed")
            })?;
            for (x, y) in a.vectors().iter().zip(b.vectors()) {
                let same = x
                    .as_slice()
                    .iter()
                    .zip(y.as_slice())
                    .all(|(p, q)| p.to_bits() == q.to_bits());
                ensure(same, || format!("case {case}: values not bit-exact"))?;
            }
        }
    }

    for name in ["valid_f4_2x3.npy", "valid_f8_2x3.npy"] {
        let arr = parse_array_file(&npy(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(
            arr.shape() == (2, 3) && arr.values == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            || format!("{name}: wrong contents"),
        )?;
    }
    let malformed = [
        ("bad_magic.npy", NpyError::BadMagic),
        ("big_endian.npy", NpyError::UnsupportedDtype(">f4".into())),
        ("int32.npy", NpyError::UnsupportedDtype("<i4".into())),
        ("fortran_order.npy", NpyError::FortranOrder),
        ("empty_rows.npy", NpyError::BadShape(vec![0, 2048])),
        ("three_d.npy", NpyError::BadShape(vec![2, 3, 1])),
        (
            "truncated.npy",
            NpyError::Truncated {
                expected: 24,
                found: 19,
            },
        ),
    ];
    for (name, expected) in &malformed {
        let got = parse_array_file(&npy(name));
        ensure(got.as_ref().err() == Some(expected), || {
            format!("{name}: got {got:?}, want {expected:?}")
        })?;
    }

    let nan_root = dir.path().join("nan");
    std::fs::create_dir(&nan_root).map_err(|e| e.to_string())?;
    let values = [1.0, 2.0, f64::NAN, 4.0];
    std::fs::write(
        nan_root.join("a.npy"),
        serialize_array(2, 2, &values, Dtype::F8),
    )
    .map_err(|e| e.to_string())?;
    std::fs::write(
        nan_root.join("manifest.json"),
        r#"{"dimension": 2, "classes": [{"name": "a", "file": "a.npy"}]}"#,
    )
    .map_err(|e| e.to_string())?;
    match load_dataset(&nan_root) {
        Err(StoreError::InvariantViolation { class, row: 1, .. }) if class == "a" => {}
        other => return Err(format!("NaN row: got {other:?}")),
    }

    let golden =
        |name: &str| std::fs::read_to_string(fixtures().join("golden").join(name)).unwrap();
    let table = SimilarityMatrix {
        class_names: ["Bus", "Car", "Truck", "Van"].map(String::from).to_vec(),
        entries: vec![
            vec![0.0, 0.0977, 0.0314, 0.0468],
            vec![0.0977, 0.0, 0.0685, 0.0378],
            vec![0.0314, 0.0685, 0.0, 0.0292],
            vec![0.0468, 0.0378, 0.0292, 0.0],
        ],
    };
    ensure(
        render_report(&table, ReportFormat::Csv) == golden("vehicles_matrix.csv"),
        || "matrix CSV differs from golden".into(),
    )?;
    let record = |name: &str, samples: usize, clusters: usize| VcrRecord {
        class_name: name.into(),
        sample_count: samples,
        cluster_count: clusters,
        vcr: clusters as f64 / samples as f64,
        eps: 0.05,
    };
    let report = VcrReport {
        eps_policy: EpsPolicy::fixed(0.05),
        metric: Metric::Cosine,
        classes: vec![
            record("beagle", 52, 52),
            record("Pink primrose", 40, 40),
            record("Geranium", 86, 7),
        ],
        totals: VcrTotals {
            samples: 178,
            clusters: 99,
            vcr: 99.0 / 178.0,
        },
    };
    ensure(
        render_report(&report, ReportFormat::Markdown) == golden("breeds_vcr.md"),
        || "VCR markdown differs from golden".into(),
    )?;
    let synth4 = load_dataset(fixtures().join("synth4")).map_err(|e| e.to_string())?;
    let m = similarity_matrix(&synth4).map_err(|e| e.to_string())?;
    ensure(
        render_report(&m, ReportFormat::Csv) == golden("synth4_simmat.csv"),
        || "synth4 matrix CSV differs from golden".into(),
    )?;
    let v = dataset_vcr(&synth4, EpsPolicy::fixed(0.05)).map_err(|e| e.to_string())?;
    ensure(
        render_report(&v, ReportFormat::Markdown) == golden("synth4_vcr.md"),
        || "synth4 VCR markdown differs from golden".into(),
    )?;

    Ok(format!(
        "20 archives round-tripped; 2 valid + {} malformed arrays; 4 goldens",
        malformed.len()
    ))
}

fn run_cli(args: &[String], threads: &str) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dsi"))
        .args(args)
        .env("DSI_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    Ok(out.stdout)
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xde7);
    let classes = (0..8)
        .map(|c| {
            let n = 150 + 40 * c;
            ClassFeatureSet::with_default_ids(
                format!("class_{c}"),
                vectors(clustered_rows(&mut rng, n, 32)),
            )
            .unwrap()
        })
        .collect();
    let big = dir.path().join("big");
    write_dataset(
        &DatasetFeatures::new(classes).map_err(|e| e.to_string())?,
        &big,
    )
    .map_err(|e| e.to_string())?;

    let mut runs = 0;
    for root in [fixtures().join("synth4"), big] {
        let r = root.display().to_string();
        let first_class = load_dataset(&root)
            .map_err(|e| e.to_string())?
            .class_names()[0]
            .clone();
        let mut commands: Vec<Vec<String>> = Vec::new();
        for format in ["csv", "json", "markdown"] {
            let f = |v: &[&str]| {
                let mut a: Vec<String> = v.iter().map(|s| s.to_string()).collect();
                a.extend(["--format".into(), format.into()]);
                a
            };
            commands.push(f(&["validate", &r]));
            commands.push(f(&["simmat", &r]));
            commands.push(f(&["vcr", &r]));
            commands.push(f(&["vcr", &r, "--adaptive"]));
            commands.push(f(&["vcr", &r, "--dense-cap", "16"]));
            commands.push(f(&[
                "sweep",
                &r,
                "--class",
                &first_class,
                "--grid",
                "0.01:0.3:0.01",
            ]));
            commands.push(f(&["hint", &r]));
        }
        for args in &commands {
            let one = run_cli(args, "1")?;
            let eight = run_cli(args, "8")?;
            ensure(one == eight, || {
                format!("{args:?}: output differs between 1 and 8 threads")
            })?;
            ensure(one == run_cli(args, "8")?, || {
                format!("{args:?}: output differs between runs")
            })?;
            runs += 1;
        }
        let mut manifests = Vec::new();
        for threads in ["1", "8"] {
            let path = dir.path().join(format!("prune-{threads}.json"));
            let args: Vec<String> = vec![
                "prune".into(),
                r.clone(),
                "--out".into(),
                path.display().to_string(),
            ];
            run_cli(&args, threads)?;
            manifests.push(read(&path)?);
        }
        ensure(manifests[0] == manifests[1], || {
            "prune manifests differ between 1 and 8 threads".into()
        })?;
        runs += 1;
    }
    Ok(format!(
        "{runs} invocations byte-identical across DSI_THREADS=1 and DSI_THREADS=8"
    ))
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("oracle equivalence", oracle_equivalence),
        ("cosine similarity correctness", similarity_correctness),
        ("similarity-matrix invariants", matrix_invariants),
        ("VCR laws", vcr_laws),
        ("prune correctness", prune_correctness),
        ("format fidelity", format_fidelity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
