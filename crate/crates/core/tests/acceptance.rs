//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Criteria that need the real face corpus read it from `$MASKBENCH_ORL` (or
//! `$MASKBENCH_DATA`). Without it they run on a 41-subject, 10-image, 92x112
//! procedural fixture corpus and every such line says so.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use maskbench::classifiers::{
    softmax_objective, train_dt, train_knn, train_lr, Distance, DtParams, KnnParams, LabeledDataset, LrParams,
    ModelKind, ModelType, TreeNode,
};
use maskbench::dataset::{
    build_splits, generate_fixture_corpus, load_corpus, write_corpus, Corpus, SplitName, SubjectId,
};
use maskbench::evaluation::{evaluate_features, extract_split};
use maskbench::features::{extract_features, LbpConfig, Normalization};
use maskbench::imaging::GrayImage;
use maskbench::masker::mask_corpus;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_maskbench");

// tolerances and thresholds, as stated by the criteria
const SPLIT_SIZES: [usize; 5] = [369, 328, 369, 41, 41];
const SPLIT_BUDGET: Duration = Duration::from_secs(1);
const HEADLINE_MIN_ACCURACY: f64 = 0.90;
const HEADLINE_BUDGET: Duration = Duration::from_secs(60);
const DEGRADATION_MIN_MODELS: usize = 5;
const DEGRADATION_MIN_DROP: f64 = 0.15;
const HALF_MASKED_MAX_GAP: f64 = 0.10;
const KNN_CASES: usize = 200;
const FD_POINTS: usize = 20;
const FD_STEP: f64 = 1e-5;
const FD_MAX_RELATIVE_ERROR: f64 = 1e-5;
const DT_EXPECTED_ROOT: f64 = 5.0;
const LBP_IMAGES: usize = 100;
const REPRODUCE_BUDGET: Duration = Duration::from_secs(600);

struct Outcome {
    id: u8,
    title: &'static str,
    /// `None` marks a declaration rather than a measurement.
    pass: Option<bool>,
    detail: String,
}

struct Source {
    root: PathBuf,
    label: String,
    _tmp: Option<TempDir>,
}

fn data_source() -> Source {
    for var in ["MASKBENCH_ORL", "MASKBENCH_DATA"] {
        if let Some(root) = std::env::var_os(var).map(PathBuf::from).filter(|p| p.is_dir()) {
            return Source {
                label: format!("ORL from ${var}"),
                root,
                _tmp: None,
            };
        }
    }
    let tmp = TempDir::new().expect("temp dir");
    let root = tmp.path().join("fixture");
    write_corpus(&generate_fixture_corpus(7, 41, 10, 92, 112), &root).expect("fixture corpus written");
    Source {
        root,
        label: "fixture proxy, ORL not present".into(),
        _tmp: Some(tmp),
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

// 1

fn split_cardinality(corpus: &Corpus) -> Outcome {
    let masked = mask_corpus(corpus, 42).unwrap();
    let start = Instant::now();
    let splits = build_splits(corpus, &masked, 10).unwrap();
    let elapsed = start.elapsed();
    let sizes: Vec<usize> = splits.iter().map(|s| s.len()).collect();
    Outcome {
        id: 1,
        title: "split cardinality 369/328/369/41/41",
        pass: Some(sizes == SPLIT_SIZES && elapsed < SPLIT_BUDGET),
        detail: format!("sizes {sizes:?} in {elapsed:.2?}"),
    }
}

// 2, 4, 5, 6 read the CSV reports written by the reproduce run

type Table = BTreeMap<(String, String, String), f64>;

/// `(model, train_set, test_set) -> value` for rows carrying `metric`.
fn read_csv(path: &Path, metric: &str) -> Table {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[4] == metric).then(|| {
                (
                    (f[1].to_string(), f[2].to_string(), f[3].to_string()),
                    f[5].parse().unwrap(),
                )
            })
        })
        .collect()
}

fn key(model: ModelType, train: &str, test: &str) -> (String, String, String) {
    (model.name().to_string(), train.to_string(), test.to_string())
}

fn complement_identity(reports: &Path) -> Outcome {
    let accuracy = read_csv(&reports.join("accuracy.csv"), "accuracy");
    let mut checked = 0;
    let mut broken = Vec::new();
    for train in ["UM", "HM", "M"] {
        let miss = read_csv(&reports.join(format!("miss_rate_{train}.csv")), "miss_rate");
        for model in ModelType::ALL {
            for test in ["UM", "M"] {
                let k = key(model, train, test);
                checked += 1;
                if miss[&k] != 1.0 - accuracy[&k] {
                    broken.push(format!("{}/{}/{}", k.0, k.1, k.2));
                }
            }
        }
    }
    Outcome {
        id: 2,
        title: "complement identity miss_rate = 1 - accuracy",
        pass: Some(checked == 36 && broken.is_empty()),
        detail: format!("{checked} cells checked, {} mismatches {broken:?}", broken.len()),
    }
}

fn six_model_mean(acc: &Table, train: &str, test: &str) -> f64 {
    ModelType::ALL.iter().map(|&m| acc[&key(m, train, test)]).sum::<f64>() / 6.0
}

fn mask_degradation(acc: &Table, label: &str) -> Outcome {
    let degraded = ModelType::ALL
        .iter()
        .filter(|&&m| acc[&key(m, "UM", "M")] < acc[&key(m, "UM", "UM")])
        .count();
    let (clean, masked) = (six_model_mean(acc, "UM", "UM"), six_model_mean(acc, "UM", "M"));
    Outcome {
        id: 4,
        title: "mask degradation (>= 5 of 6 models, mean drop >= 15 pp)",
        pass: Some(degraded >= DEGRADATION_MIN_MODELS && clean - masked >= DEGRADATION_MIN_DROP),
        detail: format!(
            "{label}: {degraded}/6 models drop; mean {} -> {} (published 81% -> 45%)",
            pct(clean),
            pct(masked)
        ),
    }
}

fn masked_training_benefit(acc: &Table, label: &str) -> Outcome {
    let (um, m) = (six_model_mean(acc, "UM", "M"), six_model_mean(acc, "M", "M"));
    Outcome {
        id: 5,
        title: "masked training beats unmasked training on masked tests",
        pass: Some(m > um),
        detail: format!(
            "{label}: M/M mean {} vs UM/M mean {} (published 63% vs 45%)",
            pct(m),
            pct(um)
        ),
    }
}

fn half_masked_balance(acc: &Table, label: &str) -> Outcome {
    let (um, m) = (
        acc[&key(ModelType::Lr, "HM", "UM")],
        acc[&key(ModelType::Lr, "HM", "M")],
    );
    Outcome {
        id: 6,
        title: "LR half-masked balance |HM/UM - HM/M| <= 10 pp",
        pass: Some((um - m).abs() <= HALF_MASKED_MAX_GAP),
        detail: format!("{label}: HM/UM {} vs HM/M {} (published 80% vs 80%)", pct(um), pct(m)),
    }
}

// 3

fn headline_cell(corpus: &Corpus, label: &str) -> Outcome {
    let masked = mask_corpus(corpus, 42).unwrap();
    let splits = build_splits(corpus, &masked, 10).unwrap();
    let cfg = LbpConfig::default();
    let start = Instant::now();
    let labels = |name: SplitName| splits.get(name).records.iter().map(|r| r.subject).collect::<Vec<_>>();
    let train = extract_split(splits.get(SplitName::TrainingUm), &cfg).unwrap();
    let test = extract_split(splits.get(SplitName::TestingUm), &cfg).unwrap();
    let ds = LabeledDataset::from_features(&train, labels(SplitName::TrainingUm)).unwrap();
    let model = train_lr(&ds, &LrParams::default()).unwrap();
    let metrics = evaluate_features(&model, &test, &labels(SplitName::TestingUm)).unwrap();
    let elapsed = start.elapsed();
    Outcome {
        id: 3,
        title: "LR UM/UM accuracy >= 0.90 within 60 s",
        pass: Some(metrics.accuracy >= HEADLINE_MIN_ACCURACY && elapsed <= HEADLINE_BUDGET),
        detail: format!(
            "{label}: accuracy {} in {elapsed:.1?} (published 98%)",
            pct(metrics.accuracy)
        ),
    }
}

// 8

fn knn_oracle(rows: &[Vec<f64>], targets: &[usize], classes: usize, k: usize, x: &[f64]) -> usize {
    let mut ranked: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut votes = vec![0usize; classes];
    for &(_, i) in &ranked[..k] {
        votes[targets[i]] += 1;
    }
    let top = *votes.iter().max().unwrap();
    votes.iter().position(|&v| v == top).unwrap()
}

fn gini(labels: &[u32]) -> f64 {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    labels.iter().for_each(|&l| *counts.entry(l).or_default() += 1);
    let n = labels.len() as f64;
    1.0 - counts.values().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Lowest weighted child impurity over all midpoint thresholds; ties keep the first.
fn best_threshold(values: &[f64], labels: &[u32]) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut best = (f64::INFINITY, f64::NAN);
    for pair in sorted.windows(2) {
        let t = (pair[0] + pair[1]) / 2.0;
        let (l, r): (Vec<u32>, Vec<u32>) = {
            let (left, right): (Vec<_>, Vec<_>) = values.iter().zip(labels).partition(|(v, _)| **v <= t);
            (
                left.into_iter().map(|p| *p.1).collect(),
                right.into_iter().map(|p| *p.1).collect(),
            )
        };
        let n = values.len() as f64;
        let impurity = l.len() as f64 / n * gini(&l) + r.len() as f64 / n * gini(&r);
        if impurity < best.0 {
            best = (impurity, t);
        }
    }
    best.1
}

fn oracle_equivalences() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);

    let mut knn_agree = 0;
    for _ in 0..KNN_CASES {
        let n = rng.random_range(5..40);
        let dim = rng.random_range(1..6);
        let classes = rng.random_range(2..6u32);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(0..5) as f64).collect())
            .collect();
        let labels: Vec<SubjectId> = (0..n).map(|i| SubjectId(1 + (i as u32 % classes))).collect();
        let ds = LabeledDataset::new(rows.clone(), labels).unwrap();
        let k = rng.random_range(1..=n.min(9));
        let model = train_knn(
            &ds,
            &KnnParams {
                k,
                distance: Distance::Euclidean,
            },
        )
        .unwrap();
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(0..5) as f64).collect();
        if model.predict_index(&x).unwrap() == knn_oracle(&rows, ds.targets(), ds.class_count(), k, &x) {
            knn_agree += 1;
        }
    }

    let rows: Vec<Vec<f64>> = (0..12)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let labels = (0..12).map(|i| SubjectId(1 + i % 3)).collect();
    let ds = LabeledDataset::new(rows, labels).unwrap();
    let (c, d, l2) = (3, 4, 1e-3);
    let mut worst_fd = 0.0f64;
    for _ in 0..FD_POINTS {
        let w: Vec<f64> = (0..c * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic = softmax_objective(&ds, &w, &b, l2);
        let mut num = Vec::new();
        let loss = |w: &[f64], b: &[f64]| softmax_objective(&ds, w, b, l2).loss;
        for j in 0..c * d + c {
            let (mut wp, mut wm, mut bp, mut bm) = (w.clone(), w.clone(), b.clone(), b.clone());
            if j < c * d {
                wp[j] += FD_STEP;
                wm[j] -= FD_STEP;
            } else {
                bp[j - c * d] += FD_STEP;
                bm[j - c * d] -= FD_STEP;
            }
            num.push((loss(&wp, &bp) - loss(&wm, &bm)) / (2.0 * FD_STEP));
        }
        let ana: Vec<f64> = analytic
            .grad_weights
            .iter()
            .chain(&analytic.grad_biases)
            .copied()
            .collect();
        let err = ana.iter().zip(&num).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt()
            / ana.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst_fd = worst_fd.max(err);
    }

    let values = [1.0, 2.0, 8.0, 9.0];
    let labels = [1u32, 1, 2, 2];
    let ds = LabeledDataset::new(
        values.iter().map(|&v| vec![v]).collect(),
        labels.map(SubjectId).to_vec(),
    )
    .unwrap();
    let tree = train_dt(&ds, &DtParams::default()).unwrap();
    let root = match &tree.kind {
        ModelKind::Dt(t) => match t.nodes[0] {
            TreeNode::Split { threshold, .. } => threshold,
            TreeNode::Leaf { .. } => f64::NAN,
        },
        _ => unreachable!(),
    };
    let oracle_root = best_threshold(&values, &labels);

    Outcome {
        id: 8,
        title: "oracle equivalences (KNN exact, LR finite differences, DT root split)",
        pass: Some(
            knn_agree == KNN_CASES && worst_fd <= FD_MAX_RELATIVE_ERROR && root == oracle_root && root == DT_EXPECTED_ROOT,
        ),
        detail: format!(
            "KNN {knn_agree}/{KNN_CASES} agree; worst FD relative error {worst_fd:.2e}; DT root {root} vs oracle {oracle_root}"
        ),
    }
}

// 9

fn shifted(img: &GrayImage, c: i32) -> GrayImage {
    let mut out = img.clone();
    out.pixels_mut().iter_mut().for_each(|p| *p = (*p as i32 + c) as u8);
    out
}

fn lbp_properties() -> Outcome {
    let corpus = generate_fixture_corpus(2024, 10, 10, 92, 112);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut shift_ok, mut mass_ok, mut dim_ok, mut nonzero_shifts) = (0, 0, 0, 0);
    for record in corpus.records().iter().take(LBP_IMAGES) {
        let img = &record.image;
        let lo = *img.pixels().iter().min().unwrap() as i32;
        let hi = *img.pixels().iter().max().unwrap() as i32;
        let c = rng.random_range(-lo..=255 - hi);
        nonzero_shifts += (c != 0) as usize;
        let (radius, neighbors) = [(1, 8), (2, 16), (8, 24), (3, 12)][rng.random_range(0..4)];
        let cfg = LbpConfig {
            radius,
            neighbors,
            grid_x: rng.random_range(1..=4),
            grid_y: rng.random_range(1..=4),
            uniform: neighbors > 8 || rng.random_bool(0.5),
            normalization: Normalization::L1,
        };
        if extract_features(img, &cfg).unwrap() == extract_features(&shifted(img, c), &cfg).unwrap() {
            shift_ok += 1;
        }
        let raw = LbpConfig {
            normalization: Normalization::None,
            ..cfg
        };
        let hist = extract_features(img, &raw).unwrap();
        let valid = (img.width() - 2 * radius as usize) * (img.height() - 2 * radius as usize);
        if hist.0.iter().sum::<f64>() == valid as f64 {
            mass_ok += 1;
        }
        let n = neighbors as usize;
        let bins = if cfg.uniform { n * (n - 1) + 3 } else { 1 << n };
        if hist.dim() == (cfg.grid_x * cfg.grid_y) as usize * bins && hist.dim() == cfg.dimension() {
            dim_ok += 1;
        }
    }
    let all = LBP_IMAGES;
    Outcome {
        id: 9,
        title: "LBP properties on 100 fixture images (shift, mass, dimension)",
        pass: Some(shift_ok == all && mass_ok == all && dim_ok == all && nonzero_shifts > all / 2),
        detail: format!(
            "shift invariance {shift_ok}/{all} ({nonzero_shifts} non-zero shifts), mass {mass_ok}/{all}, dimension {dim_ok}/{all}"
        ),
    }
}

// 10, 11

fn reproduce(data: &Path, out: &Path, jobs: &str) -> (bool, Duration, String) {
    let start = Instant::now();
    let result = Command::new(BIN)
        .args(["reproduce", "--data"])
        .arg(data)
        .arg("--out")
        .arg(out)
        .args(["--jobs", jobs])
        .env_remove("MASKBENCH_DATA")
        .output()
        .expect("binary runs");
    (
        result.status.success(),
        start.elapsed(),
        String::from_utf8_lossy(&result.stderr).into_owned(),
    )
}

fn report_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map(|it| {
            it.map(|e| {
                let p = e.unwrap().path();
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    fs::read(&p).unwrap(),
                )
            })
            .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

fn main() -> ExitCode {
    let source = data_source();
    let corpus = load_corpus(&source.root).expect("acceptance corpus loads");
    let label = source.label.as_str();
    println!(
        "acceptance corpus: {label} ({} subjects x {} images)",
        corpus.subject_count(),
        corpus.images_per_subject()
    );
    let work = TempDir::new().unwrap();
    let mut outcomes = Vec::new();

    let fixture41 = generate_fixture_corpus(7, 41, 10, 92, 112);
    outcomes.push(split_cardinality(if corpus.subject_count() == 41 {
        &corpus
    } else {
        &fixture41
    }));

    let (run_a, run_b) = (work.path().join("a"), work.path().join("b"));
    let (ok_a, time_a, err_a) = reproduce(&source.root, &run_a, "1");
    let reports = run_a.join("reports");
    if ok_a {
        let acc = read_csv(&reports.join("accuracy.csv"), "accuracy");
        outcomes.push(complement_identity(&reports));
        outcomes.push(mask_degradation(&acc, label));
        outcomes.push(masked_training_benefit(&acc, label));
        outcomes.push(half_masked_balance(&acc, label));
    } else {
        for (id, title) in [
            (2, "complement identity"),
            (4, "mask degradation"),
            (5, "masked training benefit"),
            (6, "LR half-masked balance"),
        ] {
            outcomes.push(Outcome {
                id,
                title,
                pass: Some(false),
                detail: format!("reproduce failed: {}", err_a.trim()),
            });
        }
    }
    outcomes.push(headline_cell(&corpus, label));
    let knn = knn_um_m(&reports);
    outcomes.push(Outcome {
        id: 7,
        title: "exact masked-cell values declared not reproducible",
        pass: None,
        detail: format!(
            "synthetic masks and unstated library settings differ from the original study; criteria 4-6 check trends instead (e.g. KNN UM/M here {knn}, published 24%)"
        ),
    });
    outcomes.push(oracle_equivalences());
    outcomes.push(lbp_properties());

    let (ok_b, _, err_b) = reproduce(&source.root, &run_b, "4");
    // same configuration and output root again, now with a warm feature cache
    let first = report_bytes(&reports);
    let (ok_c, _, err_c) = reproduce(&source.root, &run_a, "2");
    let identical = ok_a && ok_b && ok_c && first.len() == 12 && first == report_bytes(&run_b.join("reports"));
    let repeated = identical && first == report_bytes(&reports);
    outcomes.push(Outcome {
        id: 10,
        title: "byte-identical reports across runs and --jobs",
        pass: Some(identical && repeated),
        detail: format!(
            "{} report files; jobs 1 vs 4 identical: {identical}; rerun with jobs 2 identical: {repeated}{}{}",
            first.len(),
            err_b.trim(),
            err_c.trim()
        ),
    });
    outcomes.push(Outcome {
        id: 11,
        title: "full reproduce within 10 minutes",
        pass: Some(ok_a && time_a <= REPRODUCE_BUDGET),
        detail: format!("{label}: {time_a:.1?} on one worker thread"),
    });

    outcomes.sort_by_key(|o| o.id);
    let mut failed = 0;
    for o in &outcomes {
        let status = match o.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed += 1;
                "FAIL"
            }
            None => "DECLARED",
        };
        println!("criterion {:>2} {status:<8} {} | {}", o.id, o.title, o.detail);
    }
    let passed = outcomes.iter().filter(|o| o.pass == Some(true)).count();
    println!(
        "acceptance: {passed} passed, {failed} failed, {} declared",
        outcomes.len() - passed - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn knn_um_m(reports: &Path) -> String {
    let path = reports.join("accuracy.csv");
    if !path.exists() {
        return "unavailable".into();
    }
    pct(read_csv(&path, "accuracy")[&key(ModelType::Knn, "UM", "M")])
}
