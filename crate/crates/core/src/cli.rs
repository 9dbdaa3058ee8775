//! Command-line workflows: fixture generation, masking, splits, features,
//! single-model training and evaluation, and the full reproduction run.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::classifiers::{
    deserialize_model, serialize_model, train, Distance, Hyperparameters, LabeledDataset, ModelType,
};
use crate::dataset::{build_splits, generate_fixture_corpus, hex, load_corpus, write_corpus, SplitName, SplitSet};
use crate::evaluation::{
    evaluate_features, extract_all, render_reports, run_experiment_matrix_on_features, ReportFormat, TestSet, TrainSet,
};
use crate::features::{features_csv, FeatureVector, LbpConfig};
use crate::masker::{mask_corpus_with, MaskGeometry};

pub const DATA_ENV: &str = "MASKBENCH_DATA";

#[derive(Debug, Parser)]
#[command(
    name = "maskbench",
    version,
    about = "Masked-face recognition benchmark with LBP features"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a procedural face corpus as s<k>/<i>.pgm.
    Fixtures(FixtureArgs),
    /// Write the masked rendition of a corpus under <out>/masked.
    Mask(RunArgs),
    /// Write the split manifest.
    Split(RunArgs),
    /// Write per-split LBP feature CSVs.
    Features(RunArgs),
    /// Train one model on one training split and save it.
    Train(TrainArgs),
    /// Evaluate a saved model on one test split.
    Eval(EvalArgs),
    /// Run the whole experiment matrix and write every report table.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 41)]
    pub subjects: u32,
    #[arg(long, default_value_t = 10)]
    pub per_subject: u32,
    #[arg(long, default_value_t = 92)]
    pub width: usize,
    #[arg(long, default_value_t = 112)]
    pub height: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Unmasked corpus root; falls back to $MASKBENCH_DATA.
    #[arg(long, env = DATA_ENV)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Master seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Seed for mask assignment; defaults to the master seed.
    #[arg(long)]
    pub mask_seed: Option<u64>,
    #[arg(long, default_value_t = MaskGeometry::default().top_fraction)]
    pub mask_top: f64,
    #[arg(long, default_value_t = MaskGeometry::default().bottom_fraction)]
    pub mask_bottom: f64,
    #[arg(long, default_value_t = 10)]
    pub holdout: u32,
    #[arg(long, default_value_t = LbpConfig::default().radius)]
    pub radius: u32,
    #[arg(long, default_value_t = LbpConfig::default().neighbors)]
    pub neighbors: u32,
    /// Cells per axis, `N` or `XxY`.
    #[arg(long, default_value = "4x4", value_parser = parse_grid)]
    pub grid: (u32, u32),
    #[arg(long, default_value_t = 5)]
    pub knn_k: usize,
    #[arg(long, value_enum, default_value_t = DistanceArg::Euclidean)]
    pub knn_distance: DistanceArg,
    #[arg(long, default_value_t = 1e-4)]
    pub lr_l2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub svc_c: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lda_shrinkage: f64,
    /// Worker threads; defaults to the available cores. Never affects output.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistanceArg {
    Euclidean,
    ChiSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Markdown,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainSetArg {
    Um,
    Hm,
    M,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestSetArg {
    Um,
    M,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_parser = |s: &str| s.parse::<ModelType>())]
    pub model: ModelType,
    #[arg(long, value_enum, default_value_t = TrainSetArg::Um)]
    pub train_set: TrainSetArg,
    /// Model file; defaults to <out>/<model>_<train_set>.mfrb.
    #[arg(long)]
    pub model_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long, value_enum, default_value_t = TestSetArg::Um)]
    pub test_set: TestSetArg,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value_t = FormatArg::Both)]
    pub format: FormatArg,
}

fn parse_grid(s: &str) -> Result<(u32, u32), String> {
    let parse = |v: &str| {
        v.trim()
            .parse::<u32>()
            .map_err(|_| format!("bad grid {s:?}, expected N or XxY"))
    };
    match s.split_once(['x', 'X']) {
        Some((x, y)) => Ok((parse(x)?, parse(y)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

/// Failure of one pipeline stage.
#[derive(Debug)]
pub struct CliError {
    pub stage: &'static str,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

fn stage<E: fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> CliError {
    move |e| CliError {
        stage,
        message: e.to_string(),
    }
}

/// Everything that determines the reports. Serialized into every report header.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_root: PathBuf,
    pub output_root: PathBuf,
    pub master_seed: u64,
    pub mask_seed: u64,
    pub mask_geometry: MaskGeometry,
    pub lbp: LbpConfig,
    pub hyper: Hyperparameters,
    pub holdout_index: u32,
}

impl RunConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self, CliError> {
        let data_root = args.data.clone().ok_or_else(|| CliError {
            stage: "load",
            message: format!("corpus not found: no --data given and {DATA_ENV} is unset"),
        })?;
        let mut hyper = Hyperparameters::default();
        hyper.knn.k = args.knn_k;
        hyper.knn.distance = match args.knn_distance {
            DistanceArg::Euclidean => Distance::Euclidean,
            DistanceArg::ChiSquare => Distance::ChiSquare,
        };
        hyper.lr.l2 = args.lr_l2;
        hyper.svc.c = args.svc_c;
        hyper.lda.shrinkage = args.lda_shrinkage;
        let lbp = LbpConfig {
            radius: args.radius,
            neighbors: args.neighbors,
            grid_x: args.grid.0,
            grid_y: args.grid.1,
            ..LbpConfig::default()
        };
        lbp.validate().map_err(stage("config"))?;
        let mask_geometry = MaskGeometry {
            top_fraction: args.mask_top,
            bottom_fraction: args.mask_bottom,
            ..MaskGeometry::default()
        };
        mask_geometry.validate().map_err(stage("config"))?;
        Ok(Self {
            data_root,
            output_root: args.out.clone(),
            master_seed: args.seed,
            mask_seed: args.mask_seed.unwrap_or(args.seed),
            mask_geometry,
            lbp,
            hyper,
            holdout_index: args.holdout,
        })
    }

    /// Header entries. The output root and thread count are left out: they do not
    /// change any result.
    pub fn provenance(&self) -> Vec<(String, String)> {
        let g = &self.mask_geometry;
        let mut out = vec![
            ("data_root".to_string(), self.data_root.display().to_string()),
            ("master_seed".to_string(), self.master_seed.to_string()),
            ("mask_seed".to_string(), self.mask_seed.to_string()),
            (
                "mask_geometry".to_string(),
                format!(
                    "top={} bottom={} top_width={} bottom_width={}",
                    g.top_fraction, g.bottom_fraction, g.top_width_fraction, g.bottom_width_fraction
                ),
            ),
            ("holdout_index".to_string(), self.holdout_index.to_string()),
            ("lbp".to_string(), self.lbp.to_string()),
        ];
        for m in ModelType::ALL {
            out.push((format!("hyper_{}", m.name().to_lowercase()), self.hyper.describe(m)));
        }
        out
    }

    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.provenance() {
            h.update(format!("{k}={v}\n"));
        }
        hex(&h.finalize())
    }
}

/// Corpus, masked rendition and splits, built from a [`RunConfig`].
pub struct Prepared {
    pub corpus_hash: String,
    pub splits: SplitSet,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let corpus = load_corpus(&cfg.data_root).map_err(stage("load"))?;
    let masked = mask_corpus_with(&corpus, cfg.mask_seed, &cfg.mask_geometry).map_err(stage("mask"))?;
    let splits = build_splits(&corpus, &masked, cfg.holdout_index).map_err(stage("split"))?;
    Ok(Prepared {
        corpus_hash: corpus.content_hash(),
        splits,
    })
}

fn feature_cache_key(cfg: &RunConfig, corpus_hash: &str) -> String {
    let g = &cfg.mask_geometry;
    let mut h = Sha256::new();
    h.update(format!(
        "corpus={corpus_hash}\nmask_seed={}\nmask={:?}\nholdout={}\n{}\n",
        cfg.mask_seed,
        (
            g.top_fraction,
            g.bottom_fraction,
            g.top_width_fraction,
            g.bottom_width_fraction
        ),
        cfg.holdout_index,
        cfg.lbp
    ));
    hex(&h.finalize())[..16].to_string()
}

fn encode_features(features: &BTreeMap<SplitName, Vec<FeatureVector>>) -> Vec<u8> {
    let mut out = Vec::new();
    for name in SplitName::ALL {
        let rows = &features[&name];
        out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
        out.extend_from_slice(&(rows.first().map_or(0, FeatureVector::dim) as u64).to_le_bytes());
        for v in rows.iter().flat_map(|r| &r.0) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode_features(bytes: &[u8], splits: &SplitSet, dim: usize) -> Option<BTreeMap<SplitName, Vec<FeatureVector>>> {
    let mut words = bytes.chunks_exact(8).map(|c| c.try_into().unwrap());
    if !bytes.len().is_multiple_of(8) {
        return None;
    }
    let mut out = BTreeMap::new();
    for name in SplitName::ALL {
        let n = u64::from_le_bytes(words.next()?) as usize;
        let d = u64::from_le_bytes(words.next()?) as usize;
        if n != splits.get(name).len() || d != dim {
            return None;
        }
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Option<Vec<f64>> = (0..d).map(|_| words.next().map(f64::from_le_bytes)).collect();
            rows.push(FeatureVector(row?));
        }
        out.insert(name, rows);
    }
    words.next().is_none().then_some(out)
}

/// Features for every split, read from `<out>/cache` when an entry for this
/// configuration exists.
pub fn cached_features(
    cfg: &RunConfig,
    prepared: &Prepared,
) -> Result<BTreeMap<SplitName, Vec<FeatureVector>>, CliError> {
    let dir = cfg.output_root.join("cache");
    let path = dir.join(format!(
        "features-{}.bin",
        feature_cache_key(cfg, &prepared.corpus_hash)
    ));
    if let Ok(bytes) = fs::read(&path) {
        if let Some(features) = decode_features(&bytes, &prepared.splits, cfg.lbp.dimension()) {
            return Ok(features);
        }
    }
    let features = extract_all(&prepared.splits, &cfg.lbp).map_err(stage("features"))?;
    fs::create_dir_all(&dir).map_err(stage("features"))?;
    fs::write(&path, encode_features(&features)).map_err(stage("features"))?;
    Ok(features)
}

fn write_file(path: &Path, bytes: &[u8], stage_name: &'static str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(stage(stage_name))?;
    }
    fs::write(path, bytes).map_err(|e| CliError {
        stage: stage_name,
        message: format!("{}: {e}", path.display()),
    })
}

fn with_pool<T>(jobs: Option<usize>, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError>
where
    T: Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError {
                stage: "config",
                message: "--jobs must be at least 1".into(),
            });
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(stage("config"))?.install(f)
}

fn train_set(arg: TrainSetArg) -> TrainSet {
    match arg {
        TrainSetArg::Um => TrainSet::Um,
        TrainSetArg::Hm => TrainSet::Hm,
        TrainSetArg::M => TrainSet::M,
    }
}

fn test_set(arg: TestSetArg) -> TestSet {
    match arg {
        TestSetArg::Um => TestSet::Um,
        TestSetArg::M => TestSet::M,
    }
}

fn labels(splits: &SplitSet, name: SplitName) -> Vec<crate::dataset::SubjectId> {
    splits.get(name).records.iter().map(|r| r.subject).collect()
}

pub fn cmd_fixtures(args: &FixtureArgs) -> Result<(), CliError> {
    if args.subjects == 0 || args.per_subject == 0 || args.width == 0 || args.height == 0 {
        return Err(CliError {
            stage: "fixtures",
            message: "subjects, per-subject count and image size must be positive".into(),
        });
    }
    let corpus = generate_fixture_corpus(args.seed, args.subjects, args.per_subject, args.width, args.height);
    write_corpus(&corpus, &args.out).map_err(stage("fixtures"))?;
    println!("wrote {} images to {}", corpus.len(), args.out.display());
    Ok(())
}

pub fn cmd_mask(args: &RunArgs) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(args)?;
    with_pool(args.jobs, || {
        let corpus = load_corpus(&cfg.data_root).map_err(stage("load"))?;
        let masked = mask_corpus_with(&corpus, cfg.mask_seed, &cfg.mask_geometry).map_err(stage("mask"))?;
        write_corpus(&masked, &cfg.output_root).map_err(stage("mask"))?;
        println!(
            "wrote {} masked images under {}",
            masked.len(),
            cfg.output_root.join("masked").display()
        );
        Ok(())
    })
}

pub fn cmd_split(args: &RunArgs) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(args)?;
    with_pool(args.jobs, || {
        let prepared = prepare(&cfg)?;
        write_file(
            &cfg.output_root.join("manifest.csv"),
            prepared.splits.manifest_csv().as_bytes(),
            "split",
        )?;
        for split in prepared.splits.iter() {
            println!("{} {}", split.name.as_str(), split.len());
        }
        Ok(())
    })
}

pub fn cmd_features(args: &RunArgs) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(args)?;
    with_pool(args.jobs, || {
        let prepared = prepare(&cfg)?;
        let features = cached_features(&cfg, &prepared)?;
        for split in prepared.splits.iter() {
            let path = cfg
                .output_root
                .join("features")
                .join(format!("{}.csv", split.name.as_str()));
            write_file(
                &path,
                features_csv(&split.records, &features[&split.name]).as_bytes(),
                "features",
            )?;
        }
        println!("dimension {}", cfg.lbp.dimension());
        Ok(())
    })
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(&args.run)?;
    let set = train_set(args.train_set);
    with_pool(args.run.jobs, || {
        let prepared = prepare(&cfg)?;
        let features = cached_features(&cfg, &prepared)?;
        let name = set.split();
        let ds =
            LabeledDataset::from_features(&features[&name], labels(&prepared.splits, name)).map_err(stage("train"))?;
        let model = train(args.model, &ds, &cfg.hyper)
            .map_err(stage("train"))?
            .with_feature_fingerprint(cfg.lbp.fingerprint());
        let path = args.model_file.clone().unwrap_or_else(|| {
            cfg.output_root
                .join(format!("{}_{}.mfrb", args.model.name().to_lowercase(), set.code()))
        });
        write_file(&path, &serialize_model(&model), "train")?;
        println!("wrote {}", path.display());
        Ok(())
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(&args.run)?;
    let set = test_set(args.test_set);
    with_pool(args.run.jobs, || {
        let bytes = fs::read(&args.model_file).map_err(|e| CliError {
            stage: "eval",
            message: format!("{}: {e}", args.model_file.display()),
        })?;
        let model = deserialize_model(&bytes).map_err(stage("eval"))?;
        if model.feature_fingerprint != 0 && model.feature_fingerprint != cfg.lbp.fingerprint() {
            return Err(CliError {
                stage: "eval",
                message: "model was trained with a different LBP configuration".into(),
            });
        }
        let prepared = prepare(&cfg)?;
        let features = cached_features(&cfg, &prepared)?;
        let name = set.split();
        let m = evaluate_features(&model, &features[&name], &labels(&prepared.splits, name)).map_err(stage("eval"))?;
        println!(
            "model={} test_set={} n_test={} misses={} accuracy={} macro_f1={}",
            model.model_type(),
            set.code(),
            m.n_test,
            m.misses,
            m.accuracy,
            m.macro_f1
        );
        Ok(())
    })
}

pub fn cmd_reproduce(args: &ReproduceArgs) -> Result<(), CliError> {
    let cfg = RunConfig::from_args(&args.run)?;
    with_pool(args.run.jobs, || {
        let prepared = prepare(&cfg)?;
        let features = cached_features(&cfg, &prepared)?;
        let mut bundle = run_experiment_matrix_on_features(&prepared.splits, &features, &cfg.lbp, &cfg.hyper)
            .map_err(stage("matrix"))?;
        let mut header = cfg.provenance();
        header.push(("config_hash".into(), cfg.config_hash()));
        header.push(("corpus_sha256".into(), prepared.corpus_hash.clone()));
        // run-level entries first, then what the matrix recorded, without repeats
        for entry in std::mem::take(&mut bundle.provenance) {
            if !header.iter().any(|(k, _)| *k == entry.0) {
                header.push(entry);
            }
        }
        bundle.provenance = header;

        let formats: &[ReportFormat] = match args.format {
            FormatArg::Csv => &[ReportFormat::Csv],
            FormatArg::Markdown => &[ReportFormat::Markdown],
            FormatArg::Both => &[ReportFormat::Csv, ReportFormat::Markdown],
        };
        let dir = cfg.output_root.join("reports");
        for &format in formats {
            for table in render_reports(&bundle, format) {
                write_file(&dir.join(table.file_name(format)), &table.bytes, "render")?;
            }
        }
        write_file(
            &cfg.output_root.join("manifest.csv"),
            prepared.splits.manifest_csv().as_bytes(),
            "render",
        )?;
        println!("wrote reports to {}", dir.display());
        Ok(())
    })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fixtures(a) => cmd_fixtures(&a),
        Command::Mask(a) => cmd_mask(&a),
        Command::Split(a) => cmd_split(&a),
        Command::Features(a) => cmd_features(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Reproduce(a) => cmd_reproduce(&a),
    }
}

/// Parses `std::env::args`, runs, and maps failures to exit code 1.
pub fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
