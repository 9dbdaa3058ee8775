//! The six-experiment matrix and its report tables.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::classifiers::{train, ClassifierError, Hyperparameters, LabeledDataset, ModelType, TrainedModel};
use crate::dataset::{DatasetSplit, SplitName, SplitSet, SubjectId};
use crate::features::{FeatureError, FeatureVector, LbpConfig, LbpExtractor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrainSet {
    Um,
    Hm,
    M,
}

impl TrainSet {
    pub const ALL: [TrainSet; 3] = [TrainSet::Um, TrainSet::Hm, TrainSet::M];

    pub fn code(self) -> &'static str {
        match self {
            TrainSet::Um => "UM",
            TrainSet::Hm => "HM",
            TrainSet::M => "M",
        }
    }

    pub fn split(self) -> SplitName {
        match self {
            TrainSet::Um => SplitName::TrainingUm,
            TrainSet::Hm => SplitName::TrainingHm,
            TrainSet::M => SplitName::TrainingM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TestSet {
    Um,
    M,
}

impl TestSet {
    pub const ALL: [TestSet; 2] = [TestSet::Um, TestSet::M];

    pub fn code(self) -> &'static str {
        match self {
            TestSet::Um => "UM",
            TestSet::M => "M",
        }
    }

    /// Row label of the miss-rate tables.
    pub fn group(self) -> &'static str {
        match self {
            TestSet::Um => "Unmasked",
            TestSet::M => "Masked",
        }
    }

    pub fn split(self) -> SplitName {
        match self {
            TestSet::Um => SplitName::TestingUm,
            TestSet::M => SplitName::TestingM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExperimentId {
    pub train: TrainSet,
    pub test: TestSet,
}

impl ExperimentId {
    /// Column order of the accuracy and F1 tables.
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::new(TrainSet::Um, TestSet::Um),
        ExperimentId::new(TrainSet::Um, TestSet::M),
        ExperimentId::new(TrainSet::Hm, TestSet::Um),
        ExperimentId::new(TrainSet::Hm, TestSet::M),
        ExperimentId::new(TrainSet::M, TestSet::Um),
        ExperimentId::new(TrainSet::M, TestSet::M),
    ];

    pub const fn new(train: TrainSet, test: TestSet) -> Self {
        Self { train, test }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.train.code(), self.test.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScore {
    pub subject: SubjectId,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub n_test: usize,
    pub misses: usize,
    pub accuracy: f64,
    /// Unweighted mean of per-class F1 over every class that is either true or predicted.
    pub macro_f1: f64,
    pub per_class: Vec<ClassScore>,
}

impl Metrics {
    pub fn from_predictions(truth: &[SubjectId], predicted: &[SubjectId]) -> Self {
        assert_eq!(truth.len(), predicted.len());
        assert!(!truth.is_empty(), "metrics need at least one prediction");
        // (true positives, predicted count, true count)
        let mut counts: BTreeMap<SubjectId, (usize, usize, usize)> = BTreeMap::new();
        for (&t, &p) in truth.iter().zip(predicted) {
            counts.entry(t).or_default().2 += 1;
            counts.entry(p).or_default().1 += 1;
            if t == p {
                counts.get_mut(&t).unwrap().0 += 1;
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let per_class: Vec<ClassScore> = counts
            .into_iter()
            .map(|(subject, (tp, pred, actual))| {
                let precision = ratio(tp, pred);
                let recall = ratio(tp, actual);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassScore {
                    subject,
                    precision,
                    recall,
                    f1,
                }
            })
            .collect();
        let n = truth.len();
        let misses = truth.iter().zip(predicted).filter(|(t, p)| t != p).count();
        Self {
            n_test: n,
            misses,
            accuracy: (n - misses) as f64 / n as f64,
            macro_f1: per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64,
            per_class,
        }
    }

    /// Defined as the complement of accuracy, so the two always sum to exactly one.
    pub fn miss_rate(&self) -> f64 {
        1.0 - self.accuracy
    }
}

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("split {0} is empty")]
    EmptySplit(&'static str),
    #[error("model expects {expected} features but the LBP configuration yields {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model was trained on a different LBP configuration")]
    FeatureConfigMismatch,
    #[error("feature extraction for {split}: {source}")]
    Features {
        split: &'static str,
        #[source]
        source: FeatureError,
    },
    #[error("training {model} on {train_set}: {source}")]
    Training {
        model: ModelType,
        train_set: &'static str,
        #[source]
        source: ClassifierError,
    },
    #[error("evaluating {model} on {experiment}: {source}")]
    Prediction {
        model: ModelType,
        experiment: String,
        #[source]
        source: ClassifierError,
    },
}

pub fn extract_split(split: &DatasetSplit, cfg: &LbpConfig) -> Result<Vec<FeatureVector>, EvaluationError> {
    let extractor = LbpExtractor::new(*cfg).map_err(|source| EvaluationError::Features {
        split: split.name.as_str(),
        source,
    })?;
    split
        .records
        .par_iter()
        .map(|r| extractor.extract(&r.image))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| EvaluationError::Features {
            split: split.name.as_str(),
            source,
        })
}

fn split_labels(split: &DatasetSplit) -> Vec<SubjectId> {
    split.records.iter().map(|r| r.subject).collect()
}

pub fn evaluate_features(
    model: &TrainedModel,
    features: &[FeatureVector],
    labels: &[SubjectId],
) -> Result<Metrics, ClassifierError> {
    let predicted = features
        .iter()
        .map(|f| model.predict(&f.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Metrics::from_predictions(labels, &predicted))
}

pub fn evaluate(model: &TrainedModel, split: &DatasetSplit, cfg: &LbpConfig) -> Result<Metrics, EvaluationError> {
    if split.is_empty() {
        return Err(EvaluationError::EmptySplit(split.name.as_str()));
    }
    if model.dim != cfg.dimension() {
        return Err(EvaluationError::DimensionMismatch {
            expected: model.dim,
            found: cfg.dimension(),
        });
    }
    if model.feature_fingerprint != 0 && model.feature_fingerprint != cfg.fingerprint() {
        return Err(EvaluationError::FeatureConfigMismatch);
    }
    let features = extract_split(split, cfg)?;
    evaluate_features(model, &features, &split_labels(split)).map_err(|source| EvaluationError::Prediction {
        model: model.model_type(),
        experiment: split.name.as_str().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub model: ModelType,
    pub experiment: ExperimentId,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    /// `key: value` lines written at the top of every rendered table.
    pub provenance: Vec<(String, String)>,
    /// Model-major, experiments in [`ExperimentId::ALL`] order.
    pub cells: Vec<Cell>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

impl ReportBundle {
    pub fn with_provenance(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.provenance.push((key.to_string(), value.to_string()));
        self
    }

    pub fn cell(&self, model: ModelType, experiment: ExperimentId) -> &Metrics {
        &self
            .cells
            .iter()
            .find(|c| c.model == model && c.experiment == experiment)
            .expect("bundle covers every model and experiment")
            .metrics
    }

    pub fn accuracy(&self, model: ModelType, experiment: ExperimentId) -> f64 {
        self.cell(model, experiment).accuracy
    }

    pub fn f1(&self, model: ModelType, experiment: ExperimentId) -> f64 {
        self.cell(model, experiment).macro_f1
    }

    pub fn miss_rate(&self, model: ModelType, experiment: ExperimentId) -> f64 {
        self.cell(model, experiment).miss_rate()
    }

    /// Mean over the six experiments for one model.
    pub fn model_average(&self, model: ModelType, metric: impl Fn(&Metrics) -> f64) -> f64 {
        mean(ExperimentId::ALL.iter().map(|&e| metric(self.cell(model, e))))
    }

    /// Mean over the six models for one experiment.
    pub fn experiment_average(&self, experiment: ExperimentId, metric: impl Fn(&Metrics) -> f64) -> f64 {
        mean(ModelType::ALL.iter().map(|&m| metric(self.cell(m, experiment))))
    }

    pub fn grand_average(&self, metric: impl Fn(&Metrics) -> f64) -> f64 {
        mean(self.cells.iter().map(|c| metric(&c.metrics)))
    }

    /// Six-model mean miss rate for one training set and test group.
    pub fn overall_miss_rate(&self, train: TrainSet, test: TestSet) -> f64 {
        self.experiment_average(ExperimentId::new(train, test), Metrics::miss_rate)
    }
}

/// Trains all six models on the three training splits and evaluates each on both test splits.
///
/// Work is spread over the current rayon pool; results are joined in a fixed order
/// so the bundle does not depend on the degree of parallelism.
pub fn run_experiment_matrix(
    splits: &SplitSet,
    cfg: &LbpConfig,
    hyper: &Hyperparameters,
) -> Result<ReportBundle, EvaluationError> {
    for split in splits.iter() {
        if split.is_empty() {
            return Err(EvaluationError::EmptySplit(split.name.as_str()));
        }
    }
    let features = extract_all(splits, cfg)?;
    run_experiment_matrix_on_features(splits, &features, cfg, hyper)
}

pub fn extract_all(
    splits: &SplitSet,
    cfg: &LbpConfig,
) -> Result<BTreeMap<SplitName, Vec<FeatureVector>>, EvaluationError> {
    SplitName::ALL
        .into_iter()
        .map(|name| Ok((name, extract_split(splits.get(name), cfg)?)))
        .collect()
}

/// As [`run_experiment_matrix`], with features already extracted under `cfg`
/// (one vector per record, in split order).
pub fn run_experiment_matrix_on_features(
    splits: &SplitSet,
    features: &BTreeMap<SplitName, Vec<FeatureVector>>,
    cfg: &LbpConfig,
    hyper: &Hyperparameters,
) -> Result<ReportBundle, EvaluationError> {
    for split in splits.iter() {
        if split.is_empty() {
            return Err(EvaluationError::EmptySplit(split.name.as_str()));
        }
        let found = features.get(&split.name).map_or(0, Vec::len);
        let dim = features
            .get(&split.name)
            .and_then(|f| f.first())
            .map_or(cfg.dimension(), FeatureVector::dim);
        if found != split.len() || dim != cfg.dimension() {
            return Err(EvaluationError::DimensionMismatch {
                expected: cfg.dimension(),
                found: dim,
            });
        }
    }
    let datasets: BTreeMap<TrainSet, LabeledDataset> = TrainSet::ALL
        .into_iter()
        .map(|t| {
            let split = splits.get(t.split());
            LabeledDataset::from_features(&features[&t.split()], split_labels(split))
                .map(|ds| (t, ds))
                .map_err(|source| EvaluationError::Training {
                    model: ModelType::Svc,
                    train_set: split.name.as_str(),
                    source,
                })
        })
        .collect::<Result<_, _>>()?;

    let jobs: Vec<(ModelType, TrainSet)> = ModelType::ALL
        .into_iter()
        .flat_map(|m| TrainSet::ALL.into_iter().map(move |t| (m, t)))
        .collect();
    let fingerprint = cfg.fingerprint();
    let models: Vec<TrainedModel> = jobs
        .par_iter()
        .map(|&(model, t)| {
            train(model, &datasets[&t], hyper)
                .map(|m| m.with_feature_fingerprint(fingerprint))
                .map_err(|source| EvaluationError::Training {
                    model,
                    train_set: t.split().as_str(),
                    source,
                })
        })
        .collect::<Result<_, _>>()?;

    let mut cells = Vec::with_capacity(36);
    for model in ModelType::ALL {
        for experiment in ExperimentId::ALL {
            let trained = &models[jobs.iter().position(|&j| j == (model, experiment.train)).unwrap()];
            let split = splits.get(experiment.test.split());
            let metrics = evaluate_features(trained, &features[&experiment.test.split()], &split_labels(split))
                .map_err(|source| EvaluationError::Prediction {
                    model,
                    experiment: experiment.to_string(),
                    source,
                })?;
            cells.push(Cell {
                model,
                experiment,
                metrics,
            });
        }
    }

    let mut bundle = ReportBundle {
        provenance: Vec::new(),
        cells,
    }
    .with_provenance("lbp", cfg)
    .with_provenance("lbp_fingerprint", format!("{fingerprint:016x}"))
    .with_provenance("holdout_index", splits.holdout_index);
    for model in ModelType::ALL {
        bundle = bundle.with_provenance(&format!("hyper_{}", model.name().to_lowercase()), hyper.describe(model));
    }
    let sizes: Vec<String> = splits
        .iter()
        .map(|s| format!("{}={}", s.name.as_str(), s.len()))
        .collect();
    Ok(bundle
        .with_provenance("splits", sizes.join(" "))
        .with_provenance("f1_averaging", "macro over true and predicted classes")
        .with_provenance(
            "rounding",
            "markdown percentages rounded half-up to integers; csv at full precision",
        ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(format!("unknown format {s:?} (expected csv or markdown)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTable {
    /// File stem, e.g. `accuracy` or `miss_rate_HM`.
    pub name: String,
    pub bytes: Vec<u8>,
}

impl RenderedTable {
    pub fn file_name(&self, format: ReportFormat) -> String {
        format!("{}.{}", self.name, format.extension())
    }
}

/// `100·x` rounded half-up to an integer.
pub fn percent(x: f64) -> i64 {
    // the slack absorbs representation error in exact halves such as 0.125
    (x * 100.0 + 0.5 + 1e-9).floor() as i64
}

pub const CSV_HEADER: &str = "table,model,train_set,test_set,metric,value";

struct CsvRows(String);

impl CsvRows {
    fn row(&mut self, table: &str, model: &str, train: &str, test: &str, metric: &str, value: impl fmt::Display) {
        writeln!(self.0, "{table},{model},{train},{test},{metric},{value}").unwrap();
    }
}

fn header(bundle: &ReportBundle, prefix: &str, suffix: &str) -> String {
    bundle
        .provenance
        .iter()
        .map(|(k, v)| format!("{prefix}{k}: {v}{suffix}\n"))
        .collect()
}

fn score_table_csv(bundle: &ReportBundle, table: &str, metric: &str, value: fn(&Metrics) -> f64) -> String {
    let mut out = CsvRows(header(bundle, "# ", "") + CSV_HEADER + "\n");
    for model in ModelType::ALL {
        for e in ExperimentId::ALL {
            out.row(
                table,
                model.name(),
                e.train.code(),
                e.test.code(),
                metric,
                value(bundle.cell(model, e)),
            );
        }
        out.row(
            table,
            model.name(),
            "ALL",
            "ALL",
            metric,
            bundle.model_average(model, value),
        );
    }
    for e in ExperimentId::ALL {
        out.row(
            table,
            "AVERAGES",
            e.train.code(),
            e.test.code(),
            metric,
            bundle.experiment_average(e, value),
        );
    }
    out.row(table, "AVERAGES", "ALL", "ALL", metric, bundle.grand_average(value));
    out.0
}

fn score_table_md(bundle: &ReportBundle, title: &str, value: fn(&Metrics) -> f64) -> String {
    let mut out = header(bundle, "<!-- ", " -->");
    writeln!(
        out,
        "\n| {title} | {} | AVERAGES |",
        ExperimentId::ALL.map(|e| e.to_string()).join(" | ")
    )
    .unwrap();
    out.push_str(&"|---".repeat(8));
    out.push_str("|\n");
    for model in ModelType::ALL {
        let cells: Vec<String> = ExperimentId::ALL
            .iter()
            .map(|&e| format!("{}%", percent(value(bundle.cell(model, e)))))
            .collect();
        writeln!(
            out,
            "| {} | {} | {}% |",
            model.name(),
            cells.join(" | "),
            percent(bundle.model_average(model, value))
        )
        .unwrap();
    }
    let averages: Vec<String> = ExperimentId::ALL
        .iter()
        .map(|&e| format!("{}%", percent(bundle.experiment_average(e, value))))
        .collect();
    writeln!(
        out,
        "| AVERAGES | {} | {}% |",
        averages.join(" | "),
        percent(bundle.grand_average(value))
    )
    .unwrap();
    out
}

fn miss_table_csv(bundle: &ReportBundle, train: TrainSet) -> String {
    let table = format!("miss_rate_{}", train.code());
    let mut out = CsvRows(header(bundle, "# ", "") + CSV_HEADER + "\n");
    for model in ModelType::ALL {
        for test in TestSet::ALL {
            let m = bundle.cell(model, ExperimentId::new(train, test));
            let (tr, te) = (train.code(), test.code());
            out.row(&table, model.name(), tr, te, "misses", m.misses);
            out.row(&table, model.name(), tr, te, "out_of", m.n_test);
            out.row(&table, model.name(), tr, te, "miss_rate", m.miss_rate());
        }
    }
    out.0
}

fn miss_table_md(bundle: &ReportBundle, train: TrainSet) -> String {
    let mut out = header(bundle, "<!-- ", " -->");
    writeln!(
        out,
        "\n| Training_{} | Group | Misses | Out Of | Percent |",
        train.code()
    )
    .unwrap();
    out.push_str("|---|---|---|---|---|\n");
    for model in ModelType::ALL {
        for (i, test) in TestSet::ALL.into_iter().enumerate() {
            let m = bundle.cell(model, ExperimentId::new(train, test));
            let name = if i == 0 { model.name() } else { "" };
            writeln!(
                out,
                "| {name} | {} | {} | {} | {}% |",
                test.group(),
                m.misses,
                m.n_test,
                percent(m.miss_rate())
            )
            .unwrap();
        }
    }
    out
}

fn overall_csv(bundle: &ReportBundle) -> String {
    let mut out = CsvRows(header(bundle, "# ", "") + CSV_HEADER + "\n");
    let table = "overall_miss_rate";
    for test in TestSet::ALL {
        for train in TrainSet::ALL {
            out.row(
                table,
                "AVERAGES",
                train.code(),
                test.code(),
                "miss_rate",
                bundle.overall_miss_rate(train, test),
            );
        }
        let row = mean(TrainSet::ALL.map(|t| bundle.overall_miss_rate(t, test)));
        out.row(table, "AVERAGES", "ALL", test.code(), "miss_rate", row);
    }
    for train in TrainSet::ALL {
        let col = mean(TestSet::ALL.map(|g| bundle.overall_miss_rate(train, g)));
        out.row(table, "AVERAGES", train.code(), "ALL", "miss_rate", col);
    }
    out.row(
        table,
        "AVERAGES",
        "ALL",
        "ALL",
        "miss_rate",
        bundle.grand_average(Metrics::miss_rate),
    );
    out.0
}

/// One decimal place, half-up, since the averages row mixes halves.
fn percent_tenths(x: f64) -> String {
    let tenths = (x * 1000.0 + 0.5 + 1e-9).floor() as i64;
    format!("{}.{}%", tenths / 10, tenths % 10)
}

fn overall_md(bundle: &ReportBundle) -> String {
    let mut out = header(bundle, "<!-- ", " -->");
    out.push_str("\n| Overall Miss Rates | UM | HM | M | Average |\n|---|---|---|---|---|\n");
    for test in TestSet::ALL {
        let rates = TrainSet::ALL.map(|t| bundle.overall_miss_rate(t, test));
        writeln!(
            out,
            "| Average {} Miss Rate | {} | {}% |",
            test.group(),
            rates.map(|r| format!("{}%", percent(r))).join(" | "),
            percent(mean(rates))
        )
        .unwrap();
    }
    let cols = TrainSet::ALL.map(|t| mean(TestSet::ALL.map(|g| bundle.overall_miss_rate(t, g))));
    writeln!(
        out,
        "| Averages | {} | {} |",
        cols.map(percent_tenths).join(" | "),
        percent_tenths(bundle.grand_average(Metrics::miss_rate))
    )
    .unwrap();
    out
}

/// Renders every table; identical bundles give identical bytes.
pub fn render_reports(bundle: &ReportBundle, format: ReportFormat) -> Vec<RenderedTable> {
    let accuracy: fn(&Metrics) -> f64 = |m| m.accuracy;
    let f1: fn(&Metrics) -> f64 = |m| m.macro_f1;
    let mut tables = Vec::new();
    let mut push = |name: String, text: String| {
        tables.push(RenderedTable {
            name,
            bytes: text.into_bytes(),
        })
    };
    match format {
        ReportFormat::Csv => {
            push(
                "accuracy".into(),
                score_table_csv(bundle, "accuracy", "accuracy", accuracy),
            );
            push("f1".into(), score_table_csv(bundle, "f1", "macro_f1", f1));
            for t in TrainSet::ALL {
                push(format!("miss_rate_{}", t.code()), miss_table_csv(bundle, t));
            }
            push("overall_miss_rate".into(), overall_csv(bundle));
        }
        ReportFormat::Markdown => {
            push("accuracy".into(), score_table_md(bundle, "Accuracy", accuracy));
            push("f1".into(), score_table_md(bundle, "F1-Score", f1));
            for t in TrainSet::ALL {
                push(format!("miss_rate_{}", t.code()), miss_table_md(bundle, t));
            }
            push("overall_miss_rate".into(), overall_md(bundle));
        }
    }
    tables
}
